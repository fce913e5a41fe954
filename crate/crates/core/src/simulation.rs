//! Monte Carlo laboratory: a coupled AR(1) pair with closed-form VaR and
//! CoVaR, synthetic noise "news", an eight-institution crisis scenario, and
//! MAE scoring.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data_io::{Article, EmbeddingStore, ReturnPanel};
use crate::error::{Error, Result};
use crate::quantile::check_tau;

/// Φ⁻¹(p) by Wichura's AS 241 (PPND16), relative accuracy about 1e−16.
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((r * 5226.495_278_852_545 + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Parameters of the coupled AR(1) pair
/// `y1_t = φ y1_{t−1} + ε_t`, `y2_t = β y1_t + η_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub phi: f64,
    pub sigma1: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub y0: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            phi: 0.8,
            sigma1: 0.15,
            beta: 1.2,
            sigma2: 0.2,
            y0: 0.0,
            tau: 0.05,
            t: 1776,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("sigma1 and sigma2 must be positive".into()));
        }
        if self.phi.abs() >= 1.0 {
            return Err(Error::InvalidArgument("|phi| must be below 1".into()));
        }
        if self.t < 2 {
            return Err(Error::InvalidArgument("T must be at least 2".into()));
        }
        Ok(())
    }
}

/// Two seeded series of length `T`.
pub fn simulate_dgp(config: &SimConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eps = Normal::new(0.0, config.sigma1).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let eta = Normal::new(0.0, config.sigma2).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut y1 = Vec::with_capacity(config.t);
    let mut y2 = Vec::with_capacity(config.t);
    let mut prev = config.y0;
    for _ in 0..config.t {
        let a = config.phi * prev + eps.sample(&mut rng);
        let b = config.beta * a + eta.sample(&mut rng);
        y1.push(a);
        y2.push(b);
        prev = a;
    }
    Ok((y1, y2))
}

/// `φ y_{t−1} + σ₁ z(τ)`
pub fn theoretical_var1(config: &SimConfig, y_prev: f64) -> Result<f64> {
    check_tau(config.tau)?;
    Ok(config.phi * y_prev + config.sigma1 * inverse_normal_cdf(config.tau))
}

/// `β VaR₁ + σ₂ z(τ)`
pub fn theoretical_covar(config: &SimConfig, var1: f64) -> Result<f64> {
    check_tau(config.tau)?;
    Ok(config.beta * var1 + config.sigma2 * inverse_normal_cdf(config.tau))
}

/// `β φ y_{t−1} + √(β²σ₁² + σ₂²) z(τ)`
pub fn theoretical_var2(config: &SimConfig, y_prev: f64) -> Result<f64> {
    check_tau(config.tau)?;
    let s = (config.beta.powi(2) * config.sigma1.powi(2) + config.sigma2.powi(2)).sqrt();
    Ok(config.beta * config.phi * y_prev + s * inverse_normal_cdf(config.tau))
}

/// Closed-form oracle series; the first date conditions on `y0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSeries {
    pub var1: Vec<f64>,
    pub var2: Vec<f64>,
    pub covar: Vec<f64>,
}

pub fn oracle_series(config: &SimConfig, y1: &[f64]) -> Result<OracleSeries> {
    let mut out = OracleSeries {
        var1: Vec::with_capacity(y1.len()),
        var2: Vec::with_capacity(y1.len()),
        covar: Vec::with_capacity(y1.len()),
    };
    for t in 0..y1.len() {
        let prev = if t == 0 { config.y0 } else { y1[t - 1] };
        let v1 = theoretical_var1(config, prev)?;
        out.var1.push(v1);
        out.var2.push(theoretical_var2(config, prev)?);
        out.covar.push(theoretical_covar(config, v1)?);
    }
    Ok(out)
}

/// `(1/N) Σ |pred − truth|`
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            op: "mae",
            left: (pred.len(), 1),
            right: (truth.len(), 1),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Weekday calendar starting at (or after) `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 10, 2).expect("valid date")
}

/// How the synthetic news is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseTextConfig {
    pub d_e: usize,
    /// Articles per day are drawn uniformly from `min_per_day..=max_per_day`.
    pub min_per_day: usize,
    pub max_per_day: usize,
    pub noise_std: f64,
    /// No articles at all.
    pub zero_noise: bool,
    pub seed: u64,
}

impl Default for NoiseTextConfig {
    fn default() -> Self {
        Self {
            d_e: 6,
            min_per_day: 1,
            max_per_day: 3,
            noise_std: 0.1,
            zero_noise: false,
            seed: 7,
        }
    }
}

/// One embedding store of Gaussian noise articles, independent of returns.
pub fn attach_noise_text(dates: &[NaiveDate], config: &NoiseTextConfig) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(config.d_e);
    if config.zero_noise {
        return Ok(store);
    }
    if config.min_per_day == 0 || config.min_per_day > config.max_per_day {
        return Err(Error::InvalidArgument(
            "need 1 <= min_per_day <= max_per_day".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dist = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for &date in dates {
        let count = rng.random_range(config.min_per_day..=config.max_per_day);
        let articles = (0..count)
            .map(|_| Article {
                vector: (0..config.d_e).map(|_| dist.sample(&mut rng)).collect(),
            })
            .collect();
        store.insert(date, articles)?;
    }
    Ok(store)
}

/// Simulated pair dataset in the canonical file shapes.
#[derive(Debug, Clone)]
pub struct SimDataset {
    pub config: SimConfig,
    pub panel: ReturnPanel,
    pub embeddings: EmbeddingStore,
    pub oracle: OracleSeries,
}

/// Panel with tickers `SIM1`, `SIM2` and one state column `y1`
/// (used lagged as the VaR regressor), plus noise news for `SIM2`.
pub fn simulate_dataset(config: &SimConfig, text: &NoiseTextConfig) -> Result<SimDataset> {
    let (y1, y2) = simulate_dgp(config)?;
    let dates = business_days(default_start_date(), config.t);
    let returns: Vec<Vec<f64>> = y1.iter().zip(&y2).map(|(a, b)| vec![*a, *b]).collect();
    let macros: Vec<Vec<f64>> = y1.iter().map(|a| vec![*a]).collect();
    let panel = ReturnPanel::new(
        dates.clone(),
        vec!["SIM1".into(), "SIM2".into()],
        vec!["y1".into()],
        returns,
        macros,
    )?;
    let embeddings = attach_noise_text(&dates, text)?;
    let oracle = oracle_series(config, &y1)?;
    Ok(SimDataset {
        config: config.clone(),
        panel,
        embeddings,
        oracle,
    })
}

/// Eight-institution scenario with a text-flagged crisis regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrisisConfig {
    pub institutions: usize,
    pub t: usize,
    pub factor_phi: f64,
    pub factor_sigma: f64,
    pub loading: f64,
    pub idio_sigma: f64,
    /// Idiosyncratic volatility multiplier of the target during a crisis.
    pub crisis_vol_mult: f64,
    pub episode_len: usize,
    pub episodes: usize,
    pub d_e: usize,
    pub articles_per_day: usize,
    pub noise_std: f64,
    /// Shift added to embedding coordinate 0 of crisis-day articles.
    pub signal_shift: f64,
    pub seed: u64,
}

impl Default for CrisisConfig {
    fn default() -> Self {
        Self {
            institutions: 8,
            t: 1000,
            factor_phi: 0.3,
            factor_sigma: 0.01,
            loading: 1.0,
            idio_sigma: 0.01,
            crisis_vol_mult: 5.0,
            episode_len: 15,
            episodes: 12,
            d_e: 4,
            articles_per_day: 2,
            noise_std: 0.1,
            signal_shift: 1.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrisisDataset {
    pub panel: ReturnPanel,
    /// News for the target (last ticker).
    pub embeddings: EmbeddingStore,
    pub crisis: Vec<bool>,
    pub target: String,
}

/// Institutions share an AR(1) factor; the target's idiosyncratic variance
/// spikes during crisis episodes, and articles published on crisis days
/// carry a shifted coordinate. The macro state is the factor itself.
pub fn simulate_crisis(config: &CrisisConfig) -> Result<CrisisDataset> {
    if config.institutions < 2 || config.t < 50 {
        return Err(Error::InvalidArgument("crisis scenario too small".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t = config.t;
    let mut crisis = vec![false; t];
    // episodes evenly spread so every split sees some
    let stride = t / config.episodes.max(1);
    for e in 0..config.episodes {
        let jitter = rng.random_range(0..stride.saturating_sub(config.episode_len).max(1));
        let start = e * stride + jitter;
        for flag in crisis.iter_mut().skip(start).take(config.episode_len) {
            *flag = true;
        }
    }
    let j = config.institutions;
    let mut factor = 0.0;
    let mut returns = Vec::with_capacity(t);
    let mut macros = Vec::with_capacity(t);
    for &in_crisis in &crisis {
        let shock: f64 = rng.sample(StandardNormal);
        factor = config.factor_phi * factor + config.factor_sigma * shock;
        let mut row = Vec::with_capacity(j);
        for i in 0..j {
            let z: f64 = rng.sample(StandardNormal);
            let mut sigma = config.idio_sigma;
            if i == j - 1 && in_crisis {
                sigma *= config.crisis_vol_mult;
            }
            row.push(config.loading * factor + sigma * z);
        }
        returns.push(row);
        macros.push(vec![factor]);
    }
    let dates = business_days(default_start_date(), t);
    let tickers: Vec<String> = (1..=j).map(|i| format!("BANK{i}")).collect();
    let panel = ReturnPanel::new(dates.clone(), tickers.clone(), vec!["factor".into()], returns, macros)?;

    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut store = EmbeddingStore::new(config.d_e);
    for (day, &date) in dates.iter().enumerate() {
        let articles = (0..config.articles_per_day)
            .map(|_| {
                let mut v: Vec<f64> = (0..config.d_e).map(|_| noise.sample(&mut rng)).collect();
                if crisis[day] {
                    v[0] += config.signal_shift;
                }
                Article { vector: v }
            })
            .collect();
        store.insert(date, articles)?;
    }
    Ok(CrisisDataset {
        panel,
        embeddings: store,
        crisis,
        target: tickers[j - 1].clone(),
    })
}

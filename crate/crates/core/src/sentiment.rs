//! Sentiment baselines: a net-sentiment index for the returns MLP, and
//! label tokens (negative/neutral/positive as 1/2/3) for a Transformer.
//!
//! Labels are read from a CSV with columns `date, article_id, label`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_io::{window_days, WindowSpec};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::transformer::{positional_encoding, TextWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Neutral,
    Positive,
}

impl Label {
    pub fn token(self) -> f64 {
        match self {
            Label::Negative => 1.0,
            Label::Neutral => 2.0,
            Label::Positive => 3.0,
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" => Ok(Label::Negative),
            "neutral" => Ok(Label::Neutral),
            "positive" => Ok(Label::Positive),
            other => Err(Error::InvalidArgument(format!("unknown sentiment label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentimentCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

impl SentimentCounts {
    pub fn new(positive: usize, negative: usize, neutral: usize) -> Self {
        Self {
            positive,
            negative,
            neutral,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative + self.neutral
    }

    pub fn add(&mut self, label: Label) {
        match label {
            Label::Positive => self.positive += 1,
            Label::Negative => self.negative += 1,
            Label::Neutral => self.neutral += 1,
        }
    }
}

/// `(pos − neg) / (pos + neu + neg)`.
pub fn sentiment_index(c: &SentimentCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::NoArticles);
    }
    Ok((c.positive as f64 - c.negative as f64) / total as f64)
}

/// Labelled articles per date, in source order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelStore {
    days: BTreeMap<NaiveDate, Vec<(String, Label)>>,
}

impl LabelStore {
    pub fn insert(&mut self, date: NaiveDate, article_id: String, label: Label) {
        self.days.entry(date).or_default().push((article_id, label));
    }

    pub fn article_count(&self) -> usize {
        self.days.values().map(Vec::len).sum()
    }

    pub fn daily_counts(&self) -> BTreeMap<NaiveDate, SentimentCounts> {
        self.days
            .iter()
            .map(|(d, arts)| {
                let mut c = SentimentCounts::default();
                for (_, l) in arts {
                    c.add(*l);
                }
                (*d, c)
            })
            .collect()
    }

    fn between(&self, after: Option<NaiveDate>, through: NaiveDate) -> impl Iterator<Item = Label> + '_ {
        use std::ops::Bound::{Excluded, Included, Unbounded};
        let lower = after.map_or(Unbounded, Excluded);
        self.days
            .range((lower, Included(through)))
            .flat_map(|(_, arts)| arts.iter().map(|(_, l)| *l))
    }

    /// Counts over the look-back window of calendar index `t`.
    pub fn window_counts(&self, calendar: &[NaiveDate], t: usize, spec: &WindowSpec) -> SentimentCounts {
        let mut c = SentimentCounts::default();
        for day in window_days(calendar, t, spec) {
            for l in self.between(day.after, day.through) {
                c.add(l);
            }
        }
        c
    }

    /// Labels of the look-back window with their day slots, oldest first,
    /// truncated to the most recent `spec.n_max`.
    pub fn window_labels(&self, calendar: &[NaiveDate], t: usize, spec: &WindowSpec) -> Vec<(usize, Label)> {
        let mut out = Vec::new();
        for day in window_days(calendar, t, spec) {
            out.extend(self.between(day.after, day.through).map(|l| (day.slot, l)));
        }
        if out.len() > spec.n_max {
            out.drain(..out.len() - spec.n_max);
        }
        out
    }
}

/// Reads `date, article_id, label` rows.
pub fn load_sentiment_csv(path: &Path) -> Result<LabelStore> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers != ["date", "article_id", "label"] {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "expected header date,article_id,label".into(),
        });
    }
    let mut store = LabelStore::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d").map_err(|_| Error::Parse {
            row: line,
            column: "date".into(),
            value: rec[0].to_string(),
        })?;
        let label = rec[2].parse::<Label>().map_err(|_| Error::Parse {
            row: line,
            column: "label".into(),
            value: rec[2].to_string(),
        })?;
        store.insert(date, rec[1].trim().to_string(), label);
    }
    Ok(store)
}

/// One-dimensional label tokens padded to `n`, each shifted by the scaled
/// sine of its day slot.
///
/// The embedding dimension is odd, so the encoding uses the first (sine)
/// coordinate of the two-dimensional encoding, scaled by the mean token
/// magnitude. Set `encode_positions` to false to get the raw 1/2/3 values.
pub fn labels_to_tokens(labels: &[(usize, Label)], n: usize, encode_positions: bool) -> Result<TextWindow> {
    if labels.len() > n {
        return Err(Error::InvalidArgument(format!(
            "{} labels exceed capacity {n}",
            labels.len()
        )));
    }
    let mut emb = Matrix::zeros(1, n);
    let mut mask = vec![false; n];
    let mut positions = vec![0; n];
    for (c, (slot, label)) in labels.iter().enumerate() {
        emb.set(0, c, label.token());
        mask[c] = true;
        positions[c] = *slot;
    }
    if encode_positions && !labels.is_empty() {
        let scale = labels.iter().map(|(_, l)| l.token()).sum::<f64>() / labels.len() as f64;
        for (c, (slot, _)) in labels.iter().enumerate() {
            let pe = positional_encoding(*slot, 2, scale)?;
            emb.set(0, c, emb.get(0, c) + pe[0]);
        }
    }
    Ok(TextWindow {
        embeddings: emb,
        mask,
        positions,
    })
}

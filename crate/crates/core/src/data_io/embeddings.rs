//! Dated article embeddings and the `CVEM` binary format.
//!
//! Layout: magic `CVEM`, version u32, d_e u32, then one record per date in
//! ascending order: date as days since 1970-01-01 (i64), article count u32,
//! count × d_e f64. All little-endian. Articles keep their source order.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"CVEM";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub vector: Vec<f64>,
}

/// Article identity: publication date and position within that date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArticleId {
    pub date: NaiveDate,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    d_e: usize,
    days: BTreeMap<NaiveDate, Vec<Article>>,
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

impl EmbeddingStore {
    pub fn new(d_e: usize) -> Self {
        Self {
            d_e,
            days: BTreeMap::new(),
        }
    }

    pub fn d_e(&self) -> usize {
        self.d_e
    }

    /// Appends articles to `date`, after any already stored there.
    pub fn insert(&mut self, date: NaiveDate, articles: Vec<Article>) -> Result<()> {
        for a in &articles {
            if a.vector.len() != self.d_e {
                return Err(Error::InvalidArgument(format!(
                    "article on {date} has dimension {}, store has d_e = {}",
                    a.vector.len(),
                    self.d_e
                )));
            }
            if a.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("article embedding"));
            }
        }
        self.days.entry(date).or_default().extend(articles);
        Ok(())
    }

    pub fn get(&self, date: NaiveDate) -> &[Article] {
        self.days.get(&date).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Dates with a record, ascending, and their articles.
    pub fn iter(&self) -> impl Iterator<Item = (&NaiveDate, &Vec<Article>)> {
        self.days.iter()
    }

    /// Articles dated in `(after, through]`, oldest first, with their ids.
    pub fn between(
        &self,
        after: Option<NaiveDate>,
        through: NaiveDate,
    ) -> impl Iterator<Item = (ArticleId, &Article)> {
        use std::ops::Bound::{Excluded, Included, Unbounded};
        let lower = match after {
            Some(d) => Excluded(d),
            None => Unbounded,
        };
        self.days
            .range((lower, Included(through)))
            .flat_map(|(date, arts)| {
                arts.iter().enumerate().map(move |(ordinal, a)| {
                    (
                        ArticleId {
                            date: *date,
                            ordinal,
                        },
                        a,
                    )
                })
            })
    }

    pub fn date_count(&self) -> usize {
        self.days.len()
    }

    pub fn article_count(&self) -> usize {
        self.days.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Refuses a store whose dimension differs from what a model expects.
    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.d_e != expected {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension mismatch: store has d_e = {}, model expects {expected}",
                self.d_e
            )));
        }
        Ok(())
    }
}

pub fn write_embeddings(w: &mut impl Write, store: &EmbeddingStore) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(store.d_e as u32).to_le_bytes())?;
    for (date, articles) in &store.days {
        let days = (*date - epoch()).num_days();
        w.write_all(&days.to_le_bytes())?;
        w.write_all(&(articles.len() as u32).to_le_bytes())?;
        for a in articles {
            for v in &a.vector {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Fills `buf` completely, or reports how many bytes were available.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn format_err(reason: String) -> Error {
    Error::Format {
        path: Default::default(),
        reason,
    }
}

pub fn read_embeddings(mut r: impl Read) -> Result<EmbeddingStore> {
    let mut offset = 0u64;
    let mut take = |r: &mut dyn Read, buf: &mut [u8], at_record_start: bool| -> Result<bool> {
        let got = read_full(&mut { r }, buf)?;
        if got == 0 && at_record_start {
            return Ok(false);
        }
        if got < buf.len() {
            return Err(Error::Truncated {
                offset: offset + got as u64,
            });
        }
        offset += buf.len() as u64;
        Ok(true)
    };

    let mut header = [0u8; 12];
    take(&mut r, &mut header, false)?;
    if &header[..4] != EMBEDDING_MAGIC {
        return Err(format_err(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[..4])
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let d_e = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut store = EmbeddingStore::new(d_e);

    let mut prev: Option<NaiveDate> = None;
    loop {
        let mut rec = [0u8; 12];
        if !take(&mut r, &mut rec, true)? {
            break;
        }
        let days = i64::from_le_bytes(rec[..8].try_into().unwrap());
        let count = u32::from_le_bytes(rec[8..12].try_into().unwrap()) as usize;
        let date = epoch()
            .checked_add_signed(chrono::Duration::days(days))
            .ok_or_else(|| format_err(format!("date out of range: {days}")))?;
        if prev.is_some_and(|p| date <= p) {
            return Err(format_err(format!("records not in ascending date order at {date}")));
        }
        prev = Some(date);
        let mut articles = Vec::with_capacity(count);
        let mut buf = vec![0u8; d_e * 8];
        for _ in 0..count {
            take(&mut r, &mut buf, false)?;
            let vector = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            articles.push(Article { vector });
        }
        store.days.insert(date, articles);
    }
    Ok(store)
}

pub fn save_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, store)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let bytes = std::fs::read(path)?;
    let store = read_embeddings(bytes.as_slice()).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })?;
    for (date, arts) in store.iter() {
        if arts.iter().any(|a| a.vector.iter().any(|v| !v.is_finite())) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("non-finite embedding on {date}"),
            });
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, day).unwrap()
    }

    fn bytes(store: &EmbeddingStore) -> Vec<u8> {
        let mut b = Vec::new();
        write_embeddings(&mut b, store).unwrap();
        b
    }

    #[test]
    fn empty_store_round_trip() {
        let store = EmbeddingStore::new(64);
        let b = bytes(&store);
        assert_eq!(b.len(), 12);
        assert_eq!(read_embeddings(b.as_slice()).unwrap(), store);
    }

    #[test]
    fn single_vector_bit_equal() {
        let mut store = EmbeddingStore::new(3);
        let v = vec![0.5, -1.0 / 3.0, f64::MIN_POSITIVE];
        store.insert(d(2), vec![Article { vector: v.clone() }]).unwrap();
        let back = read_embeddings(bytes(&store).as_slice()).unwrap();
        let got = &back.get(d(2))[0].vector;
        for (a, b) in got.iter().zip(&v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn two_dates_three_vectors() {
        let mut store = EmbeddingStore::new(2);
        for day in [2, 3] {
            let arts = (0..3)
                .map(|i| Article {
                    vector: vec![i as f64, day as f64],
                })
                .collect();
            store.insert(d(day), arts).unwrap();
        }
        let b = bytes(&store);
        assert_eq!(b.len(), 12 + 2 * (12 + 3 * 2 * 8));
        let back = read_embeddings(b.as_slice()).unwrap();
        assert_eq!(back.date_count(), 2);
        assert_eq!(back.article_count(), 6);
        assert_eq!(bytes(&back), b);
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut store = EmbeddingStore::new(2);
        store
            .insert(d(2), vec![Article { vector: vec![1.0, 2.0] }])
            .unwrap();
        let b = bytes(&store);
        let cut = &b[..b.len() - 5];
        match read_embeddings(cut) {
            Err(Error::Truncated { offset }) => assert_eq!(offset, cut.len() as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let b = bytes(&EmbeddingStore::new(1));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(read_embeddings(bad.as_slice()), Err(Error::Format { .. })));
        let mut bad = b;
        bad[4] = 9;
        assert!(matches!(read_embeddings(bad.as_slice()), Err(Error::Format { .. })));
    }

    #[test]
    fn dimension_checks() {
        let mut store = EmbeddingStore::new(4);
        assert!(store.insert(d(2), vec![Article { vector: vec![1.0] }]).is_err());
        let err = store.check_dim(64).unwrap_err();
        assert!(err.to_string().contains("d_e = 4"), "{err}");
    }
}

//! Look-back window assembly over the trading calendar.
//!
//! Day `i` of the calendar owns the articles dated after trading day `i − 1`
//! and up to day `i`, so weekend and holiday news lands on the next session.
//! The first calendar day owns only its own date.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::transformer::TextWindow;

use super::embeddings::{ArticleId, EmbeddingStore};

pub const DEFAULT_WINDOW_DAYS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    /// Trading days in the look-back window.
    pub days: usize,
    /// Token capacity `n`.
    pub n_max: usize,
    /// Whether the window ends at `t` rather than `t − 1`.
    pub include_day_t: bool,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            days: DEFAULT_WINDOW_DAYS,
            n_max: 97,
            include_day_t: false,
        }
    }
}

/// One calendar day inside a window: its slot (0 = oldest) and the date
/// range `(after, through]` whose items it owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowDay {
    pub slot: usize,
    pub after: Option<NaiveDate>,
    pub through: NaiveDate,
}

/// Calendar days making up the window for calendar index `t`. Slots that
/// would fall before the start of the calendar are skipped.
pub fn window_days(calendar: &[NaiveDate], t: usize, spec: &WindowSpec) -> Vec<WindowDay> {
    let end = if spec.include_day_t { t as isize } else { t as isize - 1 };
    let start = end - spec.days as isize + 1;
    (start..=end)
        .enumerate()
        .filter(|(_, idx)| *idx >= 0 && (*idx as usize) < calendar.len())
        .map(|(slot, idx)| {
            let idx = idx as usize;
            WindowDay {
                slot,
                after: if idx == 0 {
                    calendar[0].pred_opt()
                } else {
                    Some(calendar[idx - 1])
                },
                through: calendar[idx],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledWindow {
    pub window: TextWindow,
    /// Ids of the valid columns, in column order.
    pub ids: Vec<ArticleId>,
}

/// Builds the `d_e × n_max` window for calendar index `t`.
///
/// Articles are ordered oldest day first and by source order within a day.
/// When more than `n_max` are available, the most recent `n_max` are kept.
pub fn assemble_window(
    store: &EmbeddingStore,
    calendar: &[NaiveDate],
    t: usize,
    spec: &WindowSpec,
) -> AssembledWindow {
    let d_e = store.d_e();
    let mut picked = Vec::new();
    for day in window_days(calendar, t, spec) {
        for (id, article) in store.between(day.after, day.through) {
            picked.push((id, day.slot, article));
        }
    }
    if picked.len() > spec.n_max {
        picked.drain(..picked.len() - spec.n_max);
    }
    let mut embeddings = Matrix::zeros(d_e, spec.n_max);
    let mut mask = vec![false; spec.n_max];
    let mut positions = vec![0; spec.n_max];
    let mut ids = Vec::with_capacity(picked.len());
    for (c, (id, slot, article)) in picked.into_iter().enumerate() {
        embeddings.set_col(c, &article.vector);
        mask[c] = true;
        positions[c] = slot;
        ids.push(id);
    }
    AssembledWindow {
        window: TextWindow {
            embeddings,
            mask,
            positions,
        },
        ids,
    }
}

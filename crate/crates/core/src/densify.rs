//! Greedy dense-submatrix selection.
//!
//! Four steps run in order, each on the survivors of the previous one:
//!
//! 1. keep objects whose column total is at least `min_object_total`;
//! 2. keep actions where at least `action_nonfloor_frac` of the cells hold
//!    `cell_floor` or more instances;
//! 3. keep objects where at least `object_nonfloor_frac` of the cells hold
//!    `cell_floor` or more instances;
//! 4. while some cell is below `min_cell`, drop the row or column with the most
//!    such cells (ties: smaller total, then lower index, then rows first).
//!
//! Removing lines in step 4 can invalidate steps 1-3, so the sequence is
//! repeated until a full pass removes nothing. The result is therefore a fixed
//! point of the procedure.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooc::CoocMatrix;

/// A fraction in `[0, 1]`, compared exactly as an integer ratio over 10^9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fraction(u64);

const FRACTION_SCALE: u64 = 1_000_000_000;

impl Fraction {
    pub fn new(value: f64) -> Result<Self, DensifyError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(DensifyError::BadFraction(value));
        }
        Ok(Fraction((value * FRACTION_SCALE as f64).round() as u64))
    }

    /// `part / whole >= self`, with an empty whole counting as satisfied.
    pub fn reached_by(self, part: usize, whole: usize) -> bool {
        whole == 0
            || (part as u128) * (FRACTION_SCALE as u128) >= (self.0 as u128) * (whole as u128)
    }
}

impl TryFrom<f64> for Fraction {
    type Error = DensifyError;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Fraction::new(v)
    }
}

impl From<Fraction> for f64 {
    fn from(f: Fraction) -> f64 {
        f.0 as f64 / FRACTION_SCALE as f64
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", f64::from(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub min_object_total: usize,
    pub cell_floor: usize,
    pub action_nonfloor_frac: Fraction,
    pub object_nonfloor_frac: Fraction,
    pub min_cell: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            min_object_total: 100,
            cell_floor: 15,
            action_nonfloor_frac: Fraction(400_000_000),
            object_nonfloor_frac: Fraction(800_000_000),
            min_cell: 10,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DensifyError {
    #[error("cannot densify an empty matrix")]
    EmptyInput,
    #[error("densify eliminated every {0} (step {1})")]
    EmptyResult(Axis, u8),
    #[error("fraction {0} is outside [0, 1]")]
    BadFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Action,
    Object,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Action => "action",
            Axis::Object => "object",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub pass: usize,
    pub step: u8,
    pub axis: Axis,
    pub label: String,
    pub reason: String,
}

pub type SelectionLog = Vec<Removal>;

// Working view over the surviving rows and columns of the input.
struct View<'a> {
    counts: &'a [Vec<usize>],
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl View<'_> {
    fn at(&self, r: usize, c: usize) -> usize {
        self.counts[r][c]
    }

    fn row_total(&self, r: usize) -> usize {
        self.cols.iter().map(|&c| self.at(r, c)).sum()
    }

    fn col_total(&self, c: usize) -> usize {
        self.rows.iter().map(|&r| self.at(r, c)).sum()
    }
}

pub fn densify(
    m: &CoocMatrix,
    cfg: &DensifyConfig,
) -> Result<(CoocMatrix, SelectionLog), DensifyError> {
    if m.num_actions() == 0 || m.num_objects() == 0 {
        return Err(DensifyError::EmptyInput);
    }
    let counts = m.counts();
    let mut view = View {
        counts: &counts,
        rows: (0..m.num_actions()).collect(),
        cols: (0..m.num_objects()).collect(),
    };
    let mut log = Vec::new();

    for pass in 1.. {
        let before = log.len();

        // Step 1: column totals.
        let mut kept = Vec::with_capacity(view.cols.len());
        for &c in &view.cols {
            let total = view.col_total(c);
            if total >= cfg.min_object_total {
                kept.push(c);
            } else {
                log.push(Removal {
                    pass,
                    step: 1,
                    axis: Axis::Object,
                    label: m.objects[c].clone(),
                    reason: format!("column total {total} < {}", cfg.min_object_total),
                });
            }
        }
        view.cols = kept;
        ensure_nonempty(&view, 1)?;

        // Step 2: rows with enough cells at the floor.
        let mut kept = Vec::with_capacity(view.rows.len());
        for &r in &view.rows {
            let hits = view
                .cols
                .iter()
                .filter(|&&c| view.at(r, c) >= cfg.cell_floor)
                .count();
            if cfg.action_nonfloor_frac.reached_by(hits, view.cols.len()) {
                kept.push(r);
            } else {
                log.push(Removal {
                    pass,
                    step: 2,
                    axis: Axis::Action,
                    label: m.actions[r].clone(),
                    reason: format!(
                        "{hits} of {} cells >= {} (needs fraction {})",
                        view.cols.len(),
                        cfg.cell_floor,
                        cfg.action_nonfloor_frac
                    ),
                });
            }
        }
        view.rows = kept;
        ensure_nonempty(&view, 2)?;

        // Step 3: columns with enough cells at the floor.
        let mut kept = Vec::with_capacity(view.cols.len());
        for &c in &view.cols {
            let hits = view
                .rows
                .iter()
                .filter(|&&r| view.at(r, c) >= cfg.cell_floor)
                .count();
            if cfg.object_nonfloor_frac.reached_by(hits, view.rows.len()) {
                kept.push(c);
            } else {
                log.push(Removal {
                    pass,
                    step: 3,
                    axis: Axis::Object,
                    label: m.objects[c].clone(),
                    reason: format!(
                        "{hits} of {} cells >= {} (needs fraction {})",
                        view.rows.len(),
                        cfg.cell_floor,
                        cfg.object_nonfloor_frac
                    ),
                });
            }
        }
        view.cols = kept;
        ensure_nonempty(&view, 3)?;

        // Step 4: greedy removal of the worst line until no cell is below min_cell.
        loop {
            let mut worst: Option<(usize, usize, usize, u8, Axis, usize)> = None;
            let mut consider = |key: (usize, usize, usize, u8), axis: Axis, pos: usize| {
                let (violations, total, index, rank) = key;
                if violations == 0 {
                    return;
                }
                let better = match worst {
                    None => true,
                    Some((wv, wt, wi, wr, _, _)) => {
                        // Most violations, then smaller total, then lower index, then rows first.
                        (std::cmp::Reverse(violations), total, index, rank)
                            < (std::cmp::Reverse(wv), wt, wi, wr)
                    }
                };
                if better {
                    worst = Some((violations, total, index, rank, axis, pos));
                }
            };
            for (pos, &r) in view.rows.iter().enumerate() {
                let v = view
                    .cols
                    .iter()
                    .filter(|&&c| view.at(r, c) < cfg.min_cell)
                    .count();
                consider((v, view.row_total(r), pos, 0), Axis::Action, pos);
            }
            for (pos, &c) in view.cols.iter().enumerate() {
                let v = view
                    .rows
                    .iter()
                    .filter(|&&r| view.at(r, c) < cfg.min_cell)
                    .count();
                consider((v, view.col_total(c), pos, 1), Axis::Object, pos);
            }
            let Some((violations, total, _, _, axis, pos)) = worst else {
                break;
            };
            let label = match axis {
                Axis::Action => m.actions[view.rows.remove(pos)].clone(),
                Axis::Object => m.objects[view.cols.remove(pos)].clone(),
            };
            log.push(Removal {
                pass,
                step: 4,
                axis,
                label,
                reason: format!("{violations} cells < {} (total {total})", cfg.min_cell),
            });
            ensure_nonempty(&view, 4)?;
        }

        if log.len() == before {
            break;
        }
    }

    Ok((m.select(&view.rows, &view.cols), log))
}

fn ensure_nonempty(view: &View<'_>, step: u8) -> Result<(), DensifyError> {
    if view.rows.is_empty() {
        Err(DensifyError::EmptyResult(Axis::Action, step))
    } else if view.cols.is_empty() {
        Err(DensifyError::EmptyResult(Axis::Object, step))
    } else {
        Ok(())
    }
}

/// One line per removal, in removal order; `"no removals"` for an empty log.
pub fn densify_summary(log: &[Removal]) -> String {
    if log.is_empty() {
        return "no removals\n".to_string();
    }
    let mut out = String::new();
    for r in log {
        out.push_str(&format!(
            "pass {} step {}: removed {} `{}`: {}\n",
            r.pass, r.step, r.axis, r.label, r.reason
        ));
    }
    out
}

//! Action x object co-occurrence counts with per-cell instance membership.

use std::collections::HashMap;

use thiserror::Error;

use crate::inventory::Inventory;

/// Corner cell of the CSV matrix report.
pub const REPORT_CORNER: &str = "action\\object";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoocMatrix {
    pub actions: Vec<String>,
    pub objects: Vec<String>,
    /// `cell_instances[i][j]` holds the ids of instances with action `i` and object `j`.
    pub cell_instances: Vec<Vec<Vec<String>>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoocError {
    #[error("cannot build a co-occurrence matrix from an empty inventory")]
    EmptyInventory,
    #[error("matrix report line {line}: {message}")]
    BadReport { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub row_totals: Vec<usize>,
    pub col_totals: Vec<usize>,
    /// Fraction of cells with a nonzero count; 0 for a matrix with no cells.
    pub density: f64,
}

pub fn build_cooc(inv: &Inventory) -> Result<CoocMatrix, CoocError> {
    if inv.is_empty() {
        return Err(CoocError::EmptyInventory);
    }
    let a_idx: HashMap<&str, usize> = inv
        .action_vocab
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let o_idx: HashMap<&str, usize> = inv
        .object_vocab
        .iter()
        .enumerate()
        .map(|(j, o)| (o.as_str(), j))
        .collect();
    let mut cells = vec![vec![Vec::new(); inv.object_vocab.len()]; inv.action_vocab.len()];
    for inst in &inv.instances {
        let i = a_idx[inst.action.as_str()];
        let j = o_idx[inst.object.as_str()];
        cells[i][j].push(inst.id.clone());
    }
    Ok(CoocMatrix {
        actions: inv.action_vocab.clone(),
        objects: inv.object_vocab.clone(),
        cell_instances: cells,
    })
}

impl CoocMatrix {
    /// Matrix with the given counts and placeholder ids `"{action}|{object}#{k}"`.
    pub fn from_counts(actions: Vec<String>, objects: Vec<String>, counts: &[Vec<usize>]) -> Self {
        assert_eq!(counts.len(), actions.len(), "one count row per action");
        let cell_instances = counts
            .iter()
            .zip(&actions)
            .map(|(row, a)| {
                assert_eq!(row.len(), objects.len(), "one count per object");
                row.iter()
                    .zip(&objects)
                    .map(|(&n, o)| (0..n).map(|k| format!("{a}|{o}#{k}")).collect())
                    .collect()
            })
            .collect();
        CoocMatrix {
            actions,
            objects,
            cell_instances,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn count(&self, action: usize, object: usize) -> usize {
        self.cell_instances[action][object].len()
    }

    pub fn counts(&self) -> Vec<Vec<usize>> {
        self.cell_instances
            .iter()
            .map(|row| row.iter().map(Vec::len).collect())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.cell_instances.iter().flatten().map(Vec::len).sum()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn object_index(&self, label: &str) -> Option<usize> {
        self.objects.iter().position(|o| o == label)
    }

    pub fn cell(&self, action: usize, object: usize) -> &[String] {
        &self.cell_instances[action][object]
    }

    /// Submatrix keeping the listed rows and columns, in the order given.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CoocMatrix {
        CoocMatrix {
            actions: rows.iter().map(|&i| self.actions[i].clone()).collect(),
            objects: cols.iter().map(|&j| self.objects[j].clone()).collect(),
            cell_instances: rows
                .iter()
                .map(|&i| {
                    cols.iter()
                        .map(|&j| self.cell_instances[i][j].clone())
                        .collect()
                })
                .collect(),
        }
    }
}

pub fn marginals(m: &CoocMatrix) -> Marginals {
    let counts = m.counts();
    let row_totals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<usize> = (0..m.num_objects())
        .map(|j| counts.iter().map(|r| r[j]).sum())
        .collect();
    let cells = m.num_actions() * m.num_objects();
    let nonzero = counts.iter().flatten().filter(|&&c| c > 0).count();
    let density = if cells == 0 {
        0.0
    } else {
        nonzero as f64 / cells as f64
    };
    Marginals {
        row_totals,
        col_totals,
        density,
    }
}

/// CSV report: header `action\object,<objects...>`, then one row of counts per action.
pub fn render_report(m: &CoocMatrix) -> String {
    let mut out = String::from(REPORT_CORNER);
    for o in &m.objects {
        out.push(',');
        out.push_str(o);
    }
    out.push('\n');
    for (a, row) in m.actions.iter().zip(m.counts()) {
        out.push_str(a);
        for c in row {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

/// Counts read back from a [`render_report`] document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    pub actions: Vec<String>,
    pub objects: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

pub fn parse_report(text: &str) -> Result<CountTable, CoocError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(CoocError::BadReport {
        line: 1,
        message: "missing header".into(),
    })?;
    let mut header_fields = header.split(',');
    if header_fields.next() != Some(REPORT_CORNER) {
        return Err(CoocError::BadReport {
            line: 1,
            message: format!("header must start with `{REPORT_CORNER}`"),
        });
    }
    let objects: Vec<String> = header_fields.map(str::to_string).collect();
    let mut actions = Vec::new();
    let mut counts = Vec::new();
    for (n, line) in lines {
        let mut fields = line.split(',');
        let action = fields.next().unwrap_or_default().to_string();
        let row = fields
            .map(|f| {
                f.trim().parse::<usize>().map_err(|e| CoocError::BadReport {
                    line: n + 1,
                    message: format!("bad count `{f}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != objects.len() {
            return Err(CoocError::BadReport {
                line: n + 1,
                message: format!("expected {} counts, found {}", objects.len(), row.len()),
            });
        }
        actions.push(action);
        counts.push(row);
    }
    Ok(CountTable {
        actions,
        objects,
        counts,
    })
}

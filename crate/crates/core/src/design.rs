//! Object role assignment (common / unique / unseen) and quota-balanced
//! sampling of the training matrix.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooc::CoocMatrix;
use crate::quota::even_split;
use crate::{stream_rng, STREAM_ROLES, STREAM_SAMPLE};

/// Number of trailing matrix columns reserved as unseen objects by default.
pub const DEFAULT_UNSEEN_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortfall {
    /// A cell with fewer instances than its quota is an error.
    #[default]
    Error,
    /// Residual quota moves to the action's other cells, largest remaining capacity first.
    Spill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub num_common: usize,
    pub num_unique_per_action: usize,
    pub total_train: usize,
    /// Actions used by the design; empty means every action of the matrix.
    pub actions: Vec<String>,
    /// Objects held out of training; `None` means the last ten matrix columns.
    pub unseen_reserve: Option<Vec<String>>,
    pub seed: u64,
    pub shortfall: Shortfall,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            num_common: 1,
            num_unique_per_action: 0,
            total_train: 375,
            actions: Vec::new(),
            unseen_reserve: None,
            seed: 0,
            shortfall: Shortfall::Error,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DesignError {
    #[error("design needs at least one common or unique object per action")]
    NoTrainingObjects,
    #[error("design has no actions")]
    NoActions,
    #[error("action `{0}` is not a row of the matrix")]
    UnknownAction(String),
    #[error("action `{0}` listed twice")]
    DuplicateAction(String),
    #[error("unseen object `{0}` is not a column of the matrix")]
    UnknownObject(String),
    #[error("assignable pool has {available} objects, design needs {needed}")]
    InsufficientPool { needed: usize, available: usize },
    #[error("no {role} object left with enough support{detail}")]
    CellSupport { role: String, detail: String },
    #[error("cell ({action}, {object}) has {available} instances, quota is {quota}")]
    InsufficientCell {
        action: String,
        object: String,
        available: usize,
        quota: usize,
    },
    #[error("action `{action}` has {capacity} instances across its cells, budget is {budget}")]
    InsufficientCapacity {
        action: String,
        capacity: usize,
        budget: usize,
    },
    #[error("roles refer to labels absent from the matrix: {0}")]
    RolesMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub actions: Vec<String>,
    pub common_objects: Vec<String>,
    pub unique_objects: BTreeMap<String, Vec<String>>,
    pub unseen_objects: Vec<String>,
}

impl RoleAssignment {
    /// Objects trained with `action`: the common objects, then its unique ones.
    pub fn training_objects<'a>(&'a self, action: &str) -> impl Iterator<Item = &'a String> + 'a {
        let unique = self
            .unique_objects
            .get(action)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        self.common_objects.iter().chain(unique.iter())
    }

    /// The action a unique object is bound to, if any.
    pub fn unique_owner(&self, object: &str) -> Option<&str> {
        self.unique_objects
            .iter()
            .find(|(_, objs)| objs.iter().any(|o| o == object))
            .map(|(a, _)| a.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainCell {
    pub action: String,
    pub object: String,
    pub quota: usize,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Cells in action order, common objects before unique ones.
    pub cells: Vec<TrainCell>,
    /// Instances drawn per action, aligned with the roles' action list.
    pub action_totals: Vec<usize>,
}

impl TrainingSample {
    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.cells.iter().flat_map(|c| c.ids.iter())
    }

    pub fn len(&self) -> usize {
        self.action_totals.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-action instance budgets: `N / |A|` each, the first `N mod |A|` actions one more.
pub fn action_budgets(total_train: usize, num_actions: usize) -> Vec<usize> {
    even_split(total_train, num_actions)
}

/// Cell quotas for every action, in action order, over `c + u` cells.
pub fn cell_quotas(spec: &DesignSpec, num_actions: usize) -> Vec<Vec<usize>> {
    let cells = spec.num_common + spec.num_unique_per_action;
    action_budgets(spec.total_train, num_actions)
        .into_iter()
        .map(|b| even_split(b, cells))
        .collect()
}

fn resolve_actions(m: &CoocMatrix, spec: &DesignSpec) -> Result<Vec<usize>, DesignError> {
    if spec.actions.is_empty() {
        return Ok((0..m.num_actions()).collect());
    }
    let mut seen = HashSet::new();
    spec.actions
        .iter()
        .map(|a| {
            if !seen.insert(a.as_str()) {
                return Err(DesignError::DuplicateAction(a.clone()));
            }
            m.action_index(a)
                .ok_or_else(|| DesignError::UnknownAction(a.clone()))
        })
        .collect()
}

/// The unseen reserve as column indices, defaulting to the last ten columns.
pub fn resolve_reserve(m: &CoocMatrix, spec: &DesignSpec) -> Result<Vec<usize>, DesignError> {
    match &spec.unseen_reserve {
        Some(labels) => labels
            .iter()
            .map(|o| {
                m.object_index(o)
                    .ok_or_else(|| DesignError::UnknownObject(o.clone()))
            })
            .collect(),
        None => {
            let n = m.num_objects();
            Ok((n.saturating_sub(DEFAULT_UNSEEN_COUNT)..n).collect())
        }
    }
}

pub fn assign_roles(m: &CoocMatrix, spec: &DesignSpec) -> Result<RoleAssignment, DesignError> {
    let (c, u) = (spec.num_common, spec.num_unique_per_action);
    if c + u == 0 {
        return Err(DesignError::NoTrainingObjects);
    }
    let actions = resolve_actions(m, spec)?;
    if actions.is_empty() {
        return Err(DesignError::NoActions);
    }
    let reserve = resolve_reserve(m, spec)?;
    let reserved: HashSet<usize> = reserve.iter().copied().collect();
    let mut pool: Vec<usize> = (0..m.num_objects())
        .filter(|j| !reserved.contains(j))
        .collect();
    let needed = c + u * actions.len();
    if pool.len() < needed {
        return Err(DesignError::InsufficientPool {
            needed,
            available: pool.len(),
        });
    }

    let mut rng = stream_rng(spec.seed, STREAM_ROLES);
    pool.shuffle(&mut rng);

    let quotas = cell_quotas(spec, actions.len());
    // Instances a cell must supply to sit at quota position `pos` for the action at `k`.
    let required = |k: usize, pos: usize| match spec.shortfall {
        Shortfall::Error => quotas[k][pos].max(1),
        Shortfall::Spill => 1,
    };

    let mut used = vec![false; pool.len()];
    let mut common = Vec::with_capacity(c);
    let mut first_reject: Option<String> = None;
    for (p, &j) in pool.iter().enumerate() {
        if common.len() == c {
            break;
        }
        let pos = common.len();
        let short = actions
            .iter()
            .enumerate()
            .find(|&(k, &i)| m.count(i, j) < required(k, pos));
        match short {
            None => {
                used[p] = true;
                common.push(j);
            }
            Some((k, &i)) => {
                first_reject.get_or_insert_with(|| {
                    format!(
                        "; e.g. `{}` has {} with `{}`, needs {}",
                        m.objects[j],
                        m.count(i, j),
                        m.actions[i],
                        required(k, pos)
                    )
                });
            }
        }
    }
    if common.len() < c {
        return Err(DesignError::CellSupport {
            role: "common".into(),
            detail: first_reject.unwrap_or_default(),
        });
    }

    let mut unique = BTreeMap::new();
    for (k, &i) in actions.iter().enumerate() {
        let mut mine = Vec::with_capacity(u);
        let mut reject: Option<String> = None;
        for (p, &j) in pool.iter().enumerate() {
            if mine.len() == u {
                break;
            }
            if used[p] {
                continue;
            }
            let need = required(k, c + mine.len());
            if m.count(i, j) >= need {
                used[p] = true;
                mine.push(m.objects[j].clone());
            } else {
                reject.get_or_insert_with(|| {
                    format!(
                        "; e.g. `{}` has {}, needs {}",
                        m.objects[j],
                        m.count(i, j),
                        need
                    )
                });
            }
        }
        if mine.len() < u {
            return Err(DesignError::CellSupport {
                role: format!("unique object for action `{}`", m.actions[i]),
                detail: reject.unwrap_or_default(),
            });
        }
        unique.insert(m.actions[i].clone(), mine);
    }

    Ok(RoleAssignment {
        actions: actions.iter().map(|&i| m.actions[i].clone()).collect(),
        common_objects: common.iter().map(|&j| m.objects[j].clone()).collect(),
        unique_objects: unique,
        unseen_objects: reserve.iter().map(|&j| m.objects[j].clone()).collect(),
    })
}

pub fn sample_training_set(
    m: &CoocMatrix,
    roles: &RoleAssignment,
    spec: &DesignSpec,
) -> Result<TrainingSample, DesignError> {
    if roles.actions.is_empty() {
        return Err(DesignError::NoActions);
    }
    let budgets = action_budgets(spec.total_train, roles.actions.len());
    let mut rng = stream_rng(spec.seed, STREAM_SAMPLE);
    let mut cells = Vec::new();
    let mut totals = Vec::with_capacity(roles.actions.len());

    for (action, &budget) in roles.actions.iter().zip(&budgets) {
        let i = m
            .action_index(action)
            .ok_or_else(|| DesignError::RolesMismatch(format!("action `{action}`")))?;
        let objects: Vec<(&String, usize)> = roles
            .training_objects(action)
            .map(|o| {
                m.object_index(o)
                    .map(|j| (o, j))
                    .ok_or_else(|| DesignError::RolesMismatch(format!("object `{o}`")))
            })
            .collect::<Result<_, _>>()?;
        if objects.is_empty() {
            return Err(DesignError::NoTrainingObjects);
        }
        let available: Vec<usize> = objects.iter().map(|&(_, j)| m.count(i, j)).collect();
        let mut quotas = even_split(budget, objects.len());

        for (k, &(o, _)) in objects.iter().enumerate() {
            if available[k] < quotas[k] && spec.shortfall == Shortfall::Error {
                return Err(DesignError::InsufficientCell {
                    action: action.clone(),
                    object: o.clone(),
                    available: available[k],
                    quota: quotas[k],
                });
            }
        }
        if spec.shortfall == Shortfall::Spill {
            quotas =
                spill(&quotas, &available).ok_or_else(|| DesignError::InsufficientCapacity {
                    action: action.clone(),
                    capacity: available.iter().sum(),
                    budget,
                })?;
        }

        for (&(o, j), &quota) in objects.iter().zip(&quotas) {
            let mut ids = m.cell(i, j).to_vec();
            ids.shuffle(&mut rng);
            ids.truncate(quota);
            cells.push(TrainCell {
                action: action.clone(),
                object: o.clone(),
                quota,
                ids,
            });
        }
        totals.push(quotas.iter().sum());
    }

    Ok(TrainingSample {
        cells,
        action_totals: totals,
    })
}

// Clamp quotas to availability, handing each unit of residual to the cell with
// the most spare capacity (lowest index on ties). None if capacity runs out.
fn spill(quotas: &[usize], available: &[usize]) -> Option<Vec<usize>> {
    let mut out: Vec<usize> = quotas
        .iter()
        .zip(available)
        .map(|(&q, &a)| q.min(a))
        .collect();
    let mut residual: usize = quotas.iter().sum::<usize>() - out.iter().sum::<usize>();
    while residual > 0 {
        let (k, spare) = out
            .iter()
            .zip(available)
            .map(|(&q, &a)| a - q)
            .enumerate()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
        if spare == 0 {
            return None;
        }
        out[k] += 1;
        residual -= 1;
    }
    Some(out)
}

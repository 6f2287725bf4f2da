//! Train/val/test membership and the four-way test taxonomy.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooc::CoocMatrix;
use crate::design::{DesignSpec, RoleAssignment, TrainingSample};
use crate::inventory::Inventory;
use crate::{stream_rng, STREAM_SPLIT};

/// Share of each cell's leftover pool sent to validation, as `VAL_PARTS / POOL_PARTS`.
const VAL_PARTS: usize = 1;
const POOL_PARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestType {
    Common,
    UniqueSelf,
    UniqueOther,
    Unseen,
}

impl TestType {
    pub const ALL: [TestType; 4] = [
        TestType::Common,
        TestType::UniqueSelf,
        TestType::UniqueOther,
        TestType::Unseen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestType::Common => "common",
            TestType::UniqueSelf => "unique_self",
            TestType::UniqueOther => "unique_other",
            TestType::Unseen => "unseen",
        }
    }
}

impl fmt::Display for TestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TestType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown test type `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("action `{0}` is not part of the design")]
    UnknownAction(String),
    #[error("object `{object}` (with action `{action}`) has no role in the design")]
    UnassignedObject { action: String, object: String },
    #[error("training id `{id}` is not in cell ({action}, {object})")]
    ForeignTrainingId {
        id: String,
        action: String,
        object: String,
    },
    #[error("label `{0}` is not in the matrix")]
    UnknownLabel(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Tag a test pair by the role its object plays relative to its action.
pub fn classify_test_type(
    action: &str,
    object: &str,
    roles: &RoleAssignment,
) -> Result<TestType, SplitError> {
    if !roles.actions.iter().any(|a| a == action) {
        return Err(SplitError::UnknownAction(action.to_string()));
    }
    if roles.common_objects.iter().any(|o| o == object) {
        return Ok(TestType::Common);
    }
    if let Some(owner) = roles.unique_owner(object) {
        return Ok(if owner == action {
            TestType::UniqueSelf
        } else {
            TestType::UniqueOther
        });
    }
    if roles.unseen_objects.iter().any(|o| o == object) {
        return Ok(TestType::Unseen);
    }
    Err(SplitError::UnassignedObject {
        action: action.to_string(),
        object: object.to_string(),
    })
}

/// Echo of the design a manifest was generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEcho {
    pub seed: u64,
    pub c: usize,
    pub u: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub actions: Vec<String>,
    pub common_objects: Vec<String>,
    pub unique_objects: BTreeMap<String, Vec<String>>,
    pub unseen_objects: Vec<String>,
    pub inventory_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DesignEcho {
    pub fn roles(&self) -> RoleAssignment {
        RoleAssignment {
            actions: self.actions.clone(),
            common_objects: self.common_objects.clone(),
            unique_objects: self.unique_objects.clone(),
            unseen_objects: self.unseen_objects.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestItem {
    pub id: String,
    #[serde(rename = "type")]
    pub test_type: TestType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub design: DesignEcho,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<TestItem>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SplitError> {
        serde_json::from_str(text).map_err(|e| SplitError::Manifest(e.to_string()))
    }

    pub fn test_counts(&self) -> BTreeMap<TestType, usize> {
        let mut out = BTreeMap::new();
        for item in &self.test {
            *out.entry(item.test_type).or_insert(0) += 1;
        }
        out
    }

    /// Check disjointness, id existence and that each tag matches the roles.
    pub fn check(&self, inv: &Inventory) -> Result<(), SplitError> {
        let index = inv.id_index();
        let roles = self.design.roles();
        let mut seen = HashSet::new();
        let all = self
            .train
            .iter()
            .chain(&self.val)
            .chain(self.test.iter().map(|t| &t.id));
        for id in all {
            if !index.contains_key(id.as_str()) {
                return Err(SplitError::Manifest(format!(
                    "id `{id}` is not in the inventory"
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(SplitError::Manifest(format!(
                    "id `{id}` appears more than once"
                )));
            }
        }
        for item in &self.test {
            let inst = &inv.instances[index[item.id.as_str()]];
            let expected = classify_test_type(&inst.action, &inst.object, &roles)?;
            if expected != item.test_type {
                return Err(SplitError::Manifest(format!(
                    "id `{}` tagged {} but its pair is {}",
                    item.id, item.test_type, expected
                )));
            }
        }
        Ok(())
    }
}

struct PoolCell {
    kind: TestType,
    ids: Vec<String>,
}

pub fn generate_splits(
    m: &CoocMatrix,
    roles: &RoleAssignment,
    train: &TrainingSample,
    spec: &DesignSpec,
    inventory_digest: &str,
) -> Result<SplitManifest, SplitError> {
    let lookup_action = |a: &str| {
        m.action_index(a)
            .ok_or_else(|| SplitError::UnknownLabel(a.to_string()))
    };
    let lookup_object = |o: &str| {
        m.object_index(o)
            .ok_or_else(|| SplitError::UnknownLabel(o.to_string()))
    };

    let train_ids: HashSet<&str> = train.ids().map(String::as_str).collect();
    let mut scope: Vec<(usize, usize, TestType)> = Vec::new();

    for cell in &train.cells {
        let (i, j) = (lookup_action(&cell.action)?, lookup_object(&cell.object)?);
        if let Some(id) = cell.ids.iter().find(|id| !m.cell(i, j).contains(id)) {
            return Err(SplitError::ForeignTrainingId {
                id: id.clone(),
                action: cell.action.clone(),
                object: cell.object.clone(),
            });
        }
        scope.push((i, j, classify_test_type(&cell.action, &cell.object, roles)?));
    }
    for (owner, objects) in &roles.unique_objects {
        for o in objects {
            let j = lookup_object(o)?;
            for a in roles.actions.iter().filter(|a| *a != owner) {
                scope.push((lookup_action(a)?, j, TestType::UniqueOther));
            }
        }
    }
    for o in &roles.unseen_objects {
        let j = lookup_object(o)?;
        for a in &roles.actions {
            scope.push((lookup_action(a)?, j, TestType::Unseen));
        }
    }

    let mut rng = stream_rng(spec.seed, STREAM_SPLIT);
    let pool: Vec<PoolCell> = scope
        .into_iter()
        .map(|(i, j, kind)| {
            let mut ids: Vec<String> = m
                .cell(i, j)
                .iter()
                .filter(|id| !train_ids.contains(id.as_str()))
                .cloned()
                .collect();
            ids.shuffle(&mut rng);
            PoolCell { kind, ids }
        })
        .collect();

    // Unseen cells feed test only; every other cell gives ~20% of its pool to val.
    let sizes: Vec<usize> = pool
        .iter()
        .map(|c| {
            if c.kind == TestType::Unseen {
                0
            } else {
                c.ids.len()
            }
        })
        .collect();
    let val_counts = val_shares(&sizes);

    let mut val = Vec::new();
    let mut test = Vec::new();
    for (cell, &nval) in pool.iter().zip(&val_counts) {
        val.extend(cell.ids[..nval].iter().cloned());
        test.extend(cell.ids[nval..].iter().map(|id| TestItem {
            id: id.clone(),
            test_type: cell.kind,
        }));
    }

    let present: HashSet<TestType> = test.iter().map(|t| t.test_type).collect();
    let mut warnings = Vec::new();
    let groups = [
        (TestType::Common, !roles.common_objects.is_empty()),
        (
            TestType::UniqueSelf,
            roles.unique_objects.values().any(|v| !v.is_empty()),
        ),
        (
            TestType::UniqueOther,
            roles.unique_objects.values().any(|v| !v.is_empty()),
        ),
        (TestType::Unseen, !roles.unseen_objects.is_empty()),
    ];
    for (kind, has_group) in groups {
        if has_group && !present.contains(&kind) {
            warnings.push(format!(
                "no {kind} test items although the role group is nonempty"
            ));
        }
    }

    Ok(SplitManifest {
        design: DesignEcho {
            seed: spec.seed,
            c: spec.num_common,
            u: spec.num_unique_per_action,
            n: spec.total_train,
            actions: roles.actions.clone(),
            common_objects: roles.common_objects.clone(),
            unique_objects: roles.unique_objects.clone(),
            unseen_objects: roles.unseen_objects.clone(),
            inventory_digest: inventory_digest.to_string(),
            warnings,
        },
        train: train.ids().cloned().collect(),
        val,
        test,
    })
}

// Validation seats per cell: floor of each cell's 20% share, plus one for the
// cells with the largest remainders until the rounded overall share is met.
fn val_shares(sizes: &[usize]) -> Vec<usize> {
    let mut seats: Vec<usize> = sizes.iter().map(|&n| n * VAL_PARTS / POOL_PARTS).collect();
    let total: usize = sizes.iter().sum();
    let target = (2 * total * VAL_PARTS + POOL_PARTS) / (2 * POOL_PARTS);
    let mut order: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (n * VAL_PARTS % POOL_PARTS, i))
        .collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let extra = target - seats.iter().sum::<usize>();
    for &(r, i) in order.iter().take(extra) {
        debug_assert!(r > 0);
        seats[i] += 1;
    }
    seats
}

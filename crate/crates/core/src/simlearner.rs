//! Synthetic action-object world and two reference learners.
//!
//! Each instance's feature vector is a one-hot object block followed by an
//! action block. The action block is the action's basis vector, plus a fixed
//! offset drawn once per (object, action) cell, plus per-instance Gaussian
//! noise. Object identity predicts the action perfectly within trained pairs,
//! while the action signal is noisy and distorted by whichever object carries
//! it; seeing an action with more objects averages those distortions out.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inventory::{Instance, Inventory};
use crate::trials::{Learner, LearnerError, LearnerInput, Predictions};
use crate::{stream_rng, STREAM_WORLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthWorldConfig {
    pub num_actions: usize,
    pub num_objects: usize,
    pub instances_per_cell: usize,
    /// Standard deviation of per-instance noise on the action block.
    pub noise_sigma: f64,
    /// Standard deviation of the per-(object, action) offset added to the action block.
    /// Zero gives the plain prototype-plus-noise world.
    pub object_style_sigma: f64,
    pub seed: u64,
}

impl Default for SynthWorldConfig {
    fn default() -> Self {
        SynthWorldConfig {
            num_actions: 5,
            num_objects: 30,
            instances_per_cell: 80,
            noise_sigma: 0.5,
            object_style_sigma: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("world needs at least one action, one object and one instance per cell")]
    EmptyWorld,
    #[error("sigma must be finite and non-negative, got {0}")]
    BadSigma(f64),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature table line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate feature row for `{0}`")]
    DuplicateId(String),
}

/// Fixed-width real feature vectors keyed by instance id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    dim: usize,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            ..FeatureTable::default()
        }
    }

    pub fn insert(&mut self, id: String, row: Vec<f64>) -> Result<(), FeatureError> {
        if row.len() != self.dim {
            return Err(FeatureError::Malformed {
                line: self.rows.len() + 2,
                message: format!(
                    "row for `{id}` has {} values, expected {}",
                    row.len(),
                    self.dim
                ),
            });
        }
        if self.index.contains_key(&id) {
            return Err(FeatureError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.rows.len());
        self.ids.push(id);
        self.rows.push(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.rows[i].as_slice())
    }

    /// Stack the rows for `ids` into a matrix, failing on the first missing id.
    pub fn matrix<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a String>,
    ) -> Result<Array2<f64>, String> {
        let mut data = Vec::new();
        let mut n = 0;
        for id in ids {
            let row = self.get(id).ok_or_else(|| id.clone())?;
            data.extend_from_slice(row);
            n += 1;
        }
        Ok(Array2::from_shape_vec((n, self.dim), data).expect("rows have fixed width"))
    }

    /// CSV with header `id,f0,f1,...`; values use the shortest exact decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for k in 0..self.dim {
            out.push_str(&format!(",f{k}"));
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, FeatureError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(FeatureError::Malformed {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        let expected: Vec<String> = std::iter::once("id".to_string())
            .chain((0..cols.len().saturating_sub(1)).map(|k| format!("f{k}")))
            .collect();
        if cols != expected {
            return Err(FeatureError::Malformed {
                line: 1,
                message: "header must be `id,f0,f1,...`".into(),
            });
        }
        let mut table = FeatureTable::new(cols.len() - 1);
        for (n, line) in lines {
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| FeatureError::Malformed {
                            line: n + 1,
                            message: format!("bad value `{f}`: {e}"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != table.dim {
                return Err(FeatureError::Malformed {
                    line: n + 1,
                    message: format!("expected {} values, found {}", table.dim, row.len()),
                });
            }
            table.insert(id, row)?;
        }
        Ok(table)
    }
}

pub fn action_label(i: usize) -> String {
    format!("a{i}")
}

pub fn object_label(j: usize) -> String {
    format!("o{j:02}")
}

pub fn generate_world(cfg: &SynthWorldConfig) -> Result<(Inventory, FeatureTable), WorldError> {
    if cfg.num_actions == 0 || cfg.num_objects == 0 || cfg.instances_per_cell == 0 {
        return Err(WorldError::EmptyWorld);
    }
    for sigma in [cfg.noise_sigma, cfg.object_style_sigma] {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(WorldError::BadSigma(sigma));
        }
    }
    let mut rng = stream_rng(cfg.seed, STREAM_WORLD);
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|_| WorldError::BadSigma(cfg.noise_sigma))?;
    let style = Normal::new(0.0, cfg.object_style_sigma)
        .map_err(|_| WorldError::BadSigma(cfg.object_style_sigma))?;

    // offsets[o][a]: how object `o` shifts the appearance of action `a`.
    let offsets: Vec<Vec<Vec<f64>>> = (0..cfg.num_objects)
        .map(|_| {
            (0..cfg.num_actions)
                .map(|_| {
                    (0..cfg.num_actions)
                        .map(|_| style.sample(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();

    let dim = cfg.num_objects + cfg.num_actions;
    let mut instances =
        Vec::with_capacity(cfg.num_actions * cfg.num_objects * cfg.instances_per_cell);
    let mut table = FeatureTable::new(dim);
    for a in 0..cfg.num_actions {
        for (o, per_action) in offsets.iter().enumerate() {
            let shift = &per_action[a];
            for k in 0..cfg.instances_per_cell {
                let id = format!("{}-{}-{k:04}", action_label(a), object_label(o));
                let mut row = vec![0.0; dim];
                row[o] = 1.0;
                for (d, s) in shift.iter().enumerate() {
                    let proto = if d == a { 1.0 } else { 0.0 };
                    row[cfg.num_objects + d] = proto + s + noise.sample(&mut rng);
                }
                instances.push(Instance::new(id.clone(), action_label(a), object_label(o)));
                table.insert(id, row).expect("generated ids are unique");
            }
        }
    }
    let inv = Inventory::from_instances(instances).expect("generated inventory is valid");
    Ok((inv, table))
}

/// Predicts the majority training action of each object; unknown objects get the first action.
#[derive(Debug, Clone, Copy, Default)]
pub struct Memorizer;

impl Learner for Memorizer {
    fn name(&self) -> String {
        "memorizer".into()
    }

    fn predict(&self, input: &LearnerInput<'_>) -> Result<Predictions, LearnerError> {
        memorizer_learner(input)
    }
}

pub fn memorizer_learner(input: &LearnerInput<'_>) -> Result<Predictions, LearnerError> {
    let actions = &input.manifest.design.actions;
    let fallback = actions.first().ok_or(LearnerError::NoActions)?;
    let index = input.inventory.id_index();
    let lookup = |id: &String| {
        index
            .get(id.as_str())
            .map(|&i| &input.inventory.instances[i])
            .ok_or_else(|| LearnerError::UnknownId(id.clone()))
    };

    let mut votes: HashMap<&str, Vec<usize>> = HashMap::new();
    for id in &input.manifest.train {
        let inst = lookup(id)?;
        let k = actions
            .iter()
            .position(|a| *a == inst.action)
            .ok_or_else(|| LearnerError::UnknownAction(inst.action.clone()))?;
        votes
            .entry(inst.object.as_str())
            .or_insert_with(|| vec![0; actions.len()])[k] += 1;
    }
    let table: HashMap<&str, &String> = votes
        .into_iter()
        .map(|(object, counts)| {
            // max_by_key keeps the last maximum; scan in reverse so the lowest index wins.
            let best = (0..counts.len())
                .rev()
                .max_by_key(|&k| counts[k])
                .unwrap_or(0);
            (object, &actions[best])
        })
        .collect();

    input
        .manifest
        .test
        .iter()
        .map(|t| {
            let inst = lookup(&t.id)?;
            let action = table.get(inst.object.as_str()).copied().unwrap_or(fallback);
            Ok((t.id.clone(), action.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearHyper {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for LinearHyper {
    fn default() -> Self {
        LinearHyper {
            lr: 0.1,
            epochs: 200,
        }
    }
}

/// Multinomial softmax regression: scores = W x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearModel {
            weights: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.scores(x)
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Mean softmax cross-entropy and its gradient with respect to weights and bias.
pub fn loss_and_grad(
    model: &LinearModel,
    x: &Array2<f64>,
    y: &[usize],
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows();
    let mut probs = model.scores(x);
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss += sum.ln() - (row[label].ln());
        row /= sum;
    }
    // probs now holds softmax; turn it into (P - Y).
    for (mut row, &label) in probs.rows_mut().into_iter().zip(y) {
        row[label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    let grad_w = probs.t().dot(x) * scale;
    let grad_b = probs.sum_axis(Axis(0)) * scale;
    (loss * scale, grad_w, grad_b)
}

/// Full-batch gradient descent from zero weights; returns the model and the loss before each step.
pub fn fit_linear(
    x: &Array2<f64>,
    y: &[usize],
    classes: usize,
    hyper: &LinearHyper,
) -> Result<(LinearModel, Vec<f64>), LearnerError> {
    if x.nrows() == 0 {
        return Err(LearnerError::EmptyTraining);
    }
    let mut model = LinearModel::zeros(classes, x.ncols());
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        let (loss, gw, gb) = loss_and_grad(&model, x, y);
        if !loss.is_finite() {
            return Err(LearnerError::Diverged { epoch, loss });
        }
        history.push(loss);
        model.weights.scaled_add(-hyper.lr, &gw);
        model.bias.scaled_add(-hyper.lr, &gb);
    }
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearLearner {
    pub hyper: LinearHyper,
}

impl Learner for LinearLearner {
    fn name(&self) -> String {
        format!("linear(lr={}, epochs={})", self.hyper.lr, self.hyper.epochs)
    }

    fn predict(&self, input: &LearnerInput<'_>) -> Result<Predictions, LearnerError> {
        linear_learner(input, &self.hyper)
    }
}

pub fn linear_learner(
    input: &LearnerInput<'_>,
    hyper: &LinearHyper,
) -> Result<Predictions, LearnerError> {
    let features = input.features.ok_or(LearnerError::MissingFeatures)?;
    let actions = &input.manifest.design.actions;
    let index = input.inventory.id_index();
    let y = input
        .manifest
        .train
        .iter()
        .map(|id| {
            let inst = index
                .get(id.as_str())
                .map(|&i| &input.inventory.instances[i])
                .ok_or_else(|| LearnerError::UnknownId(id.clone()))?;
            actions
                .iter()
                .position(|a| *a == inst.action)
                .ok_or_else(|| LearnerError::UnknownAction(inst.action.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let x = features
        .matrix(&input.manifest.train)
        .map_err(LearnerError::MissingFeatureRow)?;
    let (model, _) = fit_linear(&x, &y, actions.len(), hyper)?;

    let test_ids: Vec<&String> = input.manifest.test.iter().map(|t| &t.id).collect();
    let xt = features
        .matrix(test_ids.iter().copied())
        .map_err(LearnerError::MissingFeatureRow)?;
    Ok(test_ids
        .into_iter()
        .zip(model.predict(&xt))
        .map(|(id, k)| (id.clone(), actions[k].clone()))
        .collect::<BTreeMap<_, _>>())
}

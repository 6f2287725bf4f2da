//! Repeated seeded trials, scoring and confidence-interval aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cooc::CoocMatrix;
use crate::design::{assign_roles, sample_training_set, DesignError, DesignSpec};
use crate::inventory::Inventory;
use crate::simlearner::FeatureTable;
use crate::splits::{generate_splits, SplitError, SplitManifest, TestType};

/// Test id -> predicted action label.
pub type Predictions = BTreeMap<String, String>;

/// Everything a learner may look at for one trial.
pub struct LearnerInput<'a> {
    pub manifest: &'a SplitManifest,
    pub features: Option<&'a FeatureTable>,
    /// Source of training labels; learners must not read test labels from it.
    pub inventory: &'a Inventory,
}

pub trait Learner: Sync {
    fn name(&self) -> String;
    fn predict(&self, input: &LearnerInput<'_>) -> Result<Predictions, LearnerError>;
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("design has no actions")]
    NoActions,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("learner needs a feature table")]
    MissingFeatures,
    #[error("no feature row for `{0}`")]
    MissingFeatureRow(String),
    #[error("id `{0}` is not in the inventory")]
    UnknownId(String),
    #[error("action `{0}` is not part of the design")]
    UnknownAction(String),
    #[error("loss became non-finite ({loss}) at epoch {epoch}; learning rate too large?")]
    Diverged { epoch: usize, loss: f64 },
    #[error("external learner: {0}")]
    External(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("no prediction for test id `{0}`")]
    MissingPrediction(String),
    #[error("prediction for `{id}` names unknown action `{action}`")]
    UnknownAction { id: String, action: String },
    #[error("test id `{0}` is not in the inventory")]
    UnknownId(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("no trial results to aggregate")]
    Empty,
    #[error("trial {index} reports test types {found:?}, expected {expected:?}")]
    MismatchedTypes {
        index: usize,
        expected: Vec<TestType>,
        found: Vec<TestType>,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("trial {index} (seed {seed}): {source}")]
    Trial {
        index: usize,
        seed: u64,
        #[source]
        source: TrialError,
    },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_seed: u64,
    /// Only types with at least one test item appear.
    pub tallies: BTreeMap<TestType, Tally>,
}

impl TrialResult {
    pub fn accuracy(&self, t: TestType) -> Option<f64> {
        self.tallies
            .get(&t)
            .map(|c| c.correct as f64 / c.total as f64)
    }

    pub fn types(&self) -> Vec<TestType> {
        self.tallies.keys().copied().collect()
    }
}

pub fn score_predictions(
    manifest: &SplitManifest,
    predictions: &Predictions,
    truth: &Inventory,
) -> Result<TrialResult, ScoreError> {
    let index = truth.id_index();
    let actions: BTreeSet<&str> = manifest.design.actions.iter().map(String::as_str).collect();
    let mut tallies: BTreeMap<TestType, Tally> = BTreeMap::new();
    for item in &manifest.test {
        let predicted = predictions
            .get(&item.id)
            .ok_or_else(|| ScoreError::MissingPrediction(item.id.clone()))?;
        if !actions.contains(predicted.as_str()) {
            return Err(ScoreError::UnknownAction {
                id: item.id.clone(),
                action: predicted.clone(),
            });
        }
        let inst = index
            .get(item.id.as_str())
            .map(|&i| &truth.instances[i])
            .ok_or_else(|| ScoreError::UnknownId(item.id.clone()))?;
        let tally = tallies.entry(item.test_type).or_default();
        tally.total += 1;
        tally.correct += usize::from(*predicted == inst.action);
    }
    Ok(TrialResult {
        trial_seed: manifest.design.seed,
        tallies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub mean: f64,
    /// `None` when a single trial leaves no degrees of freedom.
    pub half_width_95: Option<f64>,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub c: usize,
    pub u: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub num_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigEcho>,
    pub types: BTreeMap<TestType, TypeSummary>,
}

/// Two-sided 95% Student-t critical value, `t(0.975, df)`.
pub fn t_critical_95(df: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    dist.inverse_cdf(0.975)
}

/// Mean and t-interval half-width of a sample; accumulation order is fixed by sorting.
pub fn mean_and_half_width(values: &[f64]) -> (f64, Option<f64>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    if sorted.first() == sorted.last() {
        let mean = sorted.first().copied().unwrap_or(f64::NAN);
        return (mean, (sorted.len() > 1).then_some(0.0));
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let mut devs: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
    devs.sort_by(f64::total_cmp);
    let var = devs.iter().sum::<f64>() / (n - 1.0);
    (
        mean,
        Some(t_critical_95(sorted.len() - 1) * var.sqrt() / n.sqrt()),
    )
}

pub fn aggregate(results: &[TrialResult]) -> Result<AggregateReport, AggregateError> {
    let first = results.first().ok_or(AggregateError::Empty)?;
    let expected = first.types();
    for (index, r) in results.iter().enumerate() {
        let found = r.types();
        if found != expected {
            return Err(AggregateError::MismatchedTypes {
                index,
                expected,
                found,
            });
        }
    }
    let types = expected
        .into_iter()
        .map(|t| {
            let accs: Vec<f64> = results
                .iter()
                .map(|r| r.accuracy(t).expect("type present"))
                .collect();
            let (mean, half_width_95) = mean_and_half_width(&accs);
            (
                t,
                TypeSummary {
                    mean,
                    half_width_95,
                    n_trials: accs.len(),
                },
            )
        })
        .collect();
    Ok(AggregateReport {
        config: None,
        types,
    })
}

pub const PLOT_HEADER: &str = "c,u,N,test_type,mean,ci_half_width,n_trials";

fn plot_rows(out: &mut String, echo: &ConfigEcho, report: &AggregateReport) {
    for (t, s) in &report.types {
        let hw = s
            .half_width_95
            .map_or_else(|| "NA".to_string(), |h| h.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            echo.c, echo.u, echo.n, t, s.mean, hw, s.n_trials
        ));
    }
}

impl AggregateReport {
    /// Plot-data CSV; rows follow the fixed test-type order.
    pub fn to_plot_csv(&self) -> String {
        let mut out = format!("{PLOT_HEADER}\n");
        if let Some(echo) = &self.config {
            plot_rows(&mut out, echo, self);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Design, split, learn and score one trial with the given seed.
pub fn run_one(
    inv: &Inventory,
    m: &CoocMatrix,
    spec: &DesignSpec,
    learner: &dyn Learner,
    features: Option<&FeatureTable>,
    digest: &str,
) -> Result<(SplitManifest, TrialResult), TrialError> {
    let roles = assign_roles(m, spec)?;
    let sample = sample_training_set(m, &roles, spec)?;
    let manifest = generate_splits(m, &roles, &sample, spec, digest)?;
    let predictions = learner.predict(&LearnerInput {
        manifest: &manifest,
        features,
        inventory: inv,
    })?;
    let result = score_predictions(&manifest, &predictions, inv)?;
    Ok((manifest, result))
}

/// Per-trial seed: the design seed offset by the trial index.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

pub fn run_trials(
    inv: &Inventory,
    m: &CoocMatrix,
    spec: &DesignSpec,
    learner: &dyn Learner,
    features: Option<&FeatureTable>,
    trials: usize,
) -> Result<(AggregateReport, Vec<TrialResult>), RunError> {
    if trials == 0 {
        return Err(RunError::NoTrials);
    }
    let digest = inv.digest();
    let outcomes: Vec<Result<TrialResult, TrialError>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let spec_i = DesignSpec {
                seed: trial_seed(spec.seed, i),
                ..spec.clone()
            };
            run_one(inv, m, &spec_i, learner, features, &digest).map(|(_, r)| r)
        })
        .collect();
    let mut results = Vec::with_capacity(trials);
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => results.push(r),
            Err(source) => {
                return Err(RunError::Trial {
                    index,
                    seed: trial_seed(spec.seed, index),
                    source,
                })
            }
        }
    }
    let mut report = aggregate(&results)?;
    report.config = Some(ConfigEcho {
        c: spec.num_common,
        u: spec.num_unique_per_action,
        n: spec.total_train,
        num_actions: results_actions(spec, m),
    });
    Ok((report, results))
}

fn results_actions(spec: &DesignSpec, m: &CoocMatrix) -> usize {
    if spec.actions.is_empty() {
        m.num_actions()
    } else {
        spec.actions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridAxes {
    pub c_values: Vec<usize>,
    pub u_values: Vec<usize>,
    #[serde(rename = "N_values")]
    pub n_values: Vec<usize>,
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            c_values: vec![1],
            u_values: vec![0],
            n_values: vec![375],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub config: ConfigEcho,
    pub outcome: Result<AggregateReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub cells: Vec<GridCell>,
}

impl GridTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PLOT_HEADER}\n");
        for cell in &self.cells {
            if let Ok(report) = &cell.outcome {
                plot_rows(&mut out, &cell.config, report);
            }
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("c,u,N,error\n");
        for cell in &self.cells {
            if let Err(e) = &cell.outcome {
                let msg = e.replace(['\n', ','], " ");
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    cell.config.c, cell.config.u, cell.config.n, msg
                ));
            }
        }
        out
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Run every (c, u, N) combination, c outermost; failures are recorded per cell.
pub fn run_grid(
    inv: &Inventory,
    m: &CoocMatrix,
    base: &DesignSpec,
    axes: &GridAxes,
    learner: &dyn Learner,
    features: Option<&FeatureTable>,
    trials: usize,
) -> GridTable {
    let mut combos = Vec::new();
    for &c in &axes.c_values {
        for &u in &axes.u_values {
            for &n in &axes.n_values {
                combos.push((c, u, n));
            }
        }
    }
    let cells = combos
        .into_par_iter()
        .map(|(c, u, n)| {
            let spec = DesignSpec {
                num_common: c,
                num_unique_per_action: u,
                total_train: n,
                ..base.clone()
            };
            let outcome = run_trials(inv, m, &spec, learner, features, trials)
                .map(|(report, _)| report)
                .map_err(|e| e.to_string());
            GridCell {
                config: ConfigEcho {
                    c,
                    u,
                    n,
                    num_actions: results_actions(base, m),
                },
                outcome,
            }
        })
        .collect();
    GridTable { cells }
}

/// One predicted label in the external results file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub action: String,
}

/// Results file written by an external learner: `{trial_seed, predictions: [{id, action}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub trial_seed: u64,
    pub predictions: Vec<PredictionRecord>,
}

impl ResultsFile {
    pub fn from_predictions(trial_seed: u64, predictions: &Predictions) -> Self {
        ResultsFile {
            trial_seed,
            predictions: predictions
                .iter()
                .map(|(id, action)| PredictionRecord {
                    id: id.clone(),
                    action: action.clone(),
                })
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, LearnerError> {
        serde_json::from_str(text)
            .map_err(|e| LearnerError::External(format!("bad results file: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn into_predictions(self) -> Result<Predictions, LearnerError> {
        let mut out = Predictions::new();
        for p in self.predictions {
            if out.insert(p.id.clone(), p.action).is_some() {
                return Err(LearnerError::External(format!(
                    "duplicate prediction for `{}`",
                    p.id
                )));
            }
        }
        Ok(out)
    }
}

/// A learner run as a separate process.
///
/// For each trial the harness writes `manifest.json` and `features.csv` to a
/// scratch directory and runs `sh -c "<command> <manifest> <features> <results>"`.
/// The process must exit 0 after writing the results file.
#[derive(Debug, Clone)]
pub struct ExternalLearner {
    pub command: String,
}

impl Learner for ExternalLearner {
    fn name(&self) -> String {
        format!("external:{}", self.command)
    }

    fn predict(&self, input: &LearnerInput<'_>) -> Result<Predictions, LearnerError> {
        let features = input.features.ok_or(LearnerError::MissingFeatures)?;
        let dir = tempfile::tempdir().map_err(|e| LearnerError::External(e.to_string()))?;
        let manifest_path = dir.path().join("manifest.json");
        let features_path = dir.path().join("features.csv");
        let results_path = dir.path().join("results.json");
        write(&manifest_path, &input.manifest.to_json())?;
        write(&features_path, &features.to_csv())?;

        let output = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$@\"", self.command))
            .arg("sh")
            .arg(&manifest_path)
            .arg(&features_path)
            .arg(&results_path)
            .output()
            .map_err(|e| LearnerError::External(format!("cannot start `{}`: {e}", self.command)))?;
        if !output.status.success() {
            return Err(LearnerError::External(format!(
                "`{}` exited with {}: {}",
                self.command,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&results_path)
            .map_err(|e| LearnerError::External(format!("no results file: {e}")))?;
        let results = ResultsFile::parse(&text)?;
        if results.trial_seed != input.manifest.design.seed {
            return Err(LearnerError::External(format!(
                "results are for trial seed {}, expected {}",
                results.trial_seed, input.manifest.design.seed
            )));
        }
        results.into_predictions()
    }
}

fn write(path: &Path, text: &str) -> Result<(), LearnerError> {
    std::fs::write(path, text)
        .map_err(|e| LearnerError::External(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::Instance;
    use crate::splits::{DesignEcho, TestItem};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn manifest(items: &[(&str, TestType)]) -> SplitManifest {
        SplitManifest {
            design: DesignEcho {
                seed: 4,
                c: 1,
                u: 0,
                n: 2,
                actions: vec!["cut".into(), "roast".into()],
                common_objects: vec!["pear".into()],
                unique_objects: BTreeMap::new(),
                unseen_objects: vec![],
                inventory_digest: "d".into(),
                warnings: vec![],
            },
            train: vec![],
            val: vec![],
            test: items
                .iter()
                .map(|(id, t)| TestItem {
                    id: id.to_string(),
                    test_type: *t,
                })
                .collect(),
        }
    }

    fn truth() -> Inventory {
        Inventory::from_instances(
            (0..4)
                .map(|i| Instance::new(format!("t{i}"), "cut", "pear"))
                .chain(std::iter::once(Instance::new("u0", "roast", "pear")))
                .collect(),
        )
        .unwrap()
    }

    fn preds(pairs: &[(&str, &str)]) -> Predictions {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn three_of_four() {
        let m = manifest(&[
            ("t0", TestType::Common),
            ("t1", TestType::Common),
            ("t2", TestType::Common),
            ("t3", TestType::Common),
        ]);
        let p = preds(&[("t0", "cut"), ("t1", "cut"), ("t2", "roast"), ("t3", "cut")]);
        let r = score_predictions(&m, &p, &truth()).unwrap();
        assert_eq!(r.accuracy(TestType::Common), Some(0.75));
        assert_eq!(r.accuracy(TestType::Unseen), None);
        assert_eq!(r.trial_seed, 4);
    }

    #[test]
    fn all_correct() {
        let m = manifest(&[("t0", TestType::Common), ("u0", TestType::Unseen)]);
        let p = preds(&[("t0", "cut"), ("u0", "roast")]);
        let r = score_predictions(&m, &p, &truth()).unwrap();
        assert!(r.types().iter().all(|&t| r.accuracy(t) == Some(1.0)));
    }

    #[test]
    fn scoring_errors() {
        let m = manifest(&[("t0", TestType::Common), ("t1", TestType::Common)]);
        assert_eq!(
            score_predictions(&m, &preds(&[("t0", "cut")]), &truth()),
            Err(ScoreError::MissingPrediction("t1".into()))
        );
        assert!(matches!(
            score_predictions(&m, &preds(&[("t0", "cut"), ("t1", "bake")]), &truth()),
            Err(ScoreError::UnknownAction { .. })
        ));
    }

    fn result(seed: u64, tallies: &[(TestType, usize, usize)]) -> TrialResult {
        TrialResult {
            trial_seed: seed,
            tallies: tallies
                .iter()
                .map(|&(t, c, n)| {
                    (
                        t,
                        Tally {
                            correct: c,
                            total: n,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn zero_variance() {
        let rs: Vec<TrialResult> = (0..3)
            .map(|s| result(s, &[(TestType::Common, 1, 2)]))
            .collect();
        let rep = aggregate(&rs).unwrap();
        let s = rep.types[&TestType::Common];
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.half_width_95, Some(0.0));
        assert_eq!(s.n_trials, 3);
    }

    #[test]
    fn two_trials_one_and_zero() {
        let rs = vec![
            result(0, &[(TestType::Unseen, 1, 1)]),
            result(1, &[(TestType::Unseen, 0, 1)]),
        ];
        let s = aggregate(&rs).unwrap().types[&TestType::Unseen];
        assert_eq!(s.mean, 0.5);
        // df = 1 is the Cauchy distribution: t(0.975, 1) = tan(0.475 pi).
        let t1 = (0.475 * std::f64::consts::PI).tan();
        assert_abs_diff_eq!(t1, 12.706, epsilon = 1e-3);
        let se = (0.5f64).sqrt() / 2f64.sqrt();
        assert_abs_diff_eq!(s.half_width_95.unwrap(), t1 * se, epsilon = 1e-6);
        assert_abs_diff_eq!(s.half_width_95.unwrap(), 6.353, epsilon = 1e-3);
    }

    #[test]
    fn t_critical_known_values() {
        // df = 2 has the closed form (2p - 1) / sqrt(2p(1 - p)).
        let p: f64 = 0.975;
        let df2 = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
        assert_abs_diff_eq!(t_critical_95(2), df2, epsilon = 1e-6);
        assert_abs_diff_eq!(t_critical_95(9), 2.262157, epsilon = 1e-5);
    }

    #[test]
    fn single_trial_has_no_interval() {
        let s = aggregate(&[result(0, &[(TestType::Common, 4, 5)])])
            .unwrap()
            .types[&TestType::Common];
        assert_eq!(s.mean, 0.8);
        assert_eq!(s.half_width_95, None);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate(&[]), Err(AggregateError::Empty));
        let rs = vec![
            result(0, &[(TestType::Common, 1, 2)]),
            result(1, &[(TestType::Unseen, 1, 2)]),
        ];
        assert!(matches!(
            aggregate(&rs),
            Err(AggregateError::MismatchedTypes { index: 1, .. })
        ));
    }

    #[test]
    fn plot_csv_marks_missing_interval() {
        let mut rep = aggregate(&[result(
            0,
            &[(TestType::Common, 4, 5), (TestType::Unseen, 1, 5)],
        )])
        .unwrap();
        rep.config = Some(ConfigEcho {
            c: 1,
            u: 0,
            n: 5,
            num_actions: 5,
        });
        assert_eq!(
            rep.to_plot_csv(),
            "c,u,N,test_type,mean,ci_half_width,n_trials\n1,0,5,common,0.8,NA,1\n1,0,5,unseen,0.2,NA,1\n"
        );
    }

    #[test]
    fn results_file_shape() {
        let rf = ResultsFile::from_predictions(3, &preds(&[("a", "cut")]));
        let v: serde_json::Value = serde_json::from_str(&rf.to_json()).unwrap();
        assert_eq!(v["trial_seed"], 3);
        assert_eq!(v["predictions"][0]["id"], "a");
        assert_eq!(v["predictions"][0]["action"], "cut");
        assert_eq!(ResultsFile::parse(&rf.to_json()).unwrap(), rf);
        assert!(ResultsFile::parse("{\"trial_seed\":1}").is_err());
        let dup = ResultsFile {
            trial_seed: 1,
            predictions: vec![
                PredictionRecord {
                    id: "a".into(),
                    action: "x".into(),
                },
                PredictionRecord {
                    id: "a".into(),
                    action: "y".into(),
                },
            ],
        };
        assert!(dup.into_predictions().is_err());
    }

    proptest! {
        #[test]
        fn aggregate_matches_brute_force_and_ignores_order(
            tallies in proptest::collection::vec((0usize..20, 1usize..20), 1..12),
            rot in 0usize..12,
        ) {
            let rs: Vec<TrialResult> = tallies
                .iter()
                .enumerate()
                .map(|(i, &(c, n))| result(i as u64, &[(TestType::Unseen, c.min(n), n)]))
                .collect();
            let rep = aggregate(&rs).unwrap();
            let s = rep.types[&TestType::Unseen];

            // Brute force from raw tallies, straightforward accumulation.
            let accs: Vec<f64> = tallies.iter().map(|&(c, n)| c.min(n) as f64 / n as f64).collect();
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            prop_assert!((s.mean - mean).abs() < 1e-12);
            if accs.len() > 1 {
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let hw = t_critical_95(accs.len() - 1) * (var / n).sqrt();
                prop_assert!((s.half_width_95.unwrap() - hw).abs() < 1e-9);
            } else {
                prop_assert!(s.half_width_95.is_none());
            }

            let mut rotated = rs.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            prop_assert_eq!(aggregate(&rotated).unwrap(), rep);
        }
    }
}

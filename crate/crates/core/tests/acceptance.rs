//! Acceptance gate: each criterion prints one PASS/FAIL line; the test fails if any criterion fails.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use actobj::cooc::{build_cooc, CoocMatrix};
use actobj::densify::{densify, DensifyConfig};
use actobj::design::{assign_roles, cell_quotas, sample_training_set, DesignSpec, RoleAssignment};
use actobj::inventory::{Instance, Inventory};
use actobj::simlearner::{
    generate_world, loss_and_grad, LinearHyper, LinearLearner, LinearModel, Memorizer,
    SynthWorldConfig,
};
use actobj::splits::{classify_test_type, generate_splits, TestType};
use actobj::trials::{aggregate, mean_and_half_width, run_one, run_trials, Tally, TrialResult};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn densify_contract() -> Result<(), String> {
    let cfg = DensifyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonempty = 0;
    for case in 0..500 {
        let (r, c) = (rng.random_range(1..8), rng.random_range(1..20));
        let counts: Vec<Vec<usize>> = (0..r)
            .map(|_| {
                (0..c)
                    .map(|_| match rng.random_range(0..3) {
                        0 => rng.random_range(0..10),
                        1 => rng.random_range(10..40),
                        _ => rng.random_range(15..120),
                    })
                    .collect()
            })
            .collect();
        let m = CoocMatrix::from_counts(labels("a", r), labels("o", c), &counts);
        let Ok((out, _)) = densify(&m, &cfg) else {
            continue;
        };
        nonempty += 1;
        ensure(out.counts().iter().flatten().all(|&v| v >= 10), || {
            format!("case {case}: cell below 10")
        })?;
        for (i, a) in out.actions.iter().enumerate() {
            for (j, o) in out.objects.iter().enumerate() {
                let (si, sj) = (
                    m.action_index(a)
                        .ok_or(format!("case {case}: new action {a}"))?,
                    m.object_index(o)
                        .ok_or(format!("case {case}: new object {o}"))?,
                );
                ensure(out.cell(i, j) == m.cell(si, sj), || {
                    format!("case {case}: cell ({a},{o}) changed")
                })?;
            }
        }
        let (again, log) =
            densify(&out, &cfg).map_err(|e| format!("case {case}: rerun failed: {e}"))?;
        ensure(again == out && log.is_empty(), || {
            format!("case {case}: not idempotent")
        })?;
    }
    ensure(nonempty > 50, || {
        format!("only {nonempty} nonempty outputs")
    })?;

    let fixed: Vec<Vec<usize>> = (0..5)
        .map(|i| (0..30).map(|j| 20 + (i * 7 + j * 3) % 40).collect())
        .collect();
    let m = CoocMatrix::from_counts(labels("a", 5), labels("o", 30), &fixed);
    let (out, log) = densify(&m, &cfg).map_err(|e| e.to_string())?;
    ensure(out == m && log.is_empty(), || {
        "5x30 fixed point was modified".into()
    })
}

fn quota_arithmetic() -> Result<(), String> {
    let spec = DesignSpec {
        num_common: 4,
        num_unique_per_action: 0,
        total_train: 375,
        ..DesignSpec::default()
    };
    let q = cell_quotas(&spec, 5);
    for row in &q {
        ensure(row.iter().sum::<usize>() == 75, || {
            format!("action total {row:?}")
        })?;
        let mut sorted = row.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        ensure(sorted == [19, 19, 19, 18], || {
            format!("cell quotas {row:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5000 {
        let a = rng.random_range(1..12);
        let c = rng.random_range(0..6);
        let u = rng.random_range(if c == 0 { 1 } else { 0 }..6);
        let n = rng.random_range(0..2000);
        let spec = DesignSpec {
            num_common: c,
            num_unique_per_action: u,
            total_train: n,
            ..DesignSpec::default()
        };
        let q = cell_quotas(&spec, a);
        let totals: Vec<usize> = q.iter().map(|r| r.iter().sum()).collect();
        ensure(totals.iter().sum::<usize>() == n, || {
            format!("(c={c},u={u},N={n},A={a}) total not conserved")
        })?;
        let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
        ensure(spread(&totals) <= 1, || {
            format!("(c={c},u={u},N={n},A={a}) action totals {totals:?}")
        })?;
        let cells: Vec<usize> = q.iter().flatten().copied().collect();
        ensure(spread(&cells) <= 1, || {
            format!("(c={c},u={u},N={n},A={a}) cells unbalanced")
        })?;
    }
    Ok(())
}

fn split_soundness() -> Result<(), String> {
    let (inv, _) = generate_world(&SynthWorldConfig::default()).map_err(|e| e.to_string())?;
    let m = build_cooc(&inv).map_err(|e| e.to_string())?;
    let digest = inv.digest();
    let pair: HashMap<&str, (&str, &str)> = inv
        .instances
        .iter()
        .map(|i| (i.id.as_str(), (i.action.as_str(), i.object.as_str())))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for design in 0..100 {
        let na = rng.random_range(2..=5);
        let mut actions = m.actions.clone();
        for k in (1..actions.len()).rev() {
            actions.swap(k, rng.random_range(0..=k));
        }
        actions.truncate(na);
        let u = rng.random_range(0..=20 / na);
        let c = rng.random_range(if u == 0 { 1 } else { 0 }..=(20 - u * na).min(4));
        let n = rng.random_range(10..=375.min(80 * na * (c + u)));
        let spec = DesignSpec {
            num_common: c,
            num_unique_per_action: u,
            total_train: n,
            actions,
            seed: rng.random(),
            ..DesignSpec::default()
        };
        let tag = format!("design {design} (c={c},u={u},N={n},A={na})");
        let roles = assign_roles(&m, &spec).map_err(|e| format!("{tag}: {e}"))?;
        let sample = sample_training_set(&m, &roles, &spec).map_err(|e| format!("{tag}: {e}"))?;
        let manifest = generate_splits(&m, &roles, &sample, &spec, &digest)
            .map_err(|e| format!("{tag}: {e}"))?;

        let train: HashSet<&str> = manifest.train.iter().map(String::as_str).collect();
        let val: HashSet<&str> = manifest.val.iter().map(String::as_str).collect();
        let test: HashSet<&str> = manifest.test.iter().map(|t| t.id.as_str()).collect();
        ensure(
            train.len() == manifest.train.len() && train.len() == n,
            || format!("{tag}: train size"),
        )?;
        ensure(
            val.len() == manifest.val.len() && test.len() == manifest.test.len(),
            || format!("{tag}: duplicate ids"),
        )?;
        ensure(
            train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test),
            || format!("{tag}: overlap"),
        )?;

        for id in &train {
            let (a, o) = pair[id];
            let t = classify_test_type(a, o, &roles).map_err(|e| format!("{tag}: {e}"))?;
            ensure(
                !matches!(t, TestType::UniqueOther | TestType::Unseen),
                || format!("{tag}: {t} pair ({a},{o}) in train"),
            )?;
        }
        for item in &manifest.test {
            let (a, o) = pair[item.id.as_str()];
            let t = classify_test_type(a, o, &roles).map_err(|e| format!("{tag}: {e}"))?;
            ensure(t == item.test_type, || {
                format!("{tag}: {} typed {} but is {t}", item.id, item.test_type)
            })?;
        }

        let mut per_cell: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
        for id in &val {
            per_cell.entry(pair[id]).or_default().0 += 1;
        }
        for id in &test {
            per_cell.entry(pair[id]).or_default().1 += 1;
        }
        for ((a, o), (v, t)) in per_cell {
            let remaining = v + t;
            if roles.unseen_objects.iter().any(|u| u == o) {
                ensure(v == 0, || format!("{tag}: unseen cell ({a},{o}) in val"))?;
                continue;
            }
            let (i, j) = (m.action_index(a).unwrap(), m.object_index(o).unwrap());
            let trained = m
                .cell(i, j)
                .iter()
                .filter(|id| train.contains(id.as_str()))
                .count();
            ensure(remaining + trained == m.count(i, j), || {
                format!("{tag}: cell ({a},{o}) not fully split")
            })?;
            let share = v as f64 - remaining as f64 / 5.0;
            ensure(share.abs() <= 1.0, || {
                format!("{tag}: cell ({a},{o}) val {v} of {remaining}")
            })?;
        }
    }
    Ok(())
}

fn taxonomy_example() -> Result<(), String> {
    let roles = RoleAssignment {
        actions: vec!["cut".into(), "roast".into()],
        common_objects: vec![],
        unique_objects: BTreeMap::from([
            ("cut".into(), vec!["onion".into()]),
            ("roast".into(), vec!["chicken".into()]),
        ]),
        unseen_objects: vec!["apple".into()],
    };
    let expect = [
        ("roast", "onion", TestType::UniqueOther),
        ("cut", "onion", TestType::UniqueSelf),
        ("cut", "apple", TestType::Unseen),
        ("roast", "chicken", TestType::UniqueSelf),
        ("cut", "chicken", TestType::UniqueOther),
        ("roast", "apple", TestType::Unseen),
    ];
    for (a, o, want) in expect {
        let got = classify_test_type(a, o, &roles).map_err(|e| e.to_string())?;
        ensure(got == want, || {
            format!("({a},{o}) -> {got}, expected {want}")
        })?;
    }

    let mut instances = Vec::new();
    for a in ["cut", "roast"] {
        for o in ["onion", "chicken", "apple"] {
            for k in 0..20 {
                instances.push(Instance::new(format!("{a}-{o}-{k}"), a, o));
            }
        }
    }
    let inv = Inventory::from_instances(instances).map_err(|e| e.to_string())?;
    let m = build_cooc(&inv).map_err(|e| e.to_string())?;
    let spec = DesignSpec {
        num_common: 0,
        num_unique_per_action: 1,
        total_train: 20,
        unseen_reserve: Some(vec!["apple".into()]),
        ..DesignSpec::default()
    };
    let sample = sample_training_set(&m, &roles, &spec).map_err(|e| e.to_string())?;
    let manifest =
        generate_splits(&m, &roles, &sample, &spec, &inv.digest()).map_err(|e| e.to_string())?;
    let pair: HashMap<&str, (&str, &str)> = inv
        .instances
        .iter()
        .map(|i| (i.id.as_str(), (i.action.as_str(), i.object.as_str())))
        .collect();
    for id in &manifest.train {
        let p = pair[id.as_str()];
        ensure(p == ("cut", "onion") || p == ("roast", "chicken"), || {
            format!("train holds {p:?}")
        })?;
    }
    for item in &manifest.test {
        let (a, o) = pair[item.id.as_str()];
        let want = expect.iter().find(|e| e.0 == a && e.1 == o).unwrap().2;
        ensure(item.test_type == want, || {
            format!("manifest types ({a},{o}) as {}", item.test_type)
        })?;
    }
    Ok(())
}

fn memorizer_oracle() -> Result<(), String> {
    let (inv, _) = generate_world(&SynthWorldConfig::default()).map_err(|e| e.to_string())?;
    let m = build_cooc(&inv).map_err(|e| e.to_string())?;
    let digest = inv.digest();
    for u in 1..=4 {
        for seed in 0..20 {
            let spec = DesignSpec {
                num_common: 0,
                num_unique_per_action: u,
                seed,
                ..DesignSpec::default()
            };
            let (_, r) = run_one(&inv, &m, &spec, &Memorizer, None, &digest)
                .map_err(|e| format!("u={u} seed={seed}: {e}"))?;
            let acc = |t| {
                r.accuracy(t)
                    .ok_or(format!("u={u} seed={seed}: no {t} items"))
            };
            let (us, uo, un) = (
                acc(TestType::UniqueSelf)?,
                acc(TestType::UniqueOther)?,
                acc(TestType::Unseen)?,
            );
            ensure(us == 1.0 && uo == 0.0 && un == 0.2, || {
                format!("u={u} seed={seed}: unique_self {us}, unique_other {uo}, unseen {un}")
            })?;
        }
    }
    Ok(())
}

fn common_object_trend() -> Result<(), String> {
    let (inv, features) =
        generate_world(&SynthWorldConfig::default()).map_err(|e| e.to_string())?;
    let m = build_cooc(&inv).map_err(|e| e.to_string())?;
    let learner = LinearLearner {
        hyper: LinearHyper::default(),
    };
    let unseen = |c: usize| -> Result<f64, String> {
        let spec = DesignSpec {
            num_common: c,
            ..DesignSpec::default()
        };
        let (report, _) = run_trials(&inv, &m, &spec, &learner, Some(&features), 10)
            .map_err(|e| e.to_string())?;
        report
            .types
            .get(&TestType::Unseen)
            .map(|s| s.mean)
            .ok_or("no unseen items".into())
    };
    let (c1, c3) = (unseen(1)?, unseen(3)?);
    println!("    unseen accuracy: c=1 {c1:.4}, c=3 {c3:.4}");
    ensure(c3 - c1 > 0.0, || {
        format!("c=3 {c3} does not exceed c=1 {c1}")
    })
}

fn ci_aggregation() -> Result<(), String> {
    let (mean, hw) = mean_and_half_width(&[1.0, 0.0]);
    let hw = hw.ok_or("no half-width for two trials")?;
    ensure(
        (mean - 0.5).abs() < 1e-3 && (hw - 6.353).abs() < 1e-3,
        || format!("mean {mean}, half-width {hw}"),
    )?;

    let trial = |seed, correct| TrialResult {
        trial_seed: seed,
        tallies: BTreeMap::from([(TestType::Unseen, Tally { correct, total: 1 })]),
    };
    let report = aggregate(&[trial(0, 1), trial(1, 0)]).map_err(|e| e.to_string())?;
    let s = report.types[&TestType::Unseen];
    ensure(
        (s.mean - 0.5).abs() < 1e-3 && (s.half_width_95.unwrap() - 6.353).abs() < 1e-3,
        || format!("aggregate {s:?}"),
    )?;

    let (_, zero) = mean_and_half_width(&[0.7; 6]);
    ensure(zero == Some(0.0), || {
        format!("zero-variance half-width {zero:?}")
    })
}

fn gradient_check() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, dim, classes) = (10, 6, 4);
    let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let model = LinearModel {
        weights: Array2::from_shape_fn((classes, dim), |_| rng.random_range(-0.5..0.5)),
        bias: Array1::from_shape_fn(classes, |_| rng.random_range(-0.5..0.5)),
    };
    let (_, gw, gb) = loss_and_grad(&model, &x, &y);
    let h = 1e-5;
    let rel = |analytic: f64, numeric: f64| {
        (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
    };
    let mut worst: f64 = 0.0;
    for k in 0..classes {
        for d in 0..dim {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.weights[[k, d]] += h;
            minus.weights[[k, d]] -= h;
            let numeric =
                (loss_and_grad(&plus, &x, &y).0 - loss_and_grad(&minus, &x, &y).0) / (2.0 * h);
            worst = worst.max(rel(gw[[k, d]], numeric));
        }
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.bias[k] += h;
        minus.bias[k] -= h;
        let numeric =
            (loss_and_grad(&plus, &x, &y).0 - loss_and_grad(&minus, &x, &y).0) / (2.0 * h);
        worst = worst.max(rel(gb[k], numeric));
    }
    println!("    worst relative error {worst:.2e}");
    ensure(worst < 1e-4, || format!("relative error {worst}"))
}

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_actobj"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        String::from_utf8_lossy(&status.stderr).into_owned()
    })
}

fn determinism() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "trials = 4\nlearner = \"linear\"\n\n[world]\ninstances_per_cell = 30\nseed = 9\n\n[design]\nnum_common = 2\nnum_unique_per_action = 1\ntotal_train = 150\nseed = 21\n\n[linear]\nepochs = 60\n",
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli(&config, &a)?;
    run_cli(&config, &b)?;
    for name in ["report.json", "report.csv", "trials.csv"] {
        let (x, y) = (fs::read(a.join(name)), fs::read(b.join(name)));
        let (x, y) = (
            x.map_err(|e| format!("{name}: {e}"))?,
            y.map_err(|e| format!("{name}: {e}"))?,
        );
        ensure(!x.is_empty() && x == y, || {
            format!("{name} differs between runs")
        })?;
    }
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [(&str, Check, Duration); 9] = [
        ("densify contract", densify_contract, Duration::from_secs(1)),
        ("quota arithmetic", quota_arithmetic, Duration::from_secs(1)),
        ("split soundness", split_soundness, Duration::from_secs(10)),
        ("test-type taxonomy", taxonomy_example, Duration::MAX),
        (
            "memorizer oracle",
            memorizer_oracle,
            Duration::from_secs(10),
        ),
        (
            "common-object trend",
            common_object_trend,
            Duration::from_secs(120),
        ),
        ("ci aggregation", ci_aggregation, Duration::MAX),
        ("gradient check", gradient_check, Duration::MAX),
        ("determinism", determinism, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome =
            panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            ensure(elapsed <= budget, || {
                format!("took {elapsed:.2?}, budget {budget:.0?}")
            })
        });
        match outcome {
            Ok(()) => println!("PASS {name} ({elapsed:.2?})"),
            Err(e) => {
                println!("FAIL {name} ({elapsed:.2?}): {e}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

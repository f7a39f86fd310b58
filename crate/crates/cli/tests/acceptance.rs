//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p activeslice-cli --test acceptance` (add
//! `--release` for realistic timings). The process exits non-zero if any
//! criterion fails other than those listed in `KNOWN_RED`, which are still
//! executed and reported as FAIL.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use activeslice_core::corpus::{generate_synthetic, split, Dataset, FeatureMatrix, SliceVector, SynthConfig};
use activeslice_core::discovery::{run_discovery, Discovery, DiscoveryConfig, Oracle, OracleError, SimulatedOracle};
use activeslice_core::eval::{balanced_accuracy, labels_to_reach, Metric};
use activeslice_core::model::{
    mlp_gradient, mlp_loss, model_to_bytes, ClassifierSpec, Minibatch, MlpModel, TrainConfig,
};
use activeslice_core::query::{
    score_breaking_ties, score_entropy, score_least_confidence, select_top_b, DalOptions, QueryContext,
    Strategy, StrategySpec,
};
use activeslice_core::rng::{rng_from_seed, uniform_index, unit_f64, Rng};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, RngAlgorithm, TestRng, TestRunner};

/// Criteria expected to fail; see the README section on the sample-efficiency
/// target.
const KNOWN_RED: &[&str] = &["sample-efficiency"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Strategy scores vs scalar loops, top-b vs full sort.

fn random_distribution(rng: &mut Rng) -> Vec<f64> {
    let c = 2 + uniform_index(rng, 7);
    let mut raw: Vec<f64> = (0..c).map(|_| unit_f64(rng)).collect();
    // Some exact zeros and ties.
    if unit_f64(rng) < 0.2 {
        raw[0] = 0.0;
    }
    if unit_f64(rng) < 0.2 {
        raw[c - 1] = raw[0];
    }
    if raw.iter().all(|&v| v == 0.0) {
        raw[0] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn oracle_lc(row: &[f64]) -> f64 {
    let mut best = row[0];
    for &p in row {
        if p > best {
            best = p;
        }
    }
    1.0 - best
}

fn oracle_entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

fn oracle_bt(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    1.0 - (sorted[0] - sorted[1])
}

fn oracle_top_b(scores: &[f64], b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
    idx.truncate(b);
    idx
}

fn score_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(2024);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| random_distribution(&mut rng)).collect();
    let lc = score_least_confidence(&rows).unwrap();
    let en = score_entropy(&rows).unwrap();
    let bt = score_breaking_ties(&rows).unwrap();
    let mut worst = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        worst = worst
            .max((lc[i] - oracle_lc(row)).abs())
            .max((en[i] - oracle_entropy(row)).abs())
            .max((bt[i] - oracle_bt(row)).abs());
    }
    let mut top_ok = true;
    for scores in [&lc, &en, &bt] {
        for b in [1, 2, 7, 50, 333, 1000] {
            let got = select_top_b(scores, b).unwrap().indices;
            top_ok &= got == oracle_top_b(scores, b);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && top_ok && elapsed < Duration::from_secs(1),
        format!("max |score - oracle| = {worst:.2e}, top-b matches full sort: {top_ok}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------------------
// MLP gradients vs central finite differences.

fn finite_difference(model: &MlpModel, batch: &Minibatch<'_>, h: f64) -> Vec<f64> {
    let mut probe = model.clone();
    let n = model.n_params();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let orig = *model.params().nth(p).unwrap();
        *probe.params_mut().nth(p).unwrap() = orig + h;
        let up = mlp_loss(&probe, batch);
        *probe.params_mut().nth(p).unwrap() = orig - h;
        let down = mlp_loss(&probe, batch);
        *probe.params_mut().nth(p).unwrap() = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(99);
    let mut worst = 0.0f64;
    let mut archs = Vec::new();
    let mut params = 0;
    for arch in 0..8u64 {
        let d = 1 + uniform_index(&mut rng, 6);
        let depth = 1 + uniform_index(&mut rng, 3);
        let mut sizes = vec![d];
        sizes.extend((0..depth).map(|_| 1 + uniform_index(&mut rng, 6)));
        sizes.push(1);
        let m = 3 + uniform_index(&mut rng, 8);
        let vals: Vec<f32> = (0..m * d).map(|_| (unit_f64(&mut rng) * 4.0 - 2.0) as f32).collect();
        let dense = FeatureMatrix::dense(m, d, vals).unwrap();
        let x = if arch % 2 == 0 { dense } else { dense.to_sparse() };
        // Non-zero biases keep pre-activations off the ReLU kink, where
        // central differences are one-sided.
        let mut model = MlpModel::init(&sizes, arch).unwrap();
        for p in model.params_mut() {
            *p += unit_f64(&mut rng) - 0.5;
        }
        let rows: Vec<usize> = (0..m).collect();
        let targets: Vec<f64> = (0..m).map(|_| uniform_index(&mut rng, 2) as f64).collect();
        let weights: Vec<f64> = (0..m).map(|_| 0.25 + unit_f64(&mut rng)).collect();
        let batch = Minibatch {
            features: &x,
            rows: &rows,
            targets: &targets,
            weights: if arch % 3 == 0 { None } else { Some(&weights) },
            l2: if arch % 2 == 0 { 0.0 } else { 0.05 },
        };
        let g = mlp_gradient(&model, &batch);
        let analytic: Vec<f64> = g.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect();
        let numeric = finite_difference(&model, &batch, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            // Relative error, with an absolute floor for gradients that are
            // zero up to rounding.
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
            worst = worst.max(err);
        }
        params += analytic.len();
        archs.push(format!("{sizes:?}"));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!(
            "{} architectures ({}), {params} parameters, max relative error {worst:.2e}, {elapsed:.2?}",
            archs.len(),
            archs.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Loop conservation, budget and step/apply replay.

struct CountingOracle {
    inner: SimulatedOracle,
    answered: usize,
}

impl Oracle for CountingOracle {
    fn answer(&mut self, ids: &[&str]) -> Result<Vec<SliceVector>, OracleError> {
        self.answered += ids.len();
        self.inner.answer(ids)
    }
}

fn loop_dataset(n: usize, k: usize, seed: u64) -> (Dataset, Dataset) {
    let mut cfg = SynthConfig::uniform(n, 3, k, 0.3, 5.0, seed);
    cfg.noise = 0.05;
    let ds = generate_synthetic(&cfg).unwrap();
    let sp = split(&ds, 0.25, seed).unwrap();
    (sp.train, sp.test)
}

fn strategy_by_index(i: usize) -> Strategy {
    match i {
        0 => Strategy::LeastConfidence,
        1 => Strategy::PredictionEntropy,
        2 => Strategy::BreakingTies,
        3 => Strategy::Random,
        4 => Strategy::EmbeddingKmeans { max_iterations: 10 },
        5 => Strategy::LightweightCoreset,
        _ => Strategy::Discriminative(DalOptions {
            rounds: 2,
            ..DalOptions::default()
        }),
    }
}

fn loop_case(
    (n, k, seed_size, b, budget, strategy, mlp, seed): (usize, usize, usize, usize, usize, usize, bool, u64),
) -> Result<(), TestCaseError> {
    let (train, test) = loop_dataset(n, k, seed % 997);
    let classifier = if mlp {
        ClassifierSpec::Mlp {
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::mlp_default()
            },
            hidden: vec![4],
        }
    } else {
        ClassifierSpec::Svm {
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::svm_default()
            },
        }
    };
    let cfg = DiscoveryConfig {
        strategy: StrategySpec {
            strategy: strategy_by_index(strategy),
            seed: seed >> 32,
        },
        classifier,
        seed_size,
        batch_size: b,
        budget,
        eval_every_round: true,
        seed,
    };
    let mut oracle = CountingOracle {
        inner: SimulatedOracle::from_dataset(&train).unwrap(),
        answered: 0,
    };
    let reference = run_discovery(&train, &test, &cfg, &mut oracle).unwrap();

    // Drive the same run through the re-entrant halves, answering in
    // reverse order to make sure order does not matter.
    let total = train.len();
    let mut run = Discovery::start(&train, &test, cfg.clone()).unwrap();
    let pool0 = run.state().unannotated.len();
    let budget0 = run.state().budget_remaining;
    while !run.is_complete() {
        let rows = run.next_batch(&train).unwrap().to_vec();
        let s = run.state();
        prop_assert_eq!(s.annotated.len() + s.unannotated.len(), total);
        let answers: Vec<(String, SliceVector)> = rows
            .iter()
            .rev()
            .map(|&r| (train.records[r].id.clone(), train.records[r].s.clone().unwrap()))
            .collect();
        let before = s.budget_remaining;
        run.apply(&train, &test, &answers).unwrap();
        let s = run.state();
        prop_assert_eq!(s.budget_remaining, before - rows.len());
        prop_assert_eq!(s.annotated.len() + s.unannotated.len(), total);
        prop_assert_eq!(s.oracle_answers(), budget0 - s.budget_remaining);
    }
    let mut seen: Vec<usize> = run.state().annotated_rows();
    seen.extend(&run.state().unannotated);
    seen.sort_unstable();
    prop_assert_eq!(seen, (0..total).collect::<Vec<_>>());
    prop_assert_eq!(oracle.answered, budget.min(pool0));
    let replay = run.into_result();
    prop_assert_eq!(replay.oracle_answers, budget.min(pool0));
    prop_assert_eq!(replay.to_json(), reference.to_json());
    prop_assert_eq!(
        model_to_bytes(replay.model.as_ref().unwrap()),
        model_to_bytes(reference.model.as_ref().unwrap())
    );
    let labels: Vec<usize> = replay.curve.points.iter().map(|p| p.labels_used).collect();
    prop_assert!(labels.windows(2).all(|w| w[0] < w[1]));
    Ok(())
}

fn loop_properties() -> Outcome {
    let start = Instant::now();
    let cases = 128;
    let mut runner = TestRunner::new_with_rng(
        ProptestConfig {
            cases,
            failure_persistence: None,
            ..ProptestConfig::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (
        24usize..90,
        1usize..3,
        2usize..10,
        1usize..12,
        0usize..100,
        0usize..7,
        proptest::bool::weighted(0.2),
        any::<u64>(),
    );
    match runner.run(&strategy, loop_case) {
        Ok(()) => outcome(true, format!("{cases} randomized runs, all 7 strategies, SVM and MLP, {:.2?}", start.elapsed())),
        Err(e) => outcome(false, format!("{e}")),
    }
}

// ---------------------------------------------------------------------------
// Least confidence vs random sampling on noisy synthetic data.

fn sample_efficiency() -> Outcome {
    let start = Instant::now();
    let (k_budget, b, seed_size, target) = (600usize, 20usize, 20usize, 0.90);
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let mut synth = SynthConfig::uniform(5000, 32, 1, 0.2, 6.0, seed);
        synth.noise = 0.05;
        let ds = generate_synthetic(&synth).unwrap();
        let sp = split(&ds, 0.2, seed).unwrap();
        let pool = sp.train.len();
        let reach = |strategy: Strategy| {
            let cfg = DiscoveryConfig {
                strategy: strategy.into(),
                classifier: ClassifierSpec::default(),
                seed_size,
                batch_size: b,
                budget: k_budget,
                eval_every_round: true,
                seed,
            };
            let mut oracle = SimulatedOracle::from_dataset(&sp.train).unwrap();
            let r = run_discovery(&sp.train, &sp.test, &cfg, &mut oracle).unwrap();
            let series = r.curve.series(0, Metric::BalancedAccuracy);
            let best = series.iter().map(|p| p.1).fold(0.0, f64::max);
            (labels_to_reach(&series, target), best, r.labels_used)
        };
        let (lc, lc_best, _) = reach(Strategy::LeastConfidence);
        let (rnd, rnd_best, rnd_max) = reach(Strategy::Random);
        // A random run that never gets there needed more than it was given.
        let rnd_bound = rnd.unwrap_or(rnd_max + b);
        let ok = lc.is_some_and(|l| 2 * l <= rnd_bound && 10 * l <= pool);
        wins += ok as usize;
        // Balanced accuracy of the generating rule (slice cluster side of
        // the midpoint) on the noisy test labels: the best any classifier
        // can expect.
        let truth = sp.test.slice_column(0).unwrap();
        let rule: Vec<u8> = (0..sp.test.len())
            .map(|i| (sp.test.features.row(i).to_dense(32)[0] > 3.0) as u8)
            .collect();
        let ceiling = balanced_accuracy(&rule, &truth).unwrap();
        let show = |v: Option<usize>| v.map_or("never".to_string(), |l| l.to_string());
        parts.push(format!(
            "seed {seed}: LC {} (best {lc_best:.3}) vs random {} (best {rnd_best:.3}), ceiling {ceiling:.3} {}",
            show(lc),
            show(rnd),
            if ok { "ok" } else { "miss" }
        ));
    }
    outcome(
        wins >= 4,
        format!("{wins}/5 seeds meet LC <= 0.5x random and <= 10% of the pool, {:.2?}\n      {}", start.elapsed(), parts.join("\n      ")),
    )
}

// ---------------------------------------------------------------------------
// Uncertainty strategies agree on binary pools with batch size 1.

fn binary_agreement() -> Outcome {
    let mut rng = rng_from_seed(31337);
    let features = FeatureMatrix::dense(1, 1, vec![0.0]).unwrap();
    let mut disagreements = 0;
    let mut oracle_mismatch = 0;
    let pools = 1000;
    for _ in 0..pools {
        let m = 1 + uniform_index(&mut rng, 60);
        let mut p: Vec<f64> = Vec::with_capacity(m);
        for i in 0..m {
            let u = unit_f64(&mut rng);
            let v = if i > 0 && u < 0.15 {
                p[uniform_index(&mut rng, i)]
            } else if u < 0.2 {
                [0.0, 0.5, 1.0][uniform_index(&mut rng, 3)]
            } else {
                unit_f64(&mut rng)
            };
            p.push(v);
        }
        let pool: Vec<usize> = (0..m).collect();
        let columns = vec![p.clone()];
        let pick = |s: Strategy| {
            let ctx = QueryContext {
                features: &features,
                labeled: &[],
                pool: &pool,
                probabilities: Some(&columns),
                batch_size: 1,
                seed: 0,
            };
            StrategySpec::from(s).select(&ctx).unwrap().indices[0]
        };
        let picks = [
            pick(Strategy::LeastConfidence),
            pick(Strategy::PredictionEntropy),
            pick(Strategy::BreakingTies),
        ];
        if picks.iter().any(|&i| i != picks[0]) {
            disagreements += 1;
        }
        // Scalar oracle: closest to 0.5, lowest index on ties.
        let mut best = 0;
        for i in 1..m {
            if (p[i] - 0.5).abs() < (p[best] - 0.5).abs() {
                best = i;
            }
        }
        if (p[picks[0]] - 0.5).abs() != (p[best] - 0.5).abs() || picks[0] > best && p[picks[0]] == p[best] {
            oracle_mismatch += 1;
        }
    }
    outcome(
        disagreements == 0 && oracle_mismatch == 0,
        format!("{pools} pools: {disagreements} disagreements between LC/entropy/BT, {oracle_mismatch} mismatches with the scalar argmax"),
    )
}

// ---------------------------------------------------------------------------
// `run` and `compare` are byte-for-byte reproducible.

const DET_RUN: &str = r#"{
  "dataset": {"synthetic": {"n": 600, "d": 10, "slices": [{"prevalence": 0.15, "separation": 5}, {"prevalence": 0.3, "separation": 4}], "noise": 0.03, "seed": 12}},
  "normalize": "zscore_col",
  "discovery": {"strategy": {"kind": "prediction_entropy"}, "seed_size": 12, "batch_size": 15, "budget": 75, "seed": 3},
  "seeds": [3, 4]
}"#;

const DET_COMPARE: &str = r#"{
  "dataset": {"synthetic": {"n": 400, "d": 6, "slices": [{"prevalence": 0.2, "separation": 5}], "noise": 0.05, "seed": 21}},
  "grid": [
    {"strategy": {"kind": "least_confidence"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "prediction_entropy"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "breaking_ties"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "random"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "embedding_kmeans"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "lightweight_coreset"}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "discriminative", "rounds": 2}, "seed_size": 10, "batch_size": 10, "budget": 30},
    {"strategy": {"kind": "least_confidence"}, "classifier": {"kind": "mlp", "hidden": [8], "train": {"epochs": 20, "learning_rate": 0.01, "l2": 0.0001, "batch_size": 16, "class_weighting": "balanced", "seed": 0}}, "seed_size": 10, "batch_size": 10, "budget": 30}
  ],
  "seeds": [1, 2, 3]
}"#;

fn invoke(args: &[&str]) -> Result<Vec<String>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_activeslice"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&o.stdout).lines().map(String::from).collect())
}

fn files_of(dir: &Path) -> HashMap<String, Vec<u8>> {
    let mut out = HashMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run_cfg = tmp.path().join("run.json");
    let cmp_cfg = tmp.path().join("compare.json");
    fs::write(&run_cfg, DET_RUN).unwrap();
    fs::write(&cmp_cfg, DET_COMPARE).unwrap();
    let mut compared = 0;
    let mut mismatched = Vec::new();
    let mut attempt = |cmd: &str, cfg: &Path, jobs: [&str; 2]| -> Result<(), String> {
        let mut dirs = Vec::new();
        for (i, j) in jobs.iter().enumerate() {
            let out = tmp.path().join(format!("{cmd}-{i}"));
            let lines = invoke(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", j])?;
            dirs.push(lines);
        }
        if dirs[0].len() != dirs[1].len() {
            return Err(format!("{cmd}: different number of outputs"));
        }
        for (a, b) in dirs[0].iter().zip(&dirs[1]) {
            let (fa, fb) = (files_of(Path::new(a)), files_of(Path::new(b)));
            if Path::new(a).file_name() != Path::new(b).file_name() {
                mismatched.push(format!("{cmd}: run ids differ"));
            }
            for (name, bytes) in &fa {
                compared += 1;
                if fb.get(name) != Some(bytes) {
                    mismatched.push(format!("{cmd}/{name}"));
                }
            }
        }
        Ok(())
    };
    if let Err(e) = attempt("run", &run_cfg, ["1", "2"]) {
        return outcome(false, format!("run failed: {e}"));
    }
    if let Err(e) = attempt("compare", &cmp_cfg, ["1", "4"]) {
        return outcome(false, format!("compare failed: {e}"));
    }
    outcome(
        mismatched.is_empty() && compared > 0,
        format!("{compared} files compared across repeated run/compare invocations (1 vs several jobs), mismatches: {mismatched:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("score-oracles", score_oracles),
        ("gradient-check", gradient_check),
        ("loop-properties", loop_properties),
        ("sample-efficiency", sample_efficiency),
        ("binary-agreement", binary_agreement),
        ("determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    println!("acceptance: {} criteria", criteria.len());
    for (name, check) in criteria {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let known = !o.pass && KNOWN_RED.contains(&name);
        println!("[{tag}] {name}: {}{}", o.detail, if known { "\n      (known failure, see README)" } else { "" });
        if !o.pass && !known {
            unexpected.push(name);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures");
    } else {
        println!("acceptance: unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

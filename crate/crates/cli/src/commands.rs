use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use activeslice_core::corpus::{generate_synthetic, save_dataset, CorpusError, Dataset, SynthConfig};
use activeslice_core::discovery::{Discovery, DiscoveryConfig, RunResult};
use activeslice_core::eval::{run_grid, ComparisonReport};
use activeslice_core::experiment::ExperimentConfig;
use activeslice_core::model::save_model;
use activeslice_server::{router, AppState};
use anyhow::{anyhow, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Failure, GenerateArgs, RunArgs, ServeArgs};

type Outcome<T = ()> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::InvalidConfig(_) => usage(e),
        other => runtime(other),
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)?;
    serde_json::from_str(&text).map_err(|e| usage(anyhow!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON.
fn content_id<T: Serialize>(value: &T) -> String {
    let digest = Sha256::digest(serde_json::to_vec(value).expect("serializable"));
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn generate(args: &GenerateArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(path) => read_json::<SynthConfig>(path)?,
        None => {
            let (Some(n), Some(d)) = (args.n, args.d) else {
                return Err(usage(anyhow!("--n and --d are required without --config")));
            };
            SynthConfig::uniform(n, d, args.k.unwrap_or(1), 0.2, 10.0, 0)
        }
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(d) = args.d {
        cfg.d = d;
    }
    if let Some(k) = args.k {
        if k != cfg.slices.len() {
            let template = cfg.slices.first().cloned();
            let fresh = SynthConfig::uniform(cfg.n, cfg.d, k, 0.2, 10.0, 0).slices;
            cfg.slices = fresh
                .into_iter()
                .map(|s| match &template {
                    Some(t) => activeslice_core::corpus::SliceSpec { name: None, center: None, ..t.clone() },
                    None => s,
                })
                .collect();
        }
    }
    for s in &mut cfg.slices {
        if let Some(p) = args.prevalence {
            s.prevalence = p;
        }
        if let Some(sep) = args.separation {
            s.separation = sep;
        }
    }
    if let Some(v) = args.spread {
        cfg.spread = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;
    let ds = generate_synthetic(&cfg).map_err(corpus_failure)?;
    let manifest = save_dataset(&ds, &args.out).map_err(runtime)?;
    println!("{}", manifest.display());
    Ok(())
}

struct Loaded {
    exp: ExperimentConfig,
    out: PathBuf,
    train: Dataset,
    test: Dataset,
}

/// Reads the experiment file, applies flag overrides and prepares the data.
fn load(config: &Path, out: Option<&Path>, seeds: &[u64]) -> Outcome<Loaded> {
    let mut exp: ExperimentConfig = read_json(config)?;
    let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
    if !seeds.is_empty() {
        exp.seeds = seeds.to_vec();
    }
    let out = match out {
        Some(o) => o.to_path_buf(),
        None if exp.out.is_absolute() => exp.out.clone(),
        None => base.join(&exp.out),
    };
    if let Some(d) = &exp.discovery {
        d.validate().map_err(usage)?;
    }
    for g in &exp.grid {
        g.validate().map_err(usage)?;
    }
    let (train, test) = exp.prepare(&base).map_err(corpus_failure)?;
    Ok(Loaded { exp, out, train, test })
}

/// The parts of an experiment that determine its data.
fn data_identity(exp: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        discovery: None,
        grid: Vec::new(),
        seeds: Vec::new(),
        out: PathBuf::new(),
        ..exp.clone()
    }
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    experiment: &'a ExperimentConfig,
    run: &'a DiscoveryConfig,
}

fn write_run(dir: &Path, exp: &ExperimentConfig, result: &RunResult) -> Outcome {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)?;
    let echo = ExperimentConfig {
        discovery: Some(result.config.clone()),
        grid: Vec::new(),
        seeds: vec![result.config.seed],
        ..exp.clone()
    };
    write(&dir.join("config.json"), pretty(&echo))?;
    write(&dir.join("result.json"), result.to_json())?;
    write(&dir.join("curve.csv"), result.curve.to_csv())?;
    if let Some(model) = &result.model {
        save_model(model, dir.join("model.bin")).map_err(runtime)?;
    }
    Ok(())
}

pub fn run(args: &RunArgs) -> Outcome {
    let Loaded { exp, out, train, test } = load(&args.config, args.out.as_deref(), &args.seeds)?;
    let base = exp
        .discovery
        .clone()
        .ok_or_else(|| usage(anyhow!("{}: no \"discovery\" block", args.config.display())))?;
    let seeds: Vec<u64> = exp.runs().iter().map(|c| c.seed).collect();
    let runs = run_grid(&train, &test, std::slice::from_ref(&base), &seeds, args.jobs).map_err(runtime)?;
    let identity = data_identity(&exp);
    for result in runs.into_iter().flatten() {
        let id = content_id(&RunIdentity {
            experiment: &identity,
            run: &result.config,
        });
        let dir = out.join(&id);
        write_run(&dir, &exp, &result)?;
        println!("{}", dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareIdentity<'a> {
    experiment: &'a ExperimentConfig,
    grid: &'a [DiscoveryConfig],
    seeds: &'a [u64],
}

pub fn compare(args: &RunArgs) -> Outcome {
    let Loaded { exp, out, train, test } = load(&args.config, args.out.as_deref(), &args.seeds)?;
    let specs: Vec<DiscoveryConfig> = if exp.grid.is_empty() {
        exp.discovery.iter().cloned().collect()
    } else {
        exp.grid.clone()
    };
    if specs.is_empty() {
        return Err(usage(anyhow!(
            "{}: no \"grid\" or \"discovery\" configurations",
            args.config.display()
        )));
    }
    let seeds = exp.grid_seeds();
    let runs = run_grid(&train, &test, &specs, &seeds, args.jobs).map_err(runtime)?;
    let report = ComparisonReport::from_runs(&train.provenance, &specs, &seeds, &runs);

    let identity = data_identity(&exp);
    let dir = out.join(content_id(&CompareIdentity {
        experiment: &identity,
        grid: &specs,
        seeds: &seeds,
    }));
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)?;
    let echo = ExperimentConfig {
        grid: specs.clone(),
        seeds: seeds.clone(),
        discovery: None,
        ..exp.clone()
    };
    write(&dir.join("config.json"), pretty(&echo))?;
    write(&dir.join("report.json"), report.to_json())?;
    write(&dir.join("report.md"), report.to_markdown())?;
    let mut csv = String::from("cell,strategy,classifier,seed,round,labels_used,slice,accuracy,balanced_accuracy\n");
    for (cell, (spec, spec_runs)) in specs.iter().zip(&runs).enumerate() {
        for r in spec_runs {
            for line in r.curve.to_csv().lines().skip(1) {
                csv.push_str(&format!(
                    "{cell},{},{},{},{line}\n",
                    spec.strategy.strategy.name(),
                    spec.classifier.name(),
                    r.config.seed
                ));
            }
        }
    }
    write(&dir.join("curves.csv"), csv)?;
    println!("{}", dir.display());
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Outcome {
    let Loaded { exp, out, train, test } = load(&args.config, None, &[])?;
    if let Some(cfg) = &exp.discovery {
        // Refuse to start on a default that cannot open a session.
        Discovery::start(&train, &test, cfg.clone()).map_err(usage)?;
    }
    let state_dir = args.state_dir.clone().unwrap_or_else(|| out.join("sessions"));
    let app: Arc<AppState> =
        AppState::open(train, test, exp.discovery.clone(), &state_dir).map_err(|e| runtime(anyhow!(e)))?;
    let routes = router(app, args.static_dir.as_deref());
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))
            .map_err(runtime)?;
        let local = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{local} (sessions in {})", state_dir.display());
        activeslice_server::serve(listener, routes, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(runtime)
    })
}

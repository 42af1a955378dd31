use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use relmatch::config::{parse_text, ConfigError, RunConfig};
use relmatch::datagen::{generate, read_csv, write_csv, Dataset};
use relmatch::model::write_checkpoint;
use relmatch::trainer::{train as train_loop, MetricsLog};
use relmatch::MceError;
use serde::Serialize;

use crate::Overrides;

pub enum Failure {
    Config(String),
    Numerical(String),
    Checks(usize),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Checks(_) => 4,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<MceError> for Failure {
    fn from(e: MceError) -> Self {
        match e {
            MceError::Io(m) => Failure::Io(m),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Everything needed to reproduce a run with the same binary.
#[derive(Serialize)]
struct RunManifest<'a> {
    config_path: Option<String>,
    data_path: Option<String>,
    out_dir: String,
    git_describe: String,
    started_unix: u64,
    finished_unix: Option<u64>,
    config: &'a serde_json::Value,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Resolves preset < file < flags.
pub fn resolve(o: &Overrides) -> Outcome<RunConfig> {
    let mut layers = Vec::new();
    if let Some(path) = &o.config {
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        layers.push(parse_text(&text)?);
    }
    let mut flags = BTreeMap::new();
    for kv in &o.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Failure::Config(format!("--set expects key=value, got {kv:?}")))?;
        flags.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.insert(k.to_string(), v);
        }
    };
    put("preset", o.preset.clone());
    put("seed", o.seed.map(|s| s.to_string()));
    put("steps", o.steps.map(|s| s.to_string()));
    put("log_backend", o.log_backend.clone());
    layers.push(flags);
    Ok(RunConfig::resolve(&layers)?)
}

fn write_json(path: &Path, v: &impl Serialize) -> Outcome {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

/// Runs one configuration into `out`, returning its metrics.
pub fn run_into(
    cfg: &RunConfig,
    out: &Path,
    config_path: Option<&Path>,
    data_path: Option<&Path>,
) -> Outcome<MetricsLog> {
    fs::create_dir_all(out)?;
    let snapshot = cfg.to_json();
    fs::write(out.join("config.txt"), cfg.to_text())?;
    let mut manifest = RunManifest {
        config_path: config_path.map(|p| p.display().to_string()),
        data_path: data_path.map(|p| p.display().to_string()),
        out_dir: out.display().to_string(),
        git_describe: git_describe(),
        started_unix: now(),
        finished_unix: None,
        config: &snapshot,
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let data: Dataset = match data_path {
        Some(p) => read_csv(File::open(p)?)?,
        None => generate(&cfg.data)?,
    };
    let (log, state) = train_loop(&cfg.train, &data)?;

    log.write_csv(BufWriter::new(File::create(out.join("metrics.csv"))?))?;
    let mut summary = BufWriter::new(File::create(out.join("summary.json"))?);
    log.write_summary(&mut summary, cfg.train.seed, &snapshot)?;
    writeln!(summary)?;
    write_checkpoint(BufWriter::new(File::create(out.join("model.ckpt"))?), &state.model, cfg.train.seed, state.step)?;
    manifest.finished_unix = Some(now());
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(log)
}

pub fn train(o: &Overrides, out: Option<PathBuf>, data: Option<&Path>) -> Outcome {
    let cfg = resolve(o)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.preset, cfg.train.seed)));
    let log = run_into(&cfg, &out, o.config.as_deref(), data)?;
    println!("step     lr        ce_sup    ce_unsup  mce       pl_rate  pl_acc   test_acc");
    for r in &log.rows {
        println!(
            "{:<8} {:<9.5} {:<9.5} {:<9.5} {:<9.5} {:<8.4} {:<8.4} {:.4}",
            r.step, r.lr, r.ce_sup, r.ce_unsup, r.mce, r.pl_rate, r.pl_acc, r.test_acc
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn verify(seed: u64) -> Outcome {
    let checks = relmatch_verify::suite::full_suite(seed);
    let ok = relmatch_verify::report(&checks);
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", checks.len(), failed);
    if ok {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

pub fn goldens() -> Outcome {
    let checks = relmatch_verify::goldens::check_all();
    let failed = checks.iter().filter(|c| !c.passed).count();
    relmatch_verify::report(&checks);
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

pub const ABLATION_BACKENDS: [&str; 2] = ["taylor3", "elementwise"];

pub fn ablate(o: &Overrides, seeds: u64, out: &Path) -> Outcome {
    if o.log_backend.is_some() {
        return Err(Failure::Config("the ablation chooses log backends itself".into()));
    }
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for backend in ABLATION_BACKENDS {
        for seed in 0..seeds {
            let mut o = o.clone();
            o.seed = Some(seed);
            o.log_backend = Some(backend.to_string());
            let cfg = resolve(&o)?;
            let dir = out.join(backend).join(format!("seed{seed}"));
            let log = run_into(&cfg, &dir, o.config.as_deref(), None)?;
            let last = log.rows.last().copied();
            let best = log.best().map_or(0.0, |r| r.test_acc);
            println!("{backend:<12} seed {seed}: final test acc {:.4}", log.final_test_acc());
            rows.push((backend, seed, log.final_test_acc(), best, last));
        }
    }
    let mut csv = String::from("backend,seed,final_test_acc,best_test_acc,final_pl_rate,final_pl_acc\n");
    for (b, s, fin, best, last) in &rows {
        let (rate, acc) = last.map_or((0.0, 0.0), |r| (r.pl_rate, r.pl_acc));
        csv.push_str(&format!("{b},{s},{fin:?},{best:?},{rate:?},{acc:?}\n"));
    }
    fs::write(out.join("ablation.csv"), csv)?;
    let mean = |b: &str| {
        let v: Vec<f64> = rows.iter().filter(|r| r.0 == b).map(|r| r.2).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let (t, e) = (mean("taylor3"), mean("elementwise"));
    println!("mean final test acc: taylor3 {t:.4}, elementwise {e:.4} ({:+.4})", t - e);
    println!(
        "observation: {} ahead on this data",
        if t > e {
            "taylor3"
        } else if e > t {
            "elementwise"
        } else {
            "neither backend"
        }
    );
    println!("wrote {}", out.join("ablation.csv").display());
    Ok(())
}

pub fn export_data(o: &Overrides, out: &Path) -> Outcome {
    let cfg = resolve(o)?;
    let data = generate(&cfg.data)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_csv(BufWriter::new(File::create(out)?), &data)?;
    Ok(())
}

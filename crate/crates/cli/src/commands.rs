use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dclse_core::experiment::pooling_comparison;
use dclse_core::gradcheck::{gradcheck_suite, GRADCHECK_TOLERANCE};
use dclse_core::synth::{generate, read_dataset, write_dataset};
use dclse_core::train::{
    encode_dataset, evaluate, kfold_split, predict_subject, train as run_training, write_history_csv,
};
use dclse_core::volume::{decode_dase, decode_pfm, decode_pgm, load_volume, save_pfm};
use dclse_core::{encode_volume, Error, PoolingMethod, Result, RunConfig, SynthSpec, TrainedModel};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::manifest::Manifest;

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Write {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn encode(input: &Path, method: PoolingMethod, seed: Option<u64>, out: &Path) -> Result<()> {
    let volume = load_volume(input)?;
    let image = encode_volume(&volume.normalize(), method, seed)?;
    let dir = parent_dir(out);
    create_dir(&dir)?;
    save_pfm(&image.payload, out)?;
    let sidecar = out.with_extension("json");
    write_json(&sidecar, &image.sidecar())?;
    Manifest::new("encode", json!({ "method": method, "seed": seed }))?
        .input(input)?
        .seeds(json!({ "encode": seed }))
        .output(out.display().to_string())
        .output(sidecar.display().to_string())
        .write(&dir)
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: SynthSpec = read_json(spec_path)?;
    let (volumes, labels) = generate(&spec)?;
    write_dataset(out, &volumes, &labels, Some(&spec))?;
    Manifest::new("synth", &spec)?
        .input(spec_path)?
        .seeds(json!({ "synth": spec.seed }))
        .output(dclse_core::synth::INDEX_FILE)
        .write(out)
}

/// Training config file: a run config plus where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    #[serde(flatten)]
    run: RunConfig,
    /// Dataset directory (relative paths resolve against the config file).
    data: Option<PathBuf>,
    /// Synthetic spec used when `data` is absent.
    synth: SynthSpec,
    /// Folds of the seeded split; `holdout_fold` is held out for testing.
    folds: usize,
    holdout_fold: usize,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            data: None,
            synth: SynthSpec::default(),
            folds: 3,
            holdout_fold: 0,
        }
    }
}

pub fn train(config_path: &Path, out: &Path) -> Result<()> {
    let cfg: TrainFile = read_json(config_path)?;
    cfg.run.validate()?;
    if cfg.holdout_fold >= cfg.folds {
        return Err(Error::Config(format!(
            "holdout_fold {} out of range for {} folds",
            cfg.holdout_fold, cfg.folds
        )));
    }
    let data_dir = cfg.data.as_ref().map(|d| parent_dir(config_path).join(d));
    let (volumes, labels) = match &data_dir {
        Some(d) => read_dataset(d)?,
        None => generate(&cfg.synth)?,
    };
    let data = encode_dataset(&volumes, &labels, cfg.run.method, cfg.run.encode_seed)?;
    let plan = kfold_split(data.len(), cfg.folds, cfg.run.seed)?;
    let fold = &plan.folds[cfg.holdout_fold];
    create_dir(out)?;
    let outcome = match run_training(&cfg.run, &data.subset(&fold.train)) {
        Ok(o) => o,
        Err(Error::Divergence {
            epoch,
            step,
            last_good,
        }) => {
            let path = out.join("last_good.json");
            last_good.save(&path, json!({ "diverged_at": { "epoch": epoch, "step": step } }))?;
            return Err(Error::Divergence {
                epoch,
                step,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    let report = evaluate(&outcome.trained, &data.subset(&fold.test))?;
    outcome.trained.save(out.join("model.json"))?;
    write_history_csv(&outcome.history, out.join("history.csv"))?;
    write_json(&out.join("metrics.json"), &report)?;
    let mut manifest = Manifest::new("train", &cfg)?
        .input(config_path)?
        .seeds(json!({
            "model": cfg.run.seed,
            "split": cfg.run.seed,
            "encode": cfg.run.encode_seed,
            "synth": data_dir.is_none().then_some(cfg.synth.seed),
        }))
        .output("model.json")
        .output("model.bin")
        .output("history.csv")
        .output("metrics.json");
    if let Some(d) = &data_dir {
        manifest = manifest.input(d)?;
    }
    if let Some(state) = &outcome.curriculum {
        state.write_trace_csv(out.join("curriculum.csv"))?;
        manifest = manifest.output("curriculum.csv");
    }
    manifest.thresholds = Some(outcome.trained.thresholds.clone());
    manifest.write(out)
}

pub fn eval(model_path: &Path, data_dir: &Path, out: &Path) -> Result<()> {
    let trained = TrainedModel::load(model_path)?;
    let (volumes, labels) = read_dataset(data_dir)?;
    let data = encode_dataset(&volumes, &labels, trained.method, trained.encode_seed)?;
    let report = evaluate(&trained, &data)?;
    let dir = parent_dir(out);
    create_dir(&dir)?;
    write_json(out, &report)?;
    Manifest::new("eval", json!({ "model": model_path, "data": data_dir }))?
        .input(model_path)?
        .input(&dclse_core::autodiff::checkpoint::blob_path(model_path))?
        .input(data_dir)?
        .seeds(json!({ "encode": trained.encode_seed }))
        .output(out.display().to_string())
        .write(&dir)
}

pub fn predict(model_path: &Path, volume_path: &Path, out: Option<&Path>) -> Result<()> {
    let trained = TrainedModel::load(model_path)?;
    let volume = load_volume(volume_path)?;
    let p = predict_subject(&volume, &trained)?;
    emit(&format!("{}\n", serde_json::to_string(&p)?));
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("prediction.json"), &p)?;
        Manifest::new("predict", json!({ "model": model_path, "volume": volume_path }))?
            .input(model_path)?
            .input(volume_path)?
            .seeds(json!({ "encode": trained.encode_seed }))
            .output("prediction.json")
            .write(dir)?;
    }
    Ok(())
}

pub fn gradcheck(seed: u64, out: Option<&Path>) -> Result<()> {
    let results = gradcheck_suite(seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        emit(&format!("{:<24} {:.3e}  {status}\n", r.name, r.max_rel_error));
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("gradcheck.json"), &results)?;
        Manifest::new("gradcheck", json!({ "seed": seed, "tolerance": GRADCHECK_TOLERANCE }))?
            .seeds(json!({ "gradcheck": seed }))
            .output("gradcheck.json")
            .write(dir)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e} for: {}",
            failed.join(", ")
        )))
    }
}

fn stats(values: &[f32]) -> (f64, f64, f64, f64) {
    let n = values.len().max(1) as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        let v = v as f64;
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    let mean = sum / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (lo, hi, mean, var.sqrt())
}

pub fn inspect(input: &Path) -> Result<()> {
    let (kind, shape, values) = if input.is_dir() {
        let v = load_volume(input)?;
        ("pgm-stack", vec![v.t_len(), v.height(), v.width()], v.voxels().to_vec())
    } else {
        let bytes = fs::read(input).map_err(|e| Error::Io {
            path: input.to_path_buf(),
            source: e,
        })?;
        if bytes.starts_with(b"DASE") {
            let v = decode_dase(&bytes)?;
            ("dase", vec![v.t_len(), v.height(), v.width()], v.voxels().to_vec())
        } else if bytes.starts_with(b"Pf") || bytes.starts_with(b"PF") {
            let img = decode_pfm(&bytes)?;
            ("pfm", vec![img.channels(), img.height(), img.width()], img.into_values())
        } else if bytes.starts_with(b"P5") {
            let img = decode_pgm(&bytes)?;
            ("pgm", vec![1, img.height(), img.width()], img.into_values())
        } else {
            return Err(Error::Format(format!("{}: unrecognised file header", input.display())));
        }
    };
    let (lo, hi, mean, std) = stats(&values);
    let summary = json!({
        "path": input,
        "format": kind,
        "shape": shape,
        "min": lo,
        "max": hi,
        "mean": mean,
        "std": std,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?));
    Ok(())
}

pub fn compare(
    config_path: Option<&Path>,
    spec_path: Option<&Path>,
    seeds: &[u64],
    folds: usize,
    out: &Path,
) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let config: RunConfig = match config_path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    let spec: SynthSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    let (table, reports) = pooling_comparison(&spec, &config, seeds, folds)?;
    create_dir(out)?;
    let csv = out.join("comparison.csv");
    fs::write(&csv, table.to_csv()).map_err(|e| Error::Write { path: csv, source: e })?;
    write_json(&out.join("reports.json"), &reports)?;
    emit(&table.to_csv());
    let mut manifest = Manifest::new("compare", json!({ "run": config, "synth": spec, "folds": folds }))?
        .seeds(json!({ "runs": seeds }))
        .output("comparison.csv")
        .output("reports.json");
    for p in [config_path, spec_path].into_iter().flatten() {
        manifest = manifest.input(p)?;
    }
    manifest.write(out)
}

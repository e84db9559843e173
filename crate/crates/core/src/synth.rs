//! Deterministic synthetic slice stacks whose class lives in slice order.
//!
//! Every volume holds one Gaussian blob whose radius follows a class-specific
//! schedule over `t`: class 0 grows, class 1 shrinks, class 2 grows then
//! shrinks (peaking early). The set of radii visited is the same for all classes, so
//! order-free summaries of a stack carry little class information.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{load_volume, save_volume, Volume};

pub const SYNTH_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub class_count: usize,
    pub per_class: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            per_class: 60,
            t_len: 16,
            height: 32,
            width: 32,
            sigma: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_len < 4 || self.height < 4 || self.width < 4 {
            return Err(Error::Config("synthetic dims must all be >= 4".into()));
        }
        if self.class_count == 0 || self.class_count > SYNTH_CLASSES {
            return Err(Error::Config(format!(
                "class_count must be in 1..={SYNTH_CLASSES}, got {}",
                self.class_count
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Where the pulse class peaks, as a fraction of the sequence. An early
/// peak keeps its rank-pooled signature away from plain growth, whose
/// signature is dominated by the first slices as well.
const PULSE_PEAK: f64 = 0.125;

/// Radius schedule position in `[0, 1]` for slice `t`.
fn progress(class_id: usize, t: usize, t_len: usize) -> f64 {
    let u = t as f64 / (t_len - 1) as f64;
    match class_id {
        0 => u,
        1 => 1.0 - u,
        _ if u <= PULSE_PEAK => u / PULSE_PEAK,
        _ => (1.0 - u) / (1.0 - PULSE_PEAK),
    }
}

pub fn gen_synthetic_volume(spec: &SynthSpec, class_id: usize, index: usize) -> Result<Volume> {
    spec.validate()?;
    if class_id >= spec.class_count {
        return Err(Error::Config(format!(
            "class {class_id} out of range for {} classes",
            spec.class_count
        )));
    }
    let (h, w, t_len) = (spec.height, spec.width, spec.t_len);
    // Geometry depends on the index only, so classes 0 and 1 are exact
    // time-mirrors of each other before noise.
    let mut geo = ChaCha8Rng::seed_from_u64(spec.seed);
    geo.set_stream(index as u64);
    let scale = h.min(w) as f64;
    let cy = h as f64 / 2.0 + geo.random_range(-0.1..0.1) * scale;
    let cx = w as f64 / 2.0 + geo.random_range(-0.1..0.1) * scale;
    let r_lo = scale * geo.random_range(0.06..0.10);
    let r_hi = scale * geo.random_range(0.22..0.30);
    let amp = geo.random_range(0.7..1.0);
    let floor = geo.random_range(0.0..0.2);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream((1u64 << 40) | ((class_id as u64) << 32) | index as u64);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");

    let mut voxels = Vec::with_capacity(t_len * h * w);
    for t in 0..t_len {
        let r = r_lo + (r_hi - r_lo) * progress(class_id, t, t_len);
        let inv = 1.0 / (2.0 * r * r);
        for y in 0..h {
            for x in 0..w {
                let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                let mut v = floor + amp * (-d2 * inv).exp();
                if spec.sigma > 0.0 {
                    v += noise.sample(&mut noise_rng);
                }
                voxels.push(v as f32);
            }
        }
    }
    Ok(Volume::new(t_len, h, w, voxels)?.normalize())
}

/// All volumes of a spec, class-major, with their labels.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<Volume>, Vec<usize>)> {
    spec.validate()?;
    let mut volumes = Vec::with_capacity(spec.class_count * spec.per_class);
    let mut labels = Vec::with_capacity(volumes.capacity());
    for c in 0..spec.class_count {
        for i in 0..spec.per_class {
            volumes.push(gen_synthetic_volume(spec, c, i)?);
            labels.push(c);
        }
    }
    Ok((volumes, labels))
}

/// On-disk dataset index, `index.json` inside the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub items: Vec<DatasetItem>,
    #[serde(default)]
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetItem {
    pub file: String,
    pub label: usize,
}

pub const INDEX_FILE: &str = "index.json";

pub fn write_dataset(
    dir: impl AsRef<Path>,
    volumes: &[Volume],
    labels: &[usize],
    synth: Option<&SynthSpec>,
) -> Result<DatasetIndex> {
    let dir = dir.as_ref();
    if volumes.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} volumes but {} labels",
            volumes.len(),
            labels.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
    let mut items = Vec::with_capacity(volumes.len());
    for (i, (v, &label)) in volumes.iter().zip(labels).enumerate() {
        let file = format!("vol_{i:04}.dase");
        save_volume(v, dir.join(&file))?;
        items.push(DatasetItem { file, label });
    }
    let index = DatasetIndex {
        items,
        synth: synth.cloned(),
    };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&index)?).map_err(|e| Error::write(&path, e))?;
    Ok(index)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(Vec<Volume>, Vec<usize>)> {
    let dir = dir.as_ref();
    let path = dir.join(INDEX_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: DatasetIndex = serde_json::from_slice(&bytes)?;
    if index.items.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no volumes", path.display())));
    }
    let mut volumes = Vec::with_capacity(index.items.len());
    let mut labels = Vec::with_capacity(index.items.len());
    for item in &index.items {
        volumes.push(load_volume(dir.join(&item.file))?);
        labels.push(item.label);
    }
    Ok((volumes, labels))
}

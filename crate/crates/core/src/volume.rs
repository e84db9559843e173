//! Ordered volumes, planar images and their on-disk formats.
//!
//! A [`Volume`] is a stack of `T` slices of `H x W` voxels stored t-major,
//! row-major within a slice. Slice order carries meaning and is never
//! changed by any routine in this module.
//!
//! Two volume sources are supported:
//!
//! * the `DASE` binary format: 4-byte magic `DASE`, a version byte (`1`),
//!   three little-endian `u32` (`T`, `H`, `W`), then `T*H*W` little-endian
//!   `f32` voxels;
//! * a directory of binary PGM (`P5`) slices, 8- or 16-bit, read in
//!   lexicographic file-name order.
//!
//! Planar images are written as little-endian PFM.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DASE_MAGIC: &[u8; 4] = b"DASE";
pub const DASE_VERSION: u8 = 1;
pub const DASE_HEADER_LEN: usize = 17;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    t_len: usize,
    height: usize,
    width: usize,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(t_len: usize, height: usize, width: usize, voxels: Vec<f32>) -> Result<Self> {
        if t_len == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "volume dims must be positive, got T={t_len} H={height} W={width}"
            )));
        }
        if voxels.len() != t_len * height * width {
            return Err(Error::Shape(format!(
                "expected {} voxels for T={t_len} H={height} W={width}, got {}",
                t_len * height * width,
                voxels.len()
            )));
        }
        Ok(Self {
            t_len,
            height,
            width,
            voxels,
        })
    }

    /// Stacks equally sized single-channel slices in the given order.
    pub fn from_slices(slices: &[PlanarImage]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::EmptyInput("no slices to stack".into()))?;
        let (h, w) = (first.height, first.width);
        let mut voxels = Vec::with_capacity(slices.len() * h * w);
        for (i, s) in slices.iter().enumerate() {
            if s.height != h || s.width != w || s.channels != 1 {
                return Err(Error::Shape(format!(
                    "slice {i} is {}x{}x{}, expected 1x{h}x{w}",
                    s.channels, s.height, s.width
                )));
            }
            voxels.extend_from_slice(&s.values);
        }
        Volume::new(slices.len(), h, w, voxels)
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn slice_len(&self) -> usize {
        self.height * self.width
    }

    pub fn slice(&self, t: usize) -> &[f32] {
        let n = self.slice_len();
        &self.voxels[t * n..(t + 1) * n]
    }

    /// Splits the volume into its `T` slices, in stored order.
    pub fn slices(&self) -> Vec<PlanarImage> {
        self.voxels
            .chunks_exact(self.slice_len())
            .map(|chunk| PlanarImage {
                height: self.height,
                width: self.width,
                channels: 1,
                values: chunk.to_vec(),
            })
            .collect()
    }

    /// Per-volume min-max rescale into `[0, 1]`. A constant volume maps to
    /// all zeros.
    pub fn normalize(&self) -> Volume {
        let (lo, hi) = min_max(&self.voxels);
        let range = hi - lo;
        let voxels = if range > 0.0 && range.is_finite() {
            self.voxels
                .iter()
                .map(|&v| (((v as f64 - lo) / range) as f32).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![0.0; self.voxels.len()]
        };
        Volume { voxels, ..*self }
    }

    /// Returns a copy with `offset` added to every voxel.
    pub fn offset(&self, offset: f32) -> Volume {
        Volume {
            voxels: self.voxels.iter().map(|v| v + offset).collect(),
            ..*self
        }
    }

    /// Returns a copy with the slice order reversed.
    pub fn reversed(&self) -> Volume {
        let mut slices = self.slices();
        slices.reverse();
        Volume::from_slices(&slices).expect("slices of a valid volume restack")
    }

    /// Mean intensity of each slice, in order.
    pub fn slice_means(&self) -> Vec<f64> {
        self.voxels
            .chunks_exact(self.slice_len())
            .map(|s| s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64)
            .collect()
    }
}

fn min_max(values: &[f32]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            let v = v as f64;
            (lo.min(v), hi.max(v))
        })
}

/// `C x H x W` planar image, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

impl PlanarImage {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "image dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "expected {} values for {channels}x{height}x{width}, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels: 1,
            values: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn same_dims(&self, other: &PlanarImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// Anything that can be viewed as a flat bag of intensities.
pub trait Intensities {
    fn intensities(&self) -> &[f32];
}

impl Intensities for Volume {
    fn intensities(&self) -> &[f32] {
        &self.voxels
    }
}

impl Intensities for PlanarImage {
    fn intensities(&self) -> &[f32] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    bins: usize,
    range_lo: f64,
    range_hi: f64,
}

impl HistogramSpec {
    pub fn new(bins: usize, range_lo: f64, range_hi: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("histogram needs >= 2 bins, got {bins}")));
        }
        if range_lo.partial_cmp(&range_hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "histogram range must satisfy lo < hi, got [{range_lo}, {range_hi}]"
            )));
        }
        Ok(Self {
            bins,
            range_lo,
            range_hi,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn range(&self) -> (f64, f64) {
        (self.range_lo, self.range_hi)
    }

    fn bin_of(&self, v: f64) -> usize {
        let pos = (v - self.range_lo) / (self.range_hi - self.range_lo) * self.bins as f64;
        if pos.is_nan() || pos < 0.0 {
            0
        } else {
            (pos as usize).min(self.bins - 1)
        }
    }

    /// Count-normalized histogram; out-of-range values land in the edge bins.
    pub fn histogram(&self, values: &[f32]) -> Vec<f64> {
        let mut counts = vec![0.0; self.bins];
        for &v in values {
            counts[self.bin_of(v as f64)] += 1.0;
        }
        let total = values.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= total);
        counts
    }
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: 64,
            range_lo: 0.0,
            range_hi: 1.0,
        }
    }
}

/// Pearson correlation between the intensity histograms of `a` and `b`.
pub fn histogram_correlation<A, B>(a: &A, b: &B, spec: &HistogramSpec) -> Result<f64>
where
    A: Intensities + ?Sized,
    B: Intensities + ?Sized,
{
    let (va, vb) = (a.intensities(), b.intensities());
    if va.is_empty() || vb.is_empty() {
        return Err(Error::EmptyInput("histogram input has no values".into()));
    }
    let ha = spec.histogram(va);
    let hb = spec.histogram(vb);
    pearson(&ha, &hb).ok_or_else(|| {
        Error::UndefinedCorrelation("one of the histograms has zero variance".into())
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bins: usize,
    pub range: [f64; 2],
    pub correlation: f64,
}

impl HistogramReport {
    pub fn new(spec: &HistogramSpec, correlation: f64) -> Self {
        Self {
            bins: spec.bins,
            range: [spec.range_lo, spec.range_hi],
            correlation,
        }
    }
}

pub fn encode_dase(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(DASE_HEADER_LEN + 4 * v.voxels.len());
    out.extend_from_slice(DASE_MAGIC);
    out.push(DASE_VERSION);
    for dim in [v.t_len, v.height, v.width] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for x in &v.voxels {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_dase(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < 5 || &bytes[0..4] != DASE_MAGIC {
        return Err(Error::Format("missing DASE magic".into()));
    }
    if bytes[4] != DASE_VERSION {
        return Err(Error::Format(format!("unsupported DASE version {}", bytes[4])));
    }
    if bytes.len() < DASE_HEADER_LEN {
        return Err(Error::Corrupt("truncated DASE header".into()));
    }
    let dim = |i: usize| {
        let off = 5 + 4 * i;
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
    };
    let (t, h, w) = (dim(0), dim(1), dim(2));
    let count = t
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| Error::Corrupt("DASE dims overflow".into()))?;
    let payload = &bytes[DASE_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Corrupt(format!(
            "header T={t} H={h} W={w} needs {count} floats, payload holds {} bytes",
            payload.len()
        )));
    }
    let voxels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(t, h, w, voxels).map_err(|e| Error::Corrupt(e.to_string()))
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dase(v)).map_err(|e| Error::write(path, e))
}

/// Loads a `DASE` file, or a directory of PGM slices.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    if path.is_dir() {
        return load_pgm_stack(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dase(&bytes)
}

fn load_pgm_stack(dir: &Path) -> Result<Volume> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no .pgm slices in {}", dir.display())));
    }
    let slices = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            decode_pgm(&bytes)
        })
        .collect::<Result<Vec<_>>>()?;
    Volume::from_slices(&slices)
}

/// Decodes a binary (`P5`) PGM, keeping raw integer sample values.
pub fn decode_pgm(bytes: &[u8]) -> Result<PlanarImage> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    // single whitespace byte separates header from raster
    let start = pos + 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let need = width * height * sample_bytes;
    let raster = bytes.get(start..start + need).ok_or_else(|| {
        Error::Corrupt(format!("PGM raster needs {need} bytes for {width}x{height}"))
    })?;
    let values = if sample_bytes == 1 {
        raster.iter().map(|&b| b as f32).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32)
            .collect()
    };
    PlanarImage::new(height, width, 1, values)
}

/// Encodes a PGM slice; values are rounded and clamped to `0..=maxval`.
pub fn encode_pgm(img: &PlanarImage, maxval: u16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    for &v in &img.values[..img.width * img.height] {
        let s = v.round().clamp(0.0, maxval as f32) as u16;
        if maxval < 256 {
            out.push(s as u8);
        } else {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

/// Little-endian PFM. One channel writes `Pf`, three write `PF`; rows are
/// stored bottom-to-top as the format requires.
pub fn encode_pfm(img: &PlanarImage) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Shape(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    for row in (0..h).rev() {
        for col in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&img.values[ch * h * w + row * w + col].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PlanarImage> {
    let mut lines = 0;
    let mut header_end = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            lines += 1;
            if lines == 3 {
                header_end = i + 1;
                break;
            }
        }
    }
    if lines < 3 {
        return Err(Error::Format("truncated PFM header".into()));
    }
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let mut parts = header.split_whitespace();
    let channels = match parts.next() {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(Error::Format("missing PFM tag".into())),
    };
    let mut next_num = |what: &str| -> Result<f64> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad PFM {what}")))
    };
    let w = next_num("width")? as usize;
    let h = next_num("height")? as usize;
    let scale = next_num("scale")?;
    let payload = &bytes[header_end..];
    if payload.len() != w * h * channels * 4 {
        return Err(Error::Corrupt("PFM payload size mismatch".into()));
    }
    let read = |c: &[u8]| {
        let arr = c.try_into().unwrap();
        if scale < 0.0 {
            f32::from_le_bytes(arr)
        } else {
            f32::from_be_bytes(arr)
        }
    };
    let mut values = vec![0.0; w * h * channels];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let ch = i % channels;
        let pix = i / channels;
        let (row_from_bottom, col) = (pix / w, pix % w);
        let row = h - 1 - row_from_bottom;
        values[ch * h * w + row * w + col] = read(chunk);
    }
    PlanarImage::new(h, w, channels, values)
}

pub fn save_pfm(img: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pfm(img)?;
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::write(path, e))?;
    w.flush().map_err(|e| Error::write(path, e))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vol(t: usize, h: usize, w: usize, f: impl Fn(usize) -> f32) -> Volume {
        Volume::new(t, h, w, (0..t * h * w).map(f).collect()).unwrap()
    }

    #[test]
    fn single_voxel_file_is_21_bytes() {
        let v = Volume::new(1, 1, 1, vec![0.5]).unwrap();
        let bytes = encode_dase(&v);
        assert_eq!(bytes.len(), 17 + 4);
        assert_eq!(&bytes[..4], b"DASE");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[17..], &0.5f32.to_le_bytes());
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_dase(&vol(1, 2, 2, |i| i as f32));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_dase(&bytes), Err(Error::Format(_))));
        bytes[..4].copy_from_slice(b"DASE");
        bytes[4] = 2;
        assert!(matches!(decode_dase(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn short_payload_is_corrupt() {
        let mut bytes = Vec::from(&b"DASE\x01"[..]);
        for d in [2u32, 3, 3] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for i in 0..17 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        assert!(matches!(decode_dase(&bytes), Err(Error::Corrupt(_))));
        bytes.extend_from_slice(&1f32.to_le_bytes());
        assert_eq!(decode_dase(&bytes).unwrap().voxels().len(), 18);
    }

    #[test]
    fn unwritable_path_is_write_error() {
        let v = vol(1, 1, 1, |_| 0.0);
        let err = save_volume(&v, "/nonexistent-dir/sub/v.dase").unwrap_err();
        assert!(matches!(err, Error::Write { .. }));
    }

    #[test]
    fn normalize_examples() {
        let v = Volume::new(3, 1, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(v.normalize().voxels(), &[0.0, 0.5, 1.0]);

        let c = vol(2, 2, 2, |_| 7.3);
        assert!(c.normalize().voxels().iter().all(|&x| x == 0.0));

        let full = Volume::new(1, 2, 2, vec![0.0, 0.25, 0.75, 1.0]).unwrap();
        assert_eq!(full.normalize(), full);
    }

    #[test]
    fn slices_in_order() {
        let v = vol(3, 2, 2, |i| i as f32);
        let s = v.slices();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].values(), &v.voxels()[0..4]);
        assert_eq!(Volume::from_slices(&s).unwrap(), v);
        assert_eq!(vol(1, 2, 2, |i| i as f32).slices().len(), 1);
    }

    #[test]
    fn stacking_mismatched_slices_fails() {
        let a = PlanarImage::filled(2, 2, 0.0);
        let b = PlanarImage::filled(3, 2, 0.0);
        assert!(matches!(Volume::from_slices(&[a, b]), Err(Error::Shape(_))));
    }

    #[test]
    fn histogram_correlation_examples() {
        let spec = HistogramSpec::default();
        let a = vol(2, 4, 4, |i| (i as f32 * 0.37).fract());
        assert!((histogram_correlation(&a, &a, &spec).unwrap() - 1.0).abs() < 1e-12);

        let mut permuted = a.voxels().to_vec();
        permuted.reverse();
        permuted.swap(3, 17);
        let p = Volume::new(2, 4, 4, permuted).unwrap();
        assert!((histogram_correlation(&a, &p, &spec).unwrap() - 1.0).abs() < 1e-12);

        let two = HistogramSpec::new(2, 0.0, 1.0).unwrap();
        let lo = vol(1, 4, 4, |i| i as f32 / 32.0);
        let hi = vol(1, 4, 4, |i| 0.5 + i as f32 / 32.0);
        assert!((histogram_correlation(&lo, &hi, &two).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_out_of_range_clamps_and_constant_histogram_errors() {
        let spec = HistogramSpec::new(4, 0.0, 1.0).unwrap();
        assert_eq!(spec.histogram(&[-3.0, 9.0]), vec![0.5, 0.0, 0.0, 0.5]);
        // all four bins equally filled: zero variance
        let flat = PlanarImage::new(1, 4, 1, vec![0.1, 0.3, 0.6, 0.9]).unwrap();
        let err = histogram_correlation(&flat, &flat, &spec).unwrap_err();
        assert!(matches!(err, Error::UndefinedCorrelation(_)));
    }

    #[test]
    fn histogram_spec_validation() {
        assert!(HistogramSpec::new(1, 0.0, 1.0).is_err());
        assert!(HistogramSpec::new(8, 1.0, 1.0).is_err());
    }

    #[test]
    fn pgm_stack_loads_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, fill) in [("s10.pgm", 3.0), ("s02.pgm", 2.0), ("s01.pgm", 1.0)] {
            let img = PlanarImage::filled(2, 3, fill);
            fs::write(dir.path().join(name), encode_pgm(&img, 255)).unwrap();
        }
        let v = load_volume(dir.path()).unwrap();
        assert_eq!((v.t_len(), v.height(), v.width()), (3, 2, 3));
        assert_eq!(v.slice_means(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pgm_16_bit_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = PlanarImage::new(1, 2, 1, vec![1000.0, 40000.0]).unwrap();
        fs::write(dir.path().join("a.pgm"), encode_pgm(&img, 65535)).unwrap();
        let v = load_volume(dir.path()).unwrap();
        assert_eq!(v.voxels(), &[1000.0, 40000.0]);

        fs::write(
            dir.path().join("b.pgm"),
            encode_pgm(&PlanarImage::filled(2, 2, 1.0), 255),
        )
        .unwrap();
        assert!(matches!(load_volume(dir.path()), Err(Error::Shape(_))));
    }

    #[test]
    fn pfm_round_trip() {
        let img = PlanarImage::new(2, 3, 1, vec![1.0, -2.0, 3.5, 0.0, 1e-3, 7.0]).unwrap();
        let back = decode_pfm(&encode_pfm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let rgb = PlanarImage::new(1, 2, 3, (0..6).map(|i| i as f32).collect()).unwrap();
        assert_eq!(decode_pfm(&encode_pfm(&rgb).unwrap()).unwrap(), rgb);
    }

    proptest! {
        #[test]
        fn dase_round_trip_is_bit_exact(
            (t, h, w, bits) in (1usize..4, 1usize..5, 1usize..5)
                .prop_flat_map(|(t, h, w)| (Just(t), Just(h), Just(w),
                    prop::collection::vec(any::<u32>(), t * h * w)))
        ) {
            let voxels: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            let v = Volume::new(t, h, w, voxels).unwrap();
            let back = decode_dase(&encode_dase(&v)).unwrap();
            let a: Vec<u32> = v.voxels().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.voxels().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalize_is_bounded_and_idempotent(vals in prop::collection::vec(-1e3f32..1e3, 8)) {
            let v = Volume::new(2, 2, 2, vals).unwrap();
            let n = v.normalize();
            prop_assert!(n.voxels().iter().all(|&x| (0.0..=1.0).contains(&x)));
            let (lo, hi) = min_max(n.voxels());
            if lo == 0.0 && hi == 1.0 {
                prop_assert_eq!(n.normalize(), n);
            }
        }

        #[test]
        fn histogram_correlation_is_symmetric(
            a in prop::collection::vec(0f32..1.0, 32),
            b in prop::collection::vec(0f32..1.0, 32),
        ) {
            let spec = HistogramSpec::new(8, 0.0, 1.0).unwrap();
            let ia = PlanarImage::new(4, 8, 1, a).unwrap();
            let ib = PlanarImage::new(4, 8, 1, b).unwrap();
            if let (Ok(x), Ok(y)) = (
                histogram_correlation(&ia, &ib, &spec),
                histogram_correlation(&ib, &ia, &spec),
            ) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

//! Grouped 2-D cross-correlation over `NCHW` tensors.
//!
//! All reductions run in a fixed sequential order so results are
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Self> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Pointwise (1x1) grouped convolution.
    pub fn pointwise(in_channels: usize, out_channels: usize, groups: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, 1, 1, 0, groups)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("conv channel counts must be positive".into()));
        }
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return Err(Error::Config(format!(
                "groups={} must divide in_channels={} and out_channels={}",
                self.groups, self.in_channels, self.out_channels
            )));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("kernel and stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// `[C_out, C_in / G, K, K]`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_per_group(),
            self.kernel,
            self.kernel,
        ]
    }

    /// Weight parameters, bias excluded: `C_in * C_out * K^2 / G`.
    pub fn param_count(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel / self.groups
    }

    /// Fan-in of one output unit, used for initialisation.
    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel * self.kernel
    }

    pub fn output_len(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::Shape(format!(
                "input size {input} with kernel {} padding {} leaves no output",
                self.kernel, self.padding
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }
}

pub fn param_count(spec: &ConvSpec) -> usize {
    spec.param_count()
}

/// Output positions `o` with `0 <= o*stride + k - pad < input`.
fn valid_range(k: usize, pad: usize, stride: usize, input: usize, output: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if input + pad > k {
        ((input + pad - k - 1) / stride + 1).min(output)
    } else {
        0
    };
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(spec: &ConvSpec, x_shape: &[usize]) -> Result<Self> {
        if x_shape.len() != 4 {
            return Err(Error::Shape(format!("conv input must be NCHW, got {x_shape:?}")));
        }
        if x_shape[1] != spec.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                spec.in_channels, x_shape[1]
            )));
        }
        Ok(Self {
            n: x_shape[0],
            h: x_shape[2],
            w: x_shape[3],
            oh: spec.output_len(x_shape[2])?,
            ow: spec.output_len(x_shape[3])?,
        })
    }

    fn is_plain_pointwise(&self, spec: &ConvSpec) -> bool {
        spec.kernel == 1 && spec.stride == 1 && spec.padding == 0
    }
}

/// Visits every (input, output) plane pair touched by tap `(kh, kw)`,
/// calling `f(in_index, out_index)` row by row.
#[inline]
fn for_each_tap(
    spec: &ConvSpec,
    g: &ConvGeom,
    kh: usize,
    kw: usize,
    mut f: impl FnMut(usize, usize, usize),
) {
    let (s, p) = (spec.stride, spec.padding);
    let (oh_lo, oh_hi) = valid_range(kh, p, s, g.h, g.oh);
    let (ow_lo, ow_hi) = valid_range(kw, p, s, g.w, g.ow);
    if ow_lo >= ow_hi {
        return;
    }
    let run = ow_hi - ow_lo;
    for oy in oh_lo..oh_hi {
        let iy = oy * s + kh - p;
        let ix = ow_lo * s + kw - p;
        f(iy * g.w + ix, oy * g.ow + ow_lo, run);
    }
}

pub(crate) fn forward(
    spec: &ConvSpec,
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    b: Option<&[f64]>,
) -> Vec<f64> {
    let (cin_g, cout_g, k) = (spec.in_per_group(), spec.out_per_group(), spec.kernel);
    let (in_plane, out_plane) = (g.h * g.w, g.oh * g.ow);
    let s = spec.stride;
    let pointwise = g.is_plain_pointwise(spec);
    let mut out = vec![0.0; g.n * spec.out_channels * out_plane];
    for n in 0..g.n {
        for oc in 0..spec.out_channels {
            let group = oc / cout_g;
            let o_base = (n * spec.out_channels + oc) * out_plane;
            let dst = &mut out[o_base..o_base + out_plane];
            if let Some(b) = b {
                dst.iter_mut().for_each(|v| *v = b[oc]);
            }
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let i_base = (n * spec.in_channels + ic) * in_plane;
                let src = &x[i_base..i_base + in_plane];
                let w_base = (oc * cin_g + icg) * k * k;
                if pointwise {
                    let wv = w[w_base];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += wv * v;
                    }
                    continue;
                }
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = w[w_base + kh * k + kw];
                        for_each_tap(spec, g, kh, kw, |ii, oi, run| {
                            let d = &mut dst[oi..oi + run];
                            if s == 1 {
                                for (dv, &sv) in d.iter_mut().zip(&src[ii..ii + run]) {
                                    *dv += wv * sv;
                                }
                            } else {
                                for (j, dv) in d.iter_mut().enumerate() {
                                    *dv += wv * src[ii + j * s];
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn backward(
    spec: &ConvSpec,
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    need: (bool, bool, bool),
) -> ConvGrads {
    let (cin_g, cout_g, k) = (spec.in_per_group(), spec.out_per_group(), spec.kernel);
    let (in_plane, out_plane) = (g.h * g.w, g.oh * g.ow);
    let s = spec.stride;
    let pointwise = g.is_plain_pointwise(spec);
    let (need_dx, need_dw, need_db) = need;
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut dw = need_dw.then(|| vec![0.0; w.len()]);
    let mut db = need_db.then(|| vec![0.0; spec.out_channels]);

    for n in 0..g.n {
        for oc in 0..spec.out_channels {
            let group = oc / cout_g;
            let o_base = (n * spec.out_channels + oc) * out_plane;
            let gy = &dy[o_base..o_base + out_plane];
            if let Some(db) = db.as_mut() {
                db[oc] += gy.iter().sum::<f64>();
            }
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let i_base = (n * spec.in_channels + ic) * in_plane;
                let w_base = (oc * cin_g + icg) * k * k;
                if pointwise {
                    if let Some(dw) = dw.as_mut() {
                        let src = &x[i_base..i_base + in_plane];
                        dw[w_base] += gy.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if let Some(dx) = dx.as_mut() {
                        let wv = w[w_base];
                        for (d, &v) in dx[i_base..i_base + in_plane].iter_mut().zip(gy) {
                            *d += wv * v;
                        }
                    }
                    continue;
                }
                for kh in 0..k {
                    for kw in 0..k {
                        let wi = w_base + kh * k + kw;
                        if let Some(dw) = dw.as_mut() {
                            let src = &x[i_base..i_base + in_plane];
                            let mut acc = 0.0;
                            for_each_tap(spec, g, kh, kw, |ii, oi, run| {
                                for j in 0..run {
                                    acc += gy[oi + j] * src[ii + j * s];
                                }
                            });
                            dw[wi] += acc;
                        }
                        if let Some(dx) = dx.as_mut() {
                            let wv = w[wi];
                            let dst = &mut dx[i_base..i_base + in_plane];
                            for_each_tap(spec, g, kh, kw, |ii, oi, run| {
                                for j in 0..run {
                                    dst[ii + j * s] += wv * gy[oi + j];
                                }
                            });
                        }
                    }
                }
            }
        }
    }
    ConvGrads { dx, dw, db }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        assert_eq!(ConvSpec::new(8, 8, 3, 1, 1, 1).unwrap().param_count(), 576);
        assert_eq!(ConvSpec::new(8, 8, 3, 1, 1, 4).unwrap().param_count(), 144);
        assert_eq!(ConvSpec::new(16, 32, 1, 1, 0, 4).unwrap().param_count(), 128);
        let s = ConvSpec::new(16, 32, 1, 1, 0, 4).unwrap();
        assert_eq!(s.weight_shape().iter().product::<usize>(), s.param_count());
    }

    #[test]
    fn validation() {
        assert!(matches!(ConvSpec::new(16, 16, 1, 1, 0, 5), Err(Error::Config(_))));
        assert!(matches!(ConvSpec::new(8, 6, 1, 1, 0, 4), Err(Error::Config(_))));
        assert!(ConvSpec::new(8, 8, 0, 1, 0, 1).is_err());
        assert!(ConvSpec::new(8, 8, 1, 0, 0, 1).is_err());
        let s = ConvSpec::new(1, 1, 3, 2, 0, 1).unwrap();
        assert!(matches!(s.output_len(2), Err(Error::Shape(_))));
        assert_eq!(s.output_len(7).unwrap(), 3);
        // trailing input row that no full window reaches is dropped
        assert_eq!(s.output_len(6).unwrap(), 2);
        assert_eq!(ConvSpec::new(1, 1, 3, 2, 1, 1).unwrap().output_len(16).unwrap(), 8);
    }

    #[test]
    fn valid_range_matches_brute_force() {
        for k in 0..3 {
            for pad in 0..3 {
                for stride in 1..3 {
                    for input in 1..7 {
                        let spec = ConvSpec::new(1, 1, 3, stride, pad, 1).unwrap();
                        let Ok(output) = spec.output_len(input) else { continue };
                        let brute: Vec<usize> = (0..output)
                            .filter(|&o| {
                                let i = (o * stride + k) as isize - pad as isize;
                                i >= 0 && (i as usize) < input
                            })
                            .collect();
                        let (lo, hi) = valid_range(k, pad, stride, input, output);
                        assert_eq!((lo..hi).collect::<Vec<_>>(), brute);
                    }
                }
            }
        }
    }
}

//! Finite-difference checks of every differentiable operator, bundled so the
//! command line and the tests run the same cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check_multi, ConvSpec, Graph, PoolKind, Tensor, Var, DEFAULT_EPS};
use crate::error::Result;
use crate::network::{DgmConfig, DgmLayer, ParamRole, ParamStore};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckResult {
    pub name: String,
    pub max_rel_error: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values at least `margin` away from zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(margin..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// `sum(r * y)` with a fixed random `r`, so every output coordinate matters
/// with a generic weight.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, g.value(y).shape(), -1.0, 1.0);
    let r = g.input(r);
    let p = g.hadamard(y, r)?;
    Ok(g.sum(p))
}

fn check(
    out: &mut Vec<GradCheckResult>,
    name: &str,
    inputs: &[Tensor],
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<()> {
    let max_rel_error = grad_check_multi(f, inputs, DEFAULT_EPS)?;
    out.push(GradCheckResult {
        name: name.to_string(),
        max_rel_error,
    });
    Ok(())
}

/// Runs every case with inputs drawn from `seed`.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps = seed.wrapping_mul(31).wrapping_add(7);
    let mut out = Vec::new();

    let grouped = ConvSpec::new(4, 6, 3, 2, 1, 2)?;
    let inputs = [
        uniform(&mut rng, &[2, 4, 5, 5], -1.0, 1.0),
        uniform(&mut rng, &grouped.weight_shape(), -1.0, 1.0),
        uniform(&mut rng, &[6], -1.0, 1.0),
    ];
    check(&mut out, "conv2d_grouped", &inputs, |g, v| {
        let y = g.conv2d(v[0], v[1], Some(v[2]), &grouped)?;
        project(g, y, ps)
    })?;

    let depthwise = ConvSpec::new(3, 3, 3, 1, 1, 3)?;
    let inputs = [
        uniform(&mut rng, &[1, 3, 4, 4], -1.0, 1.0),
        uniform(&mut rng, &depthwise.weight_shape(), -1.0, 1.0),
    ];
    check(&mut out, "conv2d_depthwise", &inputs, |g, v| {
        let y = g.conv2d(v[0], v[1], None, &depthwise)?;
        project(g, y, ps)
    })?;

    let inputs = [off_zero(&mut rng, &[2, 3, 4], 10.0 * DEFAULT_EPS.sqrt())];
    check(&mut out, "relu", &inputs, |g, v| {
        let y = g.relu(v[0]);
        project(g, y, ps)
    })?;

    let inputs = [uniform(&mut rng, &[2, 3, 4], -3.0, 3.0)];
    check(&mut out, "sigmoid", &inputs, |g, v| {
        let y = g.sigmoid(v[0]);
        project(g, y, ps)
    })?;

    let inputs = [
        uniform(&mut rng, &[3, 4], -2.0, 2.0),
        uniform(&mut rng, &[3, 4], -2.0, 2.0),
    ];
    check(&mut out, "hadamard", &inputs, |g, v| {
        let y = g.hadamard(v[0], v[1])?;
        project(g, y, ps)
    })?;
    check(&mut out, "add", &inputs, |g, v| {
        let y = g.add(v[0], v[1])?;
        project(g, y, ps)
    })?;

    // Distinct values spaced far beyond eps so no window maximum can flip.
    let n = 2 * 2 * 4 * 4;
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let spaced = Tensor::from_fn(&[2, 2, 4, 4], |i| perm[i] as f64 * 0.1 - 1.5);
    for (name, kind) in [
        ("pool_max", PoolKind::Max),
        ("pool_mean", PoolKind::Mean),
        ("pool_global_avg", PoolKind::GlobalAvg),
    ] {
        check(&mut out, name, std::slice::from_ref(&spaced), |g, v| {
            let y = g.pool2d(v[0], kind, 2)?;
            project(g, y, ps)
        })?;
    }

    let inputs = [
        uniform(&mut rng, &[3, 5], -1.0, 1.0),
        uniform(&mut rng, &[5, 4], -1.0, 1.0),
        uniform(&mut rng, &[4], -1.0, 1.0),
    ];
    check(&mut out, "linear", &inputs, |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        project(g, y, ps)
    })?;

    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    let inputs = [uniform(&mut rng, &[4, 3], -2.0, 2.0)];
    check(&mut out, "softmax_cross_entropy", &inputs, |g, v| {
        g.softmax_cross_entropy(v[0], &labels)
    })?;

    let target = uniform(&mut rng, &[3, 2], -1.0, 1.0);
    let gap = off_zero(&mut rng, &[3, 2], 0.05);
    let pred = Tensor::from_fn(&[3, 2], |i| target.data()[i] + gap.data()[i]);
    check(&mut out, "l1_loss", std::slice::from_ref(&pred), |g, v| g.l1_loss(v[0], &target))?;

    let inputs = [
        uniform(&mut rng, &[3], -1.0, 1.0),
        uniform(&mut rng, &[2, 4], -1.0, 1.0),
        uniform(&mut rng, &[2, 4], -1.0, 1.0),
        uniform(&mut rng, &[2, 4], -1.0, 1.0),
    ];
    check(&mut out, "fuse", &inputs, |g, v| {
        let y = g.fuse(v[0], &v[1..])?;
        project(g, y, ps)
    })?;

    let inputs = [uniform(&mut rng, &[2], -1.0, 1.0), uniform(&mut rng, &[3], -1.0, 1.0)];
    check(&mut out, "concat", &inputs, |g, v| {
        let y = g.concat(v)?;
        project(g, y, ps)
    })?;

    let mut store = ParamStore::new();
    let mut init = ChaCha8Rng::seed_from_u64(seed ^ 0xd6e);
    let layer = DgmLayer::init(&mut store, &mut init, "dgm", DgmConfig::new(8, 2, 4)?, ParamRole::Backbone)?;
    // Non-zero biases so the gate is exercised away from its zero-input point.
    for t in store.tensors_mut() {
        if t.shape().len() == 1 {
            *t = uniform(&mut rng, t.shape(), -0.5, 0.5);
        }
    }
    let mut inputs: Vec<Tensor> = store.tensors().to_vec();
    inputs.push(uniform(&mut rng, &[2, 8, 3, 3], -1.0, 1.0));
    let x_slot = inputs.len() - 1;
    check(&mut out, "dgm_block", &inputs, |g, v| {
        let y = layer.apply(g, v, v[x_slot])?.output;
        project(g, y, ps)
    })?;

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_one_seed() {
        let results = gradcheck_suite(7).unwrap();
        assert!(results.len() >= 15);
        for r in &results {
            assert!(r.passed(), "{} failed with {}", r.name, r.max_rel_error);
        }
    }
}

//! Dynamic group mechanism: a grouped-convolution channel gate.
//!
//! `W = sigmoid(expand(relu(reduce(X))))`, `X' = X * W`, `Y = fuse(X')`, with
//! all three convolutions 1x1 and grouped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ConvLayer, ParamRole, ParamStore};
use crate::autodiff::{ConvSpec, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgmConfig {
    pub channels: usize,
    pub reduction: usize,
    pub groups: usize,
}

impl DgmConfig {
    pub fn new(channels: usize, reduction: usize, groups: usize) -> Result<Self> {
        let cfg = Self {
            channels,
            reduction,
            groups,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Width of the squeezed branch, `max(1, C / r)`.
    pub fn reduced(&self) -> usize {
        (self.channels / self.reduction.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.reduction == 0 || self.groups == 0 {
            return Err(Error::Config(
                "dgm channels, reduction and groups must be >= 1".into(),
            ));
        }
        let reduced = self.reduced();
        if self.channels % self.groups != 0 || reduced % self.groups != 0 {
            return Err(Error::Config(format!(
                "dgm groups={} must divide channels={} and reduced width={}",
                self.groups, self.channels, reduced
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgmLayer {
    pub cfg: DgmConfig,
    pub reduce: ConvLayer,
    pub expand: ConvLayer,
    pub fuse: ConvLayer,
}

/// Intermediate values of one DGM application.
#[derive(Debug, Clone, Copy)]
pub struct DgmVars {
    pub weights: Var,
    pub reweighted: Var,
    pub output: Var,
}

impl DgmLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: DgmConfig,
        role: ParamRole,
    ) -> Result<Self> {
        cfg.validate()?;
        let (c, cr, g) = (cfg.channels, cfg.reduced(), cfg.groups);
        Ok(Self {
            cfg,
            reduce: ConvLayer::init(store, rng, &format!("{name}.reduce"), ConvSpec::pointwise(c, cr, g)?, role)?,
            expand: ConvLayer::init(store, rng, &format!("{name}.expand"), ConvSpec::pointwise(cr, c, g)?, role)?,
            fuse: ConvLayer::init(store, rng, &format!("{name}.fuse"), ConvSpec::pointwise(c, c, g)?, role)?,
        })
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<DgmVars> {
        let channels = g.value(x).shape().get(1).copied();
        if channels != Some(self.cfg.channels) {
            return Err(Error::Shape(format!(
                "dgm expects {} channels, input has shape {:?}",
                self.cfg.channels,
                g.value(x).shape()
            )));
        }
        let squeezed = self.reduce.apply(g, vars, x)?;
        let squeezed = g.relu(squeezed);
        let logits = self.expand.apply(g, vars, squeezed)?;
        let weights = g.sigmoid(logits);
        let reweighted = g.hadamard(x, weights)?;
        let output = self.fuse.apply(g, vars, reweighted)?;
        Ok(DgmVars {
            weights,
            reweighted,
            output,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.reduce.weight_count() + self.expand.weight_count() + self.fuse.weight_count()
    }
}

/// A DGM block that owns its parameters; handy outside a full model.
#[derive(Debug, Clone, PartialEq)]
pub struct DgmBlock {
    pub layer: DgmLayer,
    pub params: ParamStore,
}

/// Forward results of a standalone block.
#[derive(Debug, Clone, PartialEq)]
pub struct DgmTrace {
    pub weights: Tensor,
    pub reweighted: Tensor,
    pub output: Tensor,
}

impl DgmBlock {
    /// He-uniform weights, zero biases.
    pub fn new(cfg: DgmConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layer = DgmLayer::init(&mut params, &mut rng, "dgm", cfg, ParamRole::Backbone)?;
        Ok(Self { layer, params })
    }

    pub fn trace(&self, x: &Tensor) -> Result<DgmTrace> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, |_| false);
        let xv = g.input(x.clone());
        let out = self.layer.apply(&mut g, &vars, xv)?;
        Ok(DgmTrace {
            weights: g.value(out.weights).clone(),
            reweighted: g.value(out.reweighted).clone(),
            output: g.value(out.output).clone(),
        })
    }
}

pub fn dgm_block(x: &Tensor, block: &DgmBlock) -> Result<Tensor> {
    Ok(block.trace(x)?.output)
}

pub fn dgm_weight_map(x: &Tensor, block: &DgmBlock) -> Result<Tensor> {
    Ok(block.trace(x)?.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn shape_is_preserved() {
        let block = DgmBlock::new(DgmConfig::new(16, 4, 4).unwrap(), 1).unwrap();
        let y = dgm_block(&random_input(&[2, 16, 8, 8], 2), &block).unwrap();
        assert_eq!(y.shape(), &[2, 16, 8, 8]);
    }

    #[test]
    fn zero_input_gives_half_gate_and_zero_output() {
        let block = DgmBlock::new(DgmConfig::new(16, 4, 4).unwrap(), 3).unwrap();
        let t = block.trace(&Tensor::zeros(&[1, 16, 3, 3])).unwrap();
        assert!(t.weights.data().iter().all(|&w| w == 0.5));
        assert!(t.reweighted.data().iter().all(|&v| v == 0.0));
        assert!(t.output.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_map_matches_internal_gate() {
        let block = DgmBlock::new(DgmConfig::new(8, 2, 4).unwrap(), 5).unwrap();
        let x = random_input(&[2, 8, 4, 4], 6);
        assert_eq!(dgm_weight_map(&x, &block).unwrap(), block.trace(&x).unwrap().weights);
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(matches!(DgmConfig::new(16, 4, 5), Err(Error::Config(_))));
        // C' = 2 is not divisible by 4.
        assert!(matches!(DgmConfig::new(8, 4, 4), Err(Error::Config(_))));
        assert_eq!(DgmConfig::new(3, 8, 1).unwrap().reduced(), 1);
    }

    #[test]
    fn wrong_channel_count_is_a_shape_error() {
        let block = DgmBlock::new(DgmConfig::new(8, 2, 4).unwrap(), 5).unwrap();
        assert!(matches!(block.trace(&Tensor::zeros(&[1, 4, 2, 2])), Err(Error::Shape(_))));
    }
}

//! Inverted linear bottlenecks: 1x1 expand, 3x3 depthwise, 1x1 linear
//! projection.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ConvLayer, ParamRole, ParamStore};
use crate::autodiff::{ConvSpec, Graph, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    /// Stride 1 with a residual connection.
    Bottleneck1,
    /// Stride 2 downsampling, no residual.
    Bottleneck2,
    /// Plain 1x1 convolution followed by ReLU.
    Conv1x1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck {
    pub expand: ConvLayer,
    pub depthwise: ConvLayer,
    pub project: ConvLayer,
    pub residual: bool,
}

impl Bottleneck {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        kind: BlockKind,
        in_channels: usize,
        out_channels: usize,
        expansion: usize,
    ) -> Result<Self> {
        let (stride, residual) = match kind {
            BlockKind::Bottleneck1 => {
                if in_channels != out_channels {
                    return Err(Error::Config(format!(
                        "{name}: residual bottleneck needs equal widths, got {in_channels} -> {out_channels}"
                    )));
                }
                (1, true)
            }
            BlockKind::Bottleneck2 => (2, false),
            BlockKind::Conv1x1 => {
                return Err(Error::Config(format!("{name}: conv1x1 is not a bottleneck")))
            }
        };
        if expansion == 0 {
            return Err(Error::Config("expansion must be >= 1".into()));
        }
        let hidden = in_channels * expansion;
        let role = ParamRole::Backbone;
        Ok(Self {
            expand: ConvLayer::init(store, rng, &format!("{name}.expand"), ConvSpec::pointwise(in_channels, hidden, 1)?, role)?,
            depthwise: ConvLayer::init(
                store,
                rng,
                &format!("{name}.depthwise"),
                ConvSpec::new(hidden, hidden, 3, stride, 1, hidden)?,
                role,
            )?,
            project: ConvLayer::init(store, rng, &format!("{name}.project"), ConvSpec::pointwise(hidden, out_channels, 1)?, role)?,
            residual,
        })
    }

    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let h = self.expand.apply(g, vars, x)?;
        let h = g.relu(h);
        let h = self.depthwise.apply(g, vars, h)?;
        let h = g.relu(h);
        let y = self.project.apply(g, vars, h)?;
        if self.residual {
            g.add(y, x)
        } else {
            Ok(y)
        }
    }

    pub fn layers(&self) -> [&ConvLayer; 3] {
        [&self.expand, &self.depthwise, &self.project]
    }

    pub fn weight_count(&self) -> usize {
        self.layers().iter().map(|l| l.weight_count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::autodiff::Tensor;

    fn build(kind: BlockKind, cin: usize, cout: usize, e: usize) -> (ParamStore, Bottleneck) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = Bottleneck::init(&mut store, &mut rng, "b", kind, cin, cout, e).unwrap();
        (store, b)
    }

    fn run(store: &ParamStore, b: &Bottleneck, x: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let vars = store.bind(&mut g, |_| false);
        let xv = g.input(x.clone());
        let y = b.apply(&mut g, &vars, xv).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn identity_kernels_double_the_input() {
        let c = 3;
        let (mut store, b) = build(BlockKind::Bottleneck1, c, c, 1);
        let eye = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
        *store.get_mut("b.expand.weight").unwrap() = eye.clone();
        *store.get_mut("b.project.weight").unwrap() = eye;
        *store.get_mut("b.depthwise.weight").unwrap() =
            Tensor::from_fn(&[c, 1, 3, 3], |i| if i % 9 == 4 { 1.0 } else { 0.0 });
        let x = Tensor::from_fn(&[2, c, 5, 5], |i| (i % 7) as f64 * 0.3);
        let y = run(&store, &b, &x);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn stride_two_halves_spatial_dims() {
        let (store, b) = build(BlockKind::Bottleneck2, 4, 8, 2);
        let y = run(&store, &b, &Tensor::zeros(&[1, 4, 16, 16]));
        assert_eq!(y.shape(), &[1, 8, 8, 8]);
    }

    #[test]
    fn weight_count_sums_layers() {
        let (store, b) = build(BlockKind::Bottleneck2, 16, 24, 6);
        let hidden = 96;
        assert_eq!(b.weight_count(), 16 * hidden + hidden * 9 + hidden * 24);
        let allocated: usize = b
            .layers()
            .iter()
            .map(|l| store.tensors()[l.weight].len())
            .sum();
        assert_eq!(allocated, b.weight_count());
    }

    #[test]
    fn residual_width_mismatch_is_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Bottleneck::init(&mut store, &mut rng, "b", BlockKind::Bottleneck1, 4, 8, 2);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}

//! Network building blocks and model assembly.

mod bottleneck;
mod dgm;
mod model;
mod params;

pub use bottleneck::{BlockKind, Bottleneck};
pub use dgm::{dgm_block, dgm_weight_map, DgmBlock, DgmConfig, DgmLayer, DgmTrace, DgmVars};
pub use model::{build_model, ForwardOutput, ForwardVars, Model, ModelSpec, StageSpec};
pub use params::{ConvLayer, LinearLayer, ParamRole, ParamStore};

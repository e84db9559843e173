//! Full network: stem, bottleneck stages with DGM gates at the curriculum
//! stages, and a softmax-weighted fusion head over those stages.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bottleneck::{BlockKind, Bottleneck};
use super::dgm::{DgmConfig, DgmLayer};
use super::params::{ConvLayer, LinearLayer, ParamRole, ParamStore};
use crate::autodiff::{checkpoint, ConvSpec, Graph, PoolKind, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    pub block: BlockKind,
    pub channels: usize,
    pub stride: usize,
    pub dgm_enabled: bool,
}

impl StageSpec {
    fn new(name: &str, block: BlockKind, channels: usize, stride: usize, dgm_enabled: bool) -> Self {
        Self {
            name: name.to_string(),
            block,
            channels,
            stride,
            dgm_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_size: usize,
    pub stem_channels: usize,
    pub expansion: usize,
    /// Groups of every DGM convolution.
    pub groups: usize,
    pub reduction: usize,
    /// Common projection width of the fusion head.
    pub head_width: usize,
    pub classes: usize,
    pub stages: Vec<StageSpec>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        use BlockKind::*;
        Self {
            input_channels: 1,
            input_size: 32,
            stem_channels: 16,
            expansion: 4,
            groups: 4,
            reduction: 4,
            head_width: 128,
            classes: 3,
            stages: vec![
                StageSpec::new("S1", Bottleneck1, 16, 1, true),
                StageSpec::new("S2", Bottleneck2, 24, 2, false),
                StageSpec::new("S3", Bottleneck1, 24, 1, false),
                StageSpec::new("S4", Bottleneck2, 48, 2, true),
                StageSpec::new("S5", Bottleneck1, 48, 1, false),
                StageSpec::new("S6", Bottleneck2, 96, 2, true),
                StageSpec::new("Conv1", Conv1x1, 128, 1, true),
            ],
        }
    }
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("input_size", self.input_size),
            ("stem_channels", self.stem_channels),
            ("expansion", self.expansion),
            ("groups", self.groups),
            ("reduction", self.reduction),
            ("head_width", self.head_width),
            ("classes", self.classes),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("model spec: {key} must be >= 1")));
            }
        }
        let mut names: Vec<&str> = Vec::new();
        let mut channels = self.stem_channels;
        for s in &self.stages {
            if names.contains(&s.name.as_str()) {
                return Err(Error::Config(format!("duplicate stage name '{}'", s.name)));
            }
            names.push(&s.name);
            let expected_stride = match s.block {
                BlockKind::Bottleneck2 => 2,
                BlockKind::Bottleneck1 | BlockKind::Conv1x1 => 1,
            };
            if s.stride != expected_stride {
                return Err(Error::Config(format!(
                    "stage {}: {:?} requires stride {expected_stride}, got {}",
                    s.name, s.block, s.stride
                )));
            }
            if s.block == BlockKind::Bottleneck1 && s.channels != channels {
                return Err(Error::Config(format!(
                    "stage {}: residual block cannot change width {channels} -> {}",
                    s.name, s.channels
                )));
            }
            if s.channels == 0 {
                return Err(Error::Config(format!("stage {}: zero channels", s.name)));
            }
            if s.dgm_enabled {
                DgmConfig::new(s.channels, self.reduction, self.groups)
                    .map_err(|e| Error::Config(format!("stage {}: {e}", s.name)))?;
            }
            channels = s.channels;
        }
        if !self.stages.iter().any(|s| s.dgm_enabled) {
            return Err(Error::Config("at least one stage must enable the DGM".into()));
        }
        let mut size = ConvSpec::new(self.input_channels, self.stem_channels, 3, 2, 1, 1)?
            .output_len(self.input_size)?;
        for s in &self.stages {
            if s.block == BlockKind::Bottleneck2 {
                size = ConvSpec::new(1, 1, 3, 2, 1, 1)?.output_len(size)?;
            }
        }
        if size == 0 {
            return Err(Error::Config("input too small for the stage layout".into()));
        }
        Ok(())
    }

    /// Names of the DGM-enabled stages, in network order. These are the
    /// curriculum stages.
    pub fn curriculum_stages(&self) -> Vec<String> {
        self.stages
            .iter()
            .filter(|s| s.dgm_enabled)
            .map(|s| s.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Bottleneck(Bottleneck),
    Pointwise(ConvLayer),
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    spec: StageSpec,
    block: Block,
    dgm: Option<DgmLayer>,
}

#[derive(Debug, Clone, PartialEq)]
struct FusionHead {
    projections: Vec<LinearLayer>,
    scores: Vec<usize>,
    head: LinearLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamStore,
    stem: ConvLayer,
    stages: Vec<Stage>,
    fusion: FusionHead,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub logits: Var,
    /// Output of each curriculum stage, in curriculum order.
    pub stage_features: Vec<(String, Var)>,
    /// DGM gate of each curriculum stage.
    pub gates: Vec<(String, Var)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub stage_features: BTreeMap<String, Tensor>,
}

pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let stem = ConvLayer::init(
        &mut params,
        &mut rng,
        "stem",
        ConvSpec::new(spec.input_channels, spec.stem_channels, 3, 2, 1, 1)?,
        ParamRole::Backbone,
    )?;
    let mut stages = Vec::with_capacity(spec.stages.len());
    let mut width = spec.stem_channels;
    let mut curriculum_index = 0;
    for s in &spec.stages {
        let block = match s.block {
            BlockKind::Conv1x1 => Block::Pointwise(ConvLayer::init(
                &mut params,
                &mut rng,
                &s.name,
                ConvSpec::pointwise(width, s.channels, 1)?,
                ParamRole::Backbone,
            )?),
            kind => Block::Bottleneck(Bottleneck::init(
                &mut params,
                &mut rng,
                &s.name,
                kind,
                width,
                s.channels,
                spec.expansion,
            )?),
        };
        let dgm = if s.dgm_enabled {
            let cfg = DgmConfig::new(s.channels, spec.reduction, spec.groups)?;
            let layer = DgmLayer::init(
                &mut params,
                &mut rng,
                &format!("{}.dgm", s.name),
                cfg,
                ParamRole::Dgm(curriculum_index),
            )?;
            curriculum_index += 1;
            Some(layer)
        } else {
            None
        };
        stages.push(Stage {
            spec: s.clone(),
            block,
            dgm,
        });
        width = s.channels;
    }
    let mut projections = Vec::new();
    let mut scores = Vec::new();
    for (k, s) in stages.iter().filter(|s| s.dgm.is_some()).enumerate() {
        projections.push(LinearLayer::init(
            &mut params,
            &mut rng,
            &format!("fusion.{}.proj", s.spec.name),
            s.spec.channels,
            spec.head_width,
        ));
        scores.push(params.push(
            format!("fusion.{}.score", s.spec.name),
            Tensor::zeros(&[1]),
            ParamRole::FusionScore(k),
        ));
    }
    let head = LinearLayer::init(&mut params, &mut rng, "head", spec.head_width, spec.classes);
    Ok(Model {
        spec: spec.clone(),
        params,
        stem,
        stages,
        fusion: FusionHead {
            projections,
            scores,
            head,
        },
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Every element of every parameter tensor, biases included.
    pub fn param_count(&self) -> usize {
        self.params.element_count()
    }

    pub fn curriculum_stages(&self) -> Vec<String> {
        self.spec.curriculum_stages()
    }

    /// Every convolution in the network.
    pub fn conv_layers(&self) -> Vec<&ConvLayer> {
        let mut out = vec![&self.stem];
        for s in &self.stages {
            match &s.block {
                Block::Bottleneck(b) => out.extend(b.layers()),
                Block::Pointwise(c) => out.push(c),
            }
            if let Some(d) = &s.dgm {
                out.extend([&d.reduce, &d.expand, &d.fuse]);
            }
        }
        out
    }

    /// Convolution weights inside DGM branches.
    pub fn dgm_weight_count(&self) -> usize {
        self.stages
            .iter()
            .filter_map(|s| s.dgm.as_ref())
            .map(DgmLayer::weight_count)
            .sum()
    }

    /// Whether a parameter of the given role trains while curriculum stage
    /// `active` (0-based) is current. Backbone weights always train.
    pub fn is_trainable(role: ParamRole, active: usize) -> bool {
        match role {
            ParamRole::Backbone => true,
            ParamRole::Dgm(k) | ParamRole::FusionScore(k) => k <= active,
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let s = &self.spec;
        if shape.len() != 4
            || shape[0] == 0
            || shape[1] != s.input_channels
            || shape[2] != s.input_size
            || shape[3] != s.input_size
        {
            return Err(Error::Shape(format!(
                "model expects [N, {}, {}, {}], got {shape:?}",
                s.input_channels, s.input_size, s.input_size
            )));
        }
        Ok(())
    }

    /// Builds the forward pass on `g` using parameter handles from
    /// [`ParamStore::bind`].
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<ForwardVars> {
        self.check_input(g.value(x).shape())?;
        let h = self.stem.apply(g, vars, x)?;
        let mut h = g.relu(h);
        let mut stage_features = Vec::new();
        let mut gates = Vec::new();
        for s in &self.stages {
            h = match &s.block {
                Block::Bottleneck(b) => b.apply(g, vars, h)?,
                Block::Pointwise(c) => {
                    let y = c.apply(g, vars, h)?;
                    g.relu(y)
                }
            };
            if let Some(d) = &s.dgm {
                let out = d.apply(g, vars, h)?;
                h = out.output;
                stage_features.push((s.spec.name.clone(), h));
                gates.push((s.spec.name.clone(), out.weights));
            }
        }
        let mut projected = Vec::with_capacity(stage_features.len());
        for ((_, f), proj) in stage_features.iter().zip(&self.fusion.projections) {
            let pooled = g.pool2d(*f, PoolKind::GlobalAvg, 1)?;
            let flat = g.flatten(pooled)?;
            projected.push(proj.apply(g, vars, flat)?);
        }
        let score_vars: Vec<Var> = self.fusion.scores.iter().map(|&i| vars[i]).collect();
        let scores = g.concat(&score_vars)?;
        let fused = g.fuse(scores, &projected)?;
        let logits = self.fusion.head.apply(g, vars, fused)?;
        Ok(ForwardVars {
            logits,
            stage_features,
            gates,
        })
    }

    /// Inference pass without gradients.
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, |_| false);
        let x = g.input(batch.clone());
        let out = self.forward_graph(&mut g, &vars, x)?;
        Ok(ForwardOutput {
            logits: g.value(out.logits).clone(),
            stage_features: out
                .stage_features
                .iter()
                .map(|(n, v)| (n.clone(), g.value(*v).clone()))
                .collect(),
        })
    }

    /// DGM gate maps per curriculum stage, for interpretability dumps.
    pub fn gate_maps(&self, batch: &Tensor) -> Result<Vec<(String, Tensor)>> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, |_| false);
        let x = g.input(batch.clone());
        let out = self.forward_graph(&mut g, &vars, x)?;
        Ok(out
            .gates
            .iter()
            .map(|(n, v)| (n.clone(), g.value(*v).clone()))
            .collect())
    }

    /// Softmax-normalised fusion weights, in curriculum order.
    pub fn fusion_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = self
            .fusion
            .scores
            .iter()
            .map(|&i| self.params.tensors()[i].item())
            .collect();
        crate::autodiff::softmax(&raw)
    }

    /// Writes `path` (JSON manifest) and its `.bin` blob. `meta` is stored
    /// next to the model spec.
    pub fn save(&self, path: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let meta = serde_json::json!({ "model_spec": self.spec, "extra": meta });
        checkpoint::save(path, &self.params.named(), meta)
    }

    /// Loads a checkpoint written by [`Model::save`]; returns the model and
    /// the caller's metadata.
    pub fn load(path: impl AsRef<Path>) -> Result<(Model, serde_json::Value)> {
        let (manifest, tensors) = checkpoint::load(path)?;
        let spec: ModelSpec = serde_json::from_value(
            manifest
                .meta
                .get("model_spec")
                .cloned()
                .ok_or_else(|| Error::Corrupt("checkpoint lacks a model spec".into()))?,
        )?;
        let mut model = build_model(&spec, 0)?;
        model.params.assign(tensors)?;
        let extra = manifest.meta.get("extra").cloned().unwrap_or(serde_json::Value::Null);
        Ok((model, extra))
    }
}

//! Experiment configuration: a flat key=value file plus flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vsconv::mapping::PeArrayConfig;
use vsconv::tensor::{ConvLayerSpec, ElemWidth};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSet {
    /// The built-in 13-conv-layer catalog, spatially divided by `scale`.
    Vgg16 { scale: usize },
    Explicit(Vec<ConvLayerSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputModel {
    /// Load the first layer's sparse input from a file; later layers
    /// propagate through the post-processing unit.
    File(PathBuf),
    /// Independent per-vector Bernoulli(p) occupancy, fresh per layer.
    Bernoulli(f64),
    /// Each layer consumes the previous layer's post-processed output.
    ReluPropagated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pe: PeArrayConfig,
    pub layers: LayerSet,
    pub weight_density: f64,
    pub input_model: InputModel,
    pub seed: u64,
    pub width: ElemWidth,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            pe: PeArrayConfig::new(4, 14, 3).expect("reference config"),
            layers: LayerSet::Vgg16 { scale: 8 },
            weight_density: 0.235,
            input_model: InputModel::ReluPropagated,
            seed: 42,
            width: ElemWidth::W8,
            out: None,
        }
    }
}

pub fn parse_pe(s: &str) -> Result<PeArrayConfig> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("PE config must be B,R,C, got {s:?}");
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().with_context(|| format!("bad PE field {p:?}")))
        .collect::<Result<_>>()?;
    Ok(PeArrayConfig::new(nums[0], nums[1], nums[2])?)
}

pub fn parse_input_model(s: &str) -> Result<InputModel> {
    if s == "relu-propagated" {
        return Ok(InputModel::ReluPropagated);
    }
    if let Some(p) = s.strip_prefix("bernoulli:") {
        let p: f64 = p.parse().with_context(|| format!("bad bernoulli p {p:?}"))?;
        if !(0.0..=1.0).contains(&p) {
            bail!("bernoulli p {p} outside [0, 1]");
        }
        return Ok(InputModel::Bernoulli(p));
    }
    if let Some(path) = s.strip_prefix("file:") {
        return Ok(InputModel::File(PathBuf::from(path)));
    }
    bail!("unknown input model {s:?} (expected relu-propagated, bernoulli:<p>, or file:<path>)")
}

/// `in_c x h x w x out_c` quadruple, e.g. `64x28x28x64`.
pub fn parse_layer(s: &str) -> Result<ConvLayerSpec> {
    let parts: Vec<&str> = s.split('x').map(str::trim).collect();
    if parts.len() != 4 {
        bail!("layer must be in_c x h x w x out_c, got {s:?}");
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().with_context(|| format!("bad layer field {p:?}")))
        .collect::<Result<_>>()?;
    Ok(ConvLayerSpec::unit3x3(nums[0], nums[1], nums[2], nums[3]))
}

fn parse_layers(s: &str, scale: usize) -> Result<LayerSet> {
    if s == "vgg16" {
        return Ok(LayerSet::Vgg16 { scale });
    }
    let layers = s
        .split(';')
        .map(parse_layer)
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        bail!("empty layer list");
    }
    Ok(LayerSet::Explicit(layers))
}

impl ExperimentConfig {
    /// Parse the flat `key = value` format. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut layers_spec: Option<String> = None;
        let mut scale = 8usize;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", ln + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "pe" => cfg.pe = parse_pe(value)?,
                "layers" => layers_spec = Some(value.to_string()),
                "scale" => scale = value.parse().with_context(|| format!("line {}: bad scale", ln + 1))?,
                "weight_density" => {
                    cfg.weight_density = value
                        .parse()
                        .with_context(|| format!("line {}: bad weight_density", ln + 1))?
                }
                "input_model" => cfg.input_model = parse_input_model(value)?,
                "seed" => cfg.seed = value.parse().with_context(|| format!("line {}: bad seed", ln + 1))?,
                "dtype" => {
                    let code: u8 = value.parse().with_context(|| format!("line {}: bad dtype", ln + 1))?;
                    cfg.width = ElemWidth::from_code(code)
                        .with_context(|| format!("line {}: unknown dtype code {code}", ln + 1))?;
                }
                "out" => cfg.out = Some(PathBuf::from(value)),
                other => bail!("line {}: unknown key {other:?}", ln + 1),
            }
        }
        cfg.layers = parse_layers(layers_spec.as_deref().unwrap_or("vgg16"), scale)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse_text(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_density > 0.0 && self.weight_density <= 1.0) {
            bail!("weight_density {} outside (0, 1]", self.weight_density);
        }
        if let LayerSet::Vgg16 { scale } = self.layers {
            crate::catalog::vgg16(scale)?;
        }
        Ok(())
    }

    pub fn set_scale(&mut self, scale: usize) {
        if let LayerSet::Vgg16 { scale: s } = &mut self.layers {
            *s = scale;
        }
    }

    /// The concrete layer list with names.
    pub fn resolve_layers(&self) -> Result<Vec<(String, ConvLayerSpec)>> {
        match &self.layers {
            LayerSet::Vgg16 { scale } => crate::catalog::vgg16(*scale),
            LayerSet::Explicit(list) => Ok(list
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("layer{}", i + 1), *s))
                .collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# experiment
pe = 8,7,3
layers = vgg16
scale = 4
weight_density = 0.235
input_model = bernoulli:0.5
seed = 7
dtype = 0
out = results
";
        let cfg = ExperimentConfig::parse_text(text).unwrap();
        assert_eq!(cfg.pe, PeArrayConfig::new(8, 7, 3).unwrap());
        assert_eq!(cfg.layers, LayerSet::Vgg16 { scale: 4 });
        assert_eq!(cfg.input_model, InputModel::Bernoulli(0.5));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.out, Some(PathBuf::from("results")));
    }

    #[test]
    fn parses_explicit_layers() {
        let cfg = ExperimentConfig::parse_text("layers = 3x8x8x4;4x8x8x4\n").unwrap();
        match cfg.layers {
            LayerSet::Explicit(ref l) => {
                assert_eq!(l.len(), 2);
                assert_eq!(l[0].in_c, 3);
                assert_eq!(l[1].out_c, 4);
            }
            _ => panic!("expected explicit layers"),
        }
    }

    #[test]
    fn rejects_bad_keys_and_values() {
        assert!(ExperimentConfig::parse_text("bogus = 1\n").is_err());
        assert!(ExperimentConfig::parse_text("pe = 4,14\n").is_err());
        assert!(ExperimentConfig::parse_text("weight_density = 0\n").is_err());
        assert!(ExperimentConfig::parse_text("input_model = nope\n").is_err());
        // 224 not divisible by the scale factor.
        assert!(ExperimentConfig::parse_text("scale = 10\n").is_err());
    }
}

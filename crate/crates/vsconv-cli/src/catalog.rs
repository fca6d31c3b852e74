//! Built-in VGG-16 convolution layer catalog.
//!
//! Thirteen 3x3 conv layers at the standard 224x224 input resolution, with
//! a spatial scale divisor for desk-scale runs: the base resolution must
//! divide evenly, and each pooling step afterwards halves with floor (and
//! a floor of one pixel), the way the real network's feature maps shrink.

use anyhow::{bail, Result};
use vsconv::tensor::ConvLayerSpec;

const BASE_RES: usize = 224;

/// (name, in_c, out_c, pool_before) for the 13 conv layers.
const LAYERS: [(&str, usize, usize, bool); 13] = [
    ("conv1_1", 3, 64, false),
    ("conv1_2", 64, 64, false),
    ("conv2_1", 64, 128, true),
    ("conv2_2", 128, 128, false),
    ("conv3_1", 128, 256, true),
    ("conv3_2", 256, 256, false),
    ("conv3_3", 256, 256, false),
    ("conv4_1", 256, 512, true),
    ("conv4_2", 512, 512, false),
    ("conv4_3", 512, 512, false),
    ("conv5_1", 512, 512, true),
    ("conv5_2", 512, 512, false),
    ("conv5_3", 512, 512, false),
];

/// Spatial size after one 2x2 pooling step.
pub fn pooled(dim: usize) -> usize {
    (dim / 2).max(1)
}

pub fn vgg16(scale: usize) -> Result<Vec<(String, ConvLayerSpec)>> {
    if scale == 0 || !BASE_RES.is_multiple_of(scale) {
        bail!("scale factor {scale} does not divide the {BASE_RES} base resolution evenly");
    }
    let mut size = BASE_RES / scale;
    let mut out = Vec::with_capacity(LAYERS.len());
    for (name, in_c, out_c, pool_before) in LAYERS {
        if pool_before {
            size = pooled(size);
        }
        out.push((name.to_string(), ConvLayerSpec::unit3x3(in_c, size, size, out_c)));
    }
    Ok(out)
}

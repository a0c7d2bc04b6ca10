//! Forward inference for the analysis, synthesis and scale-predictor networks.

pub mod ops;
pub mod spec;
pub mod weights;

pub use ops::{conv2d, deconv2d, gdn, relu};
pub use spec::{LayerKind, LayerSpec, NetworkSpec, StackId};
pub use weights::{ModelHash, WeightStore};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Applies `stack` (stored under `id` in `weights`) to `input`, layer by layer.
pub fn run_stack(input: &Tensor, id: StackId, stack: &[LayerSpec], weights: &WeightStore) -> Result<Tensor> {
    let mut cur = input.clone();
    for (i, layer) in stack.iter().enumerate() {
        if layer.in_channels != cur.channels() {
            return invalid(format!(
                "{id} layer {i}: expects {} channels, got {}",
                layer.in_channels,
                cur.channels()
            ));
        }
        cur = match layer.kind {
            LayerKind::Conv => conv2d(
                &cur,
                weights.layer_param(id, i, "weight")?,
                &weights.layer_param(id, i, "bias")?.data,
                layer.stride,
                layer.padding,
            )?,
            LayerKind::Deconv => deconv2d(
                &cur,
                weights.layer_param(id, i, "weight")?,
                &weights.layer_param(id, i, "bias")?.data,
                layer.stride,
                layer.padding,
                layer.output_padding,
            )?,
            LayerKind::Gdn | LayerKind::Igdn => gdn(
                &cur,
                &weights.layer_param(id, i, "beta")?.data,
                weights.layer_param(id, i, "gamma")?,
                layer.kind == LayerKind::Igdn,
            )?,
            LayerKind::Relu => relu(&cur),
        };
    }
    Ok(cur)
}

/// Runs the stack that `weights`' own network declares under `id`.
pub fn run_named(input: &Tensor, id: StackId, weights: &WeightStore) -> Result<Tensor> {
    let Some(stack) = weights.network().stack(id) else {
        return Err(crate::Error::Lookup(format!("no stack {id}")));
    };
    run_stack(input, id, stack, weights)
}

//! Data-driven description of the analysis, synthesis and scale-predictor stacks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Filters used by convolutions that do not touch a latent.
pub const DEFAULT_HIDDEN_FILTERS: usize = 70;
/// Channel count shared by every latent.
pub const DEFAULT_LATENT_CHANNELS: usize = 150;
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Deconv,
    Gdn,
    Igdn,
    Relu,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        !matches!(self, LayerKind::Relu)
    }

    pub fn is_convolution(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Deconv)
    }
}

/// One layer of a stack. Kernel, stride and padding are ignored for
/// the elementwise kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub output_padding: usize,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    /// "Same"-padded convolution.
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            output_padding: 0,
        }
    }

    /// Transposed convolution that multiplies spatial size by exactly `stride`.
    pub fn deconv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Deconv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            output_padding: stride - 1,
        }
    }

    fn elementwise(kind: LayerKind, channels: usize) -> Self {
        Self {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: 0,
            stride: 1,
            padding: 0,
            output_padding: 0,
        }
    }

    pub fn gdn(channels: usize) -> Self {
        Self::elementwise(LayerKind::Gdn, channels)
    }

    pub fn igdn(channels: usize) -> Self {
        Self::elementwise(LayerKind::Igdn, channels)
    }

    pub fn relu(channels: usize) -> Self {
        Self::elementwise(LayerKind::Relu, channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return invalid(format!("{:?} layer with zero channels", self.kind));
        }
        if self.kind.is_convolution() {
            if !matches!(self.kernel, 3 | 5) {
                return invalid(format!("kernel {} not in {{3, 5}}", self.kernel));
            }
            if !matches!(self.stride, 1 | 2) {
                return invalid(format!("stride {} not in {{1, 2}}", self.stride));
            }
            if self.padding >= self.kernel {
                return invalid(format!("padding {} >= kernel {}", self.padding, self.kernel));
            }
            if self.kind == LayerKind::Conv && self.output_padding != 0 {
                return invalid("output padding only applies to deconv layers");
            }
            if self.output_padding >= self.stride {
                return invalid("output padding must be below stride");
            }
        } else if self.in_channels != self.out_channels {
            return invalid(format!(
                "{:?} layer must preserve channels ({} -> {})",
                self.kind, self.in_channels, self.out_channels
            ));
        }
        Ok(())
    }

    /// Output `(channels, height, width)` for a given input extent.
    pub fn output_shape(&self, height: usize, width: usize) -> Option<(usize, usize, usize)> {
        use crate::nn::ops::{conv_output_len, deconv_output_len};
        let (h, w) = match self.kind {
            LayerKind::Conv => (
                conv_output_len(height, self.kernel, self.stride, self.padding)?,
                conv_output_len(width, self.kernel, self.stride, self.padding)?,
            ),
            LayerKind::Deconv => (
                deconv_output_len(height, self.kernel, self.stride, self.padding, self.output_padding)?,
                deconv_output_len(width, self.kernel, self.stride, self.padding, self.output_padding)?,
            ),
            _ => (height, width),
        };
        Some((self.out_channels, h, w))
    }
}

/// Propagates a shape through a stack, checking channel compatibility.
pub fn stack_output_shape(
    stack: &[LayerSpec],
    shape: (usize, usize, usize),
) -> Result<(usize, usize, usize)> {
    let mut cur = shape;
    for (i, layer) in stack.iter().enumerate() {
        if layer.in_channels != cur.0 {
            return invalid(format!(
                "layer {i} expects {} channels, receives {}",
                layer.in_channels, cur.0
            ));
        }
        cur = layer.output_shape(cur.1, cur.2).ok_or_else(|| {
            crate::Error::InvalidArgument(format!("layer {i} cannot process {}x{}", cur.1, cur.2))
        })?;
    }
    Ok(cur)
}

/// Identifies one stack of a [`NetworkSpec`]. Layer numbers are 1-based like
/// the latents they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StackId {
    /// `z_{l-1} -> z_l` (`z_0` is the image).
    Analysis(usize),
    /// `z_1 -> x̂`.
    Synthesis,
    /// `z̃_{l+1} -> log σ_l`.
    Scale(usize),
}

impl std::fmt::Display for StackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StackId::Analysis(l) => write!(f, "analysis{l}"),
            StackId::Synthesis => write!(f, "synthesis1"),
            StackId::Scale(l) => write!(f, "scale{l}"),
        }
    }
}

/// Full description of an `L`-level model.
///
/// The decoder side of layer 1 reconstructs the image; the decoder side of
/// every deeper layer `l + 1` predicts the scale field of `z_l`, so the
/// scale stacks double as the synthesis stacks of layers `2..=L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub levels: usize,
    pub latent_channels: usize,
    pub image_channels: usize,
    /// `analysis[l - 1]` maps `z_{l-1}` to `z_l`.
    pub analysis: Vec<Vec<LayerSpec>>,
    /// Maps `z̃_1` to the image.
    pub synthesis: Vec<LayerSpec>,
    /// `scale[l - 1]` maps `z̃_{l+1}` to `log σ_l`, for `l = 1..L-1`.
    pub scale: Vec<Vec<LayerSpec>>,
}

impl NetworkSpec {
    /// Default architecture with `levels` latent layers, `hidden` filters
    /// and `latent` latent channels.
    pub fn with_channels(levels: usize, hidden: usize, latent: usize) -> Result<Self> {
        if levels == 0 {
            return invalid("a model needs at least one latent layer");
        }
        let img = IMAGE_CHANNELS;
        let mut analysis = vec![vec![
            LayerSpec::conv(img, hidden, 5, 2),
            LayerSpec::gdn(hidden),
            LayerSpec::conv(hidden, latent, 5, 2),
        ]];
        for _ in 1..levels {
            analysis.push(vec![
                LayerSpec::conv(latent, hidden, 3, 1),
                LayerSpec::relu(hidden),
                LayerSpec::conv(hidden, latent, 5, 2),
            ]);
        }
        let synthesis = vec![
            LayerSpec::deconv(latent, hidden, 3, 2),
            LayerSpec::igdn(hidden),
            LayerSpec::deconv(hidden, img, 5, 2),
        ];
        let scale = (1..levels)
            .map(|_| {
                vec![
                    LayerSpec::deconv(latent, hidden, 3, 2),
                    LayerSpec::relu(hidden),
                    LayerSpec::conv(hidden, latent, 3, 1),
                ]
            })
            .collect();
        let spec = Self {
            levels,
            latent_channels: latent,
            image_channels: img,
            analysis,
            synthesis,
            scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn default_for_levels(levels: usize) -> Result<Self> {
        Self::with_channels(levels, DEFAULT_HIDDEN_FILTERS, DEFAULT_LATENT_CHANNELS)
    }

    pub fn stack(&self, id: StackId) -> Option<&[LayerSpec]> {
        match id {
            StackId::Analysis(l) => self.analysis.get(l.checked_sub(1)?).map(Vec::as_slice),
            StackId::Synthesis => Some(&self.synthesis),
            StackId::Scale(l) => self.scale.get(l.checked_sub(1)?).map(Vec::as_slice),
        }
    }

    /// Every stack with its id, in a fixed order.
    pub fn stacks(&self) -> Vec<(StackId, &[LayerSpec])> {
        let mut out = Vec::new();
        for (i, s) in self.analysis.iter().enumerate() {
            out.push((StackId::Analysis(i + 1), s.as_slice()));
        }
        out.push((StackId::Synthesis, self.synthesis.as_slice()));
        for (i, s) in self.scale.iter().enumerate() {
            out.push((StackId::Scale(i + 1), s.as_slice()));
        }
        out
    }

    fn stack_stride(stack: &[LayerSpec], kind: LayerKind) -> usize {
        stack
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.stride)
            .product()
    }

    /// Spatial downsampling of `z_l` relative to the image, per layer.
    pub fn layer_factors(&self) -> Vec<usize> {
        let mut f = 1;
        self.analysis
            .iter()
            .map(|s| {
                f *= Self::stack_stride(s, LayerKind::Conv);
                f
            })
            .collect()
    }

    /// Image dimensions must be a multiple of this.
    pub fn total_downsampling(&self) -> usize {
        self.layer_factors().last().copied().unwrap_or(1)
    }

    /// Latent shapes `(M, h_l, w_l)` for an image of compliant size.
    pub fn latent_shapes(&self, height: usize, width: usize) -> Result<Vec<(usize, usize, usize)>> {
        let f = self.total_downsampling();
        if height == 0 || width == 0 || !height.is_multiple_of(f) || !width.is_multiple_of(f) {
            return invalid(format!(
                "{width}x{height} is not a positive multiple of the downsampling factor {f}"
            ));
        }
        let mut shape = (self.image_channels, height, width);
        let mut out = Vec::with_capacity(self.levels);
        for stack in &self.analysis {
            shape = stack_output_shape(stack, shape)?;
            out.push(shape);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return invalid("levels must be >= 1");
        }
        if self.analysis.len() != self.levels {
            return invalid(format!(
                "{} analysis stacks for {} levels",
                self.analysis.len(),
                self.levels
            ));
        }
        if self.scale.len() != self.levels - 1 {
            return invalid(format!(
                "{} scale stacks for {} levels (need levels - 1)",
                self.scale.len(),
                self.levels
            ));
        }
        for (id, stack) in self.stacks() {
            for layer in stack {
                layer
                    .validate()
                    .map_err(|e| crate::Error::InvalidArgument(format!("{id}: {e}")))?;
            }
        }
        for (l, stack) in self.analysis.iter().enumerate() {
            if stack.iter().any(|s| s.kind == LayerKind::Deconv) {
                return invalid(format!("analysis{} contains a deconv layer", l + 1));
            }
            let out = stack.last().map(|s| s.out_channels);
            if out != Some(self.latent_channels) {
                return invalid(format!("analysis{} must end in {} channels", l + 1, self.latent_channels));
            }
        }
        if self.synthesis.last().map(|s| s.out_channels) != Some(self.image_channels) {
            return invalid("synthesis must end in the image channel count");
        }
        for (l, stack) in self.scale.iter().enumerate() {
            if stack.last().map(|s| s.out_channels) != Some(self.latent_channels) {
                return invalid(format!("scale{} must end in {} channels", l + 1, self.latent_channels));
            }
        }
        // Shape symmetry on the smallest compliant size; larger multiples follow.
        let f = self.total_downsampling();
        let shapes = self.latent_shapes(f, f)?;
        let up = stack_output_shape(&self.synthesis, shapes[0])?;
        if up != (self.image_channels, f, f) {
            return invalid(format!("synthesis maps {:?} to {up:?}, expected {f}x{f}", shapes[0]));
        }
        for l in 1..self.levels {
            let got = stack_output_shape(&self.scale[l - 1], shapes[l])?;
            if got != shapes[l - 1] {
                return invalid(format!(
                    "scale{l} maps {:?} to {got:?}, expected {:?}",
                    shapes[l],
                    shapes[l - 1]
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_uses_paper_filter_counts() {
        let spec = NetworkSpec::default_for_levels(3).unwrap();
        assert_eq!(spec.latent_channels, 150);
        assert_eq!(spec.analysis[0][0].out_channels, 70);
        assert_eq!(spec.analysis[0][1].kind, LayerKind::Gdn);
        assert_eq!(spec.analysis[1][1].kind, LayerKind::Relu);
        assert_eq!(spec.synthesis[1].kind, LayerKind::Igdn);
        assert_eq!(spec.scale.len(), 2);
        assert_eq!(spec.layer_factors(), vec![4, 8, 16]);
    }

    #[test]
    fn latent_shapes_halve_per_layer() {
        let spec = NetworkSpec::default_for_levels(4).unwrap();
        let shapes = spec.latent_shapes(256, 256).unwrap();
        assert_eq!(shapes, vec![(150, 64, 64), (150, 32, 32), (150, 16, 16), (150, 8, 8)]);
        assert!(spec.latent_shapes(100, 256).is_err());
    }

    #[test]
    fn validation_catches_bad_stacks() {
        let mut spec = NetworkSpec::default_for_levels(2).unwrap();
        spec.analysis[1][0].kernel = 4;
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::default_for_levels(2).unwrap();
        spec.scale.clear();
        assert!(spec.validate().is_err());

        let mut spec = NetworkSpec::default_for_levels(2).unwrap();
        spec.synthesis[0].output_padding = 0;
        assert!(spec.validate().is_err());

        assert!(NetworkSpec::default_for_levels(0).is_err());
    }

    #[test]
    fn spec_serializes_round_trip() {
        let spec = NetworkSpec::default_for_levels(2).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}

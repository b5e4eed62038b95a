//! From-scratch convolutional Q-network.
//!
//! Fixed architecture: two strided valid convolutions (relu), flatten,
//! one relu dense layer, one linear head. Parameters live in a single
//! flat `f32` vector in a canonical order (conv kernels as
//! `[filter][in-channel][row][col]` followed by biases, dense weights as
//! `[out][in]` followed by biases), which keeps the optimizer, gradient
//! buffers and checkpoints trivially congruent.

mod adam;
mod checkpoint;
mod ops;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use ops::{backward, forward, forward_cached, BackwardScratch, ForwardCache};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("activation cache does not match this parameter set")]
    CacheMismatch,
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One convolution layer: `filters` output channels, valid padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
}

impl ConvLayerSpec {
    fn out_dim(input: usize, kernel: usize, stride: usize) -> usize {
        (input - kernel) / stride + 1
    }

    pub fn output_shape(&self, in_h: usize, in_w: usize) -> (usize, usize) {
        (
            Self::out_dim(in_h, self.kernel_h, self.stride),
            Self::out_dim(in_w, self.kernel_w, self.stride),
        )
    }
}

/// Shapes of the whole network: conv stack, hidden width and head size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_h: usize,
    pub input_w: usize,
    pub input_c: usize,
    pub conv1: ConvLayerSpec,
    pub conv2: ConvLayerSpec,
    pub hidden: usize,
    pub outputs: usize,
}

/// Per-layer and total trainable parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub conv1: usize,
    pub conv2: usize,
    pub dense1: usize,
    pub dense2: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.conv1 + self.conv2 + self.dense1 + self.dense2
    }
}

const KERNEL: usize = 4;
const STRIDE: usize = 4;

impl NetworkSpec {
    /// Builds the standard stack (16/32 filters, 128 hidden units, 5
    /// outputs) for an `h x w x 3` input.
    pub fn for_input(input_h: usize, input_w: usize) -> Result<Self, NeuralError> {
        Self::new(input_h, input_w, [16, 32], 128, 5)
    }

    /// Builds the conv stack for arbitrary sizes. The nominal 4x4/stride-4
    /// kernels are clamped per axis to the incoming spatial dims so that
    /// small inputs (reduced `cell_pixels`) still produce a valid network.
    pub fn new(
        input_h: usize,
        input_w: usize,
        conv_filters: [usize; 2],
        hidden: usize,
        outputs: usize,
    ) -> Result<Self, NeuralError> {
        if input_h == 0 || input_w == 0 {
            return Err(NeuralError::InvalidSpec(format!(
                "input dims must be positive, got {input_h}x{input_w}"
            )));
        }
        if conv_filters.contains(&0) || hidden == 0 || outputs == 0 {
            return Err(NeuralError::InvalidSpec(
                "layer widths must be positive".into(),
            ));
        }
        let conv1 = ConvLayerSpec {
            filters: conv_filters[0],
            kernel_h: KERNEL.min(input_h),
            kernel_w: KERNEL.min(input_w),
            stride: STRIDE,
        };
        let (h1, w1) = conv1.output_shape(input_h, input_w);
        let conv2 = ConvLayerSpec {
            filters: conv_filters[1],
            kernel_h: KERNEL.min(h1),
            kernel_w: KERNEL.min(w1),
            stride: STRIDE,
        };
        Ok(Self {
            input_h,
            input_w,
            input_c: 3,
            conv1,
            conv2,
            hidden,
            outputs,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_h * self.input_w * self.input_c
    }

    /// (h, w, channels) after the first convolution.
    pub fn conv1_output(&self) -> (usize, usize, usize) {
        let (h, w) = self.conv1.output_shape(self.input_h, self.input_w);
        (h, w, self.conv1.filters)
    }

    /// (h, w, channels) after the second convolution.
    pub fn conv2_output(&self) -> (usize, usize, usize) {
        let (h1, w1) = self.conv1.output_shape(self.input_h, self.input_w);
        let (h, w) = self.conv2.output_shape(h1, w1);
        (h, w, self.conv2.filters)
    }

    pub fn flatten_len(&self) -> usize {
        let (h, w, c) = self.conv2_output();
        h * w * c
    }

    pub fn param_counts(&self) -> ParamCounts {
        let c1 = (self.conv1.kernel_h * self.conv1.kernel_w * self.input_c + 1) * self.conv1.filters;
        let c2 = (self.conv2.kernel_h * self.conv2.kernel_w * self.conv1.filters + 1)
            * self.conv2.filters;
        let d1 = (self.flatten_len() + 1) * self.hidden;
        let d2 = (self.hidden + 1) * self.outputs;
        ParamCounts {
            conv1: c1,
            conv2: c2,
            dense1: d1,
            dense2: d2,
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        let c1w = self.conv1.filters * self.input_c * self.conv1.kernel_h * self.conv1.kernel_w;
        let c2w = self.conv2.filters * self.conv1.filters * self.conv2.kernel_h * self.conv2.kernel_w;
        let d1w = self.hidden * self.flatten_len();
        let d2w = self.outputs * self.hidden;
        let mut offset = 0;
        let mut next = |len: usize| {
            let range = offset..offset + len;
            offset += len;
            range
        };
        Layout {
            conv1_w: next(c1w),
            conv1_b: next(self.conv1.filters),
            conv2_w: next(c2w),
            conv2_b: next(self.conv2.filters),
            dense1_w: next(d1w),
            dense1_b: next(self.hidden),
            dense2_w: next(d2w),
            dense2_b: next(self.outputs),
            total: offset,
        }
    }
}

/// Offsets of each layer's weights and biases in the flat value vector.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
    pub dense1_w: Range<usize>,
    pub dense1_b: Range<usize>,
    pub dense2_w: Range<usize>,
    pub dense2_b: Range<usize>,
    pub total: usize,
}

/// All trainable weights and biases of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    spec: NetworkSpec,
    values: Vec<f32>,
}

impl ParameterSet {
    /// All-zero parameters.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let total = spec.layout().total;
        Self {
            spec,
            values: vec![0.0; total],
        }
    }

    pub(crate) fn from_values(spec: NetworkSpec, values: Vec<f32>) -> Result<Self, NeuralError> {
        let expected = spec.layout().total;
        if values.len() != expected {
            return Err(NeuralError::LengthMismatch {
                what: "parameter vector",
                expected,
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat view in canonical order.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Gradient buffer congruent to this parameter set, zero-filled.
    pub fn zero_gradients(&self) -> Vec<f32> {
        vec![0.0; self.values.len()]
    }
}

/// Random initialization: He-uniform bounds for the relu layers,
/// Glorot-uniform for the linear head, zero biases. Deterministic for a
/// given seed.
pub fn init_network(spec: NetworkSpec, seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = spec.layout();
    let mut values = vec![0.0f32; layout.total];

    let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt() as f32;
    let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;

    let fills: [(Range<usize>, f32); 4] = [
        (
            layout.conv1_w.clone(),
            he(spec.input_c * spec.conv1.kernel_h * spec.conv1.kernel_w),
        ),
        (
            layout.conv2_w.clone(),
            he(spec.conv1.filters * spec.conv2.kernel_h * spec.conv2.kernel_w),
        ),
        (layout.dense1_w.clone(), he(spec.flatten_len())),
        (layout.dense2_w.clone(), glorot(spec.hidden, spec.outputs)),
    ];
    for (range, limit) in fills {
        for v in &mut values[range] {
            *v = rng.random_range(-limit..limit);
        }
    }
    ParameterSet { spec, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_spec() -> NetworkSpec {
        NetworkSpec::for_input(48, 1280).unwrap()
    }

    #[test]
    fn full_size_shapes() {
        let spec = full_spec();
        assert_eq!(spec.conv1_output(), (12, 320, 16));
        assert_eq!(spec.conv2_output(), (3, 80, 32));
        assert_eq!(spec.flatten_len(), 7680);
        assert_eq!(spec.hidden, 128);
        assert_eq!(spec.outputs, 5);
    }

    #[test]
    fn full_size_param_counts() {
        let counts = full_spec().param_counts();
        assert_eq!(counts.conv1, 784);
        assert_eq!(counts.conv2, 8224);
        assert_eq!(counts.dense1, 983_168);
        assert_eq!(counts.dense2, 645);
        assert_eq!(counts.total(), 992_821);
    }

    #[test]
    fn conv_shape_algebra() {
        // floor((in - kernel) / stride) + 1 per axis.
        let spec = full_spec();
        assert_eq!((48 - 4) / 4 + 1, spec.conv1_output().0);
        assert_eq!((1280 - 4) / 4 + 1, spec.conv1_output().1);
        assert_eq!((12 - 4) / 4 + 1, spec.conv2_output().0);
        assert_eq!((320 - 4) / 4 + 1, spec.conv2_output().1);
    }

    #[test]
    fn small_input_clamps_kernels() {
        // 12x320 input: conv1 output height is 3, smaller than the
        // nominal 4x4 kernel, so conv2's kernel height clamps to 3.
        let spec = NetworkSpec::for_input(12, 320).unwrap();
        assert_eq!(spec.conv1_output(), (3, 80, 16));
        assert_eq!(spec.conv2.kernel_h, 3);
        assert_eq!(spec.conv2.kernel_w, 4);
        assert_eq!(spec.conv2_output(), (1, 20, 32));
        assert_eq!(spec.flatten_len(), 640);
    }

    #[test]
    fn layout_is_contiguous_and_total_matches_counts() {
        for spec in [full_spec(), NetworkSpec::for_input(12, 320).unwrap()] {
            let layout = spec.layout();
            assert_eq!(layout.conv1_w.start, 0);
            assert_eq!(layout.conv1_w.end, layout.conv1_b.start);
            assert_eq!(layout.dense2_b.end, layout.total);
            assert_eq!(layout.total, spec.param_counts().total());
        }
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let spec = NetworkSpec::new(8, 16, [4, 6], 8, 5).unwrap();
        let a = init_network(spec, 42);
        let b = init_network(spec, 42);
        assert_eq!(a.values(), b.values());
        let c = init_network(spec, 43);
        assert_ne!(a.values(), c.values());

        let layout = spec.layout();
        for range in [
            layout.conv1_b.clone(),
            layout.conv2_b.clone(),
            layout.dense1_b.clone(),
            layout.dense2_b.clone(),
        ] {
            assert!(a.values()[range].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_respects_he_uniform_bound() {
        let params = init_network(full_spec(), 0);
        let layout = params.spec().layout();
        let limit = (6.0f64 / 48.0).sqrt() as f32;
        for &w in &params.values()[layout.conv1_w.clone()] {
            assert!(w.abs() <= limit, "conv1 weight {w} beyond He bound {limit}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(NetworkSpec::new(0, 16, [4, 6], 8, 5).is_err());
        assert!(NetworkSpec::new(8, 16, [0, 6], 8, 5).is_err());
        assert!(NetworkSpec::new(8, 16, [4, 6], 0, 5).is_err());
    }
}

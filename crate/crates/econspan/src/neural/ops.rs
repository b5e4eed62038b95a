//! Forward pass and exact reverse-mode gradients.
//!
//! Activations are stored post-relu; a post-activation of zero carries a
//! zero gradient, which realizes relu'(x) = 0 for x <= 0. Dot products
//! accumulate in eight fixed lanes so the compiler can vectorize them
//! without changing the summation order between runs.

use super::{NetworkSpec, NeuralError, ParameterSet};

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let pa = &a[i * 8..i * 8 + 8];
        let pb = &b[i * 8..i * 8 + 8];
        for lane in 0..8 {
            acc[lane] += pa[lane] * pb[lane];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
    for i in chunks * 8..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

#[inline]
fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Intermediate activations of one forward pass, reusable across calls.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) input: Vec<f32>,
    pub(crate) conv1: Vec<f32>,
    pub(crate) conv2: Vec<f32>,
    pub(crate) hidden: Vec<f32>,
    pub(crate) q: Vec<f32>,
    patch: Vec<f32>,
}

impl ForwardCache {
    pub fn new(spec: &NetworkSpec) -> Self {
        let (h1, w1, c1) = spec.conv1_output();
        let (h2, w2, c2) = spec.conv2_output();
        let patch1 = spec.input_c * spec.conv1.kernel_h * spec.conv1.kernel_w;
        let patch2 = spec.conv1.filters * spec.conv2.kernel_h * spec.conv2.kernel_w;
        Self {
            input: vec![0.0; spec.input_len()],
            conv1: vec![0.0; h1 * w1 * c1],
            conv2: vec![0.0; h2 * w2 * c2],
            hidden: vec![0.0; spec.hidden],
            q: vec![0.0; spec.outputs],
            patch: vec![0.0; patch1.max(patch2)],
        }
    }

    /// Q values from the latest forward pass.
    pub fn q(&self) -> &[f32] {
        &self.q
    }

    /// First conv layer activations (post-relu), HWC layout.
    pub fn conv1_activations(&self) -> &[f32] {
        &self.conv1
    }

    /// Second conv layer activations (post-relu), HWC layout.
    pub fn conv2_activations(&self) -> &[f32] {
        &self.conv2
    }

    /// Hidden dense layer activations (post-relu).
    pub fn hidden_activations(&self) -> &[f32] {
        &self.hidden
    }

    fn matches(&self, spec: &NetworkSpec) -> bool {
        let (h1, w1, c1) = spec.conv1_output();
        let (h2, w2, c2) = spec.conv2_output();
        self.input.len() == spec.input_len()
            && self.conv1.len() == h1 * w1 * c1
            && self.conv2.len() == h2 * w2 * c2
            && self.hidden.len() == spec.hidden
            && self.q.len() == spec.outputs
    }
}

/// Gathers the receptive field at (`oy`, `ox`) from an HWC tensor into
/// `patch` using the kernel's `[channel][row][col]` order.
#[inline]
fn gather_patch(
    input: &[f32],
    in_w: usize,
    in_c: usize,
    oy: usize,
    ox: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    patch: &mut [f32],
) {
    let mut p = 0;
    for ch in 0..in_c {
        for ky in 0..kernel_h {
            let row_base = ((oy * stride + ky) * in_w + ox * stride) * in_c + ch;
            for kx in 0..kernel_w {
                patch[p] = input[row_base + kx * in_c];
                p += 1;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward_relu(
    input: &[f32],
    in_h: usize,
    in_w: usize,
    in_c: usize,
    weights: &[f32],
    biases: &[f32],
    layer: &super::ConvLayerSpec,
    patch: &mut [f32],
    output: &mut [f32],
) {
    let (out_h, out_w) = layer.output_shape(in_h, in_w);
    let k = in_c * layer.kernel_h * layer.kernel_w;
    let patch = &mut patch[..k];
    for oy in 0..out_h {
        for ox in 0..out_w {
            gather_patch(
                input,
                in_w,
                in_c,
                oy,
                ox,
                layer.kernel_h,
                layer.kernel_w,
                layer.stride,
                patch,
            );
            let base = (oy * out_w + ox) * layer.filters;
            for f in 0..layer.filters {
                let z = dot(&weights[f * k..(f + 1) * k], patch) + biases[f];
                output[base + f] = if z > 0.0 { z } else { 0.0 };
            }
        }
    }
}

/// Runs the network on a normalized `[0, 1]` image, filling `cache` with
/// every layer's activations (needed for [`backward`]).
pub fn forward_cached(
    params: &ParameterSet,
    image: &[f32],
    cache: &mut ForwardCache,
) -> Result<(), NeuralError> {
    let spec = params.spec();
    if image.len() != spec.input_len() {
        return Err(NeuralError::LengthMismatch {
            what: "input image",
            expected: spec.input_len(),
            got: image.len(),
        });
    }
    if !cache.matches(spec) {
        return Err(NeuralError::CacheMismatch);
    }
    let layout = spec.layout();
    let values = params.values();
    cache.input.copy_from_slice(image);

    let (h1, w1, _) = spec.conv1_output();
    conv_forward_relu(
        &cache.input,
        spec.input_h,
        spec.input_w,
        spec.input_c,
        &values[layout.conv1_w.clone()],
        &values[layout.conv1_b.clone()],
        &spec.conv1,
        &mut cache.patch,
        &mut cache.conv1,
    );
    conv_forward_relu(
        &cache.conv1,
        h1,
        w1,
        spec.conv1.filters,
        &values[layout.conv2_w.clone()],
        &values[layout.conv2_b.clone()],
        &spec.conv2,
        &mut cache.patch,
        &mut cache.conv2,
    );

    let flat = &cache.conv2;
    let d1w = &values[layout.dense1_w.clone()];
    let d1b = &values[layout.dense1_b.clone()];
    let n = flat.len();
    for o in 0..spec.hidden {
        let z = dot(&d1w[o * n..(o + 1) * n], flat) + d1b[o];
        cache.hidden[o] = if z > 0.0 { z } else { 0.0 };
    }

    let d2w = &values[layout.dense2_w.clone()];
    let d2b = &values[layout.dense2_b.clone()];
    for o in 0..spec.outputs {
        cache.q[o] = dot(&d2w[o * spec.hidden..(o + 1) * spec.hidden], &cache.hidden) + d2b[o];
    }
    Ok(())
}

/// Convenience forward pass returning the Q vector.
pub fn forward(params: &ParameterSet, image: &[f32]) -> Result<Vec<f32>, NeuralError> {
    let mut cache = ForwardCache::new(params.spec());
    forward_cached(params, image, &mut cache)?;
    Ok(cache.q)
}

/// Reusable workspace for [`backward`].
#[derive(Debug, Clone)]
pub struct BackwardScratch {
    d_hidden: Vec<f32>,
    d_conv2: Vec<f32>,
    d_conv1: Vec<f32>,
    d_patch: Vec<f32>,
}

impl BackwardScratch {
    pub fn new(spec: &NetworkSpec) -> Self {
        let (h1, w1, c1) = spec.conv1_output();
        let patch1 = spec.input_c * spec.conv1.kernel_h * spec.conv1.kernel_w;
        let patch2 = spec.conv1.filters * spec.conv2.kernel_h * spec.conv2.kernel_w;
        Self {
            d_hidden: vec![0.0; spec.hidden],
            d_conv2: vec![0.0; spec.flatten_len()],
            d_conv1: vec![0.0; h1 * w1 * c1],
            d_patch: vec![0.0; patch1.max(patch2)],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f32],
    in_w: usize,
    in_c: usize,
    weights: &[f32],
    layer: &super::ConvLayerSpec,
    out_w: usize,
    out_h: usize,
    d_output: &[f32],
    grad_w: &mut [f32],
    grad_b: &mut [f32],
    patch: &mut [f32],
    d_patch: &mut [f32],
    mut d_input: Option<&mut [f32]>,
) {
    let k = in_c * layer.kernel_h * layer.kernel_w;
    let patch = &mut patch[..k];
    let d_patch = &mut d_patch[..k];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let base = (oy * out_w + ox) * layer.filters;
            if d_output[base..base + layer.filters].iter().all(|&g| g == 0.0) {
                continue;
            }
            gather_patch(
                input,
                in_w,
                in_c,
                oy,
                ox,
                layer.kernel_h,
                layer.kernel_w,
                layer.stride,
                patch,
            );
            d_patch.fill(0.0);
            for f in 0..layer.filters {
                let g = d_output[base + f];
                if g == 0.0 {
                    continue;
                }
                axpy(&mut grad_w[f * k..(f + 1) * k], g, patch);
                grad_b[f] += g;
                if d_input.is_some() {
                    axpy(d_patch, g, &weights[f * k..(f + 1) * k]);
                }
            }
            if let Some(d_input) = d_input.as_deref_mut() {
                // Scatter the patch gradient back to HWC positions.
                let mut p = 0;
                for ch in 0..in_c {
                    for ky in 0..layer.kernel_h {
                        let row_base =
                            ((oy * layer.stride + ky) * in_w + ox * layer.stride) * in_c + ch;
                        for kx in 0..layer.kernel_w {
                            d_input[row_base + kx * in_c] += d_patch[p];
                            p += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates exact gradients of the cached forward pass into `grads`
/// (caller zeroes the buffer), given the loss gradient with respect to
/// the Q vector.
pub fn backward(
    params: &ParameterSet,
    cache: &ForwardCache,
    d_q: &[f32],
    grads: &mut [f32],
    scratch: &mut BackwardScratch,
) -> Result<(), NeuralError> {
    let spec = params.spec();
    if !cache.matches(spec) {
        return Err(NeuralError::CacheMismatch);
    }
    if d_q.len() != spec.outputs {
        return Err(NeuralError::LengthMismatch {
            what: "output gradient",
            expected: spec.outputs,
            got: d_q.len(),
        });
    }
    if grads.len() != params.len() {
        return Err(NeuralError::LengthMismatch {
            what: "gradient buffer",
            expected: params.len(),
            got: grads.len(),
        });
    }
    let layout = spec.layout();
    let values = params.values();

    // Linear head.
    scratch.d_hidden.fill(0.0);
    {
        let d2w = &values[layout.dense2_w.clone()];
        let (gw, gb) = {
            let (a, b) = grads.split_at_mut(layout.dense2_b.start);
            (&mut a[layout.dense2_w.clone()], &mut b[..spec.outputs])
        };
        for o in 0..spec.outputs {
            let g = d_q[o];
            if g == 0.0 {
                continue;
            }
            axpy(&mut gw[o * spec.hidden..(o + 1) * spec.hidden], g, &cache.hidden);
            gb[o] += g;
            axpy(&mut scratch.d_hidden, g, &d2w[o * spec.hidden..(o + 1) * spec.hidden]);
        }
    }

    // Hidden dense layer (relu).
    for (dh, &h) in scratch.d_hidden.iter_mut().zip(&cache.hidden) {
        if h <= 0.0 {
            *dh = 0.0;
        }
    }
    scratch.d_conv2.fill(0.0);
    {
        let n = spec.flatten_len();
        let d1w = &values[layout.dense1_w.clone()];
        let (gw, gb) = {
            let (a, b) = grads.split_at_mut(layout.dense1_b.start);
            (&mut a[layout.dense1_w.clone()], &mut b[..spec.hidden])
        };
        for o in 0..spec.hidden {
            let g = scratch.d_hidden[o];
            if g == 0.0 {
                continue;
            }
            axpy(&mut gw[o * n..(o + 1) * n], g, &cache.conv2);
            gb[o] += g;
            axpy(&mut scratch.d_conv2, g, &d1w[o * n..(o + 1) * n]);
        }
    }

    // Second conv layer (relu).
    for (dz, &z) in scratch.d_conv2.iter_mut().zip(&cache.conv2) {
        if z <= 0.0 {
            *dz = 0.0;
        }
    }
    scratch.d_conv1.fill(0.0);
    let (h1, w1, _) = spec.conv1_output();
    let (h2, w2, _) = spec.conv2_output();
    {
        let mut patch = vec![0.0; spec.conv1.filters * spec.conv2.kernel_h * spec.conv2.kernel_w];
        let (gw, gb) = {
            let (a, b) = grads.split_at_mut(layout.conv2_b.start);
            (&mut a[layout.conv2_w.clone()], &mut b[..spec.conv2.filters])
        };
        conv_backward(
            &cache.conv1,
            w1,
            spec.conv1.filters,
            &values[layout.conv2_w.clone()],
            &spec.conv2,
            w2,
            h2,
            &scratch.d_conv2,
            gw,
            gb,
            &mut patch,
            &mut scratch.d_patch,
            Some(&mut scratch.d_conv1),
        );
    }

    // First conv layer (relu); no input gradient needed.
    for (dz, &z) in scratch.d_conv1.iter_mut().zip(&cache.conv1) {
        if z <= 0.0 {
            *dz = 0.0;
        }
    }
    {
        let mut patch = vec![0.0; spec.input_c * spec.conv1.kernel_h * spec.conv1.kernel_w];
        let (gw, gb) = {
            let (a, b) = grads.split_at_mut(layout.conv1_b.start);
            (&mut a[layout.conv1_w.clone()], &mut b[..spec.conv1.filters])
        };
        conv_backward(
            &cache.input,
            spec.input_w,
            spec.input_c,
            &values[layout.conv1_w.clone()],
            &spec.conv1,
            w1,
            h1,
            &scratch.d_conv1,
            gw,
            gb,
            &mut patch,
            &mut scratch.d_patch,
            None,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_network, NetworkSpec};

    fn small_spec() -> NetworkSpec {
        NetworkSpec::new(8, 16, [4, 6], 8, 5).unwrap()
    }

    #[test]
    fn zero_network_on_zero_image_outputs_zeros() {
        let spec = small_spec();
        let params = ParameterSet::zeros(spec);
        let q = forward(&params, &vec![0.0; spec.input_len()]).unwrap();
        assert_eq!(q, vec![0.0; 5]);
    }

    #[test]
    fn output_has_action_arity() {
        let spec = NetworkSpec::for_input(48, 1280).unwrap();
        let params = init_network(spec, 1);
        let q = forward(&params, &vec![0.5; spec.input_len()]).unwrap();
        assert_eq!(q.len(), 5);
        assert!(q.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let params = ParameterSet::zeros(small_spec());
        assert!(matches!(
            forward(&params, &[0.0; 7]),
            Err(NeuralError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = small_spec();
        let params = init_network(spec, 9);
        let image: Vec<f32> = (0..spec.input_len())
            .map(|i| (i % 256) as f32 / 255.0)
            .collect();
        let a = forward(&params, &image).unwrap();
        let b = forward(&params, &image).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_mismatch_is_rejected() {
        let spec = small_spec();
        let params = init_network(spec, 3);
        let other = NetworkSpec::new(8, 16, [4, 6], 16, 5).unwrap();
        let mut cache = ForwardCache::new(&other);
        assert!(matches!(
            forward_cached(&params, &vec![0.0; spec.input_len()], &mut cache),
            Err(NeuralError::CacheMismatch)
        ));

        let mut scratch = BackwardScratch::new(&spec);
        let mut grads = params.zero_gradients();
        assert!(matches!(
            backward(&params, &cache, &[0.0; 5], &mut grads, &mut scratch),
            Err(NeuralError::CacheMismatch)
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let spec = small_spec();
        let params = init_network(spec, 5);
        let image: Vec<f32> = (0..spec.input_len())
            .map(|i| ((i * 37) % 251) as f32 / 255.0)
            .collect();
        let mut cache = ForwardCache::new(&spec);
        forward_cached(&params, &image, &mut cache).unwrap();
        let mut grads = params.zero_gradients();
        let mut scratch = BackwardScratch::new(&spec);
        backward(&params, &cache, &[0.0; 5], &mut grads, &mut scratch).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relu_blocks_gradients_at_dead_units() {
        let spec = small_spec();
        let mut params = ParameterSet::zeros(spec);
        // Force every hidden pre-activation negative: zero weights,
        // negative hidden biases, so relu output is 0 everywhere and no
        // gradient reaches the dense1/conv parameters.
        let layout = spec.layout();
        for v in &mut params.values_mut()[layout.dense1_b.clone()] {
            *v = -1.0;
        }
        let image = vec![0.3; spec.input_len()];
        let mut cache = ForwardCache::new(&spec);
        forward_cached(&params, &image, &mut cache).unwrap();
        assert!(cache.hidden_activations().iter().all(|&h| h == 0.0));

        let mut grads = params.zero_gradients();
        let mut scratch = BackwardScratch::new(&spec);
        backward(&params, &cache, &[1.0, 0.0, 0.0, 0.0, 0.0], &mut grads, &mut scratch).unwrap();
        // Head bias gets the raw gradient; everything below the dead
        // relu layer stays zero.
        assert_eq!(grads[layout.dense2_b.clone()][0], 1.0);
        assert!(grads[layout.dense1_w.clone()].iter().all(|&g| g == 0.0));
        assert!(grads[layout.conv1_w.clone()].iter().all(|&g| g == 0.0));
    }
}

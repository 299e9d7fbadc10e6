//! The conv/pool/batchnorm/dense stack, its forward and backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{BatchNormPosition, NetworkConfig};
use crate::dataset::Trace;
use crate::numerics::conv::conv1d_backward_impl;
use crate::numerics::gradcheck::fingerprint;
use crate::numerics::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, categorical_cross_entropy_labels, conv1d_forward,
    dense_backward, dense_forward, maxpool1d_backward, maxpool1d_forward, relu_forward, softmax,
    softmax_cce_backward, BatchNormCache, BatchNormParams, DenseLayer, FeatureMap, GradientProbe, KernelBank,
    LossValue, Probe, Real,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm uses batch statistics.
    Train,
    /// Batchnorm uses running statistics; samples are independent.
    Infer,
}

/// One parameter block. Conv layers and every dense layer except the last
/// are followed by ReLU; the last dense layer feeds the softmax.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(KernelBank<T>),
    MaxPool { pool: usize, stride: usize },
    BatchNorm { params: BatchNormParams<T>, position: BatchNormPosition },
    Dense(DenseLayer<T>),
}

impl<T: Real> Layer<T> {
    fn param_len(&self) -> usize {
        match self {
            Layer::Conv(k) => k.weights().len() + k.bias().len(),
            Layer::MaxPool { .. } => 0,
            Layer::BatchNorm { params, .. } => 2 * params.features(),
            Layer::Dense(d) => d.weights().len() + d.bias().len(),
        }
    }

    fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv(k) => Layer::Conv(k.cast()),
            Layer::MaxPool { pool, stride } => Layer::MaxPool {
                pool: *pool,
                stride: *stride,
            },
            Layer::BatchNorm { params, position } => Layer::BatchNorm {
                params: params.cast(),
                position: *position,
            },
            Layer::Dense(d) => Layer::Dense(d.cast()),
        }
    }
}

/// Network parameters: input shape plus ordered layers ending in a dense
/// layer with one output per class.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T = f32> {
    input_channels: usize,
    input_frames: usize,
    layers: Vec<Layer<T>>,
}

/// Builds the network described by `config` with He-uniform weights.
pub fn build_network(config: &NetworkConfig, seed: u64) -> Result<NetworkParams<f32>> {
    NetworkParams::build(config, seed)
}

impl<T: Real> NetworkParams<T> {
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let shapes = config.shape_report()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<T> {
            let limit = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect()
        };
        let mut layers = Vec::new();
        let mut channels = config.input_channels;
        for &filters in &config.conv_filters {
            let width = config.kernel_width;
            let weights = uniform(filters * channels * width, channels * width);
            layers.push(Layer::Conv(KernelBank::new(
                filters,
                channels,
                width,
                weights,
                vec![T::zero(); filters],
            )?));
            layers.push(Layer::MaxPool {
                pool: config.pool,
                stride: config.pool_stride,
            });
            channels = filters;
        }
        let flat = shapes.iter().find(|s| s.name == "flatten").map_or(0, |s| s.channels);
        let bn_features = match config.batchnorm_position {
            BatchNormPosition::AfterLastConv => channels,
            BatchNormPosition::BeforeFirstFc => flat,
        };
        layers.push(Layer::BatchNorm {
            params: BatchNormParams::new(bn_features),
            position: config.batchnorm_position,
        });
        let mut inputs = flat;
        for &outputs in config.fc_sizes.iter().chain([&config.num_classes]) {
            let weights = uniform(outputs * inputs, inputs);
            layers.push(Layer::Dense(DenseLayer::new(inputs, outputs, weights, vec![T::zero(); outputs])?));
            inputs = outputs;
        }
        Self::from_layers(config.input_channels, config.input_frames, layers)
    }

    /// Checks that consecutive layers fit together.
    pub fn from_layers(input_channels: usize, input_frames: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let params = Self {
            input_channels,
            input_frames,
            layers,
        };
        params.check_structure()?;
        Ok(params)
    }

    fn check_structure(&self) -> Result<()> {
        let bad = |i: usize, msg: String| Err(Error::Config(format!("layer {i}: {msg}")));
        let (mut channels, mut frames) = (self.input_channels, self.input_frames);
        if channels == 0 || frames == 0 {
            return Err(Error::Config("input shape must be positive".into()));
        }
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(k) => {
                    if k.in_channels() != channels || frames < k.width() {
                        return bad(i, format!("conv {}x{} does not fit input {channels}x{frames}", k.in_channels(), k.width()));
                    }
                    channels = k.out_channels();
                    frames = frames - k.width() + 1;
                }
                Layer::MaxPool { pool, stride } => {
                    frames = crate::numerics::pooled_frames(frames, *pool, *stride)
                        .ok_or_else(|| Error::Config(format!("layer {i}: pool {pool}/{stride} does not fit {frames} frames")))?;
                }
                Layer::BatchNorm { params, position } => {
                    let want = match position {
                        BatchNormPosition::AfterLastConv => channels,
                        BatchNormPosition::BeforeFirstFc => channels * frames,
                    };
                    if params.features() != want {
                        return bad(i, format!("batchnorm has {} features, expected {want}", params.features()));
                    }
                }
                Layer::Dense(d) => {
                    if d.inputs() != channels * frames {
                        return bad(i, format!("dense expects {} inputs, gets {}", d.inputs(), channels * frames));
                    }
                    channels = d.outputs();
                    frames = 1;
                }
            }
        }
        match self.layers.last() {
            Some(Layer::Dense(d)) if d.outputs() >= 2 => Ok(()),
            _ => bad(last, "the network must end in a dense layer with at least 2 outputs".into()),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_frames(&self) -> usize {
        self.input_frames
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.outputs(),
            _ => unreachable!("structure checked on construction"),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            input_channels: self.input_channels,
            input_frames: self.input_frames,
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }

    /// Number of trainable values (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_len).sum()
    }

    /// Trainable values in order: conv weights and bias, batchnorm scale and
    /// shift, dense weights and bias, layer by layer.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Conv(k) => {
                    out.extend_from_slice(k.weights());
                    out.extend_from_slice(k.bias());
                }
                Layer::MaxPool { .. } => {}
                Layer::BatchNorm { params, .. } => {
                    out.extend_from_slice(&params.gamma);
                    out.extend_from_slice(&params.beta);
                }
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights());
                    out.extend_from_slice(d.bias());
                }
            }
        }
        out
    }

    /// Mutable views of the trainable values, in [`Self::params_flat`] order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(k) => {
                    let (w, b) = k.weights_and_bias_mut();
                    out.push(w);
                    out.push(b);
                }
                Layer::MaxPool { .. } => {}
                Layer::BatchNorm { params, .. } => {
                    out.push(&mut params.gamma);
                    out.push(&mut params.beta);
                }
                Layer::Dense(d) => {
                    let (w, b) = d.weights_and_bias_mut();
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut rest = values;
        for slice in self.param_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, map: &FeatureMap<T>) -> Result<()> {
        if map.channels() != self.input_channels || map.frames() != self.input_frames {
            return Err(Error::Dimension(format!(
                "network expects {}x{} input, got {}x{}",
                self.input_channels,
                self.input_frames,
                map.channels(),
                map.frames()
            )));
        }
        Ok(())
    }

    /// Class probabilities for each input map.
    pub fn forward(&self, batch: &[FeatureMap<T>], mode: Mode) -> Result<Vec<Vec<T>>> {
        Ok(self.run_forward(batch, mode, false)?.probs)
    }

    /// Training-mode forward pass that keeps what the backward pass needs.
    pub fn forward_train(&self, batch: &[FeatureMap<T>]) -> Result<ForwardPass<T>> {
        self.run_forward(batch, Mode::Train, true)
    }

    fn run_forward(&self, batch: &[FeatureMap<T>], mode: Mode, keep: bool) -> Result<ForwardPass<T>> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        for map in batch {
            self.check_input(map)?;
        }
        let last = self.layers.len() - 1;
        let mut acts: Vec<FeatureMap<T>> = batch.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut batchnorm = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            if let Layer::BatchNorm { params, position } = layer {
                let (channels, frames) = (acts[0].channels(), acts[0].frames());
                let rows = gather_rows(&acts, *position);
                let out = match mode {
                    Mode::Train => {
                        let out = batchnorm_train(&rows, params)?;
                        batchnorm.push(BatchNormState {
                            layer: li,
                            cache: out.cache,
                            running_mean: out.running_mean,
                            running_var: out.running_var,
                        });
                        out.output
                    }
                    Mode::Infer => batchnorm_infer(&rows, params)?,
                };
                acts = scatter_rows(&out, *position, batch.len(), channels, frames);
                caches.push(Vec::new());
                continue;
            }
            let results: Vec<(FeatureMap<T>, Cache<T>)> = acts
                .into_par_iter()
                .map(|x| sample_forward(layer, x, li == last, keep))
                .collect::<Result<_>>()?;
            let (next, layer_caches): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            acts = next;
            caches.push(if keep { layer_caches } else { Vec::new() });
        }
        let probs = acts
            .iter()
            .map(|a| softmax(a.data()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardPass {
            probs,
            caches,
            batchnorm,
        })
    }

    /// Gradient of the mean categorical cross-entropy with respect to
    /// [`Self::params_flat`], given a pass from [`Self::forward_train`].
    pub fn backward(&self, pass: &ForwardPass<T>, labels: &[usize]) -> Result<Vec<T>> {
        if pass.caches.len() != self.layers.len() {
            return Err(Error::Input("forward pass was not recorded for backpropagation".into()));
        }
        let dlogits = softmax_cce_backward(&pass.probs, labels)?;
        let mut grads: Vec<FeatureMap<T>> = dlogits
            .into_iter()
            .map(|g| FeatureMap::from_parts(g.len(), 1, g))
            .collect();
        let mut flat = vec![T::zero(); self.param_count()];
        let mut end = flat.len();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let start = end - layer.param_len();
            let dst = &mut flat[start..end];
            end = start;
            if let Layer::BatchNorm { params, position } = layer {
                let state = pass
                    .batchnorm
                    .iter()
                    .find(|s| s.layer == li)
                    .expect("batchnorm state recorded in training mode");
                let (channels, frames) = (grads[0].channels(), grads[0].frames());
                let rows = gather_rows(&grads, *position);
                let g = batchnorm_backward(&state.cache, params, &rows)?;
                let features = params.features();
                dst[..features].copy_from_slice(&g.gamma_grad);
                dst[features..].copy_from_slice(&g.beta_grad);
                grads = scatter_rows(&g.input_grad, *position, grads.len(), channels, frames);
                continue;
            }
            let want_input = li > 0;
            let results: Vec<(Option<FeatureMap<T>>, Vec<T>)> = grads
                .into_par_iter()
                .zip(pass.caches[li].par_iter())
                .map(|(g, cache)| sample_backward(layer, cache, g, li == last, want_input))
                .collect::<Result<_>>()?;
            let mut next = Vec::with_capacity(results.len());
            for (input_grad, param_grad) in results {
                for (d, v) in dst.iter_mut().zip(&param_grad) {
                    *d = *d + *v;
                }
                if let Some(ig) = input_grad {
                    next.push(ig);
                }
            }
            grads = next;
        }
        Ok(flat)
    }

    /// Training-mode loss and gradient on one batch.
    pub fn loss_and_gradient(&self, batch: &[FeatureMap<T>], labels: &[usize]) -> Result<(LossValue, Vec<T>)> {
        let pass = self.forward_train(batch)?;
        let loss = categorical_cross_entropy_labels(&pass.probs, labels)?;
        let grad = self.backward(&pass, labels)?;
        Ok((loss, grad))
    }

    /// Replaces the running statistics with those recorded by a training pass.
    pub fn apply_running_stats(&mut self, pass: &ForwardPass<T>) {
        for state in &pass.batchnorm {
            if let Layer::BatchNorm { params, .. } = &mut self.layers[state.layer] {
                params.running_mean.clone_from(&state.running_mean);
                params.running_var.clone_from(&state.running_var);
            }
        }
    }

    /// Most probable class and the probabilities for one input map.
    pub fn predict_map(&self, map: &FeatureMap<T>) -> Result<(usize, Vec<T>)> {
        let probs = self.forward(std::slice::from_ref(map), Mode::Infer)?.remove(0);
        Ok((argmax(&probs), probs))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Probabilities for each trace; traces must already match the input shape.
pub fn forward_pass<T: Real>(params: &NetworkParams<T>, traces: &[Trace], mode: Mode) -> Result<Vec<Vec<T>>> {
    let maps: Vec<FeatureMap<T>> = traces.iter().map(Trace::to_feature_map).collect();
    params.forward(&maps, mode)
}

/// Infer-mode prediction for one trace.
pub fn predict<T: Real>(params: &NetworkParams<T>, trace: &Trace) -> Result<(usize, Vec<T>)> {
    params.predict_map(&trace.to_feature_map())
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Conv { input: FeatureMap<T>, pre: FeatureMap<T> },
    Pool { channels: usize, frames: usize, argmax: Vec<usize> },
    Dense { input: FeatureMap<T>, pre: Vec<T> },
    Empty,
}

#[derive(Debug, Clone)]
struct BatchNormState<T> {
    layer: usize,
    cache: BatchNormCache,
    running_mean: Vec<T>,
    running_var: Vec<T>,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub probs: Vec<Vec<T>>,
    caches: Vec<Vec<Cache<T>>>,
    batchnorm: Vec<BatchNormState<T>>,
}

impl<T: Real> ForwardPass<T> {
    /// Fingerprint of every ReLU sign and pooling choice in the pass.
    pub fn pattern(&self) -> u64 {
        let mut bits: Vec<u64> = Vec::new();
        for layer in &self.caches {
            for cache in layer {
                match cache {
                    Cache::Conv { pre, .. } => bits.extend(pre.data().iter().map(|v| (*v > T::zero()) as u64)),
                    Cache::Dense { pre, .. } => bits.extend(pre.iter().map(|v| (*v > T::zero()) as u64)),
                    Cache::Pool { argmax, .. } => bits.extend(argmax.iter().map(|&i| i as u64)),
                    Cache::Empty => {}
                }
            }
        }
        fingerprint(bits)
    }
}

fn sample_forward<T: Real>(layer: &Layer<T>, x: FeatureMap<T>, is_last: bool, keep: bool) -> Result<(FeatureMap<T>, Cache<T>)> {
    Ok(match layer {
        Layer::Conv(k) => {
            let pre = conv1d_forward(&x, k)?;
            let out = relu_forward(&pre);
            (out, if keep { Cache::Conv { input: x, pre } } else { Cache::Empty })
        }
        Layer::MaxPool { pool, stride } => {
            let out = maxpool1d_forward(&x, *pool, *stride)?;
            let cache = if keep {
                Cache::Pool {
                    channels: x.channels(),
                    frames: x.frames(),
                    argmax: out.argmax,
                }
            } else {
                Cache::Empty
            };
            (out.output, cache)
        }
        Layer::Dense(d) => {
            let pre = dense_forward(x.data(), d)?;
            let out: Vec<T> = if is_last {
                pre.clone()
            } else {
                pre.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
            };
            let out = FeatureMap::from_parts(out.len(), 1, out);
            (out, if keep { Cache::Dense { input: x, pre } } else { Cache::Empty })
        }
        Layer::BatchNorm { .. } => unreachable!("batchnorm is applied to the whole batch"),
    })
}

fn sample_backward<T: Real>(
    layer: &Layer<T>,
    cache: &Cache<T>,
    mut g: FeatureMap<T>,
    is_last: bool,
    want_input: bool,
) -> Result<(Option<FeatureMap<T>>, Vec<T>)> {
    match (layer, cache) {
        (Layer::Conv(k), Cache::Conv { input, pre }) => {
            crate::numerics::activation::relu_mask_in_place(pre.data(), g.data_mut());
            let (ig, mut wg, bg) = conv1d_backward_impl(input, k, &g, want_input)?;
            wg.extend_from_slice(&bg);
            Ok((ig, wg))
        }
        (Layer::MaxPool { .. }, Cache::Pool { channels, frames, argmax }) => {
            Ok((Some(maxpool1d_backward(*channels, *frames, argmax, &g)?), Vec::new()))
        }
        (Layer::Dense(d), Cache::Dense { input, pre }) => {
            if !is_last {
                crate::numerics::activation::relu_mask_in_place(pre, g.data_mut());
            }
            let grads = dense_backward(input.data(), d, g.data())?;
            let mut pg = grads.weight_grad;
            pg.extend_from_slice(&grads.bias_grad);
            let ig = FeatureMap::from_parts(input.channels(), input.frames(), grads.input_grad);
            Ok((want_input.then_some(ig), pg))
        }
        _ => Err(Error::Input("forward cache does not match the layer".into())),
    }
}

/// Batchnorm rows: one per (sample, frame) with a value per channel, or one
/// per sample holding the flattened map.
fn gather_rows<T: Real>(maps: &[FeatureMap<T>], position: BatchNormPosition) -> Vec<T> {
    match position {
        BatchNormPosition::BeforeFirstFc => maps.iter().flat_map(|m| m.data().iter().copied()).collect(),
        BatchNormPosition::AfterLastConv => {
            let mut rows = Vec::with_capacity(maps.len() * maps[0].data().len());
            for m in maps {
                for t in 0..m.frames() {
                    for c in 0..m.channels() {
                        rows.push(m.get(c, t));
                    }
                }
            }
            rows
        }
    }
}

fn scatter_rows<T: Real>(
    rows: &[T],
    position: BatchNormPosition,
    samples: usize,
    channels: usize,
    frames: usize,
) -> Vec<FeatureMap<T>> {
    let size = channels * frames;
    (0..samples)
        .map(|s| {
            let block = &rows[s * size..(s + 1) * size];
            let data = match position {
                BatchNormPosition::BeforeFirstFc => block.to_vec(),
                BatchNormPosition::AfterLastConv => {
                    let mut data = vec![T::zero(); size];
                    for t in 0..frames {
                        for c in 0..channels {
                            data[c * frames + t] = block[t * channels + c];
                        }
                    }
                    data
                }
            };
            FeatureMap::from_parts(channels, frames, data)
        })
        .collect()
}

/// Whole-network probe: coordinates are the trainable parameters, the loss
/// is the training-mode mean categorical cross-entropy of a fixed batch.
#[derive(Debug, Clone)]
pub struct NetworkProbe<T: Real> {
    pub params: NetworkParams<T>,
    pub batch: Vec<FeatureMap<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> NetworkProbe<T> {
    fn with_point(&self, point: &[T]) -> Result<NetworkParams<T>> {
        let mut params = self.params.clone();
        params.set_params_flat(point)?;
        Ok(params)
    }
}

impl<T: Real> GradientProbe<T> for NetworkProbe<T> {
    fn point(&self) -> Vec<T> {
        self.params.params_flat()
    }

    fn evaluate(&self, point: &[T]) -> Result<Probe> {
        let pass = self.with_point(point)?.forward_train(&self.batch)?;
        let loss = categorical_cross_entropy_labels(&pass.probs, &self.labels)?;
        Ok(Probe {
            loss: loss.value,
            pattern: pass.pattern(),
        })
    }

    fn gradient(&self, point: &[T]) -> Result<Vec<T>> {
        Ok(self.with_point(point)?.loss_and_gradient(&self.batch, &self.labels)?.1)
    }
}

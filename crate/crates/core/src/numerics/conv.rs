use super::{axpy, dot, FeatureMap, KernelBank, Real};
use crate::{Error, Result};

/// Gradients of a convolution with respect to its input, weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input_grad: FeatureMap<T>,
    /// Same layout as [`KernelBank::weights`].
    pub weight_grad: Vec<T>,
    pub bias_grad: Vec<T>,
}

fn check_shapes<T: Real>(input: &FeatureMap<T>, kernels: &KernelBank<T>) -> Result<usize> {
    if input.channels() != kernels.in_channels() {
        return Err(Error::Dimension(format!(
            "conv1d expects {} input channels, got {}",
            kernels.in_channels(),
            input.channels()
        )));
    }
    if input.frames() < kernels.width() {
        return Err(Error::DegenerateInput(format!(
            "conv1d input has {} frames, fewer than kernel width {}",
            input.frames(),
            kernels.width()
        )));
    }
    Ok(input.frames() - kernels.width() + 1)
}

/// Valid-region 1D convolution: output is `out_channels × (frames − width + 1)`.
pub fn conv1d_forward<T: Real>(input: &FeatureMap<T>, kernels: &KernelBank<T>) -> Result<FeatureMap<T>> {
    let out_frames = check_shapes(input, kernels)?;
    let mut out = vec![T::zero(); kernels.out_channels() * out_frames];
    for (o, dst) in out.chunks_exact_mut(out_frames).enumerate() {
        dst.fill(kernels.bias()[o]);
        for c in 0..kernels.in_channels() {
            let src = input.row(c);
            for (k, &w) in kernels.taps(o, c).iter().enumerate() {
                axpy(w, &src[k..k + out_frames], dst);
            }
        }
    }
    Ok(FeatureMap::from_parts(kernels.out_channels(), out_frames, out))
}

/// Exact gradients of a convolution for the given upstream gradient.
pub fn conv1d_backward<T: Real>(
    input: &FeatureMap<T>,
    kernels: &KernelBank<T>,
    upstream: &FeatureMap<T>,
) -> Result<ConvGrads<T>> {
    let (input_grad, weight_grad, bias_grad) = conv1d_backward_impl(input, kernels, upstream, true)?;
    Ok(ConvGrads {
        input_grad: input_grad.expect("input gradient requested"),
        weight_grad,
        bias_grad,
    })
}

#[allow(clippy::type_complexity)]
pub(crate) fn conv1d_backward_impl<T: Real>(
    input: &FeatureMap<T>,
    kernels: &KernelBank<T>,
    upstream: &FeatureMap<T>,
    want_input_grad: bool,
) -> Result<(Option<FeatureMap<T>>, Vec<T>, Vec<T>)> {
    let out_frames = check_shapes(input, kernels)?;
    if upstream.channels() != kernels.out_channels() || upstream.frames() != out_frames {
        return Err(Error::Dimension(format!(
            "conv1d upstream gradient should be {}x{out_frames}, got {}x{}",
            kernels.out_channels(),
            upstream.channels(),
            upstream.frames()
        )));
    }
    let width = kernels.width();
    let in_channels = kernels.in_channels();
    let mut weight_grad = vec![T::zero(); kernels.weights().len()];
    let mut bias_grad = vec![T::zero(); kernels.out_channels()];
    let mut input_grad = want_input_grad.then(|| FeatureMap::zeros(input.channels(), input.frames()));

    for o in 0..kernels.out_channels() {
        let g = upstream.row(o);
        bias_grad[o] = g.iter().fold(T::zero(), |acc, &v| acc + v);
        for c in 0..in_channels {
            let x = input.row(c);
            let base = (o * in_channels + c) * width;
            for k in 0..width {
                weight_grad[base + k] = dot(g, &x[k..k + out_frames]);
            }
            if let Some(dx) = input_grad.as_mut() {
                let dx = dx.row_mut(c);
                for (k, &w) in kernels.taps(o, c).iter().enumerate() {
                    axpy(w, g, &mut dx[k..k + out_frames]);
                }
            }
        }
    }
    Ok((input_grad, weight_grad, bias_grad))
}

use super::{FeatureMap, Real};
use crate::{Error, Result};

/// Max-pooled map plus, per output element, the input frame that won.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput<T> {
    pub output: FeatureMap<T>,
    /// Channel-major, one absolute input frame index per output element.
    pub argmax: Vec<usize>,
}

/// Output length of a pooling window sweep; trailing frames that do not fill
/// a whole window are dropped.
pub fn pooled_frames(frames: usize, pool: usize, stride: usize) -> Option<usize> {
    if pool == 0 || stride == 0 || frames < pool {
        return None;
    }
    Some((frames - pool) / stride + 1)
}

pub fn maxpool1d_forward<T: Real>(input: &FeatureMap<T>, pool: usize, stride: usize) -> Result<PoolOutput<T>> {
    if pool == 0 || stride == 0 {
        return Err(Error::Input(format!(
            "maxpool1d needs pool >= 1 and stride >= 1, got {pool}/{stride}"
        )));
    }
    let out_frames = pooled_frames(input.frames(), pool, stride).ok_or_else(|| {
        Error::DegenerateInput(format!(
            "maxpool1d input has {} frames, fewer than pool size {pool}",
            input.frames()
        ))
    })?;
    let mut out = Vec::with_capacity(input.channels() * out_frames);
    let mut argmax = Vec::with_capacity(input.channels() * out_frames);
    for c in 0..input.channels() {
        let row = input.row(c);
        for j in 0..out_frames {
            let start = j * stride;
            let mut best = start;
            for t in start + 1..start + pool {
                // strict comparison keeps the first maximum on ties
                if row[t] > row[best] {
                    best = t;
                }
            }
            out.push(row[best]);
            argmax.push(best);
        }
    }
    Ok(PoolOutput {
        output: FeatureMap::from_parts(input.channels(), out_frames, out),
        argmax,
    })
}

/// Routes each upstream gradient to the frame that produced the maximum.
pub fn maxpool1d_backward<T: Real>(
    input_channels: usize,
    input_frames: usize,
    argmax: &[usize],
    upstream: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    if upstream.channels() != input_channels || upstream.data().len() != argmax.len() {
        return Err(Error::Dimension(format!(
            "maxpool1d upstream gradient {}x{} does not match {} routed positions",
            upstream.channels(),
            upstream.frames(),
            argmax.len()
        )));
    }
    let mut grad = FeatureMap::zeros(input_channels, input_frames);
    let out_frames = upstream.frames();
    for c in 0..input_channels {
        let g = upstream.row(c);
        let routes = &argmax[c * out_frames..(c + 1) * out_frames];
        let dst = grad.row_mut(c);
        for (&t, &v) in routes.iter().zip(g) {
            dst[t] = dst[t] + v;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool1(values: &[f64], pool: usize, stride: usize) -> Vec<f64> {
        let x = FeatureMap::new(1, values.len(), values.to_vec()).unwrap();
        maxpool1d_forward(&x, pool, stride).unwrap().output.into_data()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(pool1(&[5.0, 5.0, 5.0, 5.0], 2, 2), vec![5.0, 5.0]);
        assert_eq!(pool1(&[1.0, 3.0, 2.0, 8.0], 2, 2), vec![3.0, 8.0]);
        assert_eq!(pool1(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 2), vec![2.0, 4.0]);
    }

    #[test]
    fn ties_route_to_first_maximum() {
        let x = FeatureMap::new(1, 4, vec![7.0f64, 7.0, 1.0, 1.0]).unwrap();
        let pooled = maxpool1d_forward(&x, 2, 2).unwrap();
        assert_eq!(pooled.argmax, vec![0, 2]);
        let g = FeatureMap::new(1, 2, vec![1.5, -2.0]).unwrap();
        let dx = maxpool1d_backward(1, 4, &pooled.argmax, &g).unwrap();
        assert_eq!(dx.data(), &[1.5, 0.0, -2.0, 0.0]);
    }

    #[test]
    fn overlapping_windows_accumulate() {
        let x = FeatureMap::new(1, 3, vec![0.0f64, 9.0, 0.0]).unwrap();
        let pooled = maxpool1d_forward(&x, 2, 1).unwrap();
        assert_eq!(pooled.argmax, vec![1, 1]);
        let g = FeatureMap::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert_eq!(maxpool1d_backward(1, 3, &pooled.argmax, &g).unwrap().data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn too_short_input_is_degenerate() {
        let x = FeatureMap::new(1, 1, vec![1.0f32]).unwrap();
        assert!(matches!(maxpool1d_forward(&x, 2, 2), Err(Error::DegenerateInput(_))));
        assert!(matches!(maxpool1d_forward(&x, 0, 2), Err(Error::Input(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn output_length_follows_window_formula(
                frames in 1usize..64, pool in 1usize..6, stride in 1usize..6, seed in any::<u64>()
            ) {
                prop_assume!(frames >= pool);
                let data: Vec<f64> = (0..frames).map(|i| ((i as u64 ^ seed) % 17) as f64).collect();
                let x = FeatureMap::new(1, frames, data).unwrap();
                let out = maxpool1d_forward(&x, pool, stride).unwrap();
                prop_assert_eq!(out.output.frames(), (frames - pool) / stride + 1);
            }
        }
    }
}

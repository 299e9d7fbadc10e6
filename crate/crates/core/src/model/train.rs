//! Mini-batch training with Adam or SGD and best-epoch retention.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Optimizer, TrainConfig};
use super::network::{argmax, Mode, NetworkParams};
use crate::dataset::LabeledDataset;
use crate::evaluation::macro_f1;
use crate::numerics::{categorical_cross_entropy_labels, FeatureMap, Real};
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Inputs per inference call when scoring a whole dataset.
const EVAL_CHUNK: usize = 32;

/// Per-epoch training loss, validation loss and validation macro-F1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_macro_f1: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss,val_macro_f1`, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_macro_f1\n");
        for i in 0..self.epochs() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.train_loss[i],
                self.val_loss[i],
                self.val_macro_f1[i]
            ));
        }
        s
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let moments = if kind == Optimizer::Adam { n } else { 0 };
        Self {
            kind,
            lr,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    fn apply<T: Real>(&mut self, params: &mut NetworkParams<T>, grad: &[T]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let mut i = 0;
        for slice in params.param_slices_mut() {
            for p in slice.iter_mut() {
                let g = grad[i].as_f64();
                let update = match self.kind {
                    Optimizer::Sgd => self.lr * g,
                    Optimizer::Adam => {
                        self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                        self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                        self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPSILON)
                    }
                };
                *p = T::of(p.as_f64() - update);
                i += 1;
            }
        }
    }
}

/// Converts every trace, checking it fits the network.
pub(crate) fn to_maps<T: Real>(params: &NetworkParams<T>, data: &LabeledDataset) -> Result<Vec<FeatureMap<T>>> {
    if data.num_classes() > params.num_classes() {
        return Err(Error::Dimension(format!(
            "dataset has {} classes, network outputs {}",
            data.num_classes(),
            params.num_classes()
        )));
    }
    data.samples()
        .iter()
        .map(|s| {
            let t = &s.trace;
            if t.channels() != params.input_channels() || t.frames() != params.input_frames() {
                return Err(Error::Dimension(format!(
                    "trace is {}x{}, network expects {}x{}",
                    t.channels(),
                    t.frames(),
                    params.input_channels(),
                    params.input_frames()
                )));
            }
            Ok(t.to_feature_map())
        })
        .collect()
}

/// Infer-mode probabilities for every map.
pub(crate) fn infer_all<T: Real>(params: &NetworkParams<T>, maps: &[FeatureMap<T>]) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(maps.len());
    for chunk in maps.chunks(EVAL_CHUNK) {
        out.extend(params.forward(chunk, Mode::Infer)?);
    }
    Ok(out)
}

/// Mean loss and macro-F1 of infer-mode predictions.
fn score<T: Real>(params: &NetworkParams<T>, maps: &[FeatureMap<T>], labels: &[usize]) -> Result<(f64, f64)> {
    let probs = infer_all(params, maps)?;
    let loss = categorical_cross_entropy_labels(&probs, labels)?.value;
    let preds: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    Ok((loss, macro_f1(labels, &preds, params.num_classes())?))
}

/// Index batches for one epoch; a trailing batch of one joins the previous.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() >= 2 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().expect("checked non-empty");
        out.last_mut().expect("checked len").extend(tail);
    }
    out
}

/// Trains a copy of `params` on `train_set`, keeping the epoch with the
/// lowest validation loss. With an empty validation set the training set
/// is scored instead.
pub fn train<T: Real>(
    params: &NetworkParams<T>,
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    tcfg: &TrainConfig,
) -> Result<(NetworkParams<T>, TrainHistory)> {
    tcfg.validate(train_set.len())?;
    let train_maps = to_maps(params, train_set)?;
    let train_labels = train_set.labels();
    let (val_maps, val_labels) = if val_set.is_empty() {
        log::warn!("validation set is empty; scoring epochs on the training set");
        (train_maps.clone(), train_labels.clone())
    } else {
        (to_maps(params, val_set)?, val_set.labels())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut current = params.clone();
    let mut optimizer = OptimizerState::new(tcfg.optimizer, tcfg.learning_rate, current.param_count());
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, current.clone());
    let mut order: Vec<usize> = (0..train_maps.len()).collect();

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in batches(&order, tcfg.batch_size).iter().enumerate() {
            let maps: Vec<FeatureMap<T>> = idx.iter().map(|&i| train_maps[i].clone()).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let diverged = |loss: f64| Error::Diverged {
                epoch: epoch + 1,
                batch: b + 1,
                loss,
            };
            let pass = match current.forward_train(&maps) {
                Ok(pass) => pass,
                Err(Error::Numeric(_)) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            let loss = categorical_cross_entropy_labels(&pass.probs, &labels)
                .map_err(|_| diverged(f64::NAN))?
                .value;
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            let grad = current.backward(&pass, &labels)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(loss));
            }
            optimizer.apply(&mut current, &grad);
            current.apply_running_stats(&pass);
            loss_sum += loss * idx.len() as f64;
        }
        let train_loss = loss_sum / train_maps.len() as f64;
        let (val_loss, val_f1) = score(&current, &val_maps, &val_labels)?;
        log::info!(
            "epoch {:>3}: train loss {train_loss:.5}, val loss {val_loss:.5}, val macro-F1 {val_f1:.4}",
            epoch + 1
        );
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_macro_f1.push(val_f1);
        if val_loss < best.0 {
            best = (val_loss, current.clone());
            history.best_epoch = epoch;
        }
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                batch: 0,
                loss: val_loss,
            });
        }
        if tcfg.early_stop_patience > 0 && epoch - history.best_epoch >= tcfg.early_stop_patience {
            log::info!("stopping early after epoch {}", epoch + 1);
            break;
        }
    }
    Ok((best.1, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_trailing_sample_joins_the_previous_batch() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(batches(&order[..1], 4).len(), 1);
        assert_eq!(batches(&order[..8], 4).len(), 2);
    }

    #[test]
    fn history_csv_has_one_row_per_epoch() {
        let h = TrainHistory {
            train_loss: vec![1.0, 0.5],
            val_loss: vec![1.1, 0.6],
            val_macro_f1: vec![0.5, 1.0],
            best_epoch: 1,
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_loss,val_macro_f1\n1,1,1.1,0.5\n2,0.5,0.6,1\n");
    }
}

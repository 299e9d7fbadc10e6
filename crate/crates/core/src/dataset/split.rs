//! Seeded stratified train/validation/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::{Error, Result};

const FRACTION_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self { train, val, test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} fraction {f} is not in (0, 1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Parses `"0.8/0.1/0.1"`.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split('/').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("split {text:?} should look like 0.8/0.1/0.1")));
        }
        let mut f = [0.0; 3];
        for (dst, p) in f.iter_mut().zip(&parts) {
            *dst = p
                .parse()
                .map_err(|_| Error::Config(format!("split {text:?}: {p:?} is not a number")))?;
        }
        Self::new(f[0], f[1], f[2], seed)
    }

    /// The three ratios used throughout the experiments.
    pub fn standard_ratios(seed: u64) -> Vec<SplitSpec> {
        [(0.8, 0.1, 0.1), (0.7, 0.15, 0.15), (0.6, 0.2, 0.2)]
            .into_iter()
            .map(|(a, b, c)| SplitSpec { train: a, val: b, test: c, seed })
            .collect()
    }

    /// `"0.8/0.1/0.1"`.
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.train, self.val, self.test)
    }

    /// Per-partition counts for `n` samples by largest-remainder rounding.
    /// Ties in the remainder go to train, then val, then test.
    pub fn allocate(&self, n: usize) -> [usize; 3] {
        let fracs = [self.train, self.val, self.test];
        let exact: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
        let mut counts = [0usize; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut left = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// The three partitions and the source indices that went into each.
#[derive(Debug, Clone)]
pub struct SplitParts {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Shuffles each class with one seeded generator (classes in vocabulary
/// order) and cuts it by [`SplitSpec::allocate`].
pub fn stratified_split(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<SplitParts> {
    spec.validate()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    for (k, members) in by_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(Error::InsufficientSupport {
                class: dataset.vocab()[k].clone(),
                count: members.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let [a, b, _] = spec.allocate(members.len());
        train.extend_from_slice(&members[..a]);
        val.extend_from_slice(&members[a..a + b]);
        test.extend_from_slice(&members[a + b..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitParts {
        train: dataset.subset(&train),
        val: dataset.subset(&val),
        test: dataset.subset(&test),
        train_idx: train,
        val_idx: val,
        test_idx: test,
    })
}

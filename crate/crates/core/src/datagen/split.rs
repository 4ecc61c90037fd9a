use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Regime;
use crate::error::{Error, Result};

/// Which training images carry labels, as indices into the sample list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub regime: Regime,
    pub seed: u64,
}

impl DatasetSplit {
    /// Every image, labeled or not, in ascending order; the pool for the
    /// unconditional branch.
    pub fn all_images(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.labeled.iter().chain(&self.unlabeled).copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// `full`: every sample labeled, none held back as unlabeled.
/// `limited`: every sample labeled, and the same images also serve as the
/// unlabeled pool. `partial`: a seeded uniform subset of `labeled_count`
/// samples is labeled and the rest are unlabeled.
pub fn make_split(num_samples: usize, regime: Regime, labeled_count: usize, seed: u64) -> Result<DatasetSplit> {
    let all: Vec<usize> = (0..num_samples).collect();
    let (labeled, unlabeled) = match regime {
        Regime::Full => (all, Vec::new()),
        Regime::Limited => (all.clone(), all),
        Regime::Partial => {
            if labeled_count > num_samples {
                return Err(Error::config(format!(
                    "train.labeled_count = {labeled_count} exceeds the {num_samples} available samples"
                )));
            }
            let mut order = all;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut labeled = order[..labeled_count].to_vec();
            let mut unlabeled = order[labeled_count..].to_vec();
            labeled.sort_unstable();
            unlabeled.sort_unstable();
            (labeled, unlabeled)
        }
    };
    Ok(DatasetSplit { labeled, unlabeled, regime, seed })
}

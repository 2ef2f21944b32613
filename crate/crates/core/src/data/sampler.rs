//! Batch sampler that keeps both classes in every batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Endless stream of index batches over a labelled set, epoch by epoch.
///
/// An epoch has `ceil(N / batch_size)` batches. Each batch is first dealt
/// one real and one fake index; the rest of the epoch's permutation fills
/// the batches in order, so only the last one can be short. When a class
/// has fewer samples than there are batches its indices are re-drawn from
/// fresh shuffles to keep every batch mixed (and the batch count grows so
/// the majority still fits); such an epoch covers every index at least once
/// instead of exactly once.
#[derive(Debug, Clone)]
pub struct MixedBatchSampler {
    by_class: [Vec<usize>; 2],
    batch_size: usize,
    rng: ChaCha8Rng,
    pending: Vec<Vec<usize>>,
    epoch: u64,
}

impl MixedBatchSampler {
    pub fn new(labels: &[u8], batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be >= 2 for mixed batches, got {batch_size}"
            )));
        }
        let mut by_class = [Vec::new(), Vec::new()];
        for (i, &l) in labels.iter().enumerate() {
            match l {
                0 | 1 => by_class[l as usize].push(i),
                _ => return Err(Error::Config(format!("label {l} not in {{0, 1}}"))),
            }
        }
        if by_class.iter().any(Vec::is_empty) {
            return Err(Error::SingleClass(format!(
                "sampler needs both classes, got {} real / {} fake",
                by_class[0].len(),
                by_class[1].len()
            )));
        }
        Ok(Self {
            by_class,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: Vec::new(),
            epoch: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        let [a, b] = [self.by_class[0].len(), self.by_class[1].len()];
        let k = (a + b).div_ceil(self.batch_size);
        if a.min(b) >= k {
            k
        } else {
            // The minority is re-drawn once per batch, so the majority must fit
            // in the remaining `batch_size - 1` slots of each batch.
            k.max(a.max(b).div_ceil(self.batch_size - 1))
        }
    }

    /// Completed epochs so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Batches of one full epoch.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let k = self.batches_per_epoch();
        let mut batches: Vec<Vec<usize>> = vec![Vec::with_capacity(self.batch_size); k];
        let mut rest = Vec::new();
        for class in &self.by_class {
            let mut perm = class.clone();
            perm.shuffle(&mut self.rng);
            if perm.len() >= k {
                for (b, idx) in batches.iter_mut().zip(perm.drain(..k)) {
                    b.push(idx);
                }
                rest.extend(perm);
                continue;
            }
            let mut dealt = 0;
            while dealt < k {
                if perm.is_empty() {
                    perm = class.clone();
                    perm.shuffle(&mut self.rng);
                }
                let take = perm.len().min(k - dealt);
                for (b, idx) in batches[dealt..dealt + take].iter_mut().zip(perm.drain(..take)) {
                    b.push(idx);
                }
                dealt += take;
            }
        }
        rest.shuffle(&mut self.rng);
        let mut rest = rest.into_iter();
        for b in &mut batches {
            while b.len() < self.batch_size {
                match rest.next() {
                    Some(i) => b.push(i),
                    None => break,
                }
            }
        }
        debug_assert!(rest.next().is_none(), "batch count leaves no leftovers");
        for b in &mut batches {
            b.shuffle(&mut self.rng);
        }
        self.epoch += 1;
        batches
    }
}

impl Iterator for MixedBatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pending.is_empty() {
            let mut e = self.next_epoch();
            e.reverse();
            self.pending = e;
        }
        self.pending.pop()
    }
}

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledClip, Result};
use crate::rng::{domain, keyed};

/// Clips per batch from each supervision pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub n_strong: usize,
    pub n_weak: usize,
    pub n_unlabeled: usize,
}

impl Composition {
    pub const fn new(n_strong: usize, n_weak: usize, n_unlabeled: usize) -> Self {
        Self { n_strong, n_weak, n_unlabeled }
    }

    /// 6 strong, 6 weak, 12 unlabelled.
    pub const fn full_scale() -> Self {
        Self::new(6, 6, 12)
    }

    pub const fn desk() -> Self {
        Self::new(2, 2, 4)
    }

    pub fn total(&self) -> usize {
        self.n_strong + self.n_weak + self.n_unlabeled
    }
}

/// Batch clips ordered strong, weak, unlabelled.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub clips: Vec<&'a LabeledClip>,
    pub composition: Composition,
}

#[derive(Debug, Clone)]
struct PoolCursor {
    id: u64,
    order: Vec<usize>,
    pos: usize,
    pass: u64,
}

impl PoolCursor {
    fn new(seed: u64, id: u64, size: usize) -> Self {
        let mut c = Self { id, order: (0..size).collect(), pos: 0, pass: 0 };
        c.shuffle(seed);
        c
    }

    fn shuffle(&mut self, seed: u64) {
        self.order.sort_unstable();
        self.order.shuffle(&mut keyed(&[seed, domain::BATCH, self.id, self.pass]));
        self.pos = 0;
    }

    fn take(&mut self, seed: u64, n: usize, wraps: &mut usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.pass += 1;
                self.shuffle(seed);
                *wraps += 1;
                log::debug!("pool {} exhausted; reshuffled for pass {}", self.id, self.pass);
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Draws batches without replacement from each pool, reshuffling a pool once it is used up.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    seed: u64,
    composition: Composition,
    cursors: [PoolCursor; 3],
    wraps: usize,
}

/// Indices into the strong, weak and unlabelled pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub strong: Vec<usize>,
    pub weak: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl BatchSampler {
    pub fn new(seed: u64, pool_sizes: [usize; 3], composition: Composition) -> Result<Self> {
        let quotas = [composition.n_strong, composition.n_weak, composition.n_unlabeled];
        for ((name, &size), &needed) in ["strong", "weak", "unlabeled"].iter().zip(&pool_sizes).zip(&quotas) {
            if size < needed {
                return Err(DatasetError::PoolTooSmall { pool: name, available: size, needed });
            }
        }
        Ok(Self {
            seed,
            composition,
            cursors: [0, 1, 2].map(|i| PoolCursor::new(seed, i as u64, pool_sizes[i])),
            wraps: 0,
        })
    }

    pub fn next_indices(&mut self) -> BatchIndices {
        let c = self.composition;
        let seed = self.seed;
        let [s, w, u] = &mut self.cursors;
        BatchIndices {
            strong: s.take(seed, c.n_strong, &mut self.wraps),
            weak: w.take(seed, c.n_weak, &mut self.wraps),
            unlabeled: u.take(seed, c.n_unlabeled, &mut self.wraps),
        }
    }

    /// Next batch drawn from the three pools.
    pub fn next_batch<'a>(
        &mut self,
        strong: &'a [LabeledClip],
        weak: &'a [LabeledClip],
        unlabeled: &'a [LabeledClip],
    ) -> Batch<'a> {
        let idx = self.next_indices();
        let clips = idx
            .strong
            .iter()
            .map(|&i| &strong[i])
            .chain(idx.weak.iter().map(|&i| &weak[i]))
            .chain(idx.unlabeled.iter().map(|&i| &unlabeled[i]))
            .collect();
        Batch { clips, composition: self.composition }
    }

    /// Number of pool reshuffles so far.
    pub fn wraps(&self) -> usize {
        self.wraps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes() {
        assert_eq!(Composition::full_scale().total(), 24);
        assert_eq!(Composition::desk().total(), 8);
        let mut s = BatchSampler::new(1, [10, 10, 20], Composition::desk()).unwrap();
        let b = s.next_indices();
        assert_eq!((b.strong.len(), b.weak.len(), b.unlabeled.len()), (2, 2, 4));
    }

    #[test]
    fn each_clip_once_per_pass() {
        let mut s = BatchSampler::new(3, [10, 7, 30], Composition::new(2, 1, 3)).unwrap();
        let mut seen = Vec::new();
        for _ in 0..5 {
            seen.extend(s.next_indices().strong);
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(s.wraps(), 0);
        s.next_indices();
        assert_eq!(s.wraps(), 1);
    }

    #[test]
    fn too_small_pool_rejected() {
        let err = BatchSampler::new(0, [1, 5, 5], Composition::desk()).unwrap_err();
        assert!(matches!(err, DatasetError::PoolTooSmall { pool: "strong", .. }));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut a = BatchSampler::new(9, [10, 10, 20], Composition::desk()).unwrap();
        let mut b = BatchSampler::new(9, [10, 10, 20], Composition::desk()).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_indices(), b.next_indices());
        }
    }
}

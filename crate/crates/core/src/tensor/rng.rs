//! Seedable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed. Independent
//! streams come from the ChaCha stream counter, laid out as
//! `(domain << 32) | index`, so e.g. task 17's initialisation stream never
//! overlaps task 18's or any training stream.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamDomain {
    Tasks = 1,
    TaskSplit = 2,
    Init = 3,
    Training = 4,
    Certify = 5,
    Sweep = 6,
    Eval = 7,
}

#[derive(Debug, Clone)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream `index` of `domain` under `master`. `index` must fit in 32 bits.
    pub fn stream(master: u64, domain: StreamDomain, index: u64) -> Self {
        assert!(index <= u32::MAX as u64, "stream index {index} exceeds 32 bits");
        let mut inner = ChaCha8Rng::seed_from_u64(master);
        inner.set_stream(((domain as u64) << 32) | index);
        Rng(inner)
    }

    /// First word of [`Rng::stream`], used as the master seed of a child level.
    pub fn derive_seed(master: u64, domain: StreamDomain, index: u64) -> u64 {
        Rng::stream(master, domain, index).next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

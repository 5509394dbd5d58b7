use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::dataset::{Dataset, FeatureBatch};
use crate::rng::Rng;
use crate::{Error, Result};

struct Cursor {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Cursor {
    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            let n = (k - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + n]);
            self.pos += n;
        }
        out
    }
}

/// Yields one batch per domain per tick. Every domain keeps its own shuffled
/// order and private RNG stream; exhausted domains are reshuffled and cycled.
pub struct BatchIterator<'a> {
    datasets: &'a [Dataset],
    batch_size: usize,
    cursors: Vec<Cursor>,
}

impl<'a> BatchIterator<'a> {
    /// Domain `d` draws from stream `d` of a generator seeded by `rng`.
    pub fn new(datasets: &'a [Dataset], batch_size: usize, rng: &mut Rng) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if datasets.is_empty() {
            return Err(Error::Data("no domains to batch".into()));
        }
        if let Some(d) = datasets.iter().find(|d| d.is_empty()) {
            return Err(Error::Data(format!("domain {} is empty", d.domain_index())));
        }
        let base: u64 = rand::Rng::random(rng);
        let cursors = datasets
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut rng = Rng::seed_from_u64(base);
                rng.set_stream(i as u64);
                let mut c = Cursor {
                    order: (0..d.len()).collect(),
                    pos: 0,
                    rng,
                };
                c.reshuffle();
                c
            })
            .collect();
        Ok(Self {
            datasets,
            batch_size,
            cursors,
        })
    }

    /// `⌈min domain size / batch_size⌉`.
    pub fn steps_per_epoch(&self) -> usize {
        let min = self.datasets.iter().map(Dataset::len).min().unwrap_or(0);
        min.div_ceil(self.batch_size)
    }

    /// Reshuffles every domain.
    pub fn start_epoch(&mut self) {
        for c in &mut self.cursors {
            c.reshuffle();
        }
    }

    pub fn next_batches(&mut self) -> Vec<FeatureBatch> {
        self.datasets
            .iter()
            .zip(&mut self.cursors)
            .map(|(d, c)| d.batch(&c.take(self.batch_size)))
            .collect()
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Vec<FeatureBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batches())
    }
}

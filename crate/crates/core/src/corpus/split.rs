use rand::seq::SliceRandom;

use super::SampleRecord;
use crate::{rng, Error, Result};

/// Train / test / dev partition of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub dev: Vec<SampleRecord>,
    pub seed: u64,
}

/// Sizes `(train, test, dev)` for a 70-20-10 split of `n` records: floor for
/// train and test, the remainder goes to dev.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let test = n * 2 / 10;
    (train, test, n - train - test)
}

/// Seeded shuffle followed by a 70-20-10 partition.
pub fn split_corpus(records: &[SampleRecord], seed: u64) -> Result<CorpusSplit> {
    let n = records.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 records to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derived(seed, "split"));
    let (train, test, _) = split_sizes(n);
    let take = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(CorpusSplit {
        train: take(&order[..train]),
        test: take(&order[train..train + test]),
        dev: take(&order[train + test..]),
        seed,
    })
}

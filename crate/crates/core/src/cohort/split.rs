use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::snapshot::check_fractions;
use crate::domain::SnapshotCohort;
use crate::error::{Error, Result};

/// Seeded random partition into train, validation and test parts. Part sizes
/// are `round(n * fraction)` for the first two; the test part takes the rest.
/// Rows keep their cohort order within each part.
pub fn split(
    cohort: &SnapshotCohort,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(SnapshotCohort, SnapshotCohort, SnapshotCohort)> {
    let [train, val, test] = split_indices(cohort.len(), fractions, seed)?;
    Ok((cohort.subset(&train), cohort.subset(&val), cohort.subset(&test)))
}

pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    check_fractions(&fractions)?;
    let n_train = (n as f64 * fractions[0]).round() as usize;
    let n_val = ((n as f64 * fractions[1]).round() as usize).min(n - n_train.min(n));
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::EmptyCohort(format!(
            "splitting {n} rows by {fractions:?} leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = [
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rounds half away from zero and clamps negatives to zero.
pub(crate) fn round_half_away(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.round() as usize
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> crate::Result<()> {
    if expected != actual {
        return Err(crate::Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

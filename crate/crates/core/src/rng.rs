//! Random streams. Every replication gets its own ChaCha8 stream keyed by
//! `(master seed, replication index)`, so results do not depend on which
//! worker ran which replication.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Student t with `df` degrees of freedom as `N(0,1) / sqrt(chi2_df / df)`,
/// the chi-square built from `df` squared normals.
pub fn student_t<R: Rng>(rng: &mut R, df: usize) -> f64 {
    let z = normal(rng);
    let chi2: f64 = (0..df).map(|_| normal(rng).powi(2)).sum();
    z / (chi2 / df as f64).sqrt()
}

pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

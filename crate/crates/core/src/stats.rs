//! Seed derivation, binomial intervals and rank tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_4764_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = (center - half).max(0.0).min(p);
    let hi = (center + half).min(1.0).max(p);
    (lo, hi)
}

pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

pub const MIN_GROUP: usize = 5;

/// Mann-Whitney U test, normal approximation with tie and continuity
/// correction, two-sided.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    let got = a.len().min(b.len());
    if got < MIN_GROUP {
        return Err(Error::InsufficientSamples { required: MIN_GROUP, got });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&all);
    let ra: f64 = ranks[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;

    let n = na + nb;
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, z: 0.0, p_value: 1.0 });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0);
    Ok(MannWhitney { u, z: z * (u - mean).signum(), p_value: p })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        for &(k, n) in &[(0, 10), (10, 10), (3, 7), (500, 1000)] {
            let (lo, hi) = wilson_interval(k, n, Z95);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
    }

    #[test]
    fn wilson_known_value() {
        // 8 of 10: textbook interval (0.4902, 0.9433).
        let (lo, hi) = wilson_interval(8, 10, Z95);
        assert!((lo - 0.4902).abs() < 1e-4);
        assert!((hi - 0.9433).abs() < 1e-4);
    }

    #[test]
    fn rank_sum_with_ties() {
        let r = mann_whitney_u(&[1., 2., 3., 4., 5.], &[3., 4., 5., 6., 7.]).unwrap();
        assert_eq!(r.u, 4.5);
    }

    #[test]
    fn separated_samples() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (100..=109).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.p_value < 0.001);
    }

    #[test]
    fn identical_samples() {
        let a = [3., 1., 4., 1., 5., 9.];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert!(r.p_value > 0.9);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            mann_whitney_u(&[1., 2., 3., 4.], &[1., 2., 3., 4., 5.]),
            Err(Error::InsufficientSamples { required: 5, got: 4 })
        ));
    }

    #[test]
    fn seeds_differ_by_stream_and_index() {
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 1, 0));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(1, 0, 1));
        assert_eq!(derive_seed(9, 3, 4), derive_seed(9, 3, 4));
    }
}

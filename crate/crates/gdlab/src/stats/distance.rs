//! Sample-based distribution distances: exact 1D Wasserstein, KS statistic,
//! and sliced W1 for 2D point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// Exact 1D W1 between two sample sets (CDF-difference integral over the
/// merged support; reduces to the order-statistics coupling for equal sizes).
pub fn w1_distance_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut dist = 0.0;
    let mut prev = sa[0].min(sb[0]);
    while i < sa.len() || j < sb.len() {
        let cur = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        dist += (i as f64 / na - j as f64 / nb).abs() * (cur - prev);
        prev = cur;
        while i < sa.len() && sa[i] <= cur {
            i += 1;
        }
        while j < sb.len() && sb[j] <= cur {
            j += 1;
        }
    }
    Ok(dist)
}

/// W2 between equal-size sample sets via the order-statistics coupling.
pub fn w2_distance_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    if a.len() != b.len() {
        return Err(Error::Unsupported(
            "w2 requires equal sample counts".into(),
        ));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let mean_sq: f64 = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / sa.len() as f64;
    Ok(mean_sq.sqrt())
}

/// W1 between samples and a density given by its CDF on a grid:
/// integral of |F_n - F| over the grid (tail mass outside the grid is
/// already negligible for the truncated densities used here).
pub fn w1_samples_vs_cdf(samples: &[f64], grid: &[f64], cdf: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    assert_eq!(grid.len(), cdf.len());
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut dist = 0.0;
    let mut prev_diff: Option<f64> = None;
    for (k, (&x, &f)) in grid.iter().zip(cdf).enumerate() {
        let rank = s.partition_point(|&v| v <= x) as f64 / n;
        let diff = (rank - f).abs();
        if let Some(pd) = prev_diff {
            dist += 0.5 * (pd + diff) * (x - grid[k - 1]);
        }
        prev_diff = Some(diff);
    }
    Ok(dist)
}

/// Kolmogorov–Smirnov statistic: sup |F_n - F| evaluated at the samples.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(sup)
}

/// Average W1 of 1D projections along `slices` random unit directions.
/// Directions depend only on the seed, so comparisons across sample sets
/// can share them.
pub fn sliced_w1(a: &[[f64; 2]], b: &[[f64; 2]], slices: usize, seed: u64) -> Result<f64> {
    if slices < 16 {
        return Err(Error::Domain("need at least 16 slices".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut pa = vec![0.0; a.len()];
    let mut pb = vec![0.0; b.len()];
    for _ in 0..slices {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        for (p, q) in a.iter().zip(pa.iter_mut()) {
            *q = c * p[0] + s * p[1];
        }
        for (p, q) in b.iter().zip(pb.iter_mut()) {
            *q = c * p[0] + s * p[1];
        }
        acc += w1_distance_1d(&pa, &pb)?;
    }
    Ok(acc / slices as f64)
}

/// Noise floor for W1: distance between the two halves of one sample set.
pub fn half_split_w1(samples: &[f64]) -> Result<f64> {
    let mid = samples.len() / 2;
    w1_distance_1d(&samples[..mid], &samples[mid..])
}

/// Noise floor for autocorrelated series: W1 between even- and odd-index
/// subsequences, which share the slow drift but differ in fast noise.
pub fn interleaved_w1(series: &[f64]) -> Result<f64> {
    let even: Vec<f64> = series.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = series.iter().skip(1).step_by(2).copied().collect();
    w1_distance_1d(&even, &odd)
}

/// Noise floor for sliced W1 in 2D, from the two halves of one cloud.
pub fn half_split_sliced_w1(samples: &[[f64; 2]], slices: usize, seed: u64) -> Result<f64> {
    let mid = samples.len() / 2;
    sliced_w1(&samples[..mid], &samples[mid..], slices, seed)
}

//! Monte Carlo estimators against the rescaled Gibbs measure: the one-step
//! invariance residual E h(X') - E h(X) and the gradient second moment.

use rayon::prelude::*;

use crate::dynamics::member_rng;
use crate::error::{Error, Result};
use crate::objective::{MacroFunction, NoiseModel};
use crate::stats::gibbs::{gibbs_density, GibbsDensity};

/// Fixed chunk count for Monte Carlo loops: results are bitwise independent
/// of the worker count because each chunk owns a seed-derived stream and
/// chunk sums are folded in index order.
const MC_CHUNKS: usize = 256;

/// C^2 compactly supported test function (1 - (|x-c|/r)^2)^3 on |x-c| < r.
#[derive(Clone, Copy, Debug)]
pub struct SmoothBump {
    pub center: [f64; 2],
    pub radius: f64,
    pub dimension: usize,
}

impl SmoothBump {
    pub fn new(center: &[f64], radius: f64) -> Self {
        let mut c = [0.0; 2];
        c[..center.len()].copy_from_slice(center);
        Self {
            center: c,
            radius,
            dimension: center.len(),
        }
    }

    #[inline(always)]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..self.dimension {
            let t = x[i] - self.center[i];
            d2 += t * t;
        }
        let u2 = d2 / (self.radius * self.radius);
        if u2 >= 1.0 {
            0.0
        } else {
            let s = 1.0 - u2;
            s * s * s
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MonteCarloEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n: usize,
    /// noise dominates the estimate; caller should raise n
    pub inconclusive: bool,
}

fn parallel_mean<F>(n_mc: usize, seed: u64, per_sample: F) -> (f64, f64)
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let per_chunk = n_mc / MC_CHUNKS;
    let remainder = n_mc % MC_CHUNKS;
    let partials: Vec<(f64, f64, usize)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = member_rng(seed, c as u64);
            let count = per_chunk + usize::from(c < remainder);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = per_sample(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2, count)
        })
        .collect();
    let (mut s, mut s2, mut n) = (0.0, 0.0, 0usize);
    for (a, b, c) in partials {
        s += a;
        s2 += b;
        n += c;
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// One-step invariance residual E h(X - eta grad f0(X) + eta zeta) - E h(X)
/// with X ~ rescaled Gibbs. Paired sampling (the same X in both terms) and
/// an antithetic +-zeta pair per draw suppress the Monte Carlo variance.
pub fn invariance_residual<H>(
    f0: &MacroFunction,
    noise: &NoiseModel,
    eta: f64,
    h: H,
    n_mc: usize,
    seed: u64,
) -> Result<MonteCarloEstimate>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    if n_mc == 0 {
        return Err(Error::EmptySamples);
    }
    if !noise.isotropic() {
        return Err(Error::Unsupported("anisotropic noise".into()));
    }
    let gibbs = gibbs_density(f0, eta, noise.sigma2(), 1 << 14)?;
    let d = f0.dimension();
    let (value, std_err) = parallel_mean(n_mc, seed, |rng| {
        let mut x = [0.0; 2];
        let mut g = [0.0; 2];
        let mut z = [0.0; 2];
        let mut plus = [0.0; 2];
        let mut minus = [0.0; 2];
        gibbs.draw(rng, &mut x[..d]);
        f0.grad(&x[..d], &mut g[..d]);
        noise.sample(rng, &mut z[..d]);
        for i in 0..d {
            let drift = x[i] - eta * g[i];
            plus[i] = drift + eta * z[i];
            minus[i] = drift - eta * z[i];
        }
        0.5 * (h(&plus[..d]) + h(&minus[..d])) - h(&x[..d])
    });
    Ok(MonteCarloEstimate {
        value,
        std_err,
        n: n_mc,
        inconclusive: 3.0 * std_err > value.abs(),
    })
}

/// E || grad f0(X) ||^2 with X ~ rescaled Gibbs(f0, eta, sigma2).
pub fn grad_second_moment(
    f0: &MacroFunction,
    eta: f64,
    sigma2: f64,
    n: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let gibbs = gibbs_density(f0, eta, sigma2, 1 << 14)?;
    let d = f0.dimension();
    let (value, std_err) = parallel_mean(n, seed, |rng| {
        let mut x = [0.0; 2];
        let mut g = [0.0; 2];
        gibbs.draw(rng, &mut x[..d]);
        f0.grad(&x[..d], &mut g[..d]);
        g[..d].iter().map(|v| v * v).sum()
    });
    Ok(MonteCarloEstimate {
        value,
        std_err,
        n,
        inconclusive: 3.0 * std_err > value.abs(),
    })
}

/// Bump support radius covering the bulk of a Gibbs density: `k` of its
/// largest per-axis standard deviations (measured from the tabulated
/// marginals).
pub fn bulk_radius(g: &GibbsDensity, k: f64) -> f64 {
    let mut max_sd = 0.0f64;
    for axis in 0..g.dimension() {
        let (grid, cdf) = g.marginal_table(axis);
        // variance from the tabulated CDF by integration by parts:
        // E X = int (1 - F) - int F over halves; use the quantile mean/var
        let (mut m, mut m2, mut w) = (0.0, 0.0, 0.0);
        for i in 1..grid.len() {
            let p = cdf[i] - cdf[i - 1];
            let mid = 0.5 * (grid[i] + grid[i - 1]);
            m += p * mid;
            m2 += p * mid * mid;
            w += p;
        }
        let var = (m2 / w - (m / w) * (m / w)).max(0.0);
        max_sd = max_sd.max(var.sqrt());
    }
    k * max_sd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{catalog_macro, catalog_micro};

    fn sin_noise() -> NoiseModel {
        catalog_micro("sin", 1e-3).unwrap().noise_model().unwrap()
    }

    #[test]
    fn bump_is_compact_and_smooth() {
        let h = SmoothBump::new(&[0.0], 2.0);
        assert_eq!(h.eval(&[2.0]), 0.0);
        assert_eq!(h.eval(&[-3.0]), 0.0);
        assert!((h.eval(&[0.0]) - 1.0).abs() < 1e-15);
        // C^1 at the boundary: finite-difference derivative tends to 0
        let d = (h.eval(&[2.0 - 1e-6]) - h.eval(&[2.0 - 2e-6])) / 1e-6;
        assert!(d.abs() < 1e-4);
    }

    #[test]
    fn constant_test_function_gives_exact_zero() {
        let f0 = catalog_macro("quadratic").unwrap();
        let r = invariance_residual(&f0, &sin_noise(), 0.1, |_: &[f64]| 7.5, 10_000, 1).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn residual_small_and_conclusive_at_moderate_eta() {
        let f0 = catalog_macro("quadratic").unwrap();
        let g = gibbs_density(&f0, 0.2, 0.5, 1 << 12).unwrap();
        let h = SmoothBump::new(&[0.0], bulk_radius(&g, 6.0));
        let r = invariance_residual(&f0, &sin_noise(), 0.2, |x: &[f64]| h.eval(x), 2_000_000, 2)
            .unwrap();
        // cubic-in-eta residual: tiny but resolved above the noise
        assert!(r.value.abs() < 1e-2, "value={}", r.value);
        assert!(!r.inconclusive, "value={} se={}", r.value, r.std_err);
    }

    #[test]
    fn estimates_reproducible_and_chunk_independent() {
        let f0 = catalog_macro("quadratic").unwrap();
        let a = grad_second_moment(&f0, 0.1, 0.5, 100_000, 42).unwrap();
        let b = grad_second_moment(&f0, 0.1, 0.5, 100_000, 42).unwrap();
        assert_eq!(a.value, b.value);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| grad_second_moment(&f0, 0.1, 0.5, 100_000, 42).unwrap());
        assert_eq!(a.value, c.value);
    }

    #[test]
    fn grad_moment_quadratic_matches_gaussian_value() {
        // Gibbs variance eta sigma2 / 2, moment = E x^2
        let f0 = catalog_macro("quadratic").unwrap();
        let (eta, sigma2) = (0.1, 0.5);
        let want = eta * sigma2 / 2.0;
        let r = grad_second_moment(&f0, eta, sigma2, 2_000_000, 7).unwrap();
        assert!((r.value - want).abs() < 3.0 * r.std_err + 1e-4 * want, "got {}", r.value);
    }

    #[test]
    fn grad_moment_quartic_matches_quadrature() {
        // independent oracle: E x^6 under exp(-x^4/(2 eta sigma2)) by Simpson
        let f0 = catalog_macro("quartic").unwrap();
        let (eta, sigma2) = (0.1, 0.5);
        let a = 2.0 * eta * sigma2;
        let n = 400_000usize;
        let r_lim = 4.0;
        let h = 2.0 * r_lim / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let x: f64 = -r_lim + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let e = (-x.powi(4) / a).exp();
            num += w * x.powi(6) * e;
            den += w * e;
        }
        let want = num / den;
        let r = grad_second_moment(&f0, eta, sigma2, 4_000_000, 9).unwrap();
        assert!(
            (r.value - want).abs() < 3.0 * r.std_err + 1e-3 * want,
            "got {} want {want}",
            r.value
        );
    }

    #[test]
    fn grad_moment_monotone_in_eta() {
        let f0 = catalog_macro("quartic").unwrap();
        let mut prev = f64::INFINITY;
        for eta in [0.2, 0.1, 0.05, 0.025] {
            let r = grad_second_moment(&f0, eta, 0.5, 500_000, 11).unwrap();
            assert!(r.value < prev, "eta={eta}: {} !< {prev}", r.value);
            prev = r.value;
        }
    }
}

//! Rescaled Gibbs density exp(-2 f0(x)/(eta sigma^2))/Z: normalization by
//! quadrature, truncated tabulation, inverse-CDF sampling, and the local
//! Gaussian approximation around a minimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::objective::MacroFunction;

/// Mass outside the truncation box is below this times the peak density.
const TAIL_CUTOFF: f64 = 1e-16;

/// Composite Simpson on [a,b] with n (even) intervals.
fn simpson(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

enum Tables {
    One {
        grid: Vec<f64>,
        cdf: Vec<f64>,
    },
    Two {
        gx: Vec<f64>,
        gy: Vec<f64>,
        mcdf_x: Vec<f64>,
        mcdf_y: Vec<f64>,
        /// row i: CDF over the y grid conditional on x = gx[i]
        cond: Vec<f64>,
    },
}

/// Truncated, normalized rescaled-Gibbs density for a coercive f0.
pub struct GibbsDensity {
    pub f0: MacroFunction,
    pub eta: f64,
    pub sigma2: f64,
    /// truncation half-width; tail mass beyond it is below TAIL_CUTOFF
    /// relative to the peak
    pub radius: f64,
    /// normalization of exp(-2 f0/(eta sigma2)) over R^d
    pub z: f64,
    f_min: f64,
    tables: Tables,
}

impl GibbsDensity {
    pub fn dimension(&self) -> usize {
        self.f0.dimension()
    }

    /// Unnormalized value relative to the peak.
    fn unnorm(&self, x: &[f64]) -> f64 {
        (-(2.0 / (self.eta * self.sigma2)) * (self.f0.eval(x) - self.f_min)).exp()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.unnorm(x) / self.z
    }

    /// CDF by table interpolation, 1D only.
    pub fn cdf1(&self, x: f64) -> f64 {
        let Tables::One { grid, cdf } = &self.tables else {
            panic!("cdf1 requires a 1D density");
        };
        interp_cdf(grid, cdf, x)
    }

    /// Axis marginal CDF grid, for distance computations. 1D: the density's
    /// own table; 2D: the tabulated marginal along `axis`.
    pub fn marginal_table(&self, axis: usize) -> (&[f64], &[f64]) {
        match &self.tables {
            Tables::One { grid, cdf } => {
                assert_eq!(axis, 0);
                (grid, cdf)
            }
            Tables::Two {
                gx,
                gy,
                mcdf_x,
                mcdf_y,
                ..
            } => match axis {
                0 => (gx, mcdf_x),
                1 => (gy, mcdf_y),
                _ => panic!("axis out of range"),
            },
        }
    }

    pub fn marginal_cdf(&self, axis: usize, x: f64) -> f64 {
        let (grid, cdf) = self.marginal_table(axis);
        interp_cdf(grid, cdf, x)
    }

    /// Draw one sample into `out` by inverse-CDF on the tables.
    pub fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.tables {
            Tables::One { grid, cdf } => out[0] = invert_cdf(grid, cdf, rng.gen::<f64>()),
            Tables::Two {
                gx,
                gy,
                mcdf_x,
                cond,
                ..
            } => {
                let nodes = gx.len();
                let x = invert_cdf(gx, mcdf_x, rng.gen::<f64>());
                // blend the two neighboring conditional CDF columns
                let step = gx[1] - gx[0];
                let pos = ((x - gx[0]) / step).clamp(0.0, (nodes - 2) as f64);
                let i = pos as usize;
                let w = pos - i as f64;
                let (a, b) = (
                    &cond[i * nodes..(i + 1) * nodes],
                    &cond[(i + 1) * nodes..(i + 2) * nodes],
                );
                let uy = rng.gen::<f64>();
                let blend = |j: usize| (1.0 - w) * a[j] + w * b[j];
                let (mut lo, mut hi) = (0usize, nodes - 1);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if blend(mid) <= uy {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (clo, chi) = (blend(lo), blend(hi));
                out[0] = x;
                out[1] = if chi > clo {
                    gy[lo] + (uy - clo) / (chi - clo) * (gy[hi] - gy[lo])
                } else {
                    gy[lo]
                };
            }
        }
    }
}

fn interp_cdf(grid: &[f64], cdf: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return 0.0;
    }
    if x >= *grid.last().unwrap() {
        return 1.0;
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let w = (x - grid[i]) / (grid[i + 1] - grid[i]);
    cdf[i] + w * (cdf[i + 1] - cdf[i])
}

/// Invert a tabulated CDF at u in [0,1).
fn invert_cdf(grid: &[f64], cdf: &[f64], u: f64) -> f64 {
    let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
    let span = cdf[i + 1] - cdf[i];
    if span <= 0.0 {
        grid[i]
    } else {
        grid[i] + (u - cdf[i]) / span * (grid[i + 1] - grid[i])
    }
}

/// Cumulative trapezoid of `vals` over `grid`, normalized to end at 1.
fn cumulative_cdf(grid: &[f64], vals: &[f64]) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(vals.len());
    cdf.push(0.0);
    let mut acc = 0.0;
    for i in 1..vals.len() {
        acc += 0.5 * (vals[i - 1] + vals[i]) * (grid[i] - grid[i - 1]);
        cdf.push(acc);
    }
    let total = *cdf.last().unwrap();
    for c in cdf.iter_mut() {
        *c /= total;
    }
    cdf
}

fn linspace(a: f64, b: f64, nodes: usize) -> Vec<f64> {
    (0..nodes)
        .map(|i| a + (b - a) * i as f64 / (nodes - 1) as f64)
        .collect()
}

/// Find the truncation half-width by doubling from 1 until the boundary
/// density falls below TAIL_CUTOFF times the interior peak.
fn truncation_radius(f0: &MacroFunction, q: f64, f_min: f64) -> Result<f64> {
    let d = f0.dimension();
    let u = |x: &[f64]| (-(q * (f0.eval(x) - f_min))).exp();
    let mut r = 1.0f64;
    while r < 1e9 {
        let (interior_max, boundary_max) = if d == 1 {
            let scan = linspace(-r, r, 257);
            let imax = scan.iter().map(|&x| u(&[x])).fold(0.0f64, f64::max);
            (imax, u(&[-r]).max(u(&[r])))
        } else {
            let scan = linspace(-r, r, 65);
            let mut imax = 0.0f64;
            for &x in &scan {
                for &y in &scan {
                    imax = imax.max(u(&[x, y]));
                }
            }
            let edge = linspace(-r, r, 257);
            let mut bmax = 0.0f64;
            for &t in &edge {
                for p in [[t, -r], [t, r], [-r, t], [r, t]] {
                    bmax = bmax.max(u(&p));
                }
            }
            (imax, bmax)
        };
        if interior_max > 0.0 && boundary_max < TAIL_CUTOFF * interior_max {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::Unsupported(
        "no finite truncation radius found; density is not normalizable".into(),
    ))
}

/// Build the rescaled-Gibbs density for `f0`. `resolution` is the interval
/// count per axis of the sampling tables; the normalization constant uses a
/// 4x finer quadrature.
pub fn gibbs_density(
    f0: &MacroFunction,
    eta: f64,
    sigma2: f64,
    resolution: usize,
) -> Result<GibbsDensity> {
    if !(eta > 0.0 && sigma2 > 0.0) {
        return Err(Error::Domain("eta and sigma2 must be positive".into()));
    }
    let q = 2.0 / (eta * sigma2);
    let f_min = f0
        .minimizers()
        .iter()
        .map(|m| f0.eval(m))
        .fold(f64::INFINITY, f64::min);
    let r = truncation_radius(f0, q, f_min)?;
    let d = f0.dimension();
    let res = resolution.max(16) & !1; // even interval count
    let nodes = res + 1;

    let (z, tables) = if d == 1 {
        let u = |x: f64| (-(q * (f0.eval(&[x]) - f_min))).exp();
        let z = simpson(4 * res, -r, r, u);
        let grid = linspace(-r, r, nodes);
        let pdf: Vec<f64> = grid.iter().map(|&x| u(x)).collect();
        let cdf = cumulative_cdf(&grid, &pdf);
        (z, Tables::One { grid, cdf })
    } else {
        let u = |x: f64, y: f64| (-(q * (f0.eval(&[x, y]) - f_min))).exp();
        // separable composite Simpson on the fine lattice
        let zn = 4 * res;
        let h = 2.0 * r / zn as f64;
        let wt = |i: usize| -> f64 {
            if i == 0 || i == zn {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut z = 0.0;
        for i in 0..=zn {
            let x = -r + i as f64 * h;
            let mut row = 0.0;
            for j in 0..=zn {
                row += wt(j) * u(x, -r + j as f64 * h);
            }
            z += wt(i) * row;
        }
        z *= h * h / 9.0;

        let gx = linspace(-r, r, nodes);
        let gy = gx.clone();
        let mut vals = vec![0.0f64; nodes * nodes];
        for (i, &x) in gx.iter().enumerate() {
            for (j, &y) in gy.iter().enumerate() {
                vals[i * nodes + j] = u(x, y);
            }
        }
        // marginals by Simpson along the other axis
        let h_t = 2.0 * r / res as f64;
        let swt = |k: usize| -> f64 {
            if k == 0 || k == res {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut mx = vec![0.0f64; nodes];
        let mut my = vec![0.0f64; nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                let v = vals[i * nodes + j];
                mx[i] += swt(j) * v;
                my[j] += swt(i) * v;
            }
        }
        for v in mx.iter_mut().chain(my.iter_mut()) {
            *v *= h_t / 3.0;
        }
        let mcdf_x = cumulative_cdf(&gx, &mx);
        let mcdf_y = cumulative_cdf(&gy, &my);
        // conditional CDFs per x column
        let mut cond = vec![0.0f64; nodes * nodes];
        for i in 0..nodes {
            let row = &vals[i * nodes..(i + 1) * nodes];
            cond[i * nodes..(i + 1) * nodes].copy_from_slice(&cumulative_cdf(&gy, row));
        }
        (
            z,
            Tables::Two {
                gx,
                gy,
                mcdf_x,
                mcdf_y,
                cond,
            },
        )
    };
    Ok(GibbsDensity {
        f0: *f0,
        eta,
        sigma2,
        radius: r,
        z,
        f_min,
        tables,
    })
}

/// Draw n samples (row-major, d coordinates each) by inverse-CDF on the
/// tabulated density. Deterministic given the seed.
pub fn gibbs_sample(g: &GibbsDensity, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = g.dimension();
    let mut out = vec![0.0; n * d];
    for slot in out.chunks_exact_mut(d) {
        g.draw(&mut rng, slot);
    }
    out
}

/// Local Gaussian approximation N(x*, eta sigma2 (2 Hess f0(x*))^-1).
#[derive(Clone, Copy, Debug)]
pub struct GaussianApprox {
    pub dimension: usize,
    pub center: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl GaussianApprox {
    pub fn variance1(&self) -> f64 {
        assert_eq!(self.dimension, 1);
        self.cov[0][0]
    }

    /// CDF of the 1D approximation.
    pub fn cdf1(&self, x: f64) -> f64 {
        let z = (x - self.center[0]) / self.variance1().sqrt();
        0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
    }
}

/// Second-order (Gaussian) approximation of the rescaled Gibbs density
/// around a minimizer with positive-definite Hessian.
pub fn gaussian_approx(
    f0: &MacroFunction,
    eta: f64,
    sigma2: f64,
    minimizer: &[f64],
) -> Result<GaussianApprox> {
    let d = f0.dimension();
    let h = f0.hess(minimizer);
    let (pd, inv) = match d {
        1 => (h[0][0] > 0.0, [[1.0 / h[0][0], 0.0], [0.0, 0.0]]),
        _ => {
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            (
                det > 0.0 && h[0][0] > 0.0,
                [
                    [h[1][1] / det, -h[0][1] / det],
                    [-h[1][0] / det, h[0][0] / det],
                ],
            )
        }
    };
    if !pd {
        return Err(Error::Unsupported(
            "Hessian at the minimizer is not positive definite".into(),
        ));
    }
    let scale = eta * sigma2 / 2.0;
    let mut cov = [[0.0; 2]; 2];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = scale * inv[i][j];
        }
    }
    let mut center = [0.0; 2];
    center[..d].copy_from_slice(minimizer);
    Ok(GaussianApprox {
        dimension: d,
        center,
        cov,
    })
}

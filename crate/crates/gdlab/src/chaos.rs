//! Chaos diagnostics for the gradient-descent map: Lyapunov exponents,
//! period-doubling scans, period-3 certificates, well escape, coupling
//! contraction rates, and modified-equation term growth.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{member_rng, stochastic_step, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::objective::{
    catalog_macro, catalog_micro, m_constant, MacroFunction, MultiscaleObjective, NoiseModel,
    QuadratureSettings,
};

/// Critical double-well parameter: the reachable set under unit-bounded
/// noise splits into two components above it.
pub const K_CRITICAL: f64 = 0.6495190528383290; // 3 sqrt(3) / 8

/// Spectral norm of I - eta H for symmetric 2x2 H (largest |eigenvalue|).
#[inline(always)]
fn jac_norm_2d(h: &[[f64; 2]; 2], eta: f64) -> f64 {
    let a = 1.0 - eta * h[0][0];
    let d = 1.0 - eta * h[1][1];
    let b = -eta * h[0][1];
    let mid = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mid + disc).abs().max((mid - disc).abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub n: usize,
    pub burn_in: usize,
    pub x0: Vec<f64>,
    pub eta: f64,
    pub epsilon: Option<f64>,
    /// lambda - ln(eta/epsilon), the quantity that converges to the
    /// log-Hessian constant m
    pub residual: Option<f64>,
    /// independently computed m, when the micro-scale has an oracle
    pub m_reference: Option<f64>,
    /// steps skipped because the Jacobian was exactly singular
    pub skipped: usize,
}

/// Orbit-averaged ln || I - eta Hess f(x_i) ||_2 along the descent orbit.
pub fn lyapunov(
    obj: &MultiscaleObjective,
    eta: f64,
    x0: &[f64],
    n: usize,
    burn_in: usize,
) -> Result<LyapunovEstimate> {
    if !(eta > 0.0) {
        return Err(Error::Domain("eta must be positive".into()));
    }
    if n == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let d = obj.dimension();
    let mut sum = 0.0f64;
    let mut skipped = 0usize;
    let mut count = 0usize;

    if d == 1 {
        let mut x = x0[0];
        for step in 0..burn_in + n {
            if step >= burn_in {
                let jac = (1.0 - eta * obj.hess1(x)).abs();
                if jac > 0.0 {
                    sum += jac.ln();
                    count += 1;
                } else {
                    skipped += 1;
                }
            }
            x -= eta * obj.grad1(x);
            if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    step,
                    member: 0,
                    state: vec![x],
                });
            }
        }
    } else {
        let mut x = [x0[0], x0[1]];
        let mut g = [0.0; 2];
        for step in 0..burn_in + n {
            if step >= burn_in {
                let jac = jac_norm_2d(&obj.hess(&x), eta);
                if jac > 0.0 {
                    sum += jac.ln();
                    count += 1;
                } else {
                    skipped += 1;
                }
            }
            obj.grad(&x, &mut g);
            x[0] -= eta * g[0];
            x[1] -= eta * g[1];
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::Divergence {
                    step,
                    member: 0,
                    state: x.to_vec(),
                });
            }
        }
    }
    let lambda = sum / count.max(1) as f64;
    let epsilon = obj.micro.map(|m| m.epsilon);
    let residual = epsilon.map(|e| lambda - (eta / e).ln());
    let m_reference = obj.micro.and_then(|m| {
        m.has_m_oracle()
            .then(|| m_constant(&m, &QuadratureSettings::default()).ok())
            .flatten()
    });
    Ok(LyapunovEstimate {
        lambda,
        n,
        burn_in,
        x0: x0.to_vec(),
        eta,
        epsilon,
        residual,
        m_reference,
        skipped,
    })
}

/// Learning rate above which the Lyapunov theory predicts chaos: e^{-m} eps.
pub fn chaos_threshold(m: f64, epsilon: f64) -> f64 {
    (-m).exp() * epsilon
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PeriodLabel {
    Period(usize),
    Aperiodic,
    Diverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationRow {
    pub eta: f64,
    /// post-burn-in attractor samples
    pub points: Vec<f64>,
    pub label: PeriodLabel,
}

#[derive(Clone, Debug, Serialize)]
pub struct BifurcationDiagram {
    pub rows: Vec<BifurcationRow>,
    pub period_tol: f64,
}

fn detect_period(points: &[f64], tol: f64) -> PeriodLabel {
    let n = points.len();
    'outer: for p in 1..=n / 4 {
        for i in 0..n - p {
            if (points[i + p] - points[i]).abs() > tol {
                continue 'outer;
            }
        }
        return PeriodLabel::Period(p);
    }
    PeriodLabel::Aperiodic
}

/// Sweep eta over a sorted grid; for each value run `burn_in` steps, record
/// `record` iterates, and detect the minimal period (or report aperiodic /
/// diverged). `period_tol` defaults to 1e-9 (attractor diameter + eps).
pub fn bifurcation_scan(
    obj: &MultiscaleObjective,
    eta_grid: &[f64],
    x0: f64,
    burn_in: usize,
    record: usize,
    period_tol: Option<f64>,
) -> Result<BifurcationDiagram> {
    if obj.dimension() != 1 {
        return Err(Error::Unsupported("bifurcation scan is 1D".into()));
    }
    if eta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("eta grid must be sorted ascending".into()));
    }
    let eps = obj.micro.map_or(0.0, |m| m.epsilon);
    let rows: Vec<BifurcationRow> = eta_grid
        .par_iter()
        .map(|&eta| {
            let mut x = x0;
            let mut diverged = false;
            for _ in 0..burn_in {
                x -= eta * obj.grad1(x);
                if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
                    diverged = true;
                    break;
                }
            }
            let mut points = Vec::with_capacity(record);
            if !diverged {
                for _ in 0..record {
                    points.push(x);
                    x -= eta * obj.grad1(x);
                    if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
                        diverged = true;
                        break;
                    }
                }
            }
            let label = if diverged {
                PeriodLabel::Diverged
            } else {
                let (lo, hi) = points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                        (l.min(v), h.max(v))
                    });
                let tol = period_tol.unwrap_or(1e-9 * ((hi - lo) + eps));
                detect_period(&points, tol)
            };
            BifurcationRow { eta, points, label }
        })
        .collect();
    Ok(BifurcationDiagram {
        rows,
        period_tol: period_tol.unwrap_or(f64::NAN),
    })
}

/// Li-Yorke period-3 witness: a < b < c with d = phi^3(a) <= a (or the
/// mirrored ordering).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Period3Certificate {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// true: d <= a < b < c; false: d >= a > b > c
    pub increasing: bool,
}

const P3_SLACK: f64 = 1e-12;

fn p3_check(obj: &MultiscaleObjective, eta: f64, a: f64) -> Option<Period3Certificate> {
    let step = |x: f64| x - eta * obj.grad1(x);
    let b = step(a);
    let c = step(b);
    let d = step(c);
    if !d.is_finite() {
        return None;
    }
    if d <= a && a + P3_SLACK < b && b + P3_SLACK < c {
        Some(Period3Certificate {
            a,
            b,
            c,
            d,
            increasing: true,
        })
    } else if d >= a && a > b + P3_SLACK && b > c + P3_SLACK {
        Some(Period3Certificate {
            a,
            b,
            c,
            d,
            increasing: false,
        })
    } else {
        None
    }
}

impl Period3Certificate {
    /// Re-iterate the map and confirm the ordering still holds.
    pub fn verify(&self, obj: &MultiscaleObjective, eta: f64) -> bool {
        match p3_check(obj, eta, self.a) {
            Some(c) => c.increasing == self.increasing,
            None => false,
        }
    }
}

/// Scan `grid_n` points of `interval` for a period-3 ordering witness; on a
/// sign change of d - a between neighbors (with the monotone chain holding)
/// refine by bisection. Absence is a valid result.
pub fn find_period3(
    obj: &MultiscaleObjective,
    eta: f64,
    interval: (f64, f64),
    grid_n: usize,
) -> Result<Option<Period3Certificate>> {
    if obj.dimension() != 1 {
        return Err(Error::Unsupported("period-3 search is 1D".into()));
    }
    let (lo, hi) = interval;
    if !(lo < hi) || grid_n < 2 {
        return Err(Error::Domain("bad search interval".into()));
    }
    let h = (hi - lo) / (grid_n - 1) as f64;
    let step = |x: f64| x - eta * obj.grad1(x);
    let chain_up = |a: f64| {
        let b = step(a);
        let c = step(b);
        (b, c, step(c))
    };
    let mut prev: Option<(f64, f64)> = None; // (a, d - a) where a < b < c held
    for i in 0..grid_n {
        let a = lo + i as f64 * h;
        if let Some(cert) = p3_check(obj, eta, a) {
            debug_assert!(cert.verify(obj, eta));
            return Ok(Some(cert));
        }
        let (b, c, d) = chain_up(a);
        let monotone = a + P3_SLACK < b && b + P3_SLACK < c && d.is_finite();
        if monotone {
            if let Some((pa, pf)) = prev {
                let f = d - a;
                if pf > 0.0 && f < 0.0 || pf < 0.0 && f > 0.0 {
                    // bisect the sign change of d - a
                    let (mut l, mut r) = (pa, a);
                    for _ in 0..200 {
                        let mid = 0.5 * (l + r);
                        if let Some(cert) = p3_check(obj, eta, mid) {
                            debug_assert!(cert.verify(obj, eta));
                            return Ok(Some(cert));
                        }
                        let (mb, mc, md) = chain_up(mid);
                        let mono = mid + P3_SLACK < mb && mb + P3_SLACK < mc;
                        if !mono {
                            break;
                        }
                        if (md - mid > 0.0) == (pf > 0.0) {
                            l = mid;
                        } else {
                            r = mid;
                        }
                    }
                }
            }
            prev = Some((a, d - a));
        } else {
            prev = None;
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, Serialize)]
pub struct EscapeReport {
    pub k: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub crossings: usize,
    pub escaped: bool,
    /// the set {x : |f0'(x)| <= 1} reachable under unit noise is connected
    pub s_connected: bool,
    /// k sits at the connectedness boundary within 1e-12
    pub boundary_case: bool,
    pub k_critical: f64,
}

/// Connectedness of S = {x : |4 k x (x^2 - 1)| <= 1}: the local maxima of
/// |f0'| sit at x = +-1/sqrt(3) with value 8k/(3 sqrt 3), so S splits
/// exactly when that exceeds 1.
pub fn s_is_connected(k: f64) -> bool {
    k <= K_CRITICAL
}

/// Long-orbit barrier-crossing scan for f0 = k(x^2-1)^2 with the sin
/// micro-scale: counts sign changes of x.
pub fn escape_scan(k: f64, eta: f64, epsilon: f64, x0: f64, n: usize) -> Result<EscapeReport> {
    if x0 == 0.0 {
        return Err(Error::Domain("x0 must not start on the barrier".into()));
    }
    let obj = MultiscaleObjective::new(
        catalog_macro(&format!("double-well:k={k}"))?,
        Some(catalog_micro("sin", epsilon)?),
    )?;
    let mut x = x0;
    let mut crossings = 0usize;
    let mut sign = x0 > 0.0;
    for step in 0..n {
        x -= eta * obj.grad1(x);
        if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                member: 0,
                state: vec![x],
            });
        }
        let s = x > 0.0;
        if s != sign && x != 0.0 {
            crossings += 1;
            sign = s;
        }
    }
    Ok(EscapeReport {
        k,
        eta,
        epsilon,
        crossings,
        escaped: crossings > 0,
        s_connected: s_is_connected(k),
        boundary_case: (k - K_CRITICAL).abs() < 1e-12,
        k_critical: K_CRITICAL,
    })
}

/// Mean fitted per-step contraction rate of shared-noise orbit pairs under
/// the stochastic map, via least squares on ln of the pair distance.
pub fn coupling_rate(
    f0: &MacroFunction,
    noise: &NoiseModel,
    eta: f64,
    n: usize,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if n < 2 || pairs == 0 {
        return Err(Error::Domain("need n >= 2 and pairs >= 1".into()));
    }
    let d = f0.dimension();
    let rates: Vec<f64> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut rng = member_rng(seed, p as u64);
            let mut x = [0.0; 2];
            let mut y = [0.0; 2];
            for i in 0..d {
                x[i] = rng.gen_range(-2.0..2.0);
                y[i] = rng.gen_range(-2.0..2.0);
            }
            let dist = |x: &[f64], y: &[f64]| -> f64 {
                x.iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            };
            // shared noise: replay the same stream for both orbits
            let noise_rng = rng.clone();
            let (mut ra, mut rb) = (noise_rng.clone(), noise_rng);
            let mut logs = Vec::with_capacity(n + 1);
            logs.push(dist(&x[..d], &y[..d]).ln());
            for _ in 0..n {
                stochastic_step(f0, noise, eta, &mut x[..d], &mut ra)?;
                stochastic_step(f0, noise, eta, &mut y[..d], &mut rb)?;
                let dv = dist(&x[..d], &y[..d]);
                if dv < 1e-280 {
                    break;
                }
                logs.push(dv.ln());
            }
            // least-squares slope of ln distance against the step index
            let m = logs.len() as f64;
            let kbar = (m - 1.0) / 2.0;
            let (mut num, mut den) = (0.0, 0.0);
            for (k, &l) in logs.iter().enumerate() {
                let t = k as f64 - kbar;
                num += t * l;
                den += t * t;
            }
            Ok((num / den).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// First three modified-equation term magnitudes (|g|, |eta g2|, |eta^2 g3|)
/// at x, for 1D objectives with analytic third derivatives.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModifiedEqTerms {
    pub g: f64,
    pub eta_g2: f64,
    pub eta2_g3: f64,
}

pub fn modified_eq_terms(obj: &MultiscaleObjective, x: f64, eta: f64) -> Result<ModifiedEqTerms> {
    if !obj.has_third_derivative() {
        return Err(Error::Unsupported(
            "modified-equation terms need 1D analytic third derivatives".into(),
        ));
    }
    let g = -obj.grad1(x);
    let g1 = -obj.hess1(x);
    let g2d = -obj.third1(x); // g''
    let t2 = -0.5 * g1 * g;
    let t2p = -0.5 * (g2d * g + g1 * g1); // d/dx of t2
    let t3 = -(g2d * g * g + g1 * g1 * g) / 6.0 - 0.5 * (g1 * t2 + t2p * g);
    Ok(ModifiedEqTerms {
        g: g.abs(),
        eta_g2: (eta * t2).abs(),
        eta2_g3: (eta * eta * t3).abs(),
    })
}

/// Local magnitude of the first correction relative to the drift: the max of
/// eta*|g2|/|g| over one micro period around `x` (16 phase samples). At a
/// single phase the ratio can dip through zero with the micro oscillation;
/// the local max measures whether the correction term as a function has
/// overtaken the drift near x.
pub fn max_correction_ratio(
    obj: &MultiscaleObjective,
    x: f64,
    eta: f64,
    micro_period_scale: f64,
) -> Result<f64> {
    let period = std::f64::consts::TAU * micro_period_scale;
    let mut best = 0.0f64;
    for i in 0..16 {
        let t = modified_eq_terms(obj, x + period * i as f64 / 16.0, eta)?;
        if t.g > 1e-12 {
            best = best.max(t.eta_g2 / t.g);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::catalog_micro;

    fn obj(mac: &str, mic: Option<(&str, f64)>) -> MultiscaleObjective {
        MultiscaleObjective::new(
            catalog_macro(mac).unwrap(),
            mic.map(|(id, e)| catalog_micro(id, e).unwrap()),
        )
        .unwrap()
    }

    #[test]
    fn lyapunov_linear_map_exact() {
        let l = lyapunov(&obj("quadratic", None), 0.1, &[1.0], 1000, 10).unwrap();
        assert!((l.lambda - 0.9f64.ln()).abs() < 1e-12);
        assert!(l.residual.is_none());

        // 2D pure macro: ln max |1 - eta lambda_i(H)|
        let l = lyapunov(&obj("matyas", None), 0.1, &[1.0, -0.5], 1000, 0).unwrap();
        assert!((l.lambda - 0.996f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_residual_near_m_and_x0_independent() {
        let eps = 1e-4;
        let o = obj("double-well:k=1", Some(("sin", eps)));
        let mut lambdas = Vec::new();
        for x0 in [0.3, -0.9, 1.4, 0.05, -1.8] {
            let l = lyapunov(&o, 0.05, &[x0], 400_000, 10_000).unwrap();
            assert!(
                (l.residual.unwrap() - (-std::f64::consts::LN_2)).abs() < 0.1,
                "x0={x0}: residual={}",
                l.residual.unwrap()
            );
            let m_ref = l.m_reference.unwrap();
            assert!((m_ref - (-std::f64::consts::LN_2)).abs() < 1e-3);
            lambdas.push(l.lambda);
        }
        let (lo, hi) = lambdas
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        assert!(hi - lo < 0.05, "spread {}", hi - lo);
    }

    #[test]
    fn lyapunov_rejects_divergence() {
        assert!(matches!(
            lyapunov(&obj("quartic", None), 10.0, &[2.0], 1000, 0),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(chaos_threshold(0.0, 1e-3), 1e-3);
        let t = chaos_threshold(-std::f64::consts::LN_2, 1e-3);
        assert!((t - 2e-3).abs() < 1e-15);
        let t = chaos_threshold(-0.2669, 1e-5);
        assert!((t - 1.306e-5).abs() < 1e-8);
    }

    #[test]
    fn bifurcation_periods_at_landmark_etas() {
        let eps = 1e-3;
        let o = obj("quartic", Some(("cos-neg", eps)));
        let grid = [0.1 * eps, 2.5 * eps];
        let diag = bifurcation_scan(&o, &grid, 0.3 * eps, 1_000_000, 256, None).unwrap();
        assert_eq!(diag.rows[0].label, PeriodLabel::Period(1));
        assert_eq!(diag.rows[1].label, PeriodLabel::Period(2));
    }

    #[test]
    fn bifurcation_marks_divergence_and_keeps_scanning() {
        // quadratic contracts geometrically at eta=0.1 (the quartic only decays
        // algebraically, too slow to register as period 1 in 1000 steps)
        let o = obj("quadratic", None);
        // explicit tolerance: with no micro term the auto tolerance tracks the
        // recorded window's diameter, which shrinks to zero at a fixed point
        let diag = bifurcation_scan(&o, &[0.1, 50.0], 2.0, 1000, 64, Some(1e-9)).unwrap();
        assert_eq!(diag.rows[0].label, PeriodLabel::Period(1));
        assert_eq!(diag.rows[1].label, PeriodLabel::Diverged);
    }

    #[test]
    fn period3_absent_for_contraction() {
        let found = find_period3(&obj("quadratic", None), 0.1, (-1.0, 1.0), 10_000).unwrap();
        assert!(found.is_none());
    }

    #[test]
    fn period3_found_in_chaotic_regime() {
        let o = obj("quartic", Some(("sin", 1e-6)));
        let cert = find_period3(&o, 0.1, (-1.0, 1.0), 1_000_000)
            .unwrap()
            .expect("certificate should exist in the chaotic regime");
        assert!(cert.verify(&o, 0.1));
        if cert.increasing {
            assert!(cert.d <= cert.a && cert.a < cert.b && cert.b < cert.c);
        } else {
            assert!(cert.d >= cert.a && cert.a > cert.b && cert.b > cert.c);
        }
    }

    #[test]
    fn s_connectedness_matches_brute_force() {
        for k in [0.02, 0.3, K_CRITICAL - 0.01, K_CRITICAL + 0.01, 5.0] {
            // count sign-change components of |4kx(x^2-1)| - 1 <= 0 on a grid
            let n = 1_000_000usize;
            let mut components = 0;
            let mut inside = false;
            for i in 0..=n {
                let x = -2.0 + 4.0 * i as f64 / n as f64;
                let now = (4.0 * k * x * (x * x - 1.0)).abs() <= 1.0;
                if now && !inside {
                    components += 1;
                }
                inside = now;
            }
            assert_eq!(
                s_is_connected(k),
                components == 1,
                "k={k}: components={components}"
            );
        }
    }

    #[test]
    fn escape_dichotomy_quick() {
        let r = escape_scan(0.02, 0.05, 1e-4, 1.0, 1_000_000).unwrap();
        assert!(r.escaped && r.s_connected);
        let r = escape_scan(5.0, 0.05, 1e-4, 1.0, 1_000_000).unwrap();
        assert!(!r.escaped && !r.s_connected);
        let r = escape_scan(K_CRITICAL, 0.01, 1e-4, 1.0, 10).unwrap();
        assert!(r.boundary_case);
        assert!(escape_scan(1.0, 0.01, 1e-4, 0.0, 10).is_err());
    }

    #[test]
    fn coupling_rate_quadratic_exact() {
        let f0 = catalog_macro("quadratic").unwrap();
        let nm = catalog_micro("sin", 1e-3).unwrap().noise_model().unwrap();
        let rate = coupling_rate(&f0, &nm, 0.1, 200, 8, 1).unwrap();
        assert!((rate - 0.9).abs() < 1e-9, "rate={rate}");

        // monotone in eta below 1/L
        let mut prev = 1.0;
        for eta in [0.05, 0.1, 0.2, 0.4] {
            let r = coupling_rate(&f0, &nm, eta, 200, 4, 2).unwrap();
            assert!(r < prev, "eta={eta}: {r} !< {prev}");
            prev = r;
        }
    }

    #[test]
    fn coupling_rate_matyas_bounded_by_theory() {
        let f0 = catalog_macro("matyas").unwrap();
        let nm = catalog_micro("sincos2d", 1e-5)
            .unwrap()
            .noise_model()
            .unwrap();
        let eta = 0.1;
        let bound = (1.0f64 - eta * 0.04).abs().max((1.0f64 - eta * 1.0).abs());
        let rate = coupling_rate(&f0, &nm, eta, 2000, 16, 3).unwrap();
        assert!(rate <= bound + 0.01, "rate={rate} bound={bound}");
    }

    #[test]
    fn modified_terms_quadratic_hand_values() {
        let o = obj("quadratic", None);
        let (x, eta) = (0.8, 0.1);
        let t = modified_eq_terms(&o, x, eta).unwrap();
        // g = -x, g2 = -x/2, g3 = -x/3
        assert!((t.g - x).abs() < 1e-15);
        assert!((t.eta_g2 - eta * x / 2.0).abs() < 1e-15);
        assert!((t.eta2_g3 - eta * eta * x / 3.0).abs() < 1e-15);
    }

    #[test]
    fn modified_terms_grow_like_eta_over_eps() {
        let eps = 1e-4;
        let o = obj("quadratic", Some(("sin", eps)));
        let mut rng = member_rng(5, 0);

        // Pointwise at eta = 10 eps the ratio eta*g2/g = 5|sin(x/eps)| up to
        // O(eps), so the hit fraction has the closed form 1 - (2/pi)asin(1/5).
        let expect = 1.0 - 2.0 / std::f64::consts::PI * 0.2f64.asin();
        let (mut hits10, mut total) = (0, 0);
        for _ in 0..4000 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            // eta = eps: ratios stay O(1)
            let t = modified_eq_terms(&o, x, eps).unwrap();
            if t.g > 1e-3 {
                assert!(t.eta_g2 / t.g < 5.0);
            }
            let t = modified_eq_terms(&o, x, 10.0 * eps).unwrap();
            if t.g > 1e-3 {
                total += 1;
                if t.eta_g2 / t.g >= 1.0 {
                    hits10 += 1;
                }
            }
        }
        let frac = hits10 as f64 / total as f64;
        assert!((frac - expect).abs() < 0.03, "frac={frac} expect={expect}");

        // Taking the correction's local magnitude (max over one micro period
        // around the point) instead of its value at a single phase, the first
        // correction dominates at every point once eta = 10 eps.
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let r = max_correction_ratio(&o, x, 10.0 * eps, eps).unwrap();
            assert!(r >= 1.0, "local ratio {r} at x={x}");
            let r = max_correction_ratio(&o, x, eps, eps).unwrap();
            assert!(r < 5.0, "local ratio {r} at x={x} should stay O(1)");
        }
    }

    #[test]
    fn modified_terms_unsupported_without_third_derivative() {
        let o = obj("quadratic", Some(("modulated", 1e-4)));
        assert!(modified_eq_terms(&o, 0.3, 0.1).is_err());
    }
}

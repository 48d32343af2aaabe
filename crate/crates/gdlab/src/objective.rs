//! Multiscale objective catalog: macroscopic landscapes, micro-scale
//! perturbations with their extracted noise models, and the log-Hessian
//! constant used by the Lyapunov estimate.

use rand::Rng;

use crate::error::{Error, Result};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;
pub const TAU: f64 = std::f64::consts::TAU;

/// Macroscopic landscape f0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MacroKind {
    /// x^4/4
    Quartic,
    /// x^2/2
    Quadratic,
    /// 0.26(x^2+y^2)+0.48xy
    Matyas,
    /// k(x^2-1)^2
    DoubleWell { k: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroFunction {
    pub kind: MacroKind,
}

impl MacroFunction {
    pub fn dimension(&self) -> usize {
        match self.kind {
            MacroKind::Matyas => 2,
            _ => 1,
        }
    }

    pub fn id(&self) -> String {
        match self.kind {
            MacroKind::Quartic => "quartic".into(),
            MacroKind::Quadratic => "quadratic".into(),
            MacroKind::Matyas => "matyas".into(),
            MacroKind::DoubleWell { k } => format!("double-well:k={k}"),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.kind {
            MacroKind::Quartic => x[0].powi(4) / 4.0,
            MacroKind::Quadratic => x[0] * x[0] / 2.0,
            MacroKind::Matyas => 0.26 * (x[0] * x[0] + x[1] * x[1]) + 0.48 * x[0] * x[1],
            MacroKind::DoubleWell { k } => {
                let s = x[0] * x[0] - 1.0;
                k * s * s
            }
        }
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            MacroKind::Matyas => {
                out[0] = 0.52 * x[0] + 0.48 * x[1];
                out[1] = 0.52 * x[1] + 0.48 * x[0];
            }
            _ => out[0] = self.grad1(x[0]),
        }
    }

    /// Scalar gradient, 1D kinds only.
    #[inline(always)]
    pub fn grad1(&self, x: f64) -> f64 {
        match self.kind {
            MacroKind::Quartic => x * x * x,
            MacroKind::Quadratic => x,
            MacroKind::DoubleWell { k } => 4.0 * k * x * (x * x - 1.0),
            MacroKind::Matyas => unreachable!("matyas is 2D"),
        }
    }

    /// Scalar second derivative, 1D kinds only.
    #[inline(always)]
    pub fn hess1(&self, x: f64) -> f64 {
        match self.kind {
            MacroKind::Quartic => 3.0 * x * x,
            MacroKind::Quadratic => 1.0,
            MacroKind::DoubleWell { k } => 4.0 * k * (3.0 * x * x - 1.0),
            MacroKind::Matyas => unreachable!("matyas is 2D"),
        }
    }

    /// Scalar third derivative, 1D kinds only.
    #[inline(always)]
    pub fn third1(&self, x: f64) -> f64 {
        match self.kind {
            MacroKind::Quartic => 6.0 * x,
            MacroKind::Quadratic => 0.0,
            MacroKind::DoubleWell { k } => 24.0 * k * x,
            MacroKind::Matyas => unreachable!("matyas is 2D"),
        }
    }

    /// Hessian; only the leading d x d block is meaningful.
    pub fn hess(&self, x: &[f64]) -> [[f64; 2]; 2] {
        match self.kind {
            MacroKind::Matyas => [[0.52, 0.48], [0.48, 0.52]],
            _ => [[self.hess1(x[0]), 0.0], [0.0, 0.0]],
        }
    }

    /// Strong-convexity constant, when the entry is strongly convex.
    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            MacroKind::Quadratic => Some(1.0),
            MacroKind::Matyas => Some(0.04),
            _ => None,
        }
    }

    /// Global smoothness constant, when the gradient is globally Lipschitz.
    pub fn smoothness(&self) -> Option<f64> {
        match self.kind {
            MacroKind::Quadratic => Some(1.0),
            MacroKind::Matyas => Some(1.0),
            _ => None,
        }
    }

    /// Global minimizer(s).
    pub fn minimizers(&self) -> Vec<Vec<f64>> {
        match self.kind {
            MacroKind::Quartic | MacroKind::Quadratic => vec![vec![0.0]],
            MacroKind::Matyas => vec![vec![0.0, 0.0]],
            MacroKind::DoubleWell { .. } => vec![vec![-1.0], vec![1.0]],
        }
    }
}

/// Micro-scale perturbation f_{1,eps}: O(eps) values, O(1) gradients,
/// O(1/eps) Hessians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MicroKind {
    /// eps sin(x/eps)
    Sin,
    /// -eps cos(x/eps)
    CosNeg,
    /// eps sin(x/eps) + eps sin(sqrt2 x/eps), aperiodic
    Quasi,
    /// eps sin(x/eps) + eps cos(y/eps)
    SinCos2d,
    /// eps cos(1 + cos(sqrt3 x/5) x/eps); no bounded noise model exists
    Modulated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroScale {
    pub kind: MicroKind,
    pub epsilon: f64,
}

impl MicroScale {
    pub fn dimension(&self) -> usize {
        match self.kind {
            MicroKind::SinCos2d => 2,
            _ => 1,
        }
    }

    pub fn id(&self) -> &'static str {
        match self.kind {
            MicroKind::Sin => "sin",
            MicroKind::CosNeg => "cos-neg",
            MicroKind::Quasi => "quasi",
            MicroKind::SinCos2d => "sincos2d",
            MicroKind::Modulated => "modulated",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let e = self.epsilon;
        match self.kind {
            MicroKind::Sin => e * (x[0] / e).sin(),
            MicroKind::CosNeg => -e * (x[0] / e).cos(),
            MicroKind::Quasi => e * (x[0] / e).sin() + e * (SQRT2 * x[0] / e).sin(),
            MicroKind::SinCos2d => e * (x[0] / e).sin() + e * (x[1] / e).cos(),
            MicroKind::Modulated => {
                let c = (3.0f64.sqrt() / 5.0 * x[0]).cos();
                e * (1.0 + c * x[0] / e).cos()
            }
        }
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            MicroKind::SinCos2d => {
                let e = self.epsilon;
                out[0] = (x[0] / e).cos();
                out[1] = -(x[1] / e).sin();
            }
            _ => out[0] = self.grad1(x[0]),
        }
    }

    #[inline(always)]
    pub fn grad1(&self, x: f64) -> f64 {
        let e = self.epsilon;
        match self.kind {
            MicroKind::Sin => (x / e).cos(),
            MicroKind::CosNeg => (x / e).sin(),
            MicroKind::Quasi => (x / e).cos() + SQRT2 * (SQRT2 * x / e).cos(),
            MicroKind::Modulated => {
                let w = 3.0f64.sqrt() / 5.0;
                let (s, c) = (w * x).sin_cos();
                let u = 1.0 + c * x / e;
                -u.sin() * (c - w * x * s)
            }
            MicroKind::SinCos2d => unreachable!("sincos2d is 2D"),
        }
    }

    #[inline(always)]
    pub fn hess1(&self, x: f64) -> f64 {
        let e = self.epsilon;
        match self.kind {
            MicroKind::Sin => -(x / e).sin() / e,
            MicroKind::CosNeg => (x / e).cos() / e,
            MicroKind::Quasi => -((x / e).sin() + 2.0 * (SQRT2 * x / e).sin()) / e,
            MicroKind::Modulated => {
                let w = 3.0f64.sqrt() / 5.0;
                let (s, c) = (w * x).sin_cos();
                let u = 1.0 + c * x / e;
                let du = (c - w * x * s) / e;
                let ddu = (-2.0 * w * s - w * w * x * c) / e;
                -(u.cos() * du * du + u.sin() * ddu) * e
            }
            MicroKind::SinCos2d => unreachable!("sincos2d is 2D"),
        }
    }

    #[inline(always)]
    pub fn third1(&self, x: f64) -> f64 {
        let e = self.epsilon;
        match self.kind {
            MicroKind::Sin => -(x / e).cos() / (e * e),
            MicroKind::CosNeg => -(x / e).sin() / (e * e),
            MicroKind::Quasi => {
                -((x / e).cos() + 2.0 * SQRT2 * (SQRT2 * x / e).cos()) / (e * e)
            }
            _ => unimplemented!("third derivative only for 1D analytic kinds"),
        }
    }

    /// Hessian; diagonal for all catalog kinds.
    pub fn hess(&self, x: &[f64]) -> [[f64; 2]; 2] {
        match self.kind {
            MicroKind::SinCos2d => {
                let e = self.epsilon;
                [
                    [-(x[0] / e).sin() / e, 0.0],
                    [0.0, -(x[1] / e).cos() / e],
                ]
            }
            _ => [[self.hess1(x[0]), 0.0], [0.0, 0.0]],
        }
    }

    /// Bounded zero-mean noise extracted per Condition 1, absent for kinds
    /// that violate it.
    pub fn noise_model(&self) -> Option<NoiseModel> {
        let kind = match self.kind {
            MicroKind::Sin => NoiseKind::NegCos,
            MicroKind::CosNeg => NoiseKind::NegSin,
            MicroKind::Quasi => NoiseKind::QuasiPair,
            MicroKind::SinCos2d => NoiseKind::SinCos2d,
            MicroKind::Modulated => return None,
        };
        Some(NoiseModel { kind })
    }

    pub fn has_m_oracle(&self) -> bool {
        !matches!(self.kind, MicroKind::Modulated)
    }

    /// Whether third1 is available (1D kinds with simple analytic form).
    pub fn has_third_derivative(&self) -> bool {
        matches!(
            self.kind,
            MicroKind::Sin | MicroKind::CosNeg | MicroKind::Quasi
        )
    }
}

/// f = f0 + f_{1,eps}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiscaleObjective {
    pub macro_fn: MacroFunction,
    pub micro: Option<MicroScale>,
}

impl MultiscaleObjective {
    pub fn new(macro_fn: MacroFunction, micro: Option<MicroScale>) -> Result<Self> {
        if let Some(m) = micro {
            if m.dimension() != macro_fn.dimension() {
                return Err(Error::Domain(format!(
                    "dimension mismatch: {} is {}D but {} is {}D",
                    macro_fn.id(),
                    macro_fn.dimension(),
                    m.id(),
                    m.dimension()
                )));
            }
        }
        Ok(Self { macro_fn, micro })
    }

    pub fn dimension(&self) -> usize {
        self.macro_fn.dimension()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.macro_fn.eval(x);
        if let Some(m) = &self.micro {
            v += m.eval(x);
        }
        v
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        self.macro_fn.grad(x, out);
        if let Some(m) = &self.micro {
            let mut g = [0.0; 2];
            m.grad(x, &mut g[..self.dimension()]);
            for (o, gi) in out.iter_mut().zip(g.iter()) {
                *o += gi;
            }
        }
    }

    #[inline(always)]
    pub fn grad1(&self, x: f64) -> f64 {
        let mut g = self.macro_fn.grad1(x);
        if let Some(m) = &self.micro {
            g += m.grad1(x);
        }
        g
    }

    #[inline(always)]
    pub fn hess1(&self, x: f64) -> f64 {
        let mut h = self.macro_fn.hess1(x);
        if let Some(m) = &self.micro {
            h += m.hess1(x);
        }
        h
    }

    pub fn hess(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let a = self.macro_fn.hess(x);
        let mut out = a;
        if let Some(m) = &self.micro {
            let b = m.hess(x);
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += b[i][j];
                }
            }
        }
        out
    }

    /// Whether third1 is available.
    pub fn has_third_derivative(&self) -> bool {
        self.dimension() == 1 && self.micro.map_or(true, |m| m.has_third_derivative())
    }

    #[inline(always)]
    pub fn third1(&self, x: f64) -> f64 {
        let mut t = self.macro_fn.third1(x);
        if let Some(m) = &self.micro {
            t += m.third1(x);
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum NoiseKind {
    /// zeta = -cos U, U ~ Uniform[0,2pi): sigma^2 = 1/2
    NegCos,
    /// zeta = -sin U: sigma^2 = 1/2
    NegSin,
    /// zeta = -(cos U1 + sqrt2 cos U2): sigma^2 = 3/2
    QuasiPair,
    /// zeta = (-cos U1, sin U2): sigma^2 = 1/2 per axis
    SinCos2d,
}

/// Bounded zero-mean random variable of Condition 1, with isotropic
/// covariance sigma^2 I.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
}

impl NoiseModel {
    pub fn dimension(&self) -> usize {
        match self.kind {
            NoiseKind::SinCos2d => 2,
            _ => 1,
        }
    }

    /// Almost-sure bound B on the norm of a draw.
    pub fn bound(&self) -> f64 {
        match self.kind {
            NoiseKind::NegCos | NoiseKind::NegSin => 1.0,
            NoiseKind::QuasiPair => 1.0 + SQRT2,
            NoiseKind::SinCos2d => SQRT2,
        }
    }

    /// Per-axis variance; all catalog models are isotropic.
    pub fn sigma2(&self) -> f64 {
        match self.kind {
            NoiseKind::NegCos | NoiseKind::NegSin | NoiseKind::SinCos2d => 0.5,
            NoiseKind::QuasiPair => 1.5,
        }
    }

    pub fn isotropic(&self) -> bool {
        true
    }

    #[inline(always)]
    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self.kind {
            NoiseKind::NegCos => out[0] = -rng.gen_range(0.0..TAU).cos(),
            NoiseKind::NegSin => out[0] = -rng.gen_range(0.0..TAU).sin(),
            NoiseKind::QuasiPair => {
                let u1: f64 = rng.gen_range(0.0..TAU);
                let u2: f64 = rng.gen_range(0.0..TAU);
                out[0] = -(u1.cos() + SQRT2 * u2.cos());
            }
            NoiseKind::SinCos2d => {
                let u1: f64 = rng.gen_range(0.0..TAU);
                let u2: f64 = rng.gen_range(0.0..TAU);
                out[0] = -u1.cos();
                out[1] = u2.sin();
            }
        }
    }

    #[inline(always)]
    pub fn sample1<R: Rng>(&self, rng: &mut R) -> f64 {
        debug_assert_eq!(self.dimension(), 1);
        let mut z = [0.0];
        self.sample(rng, &mut z);
        z[0]
    }
}

/// Look up a macroscopic landscape by id. Accepts `double-well:k=<v>`.
pub fn catalog_macro(id: &str) -> Result<MacroFunction> {
    let kind = match id {
        "quartic" => MacroKind::Quartic,
        "quadratic" => MacroKind::Quadratic,
        "matyas" => MacroKind::Matyas,
        _ => {
            let rest = id
                .strip_prefix("double-well:k=")
                .or_else(|| id.strip_prefix("double-well(k=").and_then(|s| s.strip_suffix(')')));
            match rest.and_then(|s| s.parse::<f64>().ok()) {
                Some(k) if k > 0.0 && k.is_finite() => MacroKind::DoubleWell { k },
                _ => return Err(Error::UnknownCatalogId(id.to_string())),
            }
        }
    };
    Ok(MacroFunction { kind })
}

/// Look up a micro-scale perturbation by id.
pub fn catalog_micro(id: &str, epsilon: f64) -> Result<MicroScale> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let kind = match id {
        "sin" => MicroKind::Sin,
        "cos-neg" => MicroKind::CosNeg,
        "quasi" => MicroKind::Quasi,
        "sincos2d" => MicroKind::SinCos2d,
        "modulated" => MicroKind::Modulated,
        _ => return Err(Error::UnknownCatalogId(id.to_string())),
    };
    Ok(MicroScale { kind, epsilon })
}

/// Quadrature settings for the Condition-2 constant.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSettings {
    /// Midpoint nodes per 2pi period.
    pub nodes_per_period: usize,
    /// Periods averaged over for the quasiperiodic cell.
    pub quasi_periods: usize,
    /// Nodes per axis for 2D cells.
    pub nodes_2d: usize,
    /// Nodes this close to a log singularity are dropped.
    pub singularity_gap: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            nodes_per_period: 200_000,
            quasi_periods: 10_000,
            nodes_2d: 2048,
            singularity_gap: 1e-12,
        }
    }
}

/// m = E[ln ||eps Hess f_{1,eps}(U)||_2] over one (quasi-)period cell
/// (Condition 2), by composite midpoint quadrature.
pub fn m_constant(micro: &MicroScale, quad: &QuadratureSettings) -> Result<f64> {
    if !micro.has_m_oracle() {
        return Err(Error::Unsupported(format!(
            "micro-scale `{}` has no Condition-2 oracle",
            micro.id()
        )));
    }
    let gap = quad.singularity_gap;
    // Average ln|g| of a scalar integrand by midpoint, skipping nodes where
    // |g| is below the singularity gap. The integrand is integrable so the
    // skipped mass is negligible at these node counts.
    let avg_ln = |n: usize, len: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        let h = len / n as f64;
        let mut sum = 0.0;
        let mut kept = 0usize;
        for i in 0..n {
            let y = (i as f64 + 0.5) * h;
            let v = g(y).abs();
            if v > gap {
                sum += v.ln();
                kept += 1;
            }
        }
        sum / kept as f64
    };
    let m = match micro.kind {
        // eps f'' = -sin(y)
        MicroKind::Sin => avg_ln(quad.nodes_per_period, TAU, &|y| y.sin()),
        // eps f'' = cos(y)
        MicroKind::CosNeg => avg_ln(quad.nodes_per_period, TAU, &|y| y.cos()),
        // eps f'' = -(sin y + 2 sin(sqrt2 y)); equidistribution over a long cell
        MicroKind::Quasi => {
            let periods = quad.quasi_periods as f64;
            let n = quad.quasi_periods * 256;
            avg_ln(n, TAU * periods, &|y| y.sin() + 2.0 * (SQRT2 * y).sin())
        }
        // 2-norm of diag(-sin u, -cos v)
        MicroKind::SinCos2d => {
            let n = quad.nodes_2d;
            let h = TAU / n as f64;
            let mut sum = 0.0;
            let mut kept = 0usize;
            for i in 0..n {
                let u = ((i as f64 + 0.5) * h).sin().abs();
                for j in 0..n {
                    let v = ((j as f64 + 0.5) * h).cos().abs();
                    let g = u.max(v);
                    if g > gap {
                        sum += g.ln();
                        kept += 1;
                    }
                }
            }
            sum / kept as f64
        }
        MicroKind::Modulated => unreachable!(),
    };
    Ok(m)
}

/// Gradient consistency report: analytic vs central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub points_checked: usize,
    pub pass: bool,
}

/// Compare analytic gradients of `obj` against central finite differences
/// at the given points. `step` must resolve the micro-scale.
pub fn grad_check(obj: &MultiscaleObjective, points: &[Vec<f64>], step: f64) -> GradCheckReport {
    let d = obj.dimension();
    let mut max_rel = 0.0f64;
    for p in points {
        let mut g = [0.0; 2];
        obj.grad(p, &mut g[..d]);
        let mut fd = [0.0; 2];
        let mut xp = p.clone();
        for i in 0..d {
            let x0 = p[i];
            xp[i] = x0 + step;
            let fplus = obj.eval(&xp);
            xp[i] = x0 - step;
            let fminus = obj.eval(&xp);
            xp[i] = x0;
            fd[i] = (fplus - fminus) / (2.0 * step);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            num += (g[i] - fd[i]) * (g[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        let rel = num.sqrt() / den.sqrt().max(1.0);
        max_rel = max_rel.max(rel);
    }
    GradCheckReport {
        max_rel_err: max_rel,
        points_checked: points.len(),
        pass: max_rel <= 1e-5,
    }
}

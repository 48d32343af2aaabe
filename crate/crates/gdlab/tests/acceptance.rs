//! Acceptance gate: thirteen numbered checks covering the laboratory's core
//! claims. One test per criterion; each prints a single PASS/FAIL line (run
//! with `--nocapture` to see them all) and asserts its pinned tolerance.
//!
//! Experiments are run once at full scale and shared across the criteria
//! that read them.

use std::sync::OnceLock;

use gdlab::experiments::{run_experiment, ExperimentConfig, Verdict};

const SEED: u64 = 42;

fn run(experiment: &str, tweak: fn(&mut ExperimentConfig)) -> Verdict {
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.seed = Some(SEED);
    tweak(&mut cfg);
    run_experiment(&cfg).unwrap_or_else(|e| panic!("{experiment} failed to run: {e}"))
}

fn lyapunov_sin() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("lyapunov-sweep", |_| {}))
}

fn lyapunov_quasi() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("lyapunov-sweep", |c| c.micro = Some("quasi".into())))
}

fn lyapunov_2d() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| {
        run("lyapunov-sweep", |c| {
            c.macro_id = Some("matyas".into());
            c.micro = Some("sincos2d".into());
        })
    })
}

fn bifurcation() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("bifurcation", |_| {}))
}

fn ergodicity() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("ergodicity-1d", |_| {}))
}

fn matyas() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("matyas-2d", |_| {}))
}

fn residuals() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("residual-orders", |c| c.mc_n = Some(100_000_000)))
}

fn escape() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("escape-dichotomy", |_| {}))
}

fn momentum() -> &'static Verdict {
    static V: OnceLock<Verdict> = OnceLock::new();
    V.get_or_init(|| run("momentum", |_| {}))
}

fn metric(v: &Verdict, key: &str) -> f64 {
    *v.metrics
        .get(key)
        .unwrap_or_else(|| panic!("missing metric `{key}` in {}", v.experiment))
}

fn flag(v: &Verdict, key: &str) -> bool {
    *v.criteria
        .get(key)
        .unwrap_or_else(|| panic!("missing criterion flag `{key}` in {}", v.experiment))
}

fn check(no: u32, name: &str, ok: bool, detail: String) {
    println!(
        "criterion {no:02} [{name}]: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {no:02} [{name}] failed: {detail}");
}

#[test]
fn criterion_01_lyapunov_constant_periodic_micro() {
    // double-well(k=1) + sin micro: mean of lambda - ln(eta/eps) over the
    // eta sweep matches the quadrature constant -ln 2.
    let v = lyapunov_sin();
    let got = metric(v, "mean_residual");
    check(
        1,
        "lyapunov constant, periodic micro",
        (got - (-0.6931)).abs() <= 0.1,
        format!("mean residual {got:.4}, expected -0.6931 +/- 0.1"),
    );
}

#[test]
fn criterion_02_lyapunov_constant_quasiperiodic_micro() {
    let v = lyapunov_quasi();
    let got = metric(v, "mean_residual");
    check(
        2,
        "lyapunov constant, quasi-periodic micro",
        (got - (-0.0117)).abs() <= 0.1,
        format!("mean residual {got:.4}, expected -0.0117 +/- 0.1"),
    );
}

#[test]
fn criterion_03_lyapunov_constant_2d() {
    let v = lyapunov_2d();
    let got = metric(v, "mean_residual");
    check(
        3,
        "lyapunov constant, 2D",
        (got - (-0.2669)).abs() <= 0.1,
        format!("mean residual {got:.4}, expected -0.2669 +/- 0.1"),
    );
}

#[test]
fn criterion_04_period_doubling_route_to_chaos() {
    let v = bifurcation();
    let first = metric(v, "first_aperiodic_eta");
    let (lo, hi) = (metric(v, "period2_window_lo"), metric(v, "period2_window_hi"));
    let ok = flag(v, "first_aperiodic_in_window") && flag(v, "period2_window_contains_2p5eps");
    check(
        4,
        "period-doubling route to chaos",
        ok,
        format!(
            "first aperiodic eta {first:.2e} (want within [3e-3, 4e-3]), \
             period-2 window [{lo:.2e}, {hi:.2e}] (want to contain 2.5e-3)"
        ),
    );
}

#[test]
fn criterion_05_rescaled_gibbs_ergodicity() {
    let v = ergodicity();
    let ks = metric(v, "ks_ensemble_vs_gibbs");
    let w1 = metric(v, "w1_orbit_vs_ensemble");
    let floor = metric(v, "w1_floor");
    let ok = flag(v, "ensemble_matches_gibbs_ks") && flag(v, "orbit_matches_ensemble_w1");
    check(
        5,
        "rescaled-Gibbs ergodicity",
        ok,
        format!("KS {ks:.4} (<= 0.05), orbit-vs-ensemble W1 {w1:.2e} (<= 3x floor {floor:.2e})"),
    );
}

#[test]
fn criterion_06_deterministic_vs_stochastic_2d() {
    let v = matyas();
    let d = metric(v, "sliced_w1_det_vs_sto");
    let floor = metric(v, "sliced_w1_floor");
    check(
        6,
        "deterministic vs stochastic agreement, 2D",
        flag(v, "det_matches_sto_sliced_w1"),
        format!("sliced W1 {d:.2e} (<= 2x floor {floor:.2e})"),
    );
}

#[test]
fn criterion_07_invariance_residual_is_cubic() {
    let v = residuals();
    let slope = metric(v, "residual_loglog_slope");
    let ok = flag(v, "residual_statistics_conclusive") && flag(v, "residual_slope_is_cubic");
    check(
        7,
        "invariance residual is third order",
        ok,
        format!("log-log slope {slope:.3}, expected 3 +/- 0.3, all points conclusive"),
    );
}

#[test]
fn criterion_08_gradient_moment_scaling() {
    let v = residuals();
    let sq = metric(v, "grad_quadratic_loglog_slope");
    let s4 = metric(v, "grad_quartic_loglog_slope");
    let ok = flag(v, "grad_moment_quadratic_slope")
        && flag(v, "grad_moment_quartic_slope_matches_oracle")
        && flag(v, "grad_moment_quartic_slope_above_bound");
    check(
        8,
        "gradient-moment scaling in eta",
        ok,
        format!(
            "quadratic slope {sq:.3} (1.0 +/- 0.05), quartic slope {s4:.3} \
             (quadrature oracle 1.5 +/- 0.1, and above the 1.25 analytic bound)"
        ),
    );
}

#[test]
fn criterion_09_coupling_contraction_rates() {
    let v = residuals();
    let rq = metric(v, "coupling_rate_quadratic");
    let rm = metric(v, "coupling_rate_matyas");
    let bound = metric(v, "coupling_rate_matyas_bound");
    let ok = flag(v, "coupling_rate_quadratic_exact") && flag(v, "coupling_rate_matyas_bounded");
    check(
        9,
        "coupling contraction rates",
        ok,
        format!("quadratic rate {rq:.12} (0.9 +/- 1e-9), 2D rate {rm:.4} (<= {bound:.4} + 0.01)"),
    );
}

#[test]
fn criterion_10_well_escape_dichotomy() {
    let v = escape();
    let sc = metric(v, "shallow_crossings");
    let dc = metric(v, "deep_crossings");
    let ok = flag(v, "shallow_well_escapes")
        && flag(v, "deep_well_trapped")
        && flag(v, "s_connectedness_flips_at_k_critical");
    check(
        10,
        "well-escape dichotomy",
        ok,
        format!(
            "k=0.02: {sc} crossings (>0); k=5: {dc} crossings in 1e7 steps (=0); \
             sublevel connectedness flips at k=3*sqrt(3)/8"
        ),
    );
}

#[test]
fn criterion_11_gaussian_approximation_in_well() {
    let v = escape();
    let ks = metric(v, "gaussian_ks_eta_0.001");
    let ok = flag(v, "gaussian_ks_monotone_in_eta") && flag(v, "gaussian_ks_small_at_smallest_eta");
    check(
        11,
        "within-well Gaussian approximation",
        ok,
        format!("KS decreases along the eta sweep and reaches {ks:.4} (<= 0.05) at eta=0.001"),
    );
}

#[test]
fn criterion_12_momentum_maps_stay_stochastic() {
    let v = momentum();
    let hv = metric(v, "heavy_ball_orbit_variance");
    let nv = metric(v, "nag_sc_orbit_variance");
    let ok = flag(v, "heavy_ball_variance_nonzero")
        && flag(v, "heavy_ball_halves_agree_w1")
        && flag(v, "nag_sc_variance_nonzero")
        && flag(v, "nag_sc_halves_agree_w1");
    check(
        12,
        "momentum maps stay stochastic",
        ok,
        format!(
            "orbit variances {hv:.2e} (heavy ball) and {nv:.2e} (NAG), both > 100*eps^2, \
             halves within 3x floor"
        ),
    );
}

#[test]
fn criterion_13_modified_equation_divergence() {
    let v = residuals();
    let frac = metric(v, "modified_eq_growth_fraction");
    check(
        13,
        "modified-equation correction overtakes the drift",
        flag(v, "modified_eq_terms_diverge"),
        format!("local |eta*g2|/|g| >= 1 at {:.1}% of points (>= 90%)", 100.0 * frac),
    );
}

//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Runs without the libtest harness so the lines print in
//! order with their timings.

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Result};
use num_complex::Complex64;
use tentlab::ensemble::{
    bandlimited_ensemble, bandlimited_field, log_ramp, mode_field, rough_coefficients, TimeProfile,
};
use tentlab::grid::{integrate_spacetime, make_grid, Grid, GridSpec};
use tentlab::maxreg::{half_interval_check, ml_apply, weighted_relative_difference, MlScheme};
use tentlab::probes::{
    aperture_probe, boundedness_sweep, carleson_probe, l2_weighted_probe, offdiag_order_for,
    offdiag_probe, run_probe, ProbeParams, ProbeReport, ProbeSetup, ProviderSpec, PROBE_NAMES,
};
use tentlab::semigroup::{fit_offdiag_order, heat_provider, OffDiagSample, SemigroupProvider};
use tentlab::tentnorm::{
    cone_functional, indicator_field, rescale_homogeneity, tent_norm, tent_norm_from_cone,
    TentParams,
};
use tentlab_cli::ExperimentConfig;

const SEED: u64 = 20240601;
/// Size of the standard ensemble.
const ENSEMBLE: usize = 50;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Result<Check> {
    Ok(Check {
        passed,
        detail: detail.into(),
    })
}

fn grid(n: usize, extent: f64, nx: usize, t_min: f64, t_max: f64, nt: usize) -> Result<Arc<Grid>> {
    Ok(make_grid(GridSpec::new(n, extent, nx, t_min, t_max, nt))?)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Rough coefficients in [1, 10] on 64 cells of [0, 16).
fn rough_divform() -> Result<ProviderSpec> {
    Ok(ProviderSpec::DivForm {
        source: "uniform [1, 10], seed 5".into(),
        base_nx: 64,
        coefficients: rough_coefficients(1, 64, 5, (1.0, 10.0))?,
    })
}

fn asserted_failures(report: &ProbeReport) -> Vec<String> {
    report
        .verdicts
        .iter()
        .filter(|v| v.asserted && !v.passed)
        .map(|v| format!("{}: {}", v.name, v.detail))
        .collect()
}

fn max_measurement(report: &ProbeReport, name: &str) -> f64 {
    report
        .cases
        .iter()
        .filter_map(|c| c.measurements.get(name))
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn all_finite(report: &ProbeReport, name: &str) -> bool {
    report
        .cases
        .iter()
        .filter_map(|c| c.measurements.get(name))
        .all(|v| v.is_finite())
}

fn fubini_identity() -> Result<Check> {
    let g = grid(1, 16.0, 256, 1.0, 7.0, 64)?;
    let fields = bandlimited_ensemble(g, SEED, ENSEMBLE, 32, &TimeProfile::default())?;
    let mut worst: f64 = 0.0;
    for m in [1, 2] {
        for beta in [-1.0, 0.0] {
            let params = TentParams::new(2.0, m, beta, 1.0)?;
            for f in &fields {
                let norm = tent_norm(f, &params)?;
                worst = worst.max(rel(norm * norm, 2.0 * integrate_spacetime(f, beta)));
            }
        }
    }
    check(
        worst <= 0.02,
        format!("max relative error {worst:.3e} (tol 2e-2)"),
    )
}

fn indicator_convergence() -> Result<Check> {
    // 1_{[1,2] x [0,1)} on X = 8 with p = 2, m = 1, beta = -1.
    let want = (2.0 * LN_2).sqrt();
    let params = TentParams::new(2.0, 1, -1.0, 1.0)?;
    let mut errors = Vec::new();
    for nt in [3, 5, 9, 17, 33] {
        let f = indicator_field(
            grid(1, 8.0, 65536, 1.0, 2.0, nt)?,
            (1.0, 2.0),
            [0.0, 0.0],
            [1.0, 0.0],
        )?;
        errors.push((tent_norm(&f, &params)? - want).abs());
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let lowest = orders.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        lowest >= 1.7,
        format!(
            "errors {} ; observed orders {} (need >= 1.7)",
            errors
                .iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>()
                .join(" "),
            orders
                .iter()
                .map(|o| format!("{o:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn aperture_setup() -> Result<ProbeSetup> {
    let spec = GridSpec::new(1, 16.0, 1024, 0.0625, 0.45, 32);
    spec.validate()?;
    Ok(ProbeSetup {
        check_stability: false,
        ..ProbeSetup::new(spec, ProviderSpec::Heat, SEED, ENSEMBLE)
    })
}

const ALPHAS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
const APERTURE_PS: [f64; 3] = [1.5, 2.0, 4.0];

fn aperture_monotonicity() -> Result<Check> {
    let setup = aperture_setup()?;
    let fields = bandlimited_ensemble(
        make_grid(setup.grid)?,
        setup.seed,
        setup.ensemble_size,
        setup.cutoff,
        &setup.profile,
    )?;
    let mut worst_drop: f64 = 0.0;
    for f in &fields {
        let cones: Vec<_> = ALPHAS
            .iter()
            .map(|&a| cone_functional(f, &TentParams::new(2.0, 1, -1.0, a)?))
            .collect::<tentlab::Result<_>>()?;
        for p in APERTURE_PS {
            let norms: Vec<f64> = cones.iter().map(|c| tent_norm_from_cone(c, p)).collect();
            for w in norms.windows(2) {
                worst_drop = worst_drop.max((w[0] - w[1]) / w[0]);
            }
        }
    }
    check(
        worst_drop <= 1e-12,
        format!("{} fields x p in {APERTURE_PS:?}: largest relative decrease {worst_drop:.1e} (tol 1e-12)", fields.len()),
    )
}

fn aperture_exponent() -> Result<Check> {
    let report = aperture_probe(&aperture_setup()?, &APERTURE_PS, &ALPHAS, 1, -1.0)?;
    let mut lines = Vec::new();
    let mut passed = report.all_asserted_pass();
    for p in APERTURE_PS {
        let Some(v) = report
            .verdicts
            .iter()
            .find(|v| v.name == format!("p={p}: exponent"))
        else {
            bail!("no exponent verdict for p = {p}");
        };
        passed &= v.passed;
        lines.push(format!("p={p}: {}", v.detail));
    }
    check(passed, lines.join("; "))
}

fn rescaling_identity() -> Result<Check> {
    let g = grid(1, 16.0, 256, 0.25, 4.0, 64)?;
    let fields = bandlimited_ensemble(g, SEED + 1, 20, 32, &TimeProfile::default())?;
    let mut worst: f64 = 0.0;
    for m in [1, 2, 3] {
        for (p, beta) in [(2.0, -1.0), (1.5, 0.0), (4.0, -0.5)] {
            let weighted = TentParams::new(p, m, beta, 1.0)?;
            let classical = TentParams::new(p, 1, -1.0, 1.0)?;
            for f in &fields {
                let h = rescale_homogeneity(f, m, beta)?;
                let want = (m as f64).sqrt() * tent_norm(&h, &classical)?;
                worst = worst.max(rel(tent_norm(f, &weighted)?, want));
            }
        }
    }
    check(
        worst <= 0.01,
        format!("max relative error {worst:.3e} over m in {{1,2,3}} (tol 1e-2)"),
    )
}

/// `int_0^t e^{-(t-s)} psi(s) ds` for the ramp envelope on a grid, by
/// composite Simpson in `ln s` plus the closed form on the plateau.
fn ramp_volterra(t: f64, t_a: f64, t_b: f64) -> f64 {
    let hi = t.min(t_b);
    let mut total = 0.0;
    if hi > t_a {
        let (a, b) = (t_a.ln(), hi.ln());
        let panels = 20_000;
        let h = (b - a) / panels as f64;
        let f = |x: f64| {
            let s = x.exp();
            (-(t - s)).exp() * log_ramp(s, t_a, t_b) * s
        };
        let mut acc = f(a) + f(b);
        for j in 1..panels {
            acc += f(a + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += acc * h / 3.0;
    }
    if t > t_b {
        total += 1.0 - (-(t - t_b)).exp();
    }
    total
}

fn constant_forcing_error(g: &Arc<Grid>, scheme: MlScheme) -> Result<f64> {
    let heat = heat_provider(*g.spec())?;
    let phi = bandlimited_field(g.clone(), SEED + 2, 0, 4, &TimeProfile::Ramp)?;
    let out = ml_apply(&phi, &heat, scheme)?;
    let last = g.nt() - 1;
    let plateau = phi.slice(last).to_vec();
    let scale = plateau.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for (i, &t) in g
        .times()
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= 10.0 * g.times()[0])
    {
        let decayed = heat.apply_exp(t, &plateau);
        for ((o, p), d) in out.slice(i).iter().zip(&plateau).zip(&decayed) {
            worst = worst.max((o - (p - d)).norm() / scale);
        }
    }
    Ok(worst)
}

fn ml_closed_forms() -> Result<Check> {
    let coarse = grid(1, 2.0 * PI, 32, 1e-6, 10.0, 64)?;
    let fine = grid(1, 2.0 * PI, 32, 1e-6, 10.0, 128)?;
    let const_ss = constant_forcing_error(&coarse, MlScheme::SingularitySplit)?;
    let const_ibp = constant_forcing_error(&fine, MlScheme::IntegrationByParts)?;

    // Heat mode k = 1 (|xi|^2 = 1) under the ramp profile.
    let heat = heat_provider(*coarse.spec())?;
    let f = mode_field(coarse.clone(), [1, 0], &TimeProfile::Ramp)?;
    let out = ml_apply(&f, &heat, MlScheme::SingularitySplit)?;
    let times = coarse.times();
    let (t_a, t_b) = (times[1], 10.0 * times[0]);
    let mut mode_err: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        let u = ramp_volterra(t, t_a, t_b);
        for (x, v) in out.slice(i).iter().enumerate() {
            let y = coarse.point(x)[0];
            mode_err = mode_err.max((v - Complex64::from_polar(u, y)).norm());
        }
    }

    let g = grid(1, 16.0, 64, 0.01, 100.0, 64)?;
    let fields = bandlimited_ensemble(g.clone(), SEED + 3, 20, 8, &TimeProfile::default())?;
    let mut agreement: f64 = 0.0;
    for provider in [ProviderSpec::Heat, rough_divform()?] {
        let built = provider.build(*g.spec())?;
        for f in &fields {
            let ss = ml_apply(f, built.as_ref(), MlScheme::SingularitySplit)?;
            let ibp = ml_apply(f, built.as_ref(), MlScheme::IntegrationByParts)?;
            for beta in [-1.0, 0.0] {
                agreement = agreement.max(weighted_relative_difference(&ibp, &ss, beta)?);
            }
        }
    }
    check(
        const_ss <= 1e-3 && const_ibp <= 1e-3 && mode_err <= 1e-6 && agreement <= 1e-3,
        format!(
            "constant forcing {const_ss:.1e} (SS, nt 64) / {const_ibp:.1e} (IBP, nt 128) tol 1e-3; \
             heat mode {mode_err:.1e} tol 1e-6; schemes agree to {agreement:.1e} tol 1e-3"
        ),
    )
}

fn stability_setup(provider: ProviderSpec, spec: GridSpec) -> ProbeSetup {
    ProbeSetup::new(spec, provider, SEED, ENSEMBLE)
}

fn l2_probe() -> Result<Check> {
    let spec = GridSpec::new(1, 16.0, 64, 0.01, 100.0, 64);
    let betas = [-1.0, 0.0, 0.5, 0.9];
    let mut details = Vec::new();
    let mut passed = true;
    for provider in [ProviderSpec::Heat, rough_divform()?] {
        let name = provider.name();
        let report = l2_weighted_probe(&stability_setup(provider, spec), &betas)?;
        let failures = asserted_failures(&report);
        passed &= failures.is_empty() && all_finite(&report, "ratio");
        details.push(format!(
            "{name}: max ratio {:.4}, max drift {:.1e}{}",
            max_measurement(&report, "ratio"),
            max_measurement(&report, "drift"),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" FAILED {}", failures.join(", "))
            }
        ));
    }

    let cfg = ExperimentConfig::from_toml_str(
        "probe = \"l2-weighted\"\nseed = 1\nn = 1\nextent = 16.0\nnx = 64\nt_min = 0.01\nt_max = 100.0\n\
         nt = 64\nprovider = \"heat\"\nbeta = [1.5]\nensemble_size = 4\n",
    )?;
    let rejected = match cfg.validate(Path::new(".")) {
        Err(e) => e.to_string().contains("beta < 1"),
        Ok(_) => false,
    };
    let setup = stability_setup(ProviderSpec::Heat, spec);
    let library_rejects = l2_weighted_probe(&setup, &[1.5]).is_err();
    passed &= rejected && library_rejects;
    details.push(format!(
        "beta = 1.5 rejected by config validation: {rejected}"
    ));
    check(passed, details.join("; "))
}

/// Heat with t_min^{1/2} = 2h and cones up to radius 6 on X = 16.
fn heat_tent_spec() -> GridSpec {
    GridSpec::new(1, 16.0, 256, 0.25, 36.0, 64)
}

fn boundedness_probe() -> Result<Check> {
    let ps = [1.25, 2.0, 4.0, 8.0];
    let setup = stability_setup(ProviderSpec::Heat, heat_tent_spec());
    let sweep = boundedness_sweep(&setup, &ps, &[-1.0], 2)?;
    let hypothesis = offdiag_probe(&setup, &ps, &[-1.0])?;
    let mut failures = asserted_failures(&sweep);
    failures.extend(asserted_failures(&hypothesis));
    let ok =
        failures.is_empty() && all_finite(&sweep, "ratio") && all_finite(&sweep, "ratio_refined");
    let order = hypothesis
        .case("fit")
        .map(|c| c.measurements["order"])
        .unwrap_or(f64::NAN);
    let counted = hypothesis
        .verdicts
        .iter()
        .filter(|v| v.name.contains("M > n/(m tau)"))
        .count();
    check(
        ok && counted == ps.len(),
        format!(
            "max ratio {:.4}, max drift {:.1e} (tol 1e-1); fitted M = {order:.2} checked for {counted} p{}",
            max_measurement(&sweep, "ratio"),
            max_measurement(&sweep, "drift"),
            if failures.is_empty() { String::new() } else { format!("; FAILED {}", failures.join(", ")) }
        ),
    )
}

fn carleson_probes() -> Result<Check> {
    let mut details = Vec::new();
    let mut passed = true;
    let divform_spec = GridSpec::new(1, 16.0, 64, 0.25, 36.0, 64);
    for (provider, spec) in [
        (ProviderSpec::Heat, heat_tent_spec()),
        (rough_divform()?, divform_spec),
    ] {
        let name = provider.name();
        let setup = stability_setup(provider, spec);
        let report = carleson_probe(&setup, &[-1.0, 0.0], 2)?;
        let hypothesis = offdiag_probe(&setup, &[2.0], &[-1.0])?;
        let carleson = hypothesis.verdicts.iter().find(|v| v.name == "M > n/(2m)");
        let mut failures = asserted_failures(&report);
        failures.extend(asserted_failures(&hypothesis));
        passed &= failures.is_empty()
            && all_finite(&report, "ratio")
            && carleson.is_some_and(|v| v.passed);
        details.push(format!(
            "{name}: max ratio {:.4}, max drift {:.1e}, {}{}",
            max_measurement(&report, "ratio"),
            max_measurement(&report, "drift"),
            carleson
                .map(|v| v.detail.clone())
                .unwrap_or_else(|| "no hypothesis verdict".into()),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" FAILED {}", failures.join(", "))
            }
        ));
    }
    check(passed, details.join("; "))
}

fn offdiag_fits() -> Result<Check> {
    let samples: Vec<OffDiagSample> = (0..12)
        .map(|k| {
            let d = 0.5 + 0.4 * k as f64;
            let t = 0.3;
            OffDiagSample {
                distance: d,
                t,
                ratio: 3.0 * (1.0 + d * d / t).powf(-1.7),
            }
        })
        .collect();
    let synthetic = fit_offdiag_order(2, &samples)?;
    let spec = GridSpec::new(1, 16.0, 256, 0.25, 36.0, 64);
    let poisson = offdiag_order_for(&ProviderSpec::Poisson, &spec)?;
    let heat = offdiag_order_for(&ProviderSpec::Heat, &spec)?;

    let g = grid(1, 16.0, 128, 1.0 / 16.0, 16.0, 129)?;
    let f = bandlimited_field(g.clone(), SEED + 4, 0, 16, &TimeProfile::default())?;
    let provider: Box<dyn SemigroupProvider> = ProviderSpec::Heat.build(*g.spec())?;
    let half = half_interval_check(&f, provider.as_ref())?;

    let synthetic_ok = (synthetic.order - 1.7).abs() <= 1e-6;
    let poisson_ok = (1.5..=2.5).contains(&poisson.order);
    check(
        synthetic_ok && poisson_ok && heat.capped && half <= 5e-3,
        format!(
            "synthetic M = {:.9} (want 1.7 +- 1e-6); Poisson M = {:.3} (want [1.5, 2.5]); heat raw slope {:.2} \
             capped = {}; half-interval discrepancy {half:.1e} (tol 5e-3)",
            synthetic.order, poisson.order, heat.raw_slope, heat.capped
        ),
    )
}

fn determinism() -> Result<Check> {
    let small = GridSpec::new(1, 16.0, 64, 0.25, 16.0, 32);
    let heat = ProbeSetup {
        cutoff: 8,
        ..ProbeSetup::new(small, ProviderSpec::Heat, 11, 6)
    };
    let aperture = ProbeSetup {
        cutoff: 16,
        ..ProbeSetup::new(
            GridSpec::new(1, 16.0, 128, 0.0625, 0.45, 16),
            ProviderSpec::Heat,
            11,
            6,
        )
    };
    let params = ProbeParams {
        p: vec![1.5, 4.0],
        beta: vec![-1.0, 0.0],
        alpha: vec![1.0, 4.0],
        m: None,
    };
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build()?;
    let mut mismatched = Vec::new();
    for name in PROBE_NAMES {
        let setup = if name == "aperture" { &aperture } else { &heat };
        let a = serial.install(|| run_probe(name, setup, &params))?;
        let b = parallel.install(|| run_probe(name, setup, &params))?;
        let c = run_probe(name, setup, &params)?;
        ensure!(a.timestamp.is_some(), "{name} report carries no timestamp");
        let reference = a.deterministic_json()?;
        if reference != b.deterministic_json()? || reference != c.deterministic_json()? {
            mismatched.push(name);
        }
    }
    check(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!(
                "{} probes byte-identical across 1, 4 and default threads",
                PROBE_NAMES.len()
            )
        } else {
            format!("reports differ: {}", mismatched.join(", "))
        },
    )
}

type Criterion = (&'static str, fn() -> Result<Check>, Option<Duration>);

fn main() -> ExitCode {
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria: [Criterion; 11] = [
        (
            "p=2 Fubini identity",
            fubini_identity,
            Some(Duration::from_secs(60)),
        ),
        (
            "indicator norm converges at second order",
            indicator_convergence,
            None,
        ),
        ("aperture monotonicity", aperture_monotonicity, None),
        ("aperture exponent", aperture_exponent, minutes(5)),
        ("homogeneity rescaling", rescaling_identity, None),
        (
            "M_L closed forms and scheme agreement",
            ml_closed_forms,
            None,
        ),
        ("weighted L^2 boundedness for beta < 1", l2_probe, None),
        (
            "tent-space boundedness for heat",
            boundedness_probe,
            minutes(15),
        ),
        ("Carleson boundedness", carleson_probes, None),
        (
            "off-diagonal fits and half-interval identity",
            offdiag_fits,
            None,
        ),
        ("reports are deterministic", determinism, None),
    ];
    let mut failed = 0;
    for (k, (title, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over_budget = budget.is_some_and(|b| elapsed > b);
        let (passed, detail) = match outcome {
            Ok(c) => (c.passed && !over_budget, c.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let budget_note = match budget {
            Some(b) => format!(", budget {:.0} s", b.as_secs_f64()),
            None => String::new(),
        };
        println!(
            "{} {:>2} {title}: {detail} [{:.1} s{budget_note}]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
        failed += usize::from(!passed);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

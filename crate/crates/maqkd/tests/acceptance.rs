//! Acceptance suite: every reference behaviour the simulator must
//! reproduce, one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Criteria 3b-3e and 6b encode reference distances and tolerances that
//! this estimation chain provably cannot reach (the bounds are faithful
//! but the published curves imply several-fold larger effective
//! statistics); they are kept as stated and fail loudly rather than being
//! widened. The analysis lives in the project notes.

use maqkd::loading::Basis;
use maqkd::numerics::{binary_entropy, default_rule, integrate_theta};
use maqkd::optimizer::OptimizationConfig;
use maqkd::oracle;
use maqkd::rates;
use maqkd::sweep::{run_sweep, BlockSpec, RateMode, RunSpec, SweepRow, SystemChoice};
use maqkd::system::{IntensitySet, MemoryKind, MemoryParams, SystemParams};
use std::time::Instant;

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn spec_for(
    memory: MemoryParams,
    label: &str,
    mode: RateMode,
    block: Option<BlockSpec>,
    range: (f64, f64, f64),
) -> RunSpec {
    RunSpec {
        system: SystemChoice::Both,
        mode,
        block,
        memory,
        memory_label: label.into(),
        base: SystemParams::default(),
        l_start_km: range.0,
        l_stop_km: range.1,
        l_step_km: range.2,
        seed: 20_260_808,
        opt: OptimizationConfig {
            max_evals: 350,
            restarts: 5,
            ..Default::default()
        },
        refine: true,
    }
}

// First distance after an advantage region where the memory-assisted rate
// drops back to or below the reference, linearly interpolated.
fn fallback_km(rows: &[SweepRow]) -> Option<f64> {
    let mut inside = false;
    let mut prev: Option<(f64, f64)> = None;
    for row in rows {
        let (ma, mdi) = (row.rate_ma(), row.rate_mdi());
        let diff = ma - mdi;
        if inside {
            if let Some((l0, d0)) = prev {
                if diff <= 0.0 {
                    return Some(l0 + (row.l_km - l0) * d0 / (d0 - diff));
                }
            }
        } else if diff > 0.0 && mdi > 0.0 {
            inside = true;
        }
        prev = Some((row.l_km, diff));
    }
    None
}

fn first_zero_after_positive(rows: &[SweepRow], mdi: bool) -> Option<f64> {
    let rate = |r: &SweepRow| if mdi { r.rate_mdi() } else { r.rate_ma() };
    let mut seen_positive = false;
    for row in rows {
        if rate(row) > 0.0 {
            seen_positive = true;
        } else if seen_positive {
            return Some(row.l_km);
        }
    }
    None
}

#[test]
fn criterion_1_warm_vapour_asymptotic_window() {
    let start = Instant::now();
    let spec = spec_for(
        MemoryKind::WarmVapour.params(),
        "wv",
        RateMode::Asymptotic,
        None,
        (280.0, 480.0, 10.0),
    );
    let out = run_sweep(&spec).unwrap();
    let onset = out.crossover_km;
    let fallback = fallback_km(&out.rows);
    let elapsed = start.elapsed();
    let pass_onset = onset.is_some_and(|l| (320.0..=360.0).contains(&l));
    let pass_fall = fallback.is_some_and(|l| (410.0..=450.0).contains(&l));
    let pass_time = elapsed.as_secs() <= 300;
    let pass = verdict(
        "1 (warm-vapour asymptotic advantage window)",
        pass_onset && pass_fall && pass_time,
        &format!(
            "onset {onset:?} km (window [320, 360]), fallback {fallback:?} km (window [410, 450]), runtime {elapsed:?} (limit 300 s)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_warm_vapour_finite_key_crossover() {
    let spec = spec_for(
        MemoryKind::WarmVapour.params(),
        "wv",
        RateMode::Finite,
        Some(BlockSpec::Rounds(1e10)),
        (60.0, 130.0, 10.0),
    );
    let out = run_sweep(&spec).unwrap();
    let crossover = out.crossover_km;
    let pass = verdict(
        "2 (warm-vapour finite-key crossover, N = 1e10)",
        crossover.is_some_and(|l| l <= 130.0),
        &format!("crossover {crossover:?} km (must exist and be <= 130 km)"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_cold_atom_windows() {
    let mut all_pass = true;

    // 3a: asymptotic advantage onset.
    let spec = spec_for(
        MemoryKind::ColdAtom.params(),
        "ca",
        RateMode::Asymptotic,
        None,
        (260.0, 340.0, 10.0),
    );
    let out = run_sweep(&spec).unwrap();
    let onset = out.crossover_km;
    all_pass &= verdict(
        "3a (cold-atom asymptotic onset)",
        onset.is_some_and(|l| (285.0..=315.0).contains(&l)),
        &format!("onset {onset:?} km (window [285, 315])"),
    );

    // 3b-3d: one-hour collection.
    let spec = spec_for(
        MemoryKind::ColdAtom.params(),
        "ca",
        RateMode::Finite,
        Some(BlockSpec::CollectionTime(3600.0)),
        (180.0, 360.0, 10.0),
    );
    let out = run_sweep(&spec).unwrap();
    let onset = out.crossover_km;
    all_pass &= verdict(
        "3b (cold-atom one-hour crossover)",
        onset.is_some_and(|l| (215.0..=245.0).contains(&l)),
        &format!("crossover {onset:?} km (window [215, 245], reference 230 km)"),
    );
    let mdi_death = first_zero_after_positive(&out.rows, true);
    all_pass &= verdict(
        "3c (cold-atom one-hour reference-system cut-off)",
        mdi_death.is_some_and(|l| (235.0..=265.0).contains(&l)),
        &format!("no-memory rate reaches 0 at {mdi_death:?} km (window [235, 265], reference 250 km)"),
    );
    let ma_alive_at_330 = out
        .rows
        .iter()
        .find(|r| (r.l_km - 330.0).abs() < 1e-9)
        .map(|r| r.rate_ma())
        .unwrap_or(f64::NAN);
    all_pass &= verdict(
        "3d (cold-atom one-hour memory-assisted reach)",
        ma_alive_at_330 > 0.0,
        &format!("memory-assisted rate at 330 km = {ma_alive_at_330:.3e} b/s (must be positive, reference reach 350 km)"),
    );

    // 3e: one-minute collection.
    let spec = spec_for(
        MemoryKind::ColdAtom.params(),
        "ca",
        RateMode::Finite,
        Some(BlockSpec::CollectionTime(60.0)),
        (110.0, 220.0, 10.0),
    );
    let out = run_sweep(&spec).unwrap();
    let onset = out.crossover_km;
    all_pass &= verdict(
        "3e (cold-atom one-minute crossover)",
        onset.is_some_and(|l| (155.0..=185.0).contains(&l)),
        &format!("crossover {onset:?} km (window [155, 185], reference 170 km)"),
    );

    assert!(
        all_pass,
        "one or more cold-atom reference windows missed (see lines above; \
         the finite-key windows are documented as unreachable for this \
         estimation chain in the project notes)"
    );
}

#[test]
fn criterion_4_scaling_law_slopes() {
    // Pre-cutoff region with a decoherence-insensitive memory: fitted
    // log10(rate) slope of the reference system must be twice the
    // memory-assisted one within 10%.
    let spec = spec_for(
        MemoryKind::ColdAtom.params(),
        "ca",
        RateMode::Asymptotic,
        None,
        (100.0, 250.0, 25.0),
    );
    let out = run_sweep(&spec).unwrap();
    let fit = |mdi: bool| -> f64 {
        let pts: Vec<(f64, f64)> = out
            .rows
            .iter()
            .map(|r| {
                (
                    r.l_km,
                    if mdi { r.rate_mdi() } else { r.rate_ma() }.log10(),
                )
            })
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let ratio = fit(true) / fit(false);
    let pass = verdict(
        "4 (rate-scaling slopes)",
        (1.8..=2.2).contains(&ratio),
        &format!(
            "slope ratio reference/memory-assisted = {ratio:.3} (must be 2 within 10%)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_oracle_equivalence() {
    let start = Instant::now();
    let trials = 10_000_000u64;
    let seed = 424_243;
    let mut comparisons = Vec::new();
    comparisons.extend(oracle::loading_comparisons(Basis::Z, trials, seed));
    comparisons.extend(oracle::loading_comparisons(Basis::X, trials, seed ^ 1));
    comparisons.extend(oracle::clock_comparisons(trials, seed ^ 2));
    comparisons.extend(oracle::decoherence_comparisons(trials, seed ^ 3));
    comparisons.extend(oracle::mdi_gain_comparisons(trials, seed ^ 4));
    let mut worst: (f64, String) = (0.0, String::new());
    for c in &comparisons {
        let s = c.sigmas();
        if s > worst.0 {
            worst = (s, c.label.clone());
        }
    }
    let elapsed = start.elapsed();
    let pass = verdict(
        "5 (Monte-Carlo oracle equivalence)",
        worst.0 <= 3.0 && elapsed.as_secs() <= 600,
        &format!(
            "{} comparisons at 1e7 trials; worst deviation {:.2} sigma ({}); runtime {elapsed:?} (limit 600 s)",
            comparisons.len(),
            worst.0,
            worst.1
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_estimator_soundness_and_consistency() {
    let mut all_pass = true;

    // 6a: planted-yield soundness under Poisson sampling.
    let set = IntensitySet::default();
    let coverage =
        oracle::simulate_estimator_coverage(&set, 1e8, 1e-3, 4, 100, 987, true).unwrap();
    all_pass &= verdict(
        "6a (estimator soundness on planted instances)",
        coverage >= 0.99,
        &format!("sound on {:.0}/100 sampled planted instances (need >= 99)", coverage * 100.0),
    );

    // 6b: large-block consistency of the phase-error bound, evaluated at
    // the most favourable legitimate instance found (short distance,
    // estimation-heavy probabilities, default vacuum intensity).
    let sys = SystemParams::default().with_distance(0.0);
    let set = IntensitySet::new(0.5, 0.15, 0.05, 5e-4, 0.1, 0.2, 0.2, 0.5).unwrap();
    let counts = maqkd::counts::mdi_expected_counts(&sys, &set, 1e14).unwrap();
    let result = maqkd::finite_key::key_length(
        &counts,
        &set,
        maqkd::finite_key::DEFAULT_EPSILON,
        maqkd::finite_key::DEFAULT_N_CUT,
        1.0,
    )
    .unwrap();
    let asym = rates::mdi_asymptotic(&sys, set.z);
    let e_ph_u = result.e_ph_u.unwrap_or(f64::NAN);
    let rel = (e_ph_u - asym.e_ph) / asym.e_ph;
    all_pass &= verdict(
        "6b (phase-error bound consistency at N = 1e14)",
        (0.0..=0.05).contains(&rel),
        &format!(
            "e_ph upper bound {e_ph_u:.5} vs asymptotic {:.5} (+{:.1}%; must be within +5%; \
             statistical-window floor documented in the project notes)",
            asym.e_ph,
            rel * 100.0
        ),
    );

    assert!(all_pass);
}

#[test]
fn criterion_7_concentration_bound_self_consistency() {
    let mut worst = 0.0f64;
    for &chi in &[1e2, 1e4, 1e6, 1e9] {
        for &eps in &[1e-3, 0.5e-11] {
            let (dl, du) = maqkd::finite_key::chernoff_deltas(chi, eps).unwrap();
            let target = (eps / 2.0f64).ln();
            let lower = chi * (dl / (1.0 + dl) - dl.ln_1p());
            let upper = chi * (-du / (1.0 - du) - (-du).ln_1p());
            worst = worst
                .max(((lower - target) / target).abs())
                .max(((upper - target) / target).abs());
        }
    }
    let pass = verdict(
        "7 (concentration-bound self-consistency)",
        worst <= 1e-9,
        &format!("worst relative back-substitution residual {worst:.2e} (limit 1e-9)"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_misalignment_equivalence() {
    let rule = default_rule();
    let mut worst = 0.0f64;
    for &e_mis in &[0.001f64, 0.005, 0.01] {
        let theta = (3.0 * e_mis).sqrt();
        let avg = integrate_theta(|t| t.sin().powi(2), theta, rule);
        worst = worst.max(((avg - e_mis) / e_mis).abs());
    }
    let pass = verdict(
        "8 (uniform-misalignment equivalence)",
        worst <= 0.01,
        &format!("worst relative deviation of E[sin^2] from e_mis: {worst:.2e} (limit 1%)"),
    );
    assert!(pass);
}

#[test]
fn optimized_rates_decrease_with_distance() {
    // Guard against optimizer noise: no upward jumps beyond 1% along the
    // asymptotic curves.
    let spec = spec_for(
        MemoryKind::WarmVapour.params(),
        "wv",
        RateMode::Asymptotic,
        None,
        (100.0, 200.0, 20.0),
    );
    let out = run_sweep(&spec).unwrap();
    for pair in out.rows.windows(2) {
        assert!(
            pair[1].rate_ma() <= pair[0].rate_ma() * 1.01,
            "memory-assisted rate jumped up at {} km",
            pair[1].l_km
        );
        assert!(
            pair[1].rate_mdi() <= pair[0].rate_mdi() * 1.01,
            "reference rate jumped up at {} km",
            pair[1].l_km
        );
    }
    let h = binary_entropy(0.5).unwrap();
    assert_eq!(h, 1.0);
}

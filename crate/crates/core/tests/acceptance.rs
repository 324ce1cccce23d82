//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdtomo_core::config::{RunConfig, StateSpec};
use rdtomo_core::forward::{
    compare_with_analytic, max_abs_z, monte_carlo_oracle, synthesize_run, Channel, StageKind,
};
use rdtomo_core::par;
use rdtomo_core::resonator::{single_beam_coeffs, CavityParams, FAR_DETUNING};
use rdtomo_core::state::{
    build_sa_covariance, is_physical, make_state, to_sideband_basis, Basis, CovarianceMatrix,
    SixteenParams, StateRecipe, PARAM_NAMES,
};
use rdtomo_core::tomography::{calibrate_dc, fit_run, FitResult};
use rdtomo_core::witness::{duan_value, ppt_report, DuanConvention};

const ROUND_TRIP_REL: f64 = 1e-6;
const ROUND_TRIP_ZERO: f64 = 1e-8;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const COVERAGE_RUNS: usize = 100;
const COVERAGE_MIN: usize = 90;
const COVERAGE_BUDGET: Duration = Duration::from_secs(60);
const DUAN_TARGET: f64 = 1.56;
const DUAN_NOISY_TOL: f64 = 0.05;
const DUAN_NOISELESS_TOL: f64 = 1e-6;
const PPT_MARGIN: f64 = 0.3;
const PPT_SEPARABLE_TOL: f64 = 1e-6;
const ORACLE_SAMPLES: usize = 100_000;
const ORACLE_POINTS: usize = 21;
const ORACLE_MAX_Z: f64 = 4.0;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const COEFF_SUM_TOL: f64 = 1e-12;
const PHYSICAL_TOL: f64 = 1e-9;
const DC_TOL: f64 = 0.01;

fn random_recipe(rng: &mut ChaCha8Rng) -> StateRecipe {
    StateRecipe {
        r_inner: rng.random_range(0.05..1.0),
        r_outer: rng.random_range(0.05..1.0),
        efficiency_a: rng.random_range(0.6..1.0),
        efficiency_b: rng.random_range(0.6..1.0),
        phase_a: rng.random_range(-PI..PI),
        phase_b: rng.random_range(-PI..PI),
        local_r_a: rng.random_range(0.0..0.3),
        local_r_b: rng.random_range(0.0..0.3),
        local_angle_a: rng.random_range(0.0..2.0 * PI),
        local_angle_b: rng.random_range(0.0..2.0 * PI),
    }
}

fn config_for(params: SixteenParams, relative_noise: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.state = StateSpec::Params(params);
    cfg.relative_noise = relative_noise;
    cfg
}

fn fit(params: &SixteenParams, relative_noise: f64, seed: u64) -> FitResult {
    let cfg = config_for(*params, relative_noise);
    let ds = synthesize_run(params, &cfg, seed).expect("synthesis");
    fit_run(&ds.without_ground_truth()).expect("fit")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth = make_state(&random_recipe(&mut rng)).unwrap();
    let got = fit(&truth, 0.0, 0).params;
    let (t, g) = (truth.to_array(), got.to_array());
    let mut worst = (0.0_f64, "");
    let mut ok = true;
    for k in 0..16 {
        let err = (g[k] - t[k]).abs();
        let (score, bad) = if t[k].abs() < 1e-12 {
            (err / ROUND_TRIP_ZERO, err > ROUND_TRIP_ZERO)
        } else {
            let rel = err / t[k].abs();
            (rel / ROUND_TRIP_REL, rel > ROUND_TRIP_REL)
        };
        ok &= !bad;
        if score > worst.0 {
            worst = (score, PARAM_NAMES[k]);
        }
    }
    let elapsed = start.elapsed();
    check(
        ok && elapsed < ROUND_TRIP_BUDGET,
        format!("worst {} at {:.3} of tolerance, {:.2?}", worst.1, worst.0, elapsed),
    )
}

fn coverage() -> Outcome {
    let start = Instant::now();
    let truth = RunConfig::default().ground_truth().unwrap();
    let t = truth.to_array();
    let hits: Vec<[bool; 16]> = par::map_range(COVERAGE_RUNS, |seed| {
        let f = fit(&truth, 0.01, 1000 + seed as u64);
        let g = f.params.to_array();
        std::array::from_fn(|k| (g[k] - t[k]).abs() <= 3.0 * f.param_sigmas[k])
    });
    let counts: Vec<usize> = (0..16).map(|k| hits.iter().filter(|h| h[k]).count()).collect();
    let (kmin, &min) = counts.iter().enumerate().min_by_key(|(_, c)| **c).unwrap();
    let elapsed = start.elapsed();
    check(
        min >= COVERAGE_MIN && elapsed < COVERAGE_BUDGET,
        format!("lowest coverage {} {min}/{COVERAGE_RUNS}, {:.2?}", PARAM_NAMES[kmin], elapsed),
    )
}

fn duan_target() -> Outcome {
    let recipe = StateRecipe::for_duan_target(0.71, 0.85, 0.91).unwrap();
    let truth = make_state(&recipe).unwrap();
    let exact = duan_value(&truth, DuanConvention::Symmetric).sum;
    let clean = duan_value(&fit(&truth, 0.0, 0).params, DuanConvention::Symmetric).sum;
    let noisy = duan_value(&fit(&truth, 0.01, 5).params, DuanConvention::Symmetric).sum;
    check(
        (exact - DUAN_TARGET).abs() <= DUAN_NOISELESS_TOL
            && (clean - DUAN_TARGET).abs() <= DUAN_NOISELESS_TOL
            && (noisy - DUAN_TARGET).abs() <= DUAN_NOISY_TOL,
        format!("truth {exact:.9}, noiseless fit {clean:.9}, 1% noise fit {noisy:.4}"),
    )
}

fn bipartitions() -> Outcome {
    let p = make_state(&StateRecipe::dual_tms(0.5, 1.0)).unwrap();
    let sb = to_sideband_basis(&build_sa_covariance(&p)).unwrap();
    let ppt = ppt_report(&sb).unwrap();
    let find = |label: &str| ppt.entries.iter().find(|e| e.bipartition == label).unwrap().min_eigenvalue;
    let ab = find("a-,a+|b-,b+");
    let mm = find("a-,b-|a+,b+");
    let sep = find("a-,b+|a+,b-");
    check(
        ab < 1.0 - PPT_MARGIN && mm < 1.0 - PPT_MARGIN && (sep - 1.0).abs() <= PPT_SEPARABLE_TOL,
        format!("(a|b) {ab:.4}, (a-,b-|a+,b+) {mm:.4}, (a-,b+|a+,b-) {sep:.9}"),
    )
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut cfg = RunConfig::default();
    cfg.oracle.grid_points = ORACLE_POINTS;
    let stage = cfg.oracle_stage().unwrap();
    let cav = cfg.cavities();
    let omega = cfg.analysis.freq_bandwidths;
    let mut worst = 0.0_f64;
    for i in 0..5 {
        let p = make_state(&random_recipe(&mut rng)).unwrap();
        let rep = monte_carlo_oracle(&p, &stage, [&cav[0], &cav[1]], omega, ORACLE_SAMPLES, 100 + i).unwrap();
        let cmp = compare_with_analytic(&p, &stage, [&cav[0], &cav[1]], omega, &rep).unwrap();
        worst = worst.max(max_abs_z(&cmp));
    }
    let elapsed = start.elapsed();
    check(
        worst < ORACLE_MAX_Z && elapsed < ORACLE_BUDGET,
        format!("max |z| {worst:.3} over 5 states, {:.2?}", elapsed),
    )
}

fn coefficients() -> Outcome {
    let mut sum_err = 0.0_f64;
    let mut beta_min = f64::INFINITY;
    let mut alpha_far = f64::INFINITY;
    for d in [0.0, 0.2, 0.38, 0.47, 0.8, 0.99] {
        let cav = CavityParams::new("AC", d, 3.2e6).unwrap();
        for omega in [0.3, 1.0, 2.1875, 3.125, 5.0, 10.0] {
            for i in 0..=2000 {
                let delta = -60.0 + 0.06 * i as f64;
                let Ok(c) = single_beam_coeffs(delta, omega, &cav) else { continue };
                sum_err = sum_err.max((c.c_alpha + c.c_beta + c.c_v - 1.0).abs());
            }
        }
    }
    for d in [0.38, 0.47] {
        let cav = CavityParams::new("AC", d, 3.2e6).unwrap();
        for omega in [2.19, 2.5, 3.125, 5.0, 10.0, 30.0] {
            for delta in [-0.5, 0.5] {
                beta_min = beta_min.min(single_beam_coeffs(delta, omega, &cav).unwrap().c_beta);
            }
            for delta in [-FAR_DETUNING, FAR_DETUNING] {
                alpha_far = alpha_far.min(single_beam_coeffs(delta, omega, &cav).unwrap().c_alpha);
            }
        }
    }
    check(
        sum_err <= COEFF_SUM_TOL && beta_min > 0.9 && alpha_far > 0.999,
        format!("max |sum - 1| {sum_err:.1e}, min c_beta(±0.5) {beta_min:.4}, min c_alpha(|Δ|=50) {alpha_far:.6}"),
    )
}

fn physicality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = f64::INFINITY;
    let mut all = true;
    for _ in 0..500 {
        let p = make_state(&random_recipe(&mut rng)).unwrap();
        let ph = is_physical(&build_sa_covariance(&p), PHYSICAL_TOL);
        all &= ph.physical;
        worst = worst.min(ph.min_symplectic);
    }
    for recipe in [
        StateRecipe::default(),
        StateRecipe::dual_tms(1.5, 1.0),
        StateRecipe::for_duan_target(0.71, 0.85, 0.91).unwrap(),
    ] {
        all &= is_physical(&build_sa_covariance(&make_state(&recipe).unwrap()), PHYSICAL_TOL).physical;
    }
    let half = CovarianceMatrix::identity(Basis::SymAntisym).scaled(0.5);
    let rejected = !is_physical(&half, PHYSICAL_TOL).physical;
    check(
        all && rejected,
        format!("500 random recipes, min symplectic {worst:.6}; 0.5·I rejected {rejected}"),
    )
}

fn dc_calibration() -> Outcome {
    let truth = RunConfig::default().ground_truth().unwrap();
    let cfg = config_for(truth, 0.005);
    let mut worst = [0.0_f64; 2];
    for seed in 0..20 {
        let ds = synthesize_run(&truth, &cfg, seed).unwrap();
        for (k, (ch, d)) in [(Channel::Dc1, 0.38), (Channel::Dc2, 0.47)].into_iter().enumerate() {
            let c = calibrate_dc(ds.trace(StageKind::BothScanned, ch).unwrap()).unwrap();
            worst[k] = worst[k].max((c.d - d).abs());
        }
    }
    check(
        worst[0] <= DC_TOL && worst[1] <= DC_TOL,
        format!("20 seeds, max |d - 0.38| {:.4}, max |d - 0.47| {:.4}", worst[0], worst[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("noiseless round trip", round_trip),
        ("noisy coverage", coverage),
        ("Duan target 1.56", duan_target),
        ("bipartition pattern", bipartitions),
        ("oracle equivalence", oracle),
        ("coefficient limits", coefficients),
        ("physicality gate", physicality),
        ("DC calibration", dc_calibration),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

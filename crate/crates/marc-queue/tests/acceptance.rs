//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the report.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use marc_queue::chain::{build_saturated_chain, build_sss_chain, LabeledCtmc, DEFAULT_STATE_CAP};
use marc_queue::closed_form::{closed_form_k2, K2Params};
use marc_queue::marc::{analyze, estimate_delta_mc, generator_residual, predict, MarcSolution};
use marc_queue::sim::{simulate_coupled, simulate_msj, SimConfig, SimResult};
use marc_queue::workload::{exponential_class, running_example, WorkloadSpec};

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn by_label(sol: &MarcSolution, vec: &[f64], label: &str) -> f64 {
    vec[sol
        .states
        .iter()
        .position(|l| l == label)
        .unwrap_or_else(|| panic!("no state {label}"))]
}

fn matched_setting_k4() -> WorkloadSpec {
    WorkloadSpec::new(
        4,
        vec![
            exponential_class(1, 0.42, 0.25).unwrap(),
            exponential_class(4, 0.58, 1.0).unwrap(),
        ],
    )
    .unwrap()
}

fn matched_setting_k10() -> WorkloadSpec {
    WorkloadSpec::new(
        10,
        vec![
            exponential_class(1, 0.10, 0.1).unwrap(),
            exponential_class(10, 0.90, 1.0).unwrap(),
        ],
    )
    .unwrap()
}

fn random_small_spec(rng: &mut impl Rng) -> WorkloadSpec {
    loop {
        let k = rng.gen_range(1..=3);
        let n_classes = rng.gen_range(1..=3);
        let weights: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let classes: Vec<_> = weights
            .iter()
            .map(|w| {
                exponential_class(rng.gen_range(1..=k), w / total, rng.gen_range(0.3..3.0)).unwrap()
            })
            .collect();
        if let Ok(spec) = WorkloadSpec::new(k, classes) {
            return spec;
        }
    }
}

fn little_gap(res: &SimResult, lambda: f64) -> f64 {
    (res.mean_n.mean - lambda * res.mean_t.mean).abs() / res.mean_n.mean
}

fn check_drift(chain: &LabeledCtmc, sol: &MarcSolution, worst: &mut f64) {
    *worst = worst.max(generator_residual(chain, sol));
}

#[test]
fn criterion_01_running_example_exactness() {
    let t0 = Instant::now();
    let chain = build_sss_chain(&running_example(), DEFAULT_STATE_CAP).unwrap();
    let sol = analyze(&chain).unwrap();
    let tol = 1e-9;
    let checks = [
        (sol.lambda_star, 0.9, "lambda*"),
        (by_label(&sol, &sol.stationary, "[1,1]"), 0.2, "Y[1,1]"),
        (by_label(&sol, &sol.stationary, "[1,2*]"), 0.2, "Y[1,2]"),
        (by_label(&sol, &sol.stationary, "[2]"), 0.6, "Y[2]"),
        (by_label(&sol, &sol.departure, "[1,1]"), 4.0 / 9.0, "Yd[1,1]"),
        (by_label(&sol, &sol.departure, "[1,2*]"), 2.0 / 9.0, "Yd[1,2]"),
        (by_label(&sol, &sol.departure, "[2]"), 1.0 / 3.0, "Yd[2]"),
        (by_label(&sol, &sol.delta, "[1,1]"), 1.38, "delta[1,1]"),
        (by_label(&sol, &sol.delta, "[1,2*]"), -0.27, "delta[1,2]"),
        (by_label(&sol, &sol.delta, "[2]"), -0.37, "delta[2]"),
        (sol.delta_yd, 0.43, "delta(Y_d)"),
    ];
    let worst = checks
        .iter()
        .map(|(got, want, _)| (got - want).abs())
        .fold(0.0, f64::max);
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        1,
        worst < tol && elapsed < 1.0,
        &format!("max deviation {worst:.2e} (tol 1e-9), {elapsed:.3}s"),
    );
}

#[test]
fn criterion_02_matched_stability_settings() {
    let t0 = Instant::now();
    let sol4 = analyze(&build_sss_chain(&matched_setting_k4(), DEFAULT_STATE_CAP).unwrap()).unwrap();
    let sol10 =
        analyze(&build_sss_chain(&matched_setting_k10(), DEFAULT_STATE_CAP).unwrap()).unwrap();
    let ok = (sol4.lambda_star - 0.5413).abs() < 5e-4
        && (sol4.delta_yd - 0.3271).abs() < 1e-3
        && (sol10.lambda_star - 0.5411).abs() < 5e-4
        && (sol10.delta_yd - 1.850).abs() < 2e-3;
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        2,
        ok && elapsed < 10.0,
        &format!(
            "k=4: lambda* {:.4}, delta(Y_d) {:.4}; k=10: lambda* {:.4}, delta(Y_d) {:.4}; {elapsed:.2}s",
            sol4.lambda_star, sol4.delta_yd, sol10.lambda_star, sol10.delta_yd
        ),
    );
}

#[test]
fn criterion_03_sss_sat_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let spec = random_small_spec(&mut rng);
        let sat = analyze(&build_saturated_chain(&spec, DEFAULT_STATE_CAP).unwrap()).unwrap();
        let sss = analyze(&build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap()).unwrap();
        worst = worst
            .max((sat.lambda_star - sss.lambda_star).abs())
            .max((sat.delta_yd - sss.delta_yd).abs());
    }
    let big = WorkloadSpec::new(
        30,
        vec![
            exponential_class(3, 0.5, 1.0).unwrap(),
            exponential_class(10, 0.5, 1.0).unwrap(),
        ],
    )
    .unwrap();
    let sss30 = build_sss_chain(&big, DEFAULT_STATE_CAP).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        3,
        worst < 1e-9 && sss30.len() == 13 && elapsed < 30.0,
        &format!(
            "max Sat/SSS gap {worst:.2e} over 20 random specs; k=30 needs-{{3,10}} SSS has {} states; {elapsed:.2}s",
            sss30.len()
        ),
    );
}

#[test]
fn criterion_04_closed_form_oracle_equivalence() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let params = K2Params {
            p1: rng.gen_range(0.02..0.98),
            mu1: rng.gen_range(0.1..5.0),
            mu2: rng.gen_range(0.1..5.0),
        };
        let cf = closed_form_k2(params).unwrap();
        let spec = WorkloadSpec::new(
            2,
            vec![
                exponential_class(1, params.p1, params.mu1).unwrap(),
                exponential_class(2, 1.0 - params.p1, params.mu2).unwrap(),
            ],
        )
        .unwrap();
        let num = analyze(&build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap()).unwrap();
        worst = worst
            .max((cf.lambda_star - num.lambda_star).abs())
            .max((cf.delta_yd - num.delta_yd).abs());
        for label in ["[1,1]", "[1,2*]", "[2]"] {
            worst = worst
                .max((by_label(&cf, &cf.stationary, label) - by_label(&num, &num.stationary, label)).abs())
                .max((by_label(&cf, &cf.departure, label) - by_label(&num, &num.departure, label)).abs())
                .max((by_label(&cf, &cf.delta, label) - by_label(&num, &num.delta, label)).abs());
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        4,
        worst < 1e-9 && elapsed < 5.0,
        &format!("max analytic/numeric gap {worst:.2e} over 100 draws; {elapsed:.2}s"),
    );
}

#[test]
fn criterion_05_drift_identity_on_all_chains() {
    let mut worst = 0.0f64;
    // Chains of criteria 1-2.
    for spec in [running_example(), matched_setting_k4(), matched_setting_k10()] {
        let chain = build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap();
        check_drift(&chain, &analyze(&chain).unwrap(), &mut worst);
    }
    // Chains of criterion 3 (same seed).
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let spec = random_small_spec(&mut rng);
        for chain in [
            build_saturated_chain(&spec, DEFAULT_STATE_CAP).unwrap(),
            build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap(),
        ] {
            check_drift(&chain, &analyze(&chain).unwrap(), &mut worst);
        }
    }
    // Chains of criterion 4 (same seed).
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for _ in 0..100 {
        let p1 = rng.gen_range(0.02..0.98);
        let mu1 = rng.gen_range(0.1..5.0);
        let mu2 = rng.gen_range(0.1..5.0);
        let spec = WorkloadSpec::new(
            2,
            vec![
                exponential_class(1, p1, mu1).unwrap(),
                exponential_class(2, 1.0 - p1, mu2).unwrap(),
            ],
        )
        .unwrap();
        let chain = build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap();
        check_drift(&chain, &analyze(&chain).unwrap(), &mut worst);
    }
    report(
        5,
        worst < 1e-9,
        &format!("max generator residual {worst:.2e} over all solved chains"),
    );
}

#[test]
fn criterion_06_monte_carlo_delta_oracle() {
    let t0 = Instant::now();
    let chain = build_sss_chain(&running_example(), DEFAULT_STATE_CAP).unwrap();
    let sol = analyze(&chain).unwrap();
    let mut all_ok = true;
    let mut detail = String::new();
    for (y, &d) in sol.delta.iter().enumerate() {
        let est = estimate_delta_mc(&chain, y, sol.lambda_star, 200.0, 100_000, 424242);
        let ok = est.contains_99(d);
        all_ok &= ok;
        detail.push_str(&format!(
            "{}: {:.3}+-{:.3} vs {:.2}; ",
            sol.states[y], est.mean, est.half_width_99, d
        ));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        6,
        all_ok && elapsed < 120.0,
        &format!("{detail}{elapsed:.1}s"),
    );
}

#[test]
fn criterion_07_simulation_convergence() {
    let t0 = Instant::now();
    let spec = running_example();
    let chain = build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap();
    let sol = analyze(&chain).unwrap();
    // The dominant-term gap |sim - pred| is O(1) in load, but the estimator
    // noise on mean T scales like 1/(1 - load), so high loads need many more
    // replications before the gap measurement is signal rather than noise.
    let loads = [(0.5, 10u32), (0.8, 20), (0.9, 40), (0.95, 100), (0.99, 600)];
    let mut rel_errors = Vec::new();
    let mut gaps = Vec::new();
    for &(load, reps) in &loads {
        let lambda = load * sol.lambda_star;
        let mut cfg = SimConfig::new(lambda, 8);
        cfg.n_arrivals = 1_000_000;
        cfg.replications = reps;
        let res = simulate_msj(&spec, &cfg).unwrap();
        assert!(
            little_gap(&res, lambda) < 0.01,
            "Little's law violated at load {load}"
        );
        let (pred_t, _) = predict(sol.lambda_star, sol.delta_yd, lambda).unwrap();
        gaps.push((res.mean_t.mean - pred_t).abs());
        rel_errors.push((res.mean_t.mean - pred_t).abs() / res.mean_t.mean);
    }
    let gap_max = gaps.iter().cloned().fold(f64::MIN, f64::max);
    let gap_min = gaps.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = rel_errors[4] < rel_errors[0] && gap_max / gap_min < 5.0 && elapsed < 300.0;
    report(
        7,
        ok,
        &format!(
            "rel_error {:.4} @0.5 -> {:.4} @0.99; gap ratio {:.2} (< 5); {elapsed:.1}s",
            rel_errors[0],
            rel_errors[4],
            gap_max / gap_min
        ),
    );
}

#[test]
fn criterion_08_mm1_reduction() {
    let t0 = Instant::now();
    let mu = 1.0;
    let spec = WorkloadSpec::new(2, vec![exponential_class(2, 1.0, mu).unwrap()]).unwrap();
    let chain = build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap();
    let sol = analyze(&chain).unwrap();
    let mut all_ok = true;
    let mut detail = String::new();
    for load in [0.3, 0.6, 0.9] {
        let lambda = load * mu;
        let expect = 1.0 / (mu - lambda);
        let (pred_t, _) = predict(sol.lambda_star, sol.delta_yd, lambda).unwrap();
        let exact = (pred_t - expect).abs() < 1e-12;
        let mut cfg = SimConfig::new(lambda, 99);
        cfg.n_arrivals = 1_000_000;
        cfg.replications = 10;
        let res = simulate_msj(&spec, &cfg).unwrap();
        assert!(little_gap(&res, lambda) < 0.01);
        let ok = exact && res.mean_t.contains(expect);
        all_ok &= ok;
        detail.push_str(&format!(
            "load {load}: sim {:.4}+-{:.4} vs {:.4}; ",
            res.mean_t.mean, res.mean_t.ci, expect
        ));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(8, all_ok && elapsed < 120.0, &format!("{detail}{elapsed:.1}s"));
}

#[test]
fn criterion_09_coupling_decay() {
    let t0 = Instant::now();
    let spec = running_example();
    let chain = build_sss_chain(&spec, DEFAULT_STATE_CAP).unwrap();
    let sol = analyze(&chain).unwrap();
    let loads = [0.8, 0.9, 0.95, 0.99];
    let mut mismatch = Vec::new();
    let mut p_empty = Vec::new();
    for &load in &loads {
        let lambda = load * sol.lambda_star;
        let mut cfg = SimConfig::new(lambda, 5);
        cfg.n_arrivals = 1_000_000;
        cfg.replications = 5;
        let res = simulate_coupled(&spec, &cfg).unwrap();
        mismatch.push(res.mismatch_fraction.unwrap().mean);
        p_empty.push(res.p_queue_empty.mean);
    }
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let ratio_band = |v: &[f64]| {
        let norm: Vec<f64> = v
            .iter()
            .zip(&loads)
            .map(|(x, &load)| x / (1.0 - load))
            .collect();
        let max = norm.iter().cloned().fold(f64::MIN, f64::max);
        let min = norm.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    };
    let mm_band = ratio_band(&mismatch);
    let pe_band = ratio_band(&p_empty);
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = decreasing(&mismatch)
        && decreasing(&p_empty)
        && mm_band < 3.0
        && pe_band < 3.0
        && elapsed < 300.0;
    report(
        9,
        ok,
        &format!(
            "mismatch {mismatch:.3?} (band {mm_band:.2}), P(Q=0) {p_empty:.3?} (band {pe_band:.2}); {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_10_littles_law() {
    let spec = running_example();
    let mut worst = 0.0f64;
    for load in [0.5, 0.9] {
        let lambda = load * 0.9;
        let mut cfg = SimConfig::new(lambda, 3);
        cfg.n_arrivals = 1_000_000;
        cfg.replications = 5;
        let res = simulate_msj(&spec, &cfg).unwrap();
        worst = worst.max(little_gap(&res, lambda));
    }
    report(
        10,
        worst < 0.01,
        &format!("max |E[N] - lambda E[T]| / E[N] = {worst:.4} (< 0.01)"),
    );
}

//! MARC solver: stationary distribution, throughput threshold, departure
//! distribution, relative completions, and the dominant-term response time
//! prediction for any completion-labeled CTMC.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::LabeledCtmc;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Above this state count the stationary solve switches from a dense LU to
/// power iteration on the uniformized transition matrix.
pub const DENSE_STATE_LIMIT: usize = 2_000;
/// Uniformization constant multiplier over the max exit rate.
const UNIFORMIZATION_FACTOR: f64 = 1.1;
/// L1 convergence tolerance for power iteration.
const POWER_ITER_TOL: f64 = 1e-12;
/// Solves with an estimated condition number above this are rejected.
const CONDITION_LIMIT: f64 = 1e12;

const BALANCE_RESIDUAL_TOL: f64 = 1e-10;
const DELTA_RESIDUAL_TOL: f64 = 1e-9;

/// Solved MARC quantities for one labeled chain.
#[derive(Debug, Clone, Serialize)]
pub struct MarcSolution {
    /// State labels in enumeration order.
    pub states: Vec<String>,
    /// Time-average stationary distribution Y.
    pub stationary: Vec<f64>,
    /// Throughput of the service process, equal to the stability threshold.
    pub lambda_star: f64,
    /// Departure-average distribution Y_d.
    pub departure: Vec<f64>,
    /// Relative completions per state, normalized so sum_y Y(y) delta(y) = 0.
    pub delta: Vec<f64>,
    /// Scalar delta(Y_d, Y) = sum_y Y_d(y) delta(y).
    pub delta_yd: f64,
}

/// Solve all MARC quantities for a chain.
pub fn analyze(chain: &LabeledCtmc) -> Result<MarcSolution> {
    let pi = stationary(chain)?;
    let lambda_star = throughput(chain, &pi);
    let departure = departure_dist(chain, &pi, lambda_star)?;
    let delta = relative_completions(chain, &pi, lambda_star)?;
    let delta_yd = departure.iter().zip(&delta).map(|(d, x)| d * x).sum();
    Ok(MarcSolution {
        states: chain.labels().to_vec(),
        stationary: pi,
        lambda_star,
        departure,
        delta,
        delta_yd,
    })
}

/// Stationary distribution of the chain's CTMC.
///
/// Dense path: replace one balance equation with the normalization row and
/// LU-solve. Large chains instead use power iteration on the uniformized
/// transition matrix.
pub fn stationary(chain: &LabeledCtmc) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut pi = if n <= DENSE_STATE_LIMIT {
        stationary_dense(chain)?
    } else {
        stationary_power(chain)?
    };
    for p in &mut pi {
        *p = p.max(0.0);
    }
    let sum: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= sum;
    }
    let residual = balance_residual(chain, &pi);
    let scale = (0..n).map(|y| chain.total_rate(y)).fold(0.0, f64::max);
    if residual > BALANCE_RESIDUAL_TOL * scale.max(1.0) {
        return Err(Error::Numeric(format!(
            "stationary solve residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

fn stationary_dense(chain: &LabeledCtmc) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for y in 0..n {
        a[(y, y)] += chain.total_rate(y);
        for t in chain.transitions(y) {
            a[(t.target, y)] -= t.rate;
        }
    }
    for y in 0..n {
        a[(n - 1, y)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    solve_checked(a, b).map(|x| x.iter().copied().collect())
}

fn stationary_power(chain: &LabeledCtmc) -> Result<Vec<f64>> {
    let n = chain.len();
    let max_rate = (0..n).map(|y| chain.total_rate(y)).fold(0.0, f64::max);
    let uniform = UNIFORMIZATION_FACTOR * max_rate;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let max_iters = 100_000_000usize / n.max(1) + 1_000;
    for _ in 0..max_iters {
        for x in &mut next {
            *x = 0.0;
        }
        for y in 0..n {
            let stay = 1.0 - chain.total_rate(y) / uniform;
            next[y] += pi[y] * stay;
            for t in chain.transitions(y) {
                next[t.target] += pi[y] * t.rate / uniform;
            }
        }
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < POWER_ITER_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Numeric(
        "power iteration did not converge to tolerance".into(),
    ))
}

fn balance_residual(chain: &LabeledCtmc, pi: &[f64]) -> f64 {
    let n = chain.len();
    let mut inflow = vec![0.0; n];
    for y in 0..n {
        for t in chain.transitions(y) {
            inflow[t.target] += pi[y] * t.rate;
        }
    }
    (0..n)
        .map(|y| (pi[y] * chain.total_rate(y) - inflow[y]).abs())
        .fold(0.0, f64::max)
}

/// LU solve with iterative refinement and a 1-norm condition estimate;
/// rejects ill-conditioned systems instead of returning garbage.
fn solve_checked(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let norm_a = one_norm(&a);
    let at = a.transpose();
    let a_orig = a.clone();
    let lu = a.lu();
    let lu_t = at.lu();
    let n = b.len();
    let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        lu.solve(rhs)
            .ok_or_else(|| Error::Numeric("singular linear system".into()))
    };
    let solve_t = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        lu_t.solve(rhs)
            .ok_or_else(|| Error::Numeric("singular linear system".into()))
    };
    // Hager's estimator for ||A^-1||_1.
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        est = y.iter().map(|v| v.abs()).sum();
        let xi = DVector::from_iterator(n, y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }));
        let z = solve_t(&xi)?;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, v.abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if zmax <= z.dot(&x).abs() {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    let cond = norm_a * est;
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::Numeric(format!(
            "ill-conditioned linear system (condition estimate {cond:.3e})"
        )));
    }
    let mut x = solve(&b)?;
    // A few steps of iterative refinement recover the digits a single LU
    // pass loses on poorly scaled chains.
    for _ in 0..3 {
        let r = &b - &a_orig * &x;
        if r.iter().all(|v| v.abs() < 1e-14 * norm_a) {
            break;
        }
        x += solve(&r)?;
    }
    Ok(x)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum())
        .fold(0.0, f64::max)
}

/// Throughput lambda* = sum_y pi(y) mu_{y,.,1}.
pub fn throughput(chain: &LabeledCtmc, pi: &[f64]) -> f64 {
    (0..chain.len())
        .map(|y| pi[y] * chain.completion_rate(y))
        .sum()
}

/// Departure-average distribution: P(Y_d = y') = (1/lambda*) sum_y pi(y) mu_{y,y',1}.
pub fn departure_dist(chain: &LabeledCtmc, pi: &[f64], lambda_star: f64) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut yd = vec![0.0; n];
    for y in 0..n {
        for t in chain.transitions(y) {
            if t.completions == 1 {
                yd[t.target] += pi[y] * t.rate / lambda_star;
            }
        }
    }
    let sum: f64 = yd.iter().sum();
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::Numeric(format!(
            "departure distribution sums to {sum}, expected 1"
        )));
    }
    Ok(yd)
}

/// Relative completions from the forward recurrence
/// delta(y) = (mu_{y,.,1} - lambda*)/mu_{y,.,.} + sum_{y'} (mu_{y,y',.}/mu_{y,.,.}) delta(y'),
/// anchored at delta(state 0) = 0 and then shifted so sum_y pi(y) delta(y) = 0.
pub fn relative_completions(chain: &LabeledCtmc, pi: &[f64], lambda_star: f64) -> Result<Vec<f64>> {
    let n = chain.len();
    // Anchor at the most probable state: dropping that state's (redundant)
    // equation keeps the float inconsistency of lambda* from being amplified
    // by 1/pi(anchor) in the residual.
    let anchor = pi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut delta = if n == 1 {
        vec![0.0]
    } else if n <= DENSE_STATE_LIMIT {
        delta_dense(chain, lambda_star, anchor)?
    } else {
        delta_iterative(chain, lambda_star, anchor)?
    };
    let shift: f64 = pi.iter().zip(&delta).map(|(p, d)| p * d).sum();
    for d in &mut delta {
        *d -= shift;
    }
    let residual = delta_residual(chain, &delta, lambda_star);
    if residual > DELTA_RESIDUAL_TOL {
        return Err(Error::Numeric(format!(
            "relative-completions residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(delta)
}

fn delta_dense(chain: &LabeledCtmc, lambda_star: f64, anchor: usize) -> Result<Vec<f64>> {
    // Unknowns delta(y) for y != anchor with delta(anchor) = 0; the dropped
    // equation for the anchor state is redundant and is verified by the
    // residual check.
    let n = chain.len();
    let m = n - 1;
    let col = |y: usize| if y < anchor { y } else { y - 1 };
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for y in (0..n).filter(|&y| y != anchor) {
        let row = col(y);
        a[(row, row)] += chain.total_rate(y);
        for t in chain.transitions(y) {
            if t.target != anchor {
                a[(row, col(t.target))] -= t.rate;
            }
        }
        b[row] = chain.completion_rate(y) - lambda_star;
    }
    let x = solve_checked(a, b)?;
    let mut delta = Vec::with_capacity(n);
    for y in 0..n {
        if y == anchor {
            delta.push(0.0);
        } else {
            delta.push(x[col(y)]);
        }
    }
    Ok(delta)
}

fn delta_iterative(chain: &LabeledCtmc, lambda_star: f64, anchor: usize) -> Result<Vec<f64>> {
    // Gauss-Seidel sweeps with delta(anchor) pinned at zero; the anchored
    // system's iteration matrix has spectral radius < 1 for an irreducible
    // chain.
    let n = chain.len();
    let mut delta = vec![0.0; n];
    let max_sweeps = 1_000_000;
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for y in (0..n).filter(|&y| y != anchor) {
            let total = chain.total_rate(y);
            let mut acc = chain.completion_rate(y) - lambda_star;
            let mut self_rate = 0.0;
            for t in chain.transitions(y) {
                if t.target == y {
                    self_rate += t.rate;
                } else {
                    acc += t.rate * delta[t.target];
                }
            }
            let new = acc / (total - self_rate);
            max_change = max_change.max((new - delta[y]).abs());
            delta[y] = new;
        }
        if max_change < 1e-13 {
            return Ok(delta);
        }
    }
    Err(Error::Numeric(
        "relative-completions iteration did not converge".into(),
    ))
}

fn delta_residual(chain: &LabeledCtmc, delta: &[f64], lambda_star: f64) -> f64 {
    (0..chain.len())
        .map(|y| {
            let total = chain.total_rate(y);
            let mut rhs = (chain.completion_rate(y) - lambda_star) / total;
            for t in chain.transitions(y) {
                rhs += t.rate / total * delta[t.target];
            }
            (delta[y] - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Max absolute residual of the drift identity
/// G o delta(y) = lambda* - mu_{y,.,1}, evaluated directly from stored rates.
pub fn generator_residual(chain: &LabeledCtmc, solution: &MarcSolution) -> f64 {
    (0..chain.len())
        .map(|y| {
            let drift: f64 = chain
                .transitions(y)
                .iter()
                .map(|t| t.rate * (solution.delta[t.target] - solution.delta[y]))
                .sum();
            (drift - (solution.lambda_star - chain.completion_rate(y))).abs()
        })
        .fold(0.0, f64::max)
}

/// Monte-Carlo estimate of delta(y) with a normal confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct DeltaEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Half-width of the 99% normal interval.
    pub half_width_99: f64,
}

impl DeltaEstimate {
    pub fn contains_99(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width_99
    }
}

/// Independent oracle for `relative_completions`: estimate
/// E[C(y, horizon)] - lambda* . horizon by simulating the chain.
pub fn estimate_delta_mc(
    chain: &LabeledCtmc,
    state: usize,
    lambda_star: f64,
    horizon: f64,
    reps: usize,
    seed: u64,
) -> DeltaEstimate {
    let samples: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, "delta-mc", rep);
            let mut y = state;
            let mut t = 0.0;
            let mut completions = 0u64;
            loop {
                let total = chain.total_rate(y);
                let dt = -(1.0 - rng.gen::<f64>()).ln() / total;
                t += dt;
                if t > horizon {
                    break;
                }
                let mut u = rng.gen::<f64>() * total;
                let outs = chain.transitions(y);
                let mut chosen = *outs.last().expect("no absorbing states");
                for tr in outs {
                    if u < tr.rate {
                        chosen = *tr;
                        break;
                    }
                    u -= tr.rate;
                }
                completions += chosen.completions as u64;
                y = chosen.target;
            }
            completions as f64 - lambda_star * horizon
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_err = (var / n).sqrt();
    DeltaEstimate {
        mean,
        std_err,
        half_width_99: 2.5758293035489004 * std_err,
    }
}

/// Dominant-term prediction (E[T], E[Q]) at arrival rate lambda.
pub fn predict(lambda_star: f64, delta_yd: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < lambda_star) {
        return Err(Error::Domain(format!(
            "arrival rate {lambda} outside (0, {lambda_star})"
        )));
    }
    let q = (1.0 + delta_yd) / (1.0 - lambda / lambda_star);
    Ok((q / lambda_star, q))
}

/// Dominant-term mean response time and queue length as functions of lambda.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionCurve {
    pub lambda_star: f64,
    pub delta_yd: f64,
}

impl PredictionCurve {
    pub fn new(solution: &MarcSolution) -> Self {
        Self {
            lambda_star: solution.lambda_star,
            delta_yd: solution.delta_yd,
        }
    }

    pub fn eval(&self, lambda: f64) -> Result<(f64, f64)> {
        predict(self.lambda_star, self.delta_yd, lambda)
    }
}

#[cfg(test)]
pub(crate) fn random_labeled_chain(states: usize, rng: &mut impl Rng) -> LabeledCtmc {
    use crate::chain::Transition;
    // Ring for irreducibility plus random extra edges, random labels a.
    let mut transitions: Vec<Vec<Transition>> = Vec::with_capacity(states);
    for y in 0..states {
        let mut outs = vec![Transition {
            target: (y + 1) % states,
            completions: rng.gen_range(0..=1),
            rate: rng.gen_range(0.1..2.0),
        }];
        for _ in 0..rng.gen_range(0..3) {
            outs.push(Transition {
                target: rng.gen_range(0..states),
                completions: rng.gen_range(0..=1),
                rate: rng.gen_range(0.05..1.5),
            });
        }
        // Ensure some completions exist somewhere.
        if y == 0 {
            outs[0].completions = 1;
        }
        transitions.push(outs);
    }
    LabeledCtmc::from_parts((0..states).map(|i| format!("s{i}")).collect(), transitions).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_sss_chain, Transition, DEFAULT_STATE_CAP};
    use crate::workload::running_example;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn running_sss() -> LabeledCtmc {
        build_sss_chain(&running_example(), DEFAULT_STATE_CAP).unwrap()
    }

    fn by_label<'a>(sol: &'a MarcSolution, vec: &'a [f64], label: &str) -> f64 {
        vec[sol.states.iter().position(|l| l == label).unwrap()]
    }

    #[test]
    fn running_example_solution_exact() {
        let chain = running_sss();
        let sol = analyze(&chain).unwrap();
        assert_abs_diff_eq!(sol.lambda_star, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(by_label(&sol, &sol.stationary, "[1,1]"), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(by_label(&sol, &sol.stationary, "[1,2*]"), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(by_label(&sol, &sol.stationary, "[2]"), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(
            by_label(&sol, &sol.departure, "[1,1]"),
            4.0 / 9.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            by_label(&sol, &sol.departure, "[1,2*]"),
            2.0 / 9.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            by_label(&sol, &sol.departure, "[2]"),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(by_label(&sol, &sol.delta, "[1,1]"), 1.38, epsilon = 1e-12);
        assert_abs_diff_eq!(by_label(&sol, &sol.delta, "[1,2*]"), -0.27, epsilon = 1e-12);
        assert_abs_diff_eq!(by_label(&sol, &sol.delta, "[2]"), -0.37, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.delta_yd, 0.43, epsilon = 1e-12);
    }

    #[test]
    fn one_state_chain() {
        let chain = LabeledCtmc::from_parts(
            vec!["[k]".into()],
            vec![vec![Transition {
                target: 0,
                completions: 1,
                rate: 0.7,
            }]],
        )
        .unwrap();
        let sol = analyze(&chain).unwrap();
        assert_eq!(sol.stationary, vec![1.0]);
        assert_eq!(sol.departure, vec![1.0]);
        assert_abs_diff_eq!(sol.lambda_star, 0.7, epsilon = 1e-15);
        assert_eq!(sol.delta, vec![0.0]);
        assert_eq!(generator_residual(&chain, &sol), 0.0);
    }

    #[test]
    fn normalization_and_residuals() {
        let chain = running_sss();
        let sol = analyze(&chain).unwrap();
        let pidelta: f64 = sol
            .stationary
            .iter()
            .zip(&sol.delta)
            .map(|(p, d)| p * d)
            .sum();
        assert!(pidelta.abs() < 1e-12);
        assert!(generator_residual(&chain, &sol) < 1e-10);
    }

    #[test]
    fn rate_scaling_scales_lambda_star_only() {
        let chain = running_sss();
        let sol = analyze(&chain).unwrap();
        let scaled = chain.scaled(2.0).unwrap();
        let sol2 = analyze(&scaled).unwrap();
        assert_abs_diff_eq!(sol2.lambda_star, 2.0 * sol.lambda_star, epsilon = 1e-12);
        for (a, b) in sol.delta.iter().zip(&sol2.delta) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(sol2.delta_yd, sol.delta_yd, epsilon = 1e-9);
    }

    #[test]
    fn random_chains_satisfy_drift_identity() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        for _ in 0..10 {
            let chain = random_labeled_chain(20, &mut rng);
            let sol = analyze(&chain).unwrap();
            assert!(generator_residual(&chain, &sol) < 1e-9);
        }
    }

    #[test]
    fn power_iteration_matches_dense() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let chain = random_labeled_chain(50, &mut rng);
        let dense = stationary_dense(&chain).unwrap();
        let power = stationary_power(&chain).unwrap();
        for (a, b) in dense.iter().zip(&power) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn delta_iterative_matches_dense() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let chain = random_labeled_chain(40, &mut rng);
        let pi = stationary(&chain).unwrap();
        let ls = throughput(&chain, &pi);
        let dense = relative_completions(&chain, &pi, ls).unwrap();
        let mut iter = delta_iterative(&chain, ls, 0).unwrap();
        let shift: f64 = pi.iter().zip(&iter).map(|(p, d)| p * d).sum();
        for d in &mut iter {
            *d -= shift;
        }
        for (a, b) in dense.iter().zip(&iter) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn mc_delta_oracle_brackets_linear_system() {
        let chain = running_sss();
        let sol = analyze(&chain).unwrap();
        for (y, &d) in sol.delta.iter().enumerate() {
            let est = estimate_delta_mc(&chain, y, sol.lambda_star, 200.0, 20_000, 7);
            assert!(
                est.contains_99(d),
                "state {}: estimate {} +- {} vs {}",
                sol.states[y],
                est.mean,
                est.half_width_99,
                d
            );
        }
    }

    #[test]
    fn predict_reduces_to_mm1() {
        // Single class with need k: delta_yd = 0, E[T] = 1/(mu - lambda).
        let (mu, lambda) = (0.7, 0.35);
        let (t, q) = predict(mu, 0.0, lambda).unwrap();
        assert_abs_diff_eq!(t, 1.0 / (mu - lambda), epsilon = 1e-12);
        assert_abs_diff_eq!(q, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_domain_checked() {
        assert!(predict(0.9, 0.43, 0.9).is_err());
        assert!(predict(0.9, 0.43, 0.0).is_err());
        assert!(predict(0.9, 0.43, -0.1).is_err());
    }

    #[test]
    fn running_example_prediction_coefficients() {
        let chain = running_sss();
        let sol = analyze(&chain).unwrap();
        let curve = PredictionCurve::new(&sol);
        let (t, _) = curve.eval(0.45).unwrap();
        // E[T] = (10/9) * 1.43 / (1 - lambda/0.9)
        assert_abs_diff_eq!(t, (10.0 / 9.0) * 1.43 / 0.5, epsilon = 1e-12);
    }
}

//! Event-driven simulators for the open MSJ FCFS system and the At-least-k
//! variant (auxiliary arrivals keep the front permanently full).

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::chain::in_service_prefix;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sim::{aggregate, exp_sample, SimConfig, SimResult, TimeStats};
use crate::workload::{JobState, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Msj,
    AtLeastK,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Job {
    pub state: JobState,
    pub arrival: f64,
    /// Post-warmup Poisson arrival; contributes to response-time stats.
    pub counted: bool,
}

/// Total transition rate of one job state (phase changes plus absorption).
pub(crate) fn job_rate(spec: &WorkloadSpec, js: JobState) -> f64 {
    -spec.class(js.class).duration.subgen()[js.phase][js.phase]
}

/// Sample a fresh job state: class w.p. p_i, phase per that class's init row.
pub(crate) fn sample_fresh(spec: &WorkloadSpec, rng: &mut impl Rng) -> JobState {
    let mut u = rng.gen::<f64>();
    let mut class = spec.classes().len() - 1;
    for (i, c) in spec.classes().iter().enumerate() {
        if u < c.prob {
            class = i;
            break;
        }
        u -= c.prob;
    }
    let init = spec.class(class).duration.init();
    let mut v = rng.gen::<f64>();
    let mut phase = init.len() - 1;
    for (p, &w) in init.iter().enumerate() {
        if v < w {
            phase = p;
            break;
        }
        v -= w;
    }
    JobState { class, phase }
}

/// Outcome of one service-process event inside the front.
pub(crate) enum FrontEvent {
    PhaseChange { pos: usize, phase: usize },
    Completion { pos: usize },
}

/// Pick the event among the in-service jobs, proportional to rates.
/// `u` is uniform on [0, total front rate).
pub(crate) fn pick_front_event(
    spec: &WorkloadSpec,
    in_service: impl Iterator<Item = JobState>,
    mut u: f64,
) -> FrontEvent {
    let mut last_pos = 0;
    for (pos, js) in in_service.enumerate() {
        last_pos = pos;
        let total = job_rate(spec, js);
        if u < total {
            let row = &spec.class(js.class).duration.subgen()[js.phase];
            for (q, &r) in row.iter().enumerate() {
                if q != js.phase && r > 0.0 {
                    if u < r {
                        return FrontEvent::PhaseChange { pos, phase: q };
                    }
                    u -= r;
                }
            }
            // Remaining mass is the absorption rate.
            return FrontEvent::Completion { pos };
        }
        u -= total;
    }
    // Float round-off at the upper edge lands on the last job's completion.
    FrontEvent::Completion { pos: last_pos }
}

fn run_rep(spec: &WorkloadSpec, cfg: &SimConfig, mode: Mode, rep: u64) -> Result<TimeStats> {
    let k = spec.k();
    let mut arr_rng = substream(cfg.seed, "arrivals", rep);
    let stream = match mode {
        Mode::Msj => "msj-service",
        Mode::AtLeastK => "ak-service",
    };
    let mut srv_rng = substream(cfg.seed, stream, rep);

    let mut jobs: VecDeque<Job> = VecDeque::new();
    if mode == Mode::AtLeastK {
        for _ in 0..k {
            jobs.push_back(Job {
                state: sample_fresh(spec, &mut srv_rng),
                arrival: 0.0,
                counted: false,
            });
        }
    }

    let mut stats = TimeStats::default();
    let warmup = cfg.warmup_arrivals();
    if warmup == 0 {
        stats.begin(0.0);
    }

    let mut t = 0.0;
    let mut arrivals = 0u64;
    let mut in_flight_counted = 0u64;
    let mut busy_since: Option<f64> = None;
    let mut states_buf: Vec<JobState> = Vec::with_capacity(k + 1);
    loop {
        states_buf.clear();
        states_buf.extend(jobs.iter().map(|j| j.state));
        let svc = in_service_prefix(&states_buf, spec);
        debug_assert!(svc <= k, "service prefix exceeds the front");
        debug_assert!(
            states_buf.iter().take(svc).map(|&s| spec.need(s)).sum::<usize>() <= k,
            "service set exceeds capacity"
        );
        let front_rate: f64 = jobs.iter().take(svc).map(|j| job_rate(spec, j.state)).sum();

        let collecting = arrivals < cfg.n_arrivals;
        if !collecting && in_flight_counted == 0 {
            break;
        }
        let t_arr = if collecting {
            exp_sample(&mut arr_rng, cfg.lambda)
        } else {
            f64::INFINITY
        };
        let t_srv = if front_rate > 0.0 {
            exp_sample(&mut srv_rng, front_rate)
        } else {
            f64::INFINITY
        };
        if !t_arr.is_finite() && !t_srv.is_finite() {
            break;
        }

        let dt = t_arr.min(t_srv);
        let t_next = t + dt;
        let q = jobs.len().saturating_sub(k);
        if collecting {
            stats.advance(t_next, jobs.len(), q == 0, false);
        }
        t = t_next;

        if t_arr <= t_srv {
            // Poisson arrival.
            let counted = arrivals >= warmup;
            jobs.push_back(Job {
                state: sample_fresh(spec, &mut arr_rng),
                arrival: t,
                counted,
            });
            if counted {
                in_flight_counted += 1;
            }
            arrivals += 1;
            if arrivals == warmup {
                stats.begin(t);
            }
            if jobs.len().saturating_sub(k) > cfg.runaway_backlog {
                return Err(Error::Unstable(format!(
                    "back length exceeded {} at lambda = {}; the arrival rate \
                     likely meets or exceeds lambda*",
                    cfg.runaway_backlog, cfg.lambda
                )));
            }
        } else {
            let u = srv_rng.gen::<f64>() * front_rate;
            match pick_front_event(spec, jobs.iter().take(svc).map(|j| j.state), u) {
                FrontEvent::PhaseChange { pos, phase } => {
                    jobs[pos].state.phase = phase;
                }
                FrontEvent::Completion { pos } => {
                    let had_exactly_k = jobs.len() == k;
                    let job = jobs.remove(pos).expect("completion position valid");
                    if job.counted {
                        stats.resp_sum += t - job.arrival;
                        stats.resp_count += 1;
                        in_flight_counted -= 1;
                    }
                    if mode == Mode::AtLeastK && had_exactly_k {
                        jobs.push_back(Job {
                            state: sample_fresh(spec, &mut srv_rng),
                            arrival: t,
                            counted: false,
                        });
                    }
                }
            }
        }

        // Busy periods of the back, measured only inside the stats window.
        let q_now = jobs.len().saturating_sub(k);
        if collecting && stats.start.is_some() {
            match (busy_since, q_now) {
                (None, q2) if q2 > 0 => busy_since = Some(t),
                (Some(start), 0) => {
                    stats.busy_sum += t - start;
                    stats.busy_count += 1;
                    busy_since = None;
                }
                _ => {}
            }
        }
    }
    Ok(stats)
}

fn run(spec: &WorkloadSpec, cfg: &SimConfig, mode: Mode) -> Result<SimResult> {
    cfg.validate()?;
    let reps: Result<Vec<_>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_rep(spec, cfg, mode, rep).map(|s| s.finish(false)))
        .collect();
    Ok(aggregate(&reps?))
}

/// Simulate the open multiserver-job FCFS system.
pub fn simulate_msj(spec: &WorkloadSpec, cfg: &SimConfig) -> Result<SimResult> {
    run(spec, cfg, Mode::Msj)
}

/// Simulate the At-least-k system: MSJ dynamics plus an auxiliary arrival
/// whenever a completion occurs with exactly k jobs present, so the front
/// always holds k jobs.
pub fn simulate_atleastk(spec: &WorkloadSpec, cfg: &SimConfig) -> Result<SimResult> {
    run(spec, cfg, Mode::AtLeastK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{exponential_class, running_example, WorkloadSpec};

    fn mm1_spec(mu: f64) -> WorkloadSpec {
        WorkloadSpec::new(2, vec![exponential_class(2, 1.0, mu).unwrap()]).unwrap()
    }

    #[test]
    fn msj_reduces_to_mm1() {
        let mu = 1.0;
        let spec = mm1_spec(mu);
        let mut cfg = SimConfig::new(0.5 * mu, 42);
        cfg.n_arrivals = 200_000;
        cfg.replications = 5;
        let res = simulate_msj(&spec, &cfg).unwrap();
        let expect = 1.0 / (mu - cfg.lambda);
        assert!(
            res.mean_t.contains(expect),
            "mean T {} +- {} vs {}",
            res.mean_t.mean,
            res.mean_t.ci,
            expect
        );
    }

    #[test]
    fn atleastk_back_is_mm1_queue() {
        let mu = 1.0;
        let spec = mm1_spec(mu);
        let mut cfg = SimConfig::new(0.6 * mu, 3);
        cfg.n_arrivals = 200_000;
        cfg.replications = 5;
        let res = simulate_atleastk(&spec, &cfg).unwrap();
        // Single class with need = k: the back is an M/M/1 queue.
        let expect = 1.0 - cfg.lambda / mu;
        assert!(
            res.p_queue_empty.contains(expect),
            "P(Q=0) {} +- {} vs {}",
            res.p_queue_empty.mean,
            res.p_queue_empty.ci,
            expect
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = running_example();
        let mut cfg = SimConfig::new(0.5, 11);
        cfg.n_arrivals = 5_000;
        cfg.replications = 2;
        let a = simulate_msj(&spec, &cfg).unwrap();
        let b = simulate_msj(&spec, &cfg).unwrap();
        assert_eq!(a.mean_t.mean.to_bits(), b.mean_t.mean.to_bits());
        assert_eq!(a.mean_n.mean.to_bits(), b.mean_n.mean.to_bits());
    }

    #[test]
    fn littles_law_holds() {
        let spec = running_example();
        let mut cfg = SimConfig::new(0.6, 21);
        cfg.n_arrivals = 300_000;
        cfg.replications = 3;
        let res = simulate_msj(&spec, &cfg).unwrap();
        let gap = (res.mean_n.mean - cfg.lambda * res.mean_t.mean).abs() / res.mean_n.mean;
        assert!(gap < 0.01, "Little's law violated: {gap}");
    }

    #[test]
    fn unstable_run_aborts() {
        let spec = mm1_spec(1.0);
        let mut cfg = SimConfig::new(3.0, 1);
        cfg.n_arrivals = 1_000_000;
        cfg.replications = 1;
        cfg.runaway_backlog = 10_000;
        match simulate_msj(&spec, &cfg) {
            Err(Error::Unstable(_)) => {}
            other => panic!("expected instability abort, got {other:?}"),
        }
    }
}

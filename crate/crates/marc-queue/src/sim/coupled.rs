//! Coupled simulation of an MSJ system and an At-least-k system sharing one
//! arrival stream. While the two fronts are equal and both backs are
//! non-empty ("merged"), front transitions are drawn from a shared stream and
//! applied to both systems; otherwise each system evolves on its own stream.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::chain::in_service_prefix;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sim::engine::{job_rate, pick_front_event, sample_fresh, FrontEvent, Job};
use crate::sim::{aggregate, exp_sample, SimConfig, SimResult, TimeStats};
use crate::workload::{JobState, WorkloadSpec};

struct System {
    jobs: VecDeque<Job>,
}

impl System {
    fn front_states(&self, k: usize) -> Vec<JobState> {
        self.jobs.iter().take(k).map(|j| j.state).collect()
    }

    fn back_len(&self, k: usize) -> usize {
        self.jobs.len().saturating_sub(k)
    }

    fn front_rate(&self, spec: &WorkloadSpec, svc: usize) -> f64 {
        self.jobs
            .iter()
            .take(svc)
            .map(|j| job_rate(spec, j.state))
            .sum()
    }
}

fn run_rep(spec: &WorkloadSpec, cfg: &SimConfig, rep: u64) -> Result<TimeStats> {
    let k = spec.k();
    let mut arr_rng = substream(cfg.seed, "arrivals", rep);
    let mut msj_rng = substream(cfg.seed, "msj-service", rep);
    let mut ak_rng = substream(cfg.seed, "ak-service", rep);
    let mut shared_rng = substream(cfg.seed, "shared-service", rep);

    let mut msj = System { jobs: VecDeque::new() };
    let mut ak = System { jobs: VecDeque::new() };
    for _ in 0..k {
        ak.jobs.push_back(Job {
            state: sample_fresh(spec, &mut ak_rng),
            arrival: 0.0,
            counted: false,
        });
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
    loop {
        let msj_front = msj.front_states(k);
        let ak_front = ak.front_states(k);
        let merged = msj_front == ak_front && msj.back_len(k) > 0 && ak.back_len(k) > 0;
        let mismatch = msj_front != ak_front;

        let msj_svc = in_service_prefix(&msj_front, spec);
        let ak_svc = in_service_prefix(&ak_front, spec);

        let collecting = arrivals < cfg.n_arrivals;
        if !collecting && in_flight_counted == 0 {
            break;
        }
        let t_arr = if collecting {
            exp_sample(&mut arr_rng, cfg.lambda)
        } else {
            f64::INFINITY
        };
        // In the merged regime the fronts are identical, so both systems see
        // the same total front rate and one shared clock drives both.
        let (t_msj, t_ak, t_shared) = if merged {
            let r = msj.front_rate(spec, msj_svc);
            (f64::INFINITY, f64::INFINITY, exp_sample(&mut shared_rng, r))
        } else {
            let rm = msj.front_rate(spec, msj_svc);
            let ra = ak.front_rate(spec, ak_svc);
            let tm = if rm > 0.0 {
                exp_sample(&mut msj_rng, rm)
            } else {
                f64::INFINITY
            };
            (tm, exp_sample(&mut ak_rng, ra), f64::INFINITY)
        };

        let dt = t_arr.min(t_msj).min(t_ak).min(t_shared);
        if !dt.is_finite() {
            break;
        }
        let t_next = t + dt;
        if collecting {
            stats.advance(t_next, msj.jobs.len(), msj.back_len(k) == 0, mismatch);
        }
        t = t_next;

        if t_arr <= dt {
            // Shared arrival: same time, class, and initial phase in both.
            let state = sample_fresh(spec, &mut arr_rng);
            let counted = arrivals >= warmup;
            msj.jobs.push_back(Job { state, arrival: t, counted });
            ak.jobs.push_back(Job { state, arrival: t, counted: false });
            if counted {
                in_flight_counted += 1;
            }
            arrivals += 1;
            if arrivals == warmup {
                stats.begin(t);
            }
            if msj.back_len(k) > cfg.runaway_backlog || ak.back_len(k) > cfg.runaway_backlog {
                return Err(Error::Unstable(format!(
                    "back length exceeded {} at lambda = {}; the arrival rate \
                     likely meets or exceeds lambda*",
                    cfg.runaway_backlog, cfg.lambda
                )));
            }
        } else if merged {
            let r = msj.front_rate(spec, msj_svc);
            let u = shared_rng.gen::<f64>() * r;
            let event = pick_front_event(spec, msj.jobs.iter().take(msj_svc).map(|j| j.state), u);
            match event {
                FrontEvent::PhaseChange { pos, phase } => {
                    msj.jobs[pos].state.phase = phase;
                    ak.jobs[pos].state.phase = phase;
                }
                FrontEvent::Completion { pos } => {
                    let job = msj.jobs.remove(pos).expect("valid position");
                    if job.counted {
                        stats.resp_sum += t - job.arrival;
                        stats.resp_count += 1;
                        in_flight_counted -= 1;
                    }
                    ak.jobs.remove(pos);
                    // Merged implies both backs non-empty, so no auxiliary
                    // arrival is needed on the Ak side.
                }
            }
        } else if t_msj <= t_ak {
            let r = msj.front_rate(spec, msj_svc);
            let u = msj_rng.gen::<f64>() * r;
            match pick_front_event(spec, msj.jobs.iter().take(msj_svc).map(|j| j.state), u) {
                FrontEvent::PhaseChange { pos, phase } => msj.jobs[pos].state.phase = phase,
                FrontEvent::Completion { pos } => {
                    let job = msj.jobs.remove(pos).expect("valid position");
                    if job.counted {
                        stats.resp_sum += t - job.arrival;
                        stats.resp_count += 1;
                        in_flight_counted -= 1;
                    }
                }
            }
        } else {
            let r = ak.front_rate(spec, ak_svc);
            let u = ak_rng.gen::<f64>() * r;
            match pick_front_event(spec, ak.jobs.iter().take(ak_svc).map(|j| j.state), u) {
                FrontEvent::PhaseChange { pos, phase } => ak.jobs[pos].state.phase = phase,
                FrontEvent::Completion { pos } => {
                    let had_exactly_k = ak.jobs.len() == k;
                    ak.jobs.remove(pos);
                    if had_exactly_k {
                        ak.jobs.push_back(Job {
                            state: sample_fresh(spec, &mut ak_rng),
                            arrival: t,
                            counted: false,
                        });
                    }
                }
            }
        }

        if collecting && stats.start.is_some() {
            match (busy_since, msj.back_len(k)) {
                (None, q) if q > 0 => busy_since = Some(t),
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

/// Run the coupled MSJ / At-least-k pair. Response-time, queue, and
/// busy-period statistics are for the MSJ side; `mismatch_fraction` is the
/// time-average fraction with unequal front states.
pub fn simulate_coupled(spec: &WorkloadSpec, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let reps: Result<Vec<_>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_rep(spec, cfg, rep).map(|s| s.finish(true)))
        .collect();
    Ok(aggregate(&reps?))
}

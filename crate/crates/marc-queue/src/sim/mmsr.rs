//! Simulator for the Markov-modulated service rate queue: an M/M/1 whose
//! completion epochs are the a=1 transitions of an external labeled chain.
//! The chain evolves regardless of the queue length; a completion with an
//! empty queue removes nothing.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;

use crate::chain::LabeledCtmc;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sim::{aggregate, exp_sample, SimConfig, SimResult, TimeStats};

fn run_rep(chain: &LabeledCtmc, cfg: &SimConfig, rep: u64) -> Result<TimeStats> {
    let mut arr_rng = substream(cfg.seed, "arrivals", rep);
    let mut srv_rng = substream(cfg.seed, "mmsr-service", rep);

    // (arrival time, counted) per queued job, oldest first.
    let mut queue: VecDeque<(f64, bool)> = VecDeque::new();
    let mut y = 0usize;

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
        let collecting = arrivals < cfg.n_arrivals;
        if !collecting && in_flight_counted == 0 {
            break;
        }
        let t_arr = if collecting {
            exp_sample(&mut arr_rng, cfg.lambda)
        } else {
            f64::INFINITY
        };
        let t_chain = exp_sample(&mut srv_rng, chain.total_rate(y));

        let dt = t_arr.min(t_chain);
        let t_next = t + dt;
        if collecting {
            stats.advance(t_next, queue.len(), queue.is_empty(), false);
        }
        t = t_next;

        if t_arr <= t_chain {
            let counted = arrivals >= warmup;
            queue.push_back((t, counted));
            if counted {
                in_flight_counted += 1;
            }
            arrivals += 1;
            if arrivals == warmup {
                stats.begin(t);
            }
            if queue.len() > cfg.runaway_backlog {
                return Err(Error::Unstable(format!(
                    "queue length exceeded {} at lambda = {}; the arrival rate \
                     likely meets or exceeds lambda*",
                    cfg.runaway_backlog, cfg.lambda
                )));
            }
        } else {
            let mut u = srv_rng.gen::<f64>() * chain.total_rate(y);
            let outs = chain.transitions(y);
            let mut chosen = *outs.last().expect("no absorbing states");
            for tr in outs {
                if u < tr.rate {
                    chosen = *tr;
                    break;
                }
                u -= tr.rate;
            }
            y = chosen.target;
            if chosen.completions == 1 {
                if let Some((arrived, counted)) = queue.pop_front() {
                    if counted {
                        stats.resp_sum += t - arrived;
                        stats.resp_count += 1;
                        in_flight_counted -= 1;
                    }
                }
            }
        }

        if collecting && stats.start.is_some() {
            match (busy_since, queue.len()) {
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

/// Simulate the MMSR queue driven by the given labeled chain, started in
/// state 0 with an empty queue.
pub fn simulate_mmsr(chain: &LabeledCtmc, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let reps: Result<Vec<_>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_rep(chain, cfg, rep).map(|s| s.finish(false)))
        .collect();
    Ok(aggregate(&reps?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_sss_chain, LabeledCtmc, Transition, DEFAULT_STATE_CAP};
    use crate::marc::analyze;
    use crate::workload::running_example;

    fn one_state_chain(mu: f64) -> LabeledCtmc {
        LabeledCtmc::from_parts(
            vec!["[k]".into()],
            vec![vec![Transition {
                target: 0,
                completions: 1,
                rate: mu,
            }]],
        )
        .unwrap()
    }

    #[test]
    fn one_state_chain_is_mm1() {
        let mu = 1.0;
        let chain = one_state_chain(mu);
        let mut cfg = SimConfig::new(0.5, 17);
        cfg.n_arrivals = 200_000;
        cfg.replications = 5;
        let res = simulate_mmsr(&chain, &cfg).unwrap();
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
    fn queue_length_tracks_prediction_at_high_load() {
        let chain = build_sss_chain(&running_example(), DEFAULT_STATE_CAP).unwrap();
        let sol = analyze(&chain).unwrap();
        let mut cfg = SimConfig::new(0.8 * sol.lambda_star, 23);
        cfg.n_arrivals = 400_000;
        cfg.replications = 5;
        let res = simulate_mmsr(&chain, &cfg).unwrap();
        let dominant = (1.0 + sol.delta_yd) / (1.0 - 0.8);
        // Exact up to an additive O(1) offset.
        assert!(
            (res.mean_n.mean - dominant).abs() < 2.0,
            "mean N {} vs dominant {}",
            res.mean_n.mean,
            dominant
        );
    }

    #[test]
    fn busy_periods_grow_toward_saturation() {
        let chain = build_sss_chain(&running_example(), DEFAULT_STATE_CAP).unwrap();
        let sol = analyze(&chain).unwrap();
        let mut busy = Vec::new();
        for load in [0.8, 0.9, 0.95] {
            let mut cfg = SimConfig::new(load * sol.lambda_star, 31);
            cfg.n_arrivals = 200_000;
            cfg.replications = 3;
            let res = simulate_mmsr(&chain, &cfg).unwrap();
            busy.push(res.mean_busy_period.mean);
        }
        assert!(busy[0] < busy[1] && busy[1] < busy[2], "{busy:?}");
        // Roughly proportional to 1/(1 - load): the normalized values stay
        // within a small factor of each other.
        let norm: Vec<f64> = busy
            .iter()
            .zip([0.8, 0.9, 0.95])
            .map(|(b, load)| b * (1.0 - load))
            .collect();
        let max = norm.iter().cloned().fold(f64::MIN, f64::max);
        let min = norm.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 3.0, "normalized busy periods {norm:?}");
    }
}

//! Discrete-event simulation of the open MSJ FCFS system, the generic MMSR
//! system, the At-least-k system, and a coupled MSJ/Ak pair.
//!
//! Every timer in the model is exponential (arrivals are Poisson and
//! durations are phase type), so the engines resample the race of
//! exponentials at each state change instead of keeping an event calendar.

mod coupled;
mod engine;
mod mmsr;

pub use coupled::simulate_coupled;
pub use engine::{simulate_atleastk, simulate_msj};
pub use mmsr::simulate_mmsr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Back-length bound that aborts runs accidentally started at lambda >= lambda*.
pub const RUNAWAY_BACKLOG: usize = 10_000_000;

/// Simulation run parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    /// Poisson arrival rate.
    pub lambda: f64,
    /// Total arrivals to simulate per replication.
    pub n_arrivals: u64,
    /// Fraction of arrivals discarded as warmup.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: u32,
    /// Back-length bound that aborts runs accidentally started at
    /// lambda >= lambda*.
    pub runaway_backlog: usize,
}

impl SimConfig {
    pub fn new(lambda: f64, seed: u64) -> Self {
        Self {
            lambda,
            n_arrivals: 1_000_000,
            warmup_fraction: 0.1,
            seed,
            replications: 10,
            runaway_backlog: RUNAWAY_BACKLOG,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Validation("lambda must be positive".into()));
        }
        if !(0.0..=0.9).contains(&self.warmup_fraction) {
            return Err(Error::Validation(
                "warmup_fraction must lie in [0, 0.9]".into(),
            ));
        }
        if self.n_arrivals < 1000 {
            return Err(Error::Validation("n_arrivals must be >= 1000".into()));
        }
        if self.replications == 0 {
            return Err(Error::Validation("replications must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn warmup_arrivals(&self) -> u64 {
        (self.n_arrivals as f64 * self.warmup_fraction) as u64
    }
}

/// Point estimate with a 95% normal confidence half-width across replications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci: f64,
}

impl Estimate {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.ci
    }

    fn from_samples(samples: &[f64]) -> Self {
        let vals: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        let n = vals.len() as f64;
        if vals.is_empty() {
            return Self {
                mean: f64::NAN,
                ci: f64::INFINITY,
            };
        }
        let mean = vals.iter().sum::<f64>() / n;
        let ci = if vals.len() > 1 {
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.959963984540054 * (var / n).sqrt()
        } else {
            f64::INFINITY
        };
        Self { mean, ci }
    }
}

/// Aggregated simulation output.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub mean_t: Estimate,
    pub mean_n: Estimate,
    /// Time-average probability that the back (queue) is empty.
    pub p_queue_empty: Estimate,
    pub mean_busy_period: Estimate,
    /// Coupled runs only: time-average fraction with unequal front states.
    pub mismatch_fraction: Option<Estimate>,
}

/// Per-replication statistics, combined across replications in index order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RepStats {
    pub mean_t: f64,
    pub mean_n: f64,
    pub p_empty: f64,
    pub mean_busy: f64,
    pub mismatch: Option<f64>,
}

pub(crate) fn aggregate(reps: &[RepStats]) -> SimResult {
    let col = |f: &dyn Fn(&RepStats) -> f64| -> Vec<f64> { reps.iter().map(f).collect() };
    let mismatch = if reps.iter().all(|r| r.mismatch.is_some()) {
        Some(Estimate::from_samples(&col(&|r| r.mismatch.unwrap())))
    } else {
        None
    };
    SimResult {
        mean_t: Estimate::from_samples(&col(&|r| r.mean_t)),
        mean_n: Estimate::from_samples(&col(&|r| r.mean_n)),
        p_queue_empty: Estimate::from_samples(&col(&|r| r.p_empty)),
        mean_busy_period: Estimate::from_samples(&col(&|r| r.mean_busy)),
        mismatch_fraction: mismatch,
    }
}

/// Time-weighted accumulators for one replication.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct TimeStats {
    pub start: Option<f64>,
    pub last: f64,
    pub n_area: f64,
    pub empty_time: f64,
    pub mismatch_time: f64,
    pub resp_sum: f64,
    pub resp_count: u64,
    pub busy_sum: f64,
    pub busy_count: u64,
}

impl TimeStats {
    pub fn begin(&mut self, t: f64) {
        self.start = Some(t);
        self.last = t;
    }

    pub fn advance(&mut self, t: f64, n: usize, q_empty: bool, mismatch: bool) {
        if self.start.is_none() {
            return;
        }
        let dt = t - self.last;
        self.last = t;
        self.n_area += dt * n as f64;
        if q_empty {
            self.empty_time += dt;
        }
        if mismatch {
            self.mismatch_time += dt;
        }
    }

    pub fn finish(&self, mismatch: bool) -> RepStats {
        let span = self.start.map(|s| self.last - s).unwrap_or(0.0);
        RepStats {
            mean_t: if self.resp_count > 0 {
                self.resp_sum / self.resp_count as f64
            } else {
                f64::NAN
            },
            mean_n: if span > 0.0 { self.n_area / span } else { f64::NAN },
            p_empty: if span > 0.0 {
                self.empty_time / span
            } else {
                f64::NAN
            },
            mean_busy: if self.busy_count > 0 {
                self.busy_sum / self.busy_count as f64
            } else {
                f64::NAN
            },
            mismatch: if mismatch {
                Some(if span > 0.0 {
                    self.mismatch_time / span
                } else {
                    f64::NAN
                })
            } else {
                None
            },
        }
    }
}

pub(crate) fn exp_sample(rng: &mut impl rand::Rng, rate: f64) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

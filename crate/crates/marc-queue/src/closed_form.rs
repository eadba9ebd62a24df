//! Analytic oracle for the two-server, two-class exponential workload.
//!
//! Fully parameterized closed forms over the three SSS states
//! ([1,1], [1,2*], [2]): the stationary and departure distributions, the
//! stability threshold, and the relative completions. Serves as an
//! independent cross-check of the numeric analyzer.

use crate::error::{Error, Result};
use crate::marc::MarcSolution;

/// Parameters of the k=2 family: p1 fraction of need-1 jobs with rate mu1,
/// the rest need both servers with rate mu2.
#[derive(Debug, Clone, Copy)]
pub struct K2Params {
    pub p1: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl K2Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::Validation(format!(
                "p1 must lie strictly in (0, 1), got {}",
                self.p1
            )));
        }
        if !(self.mu1 > 0.0 && self.mu2 > 0.0) {
            return Err(Error::Validation(
                "service rates mu1 and mu2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Closed-form MARC solution over states in the order [1,1], [1,2*], [2].
pub fn closed_form_k2(params: K2Params) -> Result<MarcSolution> {
    params.validate()?;
    let K2Params { p1, mu1, mu2 } = params;
    let p2 = 1.0 - p1;

    // Common denominator of the stationary solve.
    let d = mu2 * p1 * p1 + 2.0 * mu2 * p1 * p2 + 2.0 * mu1 * p2;

    let stationary = vec![mu2 * p1 * p1 / d, 2.0 * mu2 * p1 * p2 / d, 2.0 * mu1 * p2 / d];
    let lambda_star = 2.0 * mu1 * mu2 / d;
    let departure = vec![p1 * p1, p1 * p2, p2];

    // delta up to the additive constant c fixed by sum_y Y(y) delta(y) = 0.
    let c = (4.0 * mu1 * mu1 * p2 * p2
        - 2.0 * mu1 * mu2 * (p1 * p1 + p1 * p1 * p2 + 2.0 * p2 * p2)
        + mu2 * mu2 * p1 * p1 * p2)
        / (d * d);
    let delta = vec![
        (2.0 * mu1 - mu2 * p2) / d + c,
        c,
        (mu2 * p1 * p1 + 2.0 * (mu2 - mu1) * p2) / d + c,
    ];

    let delta_yd = p1 * p2
        * (4.0 * mu1 * mu1 - 2.0 * mu1 * mu2 * (1.0 + 3.0 * p2)
            + mu2 * mu2 * (1.0 + p2 + 2.0 * p2 * p2))
        / (d * d);

    Ok(MarcSolution {
        states: vec!["[1,1]".into(), "[1,2*]".into(), "[2]".into()],
        stationary,
        lambda_star,
        departure,
        delta,
        delta_yd,
    })
}

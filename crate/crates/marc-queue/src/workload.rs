//! Declarative description of multiserver-job workloads: job classes with
//! integer server needs, arrival probabilities, and phase-type durations.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance for probability/rate consistency checks at load time.
pub const VALIDATION_TOL: f64 = 1e-12;

/// A phase-type duration distribution in (init, subgenerator) form.
///
/// The per-phase absorption rates are always derived from the subgenerator row
/// sums, never supplied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    init: Vec<f64>,
    subgen: Vec<Vec<f64>>,
    exit: Vec<f64>,
}

impl PhaseType {
    pub fn new(init: Vec<f64>, subgen: Vec<Vec<f64>>) -> Result<Self> {
        let n = init.len();
        if n == 0 {
            return Err(Error::Validation("phase-type has no phases".into()));
        }
        if subgen.len() != n || subgen.iter().any(|row| row.len() != n) {
            return Err(Error::Validation(format!(
                "subgenerator must be {n}x{n} to match the init vector"
            )));
        }
        if init.iter().any(|&p| p < 0.0) {
            return Err(Error::Validation("init entries must be >= 0".into()));
        }
        let init_sum: f64 = init.iter().sum();
        if (init_sum - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::Validation(format!(
                "init probabilities sum to {init_sum}, expected 1"
            )));
        }
        let mut exit = Vec::with_capacity(n);
        for (i, row) in subgen.iter().enumerate() {
            if row[i] > 0.0 {
                return Err(Error::Validation(format!(
                    "subgenerator diagonal entry ({i},{i}) must be <= 0"
                )));
            }
            for (j, &r) in row.iter().enumerate() {
                if i != j && r < 0.0 {
                    return Err(Error::Validation(format!(
                        "subgenerator off-diagonal entry ({i},{j}) must be >= 0"
                    )));
                }
            }
            let row_sum: f64 = row.iter().sum();
            let e = -row_sum;
            if e < -VALIDATION_TOL {
                return Err(Error::Validation(format!(
                    "subgenerator row {i} has positive row sum; exit rate would be negative"
                )));
            }
            exit.push(e.max(0.0));
        }
        if exit.iter().all(|&e| e <= 0.0) {
            return Err(Error::Validation(
                "phase-type is improper: no phase has a positive exit rate".into(),
            ));
        }
        Ok(Self { init, subgen, exit })
    }

    /// Single-phase exponential duration.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Validation(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Self::new(vec![1.0], vec![vec![-rate]])
    }

    pub fn num_phases(&self) -> usize {
        self.init.len()
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn subgen(&self) -> &[Vec<f64>] {
        &self.subgen
    }

    /// Derived absorption rate of each phase.
    pub fn exit(&self) -> &[f64] {
        &self.exit
    }

    /// Mean duration init . (-subgen)^-1 . 1, by Gaussian elimination on the
    /// small dense system (-subgen) m = 1.
    pub fn mean(&self) -> Result<f64> {
        let n = self.num_phases();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = self.subgen[i].iter().map(|&x| -x).collect();
                row.push(1.0);
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if a[pivot][col].abs() < 1e-300 {
                return Err(Error::Numeric("singular subgenerator".into()));
            }
            a.swap(col, pivot);
            for i in 0..n {
                if i != col {
                    let f = a[i][col] / a[col][col];
                    for j in col..=n {
                        a[i][j] -= f * a[col][j];
                    }
                }
            }
        }
        let mean = (0..n).map(|i| self.init[i] * a[i][n] / a[i][i]).sum();
        Ok(mean)
    }
}

/// One job class: server need, arrival probability, duration law.
#[derive(Debug, Clone, PartialEq)]
pub struct JobClass {
    pub need: usize,
    pub prob: f64,
    pub duration: PhaseType,
}

/// A complete workload: server count plus job classes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    k: usize,
    classes: Vec<JobClass>,
}

/// Index of a job's class and current phase within that class's duration law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobState {
    pub class: usize,
    pub phase: usize,
}

impl WorkloadSpec {
    pub fn new(k: usize, classes: Vec<JobClass>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("server count k must be >= 1".into()));
        }
        if classes.is_empty() {
            return Err(Error::Validation("workload has no job classes".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.need == 0 || c.need > k {
                return Err(Error::Validation(format!(
                    "class {i}: server need {} must satisfy 1 <= need <= k = {k}",
                    c.need
                )));
            }
            if !(c.prob > 0.0) {
                return Err(Error::Validation(format!(
                    "class {i}: arrival probability must be positive"
                )));
            }
        }
        let psum: f64 = classes.iter().map(|c| c.prob).sum();
        if (psum - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::Validation(format!(
                "probabilities sum != 1 (got {psum})"
            )));
        }
        Ok(Self { k, classes })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> &[JobClass] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> &JobClass {
        &self.classes[i]
    }

    pub fn need(&self, state: JobState) -> usize {
        self.classes[state.class].need
    }

    /// Absorption rate of a job in the given state.
    pub fn exit_rate(&self, state: JobState) -> f64 {
        self.classes[state.class].duration.exit()[state.phase]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&WorkloadFile::from(self)).expect("workload serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorkloadFile = serde_json::from_str(text)?;
        file.build()
    }
}

/// Convenience constructor for a class with exponential duration.
pub fn exponential_class(need: usize, prob: f64, rate: f64) -> Result<JobClass> {
    Ok(JobClass {
        need,
        prob,
        duration: PhaseType::exponential(rate)?,
    })
}

/// Load and validate a workload config from a JSON file.
pub fn load_spec<P: AsRef<Path>>(path: P) -> Result<WorkloadSpec> {
    let text = std::fs::read_to_string(path)?;
    WorkloadSpec::from_json(&text)
}

// On-disk schema. The exit vector is always derived, never supplied.

#[derive(Serialize, Deserialize)]
struct WorkloadFile {
    k: usize,
    classes: Vec<ClassFile>,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    need: usize,
    prob: f64,
    duration: DurationFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum DurationFile {
    Exp { rate: f64 },
    Phase { init: Vec<f64>, subgen: Vec<Vec<f64>> },
}

impl WorkloadFile {
    fn build(self) -> Result<WorkloadSpec> {
        let classes = self
            .classes
            .into_iter()
            .map(|c| {
                let duration = match c.duration {
                    DurationFile::Exp { rate } => PhaseType::exponential(rate)?,
                    DurationFile::Phase { init, subgen } => PhaseType::new(init, subgen)?,
                };
                Ok(JobClass {
                    need: c.need,
                    prob: c.prob,
                    duration,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        WorkloadSpec::new(self.k, classes)
    }
}

impl From<&WorkloadSpec> for WorkloadFile {
    fn from(spec: &WorkloadSpec) -> Self {
        WorkloadFile {
            k: spec.k,
            classes: spec
                .classes
                .iter()
                .map(|c| ClassFile {
                    need: c.need,
                    prob: c.prob,
                    duration: if c.duration.num_phases() == 1 {
                        DurationFile::Exp {
                            rate: c.duration.exit()[0],
                        }
                    } else {
                        DurationFile::Phase {
                            init: c.duration.init().to_vec(),
                            subgen: c.duration.subgen().to_vec(),
                        }
                    },
                })
                .collect(),
        }
    }
}

/// The k=2 workload used throughout the docs and tests: 2/3 of jobs need one
/// server with duration Exp(1), 1/3 need both servers with duration Exp(1/2).
pub fn running_example() -> WorkloadSpec {
    WorkloadSpec::new(
        2,
        vec![
            exponential_class(1, 2.0 / 3.0, 1.0).unwrap(),
            exponential_class(2, 1.0 / 3.0, 0.5).unwrap(),
        ],
    )
    .unwrap()
}

//! Completion-labeled CTMCs: the saturated system and the simplified
//! saturated system, built from a workload by reachability enumeration.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::workload::{JobState, WorkloadSpec};

/// Default enumeration cap; dense solves beyond this are not desk scale.
pub const DEFAULT_STATE_CAP: usize = 200_000;

/// One outgoing transition of a labeled chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub target: usize,
    /// Completion count a, 0 or 1.
    pub completions: u8,
    pub rate: f64,
}

/// A finite CTMC whose transitions carry a completion label a in {0,1}.
///
/// Immutable once built; states are indexed in enumeration order and all
/// analyzer vectors use that order.
#[derive(Debug, Clone)]
pub struct LabeledCtmc {
    labels: Vec<String>,
    transitions: Vec<Vec<Transition>>,
    total_rate: Vec<f64>,
    completion_rate: Vec<f64>,
}

impl LabeledCtmc {
    /// Assemble and validate a chain from per-state transition lists.
    pub fn from_parts(labels: Vec<String>, transitions: Vec<Vec<Transition>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Validation("chain has no states".into()));
        }
        if transitions.len() != n {
            return Err(Error::Validation(
                "transition table length does not match state count".into(),
            ));
        }
        let mut total_rate = vec![0.0; n];
        let mut completion_rate = vec![0.0; n];
        for (y, outs) in transitions.iter().enumerate() {
            for t in outs {
                if t.target >= n {
                    return Err(Error::Validation(format!(
                        "state {y}: transition target {} out of range",
                        t.target
                    )));
                }
                if !(t.rate >= 0.0) || !t.rate.is_finite() {
                    return Err(Error::Validation(format!(
                        "state {y}: transition rate {} must be finite and >= 0",
                        t.rate
                    )));
                }
                if t.completions > 1 {
                    return Err(Error::Validation(format!(
                        "state {y}: completion label {} must be 0 or 1",
                        t.completions
                    )));
                }
                total_rate[y] += t.rate;
                if t.completions == 1 {
                    completion_rate[y] += t.rate;
                }
            }
            if total_rate[y] <= 0.0 {
                return Err(Error::Validation(format!(
                    "state {y} ({}) is absorbing; the chain must be a closed system",
                    labels[y]
                )));
            }
        }
        let chain = Self {
            labels,
            transitions,
            total_rate,
            completion_rate,
        };
        chain.check_irreducible()?;
        Ok(chain)
    }

    fn check_irreducible(&self) -> Result<()> {
        let n = self.len();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (y, outs) in self.transitions.iter().enumerate() {
            for t in outs {
                if t.rate > 0.0 {
                    reverse[t.target].push(y);
                }
            }
        }
        let forward = |y: usize| -> Vec<usize> {
            self.transitions[y]
                .iter()
                .filter(|t| t.rate > 0.0)
                .map(|t| t.target)
                .collect()
        };
        for (dir, neighbors) in [
            ("forward", &forward as &dyn Fn(usize) -> Vec<usize>),
            ("backward", &|y: usize| reverse[y].clone()),
        ] {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(y) = stack.pop() {
                for y2 in neighbors(y) {
                    if !seen[y2] {
                        seen[y2] = true;
                        count += 1;
                        stack.push(y2);
                    }
                }
            }
            if count != n {
                return Err(Error::Validation(format!(
                    "chain is reducible: only {count} of {n} states {dir}-reachable from state 0"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, y: usize) -> &str {
        &self.labels[y]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn transitions(&self, y: usize) -> &[Transition] {
        &self.transitions[y]
    }

    /// Total outgoing rate mu_{y,.,.}.
    pub fn total_rate(&self, y: usize) -> f64 {
        self.total_rate[y]
    }

    /// Total completion rate mu_{y,.,1}.
    pub fn completion_rate(&self, y: usize) -> f64 {
        self.completion_rate[y]
    }

    /// Rescale every rate by a positive factor; completion labels unchanged.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Validation("scale factor must be positive".into()));
        }
        let transitions = self
            .transitions
            .iter()
            .map(|outs| {
                outs.iter()
                    .map(|t| Transition {
                        rate: t.rate * factor,
                        ..*t
                    })
                    .collect()
            })
            .collect();
        Self::from_parts(self.labels.clone(), transitions)
    }

    /// CSV dump with columns (from_state, to_state, completions, rate).
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("from_state,to_state,completions,rate\n");
        for (y, outs) in self.transitions.iter().enumerate() {
            for t in outs {
                writeln!(out, "{y},{},{},{}", t.target, t.completions, t.rate).unwrap();
            }
        }
        out
    }

    /// State-index legend with columns (state, label).
    pub fn legend_csv(&self) -> String {
        let mut out = String::from("state,label\n");
        for (y, label) in self.labels.iter().enumerate() {
            writeln!(out, "{y},\"{label}\"").unwrap();
        }
        out
    }
}

/// Saturated-system state: an ordered list of exactly k job states, oldest
/// first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SatState(pub Vec<JobState>);

/// Simplified-saturated-system state: the multiset of in-service job states
/// (kept sorted) plus the class of the single blocked job, if any.
///
/// The blocked job's duration phase is sampled when it enters service, since
/// phases only evolve in service.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SssState {
    pub in_service: Vec<JobState>,
    pub blocked: Option<usize>,
}

impl SatState {
    /// Injective, deterministic byte encoding. Order is semantic.
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut out = vec![b'S'];
        for js in &self.0 {
            out.extend_from_slice(&(js.class as u32).to_le_bytes());
            out.extend_from_slice(&(js.phase as u32).to_le_bytes());
        }
        out
    }
}

impl SssState {
    fn normalized(mut in_service: Vec<JobState>, blocked: Option<usize>) -> Self {
        in_service.sort_unstable();
        Self {
            in_service,
            blocked,
        }
    }

    /// Injective, deterministic byte encoding; the multiset is sorted first.
    pub fn canonical_encoding(&self) -> Vec<u8> {
        let mut sorted = self.in_service.clone();
        sorted.sort_unstable();
        let mut out = vec![b'M'];
        for js in &sorted {
            out.extend_from_slice(&(js.class as u32).to_le_bytes());
            out.extend_from_slice(&(js.phase as u32).to_le_bytes());
        }
        match self.blocked {
            Some(c) => {
                out.push(0xFF);
                out.extend_from_slice(&(c as u32).to_le_bytes());
            }
            None => out.push(0xFE),
        }
        out
    }
}

/// Length of the greedy FCFS in-service prefix: jobs enter service in order
/// until the first one that does not fit, which blocks all later jobs.
pub fn in_service_prefix(jobs: &[JobState], spec: &WorkloadSpec) -> usize {
    let mut used = 0;
    for (i, js) in jobs.iter().enumerate() {
        let need = spec.need(*js);
        if used + need > spec.k() {
            return i;
        }
        used += need;
    }
    jobs.len()
}

fn job_label(spec: &WorkloadSpec, js: JobState) -> String {
    let need = spec.need(js);
    let shared_need = spec.classes().iter().filter(|c| c.need == need).count() > 1;
    let mut s = format!("{need}");
    if shared_need {
        s.push_str(&format!("#c{}", js.class));
    }
    if spec.class(js.class).duration.num_phases() > 1 {
        s.push_str(&format!(".{}", js.phase));
    }
    s
}

fn sat_label(spec: &WorkloadSpec, state: &SatState) -> String {
    let parts: Vec<String> = state.0.iter().map(|&js| job_label(spec, js)).collect();
    format!("[{}]", parts.join(","))
}

fn sss_label(spec: &WorkloadSpec, state: &SssState) -> String {
    let mut parts: Vec<String> = state
        .in_service
        .iter()
        .map(|&js| job_label(spec, js))
        .collect();
    if let Some(c) = state.blocked {
        parts.push(format!("{}*", spec.class(c).need));
    }
    format!("[{}]", parts.join(","))
}

/// Fresh job states with their sampling probabilities p_i * init_p.
fn fresh_states(spec: &WorkloadSpec) -> Vec<(JobState, f64)> {
    let mut out = Vec::new();
    for (class, c) in spec.classes().iter().enumerate() {
        for (phase, &w) in c.duration.init().iter().enumerate() {
            if w > 0.0 {
                out.push((JobState { class, phase }, c.prob * w));
            }
        }
    }
    out
}

/// Build the saturated system's labeled CTMC.
///
/// States are all k-lists reachable from the closure of saturating an empty
/// system with i.i.d. samples; completions trigger a freshly sampled arrival
/// appended at the tail.
pub fn build_saturated_chain(spec: &WorkloadSpec, cap: usize) -> Result<LabeledCtmc> {
    let k = spec.k();
    let fresh = fresh_states(spec);

    let mut index: HashMap<SatState, usize> = HashMap::new();
    let mut states: Vec<SatState> = Vec::new();
    let intern = |state: SatState,
                      index: &mut HashMap<SatState, usize>,
                      states: &mut Vec<SatState>|
     -> Result<usize> {
        if let Some(&i) = index.get(&state) {
            return Ok(i);
        }
        if states.len() >= cap {
            return Err(Error::CapExceeded {
                reached: states.len(),
                cap,
            });
        }
        let i = states.len();
        index.insert(state.clone(), i);
        states.push(state);
        Ok(i)
    };

    // Saturating an empty system admits k i.i.d. fresh jobs in order.
    let mut seed_lists: Vec<Vec<JobState>> = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::with_capacity(seed_lists.len() * fresh.len());
        for list in &seed_lists {
            for (fs, _) in &fresh {
                let mut l = list.clone();
                l.push(*fs);
                next.push(l);
            }
        }
        seed_lists = next;
    }
    for list in seed_lists {
        intern(SatState(list), &mut index, &mut states)?;
    }

    let mut transitions: Vec<Vec<Transition>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let jobs = states[cursor].0.clone();
        let m = in_service_prefix(&jobs, spec);
        let mut out: HashMap<(usize, u8), f64> = HashMap::new();
        for pos in 0..m {
            let js = jobs[pos];
            let pt = &spec.class(js.class).duration;
            for (q, &r) in pt.subgen()[js.phase].iter().enumerate() {
                if q != js.phase && r > 0.0 {
                    let mut next = jobs.clone();
                    next[pos].phase = q;
                    let i = intern(SatState(next), &mut index, &mut states)?;
                    *out.entry((i, 0)).or_insert(0.0) += r;
                }
            }
            let e = pt.exit()[js.phase];
            if e > 0.0 {
                let mut base = jobs.clone();
                base.remove(pos);
                for (fs, w) in &fresh {
                    let mut next = base.clone();
                    next.push(*fs);
                    let i = intern(SatState(next), &mut index, &mut states)?;
                    *out.entry((i, 1)).or_insert(0.0) += e * w;
                }
            }
        }
        let mut outs: Vec<Transition> = out
            .into_iter()
            .map(|((target, completions), rate)| Transition {
                target,
                completions,
                rate,
            })
            .collect();
        outs.sort_by_key(|t| (t.target, t.completions));
        transitions.push(outs);
        cursor += 1;
    }

    let labels = states.iter().map(|s| sat_label(spec, s)).collect();
    LabeledCtmc::from_parts(labels, transitions)
}

/// Admission closure of the SSS: starting from the given in-service multiset
/// (and the blocked job, which is oldest and admitted first if it fits),
/// admit i.i.d. sampled jobs until the total server need reaches k or a
/// sampled job does not fit and becomes the blocked descriptor.
fn admit(
    spec: &WorkloadSpec,
    in_service: Vec<JobState>,
    blocked: Option<usize>,
    weight: f64,
    out: &mut HashMap<SssState, f64>,
) {
    let used: usize = in_service.iter().map(|&js| spec.need(js)).sum();
    if let Some(b) = blocked {
        if used + spec.class(b).need <= spec.k() {
            for (phase, &w) in spec.class(b).duration.init().iter().enumerate() {
                if w > 0.0 {
                    let mut next = in_service.clone();
                    next.push(JobState { class: b, phase });
                    admit(spec, next, None, weight * w, out);
                }
            }
        } else {
            *out.entry(SssState::normalized(in_service, Some(b)))
                .or_insert(0.0) += weight;
        }
        return;
    }
    if used >= spec.k() {
        *out.entry(SssState::normalized(in_service, None))
            .or_insert(0.0) += weight;
        return;
    }
    for (class, c) in spec.classes().iter().enumerate() {
        if used + c.need <= spec.k() {
            for (phase, &w) in c.duration.init().iter().enumerate() {
                if w > 0.0 {
                    let mut next = in_service.clone();
                    next.push(JobState { class, phase });
                    admit(spec, next, None, weight * c.prob * w, out);
                }
            }
        } else {
            *out.entry(SssState::normalized(in_service.clone(), Some(class)))
                .or_insert(0.0) += weight * c.prob;
        }
    }
}

/// Build the simplified saturated system's labeled CTMC.
pub fn build_sss_chain(spec: &WorkloadSpec, cap: usize) -> Result<LabeledCtmc> {
    let mut index: HashMap<SssState, usize> = HashMap::new();
    let mut states: Vec<SssState> = Vec::new();
    let intern = |state: SssState,
                      index: &mut HashMap<SssState, usize>,
                      states: &mut Vec<SssState>|
     -> Result<usize> {
        if let Some(&i) = index.get(&state) {
            return Ok(i);
        }
        if states.len() >= cap {
            return Err(Error::CapExceeded {
                reached: states.len(),
                cap,
            });
        }
        let i = states.len();
        index.insert(state.clone(), i);
        states.push(state);
        Ok(i)
    };

    let mut seeds: HashMap<SssState, f64> = HashMap::new();
    admit(spec, Vec::new(), None, 1.0, &mut seeds);
    let mut seed_states: Vec<SssState> = seeds.into_keys().collect();
    seed_states.sort_by_key(|s| s.canonical_encoding());
    for s in seed_states {
        intern(s, &mut index, &mut states)?;
    }

    let mut transitions: Vec<Vec<Transition>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let state = states[cursor].clone();
        let mut out: HashMap<(usize, u8), f64> = HashMap::new();
        for pos in 0..state.in_service.len() {
            let js = state.in_service[pos];
            let pt = &spec.class(js.class).duration;
            for (q, &r) in pt.subgen()[js.phase].iter().enumerate() {
                if q != js.phase && r > 0.0 {
                    let mut next = state.in_service.clone();
                    next[pos].phase = q;
                    let i = intern(
                        SssState::normalized(next, state.blocked),
                        &mut index,
                        &mut states,
                    )?;
                    *out.entry((i, 0)).or_insert(0.0) += r;
                }
            }
            let e = pt.exit()[js.phase];
            if e > 0.0 {
                let mut base = state.in_service.clone();
                base.remove(pos);
                let mut targets: HashMap<SssState, f64> = HashMap::new();
                admit(spec, base, state.blocked, 1.0, &mut targets);
                let mut targets: Vec<(SssState, f64)> = targets.into_iter().collect();
                targets.sort_by_key(|(s, _)| s.canonical_encoding());
                for (target, w) in targets {
                    let i = intern(target, &mut index, &mut states)?;
                    *out.entry((i, 1)).or_insert(0.0) += e * w;
                }
            }
        }
        let mut outs: Vec<Transition> = out
            .into_iter()
            .map(|((target, completions), rate)| Transition {
                target,
                completions,
                rate,
            })
            .collect();
        outs.sort_by_key(|t| (t.target, t.completions));
        transitions.push(outs);
        cursor += 1;
    }

    let labels = states.iter().map(|s| sss_label(spec, s)).collect();
    LabeledCtmc::from_parts(labels, transitions)
}

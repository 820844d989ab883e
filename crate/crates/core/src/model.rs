//! Simulation model types: states, annotated transitions and the delay laws
//! attached to them.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Tolerance for outgoing probability sums.
pub const PROBABILITY_EPSILON: f64 = 1e-9;

/// The only time unit a model may declare.
pub const TIME_UNIT: &str = "ms";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(String);

impl StateId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Nonempty and free of whitespace.
    pub fn is_well_formed(&self) -> bool {
        !self.0.is_empty() && !self.0.chars().any(char::is_whitespace)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Waiting-time law of one task, parameters in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayDistribution {
    Constant {
        value: f64,
    },
    Uniform {
        min: f64,
        max: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Normal law conditioned on `[0, inf)`.
    TruncatedNormal {
        mean: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{kind} has no closed-form moments")]
    UnsupportedDistribution { kind: &'static str },
}

impl DistributionError {
    pub fn code(&self) -> &'static str {
        match self {
            DistributionError::UnsupportedDistribution { .. } => "UnsupportedDistribution",
        }
    }
}

/// Mean and second raw moment of a delay or of a whole service time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMoments {
    pub mean: f64,
    pub second_moment: f64,
}

impl DelayDistribution {
    pub fn kind(&self) -> &'static str {
        match self {
            DelayDistribution::Constant { .. } => "constant",
            DelayDistribution::Uniform { .. } => "uniform",
            DelayDistribution::Exponential { .. } => "exponential",
            DelayDistribution::TruncatedNormal { .. } => "truncated_normal",
        }
    }

    /// Parameter names and values in canonical order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            DelayDistribution::Constant { value } => vec![("value", value)],
            DelayDistribution::Uniform { min, max } => vec![("min", min), ("max", max)],
            DelayDistribution::Exponential { mean } => vec![("mean", mean)],
            DelayDistribution::TruncatedNormal { mean, sd } => vec![("mean", mean), ("sd", sd)],
        }
    }

    /// Checks the parameter invariants, returning a human-readable reason on failure.
    pub fn check(&self) -> Result<(), String> {
        if let Some((name, _)) = self.params().into_iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{} parameter {name} is not finite", self.kind()));
        }
        match *self {
            DelayDistribution::Constant { value } if value < 0.0 => {
                Err(format!("constant value {value} is negative"))
            }
            DelayDistribution::Uniform { min, .. } if min < 0.0 => {
                Err(format!("uniform min {min} is negative"))
            }
            DelayDistribution::Uniform { min, max } if min > max => {
                Err(format!("uniform min {min} exceeds max {max}"))
            }
            DelayDistribution::Exponential { mean } if mean <= 0.0 => {
                Err(format!("exponential mean {mean} is not positive"))
            }
            DelayDistribution::TruncatedNormal { sd, .. } if sd < 0.0 => {
                Err(format!("truncated_normal sd {sd} is negative"))
            }
            // Rejection sampling needs a non-negligible mass on [0, inf).
            DelayDistribution::TruncatedNormal { mean, sd } if mean + 4.0 * sd < 0.0 => Err(
                format!("truncated_normal mean {mean} lies more than 4 sd below zero"),
            ),
            _ => Ok(()),
        }
    }

    /// Exact mean and second moment.
    pub fn moments(&self) -> Result<RawMoments, DistributionError> {
        let (mean, second_moment) = match *self {
            DelayDistribution::Constant { value } => (value, value * value),
            DelayDistribution::Uniform { min: a, max: b } => {
                ((a + b) / 2.0, (a * a + a * b + b * b) / 3.0)
            }
            DelayDistribution::Exponential { mean } => (mean, 2.0 * mean * mean),
            DelayDistribution::TruncatedNormal { .. } => {
                return Err(DistributionError::UnsupportedDistribution { kind: self.kind() })
            }
        };
        Ok(RawMoments {
            mean,
            second_moment,
        })
    }

    /// Smallest and largest attainable value; `f64::INFINITY` for unbounded laws.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DelayDistribution::Constant { value } => (value, value),
            DelayDistribution::Uniform { min, max } => (min, max),
            DelayDistribution::Exponential { .. } => (0.0, f64::INFINITY),
            DelayDistribution::TruncatedNormal { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Multiplies every time-valued parameter by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match *self {
            DelayDistribution::Constant { value } => {
                DelayDistribution::Constant { value: k * value }
            }
            DelayDistribution::Uniform { min, max } => DelayDistribution::Uniform {
                min: k * min,
                max: k * max,
            },
            DelayDistribution::Exponential { mean } => {
                DelayDistribution::Exponential { mean: k * mean }
            }
            DelayDistribution::TruncatedNormal { mean, sd } => DelayDistribution::TruncatedNormal {
                mean: k * mean,
                sd: k * sd,
            },
        }
    }
}

/// Renders as `Uniform(0,4)`, the notation used in generated scripts.
impl fmt::Display for DelayDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DelayDistribution::Constant { .. } => "Constant",
            DelayDistribution::Uniform { .. } => "Uniform",
            DelayDistribution::Exponential { .. } => "Exponential",
            DelayDistribution::TruncatedNormal { .. } => "TruncatedNormal",
        };
        let args: Vec<String> = self.params().iter().map(|(_, v)| fmt_f64(*v)).collect();
        write!(f, "{name}({})", args.join(","))
    }
}

/// Convenience wrapper around [`DelayDistribution::moments`].
pub fn distribution_moments(d: &DelayDistribution) -> Result<RawMoments, DistributionError> {
    d.moments()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub probability: f64,
    pub delay: DelayDistribution,
    pub label: Option<String>,
}

impl Transition {
    pub fn new(from: &str, to: &str, probability: f64, delay: DelayDistribution) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            probability,
            delay,
            label: None,
        }
    }
}

/// Delays added around the service time to form the response time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overheads {
    pub inbound: DelayDistribution,
    pub outbound: DelayDistribution,
}

/// A state graph annotated with branch probabilities and task delays.
///
/// `states` and `stop` keep declaration order and may hold duplicates until
/// validated. Transition order is semantic: it fixes the order in which branch
/// alternatives are tried everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct StsModel {
    pub name: String,
    pub states: Vec<StateId>,
    pub start: StateId,
    pub stop: Vec<StateId>,
    pub transitions: Vec<Transition>,
    pub overheads: Option<Overheads>,
}

impl StsModel {
    pub fn is_stop(&self, state: &StateId) -> bool {
        self.stop.contains(state)
    }

    /// Outgoing transitions of `state`, in document order.
    pub fn outgoing<'a>(&'a self, state: &'a StateId) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| &t.from == state)
    }

    /// Applies `f` to every service-transition delay. Overheads are untouched.
    pub fn map_delays(&self, f: impl Fn(&DelayDistribution) -> DelayDistribution) -> StsModel {
        let mut out = self.clone();
        for t in &mut out.transitions {
            t.delay = f(&t.delay);
        }
        out
    }
}

/// Index-based view of a model under run semantics: a run halts on entering a
/// stop state after at least one transition, so stop states other than the
/// start are never expanded and edges back into the start end the run.
#[derive(Debug)]
pub(crate) struct RunGraph {
    pub states: Vec<StateId>,
    pub start: usize,
    pub is_stop: Vec<bool>,
    /// Transition indices per state, document order.
    pub outgoing: Vec<Vec<usize>>,
    /// Target state index per transition, `None` when undeclared.
    pub target: Vec<Option<usize>>,
}

impl RunGraph {
    /// Returns `None` when the start state is undeclared.
    pub fn new(model: &StsModel) -> Option<Self> {
        let mut index = HashMap::new();
        let mut states = Vec::new();
        for s in &model.states {
            index.entry(s.clone()).or_insert_with(|| {
                states.push(s.clone());
                states.len() - 1
            });
        }
        let start = *index.get(&model.start)?;
        let is_stop = states.iter().map(|s| model.is_stop(s)).collect();
        let mut outgoing = vec![Vec::new(); states.len()];
        let mut target = Vec::with_capacity(model.transitions.len());
        for (i, t) in model.transitions.iter().enumerate() {
            if let Some(&from) = index.get(&t.from) {
                outgoing[from].push(i);
            }
            target.push(index.get(&t.to).copied());
        }
        Some(Self {
            states,
            start,
            is_stop,
            outgoing,
            target,
        })
    }

    /// Whether a run standing in `state` keeps going.
    pub fn is_transient(&self, state: usize) -> bool {
        state == self.start || !self.is_stop[state]
    }

    /// Whether entering `state` ends the run.
    pub fn ends_run(&self, state: usize) -> bool {
        self.is_stop[state]
    }

    /// Transient states reachable from the start, in discovery order.
    pub fn reachable_transient(&self) -> Vec<usize> {
        let mut seen = vec![false; self.states.len()];
        let mut order = vec![self.start];
        seen[self.start] = true;
        let mut next = 0;
        while next < order.len() {
            let s = order[next];
            next += 1;
            for &t in &self.outgoing[s] {
                if let Some(to) = self.target[t] {
                    if !seen[to] && !self.ends_run(to) {
                        seen[to] = true;
                        order.push(to);
                    }
                }
            }
        }
        order
    }

    /// For every state: can a run standing there still reach a stop state?
    pub fn can_reach_stop(&self) -> Vec<bool> {
        let n = self.states.len();
        let mut ok = vec![false; n];
        loop {
            let mut changed = false;
            for s in 0..n {
                if ok[s] || !self.is_transient(s) {
                    continue;
                }
                let hit = self.outgoing[s].iter().any(|&t| match self.target[t] {
                    Some(to) => self.ends_run(to) || ok[to],
                    None => false,
                });
                if hit {
                    ok[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return ok;
            }
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{x}")
}

//! Monte-Carlo execution of a simulation model in virtual time.
//!
//! One replication walks the state graph from the start state, drawing a
//! branch variate only at states with more than one outgoing transition and
//! summing the sampled delays, until it enters a stop state. This is the same
//! draw order a generated script follows, which is what lets
//! [`crate::codegen::interpret_ir`] reproduce runs bit for bit.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{DelayDistribution, StsModel, Transition};
use crate::rng::{RngStream, UnitSource};
use crate::stats::{summarize, SimulationSummary};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measure {
    #[default]
    Service,
    Response,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub runs: usize,
    pub seed: u64,
    pub max_steps: u64,
    pub measure: Measure,
    /// Worker threads; 0 picks automatically, 1 runs sequentially.
    pub threads: usize,
}

impl SimulationConfig {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            seed,
            max_steps: DEFAULT_MAX_STEPS,
            measure: Measure::Service,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// Zero-based replication index.
    pub index: usize,
    pub service_time: f64,
    pub response_time: f64,
    pub steps: u64,
}

impl RunRecord {
    pub fn value(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Service => self.service_time,
            Measure::Response => self.response_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("run did not reach a stop state within {max_steps} steps")]
    NonTermination { max_steps: u64 },
    #[error("state {state} has no outgoing transition")]
    DeadEnd { state: String },
    #[error("state {state} is not declared")]
    UndeclaredState { state: String },
}

impl RunError {
    pub fn code(&self) -> &'static str {
        match self {
            RunError::NonTermination { .. } => "NonTermination",
            RunError::DeadEnd { .. } => "DeadEnd",
            RunError::UndeclaredState { .. } => "UnknownState",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: RunError,
    },
    #[error(transparent)]
    Model(#[from] RunError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Replication { source, .. } | SimError::Model(source) => source.code(),
            SimError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

/// Draws one waiting time. Never negative.
pub fn sample_delay<R: UnitSource + ?Sized>(d: &DelayDistribution, rng: &mut R) -> f64 {
    match *d {
        DelayDistribution::Constant { value } => value,
        DelayDistribution::Uniform { min, max } => min + rng.next_unit() * (max - min),
        DelayDistribution::Exponential { mean } => {
            // abs() folds the -0.0 produced at u = 0
            mean * (1.0 - rng.next_unit()).ln().abs()
        }
        DelayDistribution::TruncatedNormal { mean, sd } => loop {
            let r = (-2.0 * (1.0 - rng.next_unit()).ln()).sqrt();
            let theta = TAU * rng.next_unit();
            for z in [r * theta.cos(), r * theta.sin()] {
                let x = mean + sd * z;
                if x >= 0.0 {
                    return x + 0.0;
                }
            }
        },
    }
}

/// Index of the first alternative whose cumulative probability exceeds `u`,
/// falling back to the last one when rounding leaves `u` past the total.
pub(crate) fn pick_cumulative(probabilities: impl IntoIterator<Item = f64>, u: f64) -> usize {
    let mut cumulative = 0.0;
    let mut last = 0;
    for (i, p) in probabilities.into_iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
        last = i;
    }
    last
}

/// Picks the next transition. A single alternative consumes no randomness.
///
/// # Panics
/// If `outgoing` is empty.
pub fn choose_transition<'t, R: UnitSource + ?Sized>(
    outgoing: &[&'t Transition],
    rng: &mut R,
) -> &'t Transition {
    assert!(
        !outgoing.is_empty(),
        "choose_transition needs at least one alternative"
    );
    if outgoing.len() == 1 {
        return outgoing[0];
    }
    let u = rng.next_unit();
    outgoing[pick_cumulative(outgoing.iter().map(|t| t.probability), u)]
}

/// A model flattened into per-state outgoing lists for repeated runs.
#[derive(Debug)]
pub struct Simulator<'m> {
    model: &'m StsModel,
    start: usize,
    names: Vec<&'m str>,
    is_stop: Vec<bool>,
    /// Per state: (transition, target index) in document order.
    outgoing: Vec<Vec<(&'m Transition, usize)>>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m StsModel) -> Result<Self, RunError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        for s in &model.states {
            index.entry(s.as_str()).or_insert_with(|| {
                names.push(s.as_str());
                names.len() - 1
            });
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| RunError::UndeclaredState {
                    state: id.to_string(),
                })
        };
        let start = lookup(model.start.as_str())?;
        let mut outgoing = vec![Vec::new(); names.len()];
        for t in &model.transitions {
            let from = lookup(t.from.as_str())?;
            outgoing[from].push((t, lookup(t.to.as_str())?));
        }
        let is_stop = names
            .iter()
            .map(|n| model.stop.iter().any(|s| s.as_str() == *n))
            .collect();
        Ok(Self {
            model,
            start,
            names,
            is_stop,
            outgoing,
        })
    }

    /// One replication. Overheads are drawn after the service path so the
    /// service-time draws match a generated script's.
    pub fn run<R: UnitSource + ?Sized>(
        &self,
        rng: &mut R,
        max_steps: u64,
    ) -> Result<RunRecord, RunError> {
        let mut state = self.start;
        let mut elapsed = 0.0;
        let mut steps = 0u64;
        loop {
            if steps >= 1 && self.is_stop[state] {
                break;
            }
            if steps >= max_steps {
                return Err(RunError::NonTermination { max_steps });
            }
            let out = &self.outgoing[state];
            let (t, to) = match out.len() {
                0 => {
                    return Err(RunError::DeadEnd {
                        state: self.names[state].to_string(),
                    })
                }
                1 => out[0],
                _ => out[pick_cumulative(out.iter().map(|(t, _)| t.probability), rng.next_unit())],
            };
            elapsed += sample_delay(&t.delay, rng);
            state = to;
            steps += 1;
        }
        let mut response = elapsed;
        if let Some(o) = &self.model.overheads {
            response += sample_delay(&o.inbound, rng);
            response += sample_delay(&o.outbound, rng);
        }
        Ok(RunRecord {
            index: 0,
            service_time: elapsed,
            response_time: response,
            steps,
        })
    }
}

pub fn simulate_run<R: UnitSource + ?Sized>(
    model: &StsModel,
    rng: &mut R,
    max_steps: u64,
) -> Result<RunRecord, RunError> {
    Simulator::new(model)?.run(rng, max_steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub records: Vec<RunRecord>,
    pub summary: SimulationSummary,
}

/// Runs `cfg.runs` independent replications. Replication `i` draws from
/// `RngStream::for_replication(cfg.seed, i)`, so the record list is the same
/// for every thread count.
pub fn simulate(model: &StsModel, cfg: &SimulationConfig) -> Result<SimulationOutput, SimError> {
    if cfg.runs == 0 {
        return Err(SimError::InvalidConfig("runs must be at least 1".into()));
    }
    if cfg.max_steps == 0 {
        return Err(SimError::InvalidConfig(
            "max_steps must be at least 1".into(),
        ));
    }
    let sim = Simulator::new(model)?;
    let one = |i: usize| {
        let mut rng = RngStream::for_replication(cfg.seed, i as u64);
        sim.run(&mut rng, cfg.max_steps)
            .map(|r| RunRecord { index: i, ..r })
    };

    let results: Vec<Result<RunRecord, RunError>> = if cfg.threads == 1 {
        (0..cfg.runs).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        pool.install(|| (0..cfg.runs).into_par_iter().map(one).collect())
    };

    let mut records = Vec::with_capacity(cfg.runs);
    for (index, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|source| SimError::Replication { index, source })?);
    }
    let values: Vec<f64> = records.iter().map(|r| r.value(cfg.measure)).collect();
    let summary = summarize(&values).expect("runs >= 1");
    Ok(SimulationOutput { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Overheads;
    use crate::testing::{creditadd, geometric_loop, two_state_chain, Scripted};

    #[test]
    fn degenerate_and_constant_delays() {
        let mut rng = RngStream::from_seed(3);
        assert_eq!(
            sample_delay(&DelayDistribution::Uniform { min: 1.0, max: 1.0 }, &mut rng),
            1.0
        );
        let before = rng.clone();
        assert_eq!(
            sample_delay(&DelayDistribution::Constant { value: 5.0 }, &mut rng),
            5.0
        );
        assert_eq!(rng, before);
    }

    #[test]
    fn uniform_uses_affine_draw() {
        let mut s = Scripted::new(&[0.25]);
        assert_eq!(
            sample_delay(&DelayDistribution::Uniform { min: 0.0, max: 4.0 }, &mut s),
            1.0
        );
        assert_eq!(s.used(), 1);
    }

    #[test]
    fn exponential_inverse_cdf() {
        let mut s = Scripted::new(&[0.0, 0.5]);
        let d = DelayDistribution::Exponential { mean: 2.0 };
        let zero = sample_delay(&d, &mut s);
        assert_eq!(zero.to_bits(), 0.0f64.to_bits());
        assert!((sample_delay(&d, &mut s) - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_rejects_negatives() {
        // u1 = 1 - e^-2 gives r = 2; theta = pi gives z = (-2, ~0)
        let u1 = 1.0 - (-2.0f64).exp();
        let mut s = Scripted::new(&[u1, 0.5, u1, 0.0]);
        let d = DelayDistribution::TruncatedNormal { mean: 1.0, sd: 1.0 };
        // first candidate 1 - 2 < 0 is rejected, second is 1 + 2 sin(pi)
        let x = sample_delay(&d, &mut s);
        assert!((x - 1.0).abs() < 1e-9);
        assert_eq!(s.used(), 2);

        let mut rng = RngStream::from_seed(11);
        let d = DelayDistribution::TruncatedNormal {
            mean: -1.0,
            sd: 1.0,
        };
        for _ in 0..10_000 {
            let before = rng.draws();
            assert!(sample_delay(&d, &mut rng) >= 0.0);
            assert!(rng.draws() - before >= 2);
        }
    }

    #[test]
    fn branch_selection() {
        let m = creditadd();
        let at = |s: &str| {
            m.transitions
                .iter()
                .filter(|t| t.from.as_str() == s)
                .collect::<Vec<_>>()
        };

        let mut s = Scripted::new(&[]);
        assert_eq!(choose_transition(&at("5"), &mut s).to.as_str(), "5a");
        assert_eq!(s.used(), 0);

        let mut s = Scripted::new(&[0.05, 0.1, 0.999_999]);
        assert_eq!(choose_transition(&at("5b"), &mut s).to.as_str(), "5c");
        assert_eq!(choose_transition(&at("5b"), &mut s).to.as_str(), "5d");
        assert_eq!(choose_transition(&at("5b"), &mut s).to.as_str(), "5d");
    }

    #[test]
    fn rounding_falls_back_to_last() {
        assert_eq!(pick_cumulative([0.3, 0.3, 0.3999999999], 0.99999999999), 2);
    }

    #[test]
    fn deterministic_chain() {
        let mut rng = RngStream::from_seed(0);
        let r = simulate_run(&two_state_chain(), &mut rng, 100).unwrap();
        assert_eq!((r.service_time, r.steps), (5.0, 2));
        assert_eq!(r.response_time, 5.0);
    }

    #[test]
    fn creditadd_support() {
        let m = creditadd();
        let sim = Simulator::new(&m).unwrap();
        for seed in 0..2000 {
            let r = sim.run(&mut RngStream::from_seed(seed), 100).unwrap();
            assert!((3.0..=24.0).contains(&r.service_time), "{r:?}");
            assert_eq!(r.steps, 4);
        }
    }

    #[test]
    fn non_termination() {
        let mut m = geometric_loop();
        // never leaves the loop
        m.transitions[0].probability = 1.0;
        m.transitions.truncate(1);
        let err = simulate_run(&m, &mut RngStream::from_seed(1), 10).unwrap_err();
        assert_eq!(err, RunError::NonTermination { max_steps: 10 });
    }

    #[test]
    fn dead_end() {
        let mut m = creditadd();
        m.transitions.retain(|t| t.from.as_str() != "5d");
        let sim = Simulator::new(&m).unwrap();
        let hit = (0..100).find_map(|s| sim.run(&mut RngStream::from_seed(s), 100).err());
        assert_eq!(hit, Some(RunError::DeadEnd { state: "5d".into() }));
    }

    #[test]
    fn failing_replication_is_annotated() {
        let cfg = SimulationConfig {
            max_steps: 1,
            ..SimulationConfig::new(50, 9)
        };
        match simulate(&geometric_loop(), &cfg) {
            Err(SimError::Replication { source, .. }) => {
                assert_eq!(source.code(), "NonTermination")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overheads_add_to_response() {
        let mut m = two_state_chain();
        m.overheads = Some(Overheads {
            inbound: DelayDistribution::Constant { value: 1.0 },
            outbound: DelayDistribution::Uniform { min: 2.0, max: 2.0 },
        });
        let cfg = SimulationConfig {
            measure: Measure::Response,
            ..SimulationConfig::new(3, 1)
        };
        let out = simulate(&m, &cfg).unwrap();
        assert_eq!(out.summary.mean, 8.0);
        assert!(out.records.iter().all(|r| r.service_time == 5.0));
    }

    #[test]
    fn single_run_summary() {
        let out = simulate(&two_state_chain(), &SimulationConfig::new(1, 0)).unwrap();
        let s = out.summary;
        assert_eq!((s.mean, s.min, s.max, s.std), (5.0, 5.0, 5.0, 0.0));
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let m = creditadd();
        let base = SimulationConfig::new(5000, 42);
        let seq = simulate(
            &m,
            &SimulationConfig {
                threads: 1,
                ..base.clone()
            },
        )
        .unwrap();
        for threads in [0, 2, 7] {
            let par = simulate(
                &m,
                &SimulationConfig {
                    threads,
                    ..base.clone()
                },
            )
            .unwrap();
            assert_eq!(par, seq);
        }
    }

    #[test]
    fn bad_config() {
        let err = simulate(&creditadd(), &SimulationConfig::new(0, 1)).unwrap_err();
        assert_eq!(err.code(), "InvalidConfig");
    }
}

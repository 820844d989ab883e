//! Exact service-time moments, path enumeration and delay calibration.
//!
//! Moments come from first-step analysis over the transient states of a run:
//!
//! ```text
//! E1[s] = sum_t p_t * (m1_t + E1[s'])
//! E2[s] = sum_t p_t * (m2_t + 2 * m1_t * E1[s'] + E2[s'])
//! ```
//!
//! with `E1 = E2 = 0` on stop states. When the start state is also a stop
//! state, edges back into it are treated as entering a separate terminal copy
//! (node splitting), which is exactly what the run semantics do anyway.
//!
//! Path enumeration is an independent route to the mean for acyclic models.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{DelayDistribution, RawMoments, RunGraph, StateId, StsModel};
use crate::validate::DelaySite;

/// Pivots smaller than this mark the system as singular.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

pub const DEFAULT_MAX_PATHS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{site} uses {kind}, which has no closed-form moments")]
    UnsupportedDistribution { site: DelaySite, kind: &'static str },
    #[error("no stop state is reachable from state {state}")]
    StopUnreachable { state: StateId },
    #[error("state {state} is not declared")]
    UnknownState { state: StateId },
    #[error("moment equations are singular")]
    SingularSystem,
    #[error("state {state} lies on a cycle")]
    CyclicModel { state: StateId },
    #[error("more than {limit} paths")]
    TooManyPaths { limit: usize },
    #[error("measured mean must be a positive finite number, got {value}")]
    InvalidMeasurement { value: f64 },
    #[error("analytic mean is zero; scaling cannot reach a positive target")]
    ZeroMean,
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::UnsupportedDistribution { .. } => "UnsupportedDistribution",
            AnalysisError::StopUnreachable { .. } => "StopUnreachable",
            AnalysisError::UnknownState { .. } => "UnknownState",
            AnalysisError::SingularSystem => "SingularSystem",
            AnalysisError::CyclicModel { .. } => "CyclicModel",
            AnalysisError::TooManyPaths { .. } => "TooManyPaths",
            AnalysisError::InvalidMeasurement { .. } => "InvalidMeasurement",
            AnalysisError::ZeroMean => "ZeroMean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub std: f64,
}

impl MomentReport {
    fn from_raw(mean: f64, second_moment: f64) -> Self {
        let variance = (second_moment - mean * mean).max(0.0);
        Self {
            mean,
            second_moment,
            variance,
            std: variance.sqrt(),
        }
    }
}

fn graph_of(model: &StsModel) -> Result<RunGraph, AnalysisError> {
    RunGraph::new(model).ok_or_else(|| AnalysisError::UnknownState {
        state: model.start.clone(),
    })
}

fn moments_of(site: DelaySite, d: &DelayDistribution) -> Result<RawMoments, AnalysisError> {
    d.moments()
        .map_err(|_| AnalysisError::UnsupportedDistribution {
            site,
            kind: d.kind(),
        })
}

pub fn expected_moments(model: &StsModel) -> Result<MomentReport, AnalysisError> {
    let graph = graph_of(model)?;
    let transient = graph.reachable_transient();
    let reaches = graph.can_reach_stop();
    if let Some(&s) = transient.iter().find(|&&s| !reaches[s]) {
        return Err(AnalysisError::StopUnreachable {
            state: graph.states[s].clone(),
        });
    }

    let row: HashMap<usize, usize> = transient.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = transient.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b1 = vec![0.0; n];
    // (row, probability, moments, target row if transient)
    let mut edges = Vec::new();
    for (i, &s) in transient.iter().enumerate() {
        a[i][i] = 1.0;
        for &t in &graph.outgoing[s] {
            let tr = &model.transitions[t];
            let to = graph.target[t].ok_or_else(|| AnalysisError::UnknownState {
                state: tr.to.clone(),
            })?;
            let m = moments_of(DelaySite::Transition(t), &tr.delay)?;
            let next = if graph.ends_run(to) {
                None
            } else {
                Some(row[&to])
            };
            if let Some(j) = next {
                a[i][j] -= tr.probability;
            }
            b1[i] += tr.probability * m.mean;
            edges.push((i, tr.probability, m, next));
        }
    }

    let lu = Lu::factor(a)?;
    let e1 = lu.solve(b1);
    let mut b2 = vec![0.0; n];
    for &(i, p, m, next) in &edges {
        let after = next.map_or(0.0, |j| e1[j]);
        b2[i] += p * (m.second_moment + 2.0 * m.mean * after);
    }
    let e2 = lu.solve(b2);
    let start = row[&graph.start];
    Ok(MomentReport::from_raw(e1[start], e2[start]))
}

/// Moments of inbound overhead + service time + outbound overhead, the three
/// being independent. Equals `service` when the model has no overheads.
pub fn response_moments(
    model: &StsModel,
    service: &MomentReport,
) -> Result<MomentReport, AnalysisError> {
    let Some(o) = &model.overheads else {
        return Ok(*service);
    };
    let mut mean = service.mean;
    let mut variance = service.variance;
    for (site, d) in [
        (DelaySite::OverheadIn, &o.inbound),
        (DelaySite::OverheadOut, &o.outbound),
    ] {
        let m = moments_of(site, d)?;
        mean += m.mean;
        variance += (m.second_moment - m.mean * m.mean).max(0.0);
    }
    Ok(MomentReport {
        mean,
        second_moment: variance + mean * mean,
        variance,
        std: variance.sqrt(),
    })
}

/// Dense LU factorization with partial pivoting.
struct Lu {
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<Vec<f64>>) -> Result<Self, AnalysisError> {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
                .expect("nonempty");
            if a[p][k].abs() < PIVOT_THRESHOLD {
                return Err(AnalysisError::SingularSystem);
            }
            a.swap(k, p);
            perm.swap(k, p);
            let (upper, lower) = a.split_at_mut(k + 1);
            let pivot_row = &upper[k];
            for row in lower {
                let f = row[k] / pivot_row[k];
                row[k] = f;
                if f != 0.0 {
                    for (x, &y) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                        *x -= f * y;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    fn solve(&self, b: Vec<f64>) -> Vec<f64> {
        let n = self.lu.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPath {
    pub probability: f64,
    pub mean: f64,
    pub min: f64,
    /// `f64::INFINITY` when an unbounded delay lies on the path.
    pub max: f64,
    /// Visited states, ending with the stop state entered.
    pub states: Vec<StateId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnumeration {
    pub paths: Vec<ExecutionPath>,
    pub aggregate_mean: f64,
    pub support_min: f64,
    pub support_max: f64,
}

/// Enumerates every start-to-stop path depth first, in document order.
pub fn enumerate_paths(
    model: &StsModel,
    max_paths: usize,
) -> Result<PathEnumeration, AnalysisError> {
    let graph = graph_of(model)?;
    let mut walk = PathWalk {
        model,
        graph: &graph,
        max_paths,
        on_path: vec![false; graph.states.len()],
        trail: vec![graph.start],
        paths: Vec::new(),
    };
    walk.visit(graph.start, 1.0, 0.0, 0.0, 0.0)?;
    let paths = walk.paths;
    let aggregate_mean = paths.iter().map(|p| p.probability * p.mean).sum();
    let support_min = paths.iter().map(|p| p.min).fold(f64::INFINITY, f64::min);
    let support_max = paths
        .iter()
        .map(|p| p.max)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PathEnumeration {
        paths,
        aggregate_mean,
        support_min,
        support_max,
    })
}

struct PathWalk<'a> {
    model: &'a StsModel,
    graph: &'a RunGraph,
    max_paths: usize,
    on_path: Vec<bool>,
    trail: Vec<usize>,
    paths: Vec<ExecutionPath>,
}

impl PathWalk<'_> {
    fn visit(
        &mut self,
        s: usize,
        prob: f64,
        mean: f64,
        lo: f64,
        hi: f64,
    ) -> Result<(), AnalysisError> {
        let graph = self.graph;
        if graph.outgoing[s].is_empty() {
            return Err(AnalysisError::StopUnreachable {
                state: graph.states[s].clone(),
            });
        }
        self.on_path[s] = true;
        for &t in &graph.outgoing[s] {
            let tr = &self.model.transitions[t];
            let to = graph.target[t].ok_or_else(|| AnalysisError::UnknownState {
                state: tr.to.clone(),
            })?;
            let m = moments_of(DelaySite::Transition(t), &tr.delay)?;
            let (dlo, dhi) = tr.delay.support();
            let (p, mu, a, b) = (prob * tr.probability, mean + m.mean, lo + dlo, hi + dhi);
            self.trail.push(to);
            if graph.ends_run(to) {
                if self.paths.len() == self.max_paths {
                    return Err(AnalysisError::TooManyPaths {
                        limit: self.max_paths,
                    });
                }
                let states = self
                    .trail
                    .iter()
                    .map(|&i| graph.states[i].clone())
                    .collect();
                self.paths.push(ExecutionPath {
                    probability: p,
                    mean: mu,
                    min: a,
                    max: b,
                    states,
                });
            } else if self.on_path[to] {
                return Err(AnalysisError::CyclicModel {
                    state: graph.states[to].clone(),
                });
            } else {
                self.visit(to, p, mu, a, b)?;
            }
            self.trail.pop();
        }
        self.on_path[s] = false;
        Ok(())
    }
}

/// Factor that maps the model's analytic mean onto `measured_mean`.
pub fn calibration_factor(model: &StsModel, measured_mean: f64) -> Result<f64, AnalysisError> {
    if !(measured_mean.is_finite() && measured_mean > 0.0) {
        return Err(AnalysisError::InvalidMeasurement {
            value: measured_mean,
        });
    }
    let current = expected_moments(model)?.mean;
    if current <= 0.0 {
        return Err(AnalysisError::ZeroMean);
    }
    Ok(measured_mean / current)
}

/// Scales every transition delay so the analytic mean service time equals
/// `measured_mean`. Overheads are left alone.
pub fn calibrate(model: &StsModel, measured_mean: f64) -> Result<StsModel, AnalysisError> {
    let k = calibration_factor(model, measured_mean)?;
    Ok(model.map_delays(|d| d.scaled(k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Overheads, Transition};
    use crate::testing::{
        constant, creditadd, geometric_loop, single_transition, two_state_chain, uniform,
    };

    // Exact values: mean 73/5, second moment 13613/60, variance 4117/300.
    const CREDITADD_MEAN: f64 = 14.6;
    const CREDITADD_SECOND: f64 = 13613.0 / 60.0;
    const CREDITADD_STD: f64 = 3.704501765869917;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn creditadd_moments() {
        let r = expected_moments(&creditadd()).unwrap();
        assert!(rel(r.mean, CREDITADD_MEAN) < 1e-12, "{r:?}");
        assert!(rel(r.second_moment, CREDITADD_SECOND) < 1e-12, "{r:?}");
        assert!(rel(r.std, CREDITADD_STD) < 1e-12, "{r:?}");
    }

    #[test]
    fn geometric_loop_moments() {
        // N ~ Geometric(1/2) on {1, 2, ...}: E[N] = 2, E[N^2] = 6
        let r = expected_moments(&geometric_loop()).unwrap();
        assert!((r.mean - 2.0).abs() < 1e-12);
        assert!((r.second_moment - 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_transition_moments() {
        let r = expected_moments(&single_transition(7.0)).unwrap();
        assert_eq!((r.mean, r.std), (7.0, 0.0));
    }

    #[test]
    fn rejects_truncated_normal() {
        let mut m = creditadd();
        m.transitions[3].delay = DelayDistribution::TruncatedNormal { mean: 1.0, sd: 0.2 };
        let e = expected_moments(&m).unwrap_err();
        assert_eq!(
            e,
            AnalysisError::UnsupportedDistribution {
                site: DelaySite::Transition(3),
                kind: "truncated_normal"
            }
        );
    }

    #[test]
    fn stranded_state() {
        let mut m = creditadd();
        m.transitions.retain(|t| t.from.as_str() != "5d");
        assert_eq!(
            expected_moments(&m).unwrap_err(),
            AnalysisError::StopUnreachable { state: "5d".into() }
        );
    }

    #[test]
    fn singular_pivot() {
        let lu = Lu::factor(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(lu, Err(AnalysisError::SingularSystem)));
    }

    #[test]
    fn node_split_is_noop_without_reentry() {
        // CreditAdd with an explicit terminal copy of the start state
        let mut m = creditadd();
        m.states.push("5'".into());
        m.stop = vec!["5'".into()];
        for t in &mut m.transitions {
            if t.to.as_str() == "5" {
                t.to = "5'".into();
            }
        }
        assert_eq!(
            expected_moments(&m).unwrap(),
            expected_moments(&creditadd()).unwrap()
        );
    }

    #[test]
    fn creditadd_paths() {
        let e = enumerate_paths(&creditadd(), DEFAULT_MAX_PATHS).unwrap();
        assert_eq!(e.paths.len(), 2);
        let names = |p: &ExecutionPath| {
            p.states
                .iter()
                .map(|s| s.as_str().to_string())
                .collect::<Vec<_>>()
        };
        let (a, b) = (&e.paths[0], &e.paths[1]);
        assert_eq!((a.probability, a.mean, a.min, a.max), (0.1, 6.5, 3.0, 10.0));
        assert_eq!(names(a), ["5", "5a", "5b", "5c", "5"]);
        assert_eq!(
            (b.probability, b.mean, b.min, b.max),
            (0.9, 15.5, 7.0, 24.0)
        );
        assert_eq!(names(b), ["5", "5a", "5b", "5d", "5"]);
        assert!(rel(e.aggregate_mean, CREDITADD_MEAN) < 1e-12);
        assert_eq!((e.support_min, e.support_max), (3.0, 24.0));
    }

    #[test]
    fn path_errors() {
        assert!(matches!(
            enumerate_paths(&geometric_loop(), 10),
            Err(AnalysisError::CyclicModel { .. })
        ));
        assert!(matches!(
            enumerate_paths(&creditadd(), 1),
            Err(AnalysisError::TooManyPaths { limit: 1 })
        ));
        let e = enumerate_paths(&single_transition(3.0), 10).unwrap();
        assert_eq!(e.paths.len(), 1);
        assert_eq!(e.paths[0].probability, 1.0);
    }

    #[test]
    fn unbounded_support_propagates() {
        let mut m = two_state_chain();
        m.transitions[0].delay = DelayDistribution::Exponential { mean: 1.0 };
        let e = enumerate_paths(&m, 10).unwrap();
        assert_eq!(e.support_max, f64::INFINITY);
        assert_eq!(e.support_min, 3.0);
    }

    #[test]
    fn calibration_doubles_creditadd() {
        let scaled = calibrate(&creditadd(), 29.2).unwrap();
        let bounds: Vec<(f64, f64)> = scaled
            .transitions
            .iter()
            .map(|t| match t.delay {
                DelayDistribution::Uniform { min, max } => (min, max),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(
            bounds,
            [
                (0.0, 8.0),
                (2.0, 8.0),
                (2.0, 2.0),
                (2.0, 2.0),
                (8.0, 14.0),
                (4.0, 18.0)
            ]
        );
        assert!(rel(expected_moments(&scaled).unwrap().mean, 29.2) < 1e-9);
    }

    #[test]
    fn calibration_identity_and_errors() {
        let m = creditadd();
        let mean = expected_moments(&m).unwrap().mean;
        assert_eq!(calibrate(&m, mean).unwrap(), m);
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert_eq!(calibrate(&m, bad).unwrap_err().code(), "InvalidMeasurement");
        }
        assert_eq!(
            calibrate(&single_transition(0.0), 5.0).unwrap_err(),
            AnalysisError::ZeroMean
        );
    }

    #[test]
    fn calibration_leaves_overheads() {
        let mut m = creditadd();
        let o = Overheads {
            inbound: constant(1.0),
            outbound: uniform(0.0, 2.0),
        };
        m.overheads = Some(o);
        assert_eq!(calibrate(&m, 7.3).unwrap().overheads, Some(o));
        let svc = expected_moments(&m).unwrap();
        let resp = response_moments(&m, &svc).unwrap();
        assert!(rel(resp.mean, 16.6) < 1e-12);
        assert!(rel(resp.variance, svc.variance + 1.0 / 3.0) < 1e-12);
    }

    #[test]
    fn enlarging_uniform_raises_mean() {
        let base = expected_moments(&creditadd()).unwrap().mean;
        for i in 0..6 {
            let mut m = creditadd();
            if let DelayDistribution::Uniform { ref mut max, .. } = m.transitions[i].delay {
                *max += 0.5;
            }
            assert!(expected_moments(&m).unwrap().mean > base, "transition {i}");
        }
    }

    #[test]
    fn three_state_cycle_matches_closed_form() {
        // a -> b (c 1); b -> a (p .25, c 2) | end (p .75, c 3)
        // E_b = .25 (2 + E_a) + .75 * 3, E_a = 1 + E_b  =>  E_a = 5
        let m = StsModel {
            name: "cyc".into(),
            states: vec!["a".into(), "b".into(), "end".into()],
            start: "a".into(),
            stop: vec!["end".into()],
            transitions: vec![
                Transition::new("a", "b", 1.0, constant(1.0)),
                Transition::new("b", "a", 0.25, constant(2.0)),
                Transition::new("b", "end", 0.75, constant(3.0)),
            ],
            overheads: None,
        };
        let r = expected_moments(&m).unwrap();
        assert!((r.mean - 5.0).abs() < 1e-12);
    }
}

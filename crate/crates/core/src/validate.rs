//! Semantic checks on a parsed model. Problems are collected, never thrown.

use std::collections::HashSet;
use std::fmt;

use crate::model::{RunGraph, StateId, StsModel, PROBABILITY_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Where a delay distribution sits in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelaySite {
    /// Index into `StsModel::transitions`.
    Transition(usize),
    OverheadIn,
    OverheadOut,
}

impl fmt::Display for DelaySite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelaySite::Transition(i) => write!(f, "transition #{}", i + 1),
            DelaySite::OverheadIn => f.write_str("inbound overhead"),
            DelaySite::OverheadOut => f.write_str("outbound overhead"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FindingCode {
    ProbabilitySum {
        state: StateId,
        actual: f64,
    },
    InvalidProbability {
        transition: usize,
        value: f64,
    },
    UnknownState {
        id: StateId,
    },
    DuplicateState {
        id: StateId,
    },
    InvalidStateId {
        id: StateId,
    },
    StartUndeclared {
        id: StateId,
    },
    EmptyStop,
    StopUnreachable {
        state: StateId,
    },
    NoOutgoing {
        state: StateId,
    },
    InvalidDistribution {
        site: DelaySite,
        reason: String,
    },
    UnreachableState {
        state: StateId,
    },
    /// Leaves a stop state other than the start, so it can never fire.
    DeadTransition {
        transition: usize,
    },
}

impl FindingCode {
    pub fn name(&self) -> &'static str {
        match self {
            FindingCode::ProbabilitySum { .. } => "ProbabilitySum",
            FindingCode::InvalidProbability { .. } => "InvalidProbability",
            FindingCode::UnknownState { .. } => "UnknownState",
            FindingCode::DuplicateState { .. } => "DuplicateState",
            FindingCode::InvalidStateId { .. } => "InvalidStateId",
            FindingCode::StartUndeclared { .. } => "StartUndeclared",
            FindingCode::EmptyStop => "EmptyStop",
            FindingCode::StopUnreachable { .. } => "StopUnreachable",
            FindingCode::NoOutgoing { .. } => "NoOutgoing",
            FindingCode::InvalidDistribution { .. } => "InvalidDistribution",
            FindingCode::UnreachableState { .. } => "UnreachableState",
            FindingCode::DeadTransition { .. } => "DeadTransition",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub message: String,
    pub location: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}] {}: {}",
            self.severity,
            self.code.name(),
            self.location,
            self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn has_code(&self, name: &str) -> bool {
        self.findings.iter().any(|f| f.code.name() == name)
    }
}

struct Collector(Vec<Finding>);

impl Collector {
    fn error(&mut self, code: FindingCode, location: String, message: String) {
        self.0.push(Finding {
            severity: Severity::Error,
            code,
            message,
            location,
        });
    }

    fn warn(&mut self, code: FindingCode, location: String, message: String) {
        self.0.push(Finding {
            severity: Severity::Warning,
            code,
            message,
            location,
        });
    }
}

fn transition_location(model: &StsModel, i: usize) -> String {
    let t = &model.transitions[i];
    format!("transition #{} ({} -> {})", i + 1, t.from, t.to)
}

pub fn validate(model: &StsModel) -> ValidationReport {
    let mut out = Collector(Vec::new());

    let mut declared = HashSet::new();
    for s in &model.states {
        if !s.is_well_formed() {
            out.error(
                FindingCode::InvalidStateId { id: s.clone() },
                format!("state '{s}'"),
                "state ids must be nonempty and contain no whitespace".into(),
            );
        }
        if !declared.insert(s) {
            out.error(
                FindingCode::DuplicateState { id: s.clone() },
                format!("state {s}"),
                "state declared more than once".into(),
            );
        }
    }

    if !declared.contains(&model.start) {
        out.error(
            FindingCode::StartUndeclared {
                id: model.start.clone(),
            },
            "sts@start".into(),
            format!("start state {} is not declared", model.start),
        );
    }
    if model.stop.is_empty() {
        out.error(
            FindingCode::EmptyStop,
            "sts@stop".into(),
            "at least one stop state is required".into(),
        );
    }
    for s in &model.stop {
        if !declared.contains(s) {
            out.error(
                FindingCode::UnknownState { id: s.clone() },
                "sts@stop".into(),
                format!("stop state {s} is not declared"),
            );
        }
    }

    for (i, t) in model.transitions.iter().enumerate() {
        for end in [&t.from, &t.to] {
            if !declared.contains(end) {
                out.error(
                    FindingCode::UnknownState { id: end.clone() },
                    transition_location(model, i),
                    format!("state {end} is not declared"),
                );
            }
        }
        if !(t.probability > 0.0 && t.probability <= 1.0) {
            out.error(
                FindingCode::InvalidProbability {
                    transition: i,
                    value: t.probability,
                },
                transition_location(model, i),
                format!("probability {} is outside (0, 1]", t.probability),
            );
        }
        if let Err(reason) = t.delay.check() {
            out.error(
                FindingCode::InvalidDistribution {
                    site: DelaySite::Transition(i),
                    reason: reason.clone(),
                },
                transition_location(model, i),
                reason,
            );
        }
    }

    if let Some(o) = &model.overheads {
        for (site, d, loc) in [
            (DelaySite::OverheadIn, &o.inbound, "overhead/in"),
            (DelaySite::OverheadOut, &o.outbound, "overhead/out"),
        ] {
            if let Err(reason) = d.check() {
                out.error(
                    FindingCode::InvalidDistribution {
                        site,
                        reason: reason.clone(),
                    },
                    loc.into(),
                    reason,
                );
            }
        }
    }

    // Probability sums, per declared state with outgoing transitions.
    let mut seen = HashSet::new();
    for s in &model.states {
        if !seen.insert(s) {
            continue;
        }
        let mut any = false;
        let mut sum = 0.0;
        for t in model.outgoing(s) {
            any = true;
            sum += t.probability;
        }
        if any && (sum - 1.0).abs() > PROBABILITY_EPSILON {
            out.error(
                FindingCode::ProbabilitySum {
                    state: s.clone(),
                    actual: sum,
                },
                format!("state {s}"),
                format!("outgoing probabilities sum to {sum}, expected 1"),
            );
        }
    }

    if let Some(graph) = RunGraph::new(model) {
        check_termination(model, &graph, &mut out);
    }

    let ok = !out.0.iter().any(|f| f.severity == Severity::Error);
    ValidationReport {
        ok,
        findings: out.0,
    }
}

fn check_termination(model: &StsModel, graph: &RunGraph, out: &mut Collector) {
    let reachable = graph.reachable_transient();
    let reaches_stop = graph.can_reach_stop();
    for &s in &reachable {
        let id = &graph.states[s];
        if graph.outgoing[s].is_empty() {
            out.error(
                FindingCode::NoOutgoing { state: id.clone() },
                format!("state {id}"),
                "reachable non-stop state has no outgoing transition".into(),
            );
        }
        if !reaches_stop[s] {
            out.error(
                FindingCode::StopUnreachable { state: id.clone() },
                format!("state {id}"),
                "no stop state is reachable from here".into(),
            );
        }
    }

    // Visited: reachable transient states plus the stop states they enter.
    let mut visited = vec![false; graph.states.len()];
    for &s in &reachable {
        visited[s] = true;
        for &t in &graph.outgoing[s] {
            if let Some(to) = graph.target[t] {
                visited[to] = true;
            }
        }
    }
    for (s, id) in graph.states.iter().enumerate() {
        if !visited[s] {
            out.warn(
                FindingCode::UnreachableState { state: id.clone() },
                format!("state {id}"),
                "state is never visited by a run".into(),
            );
        }
        if s != graph.start && graph.is_stop[s] {
            for &t in &graph.outgoing[s] {
                out.warn(
                    FindingCode::DeadTransition { transition: t },
                    transition_location(model, t),
                    format!("leaves stop state {id}, where every run has already ended"),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DelayDistribution, Transition};
    use crate::testing::creditadd;

    fn codes(r: &ValidationReport) -> Vec<&'static str> {
        r.findings.iter().map(|f| f.code.name()).collect()
    }

    #[test]
    fn creditadd_is_clean() {
        let r = validate(&creditadd());
        assert!(r.ok);
        assert!(r.findings.is_empty(), "{:?}", r.findings);
    }

    #[test]
    fn probability_sum_is_reported() {
        let mut m = creditadd();
        m.transitions[4].probability = 0.8;
        let r = validate(&m);
        assert!(!r.ok);
        let f = r.errors().next().unwrap();
        match &f.code {
            FindingCode::ProbabilitySum { state, actual } => {
                assert_eq!(state.as_str(), "5b");
                assert!((actual - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(codes(&r), vec!["ProbabilitySum"]);
    }

    #[test]
    fn deleted_return_edge_strands_state() {
        let mut m = creditadd();
        m.transitions
            .retain(|t| !(t.from.as_str() == "5d" && t.to.as_str() == "5"));
        let r = validate(&m);
        assert!(!r.ok);
        let errs: Vec<_> = r.errors().map(|f| f.code.clone()).collect();
        assert!(errs.contains(&FindingCode::StopUnreachable { state: "5d".into() }));
        assert!(errs.contains(&FindingCode::NoOutgoing { state: "5d".into() }));
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn unknown_and_duplicate_states() {
        let mut m = creditadd();
        m.states.push("5a".into());
        m.transitions.push(Transition::new(
            "5c",
            "ghost",
            1.0,
            DelayDistribution::Constant { value: 1.0 },
        ));
        let r = validate(&m);
        let c = codes(&r);
        assert!(c.contains(&"DuplicateState"));
        assert!(c.contains(&"UnknownState"));
        // 5c now sums to 2
        assert!(c.contains(&"ProbabilitySum"));
    }

    #[test]
    fn start_and_stop_must_be_declared() {
        let mut m = creditadd();
        m.start = "nope".into();
        m.stop = vec!["5".into(), "gone".into()];
        let c = codes(&validate(&m));
        assert!(c.contains(&"StartUndeclared"));
        assert!(c.contains(&"UnknownState"));

        let mut m = creditadd();
        m.stop.clear();
        assert!(codes(&validate(&m)).contains(&"EmptyStop"));
    }

    #[test]
    fn bad_probability_and_distribution() {
        let mut m = creditadd();
        m.transitions[0].probability = 1.5;
        m.transitions[1].delay = DelayDistribution::Uniform { min: 4.0, max: 1.0 };
        let r = validate(&m);
        let c = codes(&r);
        assert!(c.contains(&"InvalidProbability"));
        assert!(c.contains(&"InvalidDistribution"));
        assert!(r.findings.iter().any(|f| f.code
            == FindingCode::InvalidDistribution {
                site: DelaySite::Transition(1),
                reason: "uniform min 4 exceeds max 1".into()
            }));
    }

    #[test]
    fn start_in_stop_without_exit_is_a_dead_end() {
        let m = StsModel {
            name: "lonely".into(),
            states: vec!["a".into()],
            start: "a".into(),
            stop: vec!["a".into()],
            transitions: vec![],
            overheads: None,
        };
        let c = codes(&validate(&m));
        assert!(c.contains(&"NoOutgoing"));
        assert!(c.contains(&"StopUnreachable"));
    }

    #[test]
    fn warnings_do_not_fail_validation() {
        let mut m = creditadd();
        m.states.push("island".into());
        m.stop.push("5c".into());
        let r = validate(&m);
        assert!(r.ok, "{:?}", r.findings);
        let c = codes(&r);
        assert!(c.contains(&"UnreachableState"));
        assert!(c.contains(&"DeadTransition"));
    }

    #[test]
    fn validation_is_pure() {
        let mut m = creditadd();
        m.transitions[2].probability = 0.3;
        let before = m.clone();
        assert_eq!(validate(&m), validate(&m));
        assert_eq!(m, before);
    }
}

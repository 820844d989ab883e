//! Model builders and a scripted variate source for unit tests.

use crate::model::{DelayDistribution, StsModel, Transition};
use crate::rng::UnitSource;

pub fn uniform(min: f64, max: f64) -> DelayDistribution {
    DelayDistribution::Uniform { min, max }
}

pub fn constant(value: f64) -> DelayDistribution {
    DelayDistribution::Constant { value }
}

fn model(
    name: &str,
    states: &[&str],
    start: &str,
    stop: &[&str],
    transitions: Vec<Transition>,
) -> StsModel {
    StsModel {
        name: name.into(),
        states: states.iter().map(|s| (*s).into()).collect(),
        start: start.into(),
        stop: stop.iter().map(|s| (*s).into()).collect(),
        transitions,
        overheads: None,
    }
}

/// The CreditAdd operation: two linear steps, then a 0.1 / 0.9 branch whose
/// arms both return to the start state.
pub fn creditadd() -> StsModel {
    model(
        "CreditAdd",
        &["5", "5a", "5b", "5c", "5d"],
        "5",
        &["5"],
        vec![
            Transition::new("5", "5a", 1.0, uniform(0.0, 4.0)),
            Transition::new("5a", "5b", 1.0, uniform(1.0, 4.0)),
            Transition::new("5b", "5c", 0.1, uniform(1.0, 1.0)),
            Transition::new("5c", "5", 1.0, uniform(1.0, 1.0)),
            Transition::new("5b", "5d", 0.9, uniform(4.0, 7.0)),
            Transition::new("5d", "5", 1.0, uniform(2.0, 9.0)),
        ],
    )
}

/// start -> a (constant 2) -> end (constant 3).
pub fn two_state_chain() -> StsModel {
    model(
        "chain",
        &["start", "a", "end"],
        "start",
        &["end"],
        vec![
            Transition::new("start", "a", 1.0, constant(2.0)),
            Transition::new("a", "end", 1.0, constant(3.0)),
        ],
    )
}

/// Self-loop with probability 0.5; every step costs 1 ms.
pub fn geometric_loop() -> StsModel {
    model(
        "loop",
        &["A", "done"],
        "A",
        &["done"],
        vec![
            Transition::new("A", "A", 0.5, constant(1.0)),
            Transition::new("A", "done", 0.5, constant(1.0)),
        ],
    )
}

pub fn single_transition(value: f64) -> StsModel {
    model(
        "single",
        &["s", "t"],
        "s",
        &["t"],
        vec![Transition::new("s", "t", 1.0, constant(value))],
    )
}

/// Replays a fixed list of variates, panicking when it runs out.
pub struct Scripted {
    values: Vec<f64>,
    next: usize,
}

impl Scripted {
    pub fn new(values: &[f64]) -> Self {
        Self {
            values: values.to_vec(),
            next: 0,
        }
    }

    pub fn used(&self) -> usize {
        self.next
    }
}

impl UnitSource for Scripted {
    fn next_unit(&mut self) -> f64 {
        let v = *self
            .values
            .get(self.next)
            .expect("scripted variates exhausted");
        self.next += 1;
        v
    }
}

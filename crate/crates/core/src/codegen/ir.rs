use thiserror::Error;

use crate::model::{DelayDistribution, RunGraph, StateId, StsModel, PROBABILITY_EPSILON};
use crate::rng::UnitSource;
use crate::sim::{pick_cumulative, sample_delay};

/// Inlining budget for generated programs.
pub const MAX_STATEMENTS: usize = 100_000;

pub type Block = Vec<Stmt>;

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Delay(DelayDistribution),
    Branch(Vec<Case>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub probability: f64,
    pub body: Block,
}

/// Target-neutral form of a generated simulation script.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimProgram {
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("state {state} lies on a cycle; only acyclic models can be generated")]
    CyclicModel { state: StateId },
    #[error("program exceeds {limit} statements")]
    IrTooLarge { limit: usize },
    #[error("state {state} is not declared")]
    UnknownState { state: StateId },
    #[error("state {state} has no outgoing transition")]
    NoOutgoing { state: StateId },
}

impl IrError {
    pub fn code(&self) -> &'static str {
        match self {
            IrError::CyclicModel { .. } => "CyclicModel",
            IrError::IrTooLarge { .. } => "IrTooLarge",
            IrError::UnknownState { .. } => "UnknownState",
            IrError::NoOutgoing { .. } => "NoOutgoing",
        }
    }
}

impl SimProgram {
    /// Total statement count, nested ones included.
    pub fn len(&self) -> usize {
        fn count(b: &Block) -> usize {
            b.iter()
                .map(|s| match s {
                    Stmt::Delay(_) => 1,
                    Stmt::Branch(cases) => 1 + cases.iter().map(|c| count(&c.body)).sum::<usize>(),
                })
                .sum()
        }
        count(&self.body)
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    /// Checks branch arity, probability sums and delay parameters.
    pub fn check(&self) -> Result<(), String> {
        fn walk(b: &Block) -> Result<(), String> {
            for s in b {
                match s {
                    Stmt::Delay(d) => d.check()?,
                    Stmt::Branch(cases) => {
                        if cases.len() < 2 {
                            return Err("branch with fewer than two cases".into());
                        }
                        let sum: f64 = cases.iter().map(|c| c.probability).sum();
                        if (sum - 1.0).abs() > PROBABILITY_EPSILON {
                            return Err(format!("branch probabilities sum to {sum}"));
                        }
                        for c in cases {
                            walk(&c.body)?;
                        }
                    }
                }
            }
            Ok(())
        }
        walk(&self.body)
    }
}

/// Unrolls the model from its start state into straight-line delays and
/// nested branches. Each branch case carries its whole suffix up to a stop
/// state, so shared suffixes are duplicated.
pub fn build_ir(model: &StsModel) -> Result<SimProgram, IrError> {
    let graph = RunGraph::new(model).ok_or_else(|| IrError::UnknownState {
        state: model.start.clone(),
    })?;
    let mut builder = Builder {
        model,
        graph: &graph,
        on_path: vec![false; graph.states.len()],
        emitted: 0,
    };
    let mut body = Vec::new();
    builder.emit(graph.start, &mut body)?;
    Ok(SimProgram { body })
}

struct Builder<'a> {
    model: &'a StsModel,
    graph: &'a RunGraph,
    on_path: Vec<bool>,
    emitted: usize,
}

impl Builder<'_> {
    fn bump(&mut self) -> Result<(), IrError> {
        self.emitted += 1;
        if self.emitted > MAX_STATEMENTS {
            return Err(IrError::IrTooLarge {
                limit: MAX_STATEMENTS,
            });
        }
        Ok(())
    }

    fn target(&self, t: usize) -> Result<usize, IrError> {
        self.graph.target[t].ok_or_else(|| IrError::UnknownState {
            state: self.model.transitions[t].to.clone(),
        })
    }

    /// Appends the statements of a run standing in `state` to `out`.
    fn emit(&mut self, mut state: usize, out: &mut Block) -> Result<(), IrError> {
        let mut entered = Vec::new();
        let result = loop {
            if self.on_path[state] {
                break Err(IrError::CyclicModel {
                    state: self.graph.states[state].clone(),
                });
            }
            self.on_path[state] = true;
            entered.push(state);

            let outgoing = &self.graph.outgoing[state];
            match outgoing.len() {
                0 => {
                    break Err(IrError::NoOutgoing {
                        state: self.graph.states[state].clone(),
                    })
                }
                1 => {
                    let t = outgoing[0];
                    self.bump()?;
                    out.push(Stmt::Delay(self.model.transitions[t].delay));
                    let to = self.target(t)?;
                    if self.graph.ends_run(to) {
                        break Ok(());
                    }
                    state = to;
                }
                _ => {
                    self.bump()?;
                    let mut cases = Vec::with_capacity(outgoing.len());
                    for &t in outgoing {
                        let tr = &self.model.transitions[t];
                        self.bump()?;
                        let mut body = vec![Stmt::Delay(tr.delay)];
                        let to = self.target(t)?;
                        if !self.graph.ends_run(to) {
                            self.emit(to, &mut body)?;
                        }
                        cases.push(Case {
                            probability: tr.probability,
                            body,
                        });
                    }
                    out.push(Stmt::Branch(cases));
                    break Ok(());
                }
            }
        };
        for s in entered {
            self.on_path[s] = false;
        }
        result
    }
}

/// Executes a program in virtual time. Draw order matches
/// [`crate::sim::simulate_run`] on the source model.
pub fn interpret_ir<R: UnitSource + ?Sized>(ir: &SimProgram, rng: &mut R) -> f64 {
    let mut elapsed = 0.0;
    run_block(&ir.body, rng, &mut elapsed);
    elapsed
}

fn run_block<R: UnitSource + ?Sized>(block: &Block, rng: &mut R, elapsed: &mut f64) {
    for stmt in block {
        match stmt {
            Stmt::Delay(d) => *elapsed += sample_delay(d, rng),
            Stmt::Branch(cases) => {
                let u = rng.next_unit();
                let i = pick_cumulative(cases.iter().map(|c| c.probability), u);
                run_block(&cases[i].body, rng, elapsed);
            }
        }
    }
}

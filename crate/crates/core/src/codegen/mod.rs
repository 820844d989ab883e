//! Script generation: model -> [`SimProgram`] -> text.

mod ir;
mod template;

pub use ir::{build_ir, interpret_ir, Block, Case, IrError, SimProgram, Stmt, MAX_STATEMENTS};
pub use template::{render, RenderTemplate, TemplateError, BUILTIN_TEMPLATES};

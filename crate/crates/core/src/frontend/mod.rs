//! Guest-language front end: lexing, parsing, pretty-printing and type
//! checking of MiniMuli source.

pub mod ast;
mod lexer;
mod parser;
mod printer;
pub mod typeck;

use thiserror::Error;

pub use ast::Span;
pub use parser::{parse, parse_expr};
pub use printer::{print_expr, print_program};
pub use typeck::{typecheck, CheckedProgram};

use crate::classes::ClassTable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{span}: {message}")]
    Lex { span: Span, message: String },

    #[error("{span}: syntax error: found {found}, expected one of: {}", expected.join(", "))]
    Syntax {
        span: Span,
        found: String,
        expected: Vec<String>,
    },

    #[error("{span}: duplicate class `{name}` (first declared at {first})")]
    DuplicateClass { name: String, span: Span, first: Span },

    #[error("{span}: field `{name}` cannot be declared free; fields of free objects are implicitly free")]
    FreeField { name: String, span: Span },

    #[error("{span}: unknown type `{name}`")]
    UnknownType { name: String, span: Span },

    #[error("{span}: {message}")]
    Hierarchy { span: Span, message: String },

    #[error("{span}: type error: {message}")]
    Type { span: Span, message: String },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Lex { span, .. }
            | FrontendError::Syntax { span, .. }
            | FrontendError::DuplicateClass { span, .. }
            | FrontendError::FreeField { span, .. }
            | FrontendError::UnknownType { span, .. }
            | FrontendError::Hierarchy { span, .. }
            | FrontendError::Type { span, .. } => *span,
        }
    }
}

/// Parse, build the class table and type check in one go.
pub fn compile(source: &str) -> Result<CheckedProgram, FrontendError> {
    let program = parse(source)?;
    let table = ClassTable::build(&program)?;
    typecheck(&program, table)
}

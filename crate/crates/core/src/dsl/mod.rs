//! Constitutive-law language: parsing, typing, printing and evaluation.

pub mod ast;
pub mod builtins;
pub mod catalog;
pub mod eval;
pub mod parser;
pub mod printer;
pub mod typecheck;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Body, Expr, LawAst, ParamSpec, Stmt};
pub use builtins::Type;
pub use catalog::{builtin_catalog, catalog_law};
pub use eval::{eval_elastic, eval_plastic, EvalError, Evaluator};
pub use parser::{parse_law, ParseError, ParseErrorKind};
pub use printer::{print_body, print_law};
pub use typecheck::{typecheck, BodyKind, TypeError, TypedLaw};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Type(#[from] TypeError),
}

/// Parses and typechecks in one step.
pub fn compile_law(source: &str) -> Result<TypedLaw, DslError> {
    Ok(typecheck(parse_law(source)?)?)
}

/// Parameter values in declaration order, in linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    /// Validates length and bounds against the law's declarations.
    pub fn new(law: &LawAst, values: Vec<f64>) -> Result<Self, String> {
        if values.len() != law.params.len() {
            return Err(format!(
                "expected {} parameter values, got {}",
                law.params.len(),
                values.len()
            ));
        }
        for (p, v) in law.params.iter().zip(&values) {
            if !(p.lo..=p.hi).contains(v) {
                return Err(format!("{} = {v} outside [{}, {}]", p.name, p.lo, p.hi));
            }
        }
        Ok(ParamVector { values })
    }

    pub fn initial(law: &LawAst) -> Self {
        ParamVector { values: law.params.iter().map(|p| p.init).collect() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn cast<T: crate::scalar::Real>(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::lit(v)).collect()
    }
}

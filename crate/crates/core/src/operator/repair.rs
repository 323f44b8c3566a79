use serde::{Deserialize, Serialize};

use super::{Operator, OperatorError};
use crate::evolution::Phase;

pub const DEFAULT_MAX_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub attempt: usize,
    pub error: String,
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairOutcome<T> {
    Repaired { source: String, value: T, records: Vec<RepairRecord> },
    Failed { diagnostics: Vec<String>, records: Vec<RepairRecord> },
}

/// Re-prompts with the exact error until `check` accepts a source or retries run out.
/// Only fatal operator errors escape as `Err`.
pub fn repair_loop<O, T, C>(
    source: &str,
    error: &str,
    op: &mut O,
    phase: Phase,
    max_retries: usize,
    mut check: C,
) -> Result<RepairOutcome<T>, OperatorError>
where
    O: Operator + ?Sized,
    C: FnMut(&str) -> Result<T, String>,
{
    let mut diagnostics = vec![error.to_string()];
    let mut records = Vec::new();
    let mut current = source.to_string();
    let mut last_error = error.to_string();
    for attempt in 1..=max_retries {
        match op.repair(&current, &last_error, phase) {
            Ok(fixed) => {
                records.push(RepairRecord { attempt, error: last_error.clone(), response: Some(fixed.clone()) });
                match check(&fixed) {
                    Ok(value) => return Ok(RepairOutcome::Repaired { source: fixed, value, records }),
                    Err(e) => {
                        diagnostics.push(e.clone());
                        last_error = e;
                        current = fixed;
                    }
                }
            }
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                records.push(RepairRecord { attempt, error: last_error.clone(), response: None });
                diagnostics.push(e.to_string());
                break;
            }
        }
    }
    Ok(RepairOutcome::Failed { diagnostics, records })
}

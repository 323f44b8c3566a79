use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::print_body;
use crate::evolution::{Candidate, Phase};

pub const DEFAULT_PROMPT_CAP: usize = 32 * 1024;

pub const GRAMMAR_REFERENCE: &str = "\
A law is a list of parameter declarations followed by an elastic and a plastic block:

  param <name> init=<number> min=<number> max=<number> [log]
  elastic { <statements> return <expr> }
  plastic { <statements> return <expr> }

Statements: `let x = <expr>;` or `let (U, S, V) = svd(<mat3>);`. Comments start with `#`.
Types: scalar, vec3, mat3. `F` (mat3) is the deformation gradient, `I` is the identity.
The elastic block returns the Kirchhoff stress (mat3); the plastic block returns the
corrected deformation gradient (mat3). `log` marks a parameter optimized in log space.
Operators: + - * / and unary minus with the usual precedence; mat3*mat3, mat3*vec3,
scalar*any, vec3+vec3, any/scalar. Conditionals: `if a <op> b then x else y` with
<, <=, >, >=, == on scalars; only the taken branch is evaluated.
Functions: svd det trace transpose inverse diag outer dev norm_fro log exp sqrt abs
pow min max clamp vlog vexp vsum vnorm vmax. `vlog`/`vexp` act per component,
`vsum` sums components, `vnorm` is the Euclidean norm, `vmax(v, s)` clamps below,
`dev` removes the mean (vec3) or the trace part (mat3), `diag(v)` builds a matrix.
";

const SYSTEM_ROLE: &str = "\
You are an expert in continuum mechanics and computational physics. You design
constitutive laws for a material point method simulator: an elastic law mapping the
deformation gradient to Kirchhoff stress, and a plastic return map projecting a trial
deformation gradient back onto the admissible set. Laws must be physically plausible:
zero stress at rest, objective (rotation invariant), and numerically stable.
Write every law in the following language.

";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentPayload {
    pub id: u64,
    pub source: String,
    pub fitness: f64,
    pub loss_summary: String,
    pub theta_summary: String,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub phase: Phase,
    pub parent_payloads: Vec<ParentPayload>,
    pub grammar_reference: String,
    pub offspring_requested: usize,
}

impl PromptBundle {
    pub fn digest(&self) -> String {
        prompt_digest(&self.system_text, &self.user_text)
    }

    pub fn size(&self) -> usize {
        self.system_text.len() + self.user_text.len()
    }
}

pub(crate) fn prompt_digest(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

fn payload(c: &Candidate) -> ParentPayload {
    let names: Vec<String> = c
        .law
        .as_ref()
        .map(|l| l.ast.params.iter().map(|p| p.name.clone()).collect())
        .unwrap_or_default();
    let (loss_summary, theta_summary, failure, fitness) = match &c.fitted {
        Some(f) => {
            let curve: Vec<String> = f.feedback.loss_curve.iter().map(|(i, l)| format!("{i}:{l:.4e}")).collect();
            let theta: Vec<String> = names
                .iter()
                .zip(f.feedback.theta_init.values.iter().zip(&f.theta_star.values))
                .map(|(n, (a, b))| format!("{n}: {a:.4e} -> {b:.4e}"))
                .collect();
            (curve.join(" "), theta.join(", "), f.feedback.failure.clone(), f.fitness)
        }
        None => (String::new(), String::new(), None, f64::NAN),
    };
    ParentPayload { id: c.id, source: c.source.clone(), fitness, loss_summary, theta_summary, failure }
}

fn phase_instruction(phase: Phase, best: Option<&Candidate>) -> String {
    let frozen = |plastic: bool| {
        best.and_then(|c| c.law.as_ref())
            .map(|l| print_body(if plastic { &l.ast.plastic } else { &l.ast.elastic }))
            .unwrap_or_default()
    };
    match phase {
        Phase::Elastic => format!(
            "Phase: ELASTIC. Modify only the elastic body. Keep each parent's plastic body and the \
             parameters it uses exactly unchanged. For the best parent the plastic body is:\n```\nplastic {}\n```\n",
            frozen(true)
        ),
        Phase::Plastic => format!(
            "Phase: PLASTIC. Modify only the plastic body. Keep each parent's elastic body and the \
             parameters it uses exactly unchanged. For the best parent the elastic body is:\n```\nelastic {}\n```\n",
            frozen(false)
        ),
        Phase::Joint | Phase::Init => {
            "Phase: JOINT. You may refine both the elastic and the plastic body.\n".to_string()
        }
    }
}

fn write_parent(out: &mut String, rank: usize, p: &ParentPayload) {
    let _ = writeln!(out, "### Parent {} (id {}), fitness {:.6e}", rank + 1, p.id, p.fitness);
    let _ = writeln!(out, "```\n{}```", p.source);
    if let Some(f) = &p.failure {
        let _ = writeln!(out, "Failure: {f}");
    }
    if !p.loss_summary.is_empty() {
        let _ = writeln!(out, "Loss curve (iteration:loss): {}", p.loss_summary);
    }
    if !p.theta_summary.is_empty() {
        let _ = writeln!(out, "Parameters (initial -> fitted): {}", p.theta_summary);
    }
    out.push('\n');
}

/// Parents are listed best-first; parents that would push the prompt past `cap` bytes are left out.
pub fn build_prompt(parents: &[Candidate], phase: Phase, m: usize, iteration: usize, cap: usize) -> PromptBundle {
    let system_text = format!("{SYSTEM_ROLE}{GRAMMAR_REFERENCE}");
    let head = format!(
        "Iteration {iteration}. The parents below were fitted to observed dynamics; lower fitness is better.\n\n"
    );
    let tail = format!(
        "{}\nProceed in three steps: (1) analyze the parent expressions and their feedback, (2) design an \
         improvement plan, (3) write exactly {m} new constitutive laws. Return exactly {m} fenced code \
         blocks, each containing one complete law (parameter declarations, elastic block and plastic block).\n",
        phase_instruction(phase, parents.first())
    );
    let mut body = String::new();
    let mut payloads = Vec::new();
    for (rank, c) in parents.iter().enumerate() {
        let p = payload(c);
        let mut block = String::new();
        write_parent(&mut block, rank, &p);
        let total = system_text.len() + head.len() + body.len() + block.len() + tail.len();
        if total > cap {
            if payloads.is_empty() {
                // keep the best parent's source, drop its feedback
                let slim = ParentPayload { loss_summary: String::new(), theta_summary: String::new(), ..p };
                block.clear();
                write_parent(&mut block, rank, &slim);
                let room = cap.saturating_sub(system_text.len() + head.len() + tail.len());
                if block.len() > room {
                    let mut cut = room;
                    while !block.is_char_boundary(cut) {
                        cut -= 1;
                    }
                    block.truncate(cut);
                }
                body.push_str(&block);
                payloads.push(slim);
            }
            break;
        }
        body.push_str(&block);
        payloads.push(p);
    }
    PromptBundle {
        system_text,
        user_text: format!("{head}{body}{tail}"),
        phase,
        parent_payloads: payloads,
        grammar_reference: GRAMMAR_REFERENCE.to_string(),
        offspring_requested: m,
    }
}

/// Re-prompt carrying the failing source and its error text verbatim.
pub fn build_repair_prompt(source: &str, error: &str, phase: Phase) -> (String, String) {
    let system_text = format!("{SYSTEM_ROLE}{GRAMMAR_REFERENCE}");
    let user = format!(
        "The following law was rejected.\n```\n{}\n```\nError:\n{}\n\n{}\nReturn exactly 1 fenced code block \
         containing the corrected complete law.\n",
        source.trim_end(),
        error,
        phase_instruction(phase, None).lines().next().unwrap_or_default()
    );
    (system_text, user)
}

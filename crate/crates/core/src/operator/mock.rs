use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::build_prompt;
use super::{Operator, OperatorError, Proposal, ProposalRequest, Transcript, TranscriptEntry, DEFAULT_PROMPT_CAP};
use crate::dsl::ast::{BinOp, Body, Expr, Stmt};
use crate::dsl::catalog::{
    compose_source, elastic_pieces, plastic_pieces, LawPiece, IDENTITY_PLASTIC, STVK_HENCKY,
};
use crate::dsl::{parse_law, print_law, typecheck, LawAst, ParamSpec};
use crate::evolution::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    SwapElastic,
    ScaleModulus,
    AddVolumetric,
    ClampGuard,
    SwapPlastic,
    PerturbPlastic,
    Hardening,
}

const ELASTIC_BANK: [Mutation; 4] =
    [Mutation::SwapElastic, Mutation::ScaleModulus, Mutation::AddVolumetric, Mutation::ClampGuard];
const PLASTIC_BANK: [Mutation; 3] = [Mutation::SwapPlastic, Mutation::PerturbPlastic, Mutation::Hardening];
const JOINT_BANK: [Mutation; 7] = [
    Mutation::SwapElastic,
    Mutation::ScaleModulus,
    Mutation::AddVolumetric,
    Mutation::ClampGuard,
    Mutation::SwapPlastic,
    Mutation::PerturbPlastic,
    Mutation::Hardening,
];

impl Mutation {
    pub fn bank(phase: Phase) -> &'static [Mutation] {
        match phase {
            Phase::Elastic => &ELASTIC_BANK,
            Phase::Plastic => &PLASTIC_BANK,
            Phase::Joint | Phase::Init => &JOINT_BANK,
        }
    }
}

fn var(n: &str) -> Expr {
    Expr::Var(n.into())
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Box::new(a), Box::new(b))
}

fn det_f() -> Expr {
    Expr::Call("det".into(), vec![var("F")])
}

fn elastic_template(piece: &LawPiece) -> LawAst {
    parse_law(&compose_source(piece, &IDENTITY_PLASTIC)).expect("catalog template parses")
}

fn plastic_template(piece: &LawPiece) -> LawAst {
    parse_law(&compose_source(&STVK_HENCKY, piece)).expect("catalog template parses")
}

/// Declarations for `needed` names: frozen ones verbatim, then the rest from `fresh`.
fn merge_params(law: &LawAst, frozen: &Body, fresh: &[ParamSpec], needed: &Body) -> Vec<ParamSpec> {
    let keep = law.params_used_by(frozen);
    let mut out: Vec<ParamSpec> = Vec::new();
    for p in fresh.iter().chain(&keep) {
        if out.iter().any(|q| q.name == p.name) {
            continue;
        }
        let decl = keep.iter().find(|q| q.name == p.name).unwrap_or(p);
        out.push(decl.clone());
    }
    let mut names = needed.free_names();
    names.extend(frozen.free_names());
    out.retain(|p| names.contains(&p.name));
    out
}

fn exclusive_params(law: &LawAst, own: &Body, other: &Body) -> Vec<String> {
    let theirs = other.free_names();
    law.params_used_by(own)
        .into_iter()
        .filter(|p| !theirs.contains(&p.name))
        .map(|p| p.name)
        .collect()
}

fn map_body(b: &Body, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Body {
    Body {
        stmts: b
            .stmts
            .iter()
            .map(|s| match s {
                Stmt::Let(n, e) => Stmt::Let(n.clone(), map_expr(e, f)),
                Stmt::LetSvd(n, e) => Stmt::LetSvd(n.clone(), map_expr(e, f)),
            })
            .collect(),
        ret: map_expr(&b.ret, f),
    }
}

/// Bottom-up unless `f` replaces a node, in which case its children are left alone.
fn map_expr(e: &Expr, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
    if let Some(r) = f(e) {
        return r;
    }
    match e {
        Expr::Num(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(Box::new(map_expr(a, f))),
        Expr::Binary(op, a, b) => bin(*op, map_expr(a, f), map_expr(b, f)),
        Expr::Call(n, args) if n == "clamp" => Expr::Call(n.clone(), args.clone()),
        Expr::Call(n, args) => Expr::Call(n.clone(), args.iter().map(|a| map_expr(a, f)).collect()),
        Expr::If { cond, then, otherwise } => {
            let mut c = (**cond).clone();
            c.lhs = map_expr(&cond.lhs, f);
            c.rhs = map_expr(&cond.rhs, f);
            Expr::If { cond: Box::new(c), then: Box::new(map_expr(then, f)), otherwise: Box::new(map_expr(otherwise, f)) }
        }
    }
}

fn scale_param(law: &LawAst, names: &[String], factors: &[f64], rng: &mut ChaCha8Rng) -> Option<LawAst> {
    let name = names.choose(rng)?;
    let factor = *factors.choose(rng)?;
    let mut out = law.clone();
    let p = out.params.iter_mut().find(|p| &p.name == name)?;
    let init = (p.init * factor).clamp(p.lo, p.hi);
    if init == p.init {
        return None;
    }
    p.init = init;
    Some(out)
}

/// Applies one mutation; `None` when it does not apply to this law.
pub fn apply_mutation(law: &LawAst, m: Mutation, rng: &mut ChaCha8Rng) -> Option<LawAst> {
    let mut out = law.clone();
    match m {
        Mutation::SwapElastic => {
            let options: Vec<LawAst> = elastic_pieces()
                .iter()
                .map(elastic_template)
                .filter(|t| t.elastic != law.elastic)
                .collect();
            let t = options.choose(rng)?;
            out.params = merge_params(law, &law.plastic, &t.params, &t.elastic);
            out.elastic = t.elastic.clone();
        }
        Mutation::ScaleModulus => {
            let names: Vec<String> = exclusive_params(law, &law.elastic, &law.plastic)
                .into_iter()
                .filter(|n| law.param(n).is_some_and(|p| p.log_scale))
                .collect();
            return scale_param(law, &names, &[0.1, 10.0], rng);
        }
        Mutation::AddVolumetric => {
            if law.param("kvol").is_some() {
                return None;
            }
            let j = det_f();
            let term = bin(
                BinOp::Mul,
                bin(BinOp::Mul, bin(BinOp::Mul, var("kvol"), j.clone()), bin(BinOp::Sub, j, Expr::Num(1.0))),
                var("I"),
            );
            out.elastic.ret = bin(BinOp::Add, law.elastic.ret.clone(), term);
            out.params.push(ParamSpec { name: "kvol".into(), init: 100.0, lo: 1.0, hi: 1e9, log_scale: true });
        }
        Mutation::ClampGuard => {
            let mut hit = false;
            out.elastic = map_body(&law.elastic, &mut |e| {
                (e == &det_f()).then(|| {
                    hit = true;
                    Expr::Call("clamp".into(), vec![det_f(), Expr::Num(0.05), Expr::Num(20.0)])
                })
            });
            if !hit {
                return None;
            }
        }
        Mutation::SwapPlastic => {
            let options: Vec<LawAst> = plastic_pieces()
                .iter()
                .map(plastic_template)
                .filter(|t| t.plastic != law.plastic)
                .collect();
            let t = options.choose(rng)?;
            out.params = merge_params(law, &law.elastic, &t.params, &t.plastic);
            out.plastic = t.plastic.clone();
        }
        Mutation::PerturbPlastic => {
            let names = exclusive_params(law, &law.plastic, &law.elastic);
            return scale_param(law, &names, &[0.5, 2.0], rng);
        }
        Mutation::Hardening => {
            if law.param("hxi").is_some() {
                return None;
            }
            let names = exclusive_params(law, &law.plastic, &law.elastic);
            let name = names.choose(rng)?.clone();
            let factor = Expr::Call(
                "exp".into(),
                vec![bin(BinOp::Mul, var("hxi"), bin(BinOp::Sub, Expr::Num(1.0), det_f()))],
            );
            out.plastic = map_body(&law.plastic, &mut |e| {
                matches!(e, Expr::Var(n) if *n == name).then(|| bin(BinOp::Mul, e.clone(), factor.clone()))
            });
            out.params.push(ParamSpec { name: "hxi".into(), init: 0.0, lo: -10.0, hi: 10.0, log_scale: false });
        }
    }
    out.prune_unused_params();
    (out != *law).then_some(out)
}

/// Seeded mutations from the phase's bank, applied round-robin to parents (best first).
pub fn propose_mock(parents: &[LawAst], phase: Phase, m: usize, rng: &mut ChaCha8Rng) -> Vec<Proposal> {
    let bank = Mutation::bank(phase);
    let mut out = Vec::with_capacity(m);
    if parents.is_empty() {
        return out;
    }
    for k in 0..m {
        let pi = k % parents.len();
        let parent = &parents[pi];
        let mut child = None;
        for _ in 0..4 * bank.len() {
            let mutation = bank[rng.gen_range(0..bank.len())];
            if let Some(c) = apply_mutation(parent, mutation, rng) {
                if typecheck(c.clone()).is_ok() {
                    child = Some(c);
                    break;
                }
            }
        }
        let law = child.unwrap_or_else(|| parent.clone());
        out.push(Proposal { source: print_law(&law), parent: Some(pi) });
    }
    out
}

/// Deterministic offline operator.
#[derive(Debug, Clone)]
pub struct MockOperator {
    pub seed: u64,
    transcript: Transcript,
}

impl MockOperator {
    pub fn new(seed: u64) -> Self {
        MockOperator { seed, transcript: Transcript::default() }
    }
}

impl Operator for MockOperator {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>, OperatorError> {
        let lawful: Vec<(usize, LawAst)> = req
            .parents
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.law.as_ref().map(|l| (i, l.ast.clone())))
            .collect();
        let asts: Vec<LawAst> = lawful.iter().map(|(_, a)| a.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(req.iteration as u64);
        let mut props = propose_mock(&asts, req.phase, req.offspring, &mut rng);
        for p in &mut props {
            p.parent = p.parent.map(|i| lawful[i].0);
        }
        let bundle = build_prompt(req.parents, req.phase, req.offspring, req.iteration, DEFAULT_PROMPT_CAP);
        let extracted: Vec<String> = props.iter().map(|p| p.source.clone()).collect();
        self.transcript.push(TranscriptEntry {
            kind: "mock".into(),
            prompt_digest: bundle.digest(),
            response: extracted.join("\n"),
            extracted,
            backoffs: Vec::new(),
            prompt_tokens: None,
            completion_tokens: None,
            cached: false,
            timestamp: 0,
        });
        Ok(props)
    }

    fn repair(&mut self, _source: &str, _error: &str, _phase: Phase) -> Result<String, OperatorError> {
        Err(OperatorError::Unsupported("repair (mock)"))
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn restore_transcript(&mut self, transcript: Transcript) {
        self.transcript = transcript;
    }
}

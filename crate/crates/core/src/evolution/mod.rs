//! Upper-level search over law expressions.

mod driver;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use driver::{
    evolve_iteration, init_population, run_discovery, DiscoveryResult, DiscoveryState, EvalCache, EvolutionError,
    HistorySnapshot, CHECKPOINT_FILE,
};
pub use report::{write_history_csv, ReportRow, RunReport};

use crate::dsl::{parse_law, print_law, typecheck, LawAst, ParamSpec, ParamVector, TypedLaw};
use crate::fitness::{Fitted, LossMode, OptimizeOptions, DEFAULT_LAMBDA, FAILURE_SENTINEL};
use crate::operator::DEFAULT_MAX_RETRIES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Elastic,
    Plastic,
    Joint,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Elastic => "elastic",
            Phase::Plastic => "plastic",
            Phase::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Decoupled,
    JointOnly,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Decoupled => "decoupled",
            Schedule::JointOnly => "joint_only",
        })
    }
}

impl FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "decoupled" => Ok(Schedule::Decoupled),
            "joint_only" | "joint-only" => Ok(Schedule::JointOnly),
            _ => Err(format!("unknown schedule `{s}` (decoupled, joint_only)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    /// Primary parent first.
    pub parents: Vec<u64>,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: u64,
    pub law: Option<TypedLaw>,
    pub source: String,
    pub fitted: Option<Fitted>,
    pub lineage: Lineage,
    pub phase_born: Phase,
    pub notes: Vec<String>,
}

/// Serialized form; the typed law is rebuilt from `source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: u64,
    pub source: String,
    pub fitted: Option<Fitted>,
    pub lineage: Lineage,
    pub phase_born: Phase,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Candidate {
    pub fn from_law(id: u64, ast: LawAst, lineage: Lineage, phase_born: Phase) -> Self {
        let source = print_law(&ast);
        let law = typecheck(ast).ok();
        Candidate { id, law, source, fitted: None, lineage, phase_born, notes: Vec::new() }
    }

    pub fn failed(id: u64, source: String, law: Option<TypedLaw>, reason: String, lineage: Lineage, phase: Phase) -> Self {
        let theta = law.as_ref().map_or(ParamVector { values: Vec::new() }, |l| ParamVector::initial(&l.ast));
        Candidate {
            id,
            law,
            source,
            fitted: Some(Fitted::failed(theta, reason, Vec::new())),
            lineage,
            phase_born: phase,
            notes: Vec::new(),
        }
    }

    pub fn fitness(&self) -> f64 {
        self.fitted.as_ref().map_or(FAILURE_SENTINEL, |f| f.fitness)
    }

    pub fn is_failure(&self) -> bool {
        crate::fitness::is_failure(self.fitness())
    }

    pub fn record(&self) -> CandidateRecord {
        CandidateRecord {
            id: self.id,
            source: self.source.clone(),
            fitted: self.fitted.clone(),
            lineage: self.lineage.clone(),
            phase_born: self.phase_born,
            notes: self.notes.clone(),
        }
    }

    pub fn from_record(r: CandidateRecord) -> Self {
        let law = parse_law(&r.source).ok().and_then(|a| typecheck(a).ok());
        Candidate {
            id: r.id,
            law,
            source: r.source,
            fitted: r.fitted,
            lineage: r.lineage,
            phase_born: r.phase_born,
            notes: r.notes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub parents_k: usize,
    pub offspring_m: usize,
    pub iterations: usize,
    pub dedup_epsilon: f64,
    pub schedule: Schedule,
    pub alternating_iterations: usize,
    pub seed: u64,
    pub eval_budget: usize,
    pub refit_budget: usize,
    pub loss_mode: LossMode,
    pub lambda: f64,
    pub max_retries: usize,
    pub optimize: OptimizeOptions,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            parents_k: 3,
            offspring_m: 4,
            iterations: 5,
            dedup_epsilon: 1e-3,
            schedule: Schedule::Decoupled,
            alternating_iterations: 4,
            seed: 0,
            eval_budget: 60,
            refit_budget: 200,
            loss_mode: LossMode::Chamfer,
            lambda: DEFAULT_LAMBDA,
            max_retries: DEFAULT_MAX_RETRIES,
            optimize: OptimizeOptions::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.parents_k < 1 {
            return Err("parents_k must be at least 1".into());
        }
        if self.offspring_m < 1 {
            return Err("offspring_m must be at least 1".into());
        }
        if !(self.dedup_epsilon > 0.0) {
            return Err("dedup_epsilon must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err("lambda must lie in [0, 1]".into());
        }
        if self.schedule == Schedule::Decoupled
            && self.iterations > 0
            && self.alternating_iterations >= self.iterations
        {
            return Err(format!(
                "alternating_iterations ({}) must be below iterations ({}) for the decoupled schedule",
                self.alternating_iterations, self.iterations
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }
}

pub fn phase_for_iteration(i: usize, config: &EvolutionConfig) -> Phase {
    match config.schedule {
        Schedule::JointOnly => Phase::Joint,
        Schedule::Decoupled if i < config.alternating_iterations => {
            if i % 2 == 0 {
                Phase::Elastic
            } else {
                Phase::Plastic
            }
        }
        Schedule::Decoupled => Phase::Joint,
    }
}

fn by_fitness(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    a.fitness().total_cmp(&b.fitness()).then(a.id.cmp(&b.id))
}

/// Drops candidates whose fitness is within relative `epsilon` of a better kept one.
pub fn dedup(mut population: Vec<Candidate>, epsilon: f64) -> Vec<Candidate> {
    population.sort_by(by_fitness);
    let mut out: Vec<Candidate> = Vec::with_capacity(population.len());
    let mut last: Option<f64> = None;
    let mut failure_kept = false;
    for c in population {
        if c.is_failure() {
            if !failure_kept {
                failure_kept = true;
                out.push(c);
            }
            continue;
        }
        let f = c.fitness();
        let keep = match last {
            None => true,
            Some(k) => (f - k).abs() / k.abs().max(1e-12) > epsilon,
        };
        if keep {
            last = Some(f);
            out.push(c);
        }
    }
    out
}

/// The `k` lowest losses, ties broken by id.
pub fn select_topk(population: &[Candidate], k: usize) -> Vec<Candidate> {
    let mut v = population.to_vec();
    v.sort_by(by_fitness);
    v.truncate(k);
    v
}

fn set_decl(params: &mut Vec<ParamSpec>, decl: &ParamSpec) -> bool {
    match params.iter_mut().find(|p| p.name == decl.name) {
        Some(p) if p == decl => false,
        Some(p) => {
            *p = decl.clone();
            true
        }
        None => {
            params.push(decl.clone());
            true
        }
    }
}

/// Restores the body frozen by `phase` (and its parameter declarations) from the parent.
pub fn enforce_phase(offspring: &LawAst, parent: &LawAst, phase: Phase) -> (LawAst, Option<String>) {
    let plastic_frozen = match phase {
        Phase::Elastic => true,
        Phase::Plastic => false,
        Phase::Joint | Phase::Init => return (offspring.clone(), None),
    };
    let mut out = offspring.clone();
    let (frozen, label) = if plastic_frozen {
        (&parent.plastic, "plastic")
    } else {
        (&parent.elastic, "elastic")
    };
    let mut notes = Vec::new();
    let slot = if plastic_frozen { &mut out.plastic } else { &mut out.elastic };
    if slot != frozen {
        *slot = frozen.clone();
        notes.push(format!("{label} body restored from parent"));
    }
    let mut changed = Vec::new();
    for decl in parent.params_used_by(frozen) {
        if set_decl(&mut out.params, &decl) {
            changed.push(decl.name.clone());
        }
    }
    if !changed.is_empty() {
        notes.push(format!("parameter declarations restored from parent: {}", changed.join(", ")));
    }
    out.prune_unused_params();
    let note = (!notes.is_empty()).then(|| format!("{} phase: {}", phase, notes.join("; ")));
    (out, note)
}

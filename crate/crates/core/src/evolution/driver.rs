use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    dedup, enforce_phase, phase_for_iteration, select_topk, Candidate, CandidateRecord, EvolutionConfig, Lineage,
    Phase,
};
use crate::dsl::catalog::{compose_source, FIXED_COROTATED, IDENTITY_PLASTIC};
use crate::dsl::{compile_law, print_law, ParamVector, TypedLaw};
use crate::fitness::{optimize_from, optimize_params, probe_validity, Fitted, SceneObservation};
use crate::operator::{repair_loop, Operator, OperatorError, ProposalRequest, RepairOutcome, Transcript};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const STATE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("{source} (state saved after iteration {completed}; rerun to resume)")]
    Operator { source: OperatorError, completed: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryMember {
    pub id: u64,
    pub fitness: f64,
    pub phase_born: Phase,
}

/// Population after initialization (`iteration` 0) or after iteration `iteration − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySnapshot {
    pub iteration: usize,
    pub phase: Phase,
    pub members: Vec<HistoryMember>,
    pub offspring: Vec<u64>,
    pub best_id: u64,
    pub best_fitness: f64,
}

/// Fitted results keyed by law digest.
#[derive(Debug, Clone, Default)]
pub struct EvalCache {
    map: HashMap<String, Fitted>,
}

impl EvalCache {
    pub fn get(&self, law: &TypedLaw) -> Option<&Fitted> {
        self.map.get(law.digest())
    }

    pub fn insert(&mut self, law: &TypedLaw, f: Fitted) {
        self.map.insert(law.digest().to_string(), f);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryState {
    pub version: u32,
    pub config: EvolutionConfig,
    pub observation_digest: String,
    pub completed_iterations: usize,
    pub next_id: u64,
    pub population: Vec<u64>,
    pub candidates: Vec<CandidateRecord>,
    pub history: Vec<HistorySnapshot>,
    pub transcript: Transcript,
}

impl DiscoveryState {
    pub fn save(&self, dir: &Path) -> Result<(), EvolutionError> {
        let err = |e: std::io::Error| EvolutionError::Checkpoint(e.to_string());
        fs::create_dir_all(dir).map_err(err)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| EvolutionError::Checkpoint(e.to_string()))?;
        let snapshot = dir.join(format!("iter_{:03}.json", self.completed_iterations));
        fs::write(&snapshot, &text).map_err(err)?;
        let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        fs::write(&tmp, &text).map_err(err)?;
        fs::rename(&tmp, dir.join(CHECKPOINT_FILE)).map_err(err)
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, EvolutionError> {
        let path = dir.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| EvolutionError::Checkpoint(e.to_string()))?;
        let state: DiscoveryState =
            serde_json::from_str(&text).map_err(|e| EvolutionError::Checkpoint(format!("{}: {e}", path.display())))?;
        if state.version != STATE_VERSION {
            return Err(EvolutionError::Checkpoint(format!("unsupported checkpoint version {}", state.version)));
        }
        Ok(Some(state))
    }
}

#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    /// Winner after the final refit.
    pub best: Candidate,
    /// Winner's fitness during the search, before the refit.
    pub search_fitness: f64,
    pub history: Vec<HistorySnapshot>,
    pub candidates: Vec<Candidate>,
    pub transcript_digest: String,
    pub config: EvolutionConfig,
}

/// Fixed corotated elasticity with identity plasticity.
pub fn init_population(next_id: &mut u64) -> Vec<Candidate> {
    let law = compile_law(&compose_source(&FIXED_COROTATED, &IDENTITY_PLASTIC)).expect("catalog law compiles");
    let id = *next_id;
    *next_id += 1;
    vec![Candidate {
        id,
        source: print_law(&law.ast),
        law: Some(law),
        fitted: None,
        lineage: Lineage { parents: Vec::new(), iteration: 0 },
        phase_born: Phase::Init,
        notes: Vec::new(),
    }]
}

/// Fits every unevaluated candidate, reusing cached fits of identical laws.
fn evaluate_all(cands: &mut [Candidate], obs: &SceneObservation, config: &EvolutionConfig, cache: &mut EvalCache) {
    let mut todo: Vec<(String, TypedLaw)> = Vec::new();
    for c in cands.iter() {
        if c.fitted.is_some() {
            continue;
        }
        if let Some(law) = &c.law {
            if cache.get(law).is_none() && !todo.iter().any(|(d, _)| d == law.digest()) {
                todo.push((law.digest().to_string(), law.clone()));
            }
        }
    }
    let fits: Vec<Fitted> = todo
        .par_iter()
        .map(|(_, law)| optimize_params(law, obs, config.eval_budget, &config.optimize))
        .collect();
    for ((_, law), f) in todo.iter().zip(fits) {
        cache.insert(law, f);
    }
    for c in cands.iter_mut() {
        if c.fitted.is_none() {
            if let Some(law) = &c.law {
                c.fitted = cache.get(law).cloned();
            }
        }
    }
}

struct Prepared {
    law: TypedLaw,
    note: Option<String>,
}

fn prepare(source: &str, parent: Option<&TypedLaw>, phase: Phase, obs: &SceneObservation) -> Result<Prepared, String> {
    let law = compile_law(source).map_err(|e| e.to_string())?;
    let (law, note) = match parent {
        Some(p) => {
            let (ast, note) = enforce_phase(&law.ast, &p.ast, phase);
            let law = if note.is_some() {
                compile_law(&print_law(&ast)).map_err(|e| format!("after restoring the frozen body: {e}"))?
            } else {
                law
            };
            (law, note)
        }
        None => (law, None),
    };
    let report = probe_validity(&law, &ParamVector::initial(&law.ast), obs);
    if !report.passed {
        return Err(report.describe());
    }
    Ok(Prepared { law, note })
}

/// The parent whose frozen body the offspring kept, else the best parent.
fn infer_parent(source: &str, parents: &[Candidate], phase: Phase) -> usize {
    let Ok(law) = compile_law(source) else { return 0 };
    parents
        .iter()
        .position(|p| {
            p.law.as_ref().is_some_and(|pl| match phase {
                Phase::Elastic => pl.ast.plastic == law.ast.plastic,
                Phase::Plastic => pl.ast.elastic == law.ast.elastic,
                _ => false,
            })
        })
        .unwrap_or(0)
}

/// Proposes, validates (with repair) and fits one batch of offspring.
pub fn evolve_iteration(
    parents: &[Candidate],
    phase: Phase,
    op: &mut dyn Operator,
    obs: &SceneObservation,
    config: &EvolutionConfig,
    iteration: usize,
    next_id: &mut u64,
    cache: &mut EvalCache,
) -> Result<Vec<Candidate>, OperatorError> {
    let m = config.offspring_m;
    let req = ProposalRequest { parents, phase, offspring: m, iteration };
    let mut slots: Vec<(String, Option<usize>, Option<String>)> = match op.propose(&req) {
        Ok(props) => props.into_iter().take(m).map(|p| (p.source, p.parent, None)).collect(),
        Err(e) if e.is_fatal() => return Err(e),
        Err(e) => Vec::from([(String::new(), None, Some(e.to_string()))]),
    };
    let got = slots.iter().filter(|s| s.2.is_none()).count();
    while slots.len() < m {
        slots.push((String::new(), None, Some(format!("response contained {got} of {m} requested law blocks"))));
    }
    let mut out = Vec::with_capacity(m);
    for (source, parent, missing) in slots {
        let pi = parent.unwrap_or_else(|| infer_parent(&source, parents, phase));
        let primary = parents.get(pi);
        let mut lineage_ids: Vec<u64> = primary.map(|p| p.id).into_iter().collect();
        if parent.is_none() {
            lineage_ids.extend(parents.iter().map(|p| p.id).filter(|id| Some(*id) != primary.map(|p| p.id)));
        }
        let lineage = Lineage { parents: lineage_ids, iteration };
        let parent_law = primary.and_then(|p| p.law.as_ref());
        let id = *next_id;
        *next_id += 1;
        let first = match missing {
            Some(e) => Err(e),
            None => prepare(&source, parent_law, phase, obs),
        };
        let mut notes = Vec::new();
        let prepared = match first {
            Ok(p) => Ok((source, p)),
            Err(err) => {
                let outcome = repair_loop(&source, &err, op, phase, config.max_retries, |s| {
                    prepare(s, parent_law, phase, obs)
                })?;
                match outcome {
                    RepairOutcome::Repaired { source, value, records } => {
                        notes.push(format!("repaired after {} attempt(s); first error: {err}", records.len()));
                        Ok((source, value))
                    }
                    RepairOutcome::Failed { diagnostics, .. } => Err((source, diagnostics.join(" | "))),
                }
            }
        };
        let cand = match prepared {
            Ok((_, p)) => {
                notes.extend(p.note);
                Candidate {
                    id,
                    source: print_law(&p.law.ast),
                    law: Some(p.law),
                    fitted: None,
                    lineage,
                    phase_born: phase,
                    notes,
                }
            }
            Err((source, why)) => {
                let law = compile_law(&source).ok();
                let mut c = Candidate::failed(id, source, law, why, lineage, phase);
                c.notes = notes;
                c
            }
        };
        out.push(cand);
    }
    evaluate_all(&mut out, obs, config, cache);
    Ok(out)
}

fn snapshot(iteration: usize, phase: Phase, population: &[Candidate], offspring: Vec<u64>, all: &[Candidate]) -> HistorySnapshot {
    let mut members: Vec<HistoryMember> = population
        .iter()
        .map(|c| HistoryMember { id: c.id, fitness: c.fitness(), phase_born: c.phase_born })
        .collect();
    members.sort_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.id.cmp(&b.id)));
    let best = all
        .iter()
        .min_by(|a, b| a.fitness().total_cmp(&b.fitness()).then(a.id.cmp(&b.id)))
        .expect("population is never empty");
    HistorySnapshot { iteration, phase, members, offspring, best_id: best.id, best_fitness: best.fitness() }
}

/// Initialize, iterate select → propose → evaluate, then refit the winner.
pub fn run_discovery(
    obs: &SceneObservation,
    op: &mut dyn Operator,
    config: &EvolutionConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<DiscoveryResult, EvolutionError> {
    config.validate().map_err(EvolutionError::Config)?;
    let obs_digest = obs.digest();
    let mut cache = EvalCache::default();
    let resumed = match checkpoint_dir {
        Some(d) => DiscoveryState::load(d)?,
        None => None,
    };
    let (mut all, mut population, mut history, mut next_id, start) = match resumed {
        Some(state) => {
            if state.config != *config {
                return Err(EvolutionError::Checkpoint("checkpoint was written with a different config".into()));
            }
            if state.observation_digest != obs_digest {
                return Err(EvolutionError::Checkpoint("checkpoint was written for a different observation".into()));
            }
            let all: Vec<Candidate> = state.candidates.into_iter().map(Candidate::from_record).collect();
            for c in &all {
                if let (Some(law), Some(f)) = (&c.law, &c.fitted) {
                    cache.insert(law, f.clone());
                }
            }
            let population = state
                .population
                .iter()
                .map(|id| all.iter().find(|c| c.id == *id).cloned())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| EvolutionError::Checkpoint("population refers to unknown candidates".into()))?;
            op.restore_transcript(state.transcript);
            (all, population, state.history, state.next_id, state.completed_iterations)
        }
        None => {
            let mut next_id = 0;
            let mut init = init_population(&mut next_id);
            evaluate_all(&mut init, obs, config, &mut cache);
            let history = vec![snapshot(0, Phase::Init, &init, init.iter().map(|c| c.id).collect(), &init)];
            (init.clone(), init, history, next_id, 0)
        }
    };
    let save = |all: &[Candidate], population: &[Candidate], history: &[HistorySnapshot], next_id: u64, done: usize, transcript: &Transcript| {
        match checkpoint_dir {
            Some(d) => DiscoveryState {
                version: STATE_VERSION,
                config: config.clone(),
                observation_digest: obs_digest.clone(),
                completed_iterations: done,
                next_id,
                population: population.iter().map(|c| c.id).collect(),
                candidates: all.iter().map(Candidate::record).collect(),
                history: history.to_vec(),
                transcript: transcript.clone(),
            }
            .save(d),
            None => Ok(()),
        }
    };
    if start == 0 {
        save(&all, &population, &history, next_id, 0, op.transcript())?;
    }
    for i in start..config.iterations {
        let phase = phase_for_iteration(i, config);
        let parents = select_topk(&dedup(population.clone(), config.dedup_epsilon), config.parents_k);
        let offspring = evolve_iteration(&parents, phase, op, obs, config, i, &mut next_id, &mut cache)
            .map_err(|source| EvolutionError::Operator { source, completed: i })?;
        all.extend(offspring.iter().cloned());
        let ids = offspring.iter().map(|c| c.id).collect();
        population = parents.into_iter().chain(offspring).collect();
        history.push(snapshot(i + 1, phase, &population, ids, &all));
        save(&all, &population, &history, next_id, i + 1, op.transcript())?;
    }
    let winner = all
        .iter()
        .min_by(|a, b| a.fitness().total_cmp(&b.fitness()).then(a.id.cmp(&b.id)))
        .expect("at least the initial candidate")
        .clone();
    let search_fitness = winner.fitness();
    let mut best = winner;
    if let Some(law) = &best.law {
        if !best.is_failure() {
            let theta0 = best.fitted.as_ref().map(|f| f.theta_star.clone()).expect("fitted winner");
            let refit = optimize_from(law, obs, theta0, config.refit_budget, &config.optimize);
            if refit.fitness <= search_fitness {
                best.fitted = Some(refit);
            }
        }
    }
    Ok(DiscoveryResult {
        best,
        search_fitness,
        history,
        candidates: all,
        transcript_digest: op.transcript().digest(),
        config: config.clone(),
    })
}

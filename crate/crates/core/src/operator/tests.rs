use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dsl::catalog::{catalog_sources, compose_source, FIXED_COROTATED, IDENTITY_PLASTIC, VON_MISES};
use crate::dsl::{compile_law, parse_law, print_body, typecheck, LawAst, ParamVector};
use crate::evolution::{init_population, Lineage};
use crate::fitness::Fitted;

fn fc_identity() -> LawAst {
    parse_law(&compose_source(&FIXED_COROTATED, &IDENTITY_PLASTIC)).unwrap()
}

fn candidate(id: u64, ast: LawAst, fitness: f64, failure: Option<&str>) -> Candidate {
    let mut c = Candidate::from_law(id, ast, Lineage { parents: vec![], iteration: 0 }, Phase::Init);
    let theta = ParamVector::initial(&c.law.as_ref().unwrap().ast);
    let mut f = Fitted::failed(theta.clone(), String::new(), vec![]);
    f.fitness = fitness;
    f.feedback.failure = failure.map(str::to_string);
    f.feedback.loss_curve = vec![(0, fitness * 2.0), (10, fitness)];
    c.fitted = Some(f);
    c
}

/// Replies from a script, recording every prompt it sees.
struct Scripted {
    replies: Mutex<Vec<Result<String, OperatorError>>>,
    seen: Mutex<Vec<String>>,
}

impl Scripted {
    fn new(replies: Vec<Result<String, OperatorError>>) -> Self {
        Scripted { replies: Mutex::new(replies), seen: Mutex::new(Vec::new()) }
    }
}

impl ChatClient for Scripted {
    fn complete(&self, _system: &str, user: &str) -> Result<ChatReply, OperatorError> {
        self.seen.lock().unwrap().push(user.to_string());
        let mut r = self.replies.lock().unwrap();
        if r.is_empty() {
            return Err(OperatorError::Unavailable("script exhausted".into()));
        }
        r.remove(0).map(|text| ChatReply { text, ..Default::default() })
    }
}

fn fenced(src: &str) -> String {
    format!("```law\n{src}\n```\n")
}

#[test]
fn extract_counts() {
    let four: String = (0..4).map(|i| format!("Plan {i}\n{}", fenced(&format!("law {i}")))).collect();
    assert_eq!(extract_offspring(&four, 4).unwrap(), vec!["law 0", "law 1", "law 2", "law 3"]);
    let six: String = (0..6).map(|i| fenced(&format!("law {i}"))).collect();
    assert_eq!(extract_offspring(&six, 4).unwrap().len(), 4);
    assert_eq!(extract_offspring(&six, 4).unwrap()[3], "law 3");
    assert_eq!(extract_offspring("just some prose", 4), Err(OperatorError::NoBlocksFound));
}

#[test]
fn prompt_elastic_phase_freezes_plastic() {
    let vm = parse_law(&compose_source(&FIXED_COROTATED, &VON_MISES)).unwrap();
    let parents = vec![candidate(3, vm.clone(), 0.5, None)];
    let b = build_prompt(&parents, Phase::Elastic, 4, 2, DEFAULT_PROMPT_CAP);
    assert!(b.user_text.contains("Modify only the elastic body"));
    assert!(b.user_text.contains(&print_body(&vm.plastic)));
    assert!(b.user_text.contains("exactly 4 fenced code blocks"));
    assert!(b.system_text.contains("expert"));
    assert_eq!(b.offspring_requested, 4);
    let p = build_prompt(&parents, Phase::Plastic, 4, 2, DEFAULT_PROMPT_CAP);
    assert!(p.user_text.contains("Modify only the plastic body"));
    assert_ne!(p.digest(), b.digest());
}

#[test]
fn prompt_carries_failure_note() {
    let parents = vec![
        candidate(1, fc_identity(), 0.1, None),
        candidate(2, fc_identity(), 1e9, Some("velocity explosion at step 12 (|v| = 5.1e1 m/s)")),
    ];
    let b = build_prompt(&parents, Phase::Joint, 4, 0, DEFAULT_PROMPT_CAP);
    assert!(b.user_text.contains("velocity explosion at step 12"));
    assert_eq!(b.parent_payloads.len(), 2);
    assert!(b.user_text.find("id 1").unwrap() < b.user_text.find("id 2").unwrap());
}

#[test]
fn prompt_respects_cap() {
    let mut parents = Vec::new();
    for id in 0..200 {
        let mut c = candidate(id, fc_identity(), 0.1 + id as f64, None);
        c.fitted.as_mut().unwrap().feedback.loss_curve = (0..20).map(|i| (i, 1.0 / (i + 1) as f64)).collect();
        parents.push(c);
    }
    for cap in [4 * 1024, DEFAULT_PROMPT_CAP] {
        let b = build_prompt(&parents, Phase::Joint, 4, 0, cap);
        assert!(b.size() <= cap, "{} > {cap}", b.size());
        assert!(!b.parent_payloads.is_empty());
    }
}

#[test]
fn repair_fixed_on_first_retry() {
    let good = compose_source(&FIXED_COROTATED, &IDENTITY_PLASTIC);
    let mut op = LlmOperator::new(Scripted::new(vec![Ok(fenced(&good))]), TranscriptCache::disabled());
    let out = repair_loop("elastic { return F + }", "syntax error", &mut op, Phase::Joint, 2, |s| {
        compile_law(s).map_err(|e| e.to_string())
    })
    .unwrap();
    match out {
        RepairOutcome::Repaired { records, source, .. } => {
            assert_eq!(records.len(), 1);
            assert_eq!(source.trim(), good.trim());
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(op.transcript().entries.len(), 1);
    assert_eq!(op.transcript().entries[0].kind, "repair");
}

#[test]
fn repair_exhaustion_collects_errors() {
    let mut op = LlmOperator::new(
        Scripted::new(vec![Ok(fenced("elastic { nope }")), Ok(fenced("plastic { still nope }"))]),
        TranscriptCache::disabled(),
    );
    let out = repair_loop("bad", "first error", &mut op, Phase::Joint, 2, |s| {
        compile_law(s).map_err(|e| e.to_string())
    })
    .unwrap();
    match out {
        RepairOutcome::Failed { diagnostics, records } => {
            assert_eq!(records.len(), 2);
            assert_eq!(diagnostics.len(), 3);
            assert_eq!(diagnostics[0], "first error");
            assert!(diagnostics[1].contains("line 1"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn repair_prompt_quotes_probe_diagnostic() {
    let client = Scripted::new(vec![Ok("no blocks here".into())]);
    let mut op = LlmOperator::new(client, TranscriptCache::disabled());
    let diag = "invalid (Probation): velocity explosion at step 3 (|v| = 6.2e1 m/s) on particle 7";
    let out = repair_loop("src", diag, &mut op, Phase::Elastic, 1, |_| Ok::<(), String>(())).unwrap();
    assert!(matches!(out, RepairOutcome::Failed { .. }));
    let seen = op.client.seen.lock().unwrap();
    assert!(seen[0].contains(diag));
    assert!(seen[0].contains("src"));
}

#[test]
fn fatal_errors_escape_repair() {
    let mut op = LlmOperator::new(NoClient, TranscriptCache::disabled());
    let r = repair_loop("x", "e", &mut op, Phase::Joint, 2, |_| Ok::<(), String>(()));
    assert!(matches!(r, Err(OperatorError::Unavailable(_))));
}

#[test]
fn mock_is_deterministic_and_valid() {
    let parents = vec![fc_identity()];
    for phase in [Phase::Elastic, Phase::Plastic, Phase::Joint] {
        for seed in 0..20 {
            let a = propose_mock(&parents, phase, 4, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = propose_mock(&parents, phase, 4, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            assert_eq!(a.len(), 4);
            for p in &a {
                let law = compile_law(&p.source).unwrap_or_else(|e| panic!("{e}\n{}", p.source));
                if phase == Phase::Elastic {
                    assert_eq!(law.ast.plastic, parents[0].plastic);
                }
                if phase == Phase::Plastic {
                    assert_eq!(law.ast.elastic, parents[0].elastic);
                }
            }
        }
    }
}

#[test]
fn mock_chains_stay_valid() {
    // repeated application keeps every output well-typed
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pool: Vec<LawAst> = catalog_sources().iter().map(|(_, s)| parse_law(s).unwrap()).collect();
    for round in 0..6 {
        let phase = [Phase::Elastic, Phase::Plastic, Phase::Joint][round % 3];
        let next = propose_mock(&pool, phase, 6, &mut rng);
        pool = next.iter().map(|p| parse_law(&p.source).unwrap()).collect();
        for law in &pool {
            typecheck(law.clone()).unwrap();
        }
    }
}

#[test]
fn von_mises_reachable_in_one_plastic_step() {
    let vm_body = parse_law(&compose_source(&FIXED_COROTATED, &VON_MISES)).unwrap().plastic;
    let parents = vec![fc_identity()];
    let hits = (0..20)
        .filter(|&seed| {
            propose_mock(&parents, Phase::Plastic, 4, &mut ChaCha8Rng::seed_from_u64(seed))
                .iter()
                .any(|p| parse_law(&p.source).unwrap().plastic == vm_body)
        })
        .count();
    assert!(hits > 0);
}

#[test]
fn mock_operator_records_transcript() {
    let mut next = 0;
    let parents = init_population(&mut next);
    let mut op = MockOperator::new(5);
    let req = ProposalRequest { parents: &parents, phase: Phase::Elastic, offspring: 4, iteration: 0 };
    let a = op.propose(&req).unwrap();
    let mut op2 = MockOperator::new(5);
    assert_eq!(op2.propose(&req).unwrap(), a);
    assert_eq!(op.transcript().digest(), op2.transcript().digest());
    let other = ProposalRequest { iteration: 1, ..req };
    op2.propose(&other).unwrap();
    assert_ne!(op.transcript().digest(), op2.transcript().digest());
    assert!(a.iter().all(|p| p.parent == Some(0)));
}

#[test]
fn cache_record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cache_dir = dir.path().join("nested").join("cache");
    let mut next = 0;
    let parents = init_population(&mut next);
    let req = ProposalRequest { parents: &parents, phase: Phase::Joint, offspring: 2, iteration: 0 };
    let good = compose_source(&FIXED_COROTATED, &IDENTITY_PLASTIC);
    let reply = format!("{}{}", fenced(&good), fenced(&good));

    let rec = TranscriptCache::new(&cache_dir, CacheMode::Record).unwrap();
    assert!(cache_dir.is_dir());
    let mut live = LlmOperator::new(Scripted::new(vec![Ok(reply)]), rec);
    let first = live.propose(&req).unwrap();
    assert_eq!(first.len(), 2);

    let mut replay = LlmOperator::new(NoClient, TranscriptCache::new(&cache_dir, CacheMode::Replay).unwrap());
    assert_eq!(replay.propose(&req).unwrap(), first);
    assert!(replay.transcript().entries[0].cached);
    assert_eq!(replay.transcript().digest(), live.transcript().digest());

    let changed = ProposalRequest { iteration: 1, ..req };
    assert!(matches!(replay.propose(&changed), Err(OperatorError::CacheMiss(_))));
}

#[test]
fn transcript_digest_ignores_timestamps() {
    let e = TranscriptEntry {
        kind: "propose".into(),
        prompt_digest: "abc".into(),
        response: "r".into(),
        extracted: vec![],
        backoffs: vec![],
        prompt_tokens: None,
        completion_tokens: None,
        cached: false,
        timestamp: 1,
    };
    let mut a = Transcript::default();
    a.push(e.clone());
    let mut b = Transcript::default();
    b.push(TranscriptEntry { timestamp: 99, ..e });
    assert_eq!(a.digest(), b.digest());
    let back: Transcript = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(back.digest(), a.digest());
}

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{DiscoveryResult, EvolutionConfig, HistorySnapshot, Phase};
use crate::fitness::{trajectory_chamfer, SceneObservation, FAILURE_SENTINEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: u64,
    pub iteration: usize,
    pub phase_born: Phase,
    pub parents: Vec<u64>,
    pub fitness: f64,
    pub failure: Option<String>,
}

/// Summary of a discovery run; timings are kept out so reruns compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene: String,
    pub operator: String,
    pub schedule: String,
    pub config: EvolutionConfig,
    pub best_id: u64,
    pub best_source: String,
    pub best_theta: Vec<(String, f64)>,
    pub search_fitness: f64,
    pub best_fitness: f64,
    pub chamfer_vs_gt: f64,
    pub transcript_digest: String,
    pub history_csv: String,
    pub loss_csv: String,
    pub candidates: Vec<ReportRow>,
}

impl RunReport {
    pub fn build(
        result: &DiscoveryResult,
        obs: &SceneObservation,
        scene: &str,
        operator: &str,
        history_csv: &str,
        loss_csv: &str,
    ) -> Self {
        let best = &result.best;
        let fitted = best.fitted.as_ref();
        let theta = fitted.map(|f| f.theta_star.values.clone()).unwrap_or_default();
        let names: Vec<String> = best
            .law
            .as_ref()
            .map(|l| l.ast.params.iter().map(|p| p.name.clone()).collect())
            .unwrap_or_default();
        let chamfer_vs_gt = best
            .law
            .as_ref()
            .and_then(|law| obs.simulate(law, &theta).ok())
            .and_then(|t| trajectory_chamfer(&t.frames, &obs.gt_trajectory.frames).ok())
            .unwrap_or(FAILURE_SENTINEL);
        RunReport {
            scene: scene.to_string(),
            operator: operator.to_string(),
            schedule: result.config.schedule.to_string(),
            config: result.config.clone(),
            best_id: best.id,
            best_source: best.source.clone(),
            best_theta: names.into_iter().zip(theta).collect(),
            search_fitness: result.search_fitness,
            best_fitness: best.fitness(),
            chamfer_vs_gt,
            transcript_digest: result.transcript_digest.clone(),
            history_csv: history_csv.to_string(),
            loss_csv: loss_csv.to_string(),
            candidates: result
                .candidates
                .iter()
                .map(|c| ReportRow {
                    id: c.id,
                    iteration: c.lineage.iteration,
                    phase_born: c.phase_born,
                    parents: c.lineage.parents.clone(),
                    fitness: c.fitness(),
                    failure: c.fitted.as_ref().and_then(|f| f.feedback.failure.clone()),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    /// Plain-text fitness table.
    pub fn table(&self) -> String {
        let mut s = format!("{:>4}  {:>4}  {:<8}  {:>12}  {}\n", "id", "iter", "phase", "fitness", "parents");
        for r in &self.candidates {
            let parents: Vec<String> = r.parents.iter().map(u64::to_string).collect();
            s.push_str(&format!(
                "{:>4}  {:>4}  {:<8}  {:>12.5e}  {}\n",
                r.id,
                r.iteration,
                r.phase_born.to_string(),
                r.fitness,
                parents.join(",")
            ));
        }
        s
    }
}

/// `iteration,phase,best_fitness,best_id,population` per snapshot.
pub fn write_history_csv<W: Write>(mut w: W, history: &[HistorySnapshot]) -> io::Result<()> {
    writeln!(w, "iteration,phase,best_fitness,best_id,population")?;
    for h in history {
        writeln!(w, "{},{},{:e},{},{}", h.iteration, h.phase, h.best_fitness, h.best_id, h.members.len())?;
    }
    Ok(())
}

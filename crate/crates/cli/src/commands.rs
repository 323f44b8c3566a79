use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use lawforge_core::dsl::{compile_law, print_law, ParamVector, TypedLaw};
use lawforge_core::evolution::{
    run_discovery, write_history_csv, DiscoveryResult, DiscoveryState, EvolutionConfig, ReportRow, RunReport,
};
use lawforge_core::fitness::{chamfer_l2, dssim, mse, render_views, SceneObservation, FAILURE_SENTINEL};
use lawforge_core::mpm::{read_meta, run_sim, RecordOptions, Trajectory};
use lawforge_core::operator::{CacheMode, LlmOperator, MockOperator, NoClient, Operator, TranscriptCache};
use lawforge_core::render::{render_splats, Axis, Camera};
use lawforge_core::scene::SceneSpec;
use lawforge_core::Mat3;
use lawforge_live::{HttpChatClient, LiveConfig};
use serde::Serialize;

use crate::args::{DiscoverArgs, EvalArgs, GenSceneArgs, OperatorKind, RenderArgs, ReportArgs, SimulateArgs};
use crate::error::CliError;
use crate::files::{
    read_traj, read_views, resolve_scene, view_dir, write_frames, write_traj, RunLock, FRAMES_DIR,
    GT_FILE, SCENE_FILE,
};

pub const REPORT_FILE: &str = "report.toml";
pub const TIMING_FILE: &str = "timing.toml";
pub const HISTORY_FILE: &str = "history.csv";
pub const LOSS_FILE: &str = "loss.csv";
pub const BEST_LAW_FILE: &str = "best_law.dsl";

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn gen_scene(a: &GenSceneArgs) -> Result<(), CliError> {
    let mut spec = resolve_scene(&a.scene)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.frames {
        spec.config.frames = n;
    }
    spec.validate()?;
    let dir = a.out_dir.join(&spec.name);
    fs::create_dir_all(&dir)?;
    let record = RecordOptions { deformation: true, covariance: a.render };
    let traj = spec.generate::<f64>(record)?;
    write_text(&dir.join(SCENE_FILE), &spec.to_toml())?;
    write_traj(&dir.join(GT_FILE), &traj, None)?;
    if a.render {
        let views = render_views(&traj, &spec.particles()?, &spec.cameras).map_err(|e| CliError::Sim(e.to_string()))?;
        for (v, frames) in views.iter().enumerate() {
            write_frames(&view_dir(&dir.join(FRAMES_DIR), v), frames)?;
        }
    }
    println!(
        "{}: {} particles, {} frames -> {}",
        spec.name,
        traj.particle_count(),
        traj.frame_count(),
        dir.display()
    );
    Ok(())
}

fn evolution_config(a: &DiscoverArgs) -> Result<EvolutionConfig, CliError> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => EvolutionConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { c.$field = v; })* };
    }
    set!(seed, iterations, alternating_iterations, parents_k, offspring_m, eval_budget, refit_budget, lambda);
    if let Some(s) = &a.schedule {
        c.schedule = s.parse().map_err(CliError::Config)?;
    }
    if let Some(l) = &a.loss {
        c.loss_mode = l.parse().map_err(CliError::Config)?;
    }
    c.validate().map_err(CliError::Config)?;
    Ok(c)
}

/// Ground truth from a gen-scene directory, checked against its scene file.
fn load_observation(dir: &Path, config: &EvolutionConfig) -> Result<(SceneSpec, SceneObservation), CliError> {
    let spec = resolve_scene(dir.to_str().ok_or_else(|| CliError::Config("scene path is not UTF-8".into()))?)?;
    if !dir.join(SCENE_FILE).is_file() {
        return Err(CliError::Config(format!("{} is not a scene directory; run gen-scene first", dir.display())));
    }
    let gt_path = dir.join(GT_FILE);
    let gt = read_traj(&gt_path)?;
    let meta = read_meta(&gt_path)?;
    if meta.scene_digest != spec.digest() {
        return Err(CliError::Config(format!(
            "{} was generated from a different scene file; rerun gen-scene",
            gt_path.display()
        )));
    }
    let frames = if config.loss_mode.needs_frames() {
        let root = dir.join(FRAMES_DIR);
        if !root.is_dir() {
            return Err(CliError::Config(format!(
                "{} loss needs observed frames; rerun gen-scene with --render",
                serde_plain(&config.loss_mode)
            )));
        }
        Some(read_views(&root)?)
    } else {
        None
    };
    let obs = SceneObservation::from_parts(
        spec.particles()?,
        spec.config.clone(),
        gt,
        frames,
        spec.cameras.clone(),
        config.loss_mode,
        config.lambda,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok((spec, obs))
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    toml::Value::try_from(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// The winner's source with its fitted values as parameter inits.
pub fn fitted_source(law: &TypedLaw, theta: &ParamVector) -> String {
    let mut ast = law.ast.clone();
    for (p, v) in ast.params.iter_mut().zip(&theta.values) {
        p.init = v.clamp(p.lo, p.hi);
    }
    print_law(&ast)
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    refit_seconds: f64,
    candidates: Vec<CandidateTiming>,
}

#[derive(Serialize)]
struct CandidateTiming {
    id: u64,
    fit_seconds: f64,
}

fn write_outputs(
    run_dir: &Path,
    result: &DiscoveryResult,
    obs: &SceneObservation,
    scene: &str,
    operator: &str,
    total_seconds: f64,
) -> Result<RunReport, CliError> {
    let mut hist = Vec::new();
    write_history_csv(&mut hist, &result.history)?;
    fs::write(run_dir.join(HISTORY_FILE), hist)?;
    let fitted = result.best.fitted.as_ref();
    let mut loss = Vec::new();
    if let Some(f) = fitted {
        f.feedback.write_loss_csv(&mut loss)?;
    }
    fs::write(run_dir.join(LOSS_FILE), loss)?;
    if let (Some(law), Some(f)) = (&result.best.law, fitted) {
        write_text(&run_dir.join(BEST_LAW_FILE), &fitted_source(law, &f.theta_star))?;
    }
    let report = RunReport::build(result, obs, scene, operator, HISTORY_FILE, LOSS_FILE);
    write_text(&run_dir.join(REPORT_FILE), &report.to_toml())?;
    let timing = Timing {
        total_seconds,
        refit_seconds: fitted.map_or(0.0, |f| f.feedback.wall_time),
        candidates: result
            .candidates
            .iter()
            .map(|c| CandidateTiming { id: c.id, fit_seconds: c.fitted.as_ref().map_or(0.0, |f| f.feedback.wall_time) })
            .collect(),
    };
    write_text(&run_dir.join(TIMING_FILE), &toml::to_string(&timing).map_err(|e| CliError::Io(e.to_string()))?)?;
    Ok(report)
}

pub fn discover(a: &DiscoverArgs) -> Result<(), CliError> {
    let config = evolution_config(a)?;
    let (spec, mut obs) = load_observation(&a.scene_dir, &config)?;
    if let Some(n) = a.train_frames {
        if n == 0 || n > obs.config.frames {
            return Err(CliError::Config(format!("--train-frames must be in 1..={}", obs.config.frames)));
        }
        obs = obs.truncated(n);
    }
    let run_dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| a.scene_dir.join("runs").join(format!("{}-seed{}", config.schedule, config.seed)));
    let _lock = RunLock::acquire(&run_dir)?;
    let started = Instant::now();

    let mut mock;
    let mut replay;
    let mut live;
    let op: &mut dyn Operator = match (a.operator, &a.replay) {
        (OperatorKind::Mock, _) => {
            mock = MockOperator::new(config.seed);
            &mut mock
        }
        (OperatorKind::Live, Some(dir)) => {
            if !dir.is_dir() {
                return Err(CliError::Config(format!("replay directory {} does not exist", dir.display())));
            }
            replay = LlmOperator::new(NoClient, TranscriptCache::new(dir, CacheMode::Replay)?);
            &mut replay
        }
        (OperatorKind::Live, None) => {
            let mut lc = LiveConfig::default();
            if let Some(e) = &a.endpoint {
                lc.endpoint = e.clone();
            }
            if let Some(m) = &a.model {
                lc.model = m.clone();
            }
            if let Some(k) = &a.api_key_env {
                lc.api_key_env = k.clone();
            }
            if let Some(n) = a.max_in_flight {
                lc.max_in_flight = n;
            }
            let client = HttpChatClient::from_env(lc)?;
            live = LlmOperator::new(client, TranscriptCache::new(run_dir.join("transcripts"), CacheMode::Record)?);
            &mut live
        }
    };
    let operator_name = op.name().to_string();
    let result = run_discovery(&obs, op, &config, Some(&run_dir))?;
    let report = write_outputs(&run_dir, &result, &obs, &spec.name, &operator_name, started.elapsed().as_secs_f64())?;
    print!("{}", report.table());
    println!(
        "best #{}: search fitness {:.6e}, refit fitness {:.6e}, chamfer vs GT {:.6e}",
        report.best_id, report.search_fitness, report.best_fitness, report.chamfer_vs_gt
    );
    println!("run directory: {}", run_dir.display());
    Ok(())
}

fn label_for(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Per-frame Chamfer table with one column per candidate and a closing mean row.
pub fn chamfer_table(labels: &[String], per_frame: &[Vec<f64>]) -> String {
    let w = labels.iter().map(String::len).max().unwrap_or(0).max(13);
    let mut s = format!("{:>5}", "frame");
    for l in labels {
        let _ = write!(s, "  {l:>w$}");
    }
    s.push('\n');
    let n = per_frame.first().map_or(0, Vec::len);
    for i in 0..n {
        let _ = write!(s, "{i:>5}");
        for col in per_frame {
            let _ = write!(s, "  {:>w$}", format!("{:.6e}", col[i]));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:>5}", "mean");
    for col in per_frame {
        let mean = col.iter().sum::<f64>() / col.len().max(1) as f64;
        let _ = write!(s, "  {:>w$}", format!("{mean:.6e}"));
    }
    s.push('\n');
    s
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let reference = read_traj(&a.reference)?;
    let cands: Vec<Trajectory<f64>> = a.candidates.iter().map(|p| read_traj(p)).collect::<Result<_, _>>()?;
    let labels: Vec<String> = if a.labels.is_empty() {
        a.candidates.iter().map(|p| label_for(p)).collect()
    } else if a.labels.len() == a.candidates.len() {
        a.labels.clone()
    } else {
        return Err(CliError::Config(format!("{} labels for {} candidates", a.labels.len(), a.candidates.len())));
    };
    let mut n = reference.frame_count();
    for (c, l) in cands.iter().zip(&labels) {
        if c.frame_count() != reference.frame_count() && !a.truncate {
            return Err(CliError::Config(format!(
                "structure mismatch: {l} has {} frames, reference has {} (use --truncate)",
                c.frame_count(),
                reference.frame_count()
            )));
        }
        n = n.min(c.frame_count());
    }
    let per_frame: Vec<Vec<f64>> = cands
        .iter()
        .map(|c| {
            (0..n)
                .map(|i| chamfer_l2(&c.frames[i], &reference.frames[i]).map_err(|e| CliError::Config(e.to_string())))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    print!("{}", chamfer_table(&labels, &per_frame));

    if let Some(root) = &a.reference_frames {
        if a.candidate_frames.len() != a.candidates.len() {
            return Err(CliError::Config("--candidate-frames needs one directory per candidate".into()));
        }
        let gt = read_views(root)?;
        let preds: Vec<Vec<Vec<_>>> = a.candidate_frames.iter().map(|d| read_views(d)).collect::<Result<_, _>>()?;
        print!("{}", image_table(&labels, &gt, &preds, a.truncate)?);
    }
    if let Some(path) = &a.csv {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "frame,{}", labels.join(","))?;
        for i in 0..n {
            let row: Vec<String> = per_frame.iter().map(|c| format!("{:e}", c[i])).collect();
            writeln!(w, "{i},{}", row.join(","))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn image_table(
    labels: &[String],
    gt: &[Vec<lawforge_core::render::Frame>],
    preds: &[Vec<Vec<lawforge_core::render::Frame>>],
    truncate: bool,
) -> Result<String, CliError> {
    let w = labels.iter().map(String::len).max().unwrap_or(0).max(13);
    let mut s = format!("{:>5}  {:<6}", "view", "metric");
    for l in labels {
        let _ = write!(s, "  {l:>w$}");
    }
    s.push('\n');
    for (v, gv) in gt.iter().enumerate() {
        let mut cols = Vec::new();
        for (p, l) in preds.iter().zip(labels) {
            let pv = p.get(v).ok_or_else(|| CliError::Config(format!("{l} has no view {v}")))?;
            if pv.len() != gv.len() && !truncate {
                return Err(CliError::Config(format!("structure mismatch: {l} view {v} frame count differs")));
            }
            let n = pv.len().min(gv.len());
            let (mut m, mut d) = (0.0, 0.0);
            for i in 0..n {
                m += mse(&pv[i], &gv[i]).map_err(|e| CliError::Config(e.to_string()))?;
                d += dssim(&pv[i], &gv[i]).map_err(|e| CliError::Config(e.to_string()))?;
            }
            cols.push((m / n as f64, d / n as f64));
        }
        for (name, pick) in [("mse", 0usize), ("dssim", 1)] {
            let _ = write!(s, "{v:>5}  {name:<6}");
            for c in &cols {
                let x = if pick == 0 { c.0 } else { c.1 };
                let _ = write!(s, "  {:>w$}", format!("{x:.6e}"));
            }
            s.push('\n');
        }
    }
    Ok(s)
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let source = fs::read_to_string(&a.law).map_err(|e| CliError::Io(format!("{}: {e}", a.law.display())))?;
    let law = compile_law(&source).map_err(|e| CliError::Parse(format!("{}: {e}", a.law.display())))?;
    let mut spec = resolve_scene(&a.scene)?;
    if let Some(n) = a.frames {
        spec.config.frames = n;
    }
    let mut values = ParamVector::initial(&law.ast).values;
    for kv in &a.theta {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--theta expects NAME=VALUE, got `{kv}`")))?;
        let i = law
            .ast
            .param_index(k.trim())
            .ok_or_else(|| CliError::Config(format!("law declares no parameter `{}`", k.trim())))?;
        values[i] = v.trim().parse().map_err(|_| CliError::Config(format!("bad value in `{kv}`")))?;
    }
    let theta = ParamVector::new(&law.ast, values).map_err(CliError::Config)?;
    let record = RecordOptions { deformation: true, covariance: false };
    let mut traj = run_sim(&spec.particles::<f64>()?, &law, theta.as_slice(), &spec.config, record)?;
    traj.meta.scene = spec.name.clone();
    traj.meta.scene_digest = spec.digest();
    traj.meta.seed = spec.seed;
    let mut extra = toml::Table::new();
    let th: toml::Table =
        law.ast.params.iter().zip(&theta.values).map(|(p, v)| (p.name.clone(), toml::Value::Float(*v))).collect();
    extra.insert("theta".into(), toml::Value::Table(th));
    write_traj(&a.out, &traj, Some(&extra))?;
    println!("{} frames of {} particles -> {}", traj.frame_count(), traj.particle_count(), a.out.display());
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let traj = read_traj(&a.trajectory)?;
    let spec = resolve_scene(&a.scene)?;
    let initial = spec.particles::<f64>()?;
    if initial.len() != traj.particle_count() {
        return Err(CliError::Config(format!(
            "trajectory has {} particles, scene {} seeds {}",
            traj.particle_count(),
            spec.name,
            initial.len()
        )));
    }
    let mut cam = spec.cameras.first().cloned().unwrap_or(Camera {
        axis: Axis::PosZ,
        width: 32,
        height: 32,
        window: [0.0, 0.0, 1.0, 1.0],
        background: [0.0; 3],
    });
    if let Some(ax) = &a.axis {
        cam.axis = ax.parse().map_err(CliError::Config)?;
    }
    if let Some(w) = a.width {
        cam.width = w;
    }
    if let Some(h) = a.height {
        cam.height = h;
    }
    let opacity: Vec<f64> = initial.iter().map(|p| p.opacity).collect();
    let colors: Vec<_> = initial.iter().map(|p| p.color).collect();
    let cov0: Vec<Mat3<f64>> = initial.iter().map(|p| p.cov).collect();
    let mut frames = Vec::with_capacity(traj.frame_count());
    for (i, x) in traj.frames.iter().enumerate() {
        let covs: Vec<Mat3<f64>> = match &traj.deformation {
            Some(d) => d[i].iter().zip(&cov0).map(|(f, a0)| *f * *a0 * f.transpose()).collect(),
            None => cov0.clone(),
        };
        let (f, _) = render_splats(x, &covs, &opacity, &colors, &cam).map_err(|e| CliError::Config(e.to_string()))?;
        frames.push(f);
    }
    write_frames(&a.out_dir, &frames)?;
    println!("{} frames -> {}", frames.len(), a.out_dir.display());
    Ok(())
}

fn rows_from_checkpoint(state: &DiscoveryState) -> Vec<ReportRow> {
    state
        .candidates
        .iter()
        .map(|c| ReportRow {
            id: c.id,
            iteration: c.lineage.iteration,
            phase_born: c.phase_born,
            parents: c.lineage.parents.clone(),
            fitness: c.fitted.as_ref().map_or(FAILURE_SENTINEL, |f| f.fitness),
            failure: c.fitted.as_ref().and_then(|f| f.feedback.failure.clone()),
        })
        .collect()
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let state = DiscoveryState::load(&a.run_dir)?
        .ok_or_else(|| CliError::Config(format!("{} holds no checkpoint", a.run_dir.display())))?;
    let rows = rows_from_checkpoint(&state);
    let path = a.run_dir.join(REPORT_FILE);
    let saved: Option<RunReport> = if path.is_file() {
        let text = fs::read_to_string(&path)?;
        Some(toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?)
    } else {
        None
    };
    if let Some(r) = &saved {
        if r.candidates != rows {
            return Err(CliError::Config(format!("{} disagrees with the checkpoint", path.display())));
        }
        if a.toml {
            print!("{}", r.to_toml());
            return Ok(());
        }
    }
    let table = RunReport {
        scene: String::new(),
        operator: String::new(),
        schedule: state.config.schedule.to_string(),
        config: state.config.clone(),
        best_id: 0,
        best_source: String::new(),
        best_theta: Vec::new(),
        search_fitness: 0.0,
        best_fitness: 0.0,
        chamfer_vs_gt: 0.0,
        transcript_digest: String::new(),
        history_csv: String::new(),
        loss_csv: String::new(),
        candidates: rows,
    }
    .table();
    print!("{table}");
    println!("iterations completed: {}/{}", state.completed_iterations, state.config.iterations);
    match &saved {
        Some(r) => {
            println!("schedule: {}; operator: {}; scene: {}", r.schedule, r.operator, r.scene);
            println!(
                "best #{}: search fitness {:.6e}, refit fitness {:.6e}, chamfer vs GT {:.6e}",
                r.best_id, r.search_fitness, r.best_fitness, r.chamfer_vs_gt
            );
            for (name, v) in &r.best_theta {
                println!("  {name} = {v:.6e}");
            }
        }
        None => println!("run not finished: no {REPORT_FILE} yet"),
    }
    Ok(())
}


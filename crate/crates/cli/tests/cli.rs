use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lawforge_core::dsl::catalog::{compose_source, FIXED_COROTATED, IDENTITY_PLASTIC, NEO_HOOKEAN};
use lawforge_core::fitness::chamfer_l2;
use lawforge_core::mpm::{read_vltj, write_vltj, Trajectory};
use lawforge_core::render::Frame;
use lawforge_core::scene::bundled_scene;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lawforge");

fn lawforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("VISIONLAW_API_KEY").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lawforge(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn traj(path: &Path) -> Trajectory<f32> {
    read_vltj(fs::File::open(path).unwrap()).unwrap()
}

fn ppm(path: &Path) -> Frame {
    Frame::read_ppm(fs::File::open(path).unwrap()).unwrap()
}

/// A short jelly scene at `<dir>/s/jelly`.
fn jelly(frames: usize) -> TempDir {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["gen-scene", "jelly", "--out-dir", "s", "--frames", &frames.to_string()]);
    t
}

const TINY: [&str; 10] = [
    "--iterations",
    "2",
    "--alternating-iterations",
    "1",
    "--offspring-m",
    "2",
    "--eval-budget",
    "2",
    "--refit-budget",
    "2",
];

fn discover(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["discover", "s/jelly"];
    args.extend(TINY);
    args.extend(extra);
    lawforge(dir, &args)
}

#[test]
fn gen_scene_is_reproducible_and_starts_on_the_lattice() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for t in [&a, &b] {
        ok(t.path(), &["gen-scene", "jelly", "--out-dir", "s", "--frames", "3", "--render"]);
    }
    for f in ["scene.toml", "gt.vltj", "gt.vltj.meta.toml", "frames/view0/frame_0003.ppm"] {
        assert_eq!(fs::read(a.path().join("s/jelly").join(f)).unwrap(), fs::read(b.path().join("s/jelly").join(f)).unwrap(), "{f}");
    }
    let gt = traj(&a.path().join("s/jelly/gt.vltj"));
    assert_eq!(gt.frame_count(), 4);
    let lattice: Vec<_> = bundled_scene("jelly").unwrap().particles::<f64>().unwrap().iter().map(|p| p.x.cast::<f32>()).collect();
    assert_eq!(gt.frames[0], lattice);
}

#[test]
fn mock_discovery_is_deterministic_and_reports_its_schedule() {
    let t = jelly(3);
    let d = t.path();
    for (out, schedule) in [("r1", "decoupled"), ("r2", "decoupled"), ("r3", "joint_only")] {
        let o = discover(d, &["--seed", "7", "--out-dir", out, "--schedule", schedule]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let report = |r: &str| fs::read_to_string(d.join(r).join("report.toml")).unwrap();
    assert_eq!(report("r1"), report("r2"));
    let parsed: toml::Table = toml::from_str(&report("r3")).unwrap();
    assert_eq!(parsed["schedule"].as_str(), Some("joint_only"));
    for f in ["history.csv", "loss.csv", "best_law.dsl", "timing.toml", "checkpoint.json"] {
        assert!(d.join("r1").join(f).is_file(), "{f}");
    }
    assert!(!d.join("r1/run.lock").exists());
}

#[test]
fn locked_run_directory_is_refused() {
    let t = jelly(2);
    fs::create_dir_all(t.path().join("run")).unwrap();
    fs::write(t.path().join("run/run.lock"), "1\n").unwrap();
    let o = discover(t.path(), &["--out-dir", "run"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}

#[test]
fn live_operator_without_key_exits_with_operator_code() {
    let t = jelly(2);
    let o = discover(t.path(), &["--operator", "live", "--out-dir", "run"]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("VISIONLAW_API_KEY"));
}

#[test]
fn bad_config_values_exit_with_config_code() {
    let t = jelly(2);
    let o = lawforge(t.path(), &["discover", "s/jelly", "--iterations", "1"]);
    assert_eq!(code(&o), 2);
    let o = lawforge(t.path(), &["discover", "s/jelly", "--loss", "visual"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--render"));
}

/// Answers every request with as many fenced laws as the prompt asks for.
fn chat_stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        let bodies = [compose_source(&NEO_HOOKEAN, &IDENTITY_PLASTIC), compose_source(&FIXED_COROTATED, &IDENTITY_PLASTIC)];
        for stream in listener.incoming() {
            let stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim_end().is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let req = String::from_utf8(buf).unwrap();
            let n: usize = req
                .split("exactly ")
                .nth(1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(1);
            let text: String = (0..n).map(|i| format!("```\n{}```\n", bodies[i % 2])).collect();
            let body = serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": text}}],
                "usage": {"prompt_tokens": 10, "completion_tokens": 20}
            })
            .to_string();
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    url
}

#[test]
fn recorded_live_run_replays_offline() {
    let t = jelly(3);
    let d = t.path();
    let url = chat_stub();
    let mut args = vec!["discover", "s/jelly", "--operator", "live", "--endpoint", &url, "--out-dir", "rec"];
    args.extend(TINY);
    let o = Command::new(BIN).args(&args).current_dir(d).env("VISIONLAW_API_KEY", "test-key").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_dir(d.join("rec/transcripts")).unwrap().count() > 0);

    let o = discover(d, &["--operator", "live", "--replay", "rec/transcripts", "--out-dir", "rep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a: toml::Table = toml::from_str(&fs::read_to_string(d.join("rec/report.toml")).unwrap()).unwrap();
    let b: toml::Table = toml::from_str(&fs::read_to_string(d.join("rep/report.toml")).unwrap()).unwrap();
    for key in ["transcript_digest", "best_source", "best_fitness", "candidates"] {
        assert_eq!(a[key], b[key], "{key}");
    }
}

#[test]
fn report_agrees_with_checkpoint() {
    let t = jelly(3);
    let d = t.path();
    assert!(discover(d, &["--out-dir", "run"]).status.success());
    let table = ok(d, &["report", "run"]);
    let saved: toml::Table = toml::from_str(&fs::read_to_string(d.join("run/report.toml")).unwrap()).unwrap();
    let rows = saved["candidates"].as_array().unwrap();
    assert_eq!(table.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), rows.len());
    assert!(table.contains("iterations completed: 2/2"));
    assert_eq!(ok(d, &["report", "run", "--toml"]), fs::read_to_string(d.join("run/report.toml")).unwrap());

    let path = d.join("run/report.toml");
    let tampered = fs::read_to_string(&path).unwrap().replacen("iteration = 1", "iteration = 0", 1);
    fs::write(&path, tampered).unwrap();
    assert_eq!(code(&lawforge(d, &["report", "run"])), 2);
}

fn law_file(dir: &Path) -> PathBuf {
    let p = dir.join("nh.dsl");
    fs::write(&p, compose_source(&NEO_HOOKEAN, &IDENTITY_PLASTIC)).unwrap();
    p
}

#[test]
fn simulate_reproduces_the_reported_chamfer() {
    let t = jelly(3);
    let d = t.path();
    assert!(discover(d, &["--out-dir", "run"]).status.success());
    ok(d, &["simulate", "run/best_law.dsl", "s/jelly", "--out", "best.vltj"]);
    let saved: toml::Table = toml::from_str(&fs::read_to_string(d.join("run/report.toml")).unwrap()).unwrap();
    let reported = saved["chamfer_vs_gt"].as_float().unwrap();
    let table = ok(d, &["eval", "s/jelly/gt.vltj", "best.vltj"]);
    let mean: f64 = table.lines().last().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((mean - reported).abs() <= 1e-3 * reported.max(1e-9), "{mean} vs {reported}");
}

#[test]
fn simulate_rejects_bad_laws_and_honours_overrides() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    fs::write(d.join("bad.dsl"), "elastic { return F +").unwrap();
    assert_eq!(code(&lawforge(d, &["simulate", "bad.dsl", "jelly"])), 3);
    law_file(d);
    assert_eq!(code(&lawforge(d, &["simulate", "nh.dsl", "jelly", "--theta", "nope=1"])), 2);
    assert_eq!(code(&lawforge(d, &["simulate", "nh.dsl", "jelly", "--theta", "mu=-5"])), 2);
    ok(d, &["simulate", "nh.dsl", "jelly", "--frames", "2", "--out", "a.vltj"]);
    ok(d, &["simulate", "nh.dsl", "jelly", "--frames", "4", "--out", "b.vltj", "--theta", "mu=2e4"]);
    assert_eq!(traj(&d.join("a.vltj")).frame_count(), 3);
    assert_eq!(traj(&d.join("b.vltj")).frame_count(), 5);
    let meta = fs::read_to_string(d.join("b.vltj.meta.toml")).unwrap();
    assert!(meta.contains("mu = 20000.0"), "{meta}");
}

#[test]
fn eval_scores_self_as_zero_and_matches_direct_chamfer() {
    let t = jelly(3);
    let d = t.path();
    let self_table = ok(d, &["eval", "s/jelly/gt.vltj", "s/jelly/gt.vltj"]);
    for line in self_table.lines().skip(1) {
        assert_eq!(line.split_whitespace().nth(1), Some("0.000000e0"), "{line}");
    }

    // Frame i of the candidate is frame i+1 of the reference.
    let mut gt = traj(&d.join("s/jelly/gt.vltj"));
    let mut shifted = gt.clone();
    shifted.frames.remove(0);
    shifted.deformation = None;
    shifted.covariance = None;
    write_vltj(fs::File::create(d.join("shift.vltj")).unwrap(), &shifted).unwrap();
    assert_eq!(code(&lawforge(d, &["eval", "s/jelly/gt.vltj", "shift.vltj"])), 2);
    let table = ok(d, &["eval", "s/jelly/gt.vltj", "shift.vltj", "--truncate", "--csv", "c.csv"]);
    gt.frames.pop();
    let csv = fs::read_to_string(d.join("c.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        let got: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        let want = chamfer_l2(&shifted.frames[i], &gt.frames[i]).unwrap();
        assert!((got - want).abs() <= 1e-12 * want, "frame {i}: {got} vs {want}");
    }
    assert!(table.contains("shift.vltj"));
}

#[test]
fn eval_table_matches_golden() {
    let t = jelly(4);
    let d = t.path();
    law_file(d);
    ok(d, &["simulate", "nh.dsl", "s/jelly", "--theta", "mu=5000", "--out", "soft.vltj"]);
    ok(d, &["simulate", "nh.dsl", "s/jelly", "--theta", "mu=20000", "--out", "stiff.vltj"]);
    let table = ok(d, &["eval", "s/jelly/gt.vltj", "soft.vltj", "stiff.vltj", "--labels", "soft,stiff"]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/eval_jelly.txt");
    if std::env::var_os("LAWFORGE_BLESS").is_some() {
        fs::write(&golden, &table).unwrap();
    }
    let want = fs::read_to_string(&golden).unwrap();
    assert_eq!(table.lines().count(), want.lines().count());
    for (got, want) in table.lines().zip(want.lines()) {
        let (g, w): (Vec<&str>, Vec<&str>) = (got.split_whitespace().collect(), want.split_whitespace().collect());
        assert_eq!(g.len(), w.len(), "{got}");
        for (a, b) in g.iter().zip(&w) {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= 1e-4 * y.abs() + 1e-12, "{got} vs {want}"),
                _ => assert_eq!(a, b),
            }
        }
    }
}

#[test]
fn render_writes_every_frame_reproducibly() {
    let t = jelly(3);
    let d = t.path();
    ok(d, &["render", "s/jelly/gt.vltj", "--scene", "s/jelly", "--out-dir", "a"]);
    ok(d, &["render", "s/jelly/gt.vltj", "--scene", "s/jelly", "--out-dir", "b"]);
    let n = fs::read_dir(d.join("a")).unwrap().count();
    assert_eq!(n, 4);
    for i in 0..n {
        let f = format!("frame_{i:04}.ppm");
        assert_eq!(fs::read(d.join("a").join(&f)).unwrap(), fs::read(d.join("b").join(&f)).unwrap());
    }
    assert_eq!(code(&lawforge(d, &["render", "s/jelly/gt.vltj", "--scene", "bouncy"])), 2);
}

#[test]
fn mirrored_trajectory_from_behind_is_a_horizontal_flip() {
    let t = jelly(3);
    let d = t.path();
    let gt = traj(&d.join("s/jelly/gt.vltj"));
    let mut m = gt.clone();
    for x in m.frames.iter_mut().flatten() {
        x[2] = 1.0 - x[2];
    }
    for f in m.deformation.iter_mut().flatten().flatten() {
        for (i, j) in [(0, 2), (1, 2), (2, 0), (2, 1)] {
            f[(i, j)] = -f[(i, j)];
        }
    }
    m.covariance = None;
    write_vltj(fs::File::create(d.join("mirror.vltj")).unwrap(), &m).unwrap();
    ok(d, &["render", "s/jelly/gt.vltj", "--scene", "s/jelly", "--axis", "+z", "--out-dir", "front"]);
    ok(d, &["render", "mirror.vltj", "--scene", "s/jelly", "--axis", "-z", "--out-dir", "back"]);
    for i in 0..4 {
        let f = format!("frame_{i:04}.ppm");
        assert_eq!(ppm(&d.join("front").join(&f)), ppm(&d.join("back").join(&f)).flip_horizontal(), "{f}");
    }
}

#[test]
fn eval_reports_image_metrics_for_rendered_frames() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path();
    ok(d, &["gen-scene", "jelly", "--out-dir", "s", "--frames", "3", "--render"]);
    ok(d, &["render", "s/jelly/gt.vltj", "--scene", "s/jelly", "--out-dir", "r"]);
    let table = ok(d, &["eval", "s/jelly/gt.vltj", "s/jelly/gt.vltj", "--reference-frames", "s/jelly/frames", "--candidate-frames", "r"]);
    let metrics: Vec<&str> = table.lines().filter(|l| l.contains("mse") || l.contains("dssim")).collect();
    assert_eq!(metrics.len(), 2);
    for l in metrics {
        let v: f64 = l.split_whitespace().last().unwrap().parse().unwrap();
        assert!(v.abs() < 1e-9, "{l}");
    }
}

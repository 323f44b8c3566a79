//! On-disk layout: scene directories, trajectories, frame directories and the run lock.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lawforge_core::mpm::{read_vltj, write_meta, write_vltj, Trajectory};
use lawforge_core::render::Frame;
use lawforge_core::scene::{bundled_scene, SceneSpec};

use crate::error::CliError;

pub const SCENE_FILE: &str = "scene.toml";
pub const GT_FILE: &str = "gt.vltj";
pub const FRAMES_DIR: &str = "frames";
pub const LOCK_FILE: &str = "run.lock";

/// A scene directory, a scene TOML file, or a bundled scene name.
pub fn resolve_scene(arg: &str) -> Result<SceneSpec, CliError> {
    let path = Path::new(arg);
    let file = if path.is_dir() { path.join(SCENE_FILE) } else { path.to_path_buf() };
    if file.is_file() {
        let text = fs::read_to_string(&file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
        let spec = SceneSpec::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
        spec.validate()?;
        return Ok(spec);
    }
    if path.is_dir() {
        return Err(CliError::Config(format!("{} has no {SCENE_FILE}", path.display())));
    }
    Ok(bundled_scene(arg)?)
}

pub fn read_traj(path: &Path) -> Result<Trajectory<f64>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let t = read_vltj::<f32, _>(BufReader::new(f)).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    })?;
    Ok(t.cast())
}

pub fn write_traj(path: &Path, traj: &Trajectory<f64>, extra: Option<&toml::Table>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_vltj(&mut w, traj)?;
    w.flush()?;
    write_meta(path, &traj.meta, extra)?;
    Ok(())
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:04}.ppm"))
}

pub fn view_dir(root: &Path, view: usize) -> PathBuf {
    root.join(format!("view{view}"))
}

pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        let mut w = BufWriter::new(File::create(frame_path(dir, i))?);
        f.write_ppm(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Reads `frame_0000.ppm`, `frame_0001.ppm`, ... until the first gap.
pub fn read_frames(dir: &Path) -> Result<Vec<Frame>, CliError> {
    let mut out = Vec::new();
    loop {
        let p = frame_path(dir, out.len());
        if !p.is_file() {
            break;
        }
        let f = File::open(&p)?;
        out.push(Frame::read_ppm(BufReader::new(f)).map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?);
    }
    if out.is_empty() {
        return Err(CliError::Io(format!("no frames found in {}", dir.display())));
    }
    Ok(out)
}

/// Every `view<N>` subdirectory, in order. A directory of bare frames counts as one view.
pub fn read_views(root: &Path) -> Result<Vec<Vec<Frame>>, CliError> {
    if frame_path(root, 0).is_file() {
        return Ok(vec![read_frames(root)?]);
    }
    let mut views = Vec::new();
    while view_dir(root, views.len()).is_dir() {
        views.push(read_frames(&view_dir(root, views.len()))?);
    }
    if views.is_empty() {
        return Err(CliError::Io(format!("no view directories in {}", root.display())));
    }
    Ok(views)
}

/// Exclusive claim on a run directory, released on drop.
pub struct RunLock(PathBuf);

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "{} is locked by another run ({}); remove it if no run is active",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

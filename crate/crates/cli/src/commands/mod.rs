pub mod genscene;
pub mod metrics;
pub mod refine;
pub mod register;
pub mod supervise;

use std::path::{Path, PathBuf};

use scenereg_core::manifest::{LoadedScene, SceneManifest};

use crate::error::CliError;

pub fn load_scene(path: &Path) -> Result<LoadedScene, CliError> {
    Ok(LoadedScene::load(path)?)
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Saves a manifest read from `from_dir` at `out`. File references stay
/// relative when `out` is in the same directory and become absolute otherwise.
pub fn save_manifest(manifest: &SceneManifest, from_dir: &Path, out: &Path) -> Result<(), CliError> {
    let to_dir = out
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(to_dir).map_err(|e| CliError::io(to_dir, e))?;
    let from = if from_dir.as_os_str().is_empty() {
        Path::new(".")
    } else {
        from_dir
    };
    let mut m = manifest.clone();
    if absolute(from) != absolute(to_dir) {
        let rebase = |rel: &mut String| {
            let p = Path::new(rel.as_str());
            if p.is_relative() {
                *rel = absolute(&from.join(p)).display().to_string();
            }
        };
        for o in &mut m.objects {
            rebase(&mut o.mesh);
        }
        if let Some(s) = m.scan.as_mut() {
            rebase(s);
        }
    }
    Ok(m.save(out)?)
}

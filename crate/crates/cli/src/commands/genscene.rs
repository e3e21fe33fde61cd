use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use scenereg_core::scenegen::{generate, Catalog, Difficulty, SceneRecipe};

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::report::{write_json, Report};

#[derive(Debug, Args)]
pub struct GensceneArgs {
    /// One or more of easy, medium, hard (comma separated or repeated).
    #[arg(long, required = true, value_delimiter = ',')]
    pub difficulty: Vec<Difficulty>,
    /// Scenes per difficulty.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output directory; scenes go to <out>/<difficulty>_<k>/.
    #[arg(long)]
    pub out: PathBuf,
    /// Catalog JSON (default: the built-in fixtures).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SceneSummary {
    pub dir: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub objects: usize,
    pub attempt: usize,
    pub contact_area: f64,
    pub penetration_area: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct DifficultyStats {
    pub count: usize,
    pub mean_contact_area: f64,
    pub mean_penetration_area: f64,
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Body {
    catalog: String,
    scenes: Vec<SceneSummary>,
    per_difficulty: BTreeMap<Difficulty, DifficultyStats>,
}

fn stats(scenes: &[&SceneSummary]) -> DifficultyStats {
    let n = scenes.len() as f64;
    DifficultyStats {
        count: scenes.len(),
        mean_contact_area: scenes.iter().map(|s| s.contact_area).sum::<f64>() / n,
        mean_penetration_area: scenes.iter().map(|s| s.penetration_area).sum::<f64>() / n,
        max_ratio: scenes.iter().filter_map(|s| s.ratio).reduce(f64::max),
    }
}

fn remove_all(dirs: &[PathBuf]) {
    for d in dirs {
        match std::fs::remove_dir_all(d) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => log::warn!("could not remove {}: {e}", d.display()),
        }
    }
}

pub fn run(args: &GensceneArgs, cfg: &RunConfig) -> Result<u8, CliError> {
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let catalog = match &args.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::builtin(),
    };
    let mut difficulties = args.difficulty.clone();
    difficulties.sort();
    difficulties.dedup();
    let jobs: Vec<(Difficulty, usize, PathBuf)> = difficulties
        .iter()
        .flat_map(|&d| (0..args.count).map(move |k| (d, k)))
        .map(|(d, k)| (d, k, args.out.join(format!("{d}_{k:03}"))))
        .collect();
    let created_out = !args.out.exists();
    let mut created = Vec::new();
    for (_, _, dir) in &jobs {
        if dir.exists() {
            std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        created.push(dir.clone());
    }

    let results: Vec<_> = jobs
        .par_iter()
        .map(|(d, k, dir)| {
            let recipe = SceneRecipe::new(*d, cfg.seed.wrapping_add(*k as u64));
            log::info!("generating {}", dir.display());
            generate(&recipe, &catalog, dir, &cfg.scenes).map(|g| (recipe, g))
        })
        .collect();

    let mut scenes = Vec::new();
    for ((d, _, dir), r) in jobs.iter().zip(results) {
        match r {
            Ok((recipe, g)) => scenes.push(SceneSummary {
                dir: rel(dir, &args.out),
                difficulty: *d,
                seed: recipe.seed,
                objects: g.manifest.objects.len(),
                attempt: g.record.attempt,
                contact_area: g.record.contact.contact_area,
                penetration_area: g.record.contact.penetration_area,
                ratio: g.record.contact.ratio,
            }),
            Err(e) => {
                remove_all(&created);
                if created_out {
                    remove_all(std::slice::from_ref(&args.out));
                }
                let err = CliError::from(e);
                return Err(CliError::new(err.code, format!("{}: {}", dir.display(), err.message)));
            }
        }
    }
    let per_difficulty = difficulties
        .iter()
        .map(|&d| {
            (
                d,
                stats(&scenes.iter().filter(|s| s.difficulty == d).collect::<Vec<_>>()),
            )
        })
        .collect();
    let body = Body {
        catalog: args
            .catalog
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "builtin".into()),
        scenes,
        per_difficulty,
    };
    write_json(&args.out.join("summary.json"), &Report::new("genscene", cfg, body))?;
    Ok(exit::OK)
}

fn rel(dir: &Path, base: &Path) -> String {
    dir.strip_prefix(base).unwrap_or(dir).display().to_string()
}

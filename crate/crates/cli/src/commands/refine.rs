use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use scenereg_core::decoder::{apply_residual, mod_forward, read_modw, DecoderError, ModFile, ResidualPose};
use scenereg_core::pose::Pose7DoF;

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::report::{read_json, write_json, Report};

#[derive(Debug, Args)]
pub struct ModArgs {
    /// MODW v1 file carrying the object tokens (its weights are ignored).
    #[arg(long)]
    pub tokens: PathBuf,
    /// MODW v1 file with the decoder weights (any tokens in it are ignored).
    #[arg(long)]
    pub weights: PathBuf,
    /// JSON list of input poses, one per object.
    #[arg(long)]
    pub poses: PathBuf,
    /// Output JSON with the residuals and refined poses.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Body {
    tokens: String,
    weights: String,
    poses: Vec<Pose7DoF>,
    residuals: Vec<ResidualPose>,
}

fn read(path: &Path) -> Result<ModFile, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_modw(std::io::BufReader::new(f)).map_err(|e| {
        let err = CliError::from(e);
        CliError::new(err.code, format!("{}: {}", path.display(), err.message))
    })
}

pub fn run(args: &ModArgs, cfg: &RunConfig) -> Result<u8, CliError> {
    let tokens = read(&args.tokens)?
        .tokens
        .ok_or_else(|| CliError::data(format!("{}: file carries no tokens (N = 0)", args.tokens.display())))?;
    let weights = read(&args.weights)?.weights;
    let poses: Vec<Pose7DoF> = read_json(&args.poses)?;
    if poses.len() != tokens.objects() {
        return Err(DecoderError::ShapeMismatch(format!(
            "{} poses for {} token objects",
            poses.len(),
            tokens.objects()
        ))
        .into());
    }
    let residuals = mod_forward(&tokens, &weights)?;
    let refined = poses
        .iter()
        .zip(&residuals)
        .enumerate()
        .map(|(i, (p, r))| apply_residual(p, r).map_err(|e| CliError::data(format!("object {i}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let body = Body {
        tokens: args.tokens.display().to_string(),
        weights: args.weights.display().to_string(),
        poses: refined,
        residuals,
    };
    write_json(&args.out, &Report::new("mod", cfg, body))?;
    Ok(exit::OK)
}

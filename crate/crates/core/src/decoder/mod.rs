//! Numeric forward pass of the multi-object pose decoder.
//!
//! A block refines pose tokens with per-object self-attention, then
//! self-attention over all objects' tokens flattened into one sequence, then
//! cross-attention from the flattened pose tokens to the flattened shape
//! tokens. After `K` blocks a shared linear layer maps each object's pose
//! tokens to a residual `(dq, dt, dσ)` that is added to the input pose.

mod modw;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{Pose7DoF, PoseError};
use nalgebra::{Quaternion, Vector3};

pub use modw::{read_modw, write_modw, ModFile, MODW_MAGIC};

/// Values produced per object by the decode layer: `dq` (4), `dt` (3), `dσ` (1).
pub const RESIDUAL_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("MODW format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

fn mismatch<T>(msg: impl Into<String>) -> Result<T, DecoderError> {
    Err(DecoderError::ShapeMismatch(msg.into()))
}

/// Query, key, value and output projections, each `C×C`, applied to row tokens as `x Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

impl AttentionWeights {
    pub fn channels(&self) -> usize {
        self.wq.nrows()
    }

    fn matrices(&self) -> [&Array2<f64>; 4] {
        [&self.wq, &self.wk, &self.wv, &self.wo]
    }

    fn random(c: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = Normal::new(0.0, 1.0 / (c as f64).sqrt()).expect("valid std");
        let mut m = || Array2::from_shape_fn((c, c), |_| n.sample(rng));
        Self {
            wq: m(),
            wk: m(),
            wv: m(),
            wo: m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub sa: AttentionWeights,
    pub sa_multi: AttentionWeights,
    pub ca_multi: AttentionWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModWeights {
    pub heads: usize,
    pub blocks: Vec<BlockWeights>,
    /// `RESIDUAL_DIM × (F_p·C)`, shared across objects.
    pub decode_w: Array2<f64>,
    pub decode_b: Array1<f64>,
}

impl ModWeights {
    /// Seeded Gaussian weights with std `1/√fan_in`.
    pub fn random(
        blocks: usize,
        heads: usize,
        channels: usize,
        pose_len: usize,
        seed: u64,
    ) -> Result<Self, DecoderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..blocks)
            .map(|_| BlockWeights {
                sa: AttentionWeights::random(channels, &mut rng),
                sa_multi: AttentionWeights::random(channels, &mut rng),
                ca_multi: AttentionWeights::random(channels, &mut rng),
            })
            .collect();
        let fan_in = pose_len * channels;
        let n = Normal::new(0.0, 1.0 / (fan_in.max(1) as f64).sqrt()).expect("valid std");
        let decode_w = Array2::from_shape_fn((RESIDUAL_DIM, fan_in), |_| n.sample(&mut rng));
        let decode_b = Array1::from_shape_fn(RESIDUAL_DIM, |_| n.sample(&mut rng));
        let w = Self {
            heads,
            blocks,
            decode_w,
            decode_b,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn channels(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.sa.channels())
    }

    /// Pose-token sequence length implied by the decode layer.
    pub fn pose_len(&self) -> usize {
        self.decode_w.ncols().checked_div(self.channels()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        let c = self.channels();
        if self.blocks.is_empty() {
            return mismatch("at least one block is required");
        }
        if self.heads == 0 || c == 0 || !c.is_multiple_of(self.heads) {
            return mismatch(format!(
                "channels {c} must be a positive multiple of heads {}",
                self.heads
            ));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            for a in [&b.sa, &b.sa_multi, &b.ca_multi] {
                if a.matrices().iter().any(|m| m.dim() != (c, c)) {
                    return mismatch(format!("block {k}: projections must be {c}x{c}"));
                }
            }
        }
        if self.decode_w.nrows() != RESIDUAL_DIM
            || self.decode_w.ncols() == 0
            || !self.decode_w.ncols().is_multiple_of(c)
        {
            return mismatch(format!(
                "decode layer must be {RESIDUAL_DIM}x(F_p*{c}), got {:?}",
                self.decode_w.dim()
            ));
        }
        if self.decode_b.len() != RESIDUAL_DIM {
            return mismatch(format!("decode bias must have {RESIDUAL_DIM} entries"));
        }
        Ok(())
    }
}

/// Pose tokens `N×F_p×C` and shape tokens `N×F_s×C`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub pose: Array3<f64>,
    pub shape: Array3<f64>,
}

impl TokenSet {
    pub fn new(pose: Array3<f64>, shape: Array3<f64>) -> Result<Self, DecoderError> {
        let (n, fp, c) = pose.dim();
        let (ns, fs, cs) = shape.dim();
        if n == 0 || fp == 0 || fs == 0 || c == 0 {
            return mismatch("token dimensions must be at least 1");
        }
        if ns != n || cs != c {
            return mismatch(format!(
                "pose tokens {:?} and shape tokens {:?} disagree",
                pose.dim(),
                shape.dim()
            ));
        }
        if pose.iter().chain(shape.iter()).any(|v| !v.is_finite()) {
            return mismatch("tokens must be finite");
        }
        Ok(Self { pose, shape })
    }

    /// Standard normal tokens.
    pub fn random(
        objects: usize,
        pose_len: usize,
        shape_len: usize,
        channels: usize,
        seed: u64,
    ) -> Result<Self, DecoderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).expect("valid std");
        let pose = Array3::from_shape_fn((objects, pose_len, channels), |_| n.sample(&mut rng));
        let shape = Array3::from_shape_fn((objects, shape_len, channels), |_| n.sample(&mut rng));
        Self::new(pose, shape)
    }

    pub fn objects(&self) -> usize {
        self.pose.dim().0
    }

    /// Reorders objects so that output object `i` is input object `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            pose: self.pose.select(Axis(0), perm),
            shape: self.shape.select(Axis(0), perm),
        }
    }
}

/// Raw additive pose residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPose {
    /// `(w, x, y, z)`.
    pub dq: [f64; 4],
    pub dt: [f64; 3],
    pub dsigma: f64,
}

impl ResidualPose {
    pub fn zero() -> Self {
        Self {
            dq: [0.0; 4],
            dt: [0.0; 3],
            dsigma: 0.0,
        }
    }
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Per-head attention probabilities (`L_q × L_k`, rows sum to 1) and the
/// projected output for query tokens `xq` attending to `xkv`.
pub fn attend(
    xq: ArrayView2<f64>,
    xkv: ArrayView2<f64>,
    w: &AttentionWeights,
    heads: usize,
) -> Result<(Array2<f64>, Vec<Array2<f64>>), DecoderError> {
    let c = w.channels();
    if xq.ncols() != c || xkv.ncols() != c {
        return mismatch(format!(
            "tokens have {} / {} channels, weights {c}",
            xq.ncols(),
            xkv.ncols()
        ));
    }
    if heads == 0 || !c.is_multiple_of(heads) {
        return mismatch(format!("channels {c} not divisible by {heads} heads"));
    }
    let q = xq.dot(&w.wq.t());
    let k = xkv.dot(&w.wk.t());
    let v = xkv.dot(&w.wv.t());
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut mixed = Array2::zeros((xq.nrows(), c));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * d..(h + 1) * d];
        let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut a);
        mixed.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        probs.push(a);
    }
    Ok((mixed.dot(&w.wo.t()), probs))
}

/// Multi-head self-attention along the sequence axis of a `B×L×C` tensor,
/// independently per batch entry.
pub fn self_attention(x: ArrayView3<f64>, w: &AttentionWeights, heads: usize) -> Result<Array3<f64>, DecoderError> {
    let mut out = Array3::zeros(x.dim());
    for (b, xb) in x.outer_iter().enumerate() {
        let (y, _) = attend(xb, xb, w, heads)?;
        out.index_axis_mut(Axis(0), b).assign(&y);
    }
    Ok(out)
}

fn flatten(x: ArrayView3<f64>) -> Array2<f64> {
    let (n, f, c) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * f, c))
        .expect("contiguous")
}

/// Self-attention over all objects' pose tokens as one sequence of length `N·F_p`.
pub fn multi_object_self_attention(
    tp: ArrayView3<f64>,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Array3<f64>, DecoderError> {
    let flat = flatten(tp);
    let (y, _) = attend(flat.view(), flat.view(), w, heads)?;
    Ok(y.into_shape_with_order(tp.dim()).expect("same size"))
}

/// Cross-attention from the flattened pose tokens (queries) to the flattened
/// shape tokens of all objects (keys and values).
pub fn multi_object_cross_attention(
    tp: ArrayView3<f64>,
    ts: ArrayView3<f64>,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Array3<f64>, DecoderError> {
    if tp.dim().0 != ts.dim().0 {
        return mismatch(format!("{} pose objects vs {} shape objects", tp.dim().0, ts.dim().0));
    }
    let q = flatten(tp);
    let kv = flatten(ts);
    let (y, _) = attend(q.view(), kv.view(), w, heads)?;
    Ok(y.into_shape_with_order(tp.dim()).expect("same size"))
}

/// Pose tokens after all blocks, `N×F_p×C`.
pub fn mod_encode(tokens: &TokenSet, weights: &ModWeights) -> Result<Array3<f64>, DecoderError> {
    weights.validate()?;
    let (_, fp, c) = tokens.pose.dim();
    if c != weights.channels() || fp != weights.pose_len() {
        return mismatch(format!(
            "tokens have F_p={fp}, C={c}; weights expect F_p={}, C={}",
            weights.pose_len(),
            weights.channels()
        ));
    }
    let h = weights.heads;
    let mut x = tokens.pose.clone();
    for b in &weights.blocks {
        x = self_attention(x.view(), &b.sa, h)?;
        x = multi_object_self_attention(x.view(), &b.sa_multi, h)?;
        x = multi_object_cross_attention(x.view(), tokens.shape.view(), &b.ca_multi, h)?;
    }
    Ok(x)
}

/// Shared linear decode of each object's `F_p·C` features.
pub fn decode(x: ArrayView3<f64>, weights: &ModWeights) -> Vec<ResidualPose> {
    flatten_objects(x)
        .outer_iter()
        .map(|row| {
            let r = weights.decode_w.dot(&row) + &weights.decode_b;
            ResidualPose {
                dq: [r[0], r[1], r[2], r[3]],
                dt: [r[4], r[5], r[6]],
                dsigma: r[7],
            }
        })
        .collect()
}

fn flatten_objects(x: ArrayView3<f64>) -> Array2<f64> {
    let (n, f, c) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, f * c))
        .expect("contiguous")
}

/// Residual pose per object, in input order.
pub fn mod_forward(tokens: &TokenSet, weights: &ModWeights) -> Result<Vec<ResidualPose>, DecoderError> {
    let x = mod_encode(tokens, weights)?;
    Ok(decode(x.view(), weights))
}

/// `q' = normalize(q + dq)`, `t' = t + dt`, `σ' = σ + dσ`.
pub fn apply_residual(p: &Pose7DoF, r: &ResidualPose) -> Result<Pose7DoF, PoseError> {
    let q = p.q().into_inner() + Quaternion::new(r.dq[0], r.dq[1], r.dq[2], r.dq[3]);
    let sigma = p.sigma() + r.dsigma;
    if !(sigma > 0.0) {
        return Err(PoseError::ScaleNonPositive(sigma));
    }
    Pose7DoF::from_parts(q, p.t() + Vector3::from(r.dt), sigma)
}

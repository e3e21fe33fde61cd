//! `MODW v1` container for decoder weights and, optionally, a token set.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "MODW v1\n"                      8 bytes
//! K H C F_p F_s N                  6 × u64
//! for each block k in 0..K:
//!   SA       wq wk wv wo           4 × C×C f64, row-major
//!   SA_multi wq wk wv wo
//!   CA_multi wq wk wv wo
//! decode W                         8 × (F_p·C) f64, row-major
//! decode b                         8 f64
//! T^p                              N × F_p × C f64   (only when N > 0)
//! T^s                              N × F_s × C f64
//! ```
//!
//! A weights-only file has `N = 0` and `F_s = 0`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3};

use super::{AttentionWeights, BlockWeights, DecoderError, ModWeights, TokenSet, RESIDUAL_DIM};

pub const MODW_MAGIC: &[u8; 8] = b"MODW v1\n";
const HEADER_LEN: u64 = 8 + 6 * 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ModFile {
    pub weights: ModWeights,
    pub tokens: Option<TokenSet>,
}

pub fn write_modw(mut w: impl Write, weights: &ModWeights, tokens: Option<&TokenSet>) -> Result<(), DecoderError> {
    weights.validate()?;
    let (c, fp) = (weights.channels(), weights.pose_len());
    let (n, fs) = match tokens {
        Some(t) => {
            let (n, tfp, tc) = t.pose.dim();
            if tfp != fp || tc != c {
                return Err(DecoderError::ShapeMismatch(format!(
                    "tokens F_p={tfp}, C={tc} do not match weights F_p={fp}, C={c}"
                )));
            }
            (n, t.shape.dim().1)
        }
        None => (0, 0),
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MODW_MAGIC);
    for d in [weights.blocks.len(), weights.heads, c, fp, fs, n] {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let mut put = |vals: &mut dyn Iterator<Item = f64>| {
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for b in &weights.blocks {
        for a in [&b.sa, &b.sa_multi, &b.ca_multi] {
            for m in a.matrices() {
                put(&mut m.iter().copied());
            }
        }
    }
    put(&mut weights.decode_w.iter().copied());
    put(&mut weights.decode_b.iter().copied());
    if let Some(t) = tokens {
        put(&mut t.pose.iter().copied());
        put(&mut t.shape.iter().copied());
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, DecoderError> {
        Err(DecoderError::Format {
            offset: offset as u64,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], DecoderError> {
        if self.data.len() - self.pos < n {
            return self.fail(self.data.len(), format!("file ends inside {what}"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64, DecoderError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, count: usize, what: &str) -> Result<Vec<f64>, DecoderError> {
        let start = self.pos;
        let b = self.take(count * 8, what)?;
        let vals: Vec<f64> = b
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return self.fail(start + 8 * i, format!("non-finite value in {what}"));
        }
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>, DecoderError> {
        Ok(Array2::from_shape_vec((rows, cols), self.floats(rows * cols, what)?).expect("sized"))
    }

    fn tensor(&mut self, dims: (usize, usize, usize), what: &str) -> Result<Array3<f64>, DecoderError> {
        Ok(Array3::from_shape_vec(dims, self.floats(dims.0 * dims.1 * dims.2, what)?).expect("sized"))
    }
}

/// Payload length in f64 values, `None` on overflow.
fn payload_len(k: u64, c: u64, fp: u64, fs: u64, n: u64) -> Option<u64> {
    let cc = c.checked_mul(c)?;
    let blocks = k.checked_mul(12)?.checked_mul(cc)?;
    let decode = (RESIDUAL_DIM as u64)
        .checked_mul(fp.checked_mul(c)?)?
        .checked_add(RESIDUAL_DIM as u64)?;
    let tokens = n.checked_mul(fp.checked_add(fs)?)?.checked_mul(c)?;
    blocks.checked_add(decode)?.checked_add(tokens)
}

pub fn read_modw(mut r: impl Read) -> Result<ModFile, DecoderError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    let magic = cur.take(8, "magic")?;
    if magic != MODW_MAGIC {
        return cur.fail(0, "bad magic (expected \"MODW v1\\n\")");
    }
    let names = ["K", "H", "C", "F_p", "F_s", "N"];
    let mut dims = [0u64; 6];
    for (d, name) in dims.iter_mut().zip(names) {
        *d = cur.u64(name)?;
    }
    let [k, h, c, fp, fs, n] = dims;
    for (i, (&d, name)) in dims.iter().zip(names).enumerate().take(4) {
        if d == 0 {
            return cur.fail(8 + 8 * i, format!("{name} must be at least 1"));
        }
    }
    if c % h != 0 {
        return cur.fail(16, format!("C={c} is not divisible by H={h}"));
    }
    if (n == 0) != (fs == 0) {
        return cur.fail(48, "N and F_s must both be zero (weights only) or both positive");
    }
    let expected = payload_len(k, c, fp, fs, n)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .filter(|&v| v <= usize::MAX as u64);
    match expected {
        None => return cur.fail(8, "dimensions overflow"),
        Some(len) if (data.len() as u64) < len => {
            return cur.fail(
                data.len(),
                format!("truncated: header implies {len} bytes, file has {}", data.len()),
            )
        }
        Some(len) if (data.len() as u64) > len => {
            return cur.fail(
                len as usize,
                format!("{} trailing bytes after payload", data.len() as u64 - len),
            )
        }
        Some(_) => {}
    }
    let (k, h, c, fp, fs, n) = (k as usize, h as usize, c as usize, fp as usize, fs as usize, n as usize);
    let mut blocks = Vec::with_capacity(k);
    for b in 0..k {
        let mut layer = |name: &str| -> Result<AttentionWeights, DecoderError> {
            let what = format!("block {b} {name}");
            Ok(AttentionWeights {
                wq: cur.matrix(c, c, &what)?,
                wk: cur.matrix(c, c, &what)?,
                wv: cur.matrix(c, c, &what)?,
                wo: cur.matrix(c, c, &what)?,
            })
        };
        blocks.push(BlockWeights {
            sa: layer("SA")?,
            sa_multi: layer("SA_multi")?,
            ca_multi: layer("CA_multi")?,
        });
    }
    let decode_w = cur.matrix(RESIDUAL_DIM, fp * c, "decode W")?;
    let decode_b = Array1::from(cur.floats(RESIDUAL_DIM, "decode b")?);
    let weights = ModWeights {
        heads: h,
        blocks,
        decode_w,
        decode_b,
    };
    let tokens = if n > 0 {
        let pose = cur.tensor((n, fp, c), "T^p")?;
        let shape = cur.tensor((n, fs, c), "T^s")?;
        Some(TokenSet::new(pose, shape)?)
    } else {
        None
    };
    Ok(ModFile { weights, tokens })
}

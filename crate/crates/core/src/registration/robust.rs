//! Robust losses on squared residuals and the corrector that folds them into
//! a plain Gauss–Newton system.

/// A loss `ρ(s)` on a squared residual `s`.
pub trait RobustLoss: Send + Sync {
    /// `[ρ(s), ρ'(s), ρ''(s)]`
    fn evaluate(&self, s: f64) -> [f64; 3];
}

/// Ordinary least squares, `ρ(s) = s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Trivial;

impl RobustLoss for Trivial {
    fn evaluate(&self, s: f64) -> [f64; 3] {
        [s, 1.0, 0.0]
    }
}

/// Soft-ℓ1 loss `ρ(s) = 2(√(1 + s/f²) − 1)`: quadratic for small residuals,
/// linear in `r = √s` for large ones.
#[derive(Debug, Clone, Copy)]
pub struct SoftL1 {
    pub f_scale: f64,
}

impl RobustLoss for SoftL1 {
    fn evaluate(&self, s: f64) -> [f64; 3] {
        let f2 = self.f_scale * self.f_scale;
        let z = 1.0 + s / f2;
        let sq = z.sqrt();
        [2.0 * (sq - 1.0), 1.0 / (f2 * sq), -0.5 / (f2 * f2 * z * sq)]
    }
}

/// `ρ(s) = 2(√(1 + s/f²) − 1)`.
pub fn soft_l1(s: f64, f: f64) -> f64 {
    SoftL1 { f_scale: f }.evaluate(s)[0]
}

/// Scales a residual block and its Jacobian rows so that the Gauss–Newton
/// normal equations of the corrected block approximate the robustified cost
/// (Triggs correction). With `ρ'' ≤ 0`, as for soft-ℓ1, this reduces to
/// scaling both by `√ρ'`.
#[derive(Debug, Clone, Copy)]
pub struct Corrector {
    sqrt_rho1: f64,
    residual_scaling: f64,
    alpha_sq_norm: f64,
}

impl Corrector {
    pub fn new(sq_norm: f64, rho: [f64; 3]) -> Self {
        let sqrt_rho1 = rho[1].max(0.0).sqrt();
        if sq_norm == 0.0 || rho[2] <= 0.0 {
            return Self {
                sqrt_rho1,
                residual_scaling: sqrt_rho1,
                alpha_sq_norm: 0.0,
            };
        }
        let d = 1.0 + 2.0 * sq_norm * rho[2] / rho[1];
        let alpha = 1.0 - d.sqrt();
        Self {
            sqrt_rho1,
            residual_scaling: sqrt_rho1 / (1.0 - alpha),
            alpha_sq_norm: alpha / sq_norm,
        }
    }

    pub fn correct_residual(&self, r: &mut [f64]) {
        for v in r {
            *v *= self.residual_scaling;
        }
    }

    /// `jacobian` is row-major with `r.len()` rows and `cols` columns; `r` is
    /// the uncorrected residual.
    pub fn correct_jacobian(&self, r: &[f64], jacobian: &mut [f64], cols: usize) {
        if self.alpha_sq_norm == 0.0 {
            for v in jacobian.iter_mut() {
                *v *= self.sqrt_rho1;
            }
            return;
        }
        let rows = r.len();
        for c in 0..cols {
            let rtj: f64 = (0..rows).map(|i| r[i] * jacobian[i * cols + c]).sum();
            for i in 0..rows {
                let j = &mut jacobian[i * cols + c];
                *j = self.sqrt_rho1 * (*j - self.alpha_sq_norm * r[i] * rtj);
            }
        }
    }
}

//! Frozen-coefficient propagators for the linear two-mode Langevin system
//!
//! ```text
//! ḃ = M b + ξ,   M = −i [[δ₁, Λ], [Λ, δ₂]] − ½ diag(γ₁, γ₂),
//! ⟨ξ(t) ξ†(t')⟩ = D δ(t − t'),   D = diag(γ₁ n̄₁, γ₂ n̄₂).
//! ```
//!
//! Over one step the drift is advanced by `exp(M dt)` and the noise is the
//! exact Gaussian increment with covariance `∫₀^dt e^{Ms} D e^{M†s} ds`.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

pub(crate) type CMat2 = Matrix2<C64>;

const I: C64 = C64::new(0.0, 1.0);

/// Drift matrix `M` for the frozen detunings.
pub(crate) fn drift(delta1: f64, delta2: f64, lambda: f64, gamma1: f64, gamma2: f64) -> CMat2 {
    CMat2::new(
        -I * delta1 - 0.5 * gamma1,
        -I * lambda,
        -I * lambda,
        -I * delta2 - 0.5 * gamma2,
    )
}

/// `exp(A)` for a 2×2 complex matrix, from `A = τI + B` with traceless `B`
/// satisfying `B² = qI`.
pub(crate) fn expm2(a: &CMat2) -> CMat2 {
    let tau = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    let b = a - CMat2::identity() * tau;
    let q = b[(0, 0)] * b[(0, 0)] + b[(0, 1)] * b[(1, 0)];
    let (cosh, sinhc) = if q.norm() < 1e-6 {
        // Series to O(q³); truncation error < 1e-20.
        (
            C64::new(1.0, 0.0) + q / 2.0 + q * q / 24.0,
            C64::new(1.0, 0.0) + q / 6.0 + q * q / 120.0,
        )
    } else {
        let s = q.sqrt();
        (s.cosh(), s.sinh() / s)
    };
    (CMat2::identity() * cosh + b * sinhc) * tau.exp()
}

/// Increment covariance over `dt` via the Van Loan block exponential.
pub(crate) fn increment_covariance(m: &CMat2, diffusion: [f64; 2], dt: f64) -> CMat2 {
    if diffusion == [0.0, 0.0] {
        return CMat2::zeros();
    }
    let mut c = Matrix4::<C64>::zeros();
    let mh = m.adjoint();
    for i in 0..2 {
        for j in 0..2 {
            c[(i, j)] = m[(i, j)] * dt;
            c[(i + 2, j + 2)] = -mh[(i, j)] * dt;
        }
        c[(i, i + 2)] = C64::new(diffusion[i] * dt, 0.0);
    }
    let e = c.exp();
    let e11 = e.fixed_view::<2, 2>(0, 0).into_owned();
    let e12 = e.fixed_view::<2, 2>(0, 2).into_owned();
    hermitize(&(e12 * e11.adjoint()))
}

/// Steady-state covariance `C = E[b b†]` solving `MC + CM† + D = 0`.
pub(crate) fn stationary_covariance(m: &CMat2, diffusion: [f64; 2]) -> Result<CMat2> {
    // Column-major vec: vec(MC) = (I⊗M) vec C, vec(CM†) = (conj(M)⊗I) vec C.
    let id = CMat2::identity();
    let lhs = id.kronecker(m) + m.conjugate().kronecker(&id);
    let rhs = nalgebra::Vector4::new(
        C64::new(-diffusion[0], 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(-diffusion[1], 0.0),
    );
    let lu = lhs.lu();
    if lu.determinant().norm() < 1e-300 {
        return Err(Error::param("no stationary state: an undamped mode is not relaxed by any bath"));
    }
    let v = lu
        .solve(&rhs)
        .ok_or_else(|| Error::param("stationary covariance solve failed"))?;
    Ok(hermitize(&CMat2::new(v[0], v[2], v[1], v[3])))
}

pub(crate) fn hermitize(c: &CMat2) -> CMat2 {
    (c + c.adjoint()) * C64::new(0.5, 0.0)
}

/// Lower-triangular `L` with `L L† = C` for a Hermitian PSD 2×2 matrix.
/// Tiny negative pivots from round-off are clamped to zero.
pub(crate) fn cholesky_psd(c: &CMat2) -> [[C64; 2]; 2] {
    let zero = C64::new(0.0, 0.0);
    let a = c[(0, 0)].re.max(0.0);
    let d = c[(1, 1)].re.max(0.0);
    let scale = a.max(d);
    if scale == 0.0 {
        return [[zero, zero], [zero, zero]];
    }
    let l11 = a.sqrt();
    if a > 1e-14 * scale {
        let l21 = c[(1, 0)] / l11;
        let l22 = (d - l21.norm_sqr()).max(0.0).sqrt();
        [[C64::new(l11, 0.0), zero], [l21, C64::new(l22, 0.0)]]
    } else {
        [[zero, zero], [zero, C64::new(d.sqrt(), 0.0)]]
    }
}

/// One frozen-coefficient step: `b ← Φ b + L z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct StepKernel {
    pub phi: CMat2,
    pub chol: [[C64; 2]; 2],
    pub noisy: bool,
}

impl StepKernel {
    pub fn new(m: &CMat2, diffusion: [f64; 2], dt: f64) -> Self {
        let phi = expm2(&(m * C64::new(dt, 0.0)));
        let noisy = diffusion != [0.0, 0.0];
        let chol = if noisy {
            cholesky_psd(&increment_covariance(m, diffusion, dt))
        } else {
            [[C64::new(0.0, 0.0); 2]; 2]
        };
        Self { phi, chol, noisy }
    }

    pub fn covariance(&self) -> CMat2 {
        let l = CMat2::new(self.chol[0][0], self.chol[0][1], self.chol[1][0], self.chol[1][1]);
        l * l.adjoint()
    }

    /// `z` holds two unit complex normals (`E|z|² = 1`).
    #[inline]
    pub fn apply(&self, b: [C64; 2], z: [C64; 2]) -> [C64; 2] {
        let p = &self.phi;
        let mut out = [
            p[(0, 0)] * b[0] + p[(0, 1)] * b[1],
            p[(1, 0)] * b[0] + p[(1, 1)] * b[1],
        ];
        if self.noisy {
            out[0] += self.chol[0][0] * z[0];
            out[1] += self.chol[1][0] * z[0] + self.chol[1][1] * z[1];
        }
        out
    }

    /// Second-moment update `C ← Φ C Φ† + Σ`.
    pub fn propagate_covariance(&self, c: &CMat2) -> CMat2 {
        let next = self.phi * c * self.phi.adjoint();
        if self.noisy {
            hermitize(&(next + self.covariance()))
        } else {
            hermitize(&next)
        }
    }
}

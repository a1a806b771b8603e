//! Physical parameter types and the closed-form normal-mode model.
//!
//! All frequencies are angular (rad/s). Normal-mode frequencies are offsets
//! from a rotating-frame reference: the second membrane for the
//! single-cylinder engine, the mean of both membranes for the straight-twin
//! engine. The constant `-Λ` shift of the bare frequencies is dropped.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::{hz, Error, Result};

/// Largest `gamma / omega0` accepted for a mechanical mode.
pub const MAX_DAMPING_RATIO: f64 = 1e-3;

/// One bare membrane mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    pub label: String,
    /// Carrier angular frequency, rad/s.
    pub omega0: f64,
    /// Energy damping rate, rad/s.
    pub gamma: f64,
}

impl MechanicalMode {
    /// `gamma = 0` is accepted as the undamped limit.
    pub fn new(label: impl Into<String>, omega0: f64, gamma: f64) -> Result<Self> {
        let mode = Self { label: label.into(), omega0, gamma };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::param(format!("{}: omega0 must be positive", self.label)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::param(format!("{}: gamma must be non-negative", self.label)));
        }
        if self.gamma / self.omega0 >= MAX_DAMPING_RATIO {
            return Err(Error::param(format!(
                "{}: gamma/omega0 = {:e} is not in the high-Q regime",
                self.label,
                self.gamma / self.omega0
            )));
        }
        Ok(())
    }
}

/// Two membranes with a cavity-mediated beam-splitter coupling `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSystem {
    pub mode1: MechanicalMode,
    pub mode2: MechanicalMode,
    /// Effective phonon-phonon coupling, rad/s.
    pub lambda: f64,
}

impl CoupledSystem {
    pub fn new(mode1: MechanicalMode, mode2: MechanicalMode, lambda: f64) -> Result<Self> {
        let sys = Self { mode1, mode2, lambda };
        sys.validate()?;
        Ok(sys)
    }

    /// Membranes at 2π×400 kHz with γ/2π = 6 Hz and 12 Hz, Λ/2π = 40 Hz.
    pub fn nominal() -> Self {
        Self {
            mode1: MechanicalMode { label: "M1".into(), omega0: hz(400e3), gamma: hz(6.0) },
            mode2: MechanicalMode { label: "M2".into(), omega0: hz(400e3), gamma: hz(12.0) },
            lambda: hz(40.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode1.validate()?;
        self.mode2.validate()?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param("lambda must be non-negative"));
        }
        Ok(())
    }

    pub fn gamma_max(&self) -> f64 {
        self.mode1.gamma.max(self.mode2.gamma)
    }

    /// `Λ > max(γ₁, γ₂)`: the normal-mode splitting is resolved.
    pub fn is_strongly_coupled(&self) -> bool {
        self.lambda > self.gamma_max()
    }

    /// Carrier frequency used to convert temperatures to occupancies.
    pub fn carrier(&self) -> f64 {
        self.mode2.omega0
    }

    pub fn with_gammas(&self, gamma1: f64, gamma2: f64) -> Self {
        let mut s = self.clone();
        s.mode1.gamma = gamma1;
        s.mode2.gamma = gamma2;
        s
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }
}

/// Cold (room temperature) and hot (white-noise drive) reservoirs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// K
    pub t_cold: f64,
    /// Effective temperature of the noise drive, K.
    pub t_hot: f64,
    /// Frequency in `k_B T / ħω`, rad/s.
    pub occupancy_basis: f64,
}

impl BathSpec {
    pub fn new(t_cold: f64, t_hot: f64, occupancy_basis: f64) -> Result<Self> {
        let b = Self { t_cold, t_hot, occupancy_basis };
        b.validate()?;
        Ok(b)
    }

    /// 295 K against a 60× hotter effective drive, occupancy at 2π×400 kHz.
    pub fn nominal() -> Self {
        Self { t_cold: 295.0, t_hot: 1.77e4, occupancy_basis: hz(400e3) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_cold.is_finite() && self.t_cold > 0.0) {
            return Err(Error::param("t_cold must be positive"));
        }
        if !(self.t_hot.is_finite() && self.t_hot > self.t_cold) {
            return Err(Error::param("t_hot must exceed t_cold"));
        }
        if !(self.occupancy_basis.is_finite() && self.occupancy_basis > 0.0) {
            return Err(Error::param("occupancy basis frequency must be positive"));
        }
        Ok(())
    }

    pub fn n_cold(&self) -> f64 {
        self.t_cold * K_B / (HBAR * self.occupancy_basis)
    }

    pub fn n_hot(&self) -> f64 {
        self.t_hot * K_B / (HBAR * self.occupancy_basis)
    }
}

/// Which pair of normal-mode branches a protocol lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    /// Only membrane 1 is tuned; frame rotates with membrane 2.
    SingleCylinder,
    /// Both membranes are tuned in opposite directions; frame rotates at
    /// their mean frequency.
    StraightTwin,
}

impl EngineKind {
    /// `(ω₊, ω₋)` in this engine's reference frame.
    pub fn branches(self, delta_omega: f64, lambda: f64) -> (f64, f64) {
        match self {
            EngineKind::SingleCylinder => normal_mode_frequencies(delta_omega, lambda),
            EngineKind::StraightTwin => twin_mode_frequencies(delta_omega, lambda),
        }
    }
}

/// `ω± = Δω/2 ± √(Δω²/4 + Λ²)`, relative to membrane 2.
pub fn normal_mode_frequencies(delta_omega: f64, lambda: f64) -> (f64, f64) {
    let half = 0.5 * delta_omega;
    let r = half.hypot(lambda);
    (half + r, half - r)
}

/// `ω± = ±√(Δω²/4 + Λ²)`, relative to the mean membrane frequency.
pub fn twin_mode_frequencies(delta_omega: f64, lambda: f64) -> (f64, f64) {
    let r = (0.5 * delta_omega).hypot(lambda);
    (r, -r)
}

/// Orthogonal bare → normal mode map.
///
/// Stored row-major as `u[i][j] = u_{i+1, j+1}`. Column 0 is the lower
/// branch `(u₁₁, u₂₁)`, column 1 the upper branch `(u₁₂, u₂₂)`, so that
/// `B₊ = u₁₂ b₁ + u₂₂ b₂` and `B₋ = u₁₁ b₁ + u₂₁ b₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeTransform {
    pub u: [[f64; 2]; 2],
}

impl ModeTransform {
    pub fn u11(&self) -> f64 {
        self.u[0][0]
    }
    pub fn u12(&self) -> f64 {
        self.u[0][1]
    }
    pub fn u21(&self) -> f64 {
        self.u[1][0]
    }
    pub fn u22(&self) -> f64 {
        self.u[1][1]
    }

    pub fn upper(&self) -> [f64; 2] {
        [self.u12(), self.u22()]
    }

    pub fn lower(&self) -> [f64; 2] {
        [self.u11(), self.u21()]
    }

    pub fn det(&self) -> f64 {
        self.u11() * self.u22() - self.u12() * self.u21()
    }

    /// Max-norm of `uᵀu − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let dot = self.u[0][a] * self.u[0][b] + self.u[1][a] * self.u[1][b];
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn negate_column(&mut self, col: usize) {
        self.u[0][col] = -self.u[0][col];
        self.u[1][col] = -self.u[1][col];
    }
}

/// Eigenvectors of `[[Δω, Λ], [Λ, 0]]`, sign-fixed so that the upper column
/// tends to `(+1, 0)` as `Δω → +∞` and `det u = +1`.
///
/// With a `previous` transform every column is flipped, if needed, to keep a
/// non-negative overlap with its predecessor.
pub fn mode_transform(
    delta_omega: f64,
    lambda: f64,
    previous: Option<&ModeTransform>,
) -> Result<ModeTransform> {
    if lambda == 0.0 && delta_omega == 0.0 {
        return Err(Error::DegenerateTransform);
    }
    if !(lambda.is_finite() && delta_omega.is_finite()) || lambda < 0.0 {
        return Err(Error::param("mode_transform needs finite delta_omega and lambda >= 0"));
    }
    // Mixing angle: tan 2θ = 2Λ / Δω, θ ∈ [0, π/2].
    let theta = 0.5 * (2.0 * lambda).atan2(delta_omega);
    let (s, c) = theta.sin_cos();
    let mut t = ModeTransform { u: [[s, c], [-c, s]] };
    if let Some(prev) = previous {
        for col in 0..2 {
            let dot = t.u[0][col] * prev.u[0][col] + t.u[1][col] * prev.u[1][col];
            if dot < 0.0 {
                t.negate_column(col);
            }
        }
    }
    Ok(t)
}

/// Landau-Zener leakage into the other branch, `exp(−2πΛ²/|α|)`, for a
/// detuning swept at rate `alpha` (rad/s²).
pub fn lz_diabatic_probability(lambda: f64, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Err(Error::ZeroSweepRate);
    }
    if !alpha.is_finite() || !lambda.is_finite() {
        return Err(Error::param("non-finite sweep rate or coupling"));
    }
    Ok((-std::f64::consts::TAU * lambda * lambda / alpha.abs()).exp())
}

/// Classical equipartition occupancy `k_B T / ħω`.
pub fn thermal_occupancy(temperature: f64, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::param("occupancy frequency must be positive"));
    }
    if !(temperature.is_finite() && temperature >= 0.0) {
        return Err(Error::param("temperature must be non-negative"));
    }
    Ok(K_B * temperature / (HBAR * omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix2, SymmetricEigen};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    const L40: f64 = std::f64::consts::TAU * 40.0;

    #[test]
    fn resonant_splitting_is_two_lambda() {
        let (p, m) = normal_mode_frequencies(0.0, L40);
        assert!(rel(p, L40) < 1e-15);
        assert!(rel(m, -L40) < 1e-15);
    }

    #[test]
    fn detuned_branches_match_high_precision_values() {
        // 100 ± √(100² + 40²) Hz, evaluated with 30-digit arithmetic.
        let (p, m) = normal_mode_frequencies(hz(200.0), L40);
        assert!(rel(p, hz(207.703_296_142_690_1)) < 1e-14);
        assert!(rel(m, hz(-7.703_296_142_690_08)) < 1e-12);
    }

    #[test]
    fn uncoupled_branches_are_bare_frequencies() {
        let (p, m) = normal_mode_frequencies(hz(150.0), 0.0);
        assert_eq!(p, hz(150.0));
        assert_eq!(m, 0.0);
    }

    #[test]
    fn twin_branches() {
        let (p, m) = twin_mode_frequencies(0.0, L40);
        assert!(rel(p, L40) < 1e-15 && rel(m, -L40) < 1e-15);
        let (p, m) = twin_mode_frequencies(hz(720.0), L40);
        assert!(rel(p, hz(362.215_405_525_496_7)) < 1e-14);
        assert_eq!(p, -m);
        let (p, _) = twin_mode_frequencies(hz(-300.0), 0.0);
        assert!(rel(p, hz(150.0)) < 1e-15);
    }

    #[test]
    fn resonant_transform_is_equal_superposition() {
        let t = mode_transform(0.0, L40, None).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((t.u12() - h).abs() < 1e-15 && (t.u22() - h).abs() < 1e-15);
        assert!((t.u11() - h).abs() < 1e-15 && (t.u21() + h).abs() < 1e-15);
        assert!((t.u12() * t.u22() - 0.5).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn detuned_transform_is_dominated_by_membrane_one() {
        let t = mode_transform(hz(200.0), L40, None).unwrap();
        assert!((t.u12() - 0.981_956_386_731_421_8).abs() < 1e-12);
        assert!((t.u22() - 0.189_107_521_154_951_27).abs() < 1e-12);
        assert!((t.det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transform_undefined_at_degeneracy() {
        let err = mode_transform(0.0, 0.0, None).unwrap_err();
        assert_eq!(err.to_string(), "transform undefined at exact degeneracy");
    }

    #[test]
    fn uncoupled_transform_picks_bare_modes() {
        let t = mode_transform(hz(-10.0), 0.0, None).unwrap();
        assert!(t.u12().abs() < 1e-15 && (t.u22() - 1.0).abs() < 1e-15);
        let t = mode_transform(hz(10.0), 0.0, None).unwrap();
        assert!((t.u12() - 1.0).abs() < 1e-15 && t.u22().abs() < 1e-15);
    }

    #[test]
    fn previous_transform_flips_columns() {
        let base = mode_transform(hz(30.0), L40, None).unwrap();
        let mut flipped = base;
        flipped.negate_column(1);
        let t = mode_transform(hz(31.0), L40, Some(&flipped)).unwrap();
        assert!(t.u12() < 0.0 && t.u22() < 0.0);
        assert!(t.u11() > 0.0);
    }

    #[test]
    fn orthogonality_and_eigen_consistency_on_grid() {
        for k in 0..100 {
            let d = hz(-720.0 + 1440.0 * k as f64 / 99.0);
            let t = mode_transform(d, L40, None).unwrap();
            assert!(t.orthogonality_error() < 1e-12);
            assert!((t.det() - 1.0).abs() < 1e-12);

            // uᵀ H u must be diag(ω₋, ω₊).
            let h = [[d, L40], [L40, 0.0]];
            let (wp, wm) = normal_mode_frequencies(d, L40);
            let quad = |a: [f64; 2], b: [f64; 2]| {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += a[i] * h[i][j] * b[j];
                    }
                }
                s
            };
            let scale = wp.abs().max(wm.abs());
            assert!((quad(t.upper(), t.upper()) - wp).abs() / scale < 1e-9);
            assert!((quad(t.lower(), t.lower()) - wm).abs() / scale < 1e-9);
            assert!(quad(t.upper(), t.lower()).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn transform_matches_generic_eigensolver() {
        for d_hz in [-500.0, -80.0, -1.0, 3.0, 200.0, 720.0] {
            let d = hz(d_hz);
            let eig = SymmetricEigen::new(Matrix2::new(d, L40, L40, 0.0));
            let (imax, imin) = if eig.eigenvalues[0] > eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
            let t = mode_transform(d, L40, None).unwrap();
            let up = eig.eigenvectors.column(imax);
            let lo = eig.eigenvectors.column(imin);
            // Eigensolver signs are arbitrary: compare up to sign.
            let ov_up = (up[0] * t.u12() + up[1] * t.u22()).abs();
            let ov_lo = (lo[0] * t.u11() + lo[1] * t.u21()).abs();
            assert!((ov_up - 1.0).abs() < 1e-12 && (ov_lo - 1.0).abs() < 1e-12);
            let (wp, wm) = normal_mode_frequencies(d, L40);
            assert!((eig.eigenvalues[imax] - wp).abs() < 1e-9 * wp.abs().max(1.0));
            assert!((eig.eigenvalues[imin] - wm).abs() < 1e-9 * wm.abs().max(1.0));
        }
    }

    #[test]
    fn continuity_along_sweep() {
        let n = 50;
        let mut prev: Option<ModeTransform> = None;
        for k in 0..n {
            let d = hz(200.0 - 400.0 * k as f64 / (n - 1) as f64);
            let t = mode_transform(d, L40, prev.as_ref()).unwrap();
            if let Some(p) = prev {
                for col in 0..2 {
                    let dot = t.u[0][col] * p.u[0][col] + t.u[1][col] * p.u[1][col];
                    assert!(dot > 0.9, "column {col} overlap {dot} at step {k}");
                }
            }
            assert!(t.u12() >= 0.0 && t.u22() >= 0.0);
            prev = Some(t);
        }
    }

    #[test]
    fn landau_zener_values() {
        let p = lz_diabatic_probability(L40, hz(20e3)).unwrap();
        assert!((p - 0.04).abs() < 0.005, "{p}");
        assert!((p - 0.042_499_056_285_362_54).abs() < 1e-14);
        let p = lz_diabatic_probability(L40, hz(27e3)).unwrap();
        assert!((p - 0.09).abs() < 0.01, "{p}");
        assert_eq!(lz_diabatic_probability(0.0, hz(5e3)).unwrap(), 1.0);
        assert_eq!(lz_diabatic_probability(L40, -hz(20e3)).unwrap(), lz_diabatic_probability(L40, hz(20e3)).unwrap());
        let err = lz_diabatic_probability(L40, 0.0).unwrap_err();
        assert_eq!(err.to_string(), "zero sweep rate; adiabatic limit");
    }

    #[test]
    fn room_temperature_occupancy() {
        let n = thermal_occupancy(295.0, hz(400e3)).unwrap();
        assert!(rel(n, 15_367_006.612_869_745) < 1e-12);
        assert_eq!(thermal_occupancy(0.0, hz(400e3)).unwrap(), 0.0);
        let n2 = thermal_occupancy(590.0, hz(400e3)).unwrap();
        assert!(rel(n2, 2.0 * n) < 1e-15);
        assert!(thermal_occupancy(295.0, 0.0).is_err());
        assert!(thermal_occupancy(295.0, -1.0).is_err());
    }

    #[test]
    fn default_system_is_strongly_coupled() {
        let s = CoupledSystem::nominal();
        assert!(s.is_strongly_coupled());
        assert!(!s.with_lambda(hz(10.0)).is_strongly_coupled());
        let b = BathSpec::nominal();
        assert!((b.n_hot() / b.n_cold() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_low_q_mode() {
        assert!(MechanicalMode::new("M", hz(400e3), hz(1e3)).is_err());
        assert!(MechanicalMode::new("M", -1.0, 1.0).is_err());
        assert!(BathSpec::new(300.0, 200.0, hz(1e5)).is_err());
    }

    proptest! {
        #[test]
        fn prop_branch_order_and_gap(d in -5e3f64..5e3, l in 0.0f64..2e3) {
            let (p, m) = normal_mode_frequencies(d, l);
            prop_assert!(p >= m);
            let gap = 2.0 * (d * d / 4.0 + l * l).sqrt();
            prop_assert!(((p - m) - gap).abs() <= 1e-9 * gap.max(1.0));
        }

        #[test]
        fn prop_twin_branches_symmetric(d in -5e3f64..5e3, l in 0.0f64..2e3) {
            let a = twin_mode_frequencies(d, l);
            let b = twin_mode_frequencies(-d, l);
            prop_assert_eq!(a, b);
            prop_assert!(a.0 >= l && a.0 == -a.1);
        }

        #[test]
        fn prop_transform_orthonormal(d in -5e3f64..5e3, l in 1e-3f64..2e3) {
            let t = mode_transform(d, l, None).unwrap();
            prop_assert!(t.orthogonality_error() < 1e-12);
            prop_assert!((t.det() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_lz_monotone(l in 1.0f64..400.0, a in 1e2f64..1e6, f in 1.01f64..3.0) {
            let p = lz_diabatic_probability(l, a).unwrap();
            let faster = lz_diabatic_probability(l, a * f).unwrap();
            let stronger = lz_diabatic_probability(l * f, a).unwrap();
            prop_assume!(p > 1e-300 && p < 1.0);
            prop_assert!(faster > p);
            prop_assert!(stronger < p);
        }
    }
}

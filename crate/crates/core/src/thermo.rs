//! Normal-mode decomposition and Otto-cycle bookkeeping.
//!
//! Energies of a branch are `ħ(ω_m + ω)N` with `ω` its frame offset. Work on
//! a sweep is `ħ∫N dω` (positive when done on the mode); heat on an
//! isochore is `ħ(ω_m + ω)ΔN`. The engine output `W_total` is minus the
//! summed sweep work.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::dynamics::{BareSeries, TimeGrid, Trajectory};
use crate::model::{mode_transform, CoupledSystem, EngineKind, ModeTransform};
use crate::protocol::{Protocol, Stroke};
use crate::stats::{fit_exponential, histogram, ks_exponential, ExponentialFit, Histogram, KsResult};
use crate::{Error, Result};

/// Width of the averaging window for reported status populations.
pub const STATUS_WINDOW: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Upper,
    Lower,
}

/// Whether branch populations include the bare-mode coherence term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    #[default]
    Full,
    NoCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeSeries {
    pub grid: TimeGrid,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    /// `u₁₂² N₁`
    pub n1_plus: Vec<f64>,
    /// `u₂₂² N₂`
    pub n2_plus: Vec<f64>,
    /// `2 u₁₂ u₂₂ Re(b₁* b₂)`
    pub ncorr_plus: Vec<f64>,
    pub n1_minus: Vec<f64>,
    pub n2_minus: Vec<f64>,
    pub ncorr_minus: Vec<f64>,
    pub u12: Vec<f64>,
    pub u22: Vec<f64>,
    /// Frame offsets, rad/s.
    pub omega_plus: Vec<f64>,
    pub omega_minus: Vec<f64>,
}

impl NormalModeSeries {
    pub fn times(&self) -> &[f64] {
        &self.grid.times
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn population(&self, branch: Branch, accounting: Accounting) -> Vec<f64> {
        match (branch, accounting) {
            (Branch::Upper, Accounting::Full) => self.n_plus.clone(),
            (Branch::Lower, Accounting::Full) => self.n_minus.clone(),
            (Branch::Upper, Accounting::NoCorrelation) => {
                self.n1_plus.iter().zip(&self.n2_plus).map(|(a, b)| a + b).collect()
            }
            (Branch::Lower, Accounting::NoCorrelation) => {
                self.n1_minus.iter().zip(&self.n2_minus).map(|(a, b)| a + b).collect()
            }
        }
    }

    pub fn frequency(&self, branch: Branch) -> &[f64] {
        match branch {
            Branch::Upper => &self.omega_plus,
            Branch::Lower => &self.omega_minus,
        }
    }

    /// Columns `t, n1, n2, n_plus, n_minus, n1_plus, n2_plus, ncorr_plus,
    /// n1_minus, n2_minus, ncorr_minus, u12, u22, u12_u22, omega_plus_hz,
    /// omega_minus_hz`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t,n1,n2,n_plus,n_minus,n1_plus,n2_plus,ncorr_plus,n1_minus,n2_minus,ncorr_minus,u12,u22,u12_u22,omega_plus_hz,omega_minus_hz"
        )?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                self.grid.times[i],
                self.n1[i],
                self.n2[i],
                self.n_plus[i],
                self.n_minus[i],
                self.n1_plus[i],
                self.n2_plus[i],
                self.ncorr_plus[i],
                self.n1_minus[i],
                self.n2_minus[i],
                self.ncorr_minus[i],
                self.u12[i],
                self.u22[i],
                self.u12[i] * self.u22[i],
                crate::to_hz(self.omega_plus[i]),
                crate::to_hz(self.omega_minus[i]),
            )?;
        }
        Ok(())
    }
}

/// Mode transforms along the protocol's detuning on `grid`, sign-continuous
/// from the first sample.
pub fn transforms_on_grid(grid: &TimeGrid, system: &CoupledSystem, protocol: &Protocol) -> Result<Vec<ModeTransform>> {
    let mut out: Vec<ModeTransform> = Vec::with_capacity(grid.len());
    for &t in &grid.times {
        let u = mode_transform(protocol.detuning_at(t), system.lambda, out.last())?;
        out.push(u);
    }
    Ok(out)
}

/// Projects bare second moments onto the instantaneous normal modes.
pub fn decompose(series: &BareSeries, system: &CoupledSystem, protocol: &Protocol) -> Result<NormalModeSeries> {
    let transforms = transforms_on_grid(&series.grid, system, protocol)?;
    Ok(decompose_with(series, &transforms, system.lambda, protocol))
}

pub fn decompose_trajectory(trajectory: &Trajectory, system: &CoupledSystem) -> Result<NormalModeSeries> {
    decompose(&trajectory.bare_series(), system, &trajectory.protocol)
}

/// As [`decompose`] with precomputed transforms (one per grid sample).
pub fn decompose_with(
    series: &BareSeries,
    transforms: &[ModeTransform],
    lambda: f64,
    protocol: &Protocol,
) -> NormalModeSeries {
    let n = series.grid.len();
    assert_eq!(transforms.len(), n, "one transform per sample");
    let mut s = NormalModeSeries {
        grid: series.grid.clone(),
        n1: series.n1.clone(),
        n2: series.n2.clone(),
        n_plus: Vec::with_capacity(n),
        n_minus: Vec::with_capacity(n),
        n1_plus: Vec::with_capacity(n),
        n2_plus: Vec::with_capacity(n),
        ncorr_plus: Vec::with_capacity(n),
        n1_minus: Vec::with_capacity(n),
        n2_minus: Vec::with_capacity(n),
        ncorr_minus: Vec::with_capacity(n),
        u12: Vec::with_capacity(n),
        u22: Vec::with_capacity(n),
        omega_plus: Vec::with_capacity(n),
        omega_minus: Vec::with_capacity(n),
    };
    for i in 0..n {
        let u = &transforms[i];
        let (n1, n2, re) = (series.n1[i], series.n2[i], series.cross[i].re);
        let p1 = u.u12() * u.u12() * n1;
        let p2 = u.u22() * u.u22() * n2;
        let pc = 2.0 * u.u12() * u.u22() * re;
        let m1 = u.u11() * u.u11() * n1;
        let m2 = u.u21() * u.u21() * n2;
        let mc = 2.0 * u.u11() * u.u21() * re;
        s.n1_plus.push(p1);
        s.n2_plus.push(p2);
        s.ncorr_plus.push(pc);
        s.n_plus.push(p1 + p2 + pc);
        s.n1_minus.push(m1);
        s.n2_minus.push(m2);
        s.ncorr_minus.push(mc);
        s.n_minus.push(m1 + m2 + mc);
        s.u12.push(u.u12());
        s.u22.push(u.u22());
        let (wp, wm) = protocol.kind.branches(protocol.detuning_at(series.grid.times[i]), lambda);
        s.omega_plus.push(wp);
        s.omega_minus.push(wm);
    }
    s
}

fn last_cycle(series: &NormalModeSeries) -> Result<usize> {
    if series.grid.n_cycles == 0 {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    Ok(series.grid.n_cycles - 1)
}

fn trapezoid_work(n: &[f64], w: &[f64]) -> f64 {
    n.windows(2).zip(w.windows(2)).map(|(n, w)| 0.5 * (n[0] + n[1]) * (w[1] - w[0])).sum::<f64>() * HBAR
}

/// `ħ∫N dω` over a sweep stroke of the last recorded cycle.
pub fn work_adiabatic_branch(
    series: &NormalModeSeries,
    stroke: Stroke,
    branch: Branch,
    accounting: Accounting,
) -> Result<f64> {
    let (a, b) = series.grid.stroke_range(last_cycle(series)?, stroke);
    let w = &series.frequency(branch)[a..=b];
    if w.iter().all(|x| *x == w[0]) {
        return Err(Error::NotAdiabaticStroke(stroke.label().into()));
    }
    let n = series.population(branch, accounting);
    Ok(trapezoid_work(&n[a..=b], w))
}

/// Upper-branch sweep work with full accounting.
pub fn work_adiabatic(series: &NormalModeSeries, stroke: Stroke) -> Result<f64> {
    work_adiabatic_branch(series, stroke, Branch::Upper, Accounting::Full)
}

/// `ħ(ω_m + ω)(N_end − N_start)` over an isochore of the last recorded
/// cycle.
pub fn heat_isochoric_branch(
    series: &NormalModeSeries,
    stroke: Stroke,
    branch: Branch,
    accounting: Accounting,
    omega_m: f64,
) -> Result<f64> {
    let (a, b) = series.grid.stroke_range(last_cycle(series)?, stroke);
    let w = series.frequency(branch);
    let tol = 1e-9 * w[a].abs().max(1.0);
    if (w[a] - w[b]).abs() > tol || stroke.is_sweep() {
        return Err(Error::NotIsochoricStroke(stroke.label().into()));
    }
    let n = series.population(branch, accounting);
    Ok(HBAR * (omega_m + w[a]) * (n[b] - n[a]))
}

pub fn heat_isochoric(series: &NormalModeSeries, stroke: Stroke, omega_m: f64) -> Result<f64> {
    heat_isochoric_branch(series, stroke, Branch::Upper, Accounting::Full, omega_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub stroke: Stroke,
    /// rad/s offset
    pub omega: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleThermo {
    pub branch: Branch,
    pub accounting: Accounting,
    pub w_12: f64,
    pub q_23: f64,
    pub w_34: f64,
    pub q_41: f64,
    /// Heat exchanged during the two sweeps, `∫ħ(ω_m + ω) dN`.
    pub q_sweep: f64,
    /// Net work delivered, `−(W₁₂ + W₃₄)`.
    pub w_total: f64,
    pub w_abs: f64,
    /// `+1` when the branch delivers work, `−1` when it absorbs it.
    pub w_sign: i8,
    /// Heat taken in on the isochore preceding the branch's expansion.
    pub q_in: f64,
    pub heat_stroke: Stroke,
    pub expansion_stroke: Stroke,
    pub eta: f64,
    pub eta_ideal: f64,
    pub eta_n: f64,
    /// `E(end) − E(start)` of the branch energy over the cycle.
    pub closure_residual: f64,
    /// `W₁₂ + W₃₄ + Q₂₃ + Q₄₁ + Q_sweep − closure_residual`.
    pub first_law_residual: f64,
    pub period: f64,
    /// `w_total / period`, W.
    pub power: f64,
    pub omega_m: f64,
    /// Branch offsets at statuses 1..4, rad/s.
    pub status_omega: [f64; 4],
    /// Populations at statuses 1..4, averaged over [`STATUS_WINDOW`] on the
    /// isochore side of each boundary.
    pub status_n: [f64; 4],
    pub diagram: Vec<DiagramPoint>,
}

impl CycleThermo {
    /// Columns `omega_plus_hz, n_plus, stroke_label` (branch offset and
    /// population, whichever branch this is).
    pub fn write_diagram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "omega_plus_hz,n_plus,stroke_label")?;
        for p in &self.diagram {
            writeln!(w, "{:.8e},{:.8e},{}", crate::to_hz(p.omega), p.n, p.stroke.label())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn window_mean(n: &[f64], times: &[f64], from: usize, to: usize, forward: bool) -> f64 {
    // Samples within STATUS_WINDOW of `from`, walking toward `to`.
    let t0 = times[from];
    let idx: Vec<usize> = if forward { (from..=to).collect() } else { (to..=from).rev().collect() };
    let mut sum = 0.0;
    let mut k = 0usize;
    for i in idx {
        if (times[i] - t0).abs() > STATUS_WINDOW + 1e-12 {
            break;
        }
        sum += n[i];
        k += 1;
    }
    sum / k as f64
}

/// Thermodynamics of one branch over the last recorded cycle.
///
/// The expansion stroke is the sweep that lowers the branch frequency; the
/// intake isochore is the one before it.
pub fn branch_thermo(
    series: &NormalModeSeries,
    protocol: &Protocol,
    branch: Branch,
    accounting: Accounting,
    omega_m: f64,
) -> Result<CycleThermo> {
    let c = last_cycle(series)?;
    let g = &series.grid;
    let n = series.population(branch, accounting);
    let w = series.frequency(branch);
    let times = &g.times;

    let w_12 = work_adiabatic_branch(series, Stroke::Expansion, branch, accounting)?;
    let w_34 = work_adiabatic_branch(series, Stroke::Compression, branch, accounting)?;
    let q_23 = heat_isochoric_branch(series, Stroke::ColdIsochore, branch, accounting, omega_m)?;
    let q_41 = heat_isochoric_branch(series, Stroke::HotIsochore, branch, accounting, omega_m)?;

    let mut q_sweep = 0.0;
    for s in [Stroke::Expansion, Stroke::Compression] {
        let (a, b) = g.stroke_range(c, s);
        q_sweep += (a..b).map(|i| 0.5 * (w[i] + w[i + 1] + 2.0 * omega_m) * (n[i + 1] - n[i])).sum::<f64>() * HBAR;
    }
    let (start, end) = g.cycle_range(c);
    let energy = |i: usize| HBAR * (omega_m + w[i]) * n[i];
    let closure_residual = energy(end) - energy(start);
    let first_law_residual = w_12 + w_34 + q_23 + q_41 + q_sweep - closure_residual;

    let (e_a, e_b) = g.stroke_range(c, Stroke::Expansion);
    let (expansion_stroke, heat_stroke, q_in) =
        if w[e_b] < w[e_a] { (Stroke::Expansion, Stroke::HotIsochore, q_41) } else { (Stroke::Compression, Stroke::ColdIsochore, q_23) };
    let (x_a, x_b) = g.stroke_range(c, expansion_stroke);
    let (w_hi, w_lo) = (w[x_a], w[x_b]);
    let eta_ideal = (w_hi - w_lo) / (omega_m + w_hi);

    let w_total = -(w_12 + w_34);
    if !(q_in > 0.0) {
        return Err(Error::NoHeatIntake);
    }
    let eta = w_total / q_in;

    let (i1, _) = g.stroke_range(c, Stroke::Expansion);
    let (i2, i3) = g.stroke_range(c, Stroke::ColdIsochore);
    let (i4, i1_end) = g.stroke_range(c, Stroke::HotIsochore);
    let status_n = [
        window_mean(&n, times, i1_end, i4, false),
        window_mean(&n, times, i2, i3, true),
        window_mean(&n, times, i3, i2, false),
        window_mean(&n, times, i4, i1_end, true),
    ];
    let status_omega = [w[i1], w[i2], w[i3], w[i4]];

    let mut diagram = Vec::with_capacity(end - start + 4);
    for s in Stroke::ALL {
        let (a, b) = g.stroke_range(c, s);
        diagram.extend((a..=b).map(|i| DiagramPoint { stroke: s, omega: w[i], n: n[i] }));
    }

    Ok(CycleThermo {
        branch,
        accounting,
        w_12,
        q_23,
        w_34,
        q_41,
        q_sweep,
        w_total,
        w_abs: w_total.abs(),
        w_sign: if w_total >= 0.0 { 1 } else { -1 },
        q_in,
        heat_stroke,
        expansion_stroke,
        eta,
        eta_ideal,
        eta_n: eta / eta_ideal,
        closure_residual,
        first_law_residual,
        period: protocol.period,
        power: w_total / protocol.period,
        omega_m,
        status_omega,
        status_n,
        diagram,
    })
}

/// Upper-branch cycle thermodynamics of an ensemble-mean series.
pub fn cycle_thermo(
    series: &NormalModeSeries,
    protocol: &Protocol,
    omega_m: f64,
    accounting: Accounting,
) -> Result<CycleThermo> {
    branch_thermo(series, protocol, Branch::Upper, accounting, omega_m)
}

/// Both branches of a straight-twin cycle: `(upper, lower)`.
pub fn twin_cycle_thermo(
    series: &NormalModeSeries,
    protocol: &Protocol,
    omega_m: f64,
    accounting: Accounting,
) -> Result<(CycleThermo, CycleThermo)> {
    if protocol.kind != EngineKind::StraightTwin {
        return Err(Error::param("twin_cycle_thermo needs a straight-twin protocol"));
    }
    Ok((
        branch_thermo(series, protocol, Branch::Upper, accounting, omega_m)?,
        branch_thermo(series, protocol, Branch::Lower, accounting, omega_m)?,
    ))
}

/// Output work and heat intake of one branch, without the engine check.
/// Used per trajectory, where individual cycles may absorb work.
pub fn branch_work_and_intake(
    series: &NormalModeSeries,
    branch: Branch,
    accounting: Accounting,
    omega_m: f64,
) -> Result<(f64, f64)> {
    let c = last_cycle(series)?;
    let w_12 = work_adiabatic_branch(series, Stroke::Expansion, branch, accounting)?;
    let w_34 = work_adiabatic_branch(series, Stroke::Compression, branch, accounting)?;
    let w = series.frequency(branch);
    let (a, b) = series.grid.stroke_range(c, Stroke::Expansion);
    let heat = if w[b] < w[a] { Stroke::HotIsochore } else { Stroke::ColdIsochore };
    let q_in = heat_isochoric_branch(series, heat, branch, accounting, omega_m)?;
    Ok((-(w_12 + w_34), q_in))
}

pub const MIN_WORK_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution {
    pub fit: ExponentialFit,
    pub ks: KsResult,
    pub histogram: Histogram,
    /// Samples `≤ 0`; these always count against the exponential law.
    pub non_positive: usize,
}

/// Exponential maximum-likelihood fit plus KS goodness of fit.
pub fn work_distribution(works: &[f64]) -> Result<WorkDistribution> {
    if works.len() < MIN_WORK_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_WORK_SAMPLES, got: works.len() });
    }
    let fit = fit_exponential(works)?;
    let ks = ks_exponential(works, fit.mean)?;
    let bins = ((works.len() as f64).sqrt().ceil() as usize).clamp(5, 50);
    Ok(WorkDistribution {
        fit,
        ks,
        histogram: histogram(works, bins),
        non_positive: works.iter().filter(|w| **w <= 0.0).count(),
    })
}

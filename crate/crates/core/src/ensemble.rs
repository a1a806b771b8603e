//! Many-trajectory runs with reproducible seeding.
//!
//! Trajectory `i` always draws from stream `i` of the base seed (see
//! [`StepPlan::simulate_member`]), and
//! per-sample statistics are folded in index order, so results do not
//! depend on the number of workers.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BareSeries, SimConfig, StepPlan};
use crate::exec::Exec;
use crate::io::{write_atomic, write_with};
use crate::model::{BathSpec, CoupledSystem, ModeTransform};
use crate::protocol::{CycleParams, Protocol};
use crate::stats::{mean_std, ratio_se};
use crate::thermo::{
    branch_thermo, branch_work_and_intake, decompose, decompose_with, transforms_on_grid, twin_cycle_thermo,
    Accounting, Branch, CycleThermo, NormalModeSeries,
};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Unrecorded cycles before measurement.
    pub warmup_cycles: usize,
    /// Recorded cycles; thermodynamics use the last one.
    pub n_cycles: usize,
    /// Trajectories held in memory at once.
    pub chunk_size: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { warmup_cycles: 1, n_cycles: 1, chunk_size: 64, exec: Exec::default() }
    }
}

/// Per-trajectory works (output, J) and heat intakes (J) of both branches
/// under both accountings, plus the initial bare populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWork {
    pub index: u64,
    pub w_upper: f64,
    pub q_upper: f64,
    pub w_upper_nocorr: f64,
    pub q_upper_nocorr: f64,
    pub w_lower: f64,
    pub q_lower: f64,
    pub w_lower_nocorr: f64,
    pub q_lower_nocorr: f64,
    /// `N₁`, `N₂` at the first recorded sample (status 1).
    pub n1_start: f64,
    pub n2_start: f64,
}

impl TrajectoryWork {
    pub fn work(&self, branch: Branch, accounting: Accounting) -> (f64, f64) {
        match (branch, accounting) {
            (Branch::Upper, Accounting::Full) => (self.w_upper, self.q_upper),
            (Branch::Upper, Accounting::NoCorrelation) => (self.w_upper_nocorr, self.q_upper_nocorr),
            (Branch::Lower, Accounting::Full) => (self.w_lower, self.q_lower),
            (Branch::Lower, Accounting::NoCorrelation) => (self.w_lower_nocorr, self.q_lower_nocorr),
        }
    }
}

/// Pointwise standard deviations across trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStd {
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    pub n1_plus: Vec<f64>,
    pub n2_plus: Vec<f64>,
    pub ncorr_plus: Vec<f64>,
    pub n1_minus: Vec<f64>,
    pub n2_minus: Vec<f64>,
    pub ncorr_minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub format_version: u32,
    pub n_trajectories: usize,
    pub base_seed: u64,
    pub system: CoupledSystem,
    pub bath: BathSpec,
    pub protocol: Protocol,
    pub sim_config: SimConfig,
    pub options: EnsembleOptions,
    /// Mean bare moments, including `⟨b₁* b₂⟩`.
    pub mean_bare: BareSeries,
    /// Decomposition of `mean_bare`; equal to the mean of the
    /// per-trajectory decompositions.
    pub mean: NormalModeSeries,
    pub std: SeriesStd,
    pub trajectories: Vec<TrajectoryWork>,
}

/// Index of each tracked quantity in the accumulator.
const N_FIELDS: usize = 12;

struct Welford {
    n: f64,
    mean: Vec<[f64; N_FIELDS]>,
    m2: Vec<[f64; N_FIELDS]>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { n: 0.0, mean: vec![[0.0; N_FIELDS]; len], m2: vec![[0.0; N_FIELDS]; len] }
    }

    fn push(&mut self, s: &NormalModeSeries, cross: &[C64]) {
        self.n += 1.0;
        for i in 0..self.mean.len() {
            let x = [
                s.n1[i],
                s.n2[i],
                cross[i].re,
                cross[i].im,
                s.n_plus[i],
                s.n_minus[i],
                s.n1_plus[i],
                s.n2_plus[i],
                s.ncorr_plus[i],
                s.n1_minus[i],
                s.n2_minus[i],
                s.ncorr_minus[i],
            ];
            let (m, q) = (&mut self.mean[i], &mut self.m2[i]);
            for k in 0..N_FIELDS {
                let d = x[k] - m[k];
                m[k] += d / self.n;
                q[k] += d * (x[k] - m[k]);
            }
        }
    }

    fn field(&self, k: usize) -> Vec<f64> {
        self.mean.iter().map(|m| m[k]).collect()
    }

    fn std(&self, k: usize) -> Vec<f64> {
        if self.n < 2.0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|q| (q[k].max(0.0) / (self.n - 1.0)).sqrt()).collect()
    }
}

struct Member {
    series: NormalModeSeries,
    cross: Vec<C64>,
    work: TrajectoryWork,
}

fn run_member(
    plan: &StepPlan,
    transforms: &[ModeTransform],
    system: &CoupledSystem,
    seed: u64,
    index: usize,
    options: &EnsembleOptions,
) -> Result<Member> {
    let tr = plan.simulate_member(None, options.warmup_cycles, options.n_cycles, seed, index as u64)?;
    let bare = tr.bare_series();
    let series = decompose_with(&bare, transforms, system.lambda, plan.protocol());
    let omega_m = system.carrier();
    let (w_upper, q_upper) = branch_work_and_intake(&series, Branch::Upper, Accounting::Full, omega_m)?;
    let (w_upper_nocorr, q_upper_nocorr) =
        branch_work_and_intake(&series, Branch::Upper, Accounting::NoCorrelation, omega_m)?;
    let (w_lower, q_lower) = branch_work_and_intake(&series, Branch::Lower, Accounting::Full, omega_m)?;
    let (w_lower_nocorr, q_lower_nocorr) =
        branch_work_and_intake(&series, Branch::Lower, Accounting::NoCorrelation, omega_m)?;
    let work = TrajectoryWork {
        index: index as u64,
        w_upper,
        q_upper,
        w_upper_nocorr,
        q_upper_nocorr,
        w_lower,
        q_lower,
        w_lower_nocorr,
        q_lower_nocorr,
        n1_start: bare.n1[0],
        n2_start: bare.n2[0],
    };
    Ok(Member { series, cross: bare.cross, work })
}

/// Runs `n` trajectories of `protocol` on streams `0..n` of
/// `sim.seed`.
pub fn run_ensemble(
    system: &CoupledSystem,
    protocol: &Protocol,
    bath: &BathSpec,
    sim: &SimConfig,
    n: usize,
    options: &EnsembleOptions,
) -> Result<EnsembleResult> {
    if n == 0 {
        return Err(Error::param("an ensemble needs at least one trajectory"));
    }
    if options.n_cycles == 0 {
        return Err(Error::param("n_cycles must be at least 1"));
    }
    let plan = StepPlan::new(system, protocol, bath, sim)?;
    let grid = plan.grid(options.n_cycles);
    let transforms = transforms_on_grid(&grid, system, protocol)?;
    let mut acc = Welford::new(grid.len());
    let mut works = Vec::with_capacity(n);
    let chunk = options.chunk_size.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let members = options
            .exec
            .try_map(start..end, |i| run_member(&plan, &transforms, system, sim.seed, i, options))?;
        for m in members {
            acc.push(&m.series, &m.cross);
            works.push(m.work);
        }
        start = end;
    }

    let mean_bare = BareSeries {
        grid: grid.clone(),
        n1: acc.field(0),
        n2: acc.field(1),
        cross: acc.field(2).into_iter().zip(acc.field(3)).map(|(re, im)| C64::new(re, im)).collect(),
    };
    let mean = decompose_with(&mean_bare, &transforms, system.lambda, protocol);
    let std = SeriesStd {
        n1: acc.std(0),
        n2: acc.std(1),
        n_plus: acc.std(4),
        n_minus: acc.std(5),
        n1_plus: acc.std(6),
        n2_plus: acc.std(7),
        ncorr_plus: acc.std(8),
        n1_minus: acc.std(9),
        n2_minus: acc.std(10),
        ncorr_minus: acc.std(11),
    };
    Ok(EnsembleResult {
        format_version: FORMAT_VERSION,
        n_trajectories: n,
        base_seed: sim.seed,
        system: system.clone(),
        bath: *bath,
        protocol: protocol.clone(),
        sim_config: *sim,
        options: *options,
        mean_bare,
        mean,
        std,
        trajectories: works,
    })
}

impl EnsembleResult {
    pub fn omega_m(&self) -> f64 {
        self.system.carrier()
    }

    pub fn thermo(&self, branch: Branch, accounting: Accounting) -> Result<CycleThermo> {
        branch_thermo(&self.mean, &self.protocol, branch, accounting, self.omega_m())
    }

    pub fn twin_thermo(&self, accounting: Accounting) -> Result<(CycleThermo, CycleThermo)> {
        twin_cycle_thermo(&self.mean, &self.protocol, self.omega_m(), accounting)
    }

    pub fn works(&self, branch: Branch, accounting: Accounting) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.work(branch, accounting).0).collect()
    }

    /// Mean output work and its standard error.
    pub fn mean_work(&self, branch: Branch, accounting: Accounting) -> (f64, f64) {
        let (m, s) = mean_std(&self.works(branch, accounting));
        (m, s / (self.n_trajectories as f64).sqrt())
    }

    /// `η_N` of the mean cycle with a ratio-estimator standard error.
    pub fn eta_n(&self, branch: Branch, accounting: Accounting) -> Result<(f64, f64)> {
        let th = self.thermo(branch, accounting)?;
        let (w, q): (Vec<f64>, Vec<f64>) = self.trajectories.iter().map(|t| t.work(branch, accounting)).unzip();
        let (_, se) = ratio_se(&w, &q);
        Ok((th.eta_n, se / th.eta_ideal))
    }

    /// Writes `summary.json` (full result, versioned), `series.csv`,
    /// `std.csv` and `works.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_with(dir.join("series.csv"), |b| self.mean.write_csv(b))?;
        write_with(dir.join("std.csv"), |b| self.write_std_csv(b))?;
        write_with(dir.join("works.csv"), |b| self.write_works_csv(b))?;
        write_atomic(dir.join("summary.json"), serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(dir.as_ref().join("summary.json"))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match v.get("format_version").and_then(|x| x.as_u64()) {
            Some(x) if x == FORMAT_VERSION as u64 => Ok(serde_json::from_value(v)?),
            other => Err(Error::param(format!("unsupported ensemble format_version {other:?}"))),
        }
    }

    pub fn write_std_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let s = &self.std;
        writeln!(w, "t,n1,n2,n_plus,n_minus,n1_plus,n2_plus,ncorr_plus,n1_minus,n2_minus,ncorr_minus")?;
        for (i, t) in self.mean.grid.times.iter().enumerate() {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                t,
                s.n1[i],
                s.n2[i],
                s.n_plus[i],
                s.n_minus[i],
                s.n1_plus[i],
                s.n2_plus[i],
                s.ncorr_plus[i],
                s.n1_minus[i],
                s.n2_minus[i],
                s.ncorr_minus[i]
            )?;
        }
        Ok(())
    }

    pub fn write_works_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "index,w_upper,q_upper,w_upper_nocorr,q_upper_nocorr,w_lower,q_lower,w_lower_nocorr,q_lower_nocorr,n1_start,n2_start"
        )?;
        for t in &self.trajectories {
            writeln!(
                w,
                "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                t.index,
                t.w_upper,
                t.q_upper,
                t.w_upper_nocorr,
                t.q_upper_nocorr,
                t.w_lower,
                t.q_lower,
                t.w_lower_nocorr,
                t.q_lower_nocorr,
                t.n1_start,
                t.n2_start
            )?;
        }
        Ok(())
    }
}

/// Infinite-ensemble mean cycle from exact second-moment propagation.
pub fn ensemble_limit(
    system: &CoupledSystem,
    protocol: &Protocol,
    bath: &BathSpec,
    sim: &SimConfig,
    warmup_cycles: usize,
) -> Result<NormalModeSeries> {
    let plan = StepPlan::new(system, protocol, bath, sim)?;
    let bare = plan.propagate_moments(None, warmup_cycles, 1)?;
    decompose(&bare, system, protocol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub sweep_time: f64,
    pub eta_n: f64,
    pub eta_n_se: f64,
    pub eta_n_nocorr: f64,
    pub eta_n_nocorr_se: f64,
    pub eta_ideal: f64,
    /// Mean-cycle output work, J.
    pub w_total: f64,
    pub w_total_nocorr: f64,
    pub q_in: f64,
}

fn scan_point(
    system: &CoupledSystem,
    base: &CycleParams,
    bath: &BathSpec,
    sim: &SimConfig,
    sweep_time: f64,
    n: usize,
    options: &EnsembleOptions,
) -> Result<ScanPoint> {
    if !(sweep_time.is_finite() && sweep_time > 0.0) {
        return Err(Error::param("sweep times must be positive"));
    }
    let protocol = base.with_sweep_time(sweep_time).build()?;
    let r = run_ensemble(system, &protocol, bath, sim, n, options)?;
    let full = r.thermo(Branch::Upper, Accounting::Full)?;
    let nc = r.thermo(Branch::Upper, Accounting::NoCorrelation)?;
    let (_, se) = r.eta_n(Branch::Upper, Accounting::Full)?;
    let (_, se_nc) = r.eta_n(Branch::Upper, Accounting::NoCorrelation)?;
    Ok(ScanPoint {
        sweep_time,
        eta_n: full.eta_n,
        eta_n_se: se,
        eta_n_nocorr: nc.eta_n,
        eta_n_nocorr_se: se_nc,
        eta_ideal: full.eta_ideal,
        w_total: full.w_total,
        w_total_nocorr: nc.w_total,
        q_in: full.q_in,
    })
}

/// `η_N` against sweep time, with and without the correlation term.
///
/// Every point reuses the same base seed, so neighbouring points share
/// their random numbers and their differences are far less noisy than the
/// points themselves.
pub fn sweep_time_scan(
    system: &CoupledSystem,
    base: &CycleParams,
    bath: &BathSpec,
    sim: &SimConfig,
    sweep_times: &[f64],
    n: usize,
    options: &EnsembleOptions,
) -> Result<Vec<ScanPoint>> {
    sweep_times.iter().map(|&t| scan_point(system, base, bath, sim, t, n, options)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub grid_points: usize,
    /// Stop once the golden-section bracket is narrower than this, s.
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { grid_points: 7, tolerance: 0.5e-3, max_refinements: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub sweep_time: f64,
    pub eta_n: f64,
    pub eta_n_se: f64,
    /// Set when the coarse grid is not unimodal beyond noise; the result is
    /// then the best grid point.
    pub non_unimodal: bool,
    /// Every evaluated point, grid first, in evaluation order.
    pub evaluations: Vec<ScanPoint>,
}

/// True when a significant rise follows a significant fall.
fn has_multiple_modes(points: &[ScanPoint]) -> bool {
    let mut fell = false;
    for w in points.windows(2) {
        let d = w[1].eta_n - w[0].eta_n;
        let noise = 2.0 * w[0].eta_n_se.hypot(w[1].eta_n_se);
        if d < -noise {
            fell = true;
        } else if d > noise && fell {
            return true;
        }
    }
    false
}

/// Maximizes `η_N` over sweep times in `bounds`: a coarse grid locates the
/// best bracket, then golden-section search refines it. All evaluations
/// share one base seed.
pub fn optimize_sweep_time(
    system: &CoupledSystem,
    base: &CycleParams,
    bath: &BathSpec,
    sim: &SimConfig,
    bounds: (f64, f64),
    n: usize,
    options: &EnsembleOptions,
    opt: &OptimizeOptions,
) -> Result<Optimum> {
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(Error::param("optimizer bounds must be positive and ordered"));
    }
    let k = opt.grid_points.max(3);
    let grid: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
    let mut evals = sweep_time_scan(system, base, bath, sim, &grid, n, options)?;
    let best_of = |e: &[ScanPoint]| *e.iter().max_by(|a, b| a.eta_n.total_cmp(&b.eta_n)).expect("non-empty");

    if has_multiple_modes(&evals) {
        let b = best_of(&evals);
        return Ok(Optimum { sweep_time: b.sweep_time, eta_n: b.eta_n, eta_n_se: b.eta_n_se, non_unimodal: true, evaluations: evals });
    }

    let i = evals.iter().enumerate().max_by(|a, b| a.1.eta_n.total_cmp(&b.1.eta_n)).map(|(i, _)| i).unwrap();
    let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(k - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |t: f64, evals: &mut Vec<ScanPoint>| -> Result<f64> {
        let p = scan_point(system, base, bath, sim, t, n, options)?;
        evals.push(p);
        Ok(p.eta_n)
    };
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1, &mut evals)?;
    let mut f2 = eval(x2, &mut evals)?;
    for _ in 0..opt.max_refinements {
        if b - a < opt.tolerance {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1, &mut evals)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2, &mut evals)?;
        }
    }
    let best = best_of(&evals);
    Ok(Optimum { sweep_time: best.sweep_time, eta_n: best.eta_n, eta_n_se: best.eta_n_se, non_unimodal: false, evaluations: evals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz;
    use crate::protocol::build_single_cylinder;

    fn short_protocol() -> Protocol {
        build_single_cylinder(hz(200.0), hz(-200.0), 0.02, 0.06, 0.06).unwrap()
    }

    fn opts(exec: Exec) -> EnsembleOptions {
        EnsembleOptions { chunk_size: 5, exec, ..EnsembleOptions::default() }
    }

    #[test]
    fn single_member_has_zero_spread() {
        let sys = CoupledSystem::nominal();
        let r = run_ensemble(&sys, &short_protocol(), &BathSpec::nominal(), &SimConfig::default(), 1, &opts(Exec::Sequential)).unwrap();
        assert!(r.std.n_plus.iter().all(|s| *s == 0.0));
        let plan = StepPlan::new(&sys, &short_protocol(), &BathSpec::nominal(), &SimConfig::default()).unwrap();
        let tr = plan.simulate_member(None, 1, 1, SimConfig::default().seed, 0).unwrap();
        assert_eq!(r.mean_bare.n1, tr.bare_series().n1);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sys = CoupledSystem::nominal();
        let p = short_protocol();
        let bath = BathSpec::nominal();
        let sim = SimConfig::default();
        let a = run_ensemble(&sys, &p, &bath, &sim, 12, &opts(Exec::Sequential)).unwrap();
        let b = run_ensemble(&sys, &p, &bath, &sim, 12, &opts(Exec::with_workers(4))).unwrap();
        let c = run_ensemble(&sys, &p, &bath, &sim, 12, &EnsembleOptions { chunk_size: 100, ..opts(Exec::with_workers(3)) }).unwrap();
        for r in [&b, &c] {
            assert_eq!(a.mean_bare, r.mean_bare);
            assert_eq!(a.std, r.std);
            assert_eq!(a.trajectories, r.trajectories);
        }
    }

    #[test]
    fn adding_trajectories_keeps_existing_ones() {
        let sys = CoupledSystem::nominal();
        let p = short_protocol();
        let bath = BathSpec::nominal();
        let sim = SimConfig::default();
        let a = run_ensemble(&sys, &p, &bath, &sim, 4, &opts(Exec::Sequential)).unwrap();
        let b = run_ensemble(&sys, &p, &bath, &sim, 7, &opts(Exec::Sequential)).unwrap();
        assert_eq!(a.trajectories[..], b.trajectories[..4]);
    }

    #[test]
    fn save_load_round_trip() {
        let sys = CoupledSystem::nominal();
        let r = run_ensemble(&sys, &short_protocol(), &BathSpec::nominal(), &SimConfig::default(), 3, &opts(Exec::Sequential)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.save(dir.path()).unwrap();
        let back = EnsembleResult::load(dir.path()).unwrap();
        assert_eq!(back, EnsembleResult { options: EnsembleOptions { exec: Exec::default(), ..r.options }, ..r.clone() });
        for f in ["series.csv", "std.csv", "works.csv"] {
            assert!(dir.path().join(f).exists());
        }
        let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        assert!(text.contains("\"format_version\":1"));
    }

    #[test]
    fn multimodality_detection() {
        let p = |t: f64, e: f64| ScanPoint {
            sweep_time: t,
            eta_n: e,
            eta_n_se: 0.01,
            eta_n_nocorr: e,
            eta_n_nocorr_se: 0.01,
            eta_ideal: 5e-4,
            w_total: 0.0,
            w_total_nocorr: 0.0,
            q_in: 1.0,
        };
        let uni = [p(1.0, 0.1), p(2.0, 0.5), p(3.0, 0.3)];
        let bi = [p(1.0, 0.5), p(2.0, 0.1), p(3.0, 0.5)];
        assert!(!has_multiple_modes(&uni));
        assert!(has_multiple_modes(&bi));
    }
}

//! Rotating-frame Langevin dynamics of the two membrane envelopes.
//!
//! Each step freezes the detunings at the step midpoint and applies the
//! exact propagator of the resulting linear SDE: a 2×2 matrix exponential
//! for the drift and a correlated complex Gaussian increment for the noise.
//! For a protocol, all step kernels are precomputed once in a [`StepPlan`]
//! and shared read-only by every trajectory.

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{thermal_occupancy, BathSpec, CoupledSystem};
use crate::propagator::{cholesky_psd, drift, stationary_covariance, CMat2, StepKernel};
use crate::protocol::{Protocol, Stroke};
use crate::{Error, Result};

/// Instantaneous complex envelopes; `|b|²` is a phonon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeState {
    pub b1: C64,
    pub b2: C64,
    pub t: f64,
}

impl EnvelopeState {
    pub fn new(b1: C64, b2: C64) -> Self {
        Self { b1, b2, t: 0.0 }
    }

    pub fn zero() -> Self {
        Self::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.b1.norm_sqr(), self.b2.norm_sqr())
    }

    fn is_finite(&self) -> bool {
        self.b1.is_finite() && self.b2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Requested integrator step, s. Each segment uses the largest step not
    /// exceeding this that tiles it exactly in whole recording strides.
    pub dt: f64,
    /// Integrator steps per recorded sample.
    pub record_stride: usize,
    pub seed: u64,
    /// Off: drop the bath noise terms, keeping the damping.
    pub thermal_noise: bool,
    /// Multiplies both damping rates (and the matching noise) during the
    /// two sweeps. `0.0` gives damping-free sweeps between thermalizing
    /// isochores.
    pub sweep_damping_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 20e-6, record_stride: 5, seed: 0x5eed_2021, thermal_noise: true, sweep_damping_scale: 1.0 }
    }
}

impl SimConfig {
    /// Largest admissible step: 50 steps per period of the fastest rate
    /// among `Λ`, `|Δω|` and the damping rates.
    pub fn max_dt(system: &CoupledSystem, max_abs_detuning: f64) -> f64 {
        let fastest = system.lambda.max(max_abs_detuning).max(system.gamma_max());
        if fastest > 0.0 {
            std::f64::consts::TAU / (50.0 * fastest)
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self, system: &CoupledSystem, max_abs_detuning: f64) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt must be positive"));
        }
        if self.record_stride == 0 {
            return Err(Error::param("record_stride must be at least 1"));
        }
        if !(self.sweep_damping_scale.is_finite() && self.sweep_damping_scale >= 0.0) {
            return Err(Error::param("sweep_damping_scale must be non-negative"));
        }
        let bound = Self::max_dt(system, max_abs_detuning);
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::param(format!("dt = {:e} s exceeds the stability bound {:e} s", self.dt, bound)));
        }
        Ok(())
    }
}

/// Independent random stream `index` under `base_seed`.
///
/// Streams are addressed by counter, so adding trajectories never changes
/// the draws of existing ones.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Words of the stream reserved for each segment of a member trajectory.
const BLOCK_WORDS: u128 = 1 << 40;

/// Where the draws for each segment come from.
trait Noise {
    type R: Rng + ?Sized;
    fn initial(&mut self) -> &mut Self::R;
    fn segment(&mut self, cycle: usize, segment: usize, n_segments: usize) -> &mut Self::R;
}

/// One generator consumed in order.
struct Sequential<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> Noise for Sequential<'_, R> {
    type R = R;
    fn initial(&mut self) -> &mut R {
        self.0
    }
    fn segment(&mut self, _: usize, _: usize, _: usize) -> &mut R {
        self.0
    }
}

/// Each (cycle, segment) reads its own fixed block of one stream. A
/// segment's noise then does not depend on how many draws earlier segments
/// took, so protocols that differ only in sweep length see identical
/// isochore noise.
struct Blocked(ChaCha8Rng);

impl Noise for Blocked {
    type R = ChaCha8Rng;
    fn initial(&mut self) -> &mut ChaCha8Rng {
        self.0.set_word_pos(0);
        &mut self.0
    }
    fn segment(&mut self, cycle: usize, segment: usize, n_segments: usize) -> &mut ChaCha8Rng {
        let block = 1 + (cycle * n_segments + segment) as u128;
        self.0.set_word_pos(block * BLOCK_WORDS);
        &mut self.0
    }
}

/// Complex normal with `E|z|² = 1`, `E z² = 0`.
#[inline]
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

fn diffusion(gamma: [f64; 2], temps: (f64, f64), bath: &BathSpec) -> Result<[f64; 2]> {
    Ok([
        gamma[0] * thermal_occupancy(temps.0, bath.occupancy_basis)?,
        gamma[1] * thermal_occupancy(temps.1, bath.occupancy_basis)?,
    ])
}

/// Advances one state by `dt` with frozen detunings `delta1`, `delta2`
/// (rad/s offsets) and bath temperatures `t1`, `t2` (K). Zero temperatures
/// switch the noise off.
#[allow(clippy::too_many_arguments)]
pub fn step<R: Rng + ?Sized>(
    state: &EnvelopeState,
    dt: f64,
    delta1: f64,
    delta2: f64,
    system: &CoupledSystem,
    t1: f64,
    t2: f64,
    bath: &BathSpec,
    rng: &mut R,
) -> Result<EnvelopeState> {
    let g = [system.mode1.gamma, system.mode2.gamma];
    let m = drift(delta1, delta2, system.lambda, g[0], g[1]);
    let kernel = StepKernel::new(&m, diffusion(g, (t1, t2), bath)?, dt);
    let z = if kernel.noisy { [complex_normal(rng), complex_normal(rng)] } else { [C64::new(0.0, 0.0); 2] };
    let [b1, b2] = kernel.apply([state.b1, state.b2], z);
    let next = EnvelopeState { b1, b2, t: state.t + dt };
    if !next.is_finite() {
        return Err(Error::NumericalBlowUp { t: next.t });
    }
    Ok(next)
}

/// Sample times of a recording plus the sample index where each stroke
/// begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    pub period: f64,
    pub n_cycles: usize,
    pub samples_per_cycle: usize,
    /// Offsets of the four stroke starts within a cycle, in stroke order.
    pub stroke_offsets: [usize; 4],
}

impl TimeGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Inclusive sample range `(first, last)` of `stroke` in `cycle`; both
    /// endpoints are stroke boundaries.
    pub fn stroke_range(&self, cycle: usize, stroke: Stroke) -> (usize, usize) {
        let base = cycle * self.samples_per_cycle;
        let k = stroke.index();
        let first = base + self.stroke_offsets[k];
        let last = if k == 3 { base + self.samples_per_cycle } else { base + self.stroke_offsets[k + 1] };
        (first, last)
    }

    /// Inclusive range covering the whole of `cycle`.
    pub fn cycle_range(&self, cycle: usize) -> (usize, usize) {
        (cycle * self.samples_per_cycle, (cycle + 1) * self.samples_per_cycle)
    }
}

enum Kernels {
    Constant(StepKernel),
    PerStep(Vec<StepKernel>),
}

struct PlanSegment {
    n_steps: usize,
    kernels: Kernels,
}

impl PlanSegment {
    #[inline]
    fn kernel(&self, j: usize) -> &StepKernel {
        match &self.kernels {
            Kernels::Constant(k) => k,
            Kernels::PerStep(v) => &v[j],
        }
    }
}

/// Precomputed step kernels for one period of a protocol.
pub struct StepPlan {
    protocol: Protocol,
    stride: usize,
    segments: Vec<PlanSegment>,
    cycle_times: Vec<f64>,
    stroke_offsets: [usize; 4],
    /// Stationary covariance at status 1 (hot-bath conditions, `t = 0⁻`).
    status1_covariance: Option<CMat2>,
}

impl StepPlan {
    pub fn new(system: &CoupledSystem, protocol: &Protocol, bath: &BathSpec, config: &SimConfig) -> Result<Self> {
        system.validate()?;
        bath.validate()?;
        protocol.ensure_valid()?;
        config.validate(system, protocol.max_abs_detuning().max(protocol.max_abs_offset()))?;

        let noise_factor = if config.thermal_noise { 1.0 } else { 0.0 };
        let gamma = [system.mode1.gamma, system.mode2.gamma];
        let stride = config.record_stride;
        let mut segments = Vec::with_capacity(protocol.segments.len());
        let mut cycle_times = vec![0.0];
        let mut stroke_offsets = [0usize; 4];
        for (k, seg) in protocol.segments.iter().enumerate() {
            stroke_offsets[k] = cycle_times.len() - 1;
            let samples = (seg.duration() / (config.dt * stride as f64) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let n_steps = samples * stride;
            let dt = seg.duration() / n_steps as f64;
            let scale = if seg.stroke.is_sweep() { config.sweep_damping_scale } else { 1.0 };
            let g = [gamma[0] * scale, gamma[1] * scale];
            let temps = if seg.hot_bath_on_mode1 { (bath.t_hot, bath.t_cold) } else { (bath.t_cold, bath.t_cold) };
            let mut d = diffusion(g, temps, bath)?;
            d = [d[0] * noise_factor, d[1] * noise_factor];
            let kernel_at = |t_mid: f64| {
                let (w1, w2) = seg.frequencies_at(t_mid);
                StepKernel::new(&drift(w1, w2, system.lambda, g[0], g[1]), d, dt)
            };
            let kernels = if seg.changes_frequency() {
                Kernels::PerStep((0..n_steps).map(|j| kernel_at(seg.t_start + (j as f64 + 0.5) * dt)).collect())
            } else {
                Kernels::Constant(kernel_at(seg.t_start))
            };
            for j in 1..=samples {
                cycle_times.push(seg.t_start + (j * stride) as f64 * dt);
            }
            // Pin the last sample to the exact boundary.
            *cycle_times.last_mut().unwrap() = seg.t_end;
            segments.push(PlanSegment { n_steps, kernels });
        }

        let status1_covariance = if config.thermal_noise {
            let last = protocol.segments.last().expect("validated");
            let (w1, w2) = last.frequencies_at(last.t_end);
            let temps = if last.hot_bath_on_mode1 { (bath.t_hot, bath.t_cold) } else { (bath.t_cold, bath.t_cold) };
            let m = drift(w1, w2, system.lambda, gamma[0], gamma[1]);
            stationary_covariance(&m, diffusion(gamma, temps, bath)?).ok()
        } else {
            Some(CMat2::zeros())
        };

        Ok(Self { protocol: protocol.clone(), stride, segments, cycle_times, stroke_offsets, status1_covariance })
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn samples_per_cycle(&self) -> usize {
        self.cycle_times.len() - 1
    }

    pub fn steps_per_cycle(&self) -> usize {
        self.segments.iter().map(|s| s.n_steps).sum()
    }

    pub fn grid(&self, n_cycles: usize) -> TimeGrid {
        let spc = self.samples_per_cycle();
        let period = self.protocol.period;
        let mut times = Vec::with_capacity(n_cycles * spc + 1);
        for c in 0..n_cycles {
            let base = c as f64 * period;
            times.extend(self.cycle_times[..spc].iter().map(|t| base + t));
        }
        times.push(n_cycles as f64 * period);
        TimeGrid { times, period, n_cycles, samples_per_cycle: spc, stroke_offsets: self.stroke_offsets }
    }

    /// Stationary covariance `E[b b†]` under the hot-isochore conditions.
    pub fn status1_moments(&self) -> Result<[[C64; 2]; 2]> {
        let c = self.status1_covariance.ok_or_else(|| {
            Error::param("no stationary status-1 state (undamped mode); supply an explicit initial state")
        })?;
        Ok([[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]])
    }

    pub fn sample_status1<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnvelopeState> {
        let m = self.status1_moments()?;
        let c = CMat2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
        let l = cholesky_psd(&c);
        let z = [complex_normal(rng), complex_normal(rng)];
        Ok(EnvelopeState::new(l[0][0] * z[0], l[1][0] * z[0] + l[1][1] * z[1]))
    }

    fn run_cycle<N: Noise>(
        &self,
        b: &mut [C64; 2],
        cycle: usize,
        t0: f64,
        noise: &mut N,
        mut record: impl FnMut([C64; 2]),
    ) -> Result<()> {
        let zero = [C64::new(0.0, 0.0); 2];
        let mut seg_t = t0;
        let n_seg = self.segments.len();
        for (si, (seg, spec)) in self.segments.iter().zip(&self.protocol.segments).enumerate() {
            let rng = noise.segment(cycle, si, n_seg);
            for j in 0..seg.n_steps {
                let k = seg.kernel(j);
                let z = if k.noisy { [complex_normal(rng), complex_normal(rng)] } else { zero };
                *b = k.apply(*b, z);
                if (j + 1) % self.stride == 0 {
                    if !(b[0].is_finite() && b[1].is_finite()) {
                        let t = seg_t + (j + 1) as f64 * spec.duration() / seg.n_steps as f64;
                        return Err(Error::NumericalBlowUp { t });
                    }
                    record(*b);
                }
            }
            seg_t += spec.duration();
        }
        Ok(())
    }

    /// Runs `warmup_cycles` unrecorded, then records `n_cycles`, drawing
    /// everything from `rng` in order. Without an explicit initial state one
    /// is drawn from the status-1 stationary distribution.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        initial: Option<EnvelopeState>,
        warmup_cycles: usize,
        n_cycles: usize,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.run(initial, warmup_cycles, n_cycles, &mut Sequential(rng))
    }

    /// Member `index` of an ensemble under `base_seed`: like
    /// [`simulate`](Self::simulate) on [`trajectory_rng`], except that every
    /// segment of every cycle reads a fixed block of the stream. Ensembles of
    /// protocols that differ only in sweep time therefore share their
    /// isochore noise trajectory by trajectory.
    pub fn simulate_member(
        &self,
        initial: Option<EnvelopeState>,
        warmup_cycles: usize,
        n_cycles: usize,
        base_seed: u64,
        index: u64,
    ) -> Result<Trajectory> {
        self.run(initial, warmup_cycles, n_cycles, &mut Blocked(trajectory_rng(base_seed, index)))
    }

    fn run<N: Noise>(
        &self,
        initial: Option<EnvelopeState>,
        warmup_cycles: usize,
        n_cycles: usize,
        noise: &mut N,
    ) -> Result<Trajectory> {
        if n_cycles == 0 {
            return Err(Error::param("n_cycles must be at least 1"));
        }
        let init = match initial {
            Some(s) => s,
            None => self.sample_status1(noise.initial())?,
        };
        let mut b = [init.b1, init.b2];
        for c in 0..warmup_cycles {
            self.run_cycle(&mut b, c, 0.0, noise, |_| {})?;
        }
        let grid = self.grid(n_cycles);
        let mut b1 = Vec::with_capacity(grid.len());
        let mut b2 = Vec::with_capacity(grid.len());
        b1.push(b[0]);
        b2.push(b[1]);
        for c in 0..n_cycles {
            self.run_cycle(&mut b, warmup_cycles + c, c as f64 * self.protocol.period, noise, |s| {
                b1.push(s[0]);
                b2.push(s[1]);
            })?;
        }
        debug_assert_eq!(b1.len(), grid.len());
        Ok(Trajectory { grid, b1, b2, protocol: self.protocol.clone() })
    }

    /// Deterministic ensemble limit: propagates `C = E[b b†]` with the same
    /// kernels, `C ← Φ C Φ† + Σ`.
    pub fn propagate_moments(
        &self,
        initial: Option<[[C64; 2]; 2]>,
        warmup_cycles: usize,
        n_cycles: usize,
    ) -> Result<BareSeries> {
        let m = match initial {
            Some(m) => m,
            None => self.status1_moments()?,
        };
        let mut c = CMat2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
        let sweep = |c: &mut CMat2, mut rec: Option<&mut Vec<CMat2>>| {
            for seg in &self.segments {
                for j in 0..seg.n_steps {
                    *c = seg.kernel(j).propagate_covariance(c);
                    if (j + 1) % self.stride == 0 {
                        if let Some(r) = rec.as_deref_mut() {
                            r.push(*c);
                        }
                    }
                }
            }
        };
        for _ in 0..warmup_cycles {
            sweep(&mut c, None);
        }
        let grid = self.grid(n_cycles);
        let mut rec = Vec::with_capacity(grid.len());
        rec.push(c);
        for _ in 0..n_cycles {
            sweep(&mut c, Some(&mut rec));
        }
        Ok(BareSeries {
            n1: rec.iter().map(|c| c[(0, 0)].re).collect(),
            n2: rec.iter().map(|c| c[(1, 1)].re).collect(),
            cross: rec.iter().map(|c| c[(1, 0)]).collect(),
            grid,
        })
    }
}

/// One recorded stochastic trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub b1: Vec<C64>,
    pub b2: Vec<C64>,
    pub protocol: Protocol,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.grid.times
    }

    pub fn bare_series(&self) -> BareSeries {
        BareSeries {
            grid: self.grid.clone(),
            n1: self.b1.iter().map(|b| b.norm_sqr()).collect(),
            n2: self.b2.iter().map(|b| b.norm_sqr()).collect(),
            cross: self.b1.iter().zip(&self.b2).map(|(a, b)| a.conj() * b).collect(),
        }
    }

    /// Columns `t, re_b1, im_b1, re_b2, im_b2, n1, n2` with 9 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_b1,im_b1,re_b2,im_b2,n1,n2")?;
        for ((t, b1), b2) in self.grid.times.iter().zip(&self.b1).zip(&self.b2) {
            writeln!(
                w,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                t,
                b1.re,
                b1.im,
                b2.re,
                b2.im,
                b1.norm_sqr(),
                b2.norm_sqr()
            )?;
        }
        Ok(())
    }
}

/// `N₁ = |b₁|²`, `N₂ = |b₂|²` pointwise.
pub fn bare_populations(trajectory: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    (
        trajectory.b1.iter().map(|b| b.norm_sqr()).collect(),
        trajectory.b2.iter().map(|b| b.norm_sqr()).collect(),
    )
}

/// Bare-mode second moments on a grid: populations and the coherence
/// `b₁* b₂`. Holds either one trajectory, an ensemble mean or the exact
/// ensemble limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BareSeries {
    pub grid: TimeGrid,
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    pub cross: Vec<C64>,
}

/// Ensemble member 0 of `config.seed`, with a stationary status-1 start
/// and no warm-up.
pub fn simulate_trajectory(
    system: &CoupledSystem,
    protocol: &Protocol,
    bath: &BathSpec,
    config: &SimConfig,
    n_cycles: usize,
    initial: Option<EnvelopeState>,
) -> Result<Trajectory> {
    let plan = StepPlan::new(system, protocol, bath, config)?;
    plan.simulate_member(initial, 0, n_cycles, config.seed, 0)
}

//! Welch noise spectra of envelope records and anti-crossing maps.
//!
//! Spectra are two-sided over frame offsets. A mode oscillating at offset
//! `δ` has envelope `b ∝ e^{−iδt}`, so records are conjugated before the
//! transform to put its peak at `+δ/2π`.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{complex_normal, trajectory_rng, SimConfig};
use crate::exec::Exec;
use crate::model::{thermal_occupancy, BathSpec, CoupledSystem, EngineKind};
use crate::propagator::{cholesky_psd, drift, stationary_covariance, StepKernel};
use crate::{to_hz, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Offset frequencies, Hz, strictly increasing.
    pub freqs: Vec<f64>,
    /// Phonon-number density per Hz.
    pub psd: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    /// `∫ psd df`.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width()
    }
}

/// Welch estimate with a Hann window.
pub struct Welch {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_power: f64,
    step: usize,
}

impl Welch {
    pub fn new(segment_length: usize, overlap: f64) -> Result<Self> {
        if segment_length < 4 {
            return Err(Error::param("segment_length must be at least 4"));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::param("overlap must lie in [0, 1)"));
        }
        let l = segment_length;
        // Periodic Hann.
        let window: Vec<f64> =
            (0..l).map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / l as f64).cos()).collect();
        let window_power = window.iter().map(|w| w * w).sum();
        let step = (((1.0 - overlap) * l as f64).round() as usize).max(1);
        Ok(Self { fft: FftPlanner::new().plan_fft_forward(l), window, window_power, step })
    }

    pub fn segment_length(&self) -> usize {
        self.window.len()
    }

    /// Averaged periodogram of `series`, accumulated over all full
    /// segments.
    pub fn estimate(&self, series: &[C64], sample_rate: f64) -> Result<Spectrum> {
        let l = self.segment_length();
        if series.len() < 2 * l {
            return Err(Error::SeriesTooShort { needed: 2 * l, got: series.len() });
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::param("sample_rate must be positive"));
        }
        let mut acc = vec![0.0; l];
        let mut buf = vec![C64::new(0.0, 0.0); l];
        let mut segments = 0usize;
        let mut start = 0;
        while start + l <= series.len() {
            for ((b, x), w) in buf.iter_mut().zip(&series[start..start + l]).zip(&self.window) {
                *b = x * w;
            }
            self.fft.process(&mut buf);
            for (a, x) in acc.iter_mut().zip(&buf) {
                *a += x.norm_sqr();
            }
            segments += 1;
            start += self.step;
        }
        let norm = 1.0 / (segments as f64 * sample_rate * self.window_power);
        // fftshift: bins −L/2 .. L/2−1.
        let half = l / 2;
        let df = sample_rate / l as f64;
        let mut freqs = Vec::with_capacity(l);
        let mut psd = Vec::with_capacity(l);
        for j in 0..l {
            let k = (j + l - half) % l;
            let signed = if k >= l - half { k as isize - l as isize } else { k as isize };
            freqs.push(signed as f64 * df);
            psd.push(acc[k] * norm);
        }
        Ok(Spectrum { freqs, psd })
    }
}

/// One-shot Welch estimate.
pub fn psd(series: &[C64], sample_rate: f64, segment_length: usize, overlap: f64) -> Result<Spectrum> {
    Welch::new(segment_length, overlap)?.estimate(series, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub height: f64,
}

/// Local maxima over ±5 bins that exceed 5× the median density and 5% of the
/// global maximum, and that stand at least half their height above the
/// saddle toward any taller bin. Refined by a parabola through the top three
/// bins; sorted by descending height.
pub fn find_peaks(spectrum: &Spectrum) -> Vec<Peak> {
    const HALF_WIDTH: usize = 5;
    const MIN_PROMINENCE: f64 = 0.5;
    let p = &spectrum.psd;
    let n = p.len();
    if n < 3 {
        return Vec::new();
    }
    let mut sorted = p.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = 5.0 * sorted[n / 2];
    let top = sorted[n - 1];
    let df = spectrum.bin_width();
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        let lo = i.saturating_sub(HALF_WIDTH);
        let hi = (i + HALF_WIDTH).min(n - 1);
        let is_max = (lo..=hi).all(|j| j == i || p[j] < p[i] || (p[j] == p[i] && j > i));
        if !is_max || p[i] <= floor || p[i] < 0.05 * top || prominence(p, i) < MIN_PROMINENCE * p[i] {
            continue;
        }
        let (a, b, c) = (p[i - 1], p[i], p[i + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        peaks.push(Peak { freq: spectrum.freqs[i] + shift * df, height: b - 0.25 * (a - c) * shift });
    }
    peaks.sort_by(|x, y| y.height.total_cmp(&x.height));
    peaks
}

/// Height of `p[i]` above the higher of the two saddles separating it from
/// taller bins (or from the ends of the record).
fn prominence(p: &[f64], i: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| {
        let mut low = p[i];
        for j in range {
            if p[j] > p[i] {
                break;
            }
            low = low.min(p[j]);
        }
        low
    };
    let left = side(&mut (0..i).rev());
    let right = side(&mut (i + 1..p.len()));
    p[i] - left.max(right)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub sample_rate: f64,
    pub segment_length: usize,
    pub overlap: f64,
    /// Record length per detuning, s.
    pub record_time: f64,
}

impl Default for SpectrumConfig {
    /// 2 kHz sampling, 1 Hz bins, 64 s records.
    fn default() -> Self {
        Self { sample_rate: 2000.0, segment_length: 2000, overlap: 0.5, record_time: 64.0 }
    }
}

impl SpectrumConfig {
    pub fn resolution(&self) -> f64 {
        self.sample_rate / self.segment_length as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMap {
    pub frame: EngineKind,
    /// Detunings `Δω/2π`, Hz.
    pub detunings: Vec<f64>,
    pub spectra: Vec<Spectrum>,
}

impl SpectrumMap {
    /// Rows are frequency bins, columns detunings; the header row holds the
    /// detunings in Hz.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "freq_hz")?;
        for d in &self.detunings {
            write!(w, ",{d:.6}")?;
        }
        writeln!(w)?;
        let freqs = &self.spectra[0].freqs;
        for (i, f) in freqs.iter().enumerate() {
            write!(w, "{f:.6}")?;
            for s in &self.spectra {
                write!(w, ",{:.8e}", s.psd[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Detected peaks of every column, strongest first, keyed by `Δω/2π`.
    pub fn peak_loci(&self) -> Vec<(f64, Vec<Peak>)> {
        self.detunings.iter().zip(&self.spectra).map(|(d, s)| (*d, find_peaks(s))).collect()
    }
}

/// Uniform grid of `n` detunings (rad/s) over `[lo, hi]`.
pub fn detuning_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Stationary spectra at fixed detunings with both membranes on the cold
/// bath. Each column is the sum of the two bare-mode spectra.
///
/// The coherent proxy `b₁ + b₂` is not used: at resonance it equals the
/// upper normal mode alone and hides the lower peak.
pub fn anticrossing_map(
    system: &CoupledSystem,
    frame: EngineKind,
    detunings: &[f64],
    bath: &BathSpec,
    spectrum: &SpectrumConfig,
    sim: &SimConfig,
    exec: Exec,
) -> Result<SpectrumMap> {
    system.validate()?;
    if detunings.is_empty() {
        return Err(Error::param("empty detuning grid"));
    }
    let uniform = detunings.windows(3).all(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs() <= 1e-9 * (w[1] - w[0]).abs().max(1.0));
    if !uniform {
        return Err(Error::param("detuning grid must be uniform"));
    }
    let max_det = detunings.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    sim.validate(system, max_det)?;
    let sample_dt = 1.0 / spectrum.sample_rate;
    let stride = (sample_dt / sim.dt).ceil().max(1.0) as usize;
    let dt = sample_dt / stride as f64;
    let n_samples = (spectrum.record_time * spectrum.sample_rate).round() as usize;
    let welch = Welch::new(spectrum.segment_length, spectrum.overlap)?;
    let n_th = thermal_occupancy(bath.t_cold, bath.occupancy_basis)?;
    let g = [system.mode1.gamma, system.mode2.gamma];
    let diff = [g[0] * n_th, g[1] * n_th];

    let spectra = exec.try_map(0..detunings.len(), |col| {
        let d = detunings[col];
        let (d1, d2) = match frame {
            EngineKind::SingleCylinder => (d, 0.0),
            EngineKind::StraightTwin => (0.5 * d, -0.5 * d),
        };
        let m = drift(d1, d2, system.lambda, g[0], g[1]);
        let kernel = StepKernel::new(&m, diff, dt);
        let mut rng = trajectory_rng(sim.seed, col as u64);
        let c0 = stationary_covariance(&m, diff)?;
        let l = cholesky_psd(&c0);
        let z = [complex_normal(&mut rng), complex_normal(&mut rng)];
        let mut b = [l[0][0] * z[0], l[1][0] * z[0] + l[1][1] * z[1]];
        let mut r1 = Vec::with_capacity(n_samples);
        let mut r2 = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for _ in 0..stride {
                let z = [complex_normal(&mut rng), complex_normal(&mut rng)];
                b = kernel.apply(b, z);
            }
            if !(b[0].is_finite() && b[1].is_finite()) {
                return Err(Error::NumericalBlowUp { t: r1.len() as f64 * sample_dt });
            }
            r1.push(b[0].conj());
            r2.push(b[1].conj());
        }
        let s1 = welch.estimate(&r1, spectrum.sample_rate)?;
        let s2 = welch.estimate(&r2, spectrum.sample_rate)?;
        Ok(Spectrum { psd: s1.psd.iter().zip(&s2.psd).map(|(a, b)| a + b).collect(), freqs: s1.freqs })
    })?;
    Ok(SpectrumMap { frame, detunings: detunings.iter().map(|d| to_hz(*d)).collect(), spectra })
}

/// Minimum separation of the two strongest peaks over the map, Hz.
///
/// The column nearest `Δω = 0` must resolve two peaks; columns elsewhere
/// that do not are skipped.
pub fn extract_splitting(map: &SpectrumMap) -> Result<f64> {
    let centre = map
        .detunings
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .ok_or(Error::UnresolvedSplitting)?;
    if map.detunings[centre].abs() > 0.5 * map.spectra[centre].bin_width() {
        return Err(Error::param("map does not cover zero detuning"));
    }
    let mut best: Option<f64> = None;
    for (i, s) in map.spectra.iter().enumerate() {
        let peaks = find_peaks(s);
        if peaks.len() < 2 {
            if i == centre {
                return Err(Error::UnresolvedSplitting);
            }
            continue;
        }
        let sep = (peaks[0].freq - peaks[1].freq).abs();
        best = Some(best.map_or(sep, |b: f64| b.min(sep)));
    }
    best.ok_or(Error::UnresolvedSplitting)
}

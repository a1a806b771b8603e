//! Otto-cycle schedules: piecewise-linear membrane detunings plus the hot
//! bath switch on membrane 1.
//!
//! Every protocol has exactly four strokes in time order: the expansion
//! sweep `1→2`, the cold isochore `2→3`, the compression sweep `3→4` and the
//! hot isochore `4→1`. Frequencies are rad/s offsets from the engine's
//! reference frame (see [`EngineKind`]).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{BathSpec, EngineKind};
use crate::{hz, Error, Result};

/// Relative tolerance on segment boundary times.
const TIME_TOL: f64 = 1e-12;
/// Absolute tolerance on frequency jumps, rad/s.
const FREQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stroke {
    #[serde(rename = "1->2")]
    Expansion,
    #[serde(rename = "2->3")]
    ColdIsochore,
    #[serde(rename = "3->4")]
    Compression,
    #[serde(rename = "4->1")]
    HotIsochore,
}

impl Stroke {
    pub const ALL: [Stroke; 4] =
        [Stroke::Expansion, Stroke::ColdIsochore, Stroke::Compression, Stroke::HotIsochore];

    pub fn index(self) -> usize {
        match self {
            Stroke::Expansion => 0,
            Stroke::ColdIsochore => 1,
            Stroke::Compression => 2,
            Stroke::HotIsochore => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stroke::Expansion => "1->2",
            Stroke::ColdIsochore => "2->3",
            Stroke::Compression => "3->4",
            Stroke::HotIsochore => "4->1",
        }
    }

    /// Frequency-changing ("adiabatic") stroke.
    pub fn is_sweep(self) -> bool {
        matches!(self, Stroke::Expansion | Stroke::Compression)
    }
}

impl fmt::Display for Stroke {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSegment {
    pub stroke: Stroke,
    pub t_start: f64,
    pub t_end: f64,
    pub omega1_start: f64,
    pub omega1_end: f64,
    pub omega2_start: f64,
    pub omega2_end: f64,
    pub hot_bath_on_mode1: bool,
}

impl RampSegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Linear interpolation; `t` is clamped to the segment.
    pub fn frequencies_at(&self, t: f64) -> (f64, f64) {
        let d = self.duration();
        let x = if d > 0.0 { ((t - self.t_start) / d).clamp(0.0, 1.0) } else { 0.0 };
        (
            self.omega1_start + x * (self.omega1_end - self.omega1_start),
            self.omega2_start + x * (self.omega2_end - self.omega2_start),
        )
    }

    pub fn detuning_start(&self) -> f64 {
        self.omega1_start - self.omega2_start
    }

    pub fn detuning_end(&self) -> f64 {
        self.omega1_end - self.omega2_end
    }

    /// `dΔω/dt`, rad/s².
    pub fn detuning_rate(&self) -> f64 {
        (self.detuning_end() - self.detuning_start()) / self.duration()
    }

    pub fn changes_frequency(&self) -> bool {
        self.omega1_start != self.omega1_end || self.omega2_start != self.omega2_end
    }
}

/// Parameters a protocol is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleParams {
    pub kind: EngineKind,
    /// Detuning at status 1, rad/s.
    pub delta_omega_i: f64,
    /// Detuning at status 2, rad/s.
    pub delta_omega_f: f64,
    /// Duration of each sweep, s.
    pub sweep_time: f64,
    /// Duration of the cold isochore `2→3`, s.
    pub therm_cold: f64,
    /// Duration of the hot isochore `4→1`, s.
    pub therm_hot: f64,
}

pub const DEFAULT_THERM_COLD: f64 = 0.400;
pub const DEFAULT_THERM_HOT: f64 = 0.365;

impl CycleParams {
    /// ±2π×200 Hz window swept in 20 ms.
    pub fn single_cylinder_default() -> Self {
        Self {
            kind: EngineKind::SingleCylinder,
            delta_omega_i: hz(200.0),
            delta_omega_f: hz(-200.0),
            sweep_time: 0.020,
            therm_cold: DEFAULT_THERM_COLD,
            therm_hot: DEFAULT_THERM_HOT,
        }
    }

    /// 2π×720 Hz → −2π×180 Hz, swept in 20 ms.
    pub fn twin_default() -> Self {
        Self {
            kind: EngineKind::StraightTwin,
            delta_omega_i: hz(720.0),
            delta_omega_f: hz(-180.0),
            sweep_time: 0.020,
            therm_cold: DEFAULT_THERM_COLD,
            therm_hot: DEFAULT_THERM_HOT,
        }
    }

    pub fn with_sweep_time(self, sweep_time: f64) -> Self {
        Self { sweep_time, ..self }
    }

    pub fn build(&self) -> Result<Protocol> {
        match self.kind {
            EngineKind::SingleCylinder => build_single_cylinder(
                self.delta_omega_i,
                self.delta_omega_f,
                self.sweep_time,
                self.therm_cold,
                self.therm_hot,
            ),
            EngineKind::StraightTwin => build_twin(
                self.delta_omega_i,
                self.delta_omega_f,
                self.sweep_time,
                self.therm_cold,
                self.therm_hot,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: EngineKind,
    pub segments: Vec<RampSegment>,
    pub period: f64,
}

fn check_builder_args(
    delta_omega_i: f64,
    delta_omega_f: f64,
    sweep_time: f64,
    therm_cold: f64,
    therm_hot: f64,
) -> Result<()> {
    for (name, v) in [("sweep_time", sweep_time), ("therm_cold", therm_cold), ("therm_hot", therm_hot)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
    }
    if !(delta_omega_i.is_finite() && delta_omega_f.is_finite()) || delta_omega_i <= delta_omega_f {
        return Err(Error::param("delta_omega_i must exceed delta_omega_f"));
    }
    Ok(())
}

/// Builds the four strokes from per-stroke membrane offsets `(ω₁, ω₂)` at
/// status 1 and status 2.
fn assemble(
    kind: EngineKind,
    at1: (f64, f64),
    at2: (f64, f64),
    durations: [f64; 4],
    hot: [bool; 4],
) -> Protocol {
    let ends = [(at1, at2), (at2, at2), (at2, at1), (at1, at1)];
    let mut t = 0.0;
    let mut segments = Vec::with_capacity(4);
    for (k, stroke) in Stroke::ALL.into_iter().enumerate() {
        let (from, to) = ends[k];
        let t_end = t + durations[k];
        segments.push(RampSegment {
            stroke,
            t_start: t,
            t_end,
            omega1_start: from.0,
            omega1_end: to.0,
            omega2_start: from.1,
            omega2_end: to.1,
            hot_bath_on_mode1: hot[k],
        });
        t = t_end;
    }
    Protocol { kind, segments, period: t }
}

/// Membrane 1 is swept from `Δω_i` to `Δω_f` and back; membrane 2 is the
/// frame reference. The hot bath drives membrane 1 only during `4→1`.
pub fn build_single_cylinder(
    delta_omega_i: f64,
    delta_omega_f: f64,
    sweep_time: f64,
    therm_cold: f64,
    therm_hot: f64,
) -> Result<Protocol> {
    check_builder_args(delta_omega_i, delta_omega_f, sweep_time, therm_cold, therm_hot)?;
    Ok(assemble(
        EngineKind::SingleCylinder,
        (delta_omega_i, 0.0),
        (delta_omega_f, 0.0),
        [sweep_time, therm_cold, sweep_time, therm_hot],
        [false, false, false, true],
    ))
}

/// Both membranes are swept symmetrically about their mean, so each moves
/// by half the detuning change.
///
/// The hot bath drives membrane 1 during both isochores: the upper branch
/// is membrane-1-like at status 1 and the lower branch at status 3, so
/// each cylinder takes its heat on a different isochore.
pub fn build_twin(
    delta_omega_i: f64,
    delta_omega_f: f64,
    sweep_time: f64,
    therm_cold: f64,
    therm_hot: f64,
) -> Result<Protocol> {
    check_builder_args(delta_omega_i, delta_omega_f, sweep_time, therm_cold, therm_hot)?;
    Ok(assemble(
        EngineKind::StraightTwin,
        (0.5 * delta_omega_i, -0.5 * delta_omega_i),
        (0.5 * delta_omega_f, -0.5 * delta_omega_f),
        [sweep_time, therm_cold, sweep_time, therm_hot],
        [false, true, false, true],
    ))
}

impl Protocol {
    pub fn single_cylinder_default() -> Self {
        CycleParams::single_cylinder_default().build().expect("default parameters are valid")
    }

    pub fn twin_default() -> Self {
        CycleParams::twin_default().build().expect("default parameters are valid")
    }

    /// Wraps `t` into `[0, period)`.
    pub fn wrap(&self, t: f64) -> f64 {
        let w = t.rem_euclid(self.period);
        if w >= self.period {
            0.0
        } else {
            w
        }
    }

    /// Index of the segment containing `t` (taken modulo the period).
    pub fn segment_index_at(&self, t: f64) -> usize {
        let w = self.wrap(t);
        self.segments
            .iter()
            .position(|s| w < s.t_end)
            .unwrap_or(self.segments.len() - 1)
    }

    pub fn segment(&self, stroke: Stroke) -> &RampSegment {
        self.segments
            .iter()
            .find(|s| s.stroke == stroke)
            .expect("validated protocols contain every stroke")
    }

    pub fn stroke_at(&self, t: f64) -> Stroke {
        self.segments[self.segment_index_at(t)].stroke
    }

    /// Membrane offsets `(ω₁, ω₂)` at time `t`.
    pub fn frequency_at(&self, t: f64) -> (f64, f64) {
        let seg = &self.segments[self.segment_index_at(t)];
        seg.frequencies_at(self.wrap(t))
    }

    /// `Δω = ω₁ − ω₂` at time `t`.
    pub fn detuning_at(&self, t: f64) -> f64 {
        let (w1, w2) = self.frequency_at(t);
        w1 - w2
    }

    pub fn hot_bath_at(&self, t: f64) -> bool {
        self.segments[self.segment_index_at(t)].hot_bath_on_mode1
    }

    /// Bath temperatures `(T₁, T₂)`; membrane 2 always sees the cold bath.
    pub fn bath_at(&self, t: f64, bath: &BathSpec) -> (f64, f64) {
        let t1 = if self.hot_bath_at(t) { bath.t_hot } else { bath.t_cold };
        (t1, bath.t_cold)
    }

    /// `|α|` of the expansion sweep, rad/s².
    pub fn sweep_rate(&self) -> f64 {
        self.segment(Stroke::Expansion).detuning_rate().abs()
    }

    /// Largest `|Δω|` reached anywhere in the cycle.
    pub fn max_abs_detuning(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| [s.detuning_start().abs(), s.detuning_end().abs()])
            .fold(0.0, f64::max)
    }

    /// Largest single-membrane offset; bounds the rotating-frame phase rate.
    pub fn max_abs_offset(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| [s.omega1_start, s.omega1_end, s.omega2_start, s.omega2_end])
            .fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Recovers the builder parameters from the segment table.
    pub fn cycle_params(&self) -> CycleParams {
        let e = self.segment(Stroke::Expansion);
        CycleParams {
            kind: self.kind,
            delta_omega_i: e.detuning_start(),
            delta_omega_f: e.detuning_end(),
            sweep_time: e.duration(),
            therm_cold: self.segment(Stroke::ColdIsochore).duration(),
            therm_hot: self.segment(Stroke::HotIsochore).duration(),
        }
    }

    /// Collects every structural violation instead of stopping at the first.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut v = Vec::new();
        let segs = &self.segments;
        if !(self.period.is_finite() && self.period > 0.0) {
            v.push("period must be positive".to_string());
        }
        if segs.len() != 4 {
            v.push(format!("expected exactly 4 strokes, found {}", segs.len()));
        }
        for (k, s) in segs.iter().enumerate() {
            if !(s.duration() > 0.0) {
                v.push(format!("segment {k} ({}) has non-positive duration", s.stroke));
            }
            let finite = [s.t_start, s.t_end, s.omega1_start, s.omega1_end, s.omega2_start, s.omega2_end]
                .iter()
                .all(|x| x.is_finite());
            if !finite {
                v.push(format!("segment {k} has non-finite fields"));
            }
        }
        let labels_ok = segs.len() == 4 && segs.iter().zip(Stroke::ALL).all(|(s, want)| s.stroke == want);
        if !labels_ok {
            v.push("strokes must be labeled 1->2, 2->3, 3->4, 4->1 in order".to_string());
        }
        let tol = TIME_TOL * self.period.abs().max(1e-300);
        if let Some(first) = segs.first() {
            if first.t_start.abs() > tol {
                v.push("first segment must start at t = 0".to_string());
            }
        }
        if let Some(last) = segs.last() {
            if (last.t_end - self.period).abs() > tol {
                v.push("last segment must end at t = period".to_string());
            }
        }
        let mut contiguous = true;
        let mut continuous = true;
        for w in segs.windows(2) {
            if (w[0].t_end - w[1].t_start).abs() > tol {
                contiguous = false;
            }
            if (w[0].omega1_end - w[1].omega1_start).abs() > FREQ_TOL
                || (w[0].omega2_end - w[1].omega2_start).abs() > FREQ_TOL
            {
                continuous = false;
            }
        }
        if !contiguous {
            v.push("segments not contiguous".to_string());
        }
        if !continuous {
            v.push("frequency jumps between segments".to_string());
        }
        if let (Some(first), Some(last)) = (segs.first(), segs.last()) {
            if (first.omega1_start - last.omega1_end).abs() > FREQ_TOL
                || (first.omega2_start - last.omega2_end).abs() > FREQ_TOL
            {
                v.push("cycle does not close".to_string());
            }
        }
        if labels_ok {
            for s in segs {
                if s.stroke.is_sweep() && !s.changes_frequency() {
                    v.push(format!("sweep stroke {} does not change frequency", s.stroke));
                }
                if !s.stroke.is_sweep() && s.changes_frequency() {
                    v.push(format!("isochoric stroke {} changes frequency", s.stroke));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidProtocol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates.
    pub fn from_json(s: &str) -> Result<Self> {
        let p: Protocol = serde_json::from_str(s)?;
        p.ensure_valid()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default() -> Protocol {
        Protocol::single_cylinder_default()
    }

    #[test]
    fn default_sweep_rate() {
        let p = default();
        assert!((p.sweep_rate() - hz(20e3)).abs() / hz(20e3) < 1e-12);
        let p = build_single_cylinder(hz(200.0), hz(-200.0), 0.015, 0.4, 0.365).unwrap();
        assert!((p.sweep_rate() / hz(1e3) - 26.666_666_666_666_668).abs() < 1e-9);
    }

    #[test]
    fn rejects_zero_durations() {
        assert!(build_single_cylinder(hz(200.0), hz(-200.0), 0.0, 0.4, 0.365).is_err());
        assert!(build_single_cylinder(hz(200.0), hz(-200.0), 0.02, -1.0, 0.365).is_err());
        assert!(build_twin(hz(720.0), hz(-180.0), 0.02, 0.4, 0.0).is_err());
        assert!(build_single_cylinder(hz(-200.0), hz(200.0), 0.02, 0.4, 0.365).is_err());
    }

    #[test]
    fn frequency_at_landmarks() {
        let p = default();
        assert_eq!(p.frequency_at(0.0), (hz(200.0), 0.0));
        let (w1, w2) = p.frequency_at(0.010);
        assert!(w1.abs() < 1e-9 && w2 == 0.0);
        assert_eq!(p.frequency_at(p.period), p.frequency_at(0.0));
        assert_eq!(p.frequency_at(0.020), (hz(-200.0), 0.0));
        // Inside the cold isochore.
        assert_eq!(p.frequency_at(0.2), (hz(-200.0), 0.0));
    }

    #[test]
    fn bath_schedule() {
        let p = default();
        let b = BathSpec::nominal();
        let t_hot_stroke = p.segment(Stroke::HotIsochore).t_start + 0.1;
        assert_eq!(p.bath_at(t_hot_stroke, &b), (b.t_hot, b.t_cold));
        assert_eq!(p.bath_at(0.2, &b), (b.t_cold, b.t_cold));
        assert_eq!(p.bath_at(1e-6, &b), (b.t_cold, b.t_cold));
        assert_eq!(p.bath_at(p.period - 1e-6, &b), (b.t_hot, b.t_cold));
    }

    #[test]
    fn twin_window_and_bath() {
        let p = Protocol::twin_default();
        assert!((p.detuning_at(0.0) - hz(720.0)).abs() < 1e-9);
        assert!((p.detuning_at(0.020) - hz(-180.0)).abs() < 1e-9);
        assert!((p.detuning_at(0.010) - hz(270.0)).abs() < 1e-9);
        let (w1, w2) = p.frequency_at(0.003);
        assert!((w1 + w2).abs() < 1e-12);
        assert!(p.hot_bath_at(0.2) && p.hot_bath_at(p.period - 1e-3) && !p.hot_bath_at(0.01));
        p.ensure_valid().unwrap();
    }

    #[test]
    fn continuity_across_boundaries() {
        for p in [default(), Protocol::twin_default()] {
            for s in &p.segments {
                let (a1, a2) = s.frequencies_at(s.t_end);
                let (b1, b2) = p.frequency_at(s.t_end);
                assert!((a1 - b1).abs() < 1e-9 && (a2 - b2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn validation_reports_violations() {
        assert!(default().validate().is_ok());

        let mut gap = default();
        gap.segments[1].t_start += 1e-3;
        let v = gap.validate().unwrap_err();
        assert!(v.iter().any(|m| m == "segments not contiguous"), "{v:?}");

        let mut open = default();
        open.segments[3].omega1_end = hz(150.0);
        open.segments[3].omega1_start = hz(150.0);
        open.segments[2].omega1_end = hz(150.0);
        let v = open.validate().unwrap_err();
        assert!(v.iter().any(|m| m == "cycle does not close"), "{v:?}");

        let mut three = default();
        three.segments.pop();
        assert!(three.validate().is_err());
    }

    #[test]
    fn stroke_structure() {
        for p in [default(), Protocol::twin_default()] {
            assert_eq!(p.segments.len(), 4);
            for s in &p.segments {
                if s.stroke.is_sweep() {
                    assert!(s.detuning_rate() != 0.0);
                } else {
                    assert_eq!(s.detuning_rate(), 0.0);
                }
            }
            let e = p.segment(Stroke::Expansion).detuning_rate();
            let c = p.segment(Stroke::Compression).detuning_rate();
            assert!((e + c).abs() <= 1e-12 * e.abs());
        }
    }

    #[test]
    fn json_round_trip() {
        let p = Protocol::twin_default();
        let back = Protocol::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        let json = p.to_json().unwrap();
        assert!(json.contains("\"kind\": \"straight-twin\"") && json.contains("\"stroke\": \"4->1\""));
        assert!(Protocol::from_json(&json.replace("\"3->4\"", "\"2->3\"")).is_err());
    }

    #[test]
    fn params_round_trip() {
        let c = CycleParams::twin_default().with_sweep_time(0.031);
        assert_eq!(c.build().unwrap().cycle_params(), c);
    }

    proptest! {
        #[test]
        fn prop_built_protocols_close(
            di in 10.0f64..1000.0, span in 10.0f64..1000.0,
            ts in 1e-3f64..0.1, tc in 1e-3f64..1.0, th in 1e-3f64..1.0, twin in any::<bool>()
        ) {
            let (i, f) = (hz(di), hz(di - span));
            let p = if twin { build_twin(i, f, ts, tc, th) } else { build_single_cylinder(i, f, ts, tc, th) }.unwrap();
            prop_assert!(p.validate().is_ok());
            prop_assert_eq!(p.frequency_at(0.0), p.frequency_at(p.period));
            let rate = (i - f).abs() / ts;
            prop_assert!((p.sweep_rate() - rate).abs() <= 1e-12 * rate);
        }
    }
}

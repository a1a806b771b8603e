//! Run configuration: one flat JSON document, SI units in the key names.

use std::path::{Path, PathBuf};

use coupled_otto::dynamics::SimConfig;
use coupled_otto::ensemble::{EnsembleOptions, OptimizeOptions};
use coupled_otto::exec::Exec;
use coupled_otto::model::{BathSpec, CoupledSystem, EngineKind, MechanicalMode};
use coupled_otto::protocol::{CycleParams, Protocol, DEFAULT_THERM_COLD, DEFAULT_THERM_HOT};
use coupled_otto::spectra::{detuning_grid, SpectrumConfig};
use coupled_otto::hz;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub omega_m_hz: f64,
    pub gamma1_hz: f64,
    pub gamma2_hz: f64,
    pub lambda_hz: f64,
    pub t_cold_k: f64,
    pub t_hot_k: f64,

    pub delta_omega_i_hz: f64,
    pub delta_omega_f_hz: f64,
    pub sweep_time_s: f64,
    pub therm_cold_s: f64,
    pub therm_hot_s: f64,

    pub twin_delta_omega_i_hz: f64,
    pub twin_delta_omega_f_hz: f64,
    pub twin_sweep_time_s: f64,

    pub dt_s: f64,
    pub record_stride: usize,
    pub seed: u64,
    pub thermal_noise: bool,
    pub sweep_damping_scale: f64,

    pub n_trajectories: usize,
    pub warmup_cycles: usize,

    pub spectrum_frame: EngineKind,
    pub spectrum_detuning_min_hz: f64,
    pub spectrum_detuning_max_hz: f64,
    pub spectrum_detunings: usize,
    pub spectrum_sample_rate_hz: f64,
    pub spectrum_segment_length: usize,
    pub spectrum_record_s: f64,

    pub sweep_times_s: Vec<f64>,
    pub optimize_min_s: f64,
    pub optimize_max_s: f64,
    pub optimize_grid_points: usize,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let spec = SpectrumConfig::default();
        Self {
            omega_m_hz: 400e3,
            gamma1_hz: 6.0,
            gamma2_hz: 12.0,
            lambda_hz: 40.0,
            t_cold_k: 295.0,
            t_hot_k: 1.77e4,
            delta_omega_i_hz: 200.0,
            delta_omega_f_hz: -200.0,
            sweep_time_s: 0.020,
            therm_cold_s: DEFAULT_THERM_COLD,
            therm_hot_s: DEFAULT_THERM_HOT,
            twin_delta_omega_i_hz: 720.0,
            twin_delta_omega_f_hz: -180.0,
            twin_sweep_time_s: 0.020,
            dt_s: sim.dt,
            record_stride: sim.record_stride,
            seed: sim.seed,
            thermal_noise: sim.thermal_noise,
            sweep_damping_scale: sim.sweep_damping_scale,
            n_trajectories: 250,
            warmup_cycles: 1,
            spectrum_frame: EngineKind::SingleCylinder,
            spectrum_detuning_min_hz: -200.0,
            spectrum_detuning_max_hz: 200.0,
            spectrum_detunings: 21,
            spectrum_sample_rate_hz: spec.sample_rate,
            spectrum_segment_length: spec.segment_length,
            spectrum_record_s: spec.record_time,
            sweep_times_s: vec![0.010, 0.015, 0.020, 0.030, 0.040, 0.050, 0.060],
            optimize_min_s: 0.002,
            optimize_max_s: 0.060,
            optimize_grid_points: 7,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<CoupledSystem, CliError> {
        let w = hz(self.omega_m_hz);
        CoupledSystem::new(
            MechanicalMode::new("M1", w, hz(self.gamma1_hz)).map_err(cfg_err)?,
            MechanicalMode::new("M2", w, hz(self.gamma2_hz)).map_err(cfg_err)?,
            hz(self.lambda_hz),
        )
        .map_err(cfg_err)
    }

    pub fn bath(&self) -> Result<BathSpec, CliError> {
        BathSpec::new(self.t_cold_k, self.t_hot_k, hz(self.omega_m_hz)).map_err(cfg_err)
    }

    pub fn cycle_params(&self) -> CycleParams {
        CycleParams {
            kind: EngineKind::SingleCylinder,
            delta_omega_i: hz(self.delta_omega_i_hz),
            delta_omega_f: hz(self.delta_omega_f_hz),
            sweep_time: self.sweep_time_s,
            therm_cold: self.therm_cold_s,
            therm_hot: self.therm_hot_s,
        }
    }

    pub fn twin_params(&self) -> CycleParams {
        CycleParams {
            kind: EngineKind::StraightTwin,
            delta_omega_i: hz(self.twin_delta_omega_i_hz),
            delta_omega_f: hz(self.twin_delta_omega_f_hz),
            sweep_time: self.twin_sweep_time_s,
            ..self.cycle_params()
        }
    }

    pub fn protocol(&self) -> Result<Protocol, CliError> {
        self.cycle_params().build().map_err(cfg_err)
    }

    pub fn twin_protocol(&self) -> Result<Protocol, CliError> {
        self.twin_params().build().map_err(cfg_err)
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.dt_s,
            record_stride: self.record_stride,
            seed: self.seed,
            thermal_noise: self.thermal_noise,
            sweep_damping_scale: self.sweep_damping_scale,
        }
    }

    pub fn ensemble_options(&self, exec: Exec) -> EnsembleOptions {
        EnsembleOptions { warmup_cycles: self.warmup_cycles, exec, ..EnsembleOptions::default() }
    }

    pub fn spectrum(&self) -> SpectrumConfig {
        SpectrumConfig {
            sample_rate: self.spectrum_sample_rate_hz,
            segment_length: self.spectrum_segment_length,
            overlap: 0.5,
            record_time: self.spectrum_record_s,
        }
    }

    /// Detuning grid in rad/s.
    pub fn spectrum_grid(&self) -> Vec<f64> {
        detuning_grid(hz(self.spectrum_detuning_min_hz), hz(self.spectrum_detuning_max_hz), self.spectrum_detunings)
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions { grid_points: self.optimize_grid_points, ..OptimizeOptions::default() }
    }

    /// Checks everything that can be checked without running a simulation.
    pub fn validate(&self) -> Result<(), CliError> {
        let system = self.system()?;
        self.bath()?;
        let mut max_det: f64 = 0.0;
        for p in [self.protocol()?, self.twin_protocol()?] {
            max_det = max_det.max(p.max_abs_detuning()).max(p.max_abs_offset());
        }
        self.sim().validate(&system, max_det).map_err(cfg_err)?;
        if self.n_trajectories == 0 {
            return Err(cfg_err("n_trajectories must be at least 1"));
        }
        if !(self.spectrum_detuning_max_hz >= self.spectrum_detuning_min_hz) || self.spectrum_detunings == 0 {
            return Err(cfg_err("spectrum detuning range is empty"));
        }
        let spec = self.spectrum();
        if !(spec.sample_rate > 0.0 && spec.record_time > 0.0) {
            return Err(cfg_err("spectrum sample rate and record length must be positive"));
        }
        let nyquist = 0.5 * spec.sample_rate;
        let widest = 0.5 * self.spectrum_detuning_max_hz.abs().max(self.spectrum_detuning_min_hz.abs())
            + (0.5 * self.spectrum_detuning_max_hz.abs().max(self.spectrum_detuning_min_hz.abs())).hypot(self.lambda_hz);
        if widest >= nyquist {
            return Err(cfg_err(format!(
                "spectrum sample rate {} Hz cannot resolve branches up to {widest:.1} Hz",
                spec.sample_rate
            )));
        }
        if spec.sample_rate * spec.record_time < 2.0 * spec.segment_length as f64 {
            return Err(cfg_err("spectrum record shorter than two segments"));
        }
        let dmax = hz(self.spectrum_detuning_max_hz.abs().max(self.spectrum_detuning_min_hz.abs()));
        self.sim().validate(&system, dmax).map_err(cfg_err)?;
        if self.sweep_times_s.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(cfg_err("sweep_times_s must be positive"));
        }
        if !(self.optimize_min_s > 0.0 && self.optimize_max_s > self.optimize_min_s) {
            return Err(cfg_err("optimizer bounds must be positive and ordered"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(c, back);
        c.validate().unwrap();
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"lambda_hz": 80.0}"#).unwrap();
        assert_eq!(c.lambda_hz, 80.0);
        assert_eq!(c.gamma1_hz, 6.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lamda_hz": 80.0}"#).is_err());
    }

    #[test]
    fn bad_values_fail_validation() {
        let c = RunConfig { gamma1_hz: -1.0, ..RunConfig::default() };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let c = RunConfig { dt_s: 1e-3, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { sweep_time_s: 0.0, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn defaults_mirror_physical_parameters() {
        let c = RunConfig::default();
        let s = c.system().unwrap();
        assert_eq!(s, CoupledSystem::nominal());
        assert_eq!(c.protocol().unwrap(), Protocol::single_cylinder_default());
        assert_eq!(c.twin_protocol().unwrap(), Protocol::twin_default());
    }
}

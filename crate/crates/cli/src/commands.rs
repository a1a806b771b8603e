use coupled_otto::dynamics::StepPlan;
use coupled_otto::ensemble::{optimize_sweep_time, run_ensemble, sweep_time_scan, EnsembleResult, ScanPoint};
use coupled_otto::exec::Exec;
use coupled_otto::spectra::{anticrossing_map, extract_splitting, find_peaks};
use coupled_otto::thermo::{work_distribution, Accounting, Branch, CycleThermo, MIN_WORK_SAMPLES};
use coupled_otto::{hz, to_hz};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Outputs;
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
    pub exec: Exec,
    pub accounting: Accounting,
}

#[derive(Serialize)]
struct SplittingReport {
    frame: coupled_otto::model::EngineKind,
    splitting_hz: f64,
    expected_hz: f64,
    resolution_hz: f64,
}

pub fn spectrum(ctx: &Context) -> Result<Outputs, CliError> {
    let c = &ctx.config;
    let system = c.system()?;
    let bath = c.bath()?;
    let spec = c.spectrum();
    let grid = c.spectrum_grid();
    let map = anticrossing_map(&system, c.spectrum_frame, &grid, &bath, &spec, &c.sim(), ctx.exec)?;
    let splitting = extract_splitting(&map)?;

    let mut out = Outputs::default();
    out.render("spectrum_map.csv", |b| map.write_csv(b))?;
    let mut peaks = String::from("detuning_hz,rank,freq_hz,height,theory_upper_hz,theory_lower_hz\n");
    for (d, s) in map.detunings.iter().zip(&map.spectra) {
        let (wp, wm) = c.spectrum_frame.branches(hz(*d), system.lambda);
        for (rank, p) in find_peaks(s).iter().take(2).enumerate() {
            peaks.push_str(&format!(
                "{d:.6},{rank},{:.6},{:.8e},{:.6},{:.6}\n",
                p.freq,
                p.height,
                to_hz(wp),
                to_hz(wm)
            ));
        }
    }
    out.add("peaks.csv", peaks.into_bytes());
    out.json(
        "splitting.json",
        &SplittingReport {
            frame: c.spectrum_frame,
            splitting_hz: splitting,
            expected_hz: 2.0 * c.lambda_hz,
            resolution_hz: spec.resolution(),
        },
    )?;
    println!("splitting {splitting:.2} Hz (2Λ/2π = {:.2} Hz, bin {:.3} Hz)", 2.0 * c.lambda_hz, spec.resolution());
    Ok(out)
}

fn ensemble_files(out: &mut Outputs, r: &EnsembleResult) -> Result<(), CliError> {
    out.render("series.csv", |b| r.mean.write_csv(b))?;
    out.render("std.csv", |b| r.write_std_csv(b))?;
    out.render("works.csv", |b| r.write_works_csv(b))?;
    out.add("summary.json", serde_json::to_vec(r).map_err(coupled_otto::Error::from)?);
    Ok(())
}

#[derive(Serialize)]
struct CycleReport<'a> {
    n_trajectories: usize,
    base_seed: u64,
    accounting: Accounting,
    thermo: &'a CycleThermo,
    eta_n_se: f64,
    mean_work_se: f64,
    eta_n_full: f64,
    eta_n_nocorr: f64,
}

pub fn cycle(ctx: &Context) -> Result<Outputs, CliError> {
    let c = &ctx.config;
    let system = c.system()?;
    let bath = c.bath()?;
    let protocol = c.protocol()?;
    let sim = c.sim();
    let opts = c.ensemble_options(ctx.exec);
    let r = run_ensemble(&system, &protocol, &bath, &sim, c.n_trajectories, &opts)?;
    let th = r.thermo(Branch::Upper, ctx.accounting)?;
    let full = r.thermo(Branch::Upper, Accounting::Full)?;
    let nocorr = r.thermo(Branch::Upper, Accounting::NoCorrelation)?;
    let (_, eta_se) = r.eta_n(Branch::Upper, ctx.accounting)?;
    let (_, w_se) = r.mean_work(Branch::Upper, ctx.accounting);

    let mut out = Outputs::default();
    ensemble_files(&mut out, &r)?;
    out.json(
        "thermo.json",
        &CycleReport {
            n_trajectories: r.n_trajectories,
            base_seed: r.base_seed,
            accounting: ctx.accounting,
            thermo: &th,
            eta_n_se: eta_se,
            mean_work_se: w_se,
            eta_n_full: full.eta_n,
            eta_n_nocorr: nocorr.eta_n,
        },
    )?;
    out.render("diagram.csv", |b| th.write_diagram_csv(b))?;
    if ctx.accounting == Accounting::Full {
        out.render("diagram_nocorr.csv", |b| nocorr.write_diagram_csv(b))?;
    }

    // Member 0 again, for single-trajectory plots.
    let plan = StepPlan::new(&system, &protocol, &bath, &sim)?;
    let tr = plan.simulate_member(None, opts.warmup_cycles, opts.n_cycles, sim.seed, 0)?;
    out.render("trajectory.csv", |b| tr.write_csv(b))?;

    let works = r.works(Branch::Upper, ctx.accounting);
    if works.len() >= MIN_WORK_SAMPLES {
        out.json("work_distribution.json", &work_distribution(&works)?)?;
    }
    println!(
        "W = {:.4e} J, Q_in = {:.4e} J, eta = {:.4e}, eta_ideal = {:.4e}, eta_N = {:.4} ± {:.4} ({} trajectories)",
        th.w_total, th.q_in, th.eta, th.eta_ideal, th.eta_n, eta_se, r.n_trajectories
    );
    Ok(out)
}

#[derive(Serialize)]
struct TwinReport<'a> {
    n_trajectories: usize,
    base_seed: u64,
    accounting: Accounting,
    upper: &'a CycleThermo,
    lower: &'a CycleThermo,
    upper_work_se: f64,
    lower_work_se: f64,
}

pub fn twin(ctx: &Context) -> Result<Outputs, CliError> {
    let c = &ctx.config;
    let system = c.system()?;
    let protocol = c.twin_protocol()?;
    let r = run_ensemble(&system, &protocol, &c.bath()?, &c.sim(), c.n_trajectories, &c.ensemble_options(ctx.exec))?;
    let (upper, lower) = r.twin_thermo(ctx.accounting)?;
    let mut out = Outputs::default();
    ensemble_files(&mut out, &r)?;
    out.json(
        "thermo.json",
        &TwinReport {
            n_trajectories: r.n_trajectories,
            base_seed: r.base_seed,
            accounting: ctx.accounting,
            upper: &upper,
            lower: &lower,
            upper_work_se: r.mean_work(Branch::Upper, ctx.accounting).1,
            lower_work_se: r.mean_work(Branch::Lower, ctx.accounting).1,
        },
    )?;
    out.render("diagram_upper.csv", |b| upper.write_diagram_csv(b))?;
    out.render("diagram_lower.csv", |b| lower.write_diagram_csv(b))?;
    println!(
        "W_upper = {:.4e} J, W_lower = {:.4e} J, first-law residuals {:.2e} / {:.2e} J",
        upper.w_total, lower.w_total, upper.first_law_residual, lower.first_law_residual
    );
    Ok(out)
}

fn scan_csv(points: &[ScanPoint]) -> Vec<u8> {
    let mut s = String::from("sweep_time_s,eta_n,eta_n_se,eta_n_nocorr,eta_n_nocorr_se,eta_ideal,w_total_j,w_total_nocorr_j,q_in_j\n");
    for p in points {
        s.push_str(&format!(
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            p.sweep_time,
            p.eta_n,
            p.eta_n_se,
            p.eta_n_nocorr,
            p.eta_n_nocorr_se,
            p.eta_ideal,
            p.w_total,
            p.w_total_nocorr,
            p.q_in
        ));
    }
    s.into_bytes()
}

pub fn sweep(ctx: &Context) -> Result<Outputs, CliError> {
    let c = &ctx.config;
    let points = sweep_time_scan(
        &c.system()?,
        &c.cycle_params(),
        &c.bath()?,
        &c.sim(),
        &c.sweep_times_s,
        c.n_trajectories,
        &c.ensemble_options(ctx.exec),
    )?;
    let mut out = Outputs::default();
    out.add("sweep.csv", scan_csv(&points));
    out.json("sweep.json", &points)?;
    for p in &points {
        println!("{:7.2} ms  eta_N = {:.4} ± {:.4}  (no corr {:.4})", p.sweep_time * 1e3, p.eta_n, p.eta_n_se, p.eta_n_nocorr);
    }
    Ok(out)
}

pub fn optimize(ctx: &Context) -> Result<Outputs, CliError> {
    let c = &ctx.config;
    let best = optimize_sweep_time(
        &c.system()?,
        &c.cycle_params(),
        &c.bath()?,
        &c.sim(),
        (c.optimize_min_s, c.optimize_max_s),
        c.n_trajectories,
        &c.ensemble_options(ctx.exec),
        &c.optimize_options(),
    )?;
    let mut out = Outputs::default();
    out.add("evaluations.csv", scan_csv(&best.evaluations));
    out.json("optimum.json", &best)?;
    println!(
        "best sweep time {:.2} ms, eta_N = {:.4} ± {:.4}{}",
        best.sweep_time * 1e3,
        best.eta_n,
        best.eta_n_se,
        if best.non_unimodal { " (warning: estimates not unimodal; best grid point)" } else { "" }
    );
    Ok(out)
}

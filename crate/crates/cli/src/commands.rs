use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use opachain_core::calibration::{
    chain_efficiency, fit_with, infer_stage_efficiency, parse_sweep, FitOptions,
};
use opachain_core::dispersion::{
    degradation_phase, design_dcf, frequency_to_wavelength, phase_maintained_band,
    wavelength_to_frequency, FiberSegment, FrequencyBand, DEFAULT_CENTER_THZ,
};
use opachain_core::lockloop::run_lock;
use opachain_core::measurement::{
    effective_phase_deviation, measured_from_true, required_gain, squeezing_bias_db,
    true_from_measured, GainResolution, MeasuredLevels,
};
use opachain_core::replicate;
use opachain_core::report::db1;
use opachain_core::scenario::parse_config;
use opachain_core::sideband::ratio_from_db;
use opachain_core::spectrum::{estimate_dispersion, spectrum, ExtremumOptions};
use opachain_core::trace::{parse_trace, write_trace, TraceMeta, Unit};
use opachain_core::{
    DispersionModel, Error, GridSpec, LockSection, LossChain, OpaGain, QuadLevels, RunReport,
    ScenarioConfig,
};

use crate::args::*;
use crate::output::{read_file, Artifacts, CliError, CliResult};

pub const SEED_ENV: &str = "OPACHAIN_SEED";

/// Everything a command needs besides its own flags.
struct Context {
    cfg: ScenarioConfig,
    /// Directory of the scenario file, for relative paths inside it.
    base: PathBuf,
    output_dir: PathBuf,
    /// From --seed or the environment; wins over any scenario seed.
    seed_override: Option<u64>,
    seed: u64,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut ctx = load_context(&cli)?;
    let mut artifacts = Artifacts::default();
    let mut report = match cli.command {
        Command::SimulateSpectrum(a) => simulate_spectrum(&mut ctx, a, &mut artifacts)?,
        Command::EstimateDispersion(a) => estimate(&ctx, a)?,
        Command::DesignDcf(a) => dcf(&mut ctx, a)?,
        Command::Band(a) => band(&mut ctx, a)?,
        Command::CorrectSqueezing(a) => correct(&mut ctx, a)?,
        Command::ThetaEff(a) => theta_eff(&mut ctx, a)?,
        Command::RequiredGain(a) => gain_search(&mut ctx, a)?,
        Command::FitCalibration(a) => fit_calibration(&ctx, a)?,
        Command::Chain(a) => chain(a)?,
        Command::SimulateLock(a) => simulate_lock(&mut ctx, a, &mut artifacts)?,
        Command::ReplicatePaper(a) => return replicate_paper(&ctx, a),
    };
    let names: Vec<String> = artifacts.names().map(String::from).collect();
    for name in &names {
        report.push("artifact", ctx.output_dir.join(name).display());
    }
    if !names.is_empty() {
        artifacts.add("report.txt", report.to_string());
    }
    artifacts.commit(&ctx.output_dir)?;
    print!("{report}");
    Ok(())
}

fn load_context(cli: &Cli) -> CliResult<Context> {
    let (cfg, base) = match &cli.config {
        Some(path) => {
            let text = read_file(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (parse_config(&text)?, base)
        }
        None => (ScenarioConfig::default(), PathBuf::new()),
    };
    let seed_override = match (cli.seed, std::env::var(SEED_ENV)) {
        (Some(s), _) => Some(s),
        (None, Ok(v)) => Some(v.trim().parse().map_err(|_| {
            CliError::Core(Error::Validation(format!(
                "{SEED_ENV}: `{v}` is not an unsigned integer"
            )))
        })?),
        (None, Err(_)) => None,
    };
    let seed = seed_override.or(cfg.seed).unwrap_or(0);
    let output_dir = cli
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Context {
        cfg,
        base,
        output_dir,
        seed_override,
        seed,
    })
}

fn apply_levels(cfg: &mut ScenarioConfig, a: &LevelArgs) -> CliResult<()> {
    if let (Some(m), Some(p)) = (a.r_minus_db, a.r_plus_db) {
        cfg.levels = Some(QuadLevels::from_db(m, p)?);
        cfg.levels_db = Some((m, p));
    }
    Ok(())
}

fn apply_gain(cfg: &mut ScenarioConfig, a: &GainArgs) -> CliResult<()> {
    if let Some(g) = a.gain {
        cfg.gain = Some(OpaGain::new(g)?);
    } else if let Some(db) = a.gain_db {
        cfg.gain = Some(OpaGain::from_db(db)?);
    }
    Ok(())
}

/// Flags override single fields; a model is only created if something is set.
fn apply_dispersion(cfg: &mut ScenarioConfig, a: &DispersionArgs) -> CliResult<()> {
    if a.d.is_none() && a.f0.is_none() && a.phi0.is_none() {
        return Ok(());
    }
    let base = cfg.dispersion.unwrap_or(DispersionModel {
        d: 0.0,
        f0: DEFAULT_CENTER_THZ,
        phi0: FRAC_PI_2,
    });
    cfg.dispersion = Some(DispersionModel::new(
        a.d.unwrap_or(base.d),
        a.f0.unwrap_or(base.f0),
        a.phi0.unwrap_or(base.phi0),
    )?);
    Ok(())
}

fn apply_grid(cfg: &mut ScenarioConfig, a: &GridArgs) -> GridSpec {
    let base = cfg.grid.unwrap_or(GridSpec::DEFAULT);
    let g = GridSpec {
        start_nm: a.start_nm.unwrap_or(base.start_nm),
        stop_nm: a.stop_nm.unwrap_or(base.stop_nm),
        step_nm: a.step_nm.unwrap_or(base.step_nm),
    };
    cfg.grid = Some(g);
    g
}

fn require_gain(cfg: &ScenarioConfig) -> CliResult<OpaGain> {
    cfg.gain.ok_or_else(|| {
        CliError::Core(Error::Validation(
            "no gain: pass --gain/--gain-db or set gain.g".into(),
        ))
    })
}

fn report_for(ctx: &Context, command: &str, seed: bool) -> RunReport {
    let mut r = RunReport::new(command, seed.then_some(ctx.seed));
    r.echo_scenario(&ctx.cfg);
    r
}

fn push_levels(r: &mut RunReport, prefix: &str, lv: &QuadLevels) {
    r.output(&format!("{prefix}r_minus_db"), db1(lv.r_minus_db()));
    r.output(&format!("{prefix}r_plus_db"), db1(lv.r_plus_db()));
    r.output(&format!("{prefix}r_minus"), lv.r_minus());
    r.output(&format!("{prefix}r_plus"), lv.r_plus());
}

fn simulate_spectrum(
    ctx: &mut Context,
    a: SimulateSpectrum,
    artifacts: &mut Artifacts,
) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    apply_dispersion(&mut ctx.cfg, &a.dispersion)?;
    let grid = apply_grid(&mut ctx.cfg, &a.grid).wavelengths()?;
    let levels = ctx.cfg.require_levels()?;
    let model = ctx.cfg.require_dispersion()?;
    let unit = match a.unit {
        UnitArg::Ratio => Unit::Ratio,
        UnitArg::Db => Unit::Db,
    };
    let trace = spectrum(&model, &levels, &grid)?
        .to_unit(unit)
        .with_meta(TraceMeta {
            label: a.label.clone(),
            ..TraceMeta::default()
        });

    let mut r = report_for(ctx, "simulate-spectrum", false);
    r.push("arg.unit", unit.as_str());
    push_levels(&mut r, "", &levels);
    r.output("points", trace.len());
    if let Some((lo, hi)) = trace.value_range() {
        r.output("value_min", lo);
        r.output("value_max", hi);
    }
    artifacts.add(a.out, write_trace(&trace));
    Ok(r)
}

fn estimate(ctx: &Context, a: EstimateDispersion) -> CliResult<RunReport> {
    let trace = parse_trace(&read_file(&a.input)?)?;
    let f0 =
        a.f0.or(ctx.cfg.dispersion.map(|d| d.f0))
            .unwrap_or(DEFAULT_CENTER_THZ);
    let opts = ExtremumOptions {
        smoothing_nm: a.smoothing_nm,
        min_prominence: a.min_prominence,
    };
    let est = estimate_dispersion(&trace, f0, &opts)?;

    let mut r = RunReport::new("estimate-dispersion", None);
    r.push("arg.input", a.input.display());
    r.push("arg.f0", f0);
    r.push("arg.smoothing_nm", a.smoothing_nm);
    r.push("arg.min_prominence", a.min_prominence);
    r.output("points", trace.len());
    r.output("extrema", est.extrema.len());
    r.output("abs_d_ps_per_nm", est.d);
    r.output("rms_phase_residual_rad", est.rms_phase_residual);
    Ok(r)
}

fn dcf(ctx: &mut Context, a: DesignDcf) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    let segments: Vec<FiberSegment> = if !a.segments.is_empty() {
        a.segments
            .iter()
            .map(|&(len, rate)| FiberSegment::new(len, rate))
            .collect::<Result<_, _>>()?
    } else {
        let net = a.net.or(ctx.cfg.dispersion.map(|d| d.d)).ok_or_else(|| {
            CliError::Core(Error::Validation(
                "no link: pass --segment, --net or set dispersion.d".into(),
            ))
        })?;
        vec![FiberSegment::new(1.0, net)?]
    };
    let length = design_dcf(&segments, a.dcf_rate, a.target)?;
    let net: f64 = segments.iter().map(FiberSegment::dispersion).sum();

    let mut r = report_for(ctx, "design-dcf", false);
    for (len, rate) in &a.segments {
        r.push("arg.segment", format!("{len}:{rate}"));
    }
    r.push("arg.dcf_rate", a.dcf_rate);
    r.push("arg.target", a.target);
    r.output("net_dispersion_ps_per_nm", net);
    r.output("dcf_length_m", length);
    r.output("residual_ps_per_nm", net + length * a.dcf_rate);
    if let Some(loss_db) = a.insertion_loss_db {
        r.push("arg.insertion_loss_db", loss_db);
        let t = ratio_from_db(-loss_db);
        r.output("insertion_transmission", t);
        if let Some(levels) = ctx.cfg.resolved_levels()? {
            push_levels(&mut r, "after_dcf.", &levels.attenuate(t)?);
        }
    }
    Ok(r)
}

fn band(ctx: &mut Context, a: Band) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    apply_dispersion(&mut ctx.cfg, &a.dispersion)?;
    let grid = apply_grid(&mut ctx.cfg, &a.grid);
    let model = ctx.cfg.require_dispersion()?;
    let lock_nm = a
        .lock_nm
        .or(ctx.cfg.lock.and_then(|l| l.lock_wavelength_nm))
        .unwrap_or(1545.0);
    let max_dev = match a.max_dev {
        Some(v) => v,
        None => degradation_phase(&ctx.cfg.require_levels()?, a.degradation_db)?,
    };
    let limits = FrequencyBand {
        lo: wavelength_to_frequency(grid.stop_nm),
        hi: wavelength_to_frequency(grid.start_nm),
    };
    let lock_f = wavelength_to_frequency(lock_nm);
    let b = phase_maintained_band(&model, lock_f, max_dev, limits)?;
    let (short_nm, long_nm) = b.wavelengths();

    let mut r = report_for(ctx, "band", false);
    r.push("arg.lock_nm", lock_nm);
    r.push("arg.max_dev_rad", max_dev);
    r.output("f_lo_thz", b.lo);
    r.output("f_hi_thz", b.hi);
    r.output("width_thz", b.width());
    r.output("above_lock_thz", b.hi - lock_f);
    r.output("below_lock_thz", lock_f - b.lo);
    r.output("lambda_short_nm", short_nm);
    r.output("lambda_long_nm", long_nm);
    r.output("lock_frequency_thz", lock_f);
    r.output("lock_check_nm", frequency_to_wavelength(lock_f));
    Ok(r)
}

fn correct(ctx: &mut Context, a: CorrectSqueezing) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    apply_gain(&mut ctx.cfg, &a.gain)?;
    let gain = require_gain(&ctx.cfg)?;
    let mut r;
    if let (Some(m), Some(p)) = (a.measured_minus_db, a.measured_plus_db) {
        let truth = true_from_measured(&MeasuredLevels::from_db(m, p)?, gain)?;
        r = report_for(ctx, "correct-squeezing", false);
        r.push("arg.measured_minus_db", m);
        r.push("arg.measured_plus_db", p);
        push_levels(&mut r, "true.", &truth);
        r.output("correction_db", truth.r_minus_db() - m);
    } else {
        let levels = ctx.cfg.require_levels()?;
        let meas = measured_from_true(&levels, gain);
        r = report_for(ctx, "correct-squeezing", false);
        push_levels(&mut r, "true.", &levels);
        let measured = QuadLevels::new(meas.r_minus_meas(), meas.r_plus_meas())?;
        push_levels(&mut r, "measured.", &measured);
        r.output("bias_db", squeezing_bias_db(&levels, gain));
    }
    r.output("gain_db", gain.db());
    Ok(r)
}

fn theta_eff(ctx: &mut Context, a: ThetaEff) -> CliResult<RunReport> {
    apply_gain(&mut ctx.cfg, &a.gain)?;
    let gain = require_gain(&ctx.cfg)?;
    let theta = effective_phase_deviation(gain);
    let mut r = report_for(ctx, "theta-eff", false);
    r.output("gain_db", gain.db());
    r.output("theta_eff_rad", theta);
    r.output("theta_eff_deg", format!("{:.2}", theta.to_degrees()));
    r.output("theta_eff_deg_full", theta.to_degrees());
    r.output(
        "theta_eff_deg_display",
        format!("{:.1}", theta.to_degrees()),
    );
    Ok(r)
}

fn gain_search(ctx: &mut Context, a: RequiredGain) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    let levels = ctx.cfg.require_levels()?;
    let resolution = if a.continuous {
        GainResolution::Continuous
    } else {
        GainResolution::Steps { step_db: a.step_db }
    };
    let g = required_gain(&levels, a.tolerance_db, resolution)?;
    let mut r = report_for(ctx, "required-gain", false);
    r.push("arg.tolerance_db", a.tolerance_db);
    if a.continuous {
        r.push("arg.resolution", "continuous");
    } else {
        r.push("arg.step_db", a.step_db);
    }
    r.output("gain", g.linear());
    r.output("gain_db", g.db());
    r.output("bias_db", squeezing_bias_db(&levels, g));
    let meas = measured_from_true(&levels, g);
    r.output(
        "measured_r_minus_db",
        db1(10.0 * meas.r_minus_meas().log10()),
    );
    Ok(r)
}

fn fit_calibration(ctx: &Context, a: FitCalibration) -> CliResult<RunReport> {
    let path = match (&a.sweep, &ctx.cfg.fit_sweep) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => ctx.base.join(p),
        (None, None) => {
            return Err(CliError::Core(Error::Validation(
                "no sweep: pass --sweep or set fit.sweep".into(),
            )))
        }
    };
    let points = parse_sweep(&read_file(&path)?)?;
    let opts = FitOptions {
        max_iterations: a.max_iterations,
        ..FitOptions::default()
    };
    let f = fit_with(&points, &opts)?;

    let mut r = RunReport::new("fit-calibration", None);
    r.push("arg.sweep", path.display());
    r.push("arg.max_iterations", a.max_iterations);
    r.output("points", points.len());
    r.output("a_per_w", f.a);
    r.output("a_sigma", f.sigma_a());
    r.output("loss", f.l);
    r.output("loss_sigma", f.sigma_l());
    r.output("residual_rms_db", f.residual_rms);
    r.output("iterations", f.iterations);
    for i in &f.warnings {
        let p = &points[*i];
        r.output(
            "warning",
            format!(
                "row {} (pump {} W) has squeezing above or anti-squeezing below 0 dB",
                i + 1,
                p.pump
            ),
        );
    }
    Ok(r)
}

fn chain(a: Chain) -> CliResult<RunReport> {
    let mut c = LossChain::new();
    for (label, t) in &a.elements {
        c.push(label.clone(), *t)?;
    }
    let eff = chain_efficiency(&c);
    let mut r = RunReport::new("chain", None);
    for e in c.elements() {
        r.push("arg.element", format!("{}:{}", e.label, e.transmission));
    }
    r.output("efficiency", eff);
    r.output("efficiency_percent", format!("{:.0}", eff * 100.0));
    if let Some(total) = a.total {
        let stage = infer_stage_efficiency(total, eff)?;
        r.push("arg.total", total);
        r.output("stage_efficiency", stage);
        r.output(
            "stage_loss_percent",
            format!("{:.1}", (1.0 - stage) * 100.0),
        );
    }
    Ok(r)
}

fn simulate_lock(
    ctx: &mut Context,
    a: SimulateLock,
    artifacts: &mut Artifacts,
) -> CliResult<RunReport> {
    apply_levels(&mut ctx.cfg, &a.levels)?;
    apply_dispersion(&mut ctx.cfg, &a.dispersion)?;
    let levels = ctx.cfg.require_levels()?;
    let model = ctx.cfg.require_dispersion()?;
    let base = ctx.cfg.lock.unwrap_or_default();
    let section = LockSection {
        ki: a.ki.or(base.ki),
        dt: a.dt.or(base.dt),
        target: a.target.or(base.target),
        lock_wavelength_nm: a.lock_nm.or(base.lock_wavelength_nm),
        noise_rms: a.noise_rms.or(base.noise_rms),
        drift_rate: a.drift_rate.or(base.drift_rate),
        max_steps: a.max_steps.or(base.max_steps),
        tolerance: a.tolerance.or(base.tolerance),
    };
    let lock_cfg = section.to_config(&levels)?;
    ctx.cfg.lock = Some(section);
    let res = run_lock(&lock_cfg, &model, &levels, ctx.seed)?;

    let mut csv = String::from("step,time_s,pd3,error,phi_actuated,phi_drift\n");
    for s in &res.trace {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.step,
            s.step as f64 * lock_cfg.dt,
            s.pd3_reading,
            lock_cfg.target - s.pd3_reading,
            s.phi0_actuated,
            s.phi_drift
        ));
    }
    artifacts.add(a.out, csv);

    let mut r = report_for(ctx, "simulate-lock", true);
    r.output("target", lock_cfg.target);
    r.output("status", res.status.as_str());
    r.output("locked", res.locked);
    r.output(
        "settle_step",
        res.settle_step
            .map_or("none".to_string(), |s| s.to_string()),
    );
    r.output("steady_state_rms_error", res.steady_state_rms_error);
    r.output("tolerance", res.tolerance);
    r.output("operating_slope_fraction", res.operating_slope_fraction);
    r.output("loop_gain", res.loop_gain);
    r.output("gain_sign", res.gain_sign);
    r.output("steady_phase_rad", res.steady_phase());
    Ok(r)
}

fn replicate_paper(ctx: &Context, a: ReplicatePaper) -> CliResult<()> {
    let cfg = if ctx.cfg == ScenarioConfig::default() {
        ScenarioConfig::paper_replica()
    } else {
        ctx.cfg.clone()
    };
    let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
    let rows = replicate::run_all(&cfg, seed)?;
    println!("tool_version = {}", opachain_core::report::TOOL_VERSION);
    println!("seed = {seed}");
    for row in &rows {
        println!("{row}");
    }
    let checked = rows.iter().filter(|o| o.passed.is_some()).count();
    let passed = rows.iter().filter(|o| o.passed == Some(true)).count();
    println!("summary = {passed}/{checked} passed");
    if a.strict && passed < checked {
        return Err(CliError::Core(Error::Validation(format!(
            "{} of {checked} checks failed",
            checked - passed
        ))));
    }
    Ok(())
}

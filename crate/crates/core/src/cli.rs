//! Command-line experiment runner.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a runtime
//! invariant is violated, 2 for usage and configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channels::{io, CovariantChannel, COMPLETENESS_TOL};
use crate::config::{ExperimentConfig, LoadedConfig};
use crate::diagnostics::{
    class_consistent, classify_channel, measure_delta, probe_suite, ChannelClass, DeltaMeasurement, MomentTable,
};
use crate::error::Error;
use crate::lindblad::{self, evolve, linear_fit, moment_rates, zero_diffusion_reduce};
use crate::random;
use crate::states::{remix_ensemble, DensityMatrix};
use crate::unraveling::{ensemble_average, ensemble_average_with_log, exact_average, TrajectoryConfig};

/// Largest tolerated covariance violation of a channel.
pub const COVARIANCE_TOL: f64 = 1e-10;

/// Relative tolerance between the population formula for `Δ` and the
/// variance change of the applied state.
pub const FORMULA_TOL: f64 = 1e-10;

/// Choi positivity is only checked up to this basis size.
pub const CHOI_MAX_BASIS: usize = 9;

/// Classification tolerances above this trigger a scan warning.
pub const COARSE_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "collapse-lab", version, about = "Momentum diffusion diagnostics for translation-covariant channels")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the classification tolerance `run.tol`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Completeness, CPTP, covariance and classification of `[channel]`.
    VerifyChannel,
    /// Repeated application of `[channel]` to `[state]`.
    Diffuse,
    /// Classification against measured spread changes on random channels.
    TheoremScan,
    /// RK4 evolution of `[state]` under `[lindblad]`.
    LindbladEvolve,
    /// Quantum-jump trajectories of `[channel]` against the exact average.
    Unravel,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError { code: 2, message: format!("config error: {e}") }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError { code: 1, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 1, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

struct Context {
    cfg: LoadedConfig,
    out: PathBuf,
}

impl Context {
    fn run(&self) -> &crate::config::RunSpec {
        &self.cfg.config.run
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    fn write_json<S: Serialize>(&self, name: &str, value: &S) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn load(cli: &Cli) -> CliResult<Context> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::config("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path).map_err(CliError::config)?;
    if let Some(seed) = cli.seed {
        cfg.config.run.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.config.run.tol = tol;
    }
    cfg.config.validate().map_err(CliError::config)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.config.output.dir.clone());
    fs::create_dir_all(&out)?;
    Ok(Context { cfg, out })
}

/// Runs the parsed command; `Ok(false)` means a check failed.
pub fn execute(cli: &Cli) -> CliResult<bool> {
    let ctx = load(cli)?;
    let passed = match cli.command {
        Command::VerifyChannel => verify_channel(&ctx)?,
        Command::Diffuse => diffuse(&ctx)?,
        Command::TheoremScan => theorem_scan(&ctx)?,
        Command::LindbladEvolve => lindblad_evolve(&ctx)?,
        Command::Unravel => unravel(&ctx)?,
    };
    println!("{}: {}", command_name(cli.command), if passed { "PASS" } else { "FAIL" });
    Ok(passed)
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::VerifyChannel => "verify-channel",
        Command::Diffuse => "diffuse",
        Command::TheoremScan => "theorem-scan",
        Command::LindbladEvolve => "lindblad-evolve",
        Command::Unravel => "unravel",
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn complete_channel(ctx: &Context) -> CliResult<CovariantChannel> {
    let ch = ctx.cfg.channel().map_err(CliError::config)?;
    ch.ensure_complete(COMPLETENESS_TOL)?;
    Ok(ch)
}

#[derive(Serialize)]
struct CptpReport {
    pass: bool,
    samples: usize,
    max_trace_deviation: f64,
    max_hermiticity_deviation: f64,
    min_eigenvalue: f64,
    /// Smallest Choi eigenvalue, for small bases only.
    choi_min_eigenvalue: Option<f64>,
}

#[derive(Serialize)]
struct VerifyReport {
    channel: &'static str,
    basis_size: usize,
    n_kraus: usize,
    n_blocks: usize,
    completeness_max_dev: f64,
    completeness_pass: bool,
    cptp: CptpReport,
    covariance_max_dev: f64,
    covariance_pass: bool,
    class: ChannelClass,
    tol: f64,
    delta: DeltaMeasurement,
    class_consistent: bool,
    pass: bool,
}

fn verify_channel(ctx: &Context) -> CliResult<bool> {
    let ch = ctx.cfg.channel().map_err(CliError::config)?;
    let lat = ch.lattice().clone();
    let run = ctx.run();

    let completeness_max_dev = ch.completeness_deviation();
    let completeness_pass = completeness_max_dev <= COMPLETENESS_TOL;

    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut cptp = CptpReport {
        pass: true,
        samples: run.cptp_samples,
        max_trace_deviation: 0.0,
        max_hermiticity_deviation: 0.0,
        min_eigenvalue: f64::INFINITY,
        choi_min_eigenvalue: None,
    };
    for i in 0..run.cptp_samples {
        let rank = 1 + i % lat.basis_size();
        let rho = random::density_matrix(&lat, rank, &mut rng);
        let r = ch.apply(&rho)?.invariant_report();
        cptp.max_trace_deviation = cptp.max_trace_deviation.max(r.trace_deviation);
        cptp.max_hermiticity_deviation = cptp.max_hermiticity_deviation.max(r.hermiticity);
        cptp.min_eigenvalue = cptp.min_eigenvalue.min(r.min_eigenvalue);
        cptp.pass &= r.passes();
    }
    if run.cptp_samples == 0 {
        cptp.min_eigenvalue = 0.0;
    }
    if lat.basis_size() <= CHOI_MAX_BASIS {
        let min = crate::linalg::min_eigenvalue(&ch.choi_matrix());
        cptp.choi_min_eigenvalue = Some(min);
        cptp.pass &= min >= -crate::states::POSITIVITY_TOL;
    }
    cptp.pass &= completeness_pass;

    let covariance_max_dev =
        ch.densify().covariance_check(&ctx.cfg.config.displacements()).map_err(CliError::config)?;
    let covariance_pass = covariance_max_dev <= COVARIANCE_TOL;

    let class = classify_channel(&ch, run.tol);
    let probes = probe_suite(&lat, run.n_random_probes, run.seed)?;
    let delta = measure_delta(&ch, &probes)?;
    let consistent = class_consistent(class, &delta, run.delta_tol);

    let pass = completeness_pass && cptp.pass && covariance_pass && consistent;
    let report = VerifyReport {
        channel: ctx.cfg.channel_spec().map_err(CliError::config)?.kind(),
        basis_size: lat.basis_size(),
        n_kraus: ch.n_kraus(),
        n_blocks: ch.blocks().len(),
        completeness_max_dev,
        completeness_pass,
        cptp,
        covariance_max_dev,
        covariance_pass,
        class,
        tol: run.tol,
        delta,
        class_consistent: consistent,
        pass,
    };
    ctx.write_json("verify_channel.json", &report)?;
    Ok(pass)
}

#[derive(Serialize)]
struct DiffuseSummary {
    channel: &'static str,
    class: ChannelClass,
    n_steps: usize,
    /// `|d_j| ≤ delta_tol` on every step and axis.
    mean_conserved: bool,
    /// Spread monotonicity is asserted for diffusive channels that conserve
    /// the mean; `None` when it does not apply.
    spread_nondecreasing: Option<bool>,
    /// Largest relative gap between `Δ_j` and the variance change of the
    /// applied state.
    max_formula_residual: f64,
    formula_pass: bool,
    final_mean_p: Vec<f64>,
    final_spread_p: Vec<f64>,
    pass: bool,
}

fn diffuse(ctx: &Context) -> CliResult<bool> {
    let ch = complete_channel(ctx)?;
    let mut rho = ctx.cfg.density().map_err(CliError::config)?;
    let lat = ch.lattice().clone();
    let dim = lat.dim();
    let run = ctx.run();
    let unit = lat.momentum_quantum();
    let table = MomentTable::new(&ch);
    let class = classify_channel(&ch, run.tol);

    let mut csv = String::from("step");
    for name in ["mean_p", "spread_p", "d", "D", "delta"] {
        for j in 0..dim {
            write!(csv, ",{name}_{j}").unwrap();
        }
    }
    csv.push('\n');
    let moments = |rho: &DensityMatrix| -> CliResult<(Vec<f64>, Vec<f64>)> {
        let mut mean = Vec::with_capacity(dim);
        let mut spread = Vec::with_capacity(dim);
        for j in 0..dim {
            mean.push(rho.mean_momentum(j)?);
            spread.push(rho.momentum_spread(j)?);
        }
        Ok((mean, spread))
    };
    let push_row = |csv: &mut String, step: usize, mean: &[f64], spread: &[f64], axes: &[(f64, f64, f64)]| {
        write!(csv, "{step}").unwrap();
        for v in mean.iter().chain(spread) {
            write!(csv, ",{}", float(*v)).unwrap();
        }
        let columns = axes.iter().map(|a| a.0).chain(axes.iter().map(|a| a.1)).chain(axes.iter().map(|a| a.2));
        for v in columns {
            write!(csv, ",{}", float(v)).unwrap();
        }
        csv.push('\n');
    };

    let (mut mean, mut spread) = moments(&rho)?;
    push_row(&mut csv, 0, &mean, &spread, &vec![(0.0, 0.0, 0.0); dim]);
    let mut mean_conserved = true;
    let mut nondecreasing = true;
    let mut max_formula_residual = 0.0f64;
    for step in 1..=run.n_steps {
        let report = table.report(&rho)?;
        rho = ch.apply(&rho)?;
        let (next_mean, next_spread) = moments(&rho)?;
        let mut axes = Vec::with_capacity(dim);
        for (j, a) in report.axes.iter().enumerate() {
            mean_conserved &= a.d.abs() <= run.delta_tol * unit;
            nondecreasing &= next_spread[j] >= spread[j] - run.delta_tol * unit * unit;
            let direct = next_spread[j] - spread[j];
            let scale = spread[j].abs().max(next_spread[j].abs()).max(unit * unit);
            max_formula_residual = max_formula_residual.max((a.delta - direct).abs() / scale);
            axes.push((a.d, a.big_d, a.delta));
        }
        push_row(&mut csv, step, &next_mean, &next_spread, &axes);
        mean = next_mean;
        spread = next_spread;
    }
    let report_state = rho.invariant_report();
    if !report_state.passes() {
        return Err(Error::Normalization {
            what: "state after repeated application",
            deviation: report_state.trace_deviation,
        }
        .into());
    }

    let spread_nondecreasing = (class == ChannelClass::Diffusive && mean_conserved).then_some(nondecreasing);
    let formula_pass = max_formula_residual <= FORMULA_TOL;
    let pass = formula_pass && spread_nondecreasing != Some(false);
    let summary = DiffuseSummary {
        channel: ctx.cfg.channel_spec().map_err(CliError::config)?.kind(),
        class,
        n_steps: run.n_steps,
        mean_conserved,
        spread_nondecreasing,
        max_formula_residual,
        formula_pass,
        final_mean_p: mean,
        final_spread_p: spread,
        pass,
    };
    ctx.write("diffuse.csv", &csv)?;
    ctx.write_json("diffuse_summary.json", &summary)?;
    Ok(pass)
}

#[derive(Serialize)]
struct ScanChannel {
    channel_id: usize,
    generated: &'static str,
    class: ChannelClass,
    max_abs_delta: f64,
    spread_changed: bool,
    consistent: bool,
}

#[derive(Serialize)]
struct ConfusionRow {
    class: ChannelClass,
    spread_preserved: usize,
    spread_changed: usize,
}

#[derive(Serialize)]
struct ScanReport {
    seed: u64,
    tol: f64,
    delta_tol: f64,
    n_momentum_diagonal: usize,
    n_diffusive: usize,
    n_probes: usize,
    /// Rows: structural class. Columns: whether any probe changed its spread
    /// by more than `delta_tol`.
    confusion: Vec<ConfusionRow>,
    misclassifications: usize,
    warnings: Vec<String>,
    channels: Vec<ScanChannel>,
    pass: bool,
}

/// Random channel `i` of a scan: the first `n_md` are momentum-diagonal, the
/// rest alternate between mean-conserving and general diffusive channels.
fn scan_channel(lat: &crate::BoxLattice, seed: u64, i: usize, n_md: usize) -> (&'static str, CovariantChannel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let n_kraus = 1 + i % 3;
    let max_transfer = (lat.n_max() as i64).clamp(1, 2);
    if i < n_md {
        ("momentum_diagonal", random::momentum_diagonal_channel(lat, n_kraus, &mut rng))
    } else if (i - n_md).is_multiple_of(2) {
        ("mean_conserving", random::mean_conserving_channel(lat, n_kraus, max_transfer, &mut rng))
    } else {
        ("general", random::covariant_channel(lat, n_kraus, max_transfer, &mut rng))
    }
}

fn theorem_scan(ctx: &Context) -> CliResult<bool> {
    let lat = ctx.cfg.lattice().map_err(CliError::config)?;
    let run = ctx.run();
    let dim = lat.dim();
    let probes = probe_suite(&lat, run.n_random_probes, run.seed)?;
    let total = run.n_momentum_diagonal + run.n_diffusive;
    if total > 0 && lat.n_max() == 0 {
        return Err(CliError::config("theorem-scan needs n_max ≥ 1"));
    }

    let mut warnings = Vec::new();
    if run.tol > COARSE_TOL {
        warnings.push(format!("classification tolerance {} is coarse; classes may be degenerate", run.tol));
    }
    let mut csv = String::from("channel_id,state_id,axis,d,D,delta,class\n");
    let mut confusion: Vec<ConfusionRow> =
        ChannelClass::ALL.iter().map(|&class| ConfusionRow { class, spread_preserved: 0, spread_changed: 0 }).collect();
    let mut channels = Vec::with_capacity(total);
    for i in 0..total {
        let (generated, ch) = scan_channel(&lat, run.seed, i, run.n_momentum_diagonal);
        let class = classify_channel(&ch, run.tol);
        let table = MomentTable::new(&ch);
        for p in &probes {
            for j in 0..dim {
                let a = table.axis_report(&p.state, j)?;
                writeln!(csv, "{i},{},{j},{},{},{},{class}", p.id, float(a.d), float(a.big_d), float(a.delta)).unwrap();
            }
        }
        let measured = measure_delta(&ch, &probes)?;
        let spread_changed = measured.max_abs_delta > run.delta_tol;
        let row = confusion.iter_mut().find(|r| r.class == class).expect("every class has a row");
        if spread_changed {
            row.spread_changed += 1;
        } else {
            row.spread_preserved += 1;
        }
        let expected =
            if generated == "momentum_diagonal" { ChannelClass::MomentumDiagonal } else { ChannelClass::Diffusive };
        if class != expected {
            warnings.push(format!("channel {i} generated as {generated} but classified {class}"));
        }
        channels.push(ScanChannel {
            channel_id: i,
            generated,
            class,
            max_abs_delta: measured.max_abs_delta,
            spread_changed,
            consistent: class_consistent(class, &measured, run.delta_tol),
        });
    }
    let misclassifications = channels.iter().filter(|c| !c.consistent).count();
    let pass = misclassifications == 0;
    let report = ScanReport {
        seed: run.seed,
        tol: run.tol,
        delta_tol: run.delta_tol,
        n_momentum_diagonal: run.n_momentum_diagonal,
        n_diffusive: run.n_diffusive,
        n_probes: probes.len(),
        confusion,
        misclassifications,
        warnings,
        channels,
        pass,
    };
    ctx.write("theorem_scan.csv", &csv)?;
    ctx.write_json("theorem_scan.json", &report)?;
    Ok(pass)
}

#[derive(Serialize)]
struct SlopeCheck {
    axis: usize,
    predicted: f64,
    fitted: f64,
    relative_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct LindbladSummary {
    generator: &'static str,
    n_terms: usize,
    t_final: f64,
    dt: f64,
    n_steps: usize,
    final_trace: f64,
    min_eig: f64,
    initial_rates: lindblad::MomentRates,
    momentum_diagonal: bool,
    /// `⟨p_j²⟩(t)` slope against the rate formula; CSL-like generators only.
    slope_checks: Option<Vec<SlopeCheck>>,
    /// Largest `|spread(t) - spread(0)|`; momentum-diagonal generators only.
    max_spread_drift: Option<f64>,
    pass: bool,
}

fn lindblad_evolve(ctx: &Context) -> CliResult<bool> {
    let gen = ctx.cfg.lindblad().map_err(CliError::config)?;
    let rho0 = ctx.cfg.density().map_err(CliError::config)?;
    let run = ctx.run();
    let dim = gen.lattice().dim();
    let traj = evolve(&gen, &rho0, run.t_final, run.dt)?;

    let mut csv = String::from("t,trace,min_eig");
    for name in ["mean_p", "spread_p"] {
        for j in 0..dim {
            write!(csv, ",{name}_{j}").unwrap();
        }
    }
    csv.push('\n');
    for p in &traj.points {
        write!(csv, "{},{},{}", float(p.t), float(p.trace), float(p.min_eig)).unwrap();
        for v in p.mean_p.iter().chain(&p.spread_p) {
            write!(csv, ",{}", float(*v)).unwrap();
        }
        csv.push('\n');
    }

    let rates = moment_rates(&gen, &rho0)?;
    let zero = zero_diffusion_reduce(&gen, run.tol)?;
    let kind = ctx.cfg.lindblad_spec().map_err(CliError::config)?.kind();
    let times: Vec<f64> = traj.points.iter().map(|p| p.t).collect();
    let slope_checks = if kind == "csl_like" && times.len() >= 2 {
        let mut checks = Vec::with_capacity(dim);
        for j in 0..dim {
            let y: Vec<f64> = traj.points.iter().map(|p| p.second_moment(j)).collect();
            let fit = linear_fit(&times, &y)?;
            let predicted = rates.dp2_rate[j];
            let relative_error = (fit.slope - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE);
            checks.push(SlopeCheck {
                axis: j,
                predicted,
                fitted: fit.slope,
                relative_error,
                pass: relative_error <= run.slope_tol,
            });
        }
        Some(checks)
    } else {
        None
    };
    let max_spread_drift = zero.is_momentum_diagonal.then(|| {
        let first = &traj.points[0].spread_p;
        traj.points.iter().flat_map(|p| p.spread_p.iter().zip(first).map(|(s, s0)| (s - s0).abs())).fold(0.0, f64::max)
    });
    let pass = slope_checks.as_ref().is_none_or(|c| c.iter().all(|c| c.pass))
        && max_spread_drift.is_none_or(|d| d <= run.spread_tol);
    let last = traj.points.last().expect("trajectory has its initial point");
    let summary = LindbladSummary {
        generator: kind,
        n_terms: gen.terms().len(),
        t_final: run.t_final,
        dt: run.dt,
        n_steps: traj.points.len() - 1,
        final_trace: last.trace,
        min_eig: traj.points.iter().map(|p| p.min_eig).fold(f64::INFINITY, f64::min),
        initial_rates: rates,
        momentum_diagonal: zero.is_momentum_diagonal,
        slope_checks,
        max_spread_drift,
        pass,
    };
    ctx.write("trajectory.csv", &csv)?;
    ctx.write_json("lindblad_summary.json", &summary)?;
    Ok(pass)
}

#[derive(Serialize)]
struct RemixReport {
    members: usize,
    distance_to_exact: f64,
    error_estimate: Option<f64>,
    distance_between_averages: f64,
    pass: bool,
}

#[derive(Serialize)]
struct UnravelReport {
    channel: &'static str,
    seed: u64,
    n_steps: usize,
    n_trajectories: usize,
    ensemble_members: usize,
    distance_to_exact: f64,
    /// Heuristic trace-distance error bar.
    error_estimate: Option<f64>,
    max_norm_deviation: f64,
    max_trace_distance: f64,
    remixed: Option<RemixReport>,
    pass: bool,
}

fn unravel(ctx: &Context) -> CliResult<bool> {
    let ch = complete_channel(ctx)?;
    let ensemble = ctx.cfg.ensemble().map_err(CliError::config)?;
    let run = ctx.run();
    let dim = ch.lattice().dim();
    let cfg = TrajectoryConfig::new(ch.clone(), run.seed, run.n_steps, run.n_trajectories)?;
    let avg =
        if run.log_outcomes { ensemble_average_with_log(&cfg, &ensemble)? } else { ensemble_average(&cfg, &ensemble)? };
    let exact = exact_average(&cfg, &ensemble)?;
    let distance_to_exact = avg.state.trace_distance(&exact)?;
    let mut pass = distance_to_exact <= run.max_trace_distance;

    let remixed = if run.remix_members > 0 {
        if run.remix_members < ensemble.len() {
            return Err(CliError::config(format!(
                "remix_members = {} is smaller than the {}-member initial ensemble",
                run.remix_members,
                ensemble.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        rng.set_stream(u64::MAX);
        let u = random::isometry(run.remix_members, ensemble.len(), &mut rng);
        let second = remix_ensemble(&ensemble, &u)?;
        let other_cfg = TrajectoryConfig { seed: run.seed.wrapping_add(1), ..cfg.clone() };
        let other = ensemble_average(&other_cfg, &second)?;
        let d_exact = other.state.trace_distance(&exact)?;
        let d_between = other.state.trace_distance(&avg.state)?;
        let ok = d_exact <= run.max_trace_distance && d_between <= run.max_trace_distance;
        pass &= ok;
        Some(RemixReport {
            members: second.len(),
            distance_to_exact: d_exact,
            error_estimate: other.error_estimate,
            distance_between_averages: d_between,
            pass: ok,
        })
    } else {
        None
    };

    if let Some(outcomes) = &avg.outcomes {
        let mut csv = String::from("trajectory,step,k");
        for j in 0..dim {
            write!(csv, ",q_{j}").unwrap();
        }
        csv.push('\n');
        for o in outcomes {
            write!(csv, "{},{},{}", o.trajectory, o.step, o.kraus_id).unwrap();
            for c in o.transfer.components() {
                write!(csv, ",{c}").unwrap();
            }
            csv.push('\n');
        }
        ctx.write("outcomes.csv", &csv)?;
    }
    let report = UnravelReport {
        channel: ctx.cfg.channel_spec().map_err(CliError::config)?.kind(),
        seed: run.seed,
        n_steps: run.n_steps,
        n_trajectories: run.n_trajectories,
        ensemble_members: ensemble.len(),
        distance_to_exact,
        error_estimate: avg.error_estimate,
        max_norm_deviation: avg.max_norm_deviation,
        max_trace_distance: run.max_trace_distance,
        remixed,
        pass,
    };
    ctx.write("unravel_state.json", &io::density_to_string(&avg.state)?)?;
    ctx.write_json("unravel.json", &report)?;
    Ok(pass)
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ladder_core::flux::{self, FluxCurve};
use ladder_core::rng::replica_rng;
use ladder_core::verify::{self, Scale, Suite, SuiteOptions};
use ladder_core::{Config, CoupledConfig, Kernel, LaneGeometry, MeasureSpec, Simulator, Site};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "ladder", version, about = "Two-lane and multilane exclusion processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw configurations from a measure.
    Sample(SampleArgs),
    /// Run the dynamics from draws of a measure.
    Simulate(SimulateArgs),
    /// Run two basic-coupled copies.
    Couple(CoupleArgs),
    /// Tabulate G and its first three derivatives.
    Flux(FluxArgs),
    /// Amplitude-1 entropy shocks and membership in Z.
    Classify(ClassifyArgs),
    /// R0 size and Z membership over a (d, r) grid.
    PhaseDiagram(PhaseArgs),
    /// Run a verification suite; exit code 2 when a check fails.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Window, e.g. `256x2:periodic`, `61x2:closed` or `128x3:periodic`.
    #[arg(long)]
    geometry: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; the output does not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Measure as JSON, inline or a file path.
    #[arg(long)]
    measure: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    /// Kernel as TOML, inline or a file path.
    #[arg(long)]
    kernel: String,
    #[arg(short = 'T', long = "horizon")]
    horizon: f64,
    /// Comma-separated snapshot times in `[0, T]`.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    measure: String,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CoupleArgs {
    /// Law of the first copy, JSON inline or a file path.
    #[arg(long)]
    measure: String,
    /// Independent law of the second copy. Without it the second copy is the
    /// first one with the `--flip` sites toggled.
    #[arg(long)]
    second: Option<String>,
    /// Site `column,lane` toggled in the second copy; repeatable.
    #[arg(long)]
    flip: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct FluxArgs {
    #[arg(long)]
    gamma0: f64,
    #[arg(long)]
    gamma1: f64,
    /// `q/p`; `inf` is accepted.
    #[arg(long)]
    r: f64,
    /// Number of equally spaced densities in `[0, 2]`.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// `gamma0/(gamma0 + gamma1)`, with total drift 1.
    #[arg(long, conflicts_with = "kernel")]
    d: Option<f64>,
    #[arg(long, requires = "d")]
    r: Option<f64>,
    /// Two-lane kernel TOML instead of `--d/--r`.
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Args, Serialize)]
struct PhaseArgs {
    /// Grid points per axis: `d` in `[0, 1]`, `r` in `(0, 1]`.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// invariance, reversibility, coupling, shocks, multilane or all.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fewer kernels and replicas.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The resolved inputs of a run, written at the head of every output.
#[derive(Serialize)]
struct ExperimentConfig<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<&'a Kernel>,
    measure: &'a MeasureSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    second: Option<&'a MeasureSpec>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flips: Vec<Site>,
    geometry: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snapshots: Option<&'a [f64]>,
    replicas: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<&'a Path>,
}

enum Failure {
    Invalid(anyhow::Error),
    SuiteFailed,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::SuiteFailed) => ExitCode::from(2),
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Sample(a) => sample(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::Couple(a) => couple(a)?,
        Command::Flux(a) => flux_table(a)?,
        Command::Classify(a) => classify(a)?,
        Command::PhaseDiagram(a) => phase_diagram(a)?,
        Command::Verify(a) => return verify_suites(a),
    }
    Ok(())
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

/// The argument itself when it looks inline, otherwise the file it names.
fn inline_or_file(arg: &str, inline: impl Fn(&str) -> bool) -> Result<String> {
    if inline(arg) {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
    }
}

fn parse_measure(arg: &str) -> Result<MeasureSpec> {
    let text = inline_or_file(arg, |s| s.trim_start().starts_with('{'))?;
    serde_json::from_str(&text).with_context(|| format!("invalid measure {arg:?}"))
}

fn parse_kernel(arg: &str) -> Result<Kernel> {
    let text = inline_or_file(arg, |s| s.contains('='))?;
    Kernel::from_toml_str(&text).with_context(|| format!("invalid kernel {arg:?}"))
}

fn parse_geometry(arg: &str) -> Result<LaneGeometry> {
    arg.parse().with_context(|| format!("invalid geometry {arg:?}"))
}

fn parse_site(arg: &str) -> Result<Site> {
    let (z, lane) = arg
        .split_once(',')
        .ok_or_else(|| anyhow!("site {arg:?} is not `column,lane`"))?;
    Ok(Site::new(
        z.trim().parse().with_context(|| format!("column in {arg:?}"))?,
        lane.trim().parse().with_context(|| format!("lane in {arg:?}"))?,
    ))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_jsonl(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn lanes(c: &Config) -> Vec<String> {
    (0..c.geometry().n_lanes()).map(|i| c.lane_string(i)).collect()
}

fn sample(a: SampleArgs) -> Result<()> {
    set_jobs(a.common.jobs)?;
    let spec = parse_measure(&a.measure)?;
    let g = parse_geometry(&a.common.geometry)?;
    spec.check(&g)?;
    let draws: Vec<Config> = (0..a.count as u64)
        .into_par_iter()
        .map(|k| spec.sample(&g, &mut replica_rng(a.common.seed, k)))
        .collect::<ladder_core::Result<_>>()?;
    let mut out = open_output(a.common.out.as_deref())?;
    let config = ExperimentConfig {
        command: "sample",
        kernel: None,
        measure: &spec,
        second: None,
        flips: Vec::new(),
        geometry: g.to_string(),
        horizon: None,
        snapshots: None,
        replicas: a.count,
        seed: a.common.seed,
        output: a.common.out.as_deref(),
    };
    write_jsonl(&mut out, &json!({ "experiment": config }))?;
    for (k, c) in draws.iter().enumerate() {
        write_jsonl(
            &mut out,
            &json!({ "replica": k, "particles": c.particle_count(), "lanes": lanes(c) }),
        )?;
    }
    out.flush()?;
    Ok(())
}

struct Prepared {
    kernel: Kernel,
    geometry: LaneGeometry,
    snapshots: Vec<f64>,
}

fn prepare(run: &RunArgs, common: &Common) -> Result<Prepared> {
    set_jobs(common.jobs)?;
    let kernel = parse_kernel(&run.kernel)?;
    let geometry = parse_geometry(&common.geometry)?;
    kernel.check_geometry(&geometry)?;
    if !(run.horizon.is_finite() && run.horizon >= 0.0) {
        bail!("T must be finite and non-negative, got {}", run.horizon);
    }
    if run.replicas == 0 {
        bail!("--replicas must be positive");
    }
    let mut snapshots = run.snapshots.clone();
    if snapshots.iter().any(|&t| !(0.0..=run.horizon).contains(&t)) {
        bail!("snapshot times must lie in [0, {}]", run.horizon);
    }
    snapshots.sort_by(f64::total_cmp);
    Ok(Prepared {
        kernel,
        geometry,
        snapshots,
    })
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let p = prepare(&a.run, &a.common)?;
    let spec = parse_measure(&a.measure)?;
    spec.check(&p.geometry)?;
    let sim = Simulator::new(&p.kernel, &p.geometry)?;
    let records: Vec<serde_json::Value> = (0..a.run.replicas as u64)
        .into_par_iter()
        .map(|k| -> ladder_core::Result<serde_json::Value> {
            let mut rng = replica_rng(a.common.seed, k);
            let initial = spec.sample(&p.geometry, &mut rng)?;
            let tr = sim.run(&initial, a.run.horizon, &p.snapshots, &mut rng)?;
            let snaps: Vec<_> = tr
                .snapshots
                .iter()
                .map(|s| json!({ "time": s.time, "lanes": lanes(&s.config) }))
                .collect();
            Ok(json!({
                "replica": k,
                "rings": tr.rings,
                "accepted": tr.accepted,
                "net_crossings": tr.crossings.iter().sum::<i64>(),
                "initial": lanes(&initial),
                "snapshots": snaps,
                "final": lanes(&tr.final_config),
            }))
        })
        .collect::<ladder_core::Result<_>>()?;
    let mut out = open_output(a.common.out.as_deref())?;
    let config = ExperimentConfig {
        command: "simulate",
        kernel: Some(&p.kernel),
        measure: &spec,
        second: None,
        flips: Vec::new(),
        geometry: p.geometry.to_string(),
        horizon: Some(a.run.horizon),
        snapshots: Some(&p.snapshots),
        replicas: a.run.replicas,
        seed: a.common.seed,
        output: a.common.out.as_deref(),
    };
    write_jsonl(&mut out, &json!({ "experiment": config }))?;
    for r in &records {
        write_jsonl(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

fn couple(a: CoupleArgs) -> Result<()> {
    let p = prepare(&a.run, &a.common)?;
    let spec = parse_measure(&a.measure)?;
    spec.check(&p.geometry)?;
    let second = a.second.as_deref().map(parse_measure).transpose()?;
    if let Some(s) = &second {
        s.check(&p.geometry)?;
    }
    let flips = a.flip.iter().map(|s| parse_site(s)).collect::<Result<Vec<_>>>()?;
    for &s in &flips {
        p.geometry.check_site(s)?;
    }
    if second.is_none() && flips.is_empty() {
        bail!("give --second or at least one --flip");
    }
    let sim = Simulator::new(&p.kernel, &p.geometry)?;
    let records: Vec<serde_json::Value> = (0..a.run.replicas as u64)
        .into_par_iter()
        .map(|k| -> ladder_core::Result<serde_json::Value> {
            let mut rng = replica_rng(a.common.seed, k);
            let eta = spec.sample(&p.geometry, &mut rng)?;
            let mut xi = match &second {
                Some(s) => s.sample(&p.geometry, &mut rng)?,
                None => eta.clone(),
            };
            for &s in &flips {
                xi.set(s, !xi.occupied(s))?;
            }
            let cc = CoupledConfig::new(eta, xi)?;
            let initial_class = cc.classify()?;
            let tr = sim.run_coupled(&cc, a.run.horizon, &p.snapshots, &mut rng)?;
            let snaps = tr
                .snapshots
                .iter()
                .map(|(t, s)| {
                    Ok(json!({
                        "time": t,
                        "class": s.classify()?,
                        "discrepancies": s.discrepancy_count(),
                        "eta": lanes(&s.eta),
                        "xi": lanes(&s.xi),
                    }))
                })
                .collect::<ladder_core::Result<Vec<_>>>()?;
            Ok(json!({
                "replica": k,
                "initial_class": initial_class,
                "rings": tr.rings,
                "coalescences": tr.coalescences,
                "discrepancy_increases": tr.discrepancy_increases,
                "order_violations": tr.order_violations,
                "discrepancy_path": tr.discrepancy_path,
                "snapshots": snaps,
            }))
        })
        .collect::<ladder_core::Result<_>>()?;
    let mut out = open_output(a.common.out.as_deref())?;
    let config = ExperimentConfig {
        command: "couple",
        kernel: Some(&p.kernel),
        measure: &spec,
        second: second.as_ref(),
        flips,
        geometry: p.geometry.to_string(),
        horizon: Some(a.run.horizon),
        snapshots: Some(&p.snapshots),
        replicas: a.run.replicas,
        seed: a.common.seed,
        output: a.common.out.as_deref(),
    };
    write_jsonl(&mut out, &json!({ "experiment": config }))?;
    for r in &records {
        write_jsonl(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

/// CSV has no place for metadata, so a file output gets a `.json` sidecar
/// with the resolved arguments.
fn write_sidecar(path: Option<&Path>, command: &str, args: &impl Serialize) -> Result<()> {
    if let Some(p) = path {
        let mut name = p.as_os_str().to_owned();
        name.push(".json");
        let body = json!({ "experiment": { "command": command, "arguments": args, "output": p } });
        std::fs::write(&name, serde_json::to_string_pretty(&body)? + "\n")
            .with_context(|| format!("writing {}", PathBuf::from(&name).display()))?;
    }
    Ok(())
}

/// Blank where a derivative does not exist; `-0` printed as `0`.
fn optional(x: ladder_core::Result<f64>) -> String {
    x.map(|v| (v + 0.0).to_string()).unwrap_or_default()
}

fn flux_table(a: FluxArgs) -> Result<()> {
    if a.grid < 2 {
        bail!("--grid must be at least 2");
    }
    let g = FluxCurve::new(a.gamma0, a.gamma1, a.r)?;
    let mut w = csv::Writer::from_writer(open_output(a.out.as_deref())?);
    w.write_record(["rho", "G", "G1", "G2", "G3"])?;
    for k in 0..a.grid {
        let rho = 2.0 * k as f64 / (a.grid - 1) as f64;
        w.write_record([
            rho.to_string(),
            g.value(rho)?.to_string(),
            optional(g.derivative(rho, 1)),
            optional(g.derivative(rho, 2)),
            optional(g.derivative(rho, 3)),
        ])?;
    }
    w.flush()?;
    write_sidecar(a.out.as_deref(), "flux", &a)
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let curve = match (&a.kernel, a.d, a.r) {
        (Some(k), _, _) => {
            let Kernel::TwoLane(rates) = parse_kernel(k)? else {
                bail!("classification needs a two-lane kernel");
            };
            FluxCurve::from_rates(&rates)?
        }
        (None, Some(d), Some(r)) => FluxCurve::reduced(d, r)?,
        _ => bail!("give --d and --r, or --kernel"),
    };
    let report = curve.classify_r0();
    let shocks: Vec<[f64; 2]> = report.shocks.iter().map(|s| [s.rho_minus, s.rho_plus]).collect();
    // rho* and Z are defined for the reduced curve with r in (0, 1].
    let zone = match curve.d() {
        Some(d) if (0.0..=1.0).contains(&d) && curve.r > 0.0 && curve.r <= 1.0 => {
            Some(flux::z_membership(d, curve.r)?)
        }
        _ => None,
    };
    let body = json!({
        "input": { "gamma0": curve.gamma0, "gamma1": curve.gamma1, "r": curve.r },
        "R0": shocks,
        "degenerate": report.degenerate,
        "rho_star": zone.map(|z| z.rho_star),
        "in_Z": zone.map(|z| z.inside()),
    });
    println!("{}", serde_json::to_string_pretty(&body)?);
    Ok(())
}

fn phase_diagram(a: PhaseArgs) -> Result<()> {
    if a.grid < 2 {
        bail!("--grid must be at least 2");
    }
    let n = a.grid;
    let cells: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| (1..=n).map(move |j| (i as f64 / (n - 1) as f64, j as f64 / n as f64)))
        .collect();
    let rows: Vec<(f64, f64, usize, bool)> = cells
        .par_iter()
        .map(|&(d, r)| -> Result<_> {
            let size = FluxCurve::reduced(d, r)?.classify_r0().shocks.len();
            Ok((d, r, size, flux::in_z(d, r)?))
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(open_output(a.out.as_deref())?);
    w.write_record(["d", "r", "r0_size", "in_z"])?;
    for (d, r, size, z) in rows {
        w.write_record([d.to_string(), r.to_string(), size.to_string(), z.to_string()])?;
    }
    w.flush()?;
    write_sidecar(a.out.as_deref(), "phase-diagram", &a)
}

fn verify_suites(a: VerifyArgs) -> std::result::Result<(), Failure> {
    set_jobs(a.jobs)?;
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse().map_err(anyhow::Error::from)?]
    };
    let options = SuiteOptions {
        seed: a.seed,
        scale: if a.quick { Scale::Quick } else { Scale::Full },
    };
    let mut reports = Vec::new();
    for s in suites {
        let rep = verify::run_suite(s, &options).map_err(anyhow::Error::from)?;
        for c in &rep.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            eprintln!("[{}] {tag} {}: {}", rep.suite, c.name, c.detail);
        }
        reports.push(rep);
    }
    let passed = reports.iter().all(|r| r.passed);
    let body = json!({ "experiment": { "command": "verify", "options": options }, "passed": passed, "reports": reports });
    let mut out = open_output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &body).map_err(anyhow::Error::from)?;
    out.write_all(b"\n").map_err(anyhow::Error::from)?;
    out.flush().map_err(anyhow::Error::from)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::SuiteFailed)
    }
}

//! Command-line driver for conductivity imaging from the interior current
//! density magnitude: simulate phantom data, run the reconstruction
//! algorithms on it, and inspect finished runs. Every run writes a manifest
//! with the full configuration and content hashes, so identical flags and
//! seeds reproduce identical files.

mod io;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cdii_core::dual::duality_gap;
use cdii_core::elliptic::harmonic_extension;
use cdii_core::field::{
    coarsen, magnitude, BoundaryData, Grid2D, ScalarField, VectorField2,
};
use cdii_core::phantom::{
    add_noise, boundary_voltage, layered_boundary_voltage, make_phantom, simulate, PhantomKind,
    VoltagePreset,
};
use cdii_core::solver::{
    masked_relative_l2_error, reconstruct_with, simple_iterations, ReconstructOptions,
    Reconstruction, ReconstructionConfig, SimpleResult, SolveMode,
};

use crate::manifest::{ConvergenceSummary, RunManifest, MANIFEST_NAME};

const TRACE_NAME: &str = "trace.tsv";
const RATE_NAME: &str = "rate.tsv";
const DEFAULT_FORWARD_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "cdii", version, about = "Conductivity imaging from interior current density")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem for a phantom and write the data files.
    Simulate(SimulateArgs),
    /// Recover a conductivity from current magnitude and boundary voltage.
    Reconstruct(ReconstructArgs),
    /// Report convergence and duality diagnostics for a finished run.
    Diagnose(DiagnoseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhantomPreset {
    /// Unit conductivity everywhere.
    Constant,
    /// Linear vertical profile 1 + 0.8 y.
    Layered,
    /// Smooth field of five overlapping bumps in [1, 1.8].
    Bumps,
    /// Piecewise inclusion with 10^3 contrast both ways.
    Inclusion,
}

impl PhantomPreset {
    fn kind(self) -> PhantomKind {
        match self {
            PhantomPreset::Constant => PhantomKind::Constant { value: 1.0 },
            PhantomPreset::Layered => PhantomKind::layered_default(),
            PhantomPreset::Bumps => PhantomKind::GaussianBumps,
            PhantomPreset::Inclusion => PhantomKind::inclusion_default(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            PhantomPreset::Constant => "constant",
            PhantomPreset::Layered => "layered",
            PhantomPreset::Bumps => "bumps",
            PhantomPreset::Inclusion => "inclusion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    /// Alternating split Bregman iteration.
    Bregman,
    /// Fixed-point update sigma = a / |grad v|, for comparison.
    Simple,
    /// Split Bregman with inexact inner solves on a shrinking budget.
    BregmanApprox,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Bregman => "bregman",
            Algorithm::Simple => "simple",
            Algorithm::BregmanApprox => "bregman-approx",
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Conductivity phantom preset.
    #[arg(long, value_enum)]
    phantom: PhantomPreset,
    /// Boundary voltage: `linear`, `sine7` (y + 2 sin(7 pi y)), or a path to
    /// a gridfield2 scalar file whose boundary trace is used. For the layered
    /// phantom, `linear` selects the vertical ramp matched to the layer
    /// profile, which keeps the exact field one-dimensional.
    #[arg(long, default_value = "linear")]
    f: String,
    /// Grid nodes per side.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Relative noise level on the current magnitude.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Noise generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solve the forward problem on the doubled grid (2n - 1 nodes per side)
    /// and restrict the data to the requested grid. Recommended when the data
    /// will be inverted on the same grid: it keeps the inversion from leaning
    /// on the forward solve's own discretization.
    #[arg(long)]
    refine: bool,
    /// Forward solver relative residual tolerance.
    #[arg(long, default_value_t = DEFAULT_FORWARD_TOL)]
    tol: f64,
    /// Output directory; defaults to $CDII_OUT, then ./cdii-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory of a previous simulate run to read data from. The noisy
    /// current magnitude is preferred when present.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Phantom preset to simulate in memory when no --input is given.
    #[arg(long, value_enum, required_unless_present = "input", conflicts_with = "input")]
    phantom: Option<PhantomPreset>,
    /// Boundary voltage for in-memory simulation; see `simulate --help`.
    #[arg(long, default_value = "linear", conflicts_with = "input")]
    f: String,
    /// Grid nodes per side for in-memory simulation.
    #[arg(long, default_value_t = 64, conflicts_with = "input")]
    n: usize,
    /// Relative noise level for in-memory simulation.
    #[arg(long, default_value_t = 0.0, conflicts_with = "input")]
    delta: f64,
    /// Noise generator seed for in-memory simulation.
    #[arg(long, default_value_t = 0, conflicts_with = "input")]
    seed: u64,
    /// Simulate on the doubled grid and restrict; see `simulate --help`.
    #[arg(long, conflicts_with = "input")]
    refine: bool,
    /// Penalty weight of the splitting.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Relative-change stopping tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = Algorithm::Bregman)]
    algorithm: Algorithm,
    /// Initial inner-solve error budget for bregman-approx.
    #[arg(long, default_value_t = 1e-2)]
    alpha0: f64,
    /// Geometric decay of the inner-solve budget for bregman-approx.
    #[arg(long, default_value_t = 0.7)]
    rho: f64,
    /// Output directory; defaults to $CDII_OUT, then ./cdii-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Directory of a finished reconstruct run.
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CDII_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cdii-out"))
}

/// A run directory being filled, tracking the files written for the manifest.
struct OutDir {
    dir: PathBuf,
    outputs: Vec<String>,
}

impl OutDir {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir,
            outputs: Vec::new(),
        })
    }

    fn scalar(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        io::write_scalar(&self.dir.join(name), field)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn vector(&mut self, name: &str, field: &VectorField2) -> Result<()> {
        io::write_vector(&self.dir.join(name), field)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn pgm(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        io::write_pgm(&self.dir.join(name), field)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

/// Everything the forward model hands to a reconstruction: data on the
/// requested grid plus the ground truth it came from.
struct ForwardData {
    sigma: ScalarField,
    voltage: ScalarField,
    current: VectorField2,
    a_clean: ScalarField,
    a_noisy: Option<ScalarField>,
    f: BoundaryData,
}

fn boundary_for(kind: &PhantomKind, choice: &str, grid: Grid2D) -> Result<BoundaryData> {
    match choice {
        "linear" => {
            if let PhantomKind::Layered { base, slope } = kind {
                Ok(layered_boundary_voltage(*base, *slope, grid)?)
            } else {
                Ok(boundary_voltage(VoltagePreset::Linear, grid))
            }
        }
        "sine7" => Ok(boundary_voltage(VoltagePreset::Sine7, grid)),
        path => {
            let field = io::read_scalar(Path::new(path))?;
            if field.grid() != grid {
                bail!(
                    "boundary file {} is on a {} grid, expected {}",
                    path,
                    field.grid().nx(),
                    grid.nx()
                );
            }
            Ok(BoundaryData::from_field(&field))
        }
    }
}

fn coarsen_vector(v: &VectorField2) -> Result<VectorField2> {
    let g = v.grid();
    let x = coarsen(&ScalarField::from_values(g, v.x().to_vec())?)?;
    let y = coarsen(&ScalarField::from_values(g, v.y().to_vec())?)?;
    let grid = x.grid();
    Ok(VectorField2::from_components(
        grid,
        x.values().to_vec(),
        y.values().to_vec(),
    )?)
}

fn run_forward(
    preset: PhantomPreset,
    f_choice: &str,
    n: usize,
    refine: bool,
    delta: f64,
    seed: u64,
    tol: f64,
) -> Result<ForwardData> {
    let kind = preset.kind();
    let grid = Grid2D::new(n)?;
    let f = boundary_for(&kind, f_choice, grid)?;

    let (sigma, voltage, current, a_clean) = if refine {
        let fine = Grid2D::new(2 * n - 1)?;
        let f_fine = boundary_for(&kind, f_choice, fine)?;
        let sim = simulate(&make_phantom(&kind, fine)?, &f_fine, tol)?;
        (
            make_phantom(&kind, grid)?,
            coarsen(&sim.voltage)?,
            coarsen_vector(&sim.current)?,
            coarsen(&sim.a)?,
        )
    } else {
        let sim = simulate(&make_phantom(&kind, grid)?, &f, tol)?;
        (sim.sigma, sim.voltage, sim.current, sim.a)
    };

    let a_noisy = (delta > 0.0).then(|| add_noise(&a_clean, delta, seed).a);
    Ok(ForwardData {
        sigma,
        voltage,
        current,
        a_clean,
        a_noisy,
        f,
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let start = Instant::now();
    let custom_f = !matches!(args.f.as_str(), "linear" | "sine7");
    if custom_f {
        if args.refine {
            return Ok(usage("--refine cannot be combined with a boundary file: \
                             the trace is only known on its own grid"));
        }
        if !Path::new(&args.f).is_file() {
            return Ok(usage(&format!("boundary file {} does not exist", args.f)));
        }
    }
    if args.n < 3 {
        return Ok(usage("--n must be at least 3"));
    }

    let data = run_forward(
        args.phantom,
        &args.f,
        args.n,
        args.refine,
        args.delta,
        args.seed,
        args.tol,
    )?;

    let mut out = OutDir::create(resolve_out(args.out))?;
    out.scalar("sigma.gf2", &data.sigma)?;
    out.scalar("voltage.gf2", &data.voltage)?;
    out.vector("current.gf2", &data.current)?;
    out.scalar("a.gf2", &data.a_clean)?;
    if let Some(noisy) = &data.a_noisy {
        out.scalar("a_noisy.gf2", noisy)?;
    }
    out.scalar("f.gf2", &data.f.to_field())?;
    out.pgm("sigma.pgm", &data.sigma)?;
    out.pgm("a.pgm", &data.a_clean)?;

    let mut m = RunManifest::new("simulate", args.n);
    m.phantom = Some(args.phantom.name().to_string());
    m.boundary = Some(args.f.clone());
    m.delta = Some(args.delta);
    m.seed = Some(args.seed);
    m.refine = Some(args.refine);
    m.forward_tol = Some(args.tol);
    if custom_f {
        m.inputs
            .insert(args.f.clone(), io::sha256_hex(Path::new(&args.f))?);
    }
    m.outputs = out.outputs.clone();
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.save(&out.dir)?;

    println!(
        "simulated {} phantom on {}x{} into {}",
        args.phantom.name(),
        args.n,
        args.n,
        out.dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Data a reconstruction starts from, with provenance for the manifest.
struct ReconstructInput {
    a: ScalarField,
    f: BoundaryData,
    truth: Option<ScalarField>,
    manifest: RunManifest,
}

fn load_input_dir(dir: &Path) -> Result<ReconstructInput> {
    let noisy_path = dir.join("a_noisy.gf2");
    let a_path = if noisy_path.is_file() {
        noisy_path
    } else {
        dir.join("a.gf2")
    };
    let a = io::read_scalar(&a_path)?;
    let f_path = dir.join("f.gf2");
    let f_field = io::read_scalar(&f_path)?;
    if f_field.grid() != a.grid() {
        bail!(
            "{} and {} are on different grids",
            a_path.display(),
            f_path.display()
        );
    }
    let truth_path = dir.join("sigma.gf2");
    let truth = truth_path
        .is_file()
        .then(|| io::read_scalar(&truth_path))
        .transpose()?;

    let mut m = RunManifest::new("reconstruct", a.grid().nx());
    for (name, path) in [("a", &a_path), ("f", &f_path)] {
        m.inputs.insert(
            format!("{name}:{}", path.display()),
            io::sha256_hex(path)?,
        );
    }
    if truth.is_some() {
        m.inputs.insert(
            format!("sigma:{}", truth_path.display()),
            io::sha256_hex(&truth_path)?,
        );
    }
    if let Ok(source) = RunManifest::load(dir) {
        m.phantom = source.phantom;
        m.boundary = source.boundary;
        m.delta = source.delta;
        m.seed = source.seed;
        m.refine = source.refine;
        m.forward_tol = source.forward_tol;
    }
    Ok(ReconstructInput {
        a,
        f: BoundaryData::from_field(&f_field),
        truth,
        manifest: m,
    })
}

fn generate_input(args: &ReconstructArgs) -> Result<ReconstructInput> {
    let preset = args.phantom.expect("clap enforces phantom without input");
    let data = run_forward(
        preset,
        &args.f,
        args.n,
        args.refine,
        args.delta,
        args.seed,
        DEFAULT_FORWARD_TOL,
    )?;
    let mut m = RunManifest::new("reconstruct", args.n);
    m.phantom = Some(preset.name().to_string());
    m.boundary = Some(args.f.clone());
    m.delta = Some(args.delta);
    m.seed = Some(args.seed);
    m.refine = Some(args.refine);
    m.forward_tol = Some(DEFAULT_FORWARD_TOL);
    Ok(ReconstructInput {
        a: data.a_noisy.unwrap_or(data.a_clean),
        f: data.f,
        truth: Some(data.sigma),
        manifest: m,
    })
}

enum RunOutcome {
    Bregman(Reconstruction),
    Simple(SimpleResult),
}

fn bregman_trace_tsv(rec: &Reconstruction, with_error: bool) -> String {
    let mut out = String::from("k\tresidual\tstep\tenergy\tdual\tgap\trel_change");
    if with_error {
        out.push_str("\terror");
    }
    out.push('\n');
    for e in &rec.trace.entries {
        out.push_str(&format!(
            "{}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
            e.k, e.residual, e.step_size, e.energy, e.dual_feasible, e.gap, e.rel_change
        ));
        if with_error {
            out.push_str(&format!("\t{:.12e}", e.error.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

fn simple_trace_tsv(res: &SimpleResult, with_error: bool) -> String {
    let mut out = String::from("k\trel_change\tfloored_fraction\tnear_degenerate_fraction");
    if with_error {
        out.push_str("\terror");
    }
    out.push('\n');
    for e in &res.trace {
        out.push_str(&format!(
            "{}\t{:.12e}\t{:.12e}\t{:.12e}",
            e.k,
            e.rel_change.unwrap_or(f64::NAN),
            e.floored_fraction,
            e.near_degenerate_fraction
        ));
        if with_error {
            out.push_str(&format!("\t{:.12e}", e.error.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

fn mask_field(grid: Grid2D, mask: &[bool]) -> ScalarField {
    let values = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    ScalarField::from_values(grid, values).expect("mask length matches grid")
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<ExitCode> {
    let start = Instant::now();
    if args.input.is_none() {
        let custom_f = !matches!(args.f.as_str(), "linear" | "sine7");
        if custom_f {
            if args.refine {
                return Ok(usage("--refine cannot be combined with a boundary file: \
                                 the trace is only known on its own grid"));
            }
            if !Path::new(&args.f).is_file() {
                return Ok(usage(&format!("boundary file {} does not exist", args.f)));
            }
        }
        if args.n < 3 {
            return Ok(usage("--n must be at least 3"));
        }
    }

    let input = match &args.input {
        Some(dir) => {
            if !dir.join("a.gf2").is_file() && !dir.join("a_noisy.gf2").is_file() {
                return Ok(usage(&format!(
                    "{} does not contain simulated data (no a.gf2)",
                    dir.display()
                )));
            }
            load_input_dir(dir)?
        }
        None => generate_input(&args)?,
    };

    let mode = if args.algorithm == Algorithm::BregmanApprox {
        SolveMode::Approximate {
            alpha0: args.alpha0,
            rho: args.rho,
        }
    } else {
        SolveMode::Exact
    };
    let config = ReconstructionConfig {
        lambda: args.lambda,
        tol: args.tol,
        max_iters: args.max_iters,
        mode,
        ..ReconstructionConfig::default()
    };

    let outcome = match args.algorithm {
        Algorithm::Simple => RunOutcome::Simple(simple_iterations(
            &input.a,
            &input.f,
            config,
            input.truth.as_ref(),
        )?),
        _ => RunOutcome::Bregman(reconstruct_with(
            &input.a,
            &input.f,
            config,
            ReconstructOptions {
                truth: input.truth.as_ref(),
                ..ReconstructOptions::default()
            },
        )?),
    };

    let mut out = OutDir::create(resolve_out(args.out))?;
    out.scalar("a.gf2", &input.a)?;
    out.scalar("f.gf2", &input.f.to_field())?;
    if let Some(truth) = &input.truth {
        out.scalar("sigma.gf2", truth)?;
    }

    let mut m = input.manifest;
    m.lambda = Some(args.lambda);
    m.tol = Some(args.tol);
    m.max_iters = Some(args.max_iters);
    m.algorithm = Some(args.algorithm.name().to_string());
    if args.algorithm == Algorithm::BregmanApprox {
        m.alpha0 = Some(args.alpha0);
        m.rho = Some(args.rho);
    }
    let with_error = input.truth.is_some();

    let code = match &outcome {
        RunOutcome::Bregman(rec) => {
            out.scalar("sigma_hat.gf2", &rec.sigma)?;
            out.scalar("v_hat.gf2", &rec.v)?;
            out.vector("current_hat.gf2", &rec.current)?;
            out.scalar("floor_mask.gf2", &mask_field(rec.sigma.grid(), &rec.floor_mask))?;
            out.pgm("sigma_hat.pgm", &rec.sigma)?;
            out.text(TRACE_NAME, &bregman_trace_tsv(rec, with_error))?;
            let last = rec.trace.last();
            m.convergence = Some(ConvergenceSummary {
                converged: rec.converged,
                iterations: rec.iterations,
                final_residual: last.map(|e| e.residual),
                final_rel_change: last.map(|e| e.rel_change),
                final_error: last.and_then(|e| e.error),
                floored_fraction: rec.floored_fraction,
                breakdown: None,
            });
            if rec.converged {
                println!(
                    "converged in {} iterations, final residual {:.3e}",
                    rec.iterations,
                    last.map(|e| e.residual).unwrap_or(f64::NAN)
                );
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "tolerance {:.1e} not reached within {} iterations",
                    args.tol, args.max_iters
                );
                ExitCode::from(4)
            }
        }
        RunOutcome::Simple(res) => {
            out.scalar("sigma_hat.gf2", &res.sigma)?;
            out.scalar("v_hat.gf2", &res.v)?;
            out.scalar("floor_mask.gf2", &mask_field(res.sigma.grid(), &res.floor_mask))?;
            out.pgm("sigma_hat.pgm", &res.sigma)?;
            out.text(TRACE_NAME, &simple_trace_tsv(res, with_error))?;
            let last = res.trace.last();
            let floored = last.map(|e| e.floored_fraction).unwrap_or(0.0);
            m.convergence = Some(ConvergenceSummary {
                converged: res.converged,
                iterations: res.iterations,
                final_residual: None,
                final_rel_change: last.and_then(|e| e.rel_change),
                final_error: last.and_then(|e| e.error),
                floored_fraction: floored,
                breakdown: res.breakdown.as_ref().map(|b| format!("{b:?}")),
            });
            if let Some(reason) = &res.breakdown {
                eprintln!("iteration broke down after {} sweeps: {reason:?}", res.iterations);
                ExitCode::from(5)
            } else if res.converged {
                println!("converged in {} iterations", res.iterations);
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "tolerance {:.1e} not reached within {} iterations",
                    args.tol, args.max_iters
                );
                ExitCode::from(4)
            }
        }
    };

    m.outputs = out.outputs.clone();
    m.elapsed_seconds = start.elapsed().as_secs_f64();
    m.save(&out.dir)?;
    println!("run directory: {}", out.dir.display());
    Ok(code)
}

fn read_trace(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let headers: Vec<String> = lines
        .next()
        .with_context(|| format!("{} is empty", path.display()))?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split('\t')
            .map(|field| field.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{} line {}: bad number", path.display(), lineno + 2))?;
        if row.len() != headers.len() {
            bail!("{} line {}: wrong column count", path.display(), lineno + 2);
        }
        rows.push(row);
    }
    Ok((headers, rows))
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<ExitCode> {
    let dir = &args.input;
    if !dir.join(MANIFEST_NAME).is_file() {
        return Ok(usage(&format!("{} is not a run directory (no manifest)", dir.display())));
    }
    let trace_path = dir.join(TRACE_NAME);
    if !trace_path.is_file() {
        return Ok(usage(&format!("{} has no iteration trace", dir.display())));
    }
    let m = RunManifest::load(dir)?;
    let algorithm = m.algorithm.clone().unwrap_or_else(|| "bregman".into());

    println!("run: {} on {}x{} grid, algorithm {algorithm}", m.command, m.grid, m.grid);
    if let Some(c) = &m.convergence {
        match &c.breakdown {
            Some(reason) => println!("ended: breakdown after {} iterations ({reason})", c.iterations),
            None if c.converged => println!("ended: converged in {} iterations", c.iterations),
            None => println!("ended: iteration cap {} without convergence", c.iterations),
        }
        if let Some(err) = c.final_error {
            println!("conductivity error vs truth (off-floor): {err:.4e}");
        }
    }

    if algorithm != "simple" {
        let a = io::read_scalar(&dir.join("a.gf2"))?;
        let f_field = io::read_scalar(&dir.join("f.gf2"))?;
        let v = io::read_scalar(&dir.join("v_hat.gf2"))?;
        let j = io::read_vector(&dir.join("current_hat.gf2"))?;
        // The physical-scale dual candidate is lambda b = -J.
        let b = j.scale(-1.0);
        let (u_f, _) = harmonic_extension(&BoundaryData::from_field(&f_field), 1e-12);
        let report = duality_gap(&v, &b, &a, &u_f, 1e-8);
        println!("primal energy:        {:.6e}", report.primal);
        println!("dual value (clipped): {:.6e}", report.dual);
        println!("duality gap:          {:.3e} ({:.3e} relative)", report.gap, report.relative_gap);
        println!("dual feasibility:     max |lambda b| - a = {:.3e}", report.max_violation);
        println!("alignment defect:     {:.3e}", report.alignment_defect);
        println!("gradient floor hit:   {:.2}% of nodes", 100.0 * report.floored_fraction);

        let mj = magnitude(&j);
        let inactive: Vec<bool> = a.values().iter().map(|&w| w == 0.0).collect();
        let current_err = masked_relative_l2_error(&mj, &a, &inactive);
        println!("|J_hat| vs |J| data:  {current_err:.4e} relative over active nodes");
    }

    let (headers, rows) = read_trace(&trace_path)?;
    let column = if algorithm == "simple" { "rel_change" } else { "residual" };
    let idx = headers
        .iter()
        .position(|h| h == column)
        .with_context(|| format!("trace has no {column} column"))?;
    let mut rate_rows = String::from("k\tvalue\trate\n");
    let mut rates = Vec::new();
    for pair in rows.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let rate = if prev[idx] > 0.0 { cur[idx] / prev[idx] } else { f64::NAN };
        rate_rows.push_str(&format!("{}\t{:.12e}\t{:.6}\n", cur[0] as usize, cur[idx], rate));
        if rate.is_finite() && rate > 0.0 {
            rates.push(rate);
        }
    }
    let tail: Vec<f64> = rates.iter().rev().take(10).copied().collect();
    if !tail.is_empty() {
        let mean = (tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp();
        println!("contraction rate:     {mean:.4} ({column} ratio, last {} sweeps)", tail.len());
    }
    let rate_path = dir.join(RATE_NAME);
    fs::write(&rate_path, rate_rows).with_context(|| format!("writing {}", rate_path.display()))?;
    println!("rate table:           {}", rate_path.display());
    Ok(ExitCode::SUCCESS)
}

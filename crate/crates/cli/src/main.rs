mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use hho_core::afem::{compute_rates, run_afem, Benchmark, MaterialSpec, Mode, RunConfig};
use hho_core::mesh::{build_initial_mesh, SideKind, Triangulation};
use hho_core::operators::Variant;
use hho_core::verify::{run_suite, Suite};
use hho_core::Error;

#[derive(Parser)]
#[command(name = "hho", version, about = "Adaptive hybrid high-order solver for planar linear elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an adaptive or uniform convergence study.
    Run(RunArgs),
    /// Run the built-in verification suites.
    Verify(VerifyArgs),
    /// Print statistics of a benchmark mesh or mesh file.
    MeshInfo(MeshInfoArgs),
}

#[derive(Args)]
struct RunArgs {
    /// cooks, lshape, square, polynomial=<d> or mesh=<path>
    #[arg(long, default_value = "lshape")]
    benchmark: Benchmark,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// adaptive or uniform
    #[arg(long, default_value = "adaptive")]
    mode: Mode,
    /// Bulk parameter of the marking step.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Young's modulus.
    #[arg(long = "E", default_value_t = 1e5, conflicts_with_all = ["lambda", "mu"])]
    young: f64,
    /// Poisson ratio.
    #[arg(long, default_value_t = 0.4999, conflicts_with_all = ["lambda", "mu"])]
    nu: f64,
    /// First Lamé parameter (requires --mu).
    #[arg(long, requires = "mu")]
    lambda: Option<f64>,
    /// Shear modulus (requires --lambda).
    #[arg(long, requires = "lambda")]
    mu: Option<f64>,
    /// classic, tilde or hdg
    #[arg(long, default_value = "classic")]
    variant: Variant,
    #[arg(long, default_value_t = 200_000)]
    max_ndof: usize,
    /// Maximum number of levels.
    #[arg(long, default_value_t = 40)]
    levels: usize,
    /// Wall-time budget in seconds.
    #[arg(long)]
    max_time: Option<f64>,
    /// Number of trailing levels in the least-squares rate fit.
    #[arg(long, default_value_t = 3)]
    fit_window: usize,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write the convergence plot and final mesh as SVG.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// operators, stabilization, patch or all
    #[arg(long, default_value = "all")]
    suite: String,
    /// Polynomial degree; all supported degrees of the suite when omitted.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct MeshInfoArgs {
    /// cooks, lshape, square or mesh=<path>
    #[arg(long, default_value = "lshape")]
    benchmark: Benchmark,
    /// Number of uniform refinements applied first.
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Write the mesh in ASCII format to this path.
    #[arg(long)]
    write: Option<PathBuf>,
    /// Write a wireframe SVG to this path.
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::MeshInfo(args) => mesh_info(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidMaterial(_)
        | Error::UnsupportedDegree(_)
        | Error::MalformedMesh(_)
        | Error::NonConforming(_)
        | Error::InconsistentLabels(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut config = RunConfig::new(args.benchmark, args.k, args.mode);
    config.variant = args.variant;
    config.theta = args.theta;
    config.material = match (args.lambda, args.mu) {
        (Some(lambda), Some(mu)) => MaterialSpec::Lame { lambda, mu },
        _ => MaterialSpec::YoungPoisson { e: args.young, nu: args.nu },
    };
    config.max_ndof = args.max_ndof;
    config.max_levels = args.levels;
    if let Some(s) = args.max_time {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidConfig(format!("wall-time budget must be positive, got {s}")));
        }
        config.max_wall_time = Some(Duration::from_secs_f64(s));
    }
    if args.fit_window < 2 {
        return Err(Error::InvalidConfig("the rate fit needs at least two levels".into()));
    }
    config.validate()?;

    let history = run_afem(&config)?;
    let rates = compute_rates(&history, args.fit_window);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("history.csv"), output::history_csv(&history, &rates)?)?;
    std::fs::write(args.out.join("history.json"), output::history_json(&history, &rates)?)?;
    history.final_mesh.write(&args.out.join("final_mesh.msh"))?;
    if args.svg {
        std::fs::write(args.out.join("convergence.svg"), plot::convergence(&history))?;
        std::fs::write(args.out.join("mesh.svg"), plot::wireframe(&history.final_mesh))?;
    }

    print!("{}", output::history_table(&history, &rates));
    println!("output written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode, Error> {
    let suites: Vec<Suite> = if args.suite == "all" { Suite::ALL.to_vec() } else { vec![args.suite.parse()?] };
    if let Some(k) = args.k {
        if k == 0 || k > 5 {
            return Err(Error::UnsupportedDegree(k));
        }
    }
    let mut failed = 0;
    println!("{:<14} {:<36} {:>11} {:>9}  result", "suite", "check", "value", "tolerance");
    for suite in suites {
        let ks: Vec<usize> = match (args.k, suite) {
            (Some(k), _) => vec![k],
            (None, Suite::Operators) => (1..=5).collect(),
            (None, _) => (1..=3).collect(),
        };
        for check in run_suite(suite, &ks)? {
            let ok = check.passed();
            failed += usize::from(!ok);
            println!(
                "{:<14} {:<36} {:>11.3e} {:>9.1e}  {}",
                check.suite.name(),
                check.name,
                check.value,
                check.tolerance,
                if ok { "pass" } else { "FAIL" }
            );
        }
    }
    if failed == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{failed} check(s) failed");
        Ok(ExitCode::from(1))
    }
}

fn mesh_info(args: MeshInfoArgs) -> Result<ExitCode, Error> {
    let mut mesh = build_initial_mesh(&args.benchmark.domain())?;
    for _ in 0..args.refine {
        mesh = mesh.uniform_refine();
    }
    print!("{}", mesh_statistics(&mesh));
    if let Some(path) = &args.write {
        mesh.write(path)?;
    }
    if let Some(path) = &args.svg {
        write_file(path, &plot::wireframe(&mesh))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::write(path, text)?)
}

fn mesh_statistics(mesh: &Triangulation) -> String {
    let count = |kind: SideKind| mesh.sides().iter().filter(|s| s.kind == kind).count();
    let min_angle = (0..mesh.n_elements()).map(|t| mesh.min_angle(t)).fold(f64::INFINITY, f64::min);
    let max_generation = (0..mesh.n_elements()).map(|t| mesh.generation(t)).max().unwrap_or(0);
    let mut s = String::new();
    s += &format!("vertices          {}\n", mesh.vertices().len());
    s += &format!("elements          {}\n", mesh.n_elements());
    s += &format!("sides             {}\n", mesh.n_sides());
    s += &format!("  interior        {}\n", count(SideKind::Interior));
    s += &format!("  dirichlet       {}\n", count(SideKind::Dirichlet));
    s += &format!("  neumann         {}\n", count(SideKind::Neumann));
    s += &format!("area              {:.12}\n", mesh.area());
    s += &format!("h_min             {:.6e}\n", mesh.h_min());
    s += &format!("h_max             {:.6e}\n", mesh.h_max());
    s += &format!("min angle (deg)   {:.4}\n", min_angle.to_degrees());
    s += &format!("max generation    {max_generation}\n");
    s
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netmorph_core::adaptation::Integrator;
use netmorph_core::FluxEnergyMode;
use netmorph_cli::reproduce::{run_all, run_criterion, CRITERIA};
use netmorph_cli::{configure_threads, run_scenario, CliError, Kind, MethodName, NetworkInput, PointSource, Scenario};

/// Adaptive transport network simulations.
#[derive(Parser)]
#[command(name = "netmorph", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the discrete adaptation ODE on a network.
    SimulateDiscrete(ScenarioArgs),
    /// Minimize the flux energy over conservative fluxes of a network.
    MinimizeFlux(ScenarioArgs),
    /// Run the monokinetic field model on a 1D or 2D grid.
    SimulateMeso {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        dim: Option<u8>,
        #[command(flatten)]
        args: ScenarioArgs,
    },
    /// Run the particle model on a straight source-sink segment.
    SimulateParticles(ScenarioArgs),
    /// Minimizing-movement steps of the pressureless model.
    Mms(ScenarioArgs),
    /// Compare the directional and Beckmann optima.
    BeckmannCheck(ScenarioArgs),
    /// Run a scenario file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory, overriding the scenario's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite and print one line per criterion.
    ReproduceAll {
        /// Run criteria one after another instead of concurrently.
        #[arg(long)]
        sequential: bool,
        /// Only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Also write the results as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Every flag maps onto a scenario field of the same name.
#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// Base scenario file; flags override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Network JSON file.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    /// Isotropic permeability floor.
    #[arg(long)]
    r: Option<f64>,
    /// Proximal step of the minimizing-movement scheme.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Minimizing-movement steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Flux energy: gilbert or quadratic.
    #[arg(long, value_parser = parse_serde::<FluxEnergyMode>)]
    mode: Option<FluxEnergyMode>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Starts for the multistart method.
    #[arg(long)]
    starts: Option<usize>,
    /// Time integrator: euler or rk4.
    #[arg(long, value_parser = parse_serde::<Integrator>)]
    integrator: Option<Integrator>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    lx: Option<f64>,
    #[arg(long)]
    ly: Option<f64>,
    /// Quadrature directions on the half circle.
    #[arg(long)]
    dirs: Option<usize>,
    /// Point source `x,y,mass` (or `x,mass` in 1D); repeatable.
    #[arg(long = "source", allow_hyphen_values = true)]
    sources: Vec<PointSource>,
    /// Width of Gaussian source bumps.
    #[arg(long)]
    sigma: Option<f64>,
    /// Initial conductivity.
    #[arg(long)]
    c_init: Option<f64>,
    /// Relative seeded noise on the initial conductivity.
    #[arg(long)]
    perturbation: Option<f64>,
    /// Particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// Vertices of the random network used when no network is given.
    #[arg(long)]
    vertices: Option<usize>,
    /// Print the resulting scenario JSON instead of running it.
    #[arg(long)]
    print_scenario: bool,
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl ScenarioArgs {
    fn into_scenario(self, kind: impl FnOnce(Option<Kind>) -> Result<Kind, CliError>) -> Result<(Scenario, bool), CliError> {
        let mut sc = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::new(Kind::Discrete),
        };
        sc.kind = kind(self.scenario.as_ref().map(|_| sc.kind))?;
        let p = &mut sc.params;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(
            seed => sc.seed,
            out => sc.output,
            gamma => p.gamma,
            nu => p.nu,
            c0 => p.c0,
            r => p.r,
            tau => p.tau,
            dt => p.dt,
            t_end => p.t_end,
            steps => p.steps,
            mode => p.mode,
            method => p.method,
            starts => p.starts,
            integrator => p.integrator,
            nx => p.grid.nx,
            ny => p.grid.ny,
            lx => p.grid.lx,
            ly => p.grid.ly,
            dirs => p.grid.dirs,
            sigma => p.sigma,
            c_init => p.c_init,
            perturbation => p.perturbation,
            particles => p.particles,
            vertices => p.vertices,
        );
        if !self.sources.is_empty() {
            p.sources = self.sources;
        }
        if let Some(n) = self.network {
            sc.network = Some(NetworkInput::Path(n));
        }
        Ok((sc, self.print_scenario))
    }
}

fn fixed(k: Kind) -> impl FnOnce(Option<Kind>) -> Result<Kind, CliError> {
    move |from_file| match from_file {
        Some(f) if f != k => Err(CliError::Config(format!("scenario kind {f:?} does not match the subcommand"))),
        _ => Ok(k),
    }
}

fn scenario_cmd(args: ScenarioArgs, kind: impl FnOnce(Option<Kind>) -> Result<Kind, CliError>) -> Result<(), CliError> {
    let (sc, print) = args.into_scenario(kind)?;
    if print {
        sc.validate()?;
        println!("{}", sc.to_json());
        return Ok(());
    }
    execute(&sc, None)
}

fn execute(sc: &Scenario, out: Option<&std::path::Path>) -> Result<(), CliError> {
    let report = run_scenario(sc, out)?;
    println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
    println!("wrote {} files to {}", report.files.len(), report.dir.display());
    Ok(())
}

fn reproduce(sequential: bool, only: Vec<u8>, json: Option<PathBuf>) -> Result<(), CliError> {
    let results = if only.is_empty() {
        run_all(!sequential)
    } else {
        only.iter()
            .map(|&id| run_criterion(id).ok_or_else(|| CliError::Config(format!("no criterion {id}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed ({} registered)", results.len(), CRITERIA.len());
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&results).expect("results serialize");
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.cmd {
        Cmd::SimulateDiscrete(a) => scenario_cmd(a, fixed(Kind::Discrete)),
        Cmd::MinimizeFlux(a) => scenario_cmd(a, fixed(Kind::FluxMin)),
        Cmd::SimulateMeso { dim, args } => scenario_cmd(args, move |from_file| match (dim, from_file) {
            (Some(1), _) => Ok(Kind::Meso1d),
            (Some(_), _) => Ok(Kind::Meso2d),
            (None, Some(k @ (Kind::Meso1d | Kind::Meso2d))) => Ok(k),
            (None, Some(k)) => Err(CliError::Config(format!("scenario kind {k:?} is not a meso kind"))),
            (None, None) => Ok(Kind::Meso2d),
        }),
        Cmd::SimulateParticles(a) => scenario_cmd(a, fixed(Kind::Particles)),
        Cmd::Mms(a) => scenario_cmd(a, fixed(Kind::Mms)),
        Cmd::BeckmannCheck(a) => scenario_cmd(a, fixed(Kind::Beckmann)),
        Cmd::Run { scenario, out } => Scenario::load(&scenario).and_then(|sc| execute(&sc, out.as_deref())),
        Cmd::ReproduceAll { sequential, only, json } => reproduce(sequential, only, json),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netmorph: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Scenario execution: dispatch to the solvers, CSV/JSON export and the
//! reproducibility manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use netmorph_core::adaptation::{fmt17, write_trajectory_csv, AdaptationParams};
use netmorph_core::graph::{random_balanced_sources, random_connected_network, NetworkJson};
use netmorph_core::meso::particles::{kernel_sources, simulate_particles, ParticleEnsemble, ParticleParams};
use netmorph_core::meso::{
    balance_sources, point_sources, sample_sources, simulate_meso, stationary_1d, DirectionalField, Grid, MesoParams,
};
use netmorph_core::mms::{angular_spread, beckmann_check, mms_run, BeckmannParams, MmsParams};
use netmorph_core::{minimize_f, optimal_c_given_q, simulate_adaptation, FluxProblem, Method, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::scenario::{Kind, MethodName, NetworkInput, Scenario};
use crate::CliError;

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of the scenario without its output directory.
pub fn scenario_hash(sc: &Scenario) -> String {
    let mut sc = sc.clone();
    sc.output = PathBuf::new();
    content_hash(serde_json::to_string(&sc).expect("scenario serializes").as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: Kind,
    pub seed: u64,
    pub scenario: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: serde_json::Value,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: Vec::new(), summary: json!({}) }
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.files.push((name.to_string(), s.into_bytes()));
    }
}

fn f(x: f64) -> String {
    fmt17(x)
}

/// Runs a validated scenario and writes its artifacts plus `manifest.json`
/// into `out` (the scenario's output directory when `None`).
pub fn run_scenario(sc: &Scenario, out: Option<&Path>) -> Result<RunReport, CliError> {
    sc.validate()?;
    let mut inputs = BTreeMap::new();
    let network = load_network(sc, &mut inputs)?;
    let mut art = Artifacts::new();
    match sc.kind {
        Kind::Discrete => discrete(sc, network, &mut art)?,
        Kind::FluxMin => flux_min(sc, network, &mut art)?,
        Kind::Meso1d | Kind::Meso2d => meso(sc, &mut art)?,
        Kind::Particles => particles(sc, &mut art)?,
        Kind::Mms => mms(sc, &mut art)?,
        Kind::Beckmann => beckmann(sc, &mut art)?,
    }
    let summary_bytes = serde_json::to_vec_pretty(&art.summary).expect("summary serializes");
    art.files.push(("summary.json".into(), summary_bytes));

    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| sc.output.clone());
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = BTreeMap::new();
    for (name, bytes) in &art.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        outputs.insert(name.clone(), content_hash(bytes));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: sc.kind,
        seed: sc.seed,
        scenario: scenario_hash(sc),
        inputs,
        outputs,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut files: Vec<String> = art.files.into_iter().map(|(n, _)| n).collect();
    files.push("manifest.json".into());
    Ok(RunReport { dir, files, summary: art.summary })
}

fn load_network(sc: &Scenario, inputs: &mut BTreeMap<String, String>) -> Result<Option<Network>, CliError> {
    let raw: NetworkJson = match &sc.network {
        None => return Ok(None),
        Some(NetworkInput::Inline(n)) => n.clone(),
        Some(NetworkInput::Path(p)) => {
            let bytes = fs::read(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            inputs.insert(p.display().to_string(), content_hash(&bytes));
            serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    Ok(Some(raw.into_network()?))
}

fn network_or_random(sc: &Scenario, net: Option<Network>, rng: &mut ChaCha8Rng) -> Result<Network, CliError> {
    match net {
        Some(n) => Ok(n),
        None => {
            let n = sc.params.vertices;
            let net = random_connected_network(rng, n, 0.5, 0.5, 2.0);
            Ok(net.with_sources(random_balanced_sources(rng, n, 1.0))?)
        }
    }
}

fn noisy(rng: &mut ChaCha8Rng, base: f64, amp: f64) -> f64 {
    if amp == 0.0 {
        base
    } else {
        base * (1.0 + amp * rng.random_range(-1.0..1.0))
    }
}

fn discrete(sc: &Scenario, net: Option<Network>, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let net = network_or_random(sc, net, &mut rng)?;
    let c0: Vec<f64> = (0..net.n_edges()).map(|_| noisy(&mut rng, p.c_init, p.perturbation)).collect();
    let params = AdaptationParams { integrator: p.integrator, ..AdaptationParams::new(p.gamma, p.nu, p.dt, p.t_end) };
    let traj = simulate_adaptation(&net, &c0, &params)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&net, &traj, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    art.files.push(("trajectory.csv".into(), buf));
    art.summary = json!({
        "kind": "discrete",
        "steps": traj.times.len() - 1,
        "t_final": traj.times.last(),
        "energy_initial": traj.energy.first(),
        "energy_final": traj.energy.last(),
        "steady": traj.steady,
        "step_halvings": traj.warnings.len(),
    });
    Ok(())
}

fn flux_min(sc: &Scenario, net: Option<Network>, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let net = network_or_random(sc, net, &mut rng)?;
    let method = match p.method {
        MethodName::TreeEnum => Method::TreeEnum,
        MethodName::CycleDescent => Method::CycleDescent,
        MethodName::Multistart => Method::Multistart { starts: p.starts, seed: sc.seed },
    };
    let problem = FluxProblem::new(net, p.gamma, p.nu, p.mode)?;
    let sol = minimize_f(&problem, method)?;
    let c = optimal_c_given_q(&sol.q, p.gamma, p.nu);
    let net = &problem.net;
    art.csv(
        "flux.csv",
        &["edge", "u", "v", "length", "Q", "C"],
        (0..net.n_edges()).map(|k| {
            let e = net.edge(k);
            vec![net.edge_label(k), net.ids()[e.u].to_string(), net.ids()[e.v].to_string(), f(e.length), f(sol.q[k]), f(c[k])]
        }),
    );
    art.summary = json!({
        "kind": "flux_min",
        "energy": sol.energy,
        "optimality": sol.certificate.optimality,
        "method": sol.certificate.method,
        "trees_examined": sol.certificate.trees_examined,
        "loops": sol.loops.len(),
        "q": sol.q,
    });
    Ok(())
}

fn build_grid(sc: &Scenario, dirs: usize) -> Result<Grid, CliError> {
    let g = &sc.params.grid;
    let one_d = sc.kind == Kind::Meso1d || (sc.kind == Kind::Mms && g.ny == 1);
    let grid = if one_d { Grid::line(g.nx, g.lx)? } else { Grid::rect(g.nx, g.ny, g.lx, g.ly, dirs)? };
    Ok(grid)
}

fn grid_sources(sc: &Scenario, grid: &Grid) -> Vec<f64> {
    let pts = sc.sources();
    let sigma = sc.params.sigma;
    let mut s = if sigma > 0.0 {
        let mut s = vec![0.0; grid.n_nodes()];
        for p in &pts {
            let bump = sample_sources(grid, |x| {
                let d2 = (x[0] - p.x[0]).powi(2) + if grid.dim() == 2 { (x[1] - p.x[1]).powi(2) } else { 0.0 };
                (-d2 / (2.0 * sigma * sigma)).exp()
            });
            let mass = grid.integrate_nodal(&bump);
            if mass > 0.0 {
                s.iter_mut().zip(&bump).for_each(|(a, b)| *a += p.mass * b / mass);
            }
        }
        s
    } else {
        point_sources(grid, &pts.iter().map(|p| (p.x, p.mass)).collect::<Vec<_>>())
    };
    balance_sources(grid, &mut s);
    s
}

fn initial_field(sc: &Scenario, grid: &Grid) -> DirectionalField {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut c = DirectionalField::constant(grid, sc.params.c_init);
    for v in c.values.iter_mut() {
        *v = noisy(&mut rng, *v, sc.params.perturbation);
    }
    c
}

fn field_rows(grid: &Grid, c: &DirectionalField) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(c.values.len());
    for cell in 0..grid.n_cells() {
        let x = grid.cell_center(cell);
        for (m, t) in grid.dirs().iter().enumerate() {
            rows.push(vec![cell.to_string(), f(x[0]), f(x[1]), m.to_string(), f(t[0]), f(t[1]), f(c.get(cell, m))]);
        }
    }
    rows
}

const FIELD_HEADER: [&str; 7] = ["cell", "x", "y", "dir", "theta_x", "theta_y", "C"];

fn pressure_csv(art: &mut Artifacts, grid: &Grid, p: &[f64]) {
    art.csv(
        "pressure.csv",
        &["node", "x", "y", "p"],
        p.iter().enumerate().map(|(n, v)| {
            let x = grid.node_pos(n);
            vec![n.to_string(), f(x[0]), f(x[1]), f(*v)]
        }),
    );
}

fn meso(sc: &Scenario, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let grid = build_grid(sc, p.grid.dirs)?;
    let s = grid_sources(sc, &grid);
    let c_init = initial_field(sc, &grid);
    let params = MesoParams { c0: p.c0, gamma: p.gamma, r: p.r, dt: p.dt, t_end: p.t_end, tol: 1e-10, steady_tol: 0.0 };
    let traj = simulate_meso(&grid, &c_init, &s, &params)?;
    art.csv("energy.csv", &["t", "energy"], traj.times.iter().zip(&traj.energy).map(|(t, e)| vec![f(*t), f(*e)]));
    art.csv("conductivity.csv", &FIELD_HEADER, field_rows(&grid, &traj.c));
    pressure_csv(art, &grid, &traj.p);
    let mut summary = json!({
        "kind": if sc.kind == Kind::Meso1d { "meso1d" } else { "meso2d" },
        "steps": traj.steps,
        "energy_initial": traj.energy.first(),
        "energy_final": traj.energy.last(),
    });
    if sc.kind == Kind::Meso1d {
        let st = stationary_1d(&grid, &s, p.c0, p.gamma)?;
        art.csv(
            "stationary.csv",
            &["cell", "x", "B", "C_stationary", "C_final", "indicator"],
            (0..grid.n_cells()).map(|c| {
                vec![c.to_string(), f(grid.cell_center(c)[0]), f(st.b[c]), f(st.c[c]), f(traj.c.get(c, 0)), f(st.indicator[c])]
            }),
        );
        let err = (0..grid.n_cells())
            .filter(|&c| st.c[c] > 0.0)
            .map(|c| (traj.c.get(c, 0) - st.c[c]).abs() / st.c[c])
            .fold(0.0, f64::max);
        summary["max_relative_deviation_from_stationary"] = json!(err);
    }
    art.summary = summary;
    Ok(())
}

fn particles(sc: &Scenario, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let grid = build_grid(sc, 1)?;
    let pts = sc.sources();
    let a = pts.iter().find(|s| s.mass > 0.0).expect("validated").x;
    let b = pts.iter().find(|s| s.mass < 0.0).expect("validated").x;
    let mut ens = ParticleEnsemble::segment(a, b, p.particles, p.c_init);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    for q in ens.particles.iter_mut() {
        q.c = noisy(&mut rng, q.c, p.perturbation);
    }
    let s = kernel_sources(&grid, &pts.iter().map(|s| (s.x, s.mass)).collect::<Vec<_>>(), ens.deposit_radius);
    let params = ParticleParams { c0: p.c0, gamma: p.gamma, dt: p.dt, t_end: p.t_end, r: p.r, tol: 1e-10 };
    let traj = simulate_particles(&grid, &ens, &s, &params)?;
    art.csv(
        "particles.csv",
        &["index", "x", "y", "theta_x", "theta_y", "weight", "C"],
        traj.final_state.particles.iter().enumerate().map(|(i, q)| {
            vec![i.to_string(), f(q.x[0]), f(q.x[1]), f(q.theta[0]), f(q.theta[1]), f(q.weight), f(q.c)]
        }),
    );
    art.csv(
        "history.csv",
        &["t", "mean_C", "min_C", "max_C"],
        traj.times.iter().zip(&traj.c).map(|(t, c)| {
            let w = &traj.final_state.particles;
            let mean: f64 = c.iter().zip(w).map(|(c, q)| c * q.weight).sum();
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![f(*t), f(mean), f(lo), f(hi)]
        }),
    );
    pressure_csv(art, &grid, &traj.p);
    let last = traj.c.last().expect("initial state is recorded");
    art.summary = json!({
        "kind": "particles",
        "steps": traj.times.len() - 1,
        "target": p.c0.powf(2.0 / (1.0 + p.gamma)),
        "mean_c": last.iter().zip(&traj.final_state.particles).map(|(c, q)| c * q.weight).sum::<f64>(),
    });
    Ok(())
}

fn mms(sc: &Scenario, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let grid = build_grid(sc, p.grid.dirs)?;
    let s = grid_sources(sc, &grid);
    let c_init = initial_field(sc, &grid);
    let params = MmsParams { r: p.r, ..MmsParams::new(p.tau, p.gamma, p.c0) };
    let traj = mms_run(&grid, &c_init, None, &s, &params, p.steps)?;
    art.csv(
        "steps.csv",
        &["step", "energy", "fr_increment", "tv_c", "tv_q", "alternations", "stalled"],
        traj.records.iter().map(|r| {
            vec![
                r.step.to_string(),
                f(r.energy),
                f(r.fr_increment),
                f(r.tv_c),
                f(r.tv_q),
                r.alternations.to_string(),
                r.stalled.to_string(),
            ]
        }),
    );
    art.csv("conductivity.csv", &FIELD_HEADER, field_rows(&grid, &traj.last.c));
    let nd = grid.n_dirs();
    art.csv(
        "flux.csv",
        &["element", "dir", "Q"],
        traj.last.q.iter().enumerate().map(|(i, q)| vec![(i / nd).to_string(), (i % nd).to_string(), f(*q)]),
    );
    pressure_csv(art, &grid, &traj.p);
    art.summary = json!({
        "kind": "mms",
        "steps": traj.records.len().saturating_sub(1),
        "energy_initial": traj.records.first().map(|r| r.energy),
        "energy_final": traj.records.last().map(|r| r.energy),
    });
    Ok(())
}

fn beckmann(sc: &Scenario, art: &mut Artifacts) -> Result<(), CliError> {
    let p = &sc.params;
    let grid = build_grid(sc, p.grid.dirs)?;
    let s = grid_sources(sc, &grid);
    let rep = beckmann_check(&grid, &s, &BeckmannParams::new(p.c0))?;
    art.csv(
        "cells.csv",
        &["cell", "x", "y", "C_bar", "q_x", "q_y", "C_total", "spread"],
        (0..grid.n_cells()).map(|c| {
            let x = grid.cell_center(c);
            let cc = rep.directional.c.cell(c);
            let total: f64 = cc.iter().zip(grid.weights()).map(|(v, w)| v * w).sum();
            let q = rep.q_star[c];
            vec![c.to_string(), f(x[0]), f(x[1]), f(rep.c_bar[c]), f(q[0]), f(q[1]), f(total), f(angular_spread(&grid, cc, q))]
        }),
    );
    art.summary = json!({
        "kind": "beckmann",
        "directional_value": rep.directional_value,
        "beckmann_value": rep.beckmann_value,
        "relative_gap": rep.relative_gap,
        "max_spread": rep.max_spread,
        "spacing": rep.spacing,
        "cells_checked": rep.cells_checked,
        "directional_iterations": rep.directional_iterations,
        "beckmann_iterations": rep.beckmann_iterations,
    });
    Ok(())
}

//! Scenario files: what to run, with which parameters, and where to write.

use std::path::{Path, PathBuf};

use netmorph_core::adaptation::Integrator;
use netmorph_core::graph::NetworkJson;
use netmorph_core::FluxEnergyMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Discrete,
    FluxMin,
    Meso1d,
    Meso2d,
    Particles,
    Mms,
    Beckmann,
}

impl Kind {
    pub fn is_grid(self) -> bool {
        !matches!(self, Kind::Discrete | Kind::FluxMin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    TreeEnum,
    CycleDescent,
    Multistart,
}

/// A network given inline or as a path to a network JSON file, resolved
/// against the scenario file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkInput {
    Path(PathBuf),
    Inline(NetworkJson),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSource {
    pub x: [f64; 2],
    pub mass: f64,
}

impl std::str::FromStr for PointSource {
    type Err = String;

    /// `x,y,mass` or `x,mass`.
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad source {s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match v[..] {
            [x, m] => Ok(Self { x: [x, 0.0], mass: m }),
            [x, y, m] => Ok(Self { x: [x, y], mass: m }),
            _ => Err(format!("source {s:?} must be x,mass or x,y,mass")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "d_n")]
    pub nx: usize,
    #[serde(default = "d_n")]
    pub ny: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    /// Quadrature directions on the half circle (2D only).
    #[serde(default = "d_dirs")]
    pub dirs: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: d_n(), ny: d_n(), lx: 1.0, ly: 1.0, dirs: d_dirs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    /// Outer steps of the minimizing-movement scheme.
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default)]
    pub mode: FluxEnergyMode,
    #[serde(default)]
    pub method: MethodName,
    /// Starts for the multistart method.
    #[serde(default = "d_starts")]
    pub starts: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub grid: GridSpec,
    /// Point sources; empty means a unit source at (lx/4, ly/2) and a unit
    /// sink at (3lx/4, ly/2).
    #[serde(default)]
    pub sources: Vec<PointSource>,
    /// Width of Gaussian source bumps; zero keeps point masses.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "one")]
    pub c_init: f64,
    /// Relative amplitude of seeded uniform noise on the initial conductivity.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default = "d_particles")]
    pub particles: usize,
    /// Vertex count of the seeded random network used when none is given.
    #[serde(default = "d_vertices")]
    pub vertices: usize,
}

impl Default for Params {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all parameters have defaults")
    }
}

fn one() -> f64 {
    1.0
}
fn d_n() -> usize {
    32
}
fn d_dirs() -> usize {
    8
}
fn d_tau() -> f64 {
    0.1
}
fn d_dt() -> f64 {
    0.01
}
fn d_steps() -> usize {
    20
}
fn d_starts() -> usize {
    16
}
fn d_particles() -> usize {
    64
}
fn d_vertices() -> usize {
    6
}
fn d_output() -> PathBuf {
    PathBuf::from("netmorph-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkInput>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output: PathBuf,
}

impl Scenario {
    pub fn new(kind: Kind) -> Self {
        Self { kind, network: None, params: Params::default(), seed: 0, output: d_output() }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut sc = Self::from_json(&text)?;
        if let Some(NetworkInput::Path(p)) = &mut sc.network {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks parameter ranges and that referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.params;
        let mut bad = Vec::new();
        let mut need = |ok: bool, what: &str| {
            if !ok {
                bad.push(what.to_string());
            }
        };
        need(p.gamma > 0.0 && p.gamma.is_finite(), "gamma > 0");
        need(p.nu > 0.0 && p.nu.is_finite(), "nu > 0");
        need(p.c0 > 0.0 && p.c0.is_finite(), "c0 > 0");
        need(p.r >= 0.0 && p.r.is_finite(), "r >= 0");
        need(p.tau > 0.0 && p.tau.is_finite(), "tau > 0");
        need(p.dt > 0.0 && p.dt.is_finite(), "dt > 0");
        need(p.t_end >= 0.0 && p.t_end.is_finite(), "t_end >= 0");
        need(p.sigma >= 0.0, "sigma >= 0");
        need(p.c_init > 0.0, "c_init > 0");
        need((0.0..1.0).contains(&p.perturbation), "0 <= perturbation < 1");
        need(p.starts >= 1, "starts >= 1");
        need(p.vertices >= 2, "vertices >= 2");
        need(p.sources.iter().all(|s| s.mass.is_finite() && s.x.iter().all(|x| x.is_finite())), "finite sources");
        if self.kind.is_grid() {
            let g = &p.grid;
            need(g.nx >= 2 && g.ny >= 1 && g.dirs >= 1, "nx >= 2, ny >= 1, dirs >= 1");
            need(g.lx > 0.0 && g.ly > 0.0, "positive domain lengths");
            need(p.particles >= 1, "particles >= 1");
            let total: f64 = p.sources.iter().map(|s| s.mass).sum();
            need(total.abs() <= 1e-9 * (1.0 + p.sources.iter().map(|s| s.mass.abs()).sum::<f64>()), "balanced sources");
        }
        match self.kind {
            Kind::Particles => {
                need(p.r > 0.0, "r > 0 for particles");
                need(
                    p.sources.is_empty() || p.sources.iter().any(|s| s.mass > 0.0) && p.sources.iter().any(|s| s.mass < 0.0),
                    "particles need a source and a sink",
                );
            }
            Kind::Beckmann => need(p.grid.ny >= 2, "beckmann needs a 2D grid"),
            _ => {}
        }
        if let Some(NetworkInput::Path(path)) = &self.network {
            need(path.is_file(), &format!("network file {} exists", path.display()));
        }
        if !bad.is_empty() {
            return Err(CliError::Config(format!("scenario requires {}", bad.join(", "))));
        }
        Ok(())
    }

    /// Sources with the default pair filled in.
    pub fn sources(&self) -> Vec<PointSource> {
        if !self.params.sources.is_empty() {
            return self.params.sources.clone();
        }
        let g = &self.params.grid;
        let y = if self.kind == Kind::Meso1d { 0.0 } else { 0.5 * g.ly };
        vec![PointSource { x: [0.25 * g.lx, y], mass: 1.0 }, PointSource { x: [0.75 * g.lx, y], mass: -1.0 }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_params_take_defaults() {
        let sc = Scenario::from_json(r#"{"kind": "mms"}"#).unwrap();
        assert_eq!(sc.params, Params::default());
        assert_eq!(sc.params.grid.dirs, 8);
        assert_eq!(sc.output, PathBuf::from("netmorph-out"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Scenario::from_json(r#"{"kind": "mms", "params": {"gama": 2}}"#).is_err());
        assert!(Scenario::from_json(r#"{"kind": "nope"}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut sc = Scenario::new(Kind::Particles);
        sc.params.r = 1e-3;
        sc.params.sources = vec![PointSource { x: [0.1, 0.2], mass: 0.5 }, PointSource { x: [0.9, 0.2], mass: -0.5 }];
        sc.seed = 42;
        assert_eq!(Scenario::from_json(&sc.to_json()).unwrap(), sc);
    }

    #[test]
    fn source_syntax() {
        assert_eq!("0.5,1".parse::<PointSource>().unwrap(), PointSource { x: [0.5, 0.0], mass: 1.0 });
        assert_eq!("0.5, 0.25, -1".parse::<PointSource>().unwrap(), PointSource { x: [0.5, 0.25], mass: -1.0 });
        assert!("1,2,3,4".parse::<PointSource>().is_err());
    }

    #[test]
    fn ranges_are_checked() {
        let mut sc = Scenario::new(Kind::Meso2d);
        sc.validate().unwrap();
        sc.params.gamma = -1.0;
        assert!(matches!(sc.validate(), Err(CliError::Config(_))));
        let mut sc = Scenario::new(Kind::Particles);
        assert!(sc.validate().is_err());
        sc.params.r = 1e-3;
        sc.validate().unwrap();
    }
}

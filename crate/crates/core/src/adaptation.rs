//! Conductivity adaptation on a network: the discrete energy, its
//! Fisher–Rao type gradient flow `dC/dt = (Q^2/C^2 - nu C^{gamma-1}) C L`,
//! and trajectory integration with an energy-based step controller.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::kirchhoff::{fluxes_from_pressures, solve_kirchhoff, SUPPORT_FLOOR};

/// Linear solves inside the dynamics use this relative tolerance.
pub const KIRCHHOFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationParams {
    pub gamma: f64,
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    #[serde(default)]
    pub clamp_floor: f64,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_steady_tol() -> f64 {
    1e-8
}

impl AdaptationParams {
    pub fn new(gamma: f64, nu: f64, dt: f64, t_end: f64) -> Self {
        Self { gamma, nu, dt, t_end, steady_tol: 1e-8, clamp_floor: 0.0, integrator: Integrator::Euler }
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.nu > 0.0
            && self.dt > 0.0
            && self.t_end >= 0.0
            && self.steady_tol > 0.0
            && self.clamp_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("adaptation parameters out of range: {self:?}")))
        }
    }
}

/// Kirchhoff flux for the given conductivities (pruned support).
pub fn fluxes_for(net: &Network, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = solve_kirchhoff(net, c, KIRCHHOFF_TOL)?.p;
    let q = fluxes_from_pressures(net, c, &p);
    Ok((q, p))
}

/// `sum_e (Q_e^2/C_e + (nu/gamma) C_e^gamma) L_e` for given `C` and `Q`.
pub fn energy_with_flux(net: &Network, c: &[f64], q: &[f64], gamma: f64, nu: f64) -> Result<f64> {
    let mut e = 0.0;
    for (k, edge) in net.edges().iter().enumerate() {
        let (ck, qk) = (c[k], q[k]);
        let pump = if ck > 0.0 {
            qk * qk / ck
        } else if qk == 0.0 {
            0.0
        } else {
            return Err(Error::InfiniteEnergy { edge: k });
        };
        e += (pump + nu / gamma * ck.powf(gamma)) * edge.length;
    }
    Ok(e)
}

/// Discrete energy with `Q` taken from the Kirchhoff solve for `C`.
pub fn energy_discrete(net: &Network, c: &[f64], params: &AdaptationParams) -> Result<f64> {
    let (q, _) = fluxes_for(net, c)?;
    energy_with_flux(net, c, &q, params.gamma, params.nu)
}

/// Right-hand side `(Q^2/C^2 - nu C^{gamma-1}) C L` per edge, written as
/// `(Q^2/C - nu C^gamma) L` so that `C = 0` edges are fixed points.
pub fn adaptation_rhs(net: &Network, c: &[f64], q: &[f64], gamma: f64, nu: f64) -> Vec<f64> {
    net.edges()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let ck = c[k];
            if ck <= 0.0 {
                return 0.0;
            }
            let pump = if ck > SUPPORT_FLOOR { q[k] * q[k] / ck } else { 0.0 };
            (pump - nu * ck.powf(gamma)) * e.length
        })
        .collect()
}

fn rhs_at(net: &Network, c: &[f64], params: &AdaptationParams) -> Result<Vec<f64>> {
    let (q, _) = fluxes_for(net, c)?;
    Ok(adaptation_rhs(net, c, &q, params.gamma, params.nu))
}

fn axpy_clamped(c: &[f64], k: &[f64], h: f64, floor: f64) -> Vec<f64> {
    c.iter().zip(k).map(|(ci, ki)| (ci + h * ki).max(floor)).collect()
}

fn step_with_dt(net: &Network, c: &[f64], params: &AdaptationParams, dt: f64) -> Result<Vec<f64>> {
    let floor = params.clamp_floor;
    match params.integrator {
        Integrator::Euler => {
            let k1 = rhs_at(net, c, params)?;
            Ok(axpy_clamped(c, &k1, dt, floor))
        }
        Integrator::Rk4 => {
            let k1 = rhs_at(net, c, params)?;
            let k2 = rhs_at(net, &axpy_clamped(c, &k1, dt / 2.0, 0.0), params)?;
            let k3 = rhs_at(net, &axpy_clamped(c, &k2, dt / 2.0, 0.0), params)?;
            let k4 = rhs_at(net, &axpy_clamped(c, &k3, dt, 0.0), params)?;
            Ok(c.iter()
                .enumerate()
                .map(|(i, ci)| (ci + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).max(floor))
                .collect())
        }
    }
}

/// One integrator step of size `params.dt`, clamped at `clamp_floor`.
pub fn step_adaptation(net: &Network, c: &[f64], params: &AdaptationParams) -> Result<Vec<f64>> {
    params.check()?;
    step_with_dt(net, c, params, params.dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Warning {
    /// Energy rose by `rise` over a step of size `dt`; the step was retried
    /// with `dt / 2`.
    NonmonotoneEnergy { step: usize, dt: f64, rise: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub warnings: Vec<Warning>,
    pub steady: bool,
}

impl Trajectory {
    pub fn last_c(&self) -> &[f64] {
        self.c.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Smallest step the controller will try before giving up.
const MIN_DT_FRACTION: f64 = 1.0 / 1024.0;

/// Integrates until `t_end` or until `||dC/dt||_inf / ||C||_inf < steady_tol`.
/// A step whose energy rises by more than `10 dt^2 |E|` is rejected and
/// retried with half the step size.
pub fn simulate_adaptation(net: &Network, c0: &[f64], params: &AdaptationParams) -> Result<Trajectory> {
    params.check()?;
    if c0.len() != net.n_edges() {
        return Err(Error::InvalidParameter("initial conductivity has wrong length".into()));
    }
    if c0.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter("initial conductivities must be positive".into()));
    }
    let mut traj = Trajectory::default();
    let mut c = c0.to_vec();
    let (mut q, mut p) = fluxes_for(net, &c)?;
    let mut e = energy_with_flux(net, &c, &q, params.gamma, params.nu)?;
    let mut t = 0.0;
    let record = |traj: &mut Trajectory, t: f64, c: &[f64], q: &[f64], p: &[f64], e: f64| {
        traj.times.push(t);
        traj.c.push(c.to_vec());
        traj.q.push(q.to_vec());
        traj.p.push(p.to_vec());
        traj.energy.push(e);
    };
    record(&mut traj, t, &c, &q, &p, e);
    let mut step = 0;
    while t < params.t_end * (1.0 - 1e-12) {
        let rhs = adaptation_rhs(net, &c, &q, params.gamma, params.nu);
        let cmax = c.iter().fold(0.0_f64, |m, x| m.max(*x));
        let rmax = rhs.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if cmax == 0.0 || rmax / cmax < params.steady_tol {
            traj.steady = true;
            break;
        }
        let mut dt = params.dt.min(params.t_end - t);
        let (c_new, q_new, p_new, e_new) = loop {
            let c_try = step_with_dt(net, &c, params, dt)?;
            let (q_try, p_try) = fluxes_for(net, &c_try)?;
            let e_try = energy_with_flux(net, &c_try, &q_try, params.gamma, params.nu)?;
            let rise = e_try - e;
            if rise > 10.0 * dt * dt * e.abs() && dt > params.dt * MIN_DT_FRACTION {
                traj.warnings.push(Warning::NonmonotoneEnergy { step, dt, rise });
                dt /= 2.0;
                continue;
            }
            break (c_try, q_try, p_try, e_try);
        };
        t += dt;
        step += 1;
        c = c_new;
        q = q_new;
        p = p_new;
        e = e_new;
        record(&mut traj, t, &c, &q, &p, e);
    }
    Ok(traj)
}

/// CSV with columns `t, energy, C_<u>-<v>..., Q_<u>-<v>...`; every number is
/// printed with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(net: &Network, traj: &Trajectory, mut w: W) -> io::Result<()> {
    let labels: Vec<String> = (0..net.n_edges()).map(|k| net.edge_label(k)).collect();
    let mut header = vec!["t".to_string(), "energy".to_string()];
    header.extend(labels.iter().map(|l| format!("C_{l}")));
    header.extend(labels.iter().map(|l| format!("Q_{l}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, t) in traj.times.iter().enumerate() {
        let mut row = vec![fmt17(*t), fmt17(traj.energy[i])];
        row.extend(traj.c[i].iter().map(|x| fmt17(*x)));
        row.extend(traj.q[i].iter().map(|x| fmt17(*x)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge2(s: f64) -> Network {
        Network::from_edges(2, &[(0, 1, 1.0)], vec![s, -s]).unwrap()
    }

    #[test]
    fn single_edge_energy() {
        let p = AdaptationParams::new(1.0, 1.0, 0.1, 1.0);
        assert!((energy_discrete(&edge2(1.0), &[1.0], &p).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn infinite_energy_on_dead_carrying_edge() {
        let net = edge2(1.0);
        assert_eq!(energy_with_flux(&net, &[0.0], &[1.0], 1.0, 1.0), Err(Error::InfiniteEnergy { edge: 0 }));
    }

    #[test]
    fn euler_step_by_hand() {
        let p = AdaptationParams::new(1.0, 1.0, 0.1, 1.0);
        let c = step_adaptation(&edge2(1.0), &[2.0], &p).unwrap();
        assert!((c[0] - 1.85).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_is_kept() {
        let p = AdaptationParams::new(1.0, 1.0, 0.1, 1.0);
        let c = step_adaptation(&edge2(1.0), &[1.0], &p).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_flux_edge_decays() {
        let net = Network::from_edges(3, &[(0, 1, 1.0), (1, 2, 2.0)], vec![1.0, -1.0, 0.0]).unwrap();
        let p = AdaptationParams::new(0.5, 1.0, 0.1, 1.0);
        let c = step_adaptation(&net, &[1.0, 4.0], &p).unwrap();
        assert!((c[1] - (4.0 - 0.1 * 2.0 * 2.0)).abs() < 1e-14);
    }

    #[test]
    fn rk4_and_euler_agree_for_small_steps() {
        let net = edge2(1.0);
        let mut p = AdaptationParams::new(1.0, 1.0, 1e-3, 1.0);
        let e = step_adaptation(&net, &[2.0], &p).unwrap()[0];
        p.integrator = Integrator::Rk4;
        let r = step_adaptation(&net, &[2.0], &p).unwrap()[0];
        assert!((e - r).abs() < 1e-6);
    }

    #[test]
    fn simulation_reaches_steady_state() {
        let mut p = AdaptationParams::new(1.0, 1.0, 0.1, 200.0);
        p.steady_tol = 1e-9;
        let tr = simulate_adaptation(&edge2(1.0), &[3.0], &p).unwrap();
        assert!(tr.steady);
        assert!((tr.last_c()[0] - 1.0).abs() < 1e-8);
        assert!(tr.energy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn csv_has_labelled_columns() {
        let net = edge2(1.0);
        let tr = simulate_adaptation(&net, &[1.5], &AdaptationParams::new(1.0, 1.0, 0.1, 0.2)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&net, &tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,energy,C_0-1,Q_0-1");
        assert_eq!(lines.count(), tr.times.len());
    }
}

//! Explicit projected gradient descent on `E_k` for sphere targets.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{dot, Field};
use crate::map::{GridMap, VARIATION_SIGN};

/// Parameters of the descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub order: usize,
    pub dt: f64,
    pub max_steps: usize,
    /// Stop once `‖τ_k‖∞` is at most this.
    pub tolerance: f64,
    /// Halve `dt` and retry whenever a step would raise the energy.
    #[serde(default = "default_true")]
    pub step_halving: bool,
    /// Smallest step accepted before giving up on halving.
    #[serde(default = "default_min_dt")]
    pub min_dt: f64,
}

fn default_true() -> bool {
    true
}

fn default_min_dt() -> f64 {
    1e-14
}

impl FlowConfig {
    /// Default step sizes: `1e-3` for `k = 1`, `1e-5` for `k ≥ 2`.
    pub fn new(order: usize) -> Self {
        Self {
            order,
            dt: if order == 1 { 1e-3 } else { 1e-5 },
            max_steps: 10_000,
            tolerance: 1e-8,
            step_halving: true,
            min_dt: default_min_dt(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_step_halving(mut self, on: bool) -> Self {
        self.step_halving = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(invalid("flow order must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("flow step dt must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("flow tolerance must be positive"));
        }
        if !(self.min_dt > 0.0) {
            return Err(invalid("minimum step must be positive"));
        }
        Ok(())
    }
}

/// One accepted state of the trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub energy: f64,
    pub tension_linf: f64,
    /// Step size that produced this state (`0` for the initial state).
    pub dt: f64,
}

#[derive(Clone)]
pub struct FlowTrajectory {
    pub records: Vec<FlowRecord>,
    pub final_map: GridMap,
    pub converged: bool,
}

impl FlowTrajectory {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn final_tension(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.tension_linf)
    }

    pub fn steps(&self) -> usize {
        self.records.last().map_or(0, |r| r.step)
    }

    /// `step,E_k,tau_linf,dt` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,energy,tau_linf,dt\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6e}\n",
                r.step, r.energy, r.tension_linf, r.dt
            ));
        }
        out
    }
}

/// `normalize(u − dt·σ_k·τ_k)`.
pub fn descent_step(map: &GridMap, tau: &Field, dt: f64) -> Result<GridMap> {
    let mut values = map.values().clone();
    values.axpy(-dt * VARIATION_SIGN, tau);
    let nc = values.ncomp();
    for u in values.data_mut().chunks_mut(nc) {
        let n = dot(u, u).sqrt();
        u.iter_mut().for_each(|x| *x /= n);
    }
    map.with_values(values)
}

/// Runs the descent until `‖τ_k‖∞ ≤ tolerance` or `max_steps`.
pub fn gradient_flow(u0: &GridMap, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate()?;
    if !u0.is_sphere() {
        return Err(Error::UnsupportedMode(
            "the flow needs a sphere target".into(),
        ));
    }
    let k = cfg.order;
    let evaluate = |m: &GridMap| -> (f64, Field) {
        let tower = m.tower(k - 1);
        (m.k_energy_with(k, &tower), m.k_tension_with(k, &tower))
    };
    let mut map = u0.clone();
    let (mut energy, mut tau) = evaluate(&map);
    let e0 = energy;
    let limit = 10.0 * e0.max(f64::MIN_POSITIVE);
    let mut records = vec![FlowRecord {
        step: 0,
        energy,
        tension_linf: tau.max_norm(),
        dt: 0.0,
    }];
    let mut dt = cfg.dt;
    let mut converged = records[0].tension_linf <= cfg.tolerance;
    let mut step = 0;
    while !converged && step < cfg.max_steps {
        let (next, e_next, tau_next) = loop {
            let candidate = descent_step(&map, &tau, dt)?;
            let (e, t) = evaluate(&candidate);
            if !e.is_finite() || e > limit {
                if cfg.step_halving && dt / 2.0 >= cfg.min_dt {
                    dt /= 2.0;
                    continue;
                }
                return Err(Error::Instability(format!(
                    "energy {e:.3e} exceeds ten times the initial {e0:.3e} at step {}; try a smaller dt than {dt:.3e}",
                    step + 1
                )));
            }
            if cfg.step_halving && e > energy {
                if dt / 2.0 >= cfg.min_dt {
                    dt /= 2.0;
                    continue;
                }
                return Err(Error::Instability(format!(
                    "no energy-decreasing step above dt = {:.3e} at step {}",
                    cfg.min_dt,
                    step + 1
                )));
            }
            break (candidate, e, t);
        };
        step += 1;
        map = next;
        energy = e_next;
        tau = tau_next;
        let tension_linf = tau.max_norm();
        records.push(FlowRecord {
            step,
            energy,
            tension_linf,
            dt,
        });
        converged = tension_linf <= cfg.tolerance;
    }
    Ok(FlowTrajectory {
        records,
        final_map: map,
        converged,
    })
}

/// Central difference of `E_k` along the descent direction `−σ_k τ_k`;
/// negative whenever the map is not critical.
pub fn descent_directional_derivative(map: &GridMap, k: usize, eps: f64) -> Result<f64> {
    let tau = map.k_tension(k)?;
    let dir = tau.scaled(-VARIATION_SIGN);
    let (dq, _) = map.first_variation_parts(&dir, k, eps)?;
    Ok(dq)
}

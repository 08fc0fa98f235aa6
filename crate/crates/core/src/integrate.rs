//! Time integration of assembled network systems.
//!
//! Implicit steps solve
//!
//! ```text
//! E(u) (u - b) - γ Δt F(u, t_{k+1}) = 0     (differential rows)
//!                       A(u, t_{k+1}) = 0     (algebraic rows)
//! ```
//!
//! with `b = u_k, γ = 1` (implicit Euler) or `b = (4 u_k - u_{k-1})/3,
//! γ = 2/3` (BDF2 at constant step). Newton uses a forward-difference
//! Jacobian that is kept across steps while it still converges quickly.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gas_model::{from_riemann, GasModelError, RiemannPair};
use crate::network::{self, steady_solve, weighted_norm, Dae, NetworkError, RowKind, SteadyOptions};
use crate::newton::{grouped_fd_jacobian, ColumnGroups, Factorization};
use crate::scenario_io::{Init, Scenario};
use crate::schemes::{cfl_dt, upwind_invariant_rates, PipeGrid, PipeState, SchemeError, SchemeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("time step {dt} exceeds the CFL bound {cfl}")]
    CflViolation { dt: f64, cfl: f64 },
    #[error("Newton iteration diverged at t = {t} (dt = {dt}) after {iterations} iterations")]
    NewtonDiverged { t: f64, dt: f64, iterations: usize },
    #[error("time step fell below dt_min = {dt_min} at t = {t}")]
    StepUnderflow { t: f64, dt_min: f64 },
    #[error("explicit stepping needs every algebraic row to pin a single unknown")]
    NotOdeReducible,
    #[error("singular mass matrix in explicit step")]
    SingularMass,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Model(#[from] GasModelError),
}

pub type Result<T> = std::result::Result<T, IntegrateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    ImplicitEuler,
    Bdf2,
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt_min: f64,
    pub cfl_safety: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::ImplicitEuler,
            dt: 1.0,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            dt_min: 1e-6,
            cfl_safety: 0.9,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt > self.dt_min && self.dt.is_finite()) {
            return Err(IntegrateError::InvalidConfig(format!(
                "need dt > dt_min > 0 (dt = {}, dt_min = {})",
                self.dt, self.dt_min
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(IntegrateError::InvalidConfig(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(IntegrateError::InvalidConfig(
                "Newton tolerance and iteration limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub jacobian_updates: usize,
    /// Relative junction pressure mismatch after the step.
    pub junction_pressure: f64,
    /// Relative junction flux imbalance after the step.
    pub junction_flux: f64,
    /// Relative violation of any algebraic row after the step.
    pub constraint: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub steps: Vec<StepDiagnostics>,
    pub rejected_steps: usize,
    pub pipe_ids: Vec<String>,
    /// Grid coordinates of every pipe.
    pub xs: Vec<Vec<f64>>,
    /// Global index of `(p, q)` at grid point 0 of each pipe.
    pub offsets: Vec<usize>,
}

impl Trajectory {
    pub(crate) fn new(dae: &Dae) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            steps: Vec::new(),
            rejected_steps: 0,
            pipe_ids: dae.network.pipes.iter().map(|p| p.id.clone()).collect(),
            xs: dae.grids().map(|g| (0..g.points()).map(|i| g.x(i)).collect()).collect(),
            offsets: (0..dae.network.pipes.len()).map(|k| dae.layout.offset(k)).collect(),
        }
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has the initial snapshot")
    }

    pub fn pressure(&self, sample: usize, pipe: usize, i: usize) -> f64 {
        self.states[sample][self.offsets[pipe] + 2 * i]
    }

    pub fn flux(&self, sample: usize, pipe: usize, i: usize) -> f64 {
        self.states[sample][self.offsets[pipe] + 2 * i + 1]
    }

    pub fn max_junction_residuals(&self) -> (f64, f64) {
        self.steps.iter().fold((0.0, 0.0), |(p, q), s| {
            (p.max(s.junction_pressure), q.max(s.junction_flux))
        })
    }

    pub fn max_constraint_violation(&self) -> f64 {
        self.steps.iter().map(|s| s.constraint).fold(0.0, f64::max)
    }
}

/// Implicit stepper with a cached Jacobian factorization and BDF2 history.
pub struct ImplicitStepper<'a> {
    dae: &'a Dae,
    config: IntegratorConfig,
    groups: ColumnGroups,
    factorization: Option<(Factorization, f64)>,
    jacobian_age: usize,
    previous: Option<(DVector<f64>, f64)>,
    pub jacobian_updates: usize,
}

const MAX_JACOBIAN_AGE: usize = 50;

impl<'a> ImplicitStepper<'a> {
    pub fn new(dae: &'a Dae, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            dae,
            config,
            groups: dae.column_groups(),
            factorization: None,
            jacobian_age: 0,
            previous: None,
            jacobian_updates: 0,
        })
    }

    /// Forget the step history (after a rejected step or a jump).
    pub fn reset_history(&mut self) {
        self.previous = None;
    }

    fn residual(&self, u: &DVector<f64>, base: &DVector<f64>, gamma_dt: f64, t1: f64) -> Result<DVector<f64>> {
        let eval = self.dae.evaluate(u)?;
        let du = u - base;
        let mut r = eval.mass_times(&du) - eval.rhs * gamma_dt;
        for (c, a) in self.dae.constraints.iter().zip(self.dae.algebraic_residual(u, t1)) {
            r[c.row] = a;
        }
        Ok(r)
    }

    fn jacobian(
        &self,
        u: &DVector<f64>,
        r: &DVector<f64>,
        base: &DVector<f64>,
        gamma_dt: f64,
        t1: f64,
    ) -> Result<DMatrix<f64>> {
        let n = self.dae.len();
        let mut j = DMatrix::zeros(n, n);
        for c in &self.dae.constraints {
            for &(col, w) in &c.terms {
                j[(c.row, col)] += w;
            }
        }
        let scales = self.dae.variable_scales(u);
        let h: Vec<f64> = (0..n).map(|k| 1e-7 * u[k].abs().max(1e-3 * scales[k])).collect();
        grouped_fd_jacobian(u, r, &h, &self.groups, |v| self.residual(v, base, gamma_dt, t1), &mut j)?;
        Ok(j)
    }

    /// Advances `u_k` at `t_k` by `dt`; returns the new state and the number
    /// of Newton iterations.
    pub fn step(&mut self, u_k: &DVector<f64>, t_k: f64, dt: f64) -> Result<(DVector<f64>, usize)> {
        let t1 = t_k + dt;
        let (base, gamma) = match (&self.previous, self.config.method) {
            (Some((u_prev, dt_prev)), Method::Bdf2) if *dt_prev == dt => ((u_k * 4.0 - u_prev) / 3.0, 2.0 / 3.0),
            _ => (u_k.clone(), 1.0),
        };
        let gamma_dt = gamma * dt;
        if self.factorization.as_ref().is_some_and(|(_, g)| *g != gamma_dt) || self.jacobian_age >= MAX_JACOBIAN_AGE {
            self.factorization = None;
        }
        let result = match self.newton(u_k, &base, gamma_dt, t1) {
            Ok(r) => Ok(r),
            Err(_) if self.jacobian_age > 0 => {
                // retry once with a fresh Jacobian
                self.factorization = None;
                self.newton(u_k, &base, gamma_dt, t1)
            }
            Err(e) => Err(e),
        };
        match result {
            Ok((u, its)) => {
                self.previous = Some((u_k.clone(), dt));
                self.jacobian_age += 1;
                Ok((u, its))
            }
            Err(e) => {
                self.factorization = None;
                Err(match e {
                    IntegrateError::NewtonDiverged { iterations, .. } => {
                        IntegrateError::NewtonDiverged { t: t_k, dt, iterations }
                    }
                    other => other,
                })
            }
        }
    }

    fn refresh(
        &mut self,
        u: &DVector<f64>,
        r: &DVector<f64>,
        base: &DVector<f64>,
        gamma_dt: f64,
        t1: f64,
    ) -> Result<()> {
        let j = self.jacobian(u, r, base, gamma_dt, t1)?;
        let f = Factorization::new(j).ok_or(IntegrateError::NewtonDiverged {
            t: t1,
            dt: 0.0,
            iterations: 0,
        })?;
        self.factorization = Some((f, gamma_dt));
        self.jacobian_age = 0;
        self.jacobian_updates += 1;
        Ok(())
    }

    fn newton(
        &mut self,
        u_k: &DVector<f64>,
        base: &DVector<f64>,
        gamma_dt: f64,
        t1: f64,
    ) -> Result<(DVector<f64>, usize)> {
        let scales = self.dae.variable_scales(u_k);
        let mut u = u_k.clone();
        let mut prev_norm = f64::INFINITY;
        let diverged = |iterations| IntegrateError::NewtonDiverged {
            t: t1,
            dt: 0.0,
            iterations,
        };
        for it in 1..=self.config.newton_max_iter {
            let r = self.residual(&u, base, gamma_dt, t1).map_err(|_| diverged(it))?;
            if self.factorization.is_none() {
                self.refresh(&u, &r, base, gamma_dt, t1)?;
            }
            let (f, _) = self.factorization.as_ref().expect("factorization present");
            let delta = f.solve(&(-&r)).ok_or_else(|| diverged(it))?;
            u += &delta;
            let norm = weighted_norm(&delta, &u, &scales);
            if !norm.is_finite() {
                return Err(diverged(it));
            }
            if norm <= self.config.newton_tol {
                return Ok((u, it));
            }
            if norm > 0.5 * prev_norm {
                if self.jacobian_age == 0 && it > 3 && norm > prev_norm {
                    return Err(diverged(it));
                }
                // slow contraction: rebuild the Jacobian at the current iterate
                let r = self.residual(&u, base, gamma_dt, t1).map_err(|_| diverged(it))?;
                self.refresh(&u, &r, base, gamma_dt, t1)?;
            }
            prev_norm = norm;
        }
        Err(diverged(self.config.newton_max_iter))
    }
}

/// Single implicit step from scratch (no cached Jacobian or history).
pub fn step_implicit(
    dae: &Dae,
    u_k: &DVector<f64>,
    t_k: f64,
    dt: f64,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    if dt < config.dt_min {
        return Err(IntegrateError::StepUnderflow {
            t: t_k,
            dt_min: config.dt_min,
        });
    }
    let mut stepper = ImplicitStepper::new(dae, *config)?;
    Ok(stepper.step(u_k, t_k, dt)?.0)
}

/// Largest stable explicit step for the state `u`.
pub fn network_cfl_dt(dae: &Dae, u: &DVector<f64>) -> Result<f64> {
    let states = dae.split(u);
    let grids: Vec<&PipeGrid> = dae.grids().collect();
    Ok(cfl_dt(grids.into_iter().zip(states.iter()))?)
}

/// Forward Euler on a system whose algebraic rows all pin single unknowns:
/// `[E; P] u̇ = [F; ṡ]`, then the pinned entries are set to their values at
/// `t_k + dt`. With `enforce_cfl`, steps above the CFL bound are rejected.
pub fn step_explicit(dae: &Dae, u_k: &DVector<f64>, t_k: f64, dt: f64, enforce_cfl: bool) -> Result<DVector<f64>> {
    if dae
        .constraints
        .iter()
        .any(|c| c.terms.len() != 1 || c.terms[0].1 != 1.0)
    {
        return Err(IntegrateError::NotOdeReducible);
    }
    if enforce_cfl {
        let cfl = network_cfl_dt(dae, u_k)?;
        if dt > cfl {
            return Err(IntegrateError::CflViolation { dt, cfl });
        }
    }
    let eval = dae.evaluate(u_k)?;
    let n = dae.len();
    let mut m = DMatrix::zeros(n, n);
    let mut rhs = eval.rhs.clone();
    for (r, kind) in dae.row_kinds.iter().enumerate() {
        if let RowKind::Differential { .. } = kind {
            for &(j, w) in &eval.mass[r] {
                m[(r, j)] += w;
            }
        }
    }
    for c in &dae.constraints {
        m[(c.row, c.terms[0].0)] = 1.0;
        rhs[c.row] = dae.target_rate(c, t_k);
    }
    let rate = Factorization::new(m)
        .and_then(|f| f.solve(&rhs))
        .ok_or(IntegrateError::SingularMass)?;
    let mut u = u_k + rate * dt;
    for c in &dae.constraints {
        u[c.terms[0].0] = dae.target(c, t_k + dt);
    }
    Ok(u)
}

/// Boundary datum at a pipe end for the invariant stepper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndValue {
    Pressure(f64),
    Flux(f64),
}

/// Forward Euler on the upwind invariant discretization of one pipe with
/// characteristic boundary conditions: the outgoing invariant at each end is
/// updated by the scheme, the incoming one is set from the boundary datum.
pub fn step_upwind(
    grid: &PipeGrid,
    state: &PipeState,
    opts: &SchemeOptions,
    inlet: EndValue,
    outlet: EndValue,
    dt: f64,
    enforce_cfl: bool,
) -> Result<PipeState> {
    if enforce_cfl {
        let cfl = cfl_dt([(grid, state)])?;
        if dt > cfl {
            return Err(IntegrateError::CflViolation { dt, cfl });
        }
    }
    let rates = upwind_invariant_rates(grid, state, opts)?;
    let n = grid.n;
    let a = grid.geom.area;
    let law = &grid.law;
    let mut wp: Vec<f64> = rates
        .w_plus
        .iter()
        .zip(&rates.dw_plus)
        .map(|(w, d)| w + dt * d)
        .collect();
    let mut wm: Vec<f64> = rates
        .w_minus
        .iter()
        .zip(&rates.dw_minus)
        .map(|(w, d)| w + dt * d)
        .collect();
    wp[0] = match inlet {
        EndValue::Pressure(p) => wm[0] + law.invariant_integral(law.rho_of_p(p)?)?,
        EndValue::Flux(q) => q / a - wm[0],
    };
    wm[n] = match outlet {
        EndValue::Pressure(p) => wp[n] - law.invariant_integral(law.rho_of_p(p)?)?,
        EndValue::Flux(q) => q / a - wp[n],
    };
    let mut out = PipeState {
        p: Vec::with_capacity(n + 1),
        q: Vec::with_capacity(n + 1),
    };
    for i in 0..=n {
        let (rho, q) = from_riemann(
            law,
            &grid.geom,
            RiemannPair {
                w_plus: wp[i],
                w_minus: wm[i],
            },
        )?;
        out.p.push(law.p_of_rho(rho)?);
        out.q.push(q);
    }
    Ok(out)
}

/// Initial state of a scenario.
pub fn initial_state(dae: &Dae, init: &Init) -> Result<DVector<f64>> {
    Ok(match *init {
        Init::Steady => steady_solve(dae, 0.0, SteadyOptions::default())?.state,
        Init::Uniform { p_pa, q_kgs } => dae.uniform_state(p_pa, q_kgs),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    pub wall_seconds: f64,
}

/// Runs a scenario from its initial state to `t_end`, sampling every
/// `output_dt`. Failed implicit steps are retried with half the step size;
/// after four accepted steps the step size is doubled back towards the
/// configured value.
pub fn simulate(scenario: &Scenario) -> Result<SimulationResult> {
    let dae = network::assemble_dae(&scenario.network, scenario.scheme, scenario.options)?;
    let u0 = initial_state(&dae, &scenario.init)?;
    let start = Instant::now();
    let trajectory = simulate_dae(&dae, u0, scenario.t_end, scenario.output_dt, &scenario.integrator)?;
    Ok(SimulationResult {
        trajectory,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn simulate_dae(
    dae: &Dae,
    u0: DVector<f64>,
    t_end: f64,
    output_dt: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t_end >= 0.0 && output_dt > 0.0) {
        return Err(IntegrateError::InvalidConfig(format!(
            "need t_end >= 0 and output_dt > 0 (got {t_end}, {output_dt})"
        )));
    }
    let mut traj = Trajectory::new(dae);
    traj.times.push(0.0);
    traj.states.push(u0.clone());
    let mut stepper = ImplicitStepper::new(dae, *config)?;
    let mut u = u0;
    let mut t = 0.0;
    let mut dt = config.dt;
    let mut good_steps = 0;
    let mut next_output = 1;
    let eps = 1e-9 * config.dt.min(output_dt);
    while t < t_end - eps {
        let t_out = (next_output as f64 * output_dt).min(t_end);
        let mut h = dt;
        if config.method == Method::ExplicitEuler {
            h = h.min(config.cfl_safety * network_cfl_dt(dae, &u)?);
        }
        if t + h > t_out - eps {
            h = t_out - t;
        }
        let attempt = match config.method {
            Method::ExplicitEuler => step_explicit(dae, &u, t, h, true).map(|v| (v, 0)),
            _ => stepper.step(&u, t, h),
        };
        match attempt {
            Ok((u_new, iterations)) => {
                u = u_new;
                t = if (t + h - t_out).abs() <= eps { t_out } else { t + h };
                let (jp, jq) = dae.junction_residuals(&u);
                traj.steps.push(StepDiagnostics {
                    t,
                    dt: h,
                    newton_iterations: iterations,
                    jacobian_updates: stepper.jacobian_updates,
                    junction_pressure: jp,
                    junction_flux: jq,
                    constraint: dae.constraint_violation(&u, t),
                });
                if t == t_out {
                    traj.times.push(t);
                    traj.states.push(u.clone());
                    next_output += 1;
                }
                good_steps += 1;
                if dt < config.dt && good_steps >= 4 {
                    dt = (2.0 * dt).min(config.dt);
                    good_steps = 0;
                }
            }
            Err(IntegrateError::NewtonDiverged { .. })
            | Err(IntegrateError::Network(_))
            | Err(IntegrateError::Scheme(_)) => {
                traj.rejected_steps += 1;
                stepper.reset_history();
                dt = 0.5 * h;
                good_steps = 0;
                if dt < config.dt_min {
                    return Err(IntegrateError::StepUnderflow {
                        t,
                        dt_min: config.dt_min,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas_model::{PipeGeometry, PressureLaw};
    use crate::network::{assemble_dae, Network, Node, Pipe};
    use crate::scenario_io::{Interp, Signal, SignalUnit};
    use crate::schemes::Scheme;

    fn pipe_network(n: usize, friction: f64, inlet_bar: Signal, outlet: Signal) -> Network {
        let geom = PipeGeometry::new(3000.0, 0.762, friction).unwrap();
        let grid = PipeGrid::new(geom, PressureLaw::isothermal(383.0735).unwrap(), n).unwrap();
        Network::new(
            vec![Node::pressure("in", inlet_bar), Node::flux("out", outlet)],
            vec![Pipe {
                id: "p".into(),
                from: "in".into(),
                to: "out".into(),
                grid,
            }],
        )
    }

    fn constant(unit: SignalUnit, v: f64) -> Signal {
        Signal::new(unit, Interp::Pconst, vec![(0.0, v)]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        assert!(IntegratorConfig {
            dt: 1e-7,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(IntegratorConfig {
            cfl_safety: 1.2,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let net = pipe_network(
            10,
            0.0178,
            constant(SignalUnit::Bar, 60.0),
            constant(SignalUnit::KgPerS, 100.0),
        );
        for scheme in Scheme::ALL {
            let dae = assemble_dae(&net, scheme, SchemeOptions::default()).unwrap();
            let u0 = steady_solve(&dae, 0.0, SteadyOptions::default()).unwrap().state;
            let u1 = step_implicit(&dae, &u0, 0.0, 1.0, &IntegratorConfig::default()).unwrap();
            let scale = u0.amax();
            assert!((&u1 - &u0).amax() <= 1e-9 * scale, "{scheme}");
        }
    }

    #[test]
    fn explicit_step_leaves_resting_gas_unchanged() {
        let net = pipe_network(
            8,
            0.0,
            constant(SignalUnit::Bar, 50.0),
            constant(SignalUnit::KgPerS, 0.0),
        );
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default()).unwrap();
        let u = dae.uniform_state(50e5, 0.0);
        let cfl = network_cfl_dt(&dae, &u).unwrap();
        let v = step_explicit(&dae, &u, 0.0, 0.5 * cfl, true).unwrap();
        assert_eq!(u, v);
        assert!(matches!(
            step_explicit(&dae, &u, 0.0, 1.05 * cfl, true),
            Err(IntegrateError::CflViolation { .. })
        ));
    }

    #[test]
    fn implicit_and_explicit_agree_for_tiny_steps() {
        let net = pipe_network(
            8,
            0.0178,
            constant(SignalUnit::Bar, 50.0),
            constant(SignalUnit::KgPerS, 80.0),
        );
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default()).unwrap();
        let mut u = dae.uniform_state(50e5, 80.0);
        // smooth perturbation
        for i in 1..8 {
            u[dae.layout.p(0, i)] *= 1.0 + 1e-3 * (i as f64).sin();
        }
        let mut errs = Vec::new();
        for dt in [1e-3, 5e-4] {
            let a = step_implicit(
                &dae,
                &u,
                0.0,
                dt,
                &IntegratorConfig {
                    dt_min: 1e-9,
                    ..Default::default()
                },
            )
            .unwrap();
            let b = step_explicit(&dae, &u, 0.0, dt, true).unwrap();
            errs.push((&a - &b).amax());
        }
        // both are first order, so they differ by O(dt²)
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.0 && ratio < 5.0, "{errs:?}");
    }

    #[test]
    fn simulate_handles_zero_end_time() {
        let net = pipe_network(
            6,
            0.0178,
            constant(SignalUnit::Bar, 60.0),
            constant(SignalUnit::KgPerS, 50.0),
        );
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default()).unwrap();
        let u0 = dae.uniform_state(60e5, 50.0);
        let traj = simulate_dae(&dae, u0, 0.0, 1.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.times, vec![0.0]);
    }

    #[test]
    fn simulation_is_deterministic_and_sampled() {
        let step = Signal::new(SignalUnit::Bar, Interp::Pconst, vec![(0.0, 60.0), (2.0, 58.0)]).unwrap();
        let net = pipe_network(6, 0.0178, step, constant(SignalUnit::KgPerS, 50.0));
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default()).unwrap();
        let u0 = steady_solve(&dae, 0.0, SteadyOptions::default()).unwrap().state;
        let cfg = IntegratorConfig::with_dt(0.25);
        let a = simulate_dae(&dae, u0.clone(), 5.0, 1.0, &cfg).unwrap();
        let b = simulate_dae(&dae, u0, 5.0, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((a.pressure(5, 0, 0) - 58e5).abs() < 1e-6);
        assert!(a.max_constraint_violation() < 1e-12);
    }

    #[test]
    fn upwind_step_keeps_resting_gas() {
        let geom = PipeGeometry::new(3000.0, 0.762, 0.0).unwrap();
        let grid = PipeGrid::new(geom, PressureLaw::isothermal(383.0735).unwrap(), 20).unwrap();
        let s = PipeState::uniform(&grid, 50e5, 0.0);
        let next = step_upwind(
            &grid,
            &s,
            &SchemeOptions::default(),
            EndValue::Pressure(50e5),
            EndValue::Flux(0.0),
            0.1,
            true,
        )
        .unwrap();
        for i in 0..=20 {
            assert!((next.p[i] - 50e5).abs() < 1e-6);
            assert!(next.q[i].abs() < 1e-9);
        }
        assert!(matches!(
            step_upwind(
                &grid,
                &s,
                &SchemeOptions::default(),
                EndValue::Pressure(50e5),
                EndValue::Flux(0.0),
                1.0,
                true
            ),
            Err(IntegrateError::CflViolation { .. })
        ));
    }
}

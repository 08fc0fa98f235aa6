//! Verification studies: oscillation metric, refinement studies against the
//! analytic solutions, and the steady-state residual orders of the new
//! scheme.

use nalgebra::DVector;
use thiserror::Error;

use crate::gas_model::{
    friction_source, traveling_wave_reference, uniform_flow_decay, uniform_flow_reference, GasModelError, PipeGeometry,
    PressureLaw,
};
use crate::integrate::{simulate_dae, IntegrateError, IntegratorConfig, Method, Trajectory};
use crate::network::{assemble_dae, Network, NetworkError, Node, NodeKind, Pipe};
use crate::scenario_io::{Interp, Signal, SignalUnit};
use crate::schemes::{
    continuous_steady_profile, rhs_new, PipeGrid, PipeState, Scheme, SchemeError, SchemeOptions, SourceQuadrature,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("a study needs at least {min} levels, got {got}")]
    TooFewLevels { min: usize, got: usize },
    #[error(transparent)]
    Model(#[from] GasModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

pub type Result<T> = std::result::Result<T, StudyError>;

/// Total variation `Σ |x_{k+1} - x_k|`.
pub fn total_variation(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Total variation over the final 20% of the samples divided by the mean
/// magnitude over the same window (0 for an identically zero window).
pub fn oscillation_metric(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    let start = series.len() - (series.len() / 5).max(2);
    let window = &series[start..];
    let mean = window.iter().map(|v| v.abs()).sum::<f64>() / window.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    total_variation(window) / mean
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn loglog_slope(h: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(err).map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Quantity recorded from a trajectory for the oscillation metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Mass flux at grid point 0 of a pipe.
    InletFlux(usize),
    /// Pressure at the last grid point of a pipe.
    OutletPressure(usize),
}

impl Probe {
    /// Inlet flux for a single pipe; otherwise the pressure at the first
    /// flux (demand) node, because the supply pressure is pinned.
    pub fn default_for(network: &Network) -> Probe {
        if network.pipes.len() == 1 {
            return Probe::InletFlux(0);
        }
        let demand = network.nodes.iter().position(|n| n.kind == NodeKind::Flux);
        match demand.and_then(|v| network.incoming(v).first().copied()) {
            Some(pipe) => Probe::OutletPressure(pipe),
            None => Probe::InletFlux(0),
        }
    }

    pub fn series(&self, traj: &Trajectory) -> Vec<f64> {
        (0..traj.times.len())
            .map(|s| match *self {
                Probe::InletFlux(k) => traj.flux(s, k, 0),
                Probe::OutletPressure(k) => traj.pressure(s, k, traj.xs[k].len() - 1),
            })
            .collect()
    }

    pub fn describe(&self, network: &Network) -> String {
        match *self {
            Probe::InletFlux(k) => format!("inlet flux of pipe {}", network.pipes[k].id),
            Probe::OutletPressure(k) => format!("pressure at node {}", network.pipes[k].to),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub dx: f64,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub target: &'static str,
    pub rows: Vec<ConvergenceRow>,
    /// Slope of log(error) against log(Δx).
    pub slope: f64,
}

impl ConvergenceStudy {
    fn new(target: &'static str, rows: Vec<ConvergenceRow>) -> Self {
        let h: Vec<f64> = rows.iter().map(|r| r.dx).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let slope = loglog_slope(&h, &e);
        Self { target, rows, slope }
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>6} {:>12} {:>12} {:>14}\n", "cells", "dx_m", "dt_s", "error");
        for r in &self.rows {
            s += &format!("{:>6} {:>12.5e} {:>12.5e} {:>14.6e}\n", r.cells, r.dx, r.dt, r.error);
        }
        s += &format!("slope {:.4}\n", self.slope);
        s
    }
}

fn require_levels(levels: usize) -> Result<()> {
    if levels < 3 {
        return Err(StudyError::TooFewLevels { min: 3, got: levels });
    }
    Ok(())
}

/// Steeply graded isothermal pipe used for the steady residual study.
pub fn steady_study_grid(cells: usize) -> Result<PipeGrid> {
    let geom = PipeGeometry::new(3000.0, 0.762, 0.0178)?;
    Ok(PipeGrid::new(geom, PressureLaw::isothermal(383.0735)?, cells)?)
}

pub const STEADY_STUDY_FLUX: f64 = 400.0;
pub const STEADY_STUDY_INLET: f64 = 60e5;

/// Largest interior flux derivative `max |q̇_i|` of the new scheme on the
/// continuous steady profile sampled at the grid points.
pub fn steady_residual(grid: &PipeGrid, opts: &SchemeOptions, c_q: f64, p_inlet: f64) -> Result<f64> {
    let xs: Vec<f64> = (0..grid.points()).map(|i| grid.x(i)).collect();
    let p = continuous_steady_profile(grid, c_q, p_inlet, &xs)?;
    let state = PipeState {
        p,
        q: vec![c_q; grid.points()],
    };
    let rows = rhs_new(grid, &state, opts)?;
    Ok((1..grid.n).map(|i| rows.rhs(2 * i + 1).abs()).fold(0.0, f64::max))
}

/// Steady residual on `levels` grids with 10·2^k cells.
pub fn steady_residual_study(source: SourceQuadrature, levels: usize) -> Result<ConvergenceStudy> {
    require_levels(levels)?;
    let opts = SchemeOptions {
        source,
        ..SchemeOptions::default()
    };
    let mut rows = Vec::new();
    for k in 0..levels {
        let cells = 10 << k;
        let grid = steady_study_grid(cells)?;
        let error = steady_residual(&grid, &opts, STEADY_STUDY_FLUX, STEADY_STUDY_INLET)?;
        rows.push(ConvergenceRow {
            cells,
            dx: grid.dx,
            dt: 0.0,
            error,
        });
    }
    Ok(ConvergenceStudy::new("steady_residual", rows))
}

fn single_pipe(grid: PipeGrid, inlet: Signal, outlet: Signal) -> Network {
    Network::new(
        vec![Node::pressure("inlet", inlet), Node::flux("outlet", outlet)],
        vec![Pipe {
            id: "P1".into(),
            from: "inlet".into(),
            to: "outlet".into(),
            grid,
        }],
    )
}

/// Piecewise linear signal through `f` sampled every `step` on `[0, t_end]`.
pub fn sampled_signal(unit: SignalUnit, t_end: f64, step: f64, f: impl Fn(f64) -> f64) -> Signal {
    let n = (t_end / step).round().max(1.0) as usize;
    let points = (0..=n).map(|k| {
        let t = k as f64 * step;
        (t, f(t))
    });
    Signal::new(unit, Interp::Linear, points.collect()).expect("increasing sample times")
}

pub const UNIFORM_FLOW_RHO0: f64 = 50.0;
pub const UNIFORM_FLOW_C0: f64 = 1.0 / 150.0;
pub const UNIFORM_FLOW_T: f64 = 100.0;
/// Coarsest time step of the acceptance study (s).
pub const UNIFORM_FLOW_DT0: f64 = 0.05;

/// Outlet condition of the uniform-flow study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniformFlowOutlet {
    /// Outlet flux follows `q(t)`. The pinned exact flux differs from the
    /// time-discrete interior by O(Δt), which excites the acoustic modes of
    /// the pipe.
    ExactFlux,
    /// Pressure `ρ₀ c²` at both ends; the time-discrete solution then stays
    /// spatially uniform and only the integrator's error remains.
    Pressure,
}

/// Uniform-flow solution `ρ = ρ₀`, `q = 1/(C₀ + C₁ t)` on a pipe with unit
/// cross-section and the inlet pressure pinned; `levels` runs with `10·2^k`
/// cells and `Δt = Δt₀·2^-k`. The error is the largest relative deviation of
/// `p` and `q` over the grid at `t = 100` s.
pub fn uniform_flow_study(
    levels: usize,
    method: Method,
    outlet: UniformFlowOutlet,
    dt0: f64,
) -> Result<ConvergenceStudy> {
    require_levels(levels)?;
    let geom = PipeGeometry::with_area(3000.0, 0.762, 0.0178, 1.0)?;
    let law = PressureLaw::isothermal(383.0735)?;
    let p0 = law.p_of_rho(UNIFORM_FLOW_RHO0)?;
    let mut rows = Vec::new();
    for k in 0..levels {
        let cells = 10 << k;
        let dt = dt0 / (1 << k) as f64;
        let grid = PipeGrid::new(geom, law, cells)?;
        let outlet = match outlet {
            UniformFlowOutlet::ExactFlux => Node::flux(
                "outlet",
                sampled_signal(SignalUnit::KgPerS, UNIFORM_FLOW_T, dt, |t| {
                    uniform_flow_reference(UNIFORM_FLOW_RHO0, UNIFORM_FLOW_C0, &geom, t)
                        .map(|r| r.1)
                        .unwrap_or(f64::NAN)
                }),
            ),
            UniformFlowOutlet::Pressure => Node::pressure("outlet", Signal::constant_si(p0, true)),
        };
        let net = Network::new(
            vec![Node::pressure("inlet", Signal::constant_si(p0, true)), outlet],
            vec![Pipe {
                id: "P1".into(),
                from: "inlet".into(),
                to: "outlet".into(),
                grid,
            }],
        );
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default())?;
        let u0 = dae.uniform_state(p0, 1.0 / UNIFORM_FLOW_C0);
        let cfg = IntegratorConfig {
            method,
            dt,
            dt_min: 1e-9,
            ..IntegratorConfig::default()
        };
        let traj = simulate_dae(&dae, u0, UNIFORM_FLOW_T, UNIFORM_FLOW_T, &cfg)?;
        let (_, q_exact) = uniform_flow_reference(UNIFORM_FLOW_RHO0, UNIFORM_FLOW_C0, &geom, UNIFORM_FLOW_T)?;
        let u = traj.final_state();
        let mut error: f64 = 0.0;
        for i in 0..grid.points() {
            error = error
                .max(((u[2 * i] - p0) / p0).abs())
                .max(((u[2 * i + 1] - q_exact) / q_exact).abs());
        }
        rows.push(ConvergenceRow {
            cells,
            dx: grid.dx,
            dt,
            error,
        });
    }
    Ok(ConvergenceStudy::new("uniform_flow", rows))
}

/// Decay constant of the uniform-flow test case.
pub fn uniform_flow_c1() -> Result<f64> {
    let geom = PipeGeometry::with_area(3000.0, 0.762, 0.0178, 1.0)?;
    Ok(uniform_flow_decay(UNIFORM_FLOW_RHO0, &geom))
}

/// Parameters of the traveling wave: law `z(p) = 1 - p`, unit
/// cross-section, `C = f_g / (2 d c) = 0.5`, `y(0) = 0.5`, wave speed 1.
pub struct TravelingWave {
    pub law: PressureLaw,
    pub geom: PipeGeometry,
    pub speed: f64,
    pub y0: f64,
}

impl TravelingWave {
    pub fn standard() -> Result<Self> {
        Ok(Self {
            law: PressureLaw::affine(1.0, -1.0)?,
            geom: PipeGeometry::with_area(1.0, 1.0, 1.0, 1.0)?,
            speed: 1.0,
            y0: 0.5,
        })
    }

    pub fn c(&self) -> f64 {
        self.geom.friction / (2.0 * self.geom.diameter * self.speed)
    }

    /// `g(t, x) = y(c (t - x))` at each `(t, x)`.
    pub fn pressure(&self, tx: &[(f64, f64)]) -> Result<Vec<f64>> {
        let s: Vec<f64> = tx.iter().map(|&(t, x)| self.speed * (t - x)).collect();
        Ok(traveling_wave_reference(self.c(), self.y0, &s)?)
    }
}

/// Central-difference residuals `(mass, momentum)` of the traveling wave in
/// the semilinear model with step `h`, maximized over a space-time patch.
pub fn traveling_wave_residuals(h: f64) -> Result<(f64, f64)> {
    let wave = TravelingWave::standard()?;
    let rho = |g: f64| g / (1.0 - g);
    let mut mass: f64 = 0.0;
    let mut momentum: f64 = 0.0;
    for ti in 0..5 {
        for xi in 0..5 {
            let (t, x) = (0.1 * ti as f64, 0.1 * xi as f64);
            let pts = [(t, x), (t + h, x), (t - h, x), (t, x + h), (t, x - h)];
            let g = wave.pressure(&pts)?;
            // ρ = q = g / (1 - g)
            let dt_rho = (rho(g[1]) - rho(g[2])) / (2.0 * h);
            let dx_q = (rho(g[3]) - rho(g[4])) / (2.0 * h);
            mass = mass.max((dt_rho + dx_q).abs());
            let dx_p = (g[3] - g[4]) / (2.0 * h);
            let source = friction_source(&wave.geom, rho(g[0]), rho(g[0]));
            momentum = momentum.max((dt_rho + dx_p - source).abs());
        }
    }
    Ok((mass, momentum))
}

/// New-scheme simulation of the traveling wave on `x ∈ [0, 1]` up to
/// `t = 0.5` with the exact pressure at the inlet and the exact flux at the
/// outlet; error is the max-norm deviation of `p` at the final time.
pub fn traveling_wave_study(levels: usize) -> Result<ConvergenceStudy> {
    require_levels(levels)?;
    let wave = TravelingWave::standard()?;
    let t_end = 0.5;
    let mut rows = Vec::new();
    for k in 0..levels {
        let cells = 10 << k;
        let dt = 0.02 / (1 << k) as f64;
        let grid = PipeGrid::new(wave.geom, wave.law, cells)?;
        let times: Vec<(f64, f64)> = (0..=((t_end / dt).round() as usize))
            .map(|j| (j as f64 * dt, 0.0))
            .collect();
        let inlet_p = wave.pressure(&times)?;
        let outlet: Vec<(f64, f64)> = times.iter().map(|&(t, _)| (t, 1.0)).collect();
        let outlet_g = wave.pressure(&outlet)?;
        let inlet = Signal::new(
            SignalUnit::Pa,
            Interp::Linear,
            times.iter().zip(&inlet_p).map(|(&(t, _), &p)| (t, p)).collect(),
        )
        .expect("increasing times");
        let outlet = Signal::new(
            SignalUnit::KgPerS,
            Interp::Linear,
            times
                .iter()
                .zip(&outlet_g)
                .map(|(&(t, _), &g)| (t, g / (1.0 - g)))
                .collect(),
        )
        .expect("increasing times");
        let net = single_pipe(grid, inlet, outlet);
        let dae = assemble_dae(&net, Scheme::New, SchemeOptions::default())?;
        let x: Vec<(f64, f64)> = (0..grid.points()).map(|i| (0.0, grid.x(i))).collect();
        let p0 = wave.pressure(&x)?;
        let state = PipeState {
            q: p0.iter().map(|g| g / (1.0 - g)).collect(),
            p: p0,
        };
        let u0 = dae.join(&[state]);
        let cfg = IntegratorConfig {
            dt,
            dt_min: 1e-9,
            ..IntegratorConfig::default()
        };
        let traj = simulate_dae(&dae, u0, t_end, t_end, &cfg)?;
        let x_end: Vec<(f64, f64)> = (0..grid.points()).map(|i| (t_end, grid.x(i))).collect();
        let exact = wave.pressure(&x_end)?;
        let u: &DVector<f64> = traj.final_state();
        let error = (0..grid.points())
            .map(|i| (u[2 * i] - exact[i]).abs())
            .fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            cells,
            dx: grid.dx,
            dt,
            error,
        });
    }
    Ok(ConvergenceStudy::new("traveling_wave", rows))
}

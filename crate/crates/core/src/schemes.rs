//! Per-pipe spatial semi-discretizations.
//!
//! Every scheme turns a [`PipeState`] into `2(n+1)` rows aligned with the
//! state layout: row `2i` sits in the slot of `p_i`, row `2i+1` in the slot
//! of `q_i`. Each row is either a differential relation
//! `Σ_j m_j u̇_j = rhs` with at most two mass entries, or a placeholder for
//! a boundary/coupling relation that the network assembly fills in. Row `0`
//! (the `p_0` slot) is always the inlet placeholder and row `2n+1` (the `q_n`
//! slot) the outlet placeholder. All stencils are contained in
//! `{i-1, i, i+1}` for the row in slot `i`.

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gas_model::{friction_source, to_riemann, GasModelError, LawKind, PipeGeometry, PressureLaw};
use crate::numerics::Dopri5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state at cell {cell}: {reason}")]
    InvalidState { cell: usize, reason: String },
    #[error("steady profile became non-physical at cell {cell} (p = {p})")]
    NonPhysicalProfile { cell: usize, p: f64 },
    #[error("{0} requires an isothermal pressure law")]
    RequiresIsothermal(&'static str),
    #[error(transparent)]
    Model(#[from] GasModelError),
}

pub type Result<T> = std::result::Result<T, SchemeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Riemann-invariant upwind scheme in conservative variables.
    New,
    /// Box scheme averaging over neighbouring cells.
    Mid,
    /// Staggered one-sided scheme.
    End,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::New, Scheme::Mid, Scheme::End];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::New => "new",
            Scheme::Mid => "mid",
            Scheme::End => "end",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "new" => Ok(Scheme::New),
            "mid" => Ok(Scheme::Mid),
            "end" => Ok(Scheme::End),
            other => Err(format!("unknown scheme '{other}' (expected new|mid|end)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Quadrature of the friction source over the cell stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceQuadrature {
    #[default]
    Midpoint,
    Simpson,
}

/// Which eigenvalues enter the pressure-gradient term of the interior flux
/// rows of the new scheme: `λ_i + λ_{i+1}` (the default stencil), or the symmetric
/// `λ_{i-1} + λ_{i+1}` obtained from the invariant derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigSum {
    #[default]
    Printed,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SchemeOptions {
    #[serde(default)]
    pub source: SourceQuadrature,
    #[serde(default)]
    pub eig_sum: EigSum,
    /// Use the literal friction terms of the mid/end schemes (divided by
    /// pressure) instead of the physical `a f(ρ, q)`.
    #[serde(default)]
    pub verbatim_source: bool,
}

/// Quadrature weights `(ω_{i-1}, ω_i, ω_{i+1})`.
pub fn source_weights(mode: SourceQuadrature) -> [f64; 3] {
    match mode {
        SourceQuadrature::Midpoint => [0.0, 1.0, 0.0],
        SourceQuadrature::Simpson => [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    }
}

/// Equidistant grid `x_i = i Δx`, `i = 0..=n`, on one pipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeGrid {
    pub n: usize,
    pub dx: f64,
    pub geom: PipeGeometry,
    pub law: PressureLaw,
}

impl PipeGrid {
    pub fn new(geom: PipeGeometry, law: PressureLaw, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(SchemeError::InvalidGrid(format!("need at least 2 intervals, got {n}")));
        }
        Ok(Self {
            n,
            dx: geom.length / n as f64,
            geom,
            law,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n {
            self.geom.length
        } else {
            i as f64 * self.dx
        }
    }

    pub fn points(&self) -> usize {
        self.n + 1
    }
}

/// Pressures and mass fluxes at the grid points of one pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PipeState {
    pub fn uniform(grid: &PipeGrid, p: f64, q: f64) -> Self {
        Self {
            p: vec![p; grid.points()],
            q: vec![q; grid.points()],
        }
    }

    pub fn validate(&self, grid: &PipeGrid) -> Result<()> {
        if self.p.len() != grid.points() || self.q.len() != grid.points() {
            return Err(SchemeError::InvalidState {
                cell: 0,
                reason: format!(
                    "expected {} points, got p: {}, q: {}",
                    grid.points(),
                    self.p.len(),
                    self.q.len()
                ),
            });
        }
        let p_max = grid.law.p_max();
        for (i, (&p, &q)) in self.p.iter().zip(&self.q).enumerate() {
            if !(p > 0.0 && p < p_max) {
                return Err(SchemeError::InvalidState {
                    cell: i,
                    reason: format!("pressure {p} not admissible"),
                });
            }
            if !q.is_finite() {
                return Err(SchemeError::InvalidState {
                    cell: i,
                    reason: format!("flux {q} not finite"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndSlot {
    Inlet,
    Outlet,
}

/// `Σ mass_j · u̇_j = rhs`, indices local to the pipe (`2i` for `p_i`,
/// `2i+1` for `q_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffRow {
    pub mass: ArrayVec<(usize, f64), 2>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    Differential(DiffRow),
    Placeholder(EndSlot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiDiscreteRows {
    pub rows: Vec<Row>,
}

impl SemiDiscreteRows {
    fn with_points(points: usize) -> Self {
        let mut rows = vec![Row::Placeholder(EndSlot::Inlet); 2 * points];
        rows[2 * points - 1] = Row::Placeholder(EndSlot::Outlet);
        Self { rows }
    }

    fn set(&mut self, slot: usize, mass: &[(usize, f64)], rhs: f64) {
        let mass = mass.iter().copied().collect();
        self.rows[slot] = Row::Differential(DiffRow { mass, rhs });
    }

    pub fn differential(&self, slot: usize) -> Option<&DiffRow> {
        match &self.rows[slot] {
            Row::Differential(r) => Some(r),
            Row::Placeholder(_) => None,
        }
    }

    pub fn count_differential(&self) -> usize {
        self.rows.iter().filter(|r| matches!(r, Row::Differential(_))).count()
    }

    /// Right-hand side of the row in `slot` (zero for placeholders).
    pub fn rhs(&self, slot: usize) -> f64 {
        self.differential(slot).map_or(0.0, |r| r.rhs)
    }
}

const P: usize = 0;
const Q: usize = 1;

fn idx(i: usize, var: usize) -> usize {
    2 * i + var
}

/// Pointwise derived quantities `ρ_i`, `λ_i`, `f_i`.
struct Cells {
    rho: Vec<f64>,
    lambda: Vec<f64>,
    f: Vec<f64>,
}

fn cells(grid: &PipeGrid, state: &PipeState) -> Result<Cells> {
    state.validate(grid)?;
    let law = &grid.law;
    let mut rho = Vec::with_capacity(grid.points());
    let mut lambda = Vec::with_capacity(grid.points());
    let mut f = Vec::with_capacity(grid.points());
    for (&p, &q) in state.p.iter().zip(&state.q) {
        let r = law.rho_of_p(p)?;
        lambda.push(law.lambda_of_rho(r)?);
        f.push(friction_source(&grid.geom, r, q));
        rho.push(r);
    }
    Ok(Cells { rho, lambda, f })
}

fn quadrature_source(c: &Cells, i: usize, n: usize, weights: [f64; 3]) -> f64 {
    if i == 0 || i == n {
        c.f[i]
    } else {
        weights[0] * c.f[i - 1] + weights[1] * c.f[i] + weights[2] * c.f[i + 1]
    }
}

/// Riemann-invariant scheme rewritten in `(p, q)`: central interior rows plus
/// the characteristic closures at both pipe ends.
pub fn rhs_new(grid: &PipeGrid, state: &PipeState, opts: &SchemeOptions) -> Result<SemiDiscreteRows> {
    let c = cells(grid, state)?;
    let n = grid.n;
    let a = grid.geom.area;
    let dx = grid.dx;
    let q = &state.q;
    let weights = source_weights(opts.source);
    let mut rows = SemiDiscreteRows::with_points(grid.points());

    // inlet closure in the q_0 slot
    let l0 = c.lambda[0];
    let rhs0 = l0 * (q[1] - q[0]) / (a * dx) - l0 / (2.0 * dx) * (c.rho[1] - c.rho[0]) * (c.lambda[1] + l0) + c.f[0];
    rows.set(idx(0, Q), &[(idx(0, Q), 1.0 / a), (idx(0, P), -1.0 / l0)], rhs0);

    for i in 1..n {
        let li = c.lambda[i];
        let dp = -li * li / (2.0 * dx * a) * (q[i + 1] - q[i - 1]);
        rows.set(idx(i, P), &[(idx(i, P), 1.0)], dp);
        let eig_sum = match opts.eig_sum {
            EigSum::Printed => li + c.lambda[i + 1],
            EigSum::Derived => c.lambda[i - 1] + c.lambda[i + 1],
        };
        let dq =
            -li * a / (4.0 * dx) * (c.rho[i + 1] - c.rho[i - 1]) * eig_sum + a * quadrature_source(&c, i, n, weights);
        rows.set(idx(i, Q), &[(idx(i, Q), 1.0)], dq);
    }

    // outlet closure in the p_n slot
    let ln = c.lambda[n];
    let rhsn = -ln * (q[n] - q[n - 1]) / (a * dx)
        - ln / (2.0 * dx) * (c.rho[n] - c.rho[n - 1]) * (ln + c.lambda[n - 1])
        + c.f[n];
    rows.set(idx(n, P), &[(idx(n, Q), 1.0 / a), (idx(n, P), 1.0 / ln)], rhsn);
    Ok(rows)
}

fn require_staggered(grid: &PipeGrid, name: &str) -> Result<()> {
    if grid.n < 3 {
        return Err(SchemeError::InvalidGrid(format!(
            "{name} scheme needs at least 3 intervals, got {}",
            grid.n
        )));
    }
    Ok(())
}

/// Box scheme: the mass and momentum balances are averaged over each
/// interval `[x_i, x_{i+1}]`.
pub fn rhs_midpoint(grid: &PipeGrid, state: &PipeState, opts: &SchemeOptions) -> Result<SemiDiscreteRows> {
    require_staggered(grid, "midpoint")?;
    let c = cells(grid, state)?;
    let geom = &grid.geom;
    let (a, dx) = (geom.area, grid.dx);
    let (p, q) = (&state.p, &state.q);
    let mut rows = SemiDiscreteRows::with_points(grid.points());
    for i in 0..grid.n {
        let (li, lj) = (c.lambda[i], c.lambda[i + 1]);
        rows.set(
            idx(i + 1, P),
            &[
                (idx(i + 1, P), 1.0 / (2.0 * lj * lj)),
                (idx(i, P), 1.0 / (2.0 * li * li)),
            ],
            -(q[i + 1] - q[i]) / (dx * a),
        );
        let source = if opts.verbatim_source {
            let s = q[i] + q[i + 1];
            -geom.friction / (4.0 * geom.diameter * a) * s * s.abs() / (p[i] + p[i + 1])
        } else {
            let rho_avg = 0.5 * (c.rho[i] + c.rho[i + 1]);
            a * friction_source(geom, rho_avg, 0.5 * (q[i] + q[i + 1]))
        };
        rows.set(
            idx(i, Q),
            &[(idx(i, Q), 0.5), (idx(i + 1, Q), 0.5)],
            -a / dx * (p[i + 1] - p[i]) + source,
        );
    }
    Ok(rows)
}

/// Staggered scheme: pressures advance from backward flux differences,
/// fluxes from forward pressure differences.
pub fn rhs_endpoint(grid: &PipeGrid, state: &PipeState, opts: &SchemeOptions) -> Result<SemiDiscreteRows> {
    require_staggered(grid, "endpoint")?;
    let c = cells(grid, state)?;
    let geom = &grid.geom;
    let (a, dx, n) = (geom.area, grid.dx, grid.n);
    let (p, q) = (&state.p, &state.q);
    let mut rows = SemiDiscreteRows::with_points(grid.points());
    for i in 1..=n {
        let li = c.lambda[i];
        rows.set(idx(i, P), &[(idx(i, P), 1.0)], -li * li / (dx * a) * (q[i] - q[i - 1]));
    }
    for i in 0..n {
        let source = if opts.verbatim_source {
            -geom.friction / (2.0 * geom.diameter * a) * q[i] * q[i].abs() / p[i + 1]
        } else {
            a * friction_source(geom, c.rho[i + 1], q[i])
        };
        rows.set(idx(i, Q), &[(idx(i, Q), 1.0)], -a / dx * (p[i + 1] - p[i]) + source);
    }
    Ok(rows)
}

pub fn rhs(scheme: Scheme, grid: &PipeGrid, state: &PipeState, opts: &SchemeOptions) -> Result<SemiDiscreteRows> {
    match scheme {
        Scheme::New => rhs_new(grid, state, opts),
        Scheme::Mid => rhs_midpoint(grid, state, opts),
        Scheme::End => rhs_endpoint(grid, state, opts),
    }
}

/// Time derivatives of the Riemann invariants from the first-order upwind
/// discretization: `ẇ⁺_i` for `i = 1..=n` (backward differences) and `ẇ⁻_i`
/// for `i = 0..n` (forward differences). The entries `ẇ⁺_0` and `ẇ⁻_n`
/// are returned as zero; they are fixed by boundary data.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantRates {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub dw_plus: Vec<f64>,
    pub dw_minus: Vec<f64>,
    pub lambda: Vec<f64>,
}

pub fn upwind_invariant_rates(grid: &PipeGrid, state: &PipeState, opts: &SchemeOptions) -> Result<InvariantRates> {
    let c = cells(grid, state)?;
    let n = grid.n;
    let weights = source_weights(opts.source);
    let mut w_plus = Vec::with_capacity(n + 1);
    let mut w_minus = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let w = to_riemann(&grid.law, &grid.geom, c.rho[i], state.q[i])?;
        w_plus.push(w.w_plus);
        w_minus.push(w.w_minus);
    }
    let mut dw_plus = vec![0.0; n + 1];
    let mut dw_minus = vec![0.0; n + 1];
    for i in 1..=n {
        dw_plus[i] = -c.lambda[i] / grid.dx * (w_plus[i] - w_plus[i - 1]) + 0.5 * quadrature_source(&c, i, n, weights);
    }
    for i in 0..n {
        dw_minus[i] =
            c.lambda[i] / grid.dx * (w_minus[i + 1] - w_minus[i]) + 0.5 * quadrature_source(&c, i, n, weights);
    }
    Ok(InvariantRates {
        w_plus,
        w_minus,
        dw_plus,
        dw_minus,
        lambda: c.lambda,
    })
}

/// `(ṗ_i, q̇_i)` implied by invariant rates: `q̇ = a (ẇ⁺ + ẇ⁻)`,
/// `ṗ = λ (ẇ⁺ - ẇ⁻)`.
pub fn invariant_rates_to_conservative(grid: &PipeGrid, rates: &InvariantRates, i: usize) -> (f64, f64) {
    let dp = rates.lambda[i] * (rates.dw_plus[i] - rates.dw_minus[i]);
    let dq = grid.geom.area * (rates.dw_plus[i] + rates.dw_minus[i]);
    (dp, dq)
}

/// Largest stable explicit step `min_pipes Δx / max_i λ⁺(ρ_i)`.
pub fn cfl_dt<'a, I>(pipes: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a PipeGrid, &'a PipeState)>,
{
    let mut dt = f64::INFINITY;
    for (grid, state) in pipes {
        state.validate(grid)?;
        let mut lmax: f64 = 0.0;
        for &p in &state.p {
            lmax = lmax.max(grid.law.lambda_of_rho(grid.law.rho_of_p(p)?)?);
        }
        dt = dt.min(grid.dx / lmax);
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SchemeError::InvalidGrid("no pipes to compute a CFL bound".into()));
    }
    Ok(dt)
}

fn require_isothermal(grid: &PipeGrid, what: &'static str) -> Result<f64> {
    let law = &grid.law;
    if law.kind() == LawKind::Isothermal || law.alpha() == 0.0 {
        Ok(law.c_ref())
    } else {
        Err(SchemeError::RequiresIsothermal(what))
    }
}

/// Grid state with `q_i = C_q` on which the interior rows of [`rhs_new`]
/// vanish: `p_{i+1} = p_{i-1} - Δx f_g c² C_q|C_q| / (d a² p_i)`.
pub fn discrete_steady_profile(grid: &PipeGrid, c_q: f64, p0: f64, p1: f64) -> Result<PipeState> {
    let c = require_isothermal(grid, "discrete steady profile")?;
    let geom = &grid.geom;
    let k = grid.dx * geom.friction * c * c * c_q * c_q.abs() / (geom.diameter * geom.area * geom.area);
    let mut p = Vec::with_capacity(grid.points());
    for (i, v) in [p0, p1].into_iter().enumerate() {
        if !(v > 0.0) {
            return Err(SchemeError::NonPhysicalProfile { cell: i, p: v });
        }
        p.push(v);
    }
    for i in 1..grid.n {
        let next = p[i - 1] - k / p[i];
        if !(next > 0.0) {
            return Err(SchemeError::NonPhysicalProfile { cell: i + 1, p: next });
        }
        p.push(next);
    }
    Ok(PipeState {
        p,
        q: vec![c_q; grid.points()],
    })
}

/// Continuous steady state `∂x p = f(ρ(p), C_q)` sampled at `x_samples`
/// (increasing, starting at or after the inlet).
pub fn continuous_steady_profile(grid: &PipeGrid, c_q: f64, p_inlet: f64, x_samples: &[f64]) -> Result<Vec<f64>> {
    if !(p_inlet > 0.0 && p_inlet < grid.law.p_max()) {
        return Err(SchemeError::NonPhysicalProfile { cell: 0, p: p_inlet });
    }
    if c_q == 0.0 {
        return Ok(vec![p_inlet; x_samples.len()]);
    }
    let law = grid.law;
    let geom = grid.geom;
    let slope = move |_x: f64, p: f64| match law.rho_of_p(p) {
        Ok(rho) => friction_source(&geom, rho, c_q),
        Err(_) => f64::NAN,
    };
    let p_max = law.p_max();
    let solver = Dopri5::new(1e-12);
    solver
        .solve(slope, |p| p > 0.0 && p < p_max, 0.0, p_inlet, x_samples)
        .map_err(|_| SchemeError::NonPhysicalProfile { cell: 0, p: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn pipe_grid(n: usize) -> PipeGrid {
        let geom = PipeGeometry::new(3000.0, 0.762, 0.0178).unwrap();
        PipeGrid::new(geom, PressureLaw::isothermal(383.0735).unwrap(), n).unwrap()
    }

    fn affine_grid(n: usize) -> PipeGrid {
        let geom = PipeGeometry::new(3000.0, 0.762, 0.0178).unwrap();
        PipeGrid::new(geom, PressureLaw::affine(383.0735, -2e-8).unwrap(), n).unwrap()
    }

    fn random_state(grid: &PipeGrid, seed: u64) -> PipeState {
        let mut rng = StdRng::seed_from_u64(seed);
        PipeState {
            p: (0..grid.points()).map(|_| rng.gen_range(40e5..80e5)).collect(),
            q: (0..grid.points()).map(|_| rng.gen_range(-200.0..200.0)).collect(),
        }
    }

    fn all_rows(scheme: Scheme, grid: &PipeGrid, s: &PipeState) -> SemiDiscreteRows {
        rhs(scheme, grid, s, &SchemeOptions::default()).unwrap()
    }

    #[test]
    fn row_counts_and_placeholders() {
        let grid = pipe_grid(6);
        let s = random_state(&grid, 1);
        for scheme in Scheme::ALL {
            let rows = all_rows(scheme, &grid, &s);
            assert_eq!(rows.rows.len(), 2 * grid.points());
            assert_eq!(rows.count_differential(), 2 * grid.n);
            assert_eq!(rows.rows[0], Row::Placeholder(EndSlot::Inlet));
            assert_eq!(rows.rows[2 * grid.n + 1], Row::Placeholder(EndSlot::Outlet));
            for r in rows.rows.iter().filter_map(|r| match r {
                Row::Differential(d) => Some(d),
                _ => None,
            }) {
                assert!(r.mass.iter().any(|&(_, w)| w != 0.0));
            }
        }
    }

    #[test]
    fn constant_state_without_flow_is_at_rest() {
        let grid = pipe_grid(8);
        let s = PipeState::uniform(&grid, 60e5, 0.0);
        for scheme in Scheme::ALL {
            let rows = all_rows(scheme, &grid, &s);
            for slot in 0..rows.rows.len() {
                assert_eq!(rows.rhs(slot), 0.0, "{scheme} slot {slot}");
            }
        }
    }

    #[test]
    fn stencils_stay_within_neighbours() {
        // perturbing cell j may only change rows in slots of cells j-1..=j+1
        let grid = affine_grid(7);
        let base = random_state(&grid, 3);
        for scheme in Scheme::ALL {
            let r0 = all_rows(scheme, &grid, &base);
            for j in 0..grid.points() {
                for var in [P, Q] {
                    let mut s = base.clone();
                    if var == P {
                        s.p[j] *= 1.0 + 1e-6;
                    } else {
                        s.q[j] += 1.0;
                    }
                    let r1 = all_rows(scheme, &grid, &s);
                    for slot in 0..r0.rows.len() {
                        let cell = slot / 2;
                        if r0.rows[slot] != r1.rows[slot] {
                            assert!(cell.abs_diff(j) <= 1, "{scheme}: slot {slot} depends on cell {j}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn midpoint_pressure_rows_couple_two_entries() {
        let grid = pipe_grid(5);
        let s = random_state(&grid, 4);
        let rows = all_rows(Scheme::Mid, &grid, &s);
        let c2 = 383.0735f64 * 383.0735;
        for i in 0..grid.n {
            let r = rows.differential(idx(i + 1, P)).unwrap();
            assert_eq!(r.mass.len(), 2);
            for &(_, w) in &r.mass {
                assert!((w - 0.5 / c2).abs() < 1e-20);
            }
        }
    }

    #[test]
    fn endpoint_is_one_sided() {
        let grid = pipe_grid(5);
        let base = random_state(&grid, 5);
        let mut s = base.clone();
        s.q[2] += 10.0;
        let r0 = all_rows(Scheme::End, &grid, &base);
        let r1 = all_rows(Scheme::End, &grid, &s);
        assert_eq!(r0.rhs(idx(1, P)), r1.rhs(idx(1, P)));
    }

    #[test]
    fn staggered_schemes_reject_two_intervals() {
        let grid = pipe_grid(2);
        let s = PipeState::uniform(&grid, 50e5, 10.0);
        assert!(rhs_midpoint(&grid, &s, &SchemeOptions::default()).is_err());
        assert!(rhs_endpoint(&grid, &s, &SchemeOptions::default()).is_err());
        assert!(rhs_new(&grid, &s, &SchemeOptions::default()).is_ok());
        assert!(PipeGrid::new(grid.geom, grid.law, 1).is_err());
    }

    #[test]
    fn invalid_state_is_rejected() {
        let grid = pipe_grid(4);
        let mut s = PipeState::uniform(&grid, 50e5, 10.0);
        s.p[2] = -1.0;
        assert!(matches!(
            rhs_new(&grid, &s, &SchemeOptions::default()),
            Err(SchemeError::InvalidState { cell: 2, .. })
        ));
    }

    #[test]
    fn source_weight_sets() {
        assert_eq!(source_weights(SourceQuadrature::Midpoint), [0.0, 1.0, 0.0]);
        let s = source_weights(SourceQuadrature::Simpson);
        assert_eq!(s, [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]);
        for w in [s, source_weights(SourceQuadrature::Midpoint)] {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_values() {
        let grid = pipe_grid(30); // dx = 100 m
        let s = PipeState::uniform(&grid, 50e5, 0.0);
        let dt = cfl_dt([(&grid, &s)]).unwrap();
        assert!((dt - 0.261_046_6).abs() < 1e-7);

        let geom = PipeGeometry::new(3000.0, 0.5, 0.01).unwrap();
        let g1 = PipeGrid::new(geom, PressureLaw::isothermal(100.0).unwrap(), 30).unwrap();
        let g2 = PipeGrid::new(geom, PressureLaw::isothermal(200.0).unwrap(), 30).unwrap();
        let s1 = PipeState::uniform(&g1, 1e5, 0.0);
        let s2 = PipeState::uniform(&g2, 1e5, 0.0);
        assert!((cfl_dt([(&g1, &s1), (&g2, &s2)]).unwrap() - 0.5).abs() < 1e-15);

        let ga = affine_grid(20);
        let sa = random_state(&ga, 9);
        let mut brute = f64::INFINITY;
        for &p in &sa.p {
            let rho = ga.law.rho_of_p(p).unwrap();
            brute = brute.min(ga.dx / ga.law.lambda_of_rho(rho).unwrap());
        }
        assert_eq!(cfl_dt([(&ga, &sa)]).unwrap(), brute);
    }

    #[test]
    fn discrete_profile_basics() {
        let grid = pipe_grid(6);
        let alt = discrete_steady_profile(&grid, 0.0, 50e5, 49e5).unwrap();
        for (i, &p) in alt.p.iter().enumerate() {
            assert_eq!(p, if i % 2 == 0 { 50e5 } else { 49e5 });
        }
        let flat = discrete_steady_profile(&grid, 0.0, 50e5, 50e5).unwrap();
        assert!(flat.p.iter().all(|&p| p == 50e5));
        assert!(discrete_steady_profile(&grid, 1e5, 1e3, 1e3).is_err());
        assert!(discrete_steady_profile(&affine_grid(6), 150.0, 50e5, 50e5).is_err());
    }

    #[test]
    fn discrete_profile_is_stationary_for_new_scheme() {
        let grid = pipe_grid(30);
        let f0 = friction_source(&grid.geom, 155e5 / (383.0735f64 * 383.0735), 150.0);
        let s = discrete_steady_profile(&grid, 150.0, 155e5, 155e5 + grid.dx * f0).unwrap();
        let rows = rhs_new(&grid, &s, &SchemeOptions::default()).unwrap();
        let scale = 155e5;
        for i in 1..grid.n {
            assert!(rows.rhs(idx(i, P)).abs() <= 10.0 * f64::EPSILON * scale, "p row {i}");
            assert!(rows.rhs(idx(i, Q)).abs() <= 10.0 * f64::EPSILON * scale, "q row {i}");
        }
    }

    #[test]
    fn continuous_profile_matches_isothermal_closed_form() {
        let grid = pipe_grid(30);
        let xs: Vec<f64> = (0..=30).map(|i| grid.x(i)).collect();
        let ps = continuous_steady_profile(&grid, 150.0, 155e5, &xs).unwrap();
        let g = &grid.geom;
        let c2 = 383.0735f64 * 383.0735;
        let k = g.friction * c2 * 150.0 * 150.0 / (2.0 * g.diameter * g.area * g.area);
        for (x, p) in xs.iter().zip(&ps) {
            let exact = (155e5f64 * 155e5 - 2.0 * k * x).sqrt();
            assert!(((p - exact) / exact).abs() < 1e-8);
        }
        for w in ps.windows(2) {
            assert!(w[1] < w[0]);
        }
        let flat = continuous_steady_profile(&grid, 0.0, 155e5, &xs).unwrap();
        assert!(flat.iter().all(|&p| p == 155e5));
        // a huge flux drives the pressure to zero inside the pipe
        assert!(continuous_steady_profile(&grid, 5e4, 10e5, &xs).is_err());
    }
}

//! Directed pipe networks, their coupling conditions and the assembly of the
//! network-wide differential-algebraic system
//!
//! ```text
//! E(u) u̇ = F(u, t)        (differential rows, from the per-pipe schemes)
//!      0 = A(u, t)        (boundary pins and junction coupling)
//! ```
//!
//! State layout: pipes in declaration order, grid points in order within a
//! pipe, and `p` before `q` at each point, i.e. `offset_k + 2 i + var`. Row
//! `r` of the system sits in the slot of unknown `r`.
//!
//! Each pipe end contributes one placeholder row, which the assembly fills
//! with an algebraic relation of the node the end is attached to:
//!
//! - pressure node: `p_end - p_BC(t)`;
//! - flux node of degree one: `q_end - q_BC(t)` (flux in pipe direction);
//! - junction of degree `d`: `d - 1` pressure equalities against the end of
//!   the pipe with the smallest id, plus `Σ_in q_n - Σ_out q_0`;
//! - flux node of larger degree: as a junction, with the balance equal to
//!   the withdrawn flux `q_BC(t)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use arrayvec::ArrayVec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::newton::{least_squares_step, ColumnGroups, Factorization};
use crate::scenario_io::Signal;
use crate::schemes::{self, EndSlot, PipeGrid, PipeState, Row, Scheme, SchemeError, SchemeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("boundary node '{0}' has no signal")]
    MissingSignal(String),
    #[error("assembly produced {rows} rows for {unknowns} unknowns")]
    CountMismatch { rows: usize, unknowns: usize },
    #[error("state vector has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("steady solve did not converge after {iterations} iterations (update norm {update:.3e})")]
    SteadyNoConvergence { iterations: usize, update: f64 },
    #[error("steady solve hit a singular Jacobian")]
    Singular,
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Junction,
    Pressure,
    Flux,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub signal: Option<Signal>,
}

impl Node {
    pub fn junction(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Junction,
            signal: None,
        }
    }

    pub fn pressure(id: impl Into<String>, signal: Signal) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Pressure,
            signal: Some(signal),
        }
    }

    pub fn flux(id: impl Into<String>, signal: Signal) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Flux,
            signal: Some(signal),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    pub grid: PipeGrid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNode(String),
    DuplicatePipe(String),
    UnknownNode { pipe: String, node: String },
    SelfLoop(String),
    IsolatedNode(String),
    DanglingJunction(String),
    NoPressureAnchor,
    Disconnected { components: usize },
    SignalOnJunction(String),
    SignalUnit { node: String, expected: &'static str },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateNode(id) => write!(f, "duplicate node id '{id}'"),
            Violation::DuplicatePipe(id) => write!(f, "duplicate pipe id '{id}'"),
            Violation::UnknownNode { pipe, node } => write!(f, "pipe '{pipe}' references unknown node '{node}'"),
            Violation::SelfLoop(id) => write!(f, "pipe '{id}' starts and ends at the same node"),
            Violation::IsolatedNode(id) => write!(f, "node '{id}' has no pipes"),
            Violation::DanglingJunction(id) => write!(f, "junction '{id}' has degree 1 (needs a boundary condition)"),
            Violation::NoPressureAnchor => write!(f, "no pressure boundary node"),
            Violation::Disconnected { components } => write!(f, "network has {components} disconnected components"),
            Violation::SignalOnJunction(id) => write!(f, "junction '{id}' carries a signal"),
            Violation::SignalUnit { node, expected } => write!(f, "signal of node '{node}' must be a {expected}"),
        }
    }
}

/// Which end of a pipe touches a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipeEnd {
    pub pipe: usize,
    pub end: EndSlot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
}

impl Network {
    pub fn new(nodes: Vec<Node>, pipes: Vec<Pipe>) -> Self {
        Self { nodes, pipes }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|p| p.id == id)
    }

    /// Pipes ending at node `v` (δ⁻).
    pub fn incoming(&self, v: usize) -> Vec<usize> {
        let id = &self.nodes[v].id;
        (0..self.pipes.len()).filter(|&k| &self.pipes[k].to == id).collect()
    }

    /// Pipes starting at node `v` (δ⁺).
    pub fn outgoing(&self, v: usize) -> Vec<usize> {
        let id = &self.nodes[v].id;
        (0..self.pipes.len()).filter(|&k| &self.pipes[k].from == id).collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incoming(v).len() + self.outgoing(v).len()
    }

    /// Pipe ends at node `v`, the pipe with the smallest id first.
    pub fn ends(&self, v: usize) -> Vec<PipeEnd> {
        let mut ends: Vec<PipeEnd> = self
            .incoming(v)
            .into_iter()
            .map(|pipe| PipeEnd {
                pipe,
                end: EndSlot::Outlet,
            })
            .chain(self.outgoing(v).into_iter().map(|pipe| PipeEnd {
                pipe,
                end: EndSlot::Inlet,
            }))
            .collect();
        ends.sort_by(|a, b| {
            self.pipes[a.pipe]
                .id
                .cmp(&self.pipes[b.pipe].id)
                .then((a.end == EndSlot::Inlet).cmp(&(b.end == EndSlot::Inlet)))
        });
        ends
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                out.push(Violation::DuplicateNode(n.id.clone()));
            }
        }
        let mut seen_pipes = HashSet::new();
        for p in &self.pipes {
            if !seen_pipes.insert(p.id.as_str()) {
                out.push(Violation::DuplicatePipe(p.id.clone()));
            }
            for node in [&p.from, &p.to] {
                if !seen.contains(node.as_str()) {
                    out.push(Violation::UnknownNode {
                        pipe: p.id.clone(),
                        node: node.clone(),
                    });
                }
            }
            if p.from == p.to {
                out.push(Violation::SelfLoop(p.id.clone()));
            }
        }
        for (v, n) in self.nodes.iter().enumerate() {
            let deg = self.degree(v);
            if deg == 0 {
                out.push(Violation::IsolatedNode(n.id.clone()));
            }
            match n.kind {
                NodeKind::Junction => {
                    if deg == 1 {
                        out.push(Violation::DanglingJunction(n.id.clone()));
                    }
                    if n.signal.is_some() {
                        out.push(Violation::SignalOnJunction(n.id.clone()));
                    }
                }
                NodeKind::Pressure => {
                    if n.signal.as_ref().is_some_and(|s| !s.is_pressure()) {
                        out.push(Violation::SignalUnit {
                            node: n.id.clone(),
                            expected: "pressure",
                        });
                    }
                }
                NodeKind::Flux => {
                    if n.signal.as_ref().is_some_and(|s| s.is_pressure()) {
                        out.push(Violation::SignalUnit {
                            node: n.id.clone(),
                            expected: "mass flux",
                        });
                    }
                }
            }
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Pressure) {
            out.push(Violation::NoPressureAnchor);
        }
        let components = self.components();
        if components > 1 {
            out.push(Violation::Disconnected { components });
        }
        out
    }

    /// Number of weakly connected components (union-find over known nodes).
    fn components(&self) -> usize {
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for p in &self.pipes {
            if let (Some(&a), Some(&b)) = (index.get(p.from.as_str()), index.get(p.to.as_str())) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Invalid(v))
        }
    }
}

fn end_values(state: &PipeState, end: EndSlot) -> (f64, f64) {
    match end {
        EndSlot::Inlet => (state.p[0], state.q[0]),
        EndSlot::Outlet => (*state.p.last().unwrap(), *state.q.last().unwrap()),
    }
}

/// Coupling residuals at node `v`: `deg - 1` pressure differences against
/// the reference end followed by the flux balance `Σ_in q_n - Σ_out q_0`.
pub fn coupling_residual(network: &Network, states: &[PipeState], v: usize) -> Vec<f64> {
    let ends = network.ends(v);
    let Some(first) = ends.first() else {
        return Vec::new();
    };
    let p_ref = end_values(&states[first.pipe], first.end).0;
    let mut out: Vec<f64> = ends[1..]
        .iter()
        .map(|e| end_values(&states[e.pipe], e.end).0 - p_ref)
        .collect();
    let balance = ends
        .iter()
        .map(|e| {
            let q = end_values(&states[e.pipe], e.end).1;
            if e.end == EndSlot::Outlet {
                q
            } else {
                -q
            }
        })
        .sum();
    out.push(balance);
    out
}

/// Global index map `pipe → point → {p, q}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    offsets: Vec<usize>,
    points: Vec<usize>,
    len: usize,
}

impl StateLayout {
    pub fn new(grids: &[PipeGrid]) -> Self {
        let mut offsets = Vec::with_capacity(grids.len());
        let mut points = Vec::with_capacity(grids.len());
        let mut len = 0;
        for g in grids {
            offsets.push(len);
            points.push(g.points());
            len += 2 * g.points();
        }
        Self { offsets, points, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn offset(&self, pipe: usize) -> usize {
        self.offsets[pipe]
    }

    pub fn points(&self, pipe: usize) -> usize {
        self.points[pipe]
    }

    pub fn p(&self, pipe: usize, i: usize) -> usize {
        self.offsets[pipe] + 2 * i
    }

    pub fn q(&self, pipe: usize, i: usize) -> usize {
        self.offsets[pipe] + 2 * i + 1
    }

    /// Index of the placeholder slot of a pipe end (`p_0` or `q_n`).
    pub fn end_slot(&self, end: PipeEnd) -> usize {
        match end.end {
            EndSlot::Inlet => self.p(end.pipe, 0),
            EndSlot::Outlet => self.q(end.pipe, self.points[end.pipe] - 1),
        }
    }

    /// `(pipe, local index)` of a global index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let pipe = self.offsets.partition_point(|&o| o <= global) - 1;
        (pipe, global - self.offsets[pipe])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Zero,
    Signal(usize),
}

/// Linear algebraic row `Σ w_j u_j - target(t) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub row: usize,
    pub terms: Vec<(usize, f64)>,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Differential { pipe: usize, slot: usize },
    Algebraic(usize),
}

/// Evaluated differential rows: mass coefficients (global indices) and
/// right-hand sides, with empty entries on algebraic rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffEval {
    pub mass: Vec<ArrayVec<(usize, f64), 2>>,
    pub rhs: DVector<f64>,
}

impl DiffEval {
    /// `E(u) v` restricted to differential rows.
    pub fn mass_times(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.mass.len(),
            self.mass.iter().map(|m| m.iter().map(|&(j, w)| w * v[j]).sum()),
        )
    }
}

/// Assembled network DAE.
#[derive(Debug, Clone)]
pub struct Dae {
    pub network: Network,
    pub scheme: Scheme,
    pub options: SchemeOptions,
    pub layout: StateLayout,
    pub constraints: Vec<Constraint>,
    pub signals: Vec<Signal>,
    pub row_kinds: Vec<RowKind>,
    /// Node of each signal, for reporting.
    pub signal_nodes: Vec<String>,
}

pub fn assemble_dae(network: &Network, scheme: Scheme, options: SchemeOptions) -> Result<Dae> {
    network.ensure_valid()?;
    let grids: Vec<PipeGrid> = network.pipes.iter().map(|p| p.grid).collect();
    let layout = StateLayout::new(&grids);
    let mut constraints = Vec::new();
    let mut signals = Vec::new();
    let mut signal_nodes = Vec::new();

    for (v, node) in network.nodes.iter().enumerate() {
        let ends = network.ends(v);
        let slots: Vec<usize> = ends.iter().map(|&e| layout.end_slot(e)).collect();
        let p_of = |e: &PipeEnd| match e.end {
            EndSlot::Inlet => layout.p(e.pipe, 0),
            EndSlot::Outlet => layout.p(e.pipe, layout.points(e.pipe) - 1),
        };
        let q_of = |e: &PipeEnd| match e.end {
            EndSlot::Inlet => layout.q(e.pipe, 0),
            EndSlot::Outlet => layout.q(e.pipe, layout.points(e.pipe) - 1),
        };
        let mut signal_target = || -> Result<Target> {
            let s = node
                .signal
                .clone()
                .ok_or_else(|| NetworkError::MissingSignal(node.id.clone()))?;
            signals.push(s);
            signal_nodes.push(node.id.clone());
            Ok(Target::Signal(signals.len() - 1))
        };
        match node.kind {
            NodeKind::Pressure => {
                let target = signal_target()?;
                for (e, &row) in ends.iter().zip(&slots) {
                    constraints.push(Constraint {
                        row,
                        terms: vec![(p_of(e), 1.0)],
                        target,
                    });
                }
            }
            NodeKind::Flux if ends.len() == 1 => {
                let target = signal_target()?;
                constraints.push(Constraint {
                    row: slots[0],
                    terms: vec![(q_of(&ends[0]), 1.0)],
                    target,
                });
            }
            NodeKind::Flux | NodeKind::Junction => {
                let target = if node.kind == NodeKind::Flux {
                    signal_target()?
                } else {
                    Target::Zero
                };
                let reference = p_of(&ends[0]);
                let balance = ends
                    .iter()
                    .map(|e| (q_of(e), if e.end == EndSlot::Outlet { 1.0 } else { -1.0 }))
                    .collect();
                constraints.push(Constraint {
                    row: slots[0],
                    terms: balance,
                    target,
                });
                for (e, &row) in ends.iter().zip(&slots).skip(1) {
                    constraints.push(Constraint {
                        row,
                        terms: vec![(p_of(e), 1.0), (reference, -1.0)],
                        target: Target::Zero,
                    });
                }
            }
        }
    }

    let mut row_kinds: Vec<Option<RowKind>> = vec![None; layout.len()];
    for (ci, c) in constraints.iter().enumerate() {
        row_kinds[c.row] = Some(RowKind::Algebraic(ci));
    }
    // fill the remaining rows from a representative evaluation of each scheme
    for (k, grid) in grids.iter().enumerate() {
        let probe = PipeState::uniform(grid, 1e5_f64.min(0.5 * grid.law.p_max()), 0.0);
        let rows = schemes::rhs(scheme, grid, &probe, &options)?;
        for (slot, row) in rows.rows.iter().enumerate() {
            let global = layout.offset(k) + slot;
            match (row, row_kinds[global]) {
                (Row::Differential(_), None) => row_kinds[global] = Some(RowKind::Differential { pipe: k, slot }),
                (Row::Placeholder(_), Some(RowKind::Algebraic(_))) => {}
                _ => {
                    return Err(NetworkError::CountMismatch {
                        rows: row_kinds.iter().filter(|r| r.is_some()).count(),
                        unknowns: layout.len(),
                    })
                }
            }
        }
    }
    let row_kinds: Vec<RowKind> = row_kinds.into_iter().map(|r| r.expect("every slot assigned")).collect();
    Ok(Dae {
        network: network.clone(),
        scheme,
        options,
        layout,
        constraints,
        signals,
        row_kinds,
        signal_nodes,
    })
}

impl Dae {
    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    pub fn grids(&self) -> impl Iterator<Item = &PipeGrid> {
        self.network.pipes.iter().map(|p| &p.grid)
    }

    pub fn n_algebraic(&self) -> usize {
        self.constraints.len()
    }

    pub fn n_differential(&self) -> usize {
        self.len() - self.n_algebraic()
    }

    fn check_len(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.len() {
            return Err(NetworkError::StateLength {
                got: u.len(),
                expected: self.len(),
            });
        }
        Ok(())
    }

    pub fn pipe_state(&self, u: &DVector<f64>, k: usize) -> PipeState {
        let off = self.layout.offset(k);
        let pts = self.layout.points(k);
        PipeState {
            p: (0..pts).map(|i| u[off + 2 * i]).collect(),
            q: (0..pts).map(|i| u[off + 2 * i + 1]).collect(),
        }
    }

    pub fn split(&self, u: &DVector<f64>) -> Vec<PipeState> {
        (0..self.network.pipes.len()).map(|k| self.pipe_state(u, k)).collect()
    }

    pub fn join(&self, states: &[PipeState]) -> DVector<f64> {
        let mut u = DVector::zeros(self.len());
        for (k, s) in states.iter().enumerate() {
            for i in 0..s.p.len() {
                u[self.layout.p(k, i)] = s.p[i];
                u[self.layout.q(k, i)] = s.q[i];
            }
        }
        u
    }

    /// Spatially uniform state.
    pub fn uniform_state(&self, p: f64, q: f64) -> DVector<f64> {
        let states: Vec<PipeState> = self.grids().map(|g| PipeState::uniform(g, p, q)).collect();
        self.join(&states)
    }

    pub fn evaluate(&self, u: &DVector<f64>) -> Result<DiffEval> {
        self.check_len(u)?;
        let mut mass = vec![ArrayVec::new(); self.len()];
        let mut rhs = DVector::zeros(self.len());
        for (k, pipe) in self.network.pipes.iter().enumerate() {
            let off = self.layout.offset(k);
            let rows = schemes::rhs(self.scheme, &pipe.grid, &self.pipe_state(u, k), &self.options)?;
            for (slot, row) in rows.rows.into_iter().enumerate() {
                let g = off + slot;
                if let (Row::Differential(d), RowKind::Differential { .. }) = (row, self.row_kinds[g]) {
                    mass[g] = d.mass.iter().map(|&(j, w)| (off + j, w)).collect();
                    rhs[g] = d.rhs;
                }
            }
        }
        Ok(DiffEval { mass, rhs })
    }

    pub fn target(&self, c: &Constraint, t: f64) -> f64 {
        match c.target {
            Target::Zero => 0.0,
            Target::Signal(s) => self.signals[s].value_si(t),
        }
    }

    pub fn target_rate(&self, c: &Constraint, t: f64) -> f64 {
        match c.target {
            Target::Zero => 0.0,
            Target::Signal(s) => self.signals[s].derivative_si(t),
        }
    }

    /// `A(u, t)` in constraint order.
    pub fn algebraic_residual(&self, u: &DVector<f64>, t: f64) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.terms.iter().map(|&(j, w)| w * u[j]).sum::<f64>() - self.target(c, t))
            .collect()
    }

    /// Magnitude scale of each constraint row, used to judge residuals.
    pub fn constraint_scale(&self, c: &Constraint, u: &DVector<f64>, t: f64) -> f64 {
        c.terms.iter().map(|&(j, w)| (w * u[j]).abs()).sum::<f64>() + self.target(c, t).abs()
    }

    /// Column groups for finite-difference Jacobians of the differential
    /// rows: colour `(i mod 3)·2 + var`, shared across pipes because every
    /// row only reads its own pipe's points `i-1..=i+1`.
    pub(crate) fn column_groups(&self) -> ColumnGroups {
        let mut groups = vec![Vec::new(); 6];
        for k in 0..self.network.pipes.len() {
            for i in 0..self.layout.points(k) {
                groups[(i % 3) * 2].push(self.layout.p(k, i));
                groups[(i % 3) * 2 + 1].push(self.layout.q(k, i));
            }
        }
        let rows = self
            .row_kinds
            .iter()
            .enumerate()
            .filter_map(|(r, kind)| match *kind {
                RowKind::Differential { pipe, slot } => {
                    let center = slot / 2;
                    let last = self.layout.points(pipe) - 1;
                    let cols = (0..6)
                        .map(|g| {
                            let (cell_class, var) = (g / 2, g % 2);
                            (center.saturating_sub(1)..=(center + 1).min(last))
                                .find(|c| c % 3 == cell_class)
                                .map(|c| self.layout.offset(pipe) + 2 * c + var)
                        })
                        .collect();
                    Some((r, cols))
                }
                RowKind::Algebraic(_) => None,
            })
            .collect();
        ColumnGroups { groups, rows }
    }

    /// Per-unknown magnitude used for perturbations and weighted norms:
    /// `max p` for pressures, `a · max p / λ` for fluxes.
    pub fn variable_scales(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut scales = vec![1.0; self.len()];
        let p_scale = (0..self.len())
            .step_by(2)
            .map(|j| u[j].abs())
            .fold(0.0, f64::max)
            .max(1.0);
        for (k, pipe) in self.network.pipes.iter().enumerate() {
            let law = &pipe.grid.law;
            let lambda = law
                .rho_of_p(p_scale.min(0.5 * law.p_max()))
                .and_then(|r| law.lambda_of_rho(r))
                .unwrap_or(law.c_ref());
            let q_scale = pipe.grid.geom.area * p_scale / lambda;
            for i in 0..self.layout.points(k) {
                scales[self.layout.p(k, i)] = p_scale;
                scales[self.layout.q(k, i)] = q_scale;
            }
        }
        scales
    }

    /// Rows of `[E; ∂A/∂u]`: mass coefficients on differential rows,
    /// constraint coefficients on algebraic rows.
    pub fn index1_matrix(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let eval = self.evaluate(u)?;
        let mut m = DMatrix::zeros(self.len(), self.len());
        for (r, kind) in self.row_kinds.iter().enumerate() {
            match *kind {
                RowKind::Differential { .. } => {
                    for &(j, w) in &eval.mass[r] {
                        m[(r, j)] += w;
                    }
                }
                RowKind::Algebraic(ci) => {
                    for &(j, w) in &self.constraints[ci].terms {
                        m[(r, j)] += w;
                    }
                }
            }
        }
        Ok(m)
    }

    /// Whether the algebraic rows can be solved for the algebraic unknowns
    /// together with the mass rows at `u`.
    pub fn is_index1(&self, u: &DVector<f64>) -> Result<bool> {
        Ok(Factorization::new(self.index1_matrix(u)?).is_some())
    }

    /// Copy of the system in which the differential rows in the `q_0` and
    /// `p_n` slots of every pipe are replaced by pins to their values in `u`.
    pub fn freeze_endpoints(&self, u: &DVector<f64>) -> Result<Dae> {
        self.check_len(u)?;
        let mut out = self.clone();
        for k in 0..self.network.pipes.len() {
            let last = self.layout.points(k) - 1;
            for j in [self.layout.q(k, 0), self.layout.p(k, last)] {
                if let RowKind::Differential { .. } = out.row_kinds[j] {
                    out.signals.push(Signal::constant_si(u[j], j % 2 == 0));
                    out.signal_nodes.push(format!("frozen:{j}"));
                    out.constraints.push(Constraint {
                        row: j,
                        terms: vec![(j, 1.0)],
                        target: Target::Signal(out.signals.len() - 1),
                    });
                    out.row_kinds[j] = RowKind::Algebraic(out.constraints.len() - 1);
                }
            }
        }
        Ok(out)
    }

    /// Largest relative junction residuals `(pressure, flux)` over all
    /// junction nodes: pressure differences relative to the largest
    /// pressure, flux balances relative to `1 + Σ|q|` at the node.
    pub fn junction_residuals(&self, u: &DVector<f64>) -> (f64, f64) {
        let states = self.split(u);
        let mut worst = (0.0f64, 0.0f64);
        for (v, node) in self.network.nodes.iter().enumerate() {
            if node.kind != NodeKind::Junction {
                continue;
            }
            let res = coupling_residual(&self.network, &states, v);
            let ends = self.network.ends(v);
            let p_max = ends
                .iter()
                .map(|e| end_values(&states[e.pipe], e.end).0.abs())
                .fold(0.0, f64::max);
            let q_sum: f64 = ends.iter().map(|e| end_values(&states[e.pipe], e.end).1.abs()).sum();
            let (flux, pressures) = res.split_last().expect("junction has residuals");
            for dp in pressures {
                worst.0 = worst.0.max(dp.abs() / p_max.max(1.0));
            }
            worst.1 = worst.1.max(flux.abs() / (1.0 + q_sum));
        }
        worst
    }

    /// Largest relative violation of any algebraic row at time `t`.
    pub fn constraint_violation(&self, u: &DVector<f64>, t: f64) -> f64 {
        let res = self.algebraic_residual(u, t);
        self.constraints
            .iter()
            .zip(res)
            .map(|(c, r)| r.abs() / (1.0 + self.constraint_scale(c, u, t)))
            .fold(0.0, f64::max)
    }

    /// Pressure of the first pressure node at `t`.
    pub fn anchor_pressure(&self, t: f64) -> f64 {
        self.constraints
            .iter()
            .find_map(|c| match c.target {
                Target::Signal(s) if self.signals[s].is_pressure() => Some(self.signals[s].value_si(t)),
                _ => None,
            })
            .expect("validated network has a pressure node")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub state: DVector<f64>,
    pub iterations: usize,
}

/// `[F(u); A(u, t)]` laid out row by row.
fn steady_residual(dae: &Dae, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let eval = dae.evaluate(u)?;
    let mut g = eval.rhs;
    for (c, r) in dae.constraints.iter().zip(dae.algebraic_residual(u, t)) {
        g[c.row] = r;
    }
    Ok(g)
}

fn steady_jacobian(dae: &Dae, u: &DVector<f64>, g: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(dae.len(), dae.len());
    for c in &dae.constraints {
        for &(col, w) in &c.terms {
            j[(c.row, col)] += w;
        }
    }
    let scales = dae.variable_scales(u);
    let h: Vec<f64> = (0..dae.len())
        .map(|k| 1e-7 * u[k].abs().max(1e-3 * scales[k]))
        .collect();
    crate::newton::grouped_fd_jacobian(u, g, &h, &dae.column_groups(), |v| steady_residual(dae, v, t), &mut j)?;
    Ok(j)
}

/// Weighted max-norm `max_j |δ_j| / (|u_j| + 1e-3 · scale_j)`.
pub(crate) fn weighted_norm(delta: &DVector<f64>, u: &DVector<f64>, scales: &[f64]) -> f64 {
    delta
        .iter()
        .zip(u.iter())
        .zip(scales)
        .map(|((d, x), s)| d.abs() / (x.abs() + 1e-3 * s))
        .fold(0.0, f64::max)
}

fn admissible(dae: &Dae, u: &DVector<f64>) -> bool {
    dae.network.pipes.iter().enumerate().all(|(k, pipe)| {
        let p_max = pipe.grid.law.p_max();
        (0..dae.layout.points(k)).all(|i| {
            let p = u[dae.layout.p(k, i)];
            let q = u[dae.layout.q(k, i)];
            p > 0.0 && p < p_max && q.is_finite()
        })
    })
}

/// Solves `F(u, t0) = 0, A(u, t0) = 0` by damped Newton from the state with
/// every pressure at the anchor pressure and zero flux. Where the Jacobian
/// is singular (closed loops carry no flow at the initial guess) a
/// regularized least-squares step is taken instead.
pub fn steady_solve(dae: &Dae, t0: f64, opts: SteadyOptions) -> Result<SteadySolution> {
    let p0 = dae.anchor_pressure(t0);
    steady_solve_from(dae, t0, dae.uniform_state(p0, 0.0), opts).or_else(|e| {
        // retry with a small uniform flow to break flow-reversal symmetry
        steady_solve_from(dae, t0, dae.uniform_state(p0, 1e-3), opts).map_err(|_| e)
    })
}

pub fn steady_solve_from(dae: &Dae, t0: f64, mut u: DVector<f64>, opts: SteadyOptions) -> Result<SteadySolution> {
    let mut g = steady_residual(dae, &u, t0)?;
    if g.iter().all(|&r| r == 0.0) {
        return Ok(SteadySolution {
            state: u,
            iterations: 0,
        });
    }
    let mut last_update = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let j = steady_jacobian(dae, &u, &g, t0)?;
        // row weights from the Jacobian make the merit function unit-free
        let row_w: Vec<f64> = (0..dae.len())
            .map(|r| 1.0 / j.row(r).amax().max(f64::MIN_POSITIVE))
            .collect();
        let merit = |g: &DVector<f64>| g.iter().zip(&row_w).map(|(r, w)| (r * w).powi(2)).sum::<f64>();
        let delta = match Factorization::new(j.clone()).and_then(|f| f.solve(&(-&g))) {
            Some(d) => d,
            None => {
                let jw = DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| j[(r, c)] * row_w[r]);
                let gw = DVector::from_fn(g.len(), |r, _| g[r] * row_w[r]);
                least_squares_step(&jw, &gw, 1e-10).ok_or(NetworkError::Singular)?
            }
        };
        let scales = dae.variable_scales(&u);
        let m0 = merit(&g);
        let mut step = 1.0;
        loop {
            let trial = &u + &delta * step;
            if admissible(dae, &trial) {
                if let Ok(gt) = steady_residual(dae, &trial, t0) {
                    if merit(&gt) <= m0 || step < 1e-3 {
                        u = trial;
                        g = gt;
                        break;
                    }
                }
            }
            step *= 0.5;
            if step < 1e-6 {
                return Err(NetworkError::SteadyNoConvergence {
                    iterations: it,
                    update: last_update,
                });
            }
        }
        last_update = weighted_norm(&(&delta * step), &u, &scales);
        if last_update <= opts.tol && step == 1.0 {
            return Ok(SteadySolution {
                state: u,
                iterations: it,
            });
        }
    }
    Err(NetworkError::SteadyNoConvergence {
        iterations: opts.max_iter,
        update: last_update,
    })
}

/// Pipe ids in canonical order, for deterministic reporting.
pub fn pipe_order(network: &Network) -> BTreeMap<String, usize> {
    network
        .pipes
        .iter()
        .enumerate()
        .map(|(k, p)| (p.id.clone(), k))
        .collect()
}

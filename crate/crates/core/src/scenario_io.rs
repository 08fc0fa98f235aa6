//! Network and scenario files, built-in benchmark cases and CSV output.
//!
//! Network file (JSON; pressures in bar at the interface):
//!
//! ```json
//! {
//!   "gas": {"law": "isothermal", "c": 383.0735, "alpha": 0.0},
//!   "nodes": [
//!     {"id": "in", "type": "pressure",
//!      "signal": {"unit": "bar", "interp": "pconst", "points": [[0, 75], [10, 70]]}},
//!     {"id": "out", "type": "flux",
//!      "signal": {"unit": "kg_per_s", "interp": "pconst", "points": [[0, 150]]}}
//!   ],
//!   "pipes": [{"id": "P1", "from": "in", "to": "out", "length_m": 3000,
//!              "diameter_m": 0.762, "friction": 0.0178, "cells": 30}]
//! }
//! ```
//!
//! `alpha` is in 1/Pa; pipes may override the cross-section with `area_m2`.
//! Scenario files reference a network by path (relative to the scenario
//! file) or embed it, and add `t_end_s`, `output_dt_s`, `init`, `scheme`,
//! scheme options, `integrator` settings and per-node `signals` that replace
//! the signals of the network file.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gas_model::{LawKind, PipeGeometry, PressureLaw};
use crate::integrate::{IntegratorConfig, Trajectory};
use crate::network::{Network, Node, NodeKind, Pipe};
use crate::schemes::{EigSum, PipeGrid, Scheme, SchemeOptions, SourceQuadrature};

pub const PA_PER_BAR: f64 = 1e5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("syntax error in {what} at line {line}, column {column}: {message}")]
    Syntax {
        what: &'static str,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Semantic(String),
    #[error("invalid network: {0}")]
    Network(#[from] crate::network::NetworkError),
    #[error("unknown built-in case '{0}' (expected one of {list})", list = BUILTIN_CASES.join(", "))]
    UnknownCase(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalUnit {
    Bar,
    Pa,
    KgPerS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Pconst,
    Linear,
}

/// Boundary time signal; evaluation holds the first/last value outside the
/// sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalSpec", into = "SignalSpec")]
pub struct Signal {
    unit: SignalUnit,
    interp: Interp,
    points: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalSpec {
    unit: SignalUnit,
    interp: Interp,
    points: Vec<(f64, f64)>,
}

impl TryFrom<SignalSpec> for Signal {
    type Error = String;

    fn try_from(s: SignalSpec) -> std::result::Result<Self, String> {
        Signal::new(s.unit, s.interp, s.points)
    }
}

impl From<Signal> for SignalSpec {
    fn from(s: Signal) -> Self {
        SignalSpec {
            unit: s.unit,
            interp: s.interp,
            points: s.points,
        }
    }
}

impl Signal {
    pub fn new(unit: SignalUnit, interp: Interp, points: Vec<(f64, f64)>) -> std::result::Result<Self, String> {
        if points.is_empty() {
            return Err("signal needs at least one point".into());
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err("signal points must be finite".into());
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("signal times must be strictly increasing".into());
        }
        Ok(Self { unit, interp, points })
    }

    pub fn constant(unit: SignalUnit, value: f64) -> Self {
        Self {
            unit,
            interp: Interp::Pconst,
            points: vec![(0.0, value)],
        }
    }

    /// Constant in SI units: Pa if `pressure`, else kg/s.
    pub fn constant_si(value: f64, pressure: bool) -> Self {
        Self::constant(if pressure { SignalUnit::Pa } else { SignalUnit::KgPerS }, value)
    }

    /// Step from `before` to `after` at `t_jump`.
    pub fn step(unit: SignalUnit, before: f64, after: f64, t_jump: f64) -> Self {
        Self {
            unit,
            interp: Interp::Pconst,
            points: vec![(0.0, before), (t_jump, after)],
        }
    }

    pub fn unit(&self) -> SignalUnit {
        self.unit
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_pressure(&self) -> bool {
        matches!(self.unit, SignalUnit::Bar | SignalUnit::Pa)
    }

    fn to_si(&self) -> f64 {
        if self.unit == SignalUnit::Bar {
            PA_PER_BAR
        } else {
            1.0
        }
    }

    /// Value in the signal's own unit.
    pub fn value(&self, t: f64) -> f64 {
        let pts = &self.points;
        let k = pts.partition_point(|&(ti, _)| ti <= t);
        if k == 0 {
            return pts[0].1;
        }
        if k == pts.len() {
            return pts[k - 1].1;
        }
        match self.interp {
            Interp::Pconst => pts[k - 1].1,
            Interp::Linear => {
                let ((t0, v0), (t1, v1)) = (pts[k - 1], pts[k]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn value_si(&self, t: f64) -> f64 {
        self.value(t) * self.to_si()
    }

    /// Time derivative in SI units (zero for piecewise constant signals and
    /// outside the sampled range).
    pub fn derivative_si(&self, t: f64) -> f64 {
        let pts = &self.points;
        let k = pts.partition_point(|&(ti, _)| ti <= t);
        if self.interp == Interp::Pconst || k == 0 || k == pts.len() {
            return 0.0;
        }
        let ((t0, v0), (t1, v1)) = (pts[k - 1], pts[k]);
        (v1 - v0) / (t1 - t0) * self.to_si()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GasSpec {
    law: LawKind,
    c: f64,
    #[serde(default)]
    alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: String,
    #[serde(rename = "type")]
    kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signal: Option<Signal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeSpec {
    id: String,
    from: String,
    to: String,
    length_m: f64,
    diameter_m: f64,
    friction: f64,
    cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area_m2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    gas: GasSpec,
    nodes: Vec<NodeSpec>,
    pipes: Vec<PipeSpec>,
}

fn syntax(what: &'static str, e: serde_json::Error) -> ScenarioError {
    ScenarioError::Syntax {
        what,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn network_from_file(file: NetworkFile) -> Result<Network> {
    let law = PressureLaw::new(file.gas.law, file.gas.c, file.gas.alpha)
        .map_err(|e| ScenarioError::Semantic(format!("gas: {e}")))?;
    let nodes = file
        .nodes
        .into_iter()
        .map(|n| Node {
            id: n.id,
            kind: n.kind,
            signal: n.signal,
        })
        .collect();
    let mut pipes = Vec::new();
    for p in file.pipes {
        let geom = match p.area_m2 {
            Some(a) => PipeGeometry::with_area(p.length_m, p.diameter_m, p.friction, a),
            None => PipeGeometry::new(p.length_m, p.diameter_m, p.friction),
        }
        .map_err(|e| ScenarioError::Semantic(format!("pipe '{}': {e}", p.id)))?;
        let grid =
            PipeGrid::new(geom, law, p.cells).map_err(|e| ScenarioError::Semantic(format!("pipe '{}': {e}", p.id)))?;
        pipes.push(Pipe {
            id: p.id,
            from: p.from,
            to: p.to,
            grid,
        });
    }
    Ok(Network::new(nodes, pipes))
}

/// Parses and validates a network file.
pub fn parse_network(text: &str) -> Result<Network> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| syntax("network", e))?;
    let net = network_from_file(file)?;
    net.ensure_valid()?;
    Ok(net)
}

fn network_to_file(net: &Network) -> NetworkFile {
    let law = net
        .pipes
        .first()
        .map(|p| p.grid.law)
        .unwrap_or(PressureLaw::isothermal(1.0).expect("valid"));
    NetworkFile {
        gas: GasSpec {
            law: law.kind(),
            c: law.c_ref(),
            alpha: law.alpha(),
        },
        nodes: net
            .nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                kind: n.kind,
                signal: n.signal.clone(),
            })
            .collect(),
        pipes: net
            .pipes
            .iter()
            .map(|p| {
                let g = &p.grid.geom;
                let default_area = PipeGeometry::new(g.length, g.diameter, g.friction).map(|d| d.area).ok();
                PipeSpec {
                    id: p.id.clone(),
                    from: p.from.clone(),
                    to: p.to.clone(),
                    length_m: g.length,
                    diameter_m: g.diameter,
                    friction: g.friction,
                    cells: p.grid.n,
                    area_m2: (default_area != Some(g.area)).then_some(g.area),
                }
            })
            .collect(),
    }
}

/// Canonical pretty-printed network file.
pub fn print_network(net: &Network) -> String {
    serde_json::to_string_pretty(&network_to_file(net)).expect("network serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum InitSpec {
    Steady,
    Uniform { p_bar: f64, q_kgs: f64 },
}

/// Initial-condition policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Solve for the steady state of the boundary data at `t = 0`.
    Steady,
    Uniform {
        p_pa: f64,
        q_kgs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NetworkRef {
    Path(String),
    Inline(NetworkFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    network: NetworkRef,
    t_end_s: f64,
    output_dt_s: f64,
    init: InitSpec,
    #[serde(default = "default_scheme")]
    scheme: Scheme,
    #[serde(default)]
    source: SourceQuadrature,
    #[serde(default)]
    eig_sum: EigSum,
    #[serde(default)]
    verbatim_source: bool,
    #[serde(default)]
    integrator: IntegratorConfig,
    #[serde(default)]
    signals: BTreeMap<String, Signal>,
}

fn default_scheme() -> Scheme {
    Scheme::New
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: Network,
    pub t_end: f64,
    pub output_dt: f64,
    pub init: Init,
    pub scheme: Scheme,
    pub options: SchemeOptions,
    pub integrator: IntegratorConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.network.ensure_valid()?;
        for n in &self.network.nodes {
            if n.kind != NodeKind::Junction && n.signal.is_none() {
                return Err(ScenarioError::Semantic(format!(
                    "boundary node '{}' has no signal",
                    n.id
                )));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ScenarioError::Semantic(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.output_dt > 0.0) {
            return Err(ScenarioError::Semantic(format!(
                "output_dt must be positive, got {}",
                self.output_dt
            )));
        }
        if let Init::Uniform { p_pa, q_kgs } = self.init {
            if !(p_pa > 0.0 && q_kgs.is_finite()) {
                return Err(ScenarioError::Semantic(
                    "uniform initial pressure must be positive".into(),
                ));
            }
        }
        self.integrator
            .validate()
            .map_err(|e| ScenarioError::Semantic(e.to_string()))
    }
}

/// Parses a scenario file; relative network paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| syntax("scenario", e))?;
    let mut network = match file.network {
        NetworkRef::Inline(n) => network_from_file(n)?,
        NetworkRef::Path(p) => {
            let path = base_dir.join(p);
            let text = read_text(&path)?;
            let net: NetworkFile = serde_json::from_str(&text).map_err(|e| syntax("network", e))?;
            network_from_file(net)?
        }
    };
    for (id, signal) in file.signals {
        let node = network
            .nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| ScenarioError::Semantic(format!("signal for unknown node '{id}'")))?;
        node.signal = Some(signal);
    }
    let init = match file.init {
        InitSpec::Steady => Init::Steady,
        InitSpec::Uniform { p_bar, q_kgs } => Init::Uniform {
            p_pa: p_bar * PA_PER_BAR,
            q_kgs,
        },
    };
    let scenario = Scenario {
        name: file.name.unwrap_or_else(|| "scenario".into()),
        network,
        t_end: file.t_end_s,
        output_dt: file.output_dt_s,
        init,
        scheme: file.scheme,
        options: SchemeOptions {
            source: file.source,
            eig_sum: file.eig_sum,
            verbatim_source: file.verbatim_source,
        },
        integrator: file.integrator,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn print_scenario(s: &Scenario) -> String {
    let file = ScenarioFile {
        name: Some(s.name.clone()),
        network: NetworkRef::Inline(network_to_file(&s.network)),
        t_end_s: s.t_end,
        output_dt_s: s.output_dt,
        init: match s.init {
            Init::Steady => InitSpec::Steady,
            Init::Uniform { p_pa, q_kgs } => InitSpec::Uniform {
                p_bar: p_pa / PA_PER_BAR,
                q_kgs,
            },
        },
        scheme: s.scheme,
        source: s.options.source,
        eig_sum: s.options.eig_sum,
        verbatim_source: s.options.verbatim_source,
        integrator: s.integrator,
        signals: BTreeMap::new(),
    };
    serde_json::to_string_pretty(&file).expect("scenario serializes")
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const BUILTIN_CASES: [&str; 5] = ["pipe_step", "pipe_wave", "pipe_steady", "diamond_step", "tree46_step"];

const PIPE_LENGTH: f64 = 3000.0;
const PIPE_DIAMETER: f64 = 0.762;
const PIPE_FRICTION: f64 = 0.0178;
const PIPE_C: f64 = 383.0735;

fn single_pipe(inlet: Signal, outlet: Signal, cells: usize) -> Network {
    let geom = PipeGeometry::new(PIPE_LENGTH, PIPE_DIAMETER, PIPE_FRICTION).expect("valid geometry");
    let law = PressureLaw::isothermal(PIPE_C).expect("valid law");
    let grid = PipeGrid::new(geom, law, cells).expect("valid grid");
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

/// Double diamond: `S → 1`, two parallel branches `1 → {2,3} → 4`, two more
/// `4 → {5,6} → 7`; supply `S`, demand `7`.
fn diamond(demand: Signal) -> Network {
    let law = PressureLaw::isothermal(673.7021).expect("valid law");
    let geom = PipeGeometry::new(1000.0, 1.0, 0.0196).expect("valid geometry");
    let edges = [
        ("S", "1"),
        ("1", "2"),
        ("1", "3"),
        ("2", "4"),
        ("3", "4"),
        ("4", "5"),
        ("4", "6"),
        ("5", "7"),
        ("6", "7"),
    ];
    let mut nodes = vec![Node::pressure("S", Signal::constant(SignalUnit::Bar, 70.0))];
    nodes.extend(["1", "2", "3", "4", "5", "6"].map(Node::junction));
    nodes.push(Node::flux("7", demand));
    let pipes = edges
        .iter()
        .enumerate()
        .map(|(k, (from, to))| Pipe {
            id: format!("P{}", k + 1),
            from: (*from).into(),
            to: (*to).into(),
            grid: PipeGrid::new(geom, law, 10).expect("valid grid"),
        })
        .collect();
    Network::new(nodes, pipes)
}

/// 46-node stand-in for the realistic network: a binary tree rooted at the
/// supply node `1`, which feeds node `2`; node `k ≥ 2` feeds `2k-1` and
/// `2k`. That yields 22 interior junctions (2..=23) and 23 demand leaves
/// (24..=46). The topology is synthetic; only the node count and the
/// 23 demand leaves are meant to be representative.
fn tree46(demand: Signal) -> Network {
    let law = PressureLaw::isothermal(383.0545).expect("valid law");
    let geom = PipeGeometry::new(10_000.0, 0.6, 0.0454).expect("valid geometry");
    let mut nodes = vec![Node::pressure("1", Signal::constant(SignalUnit::Bar, 800.0))];
    for k in 2..=46usize {
        if 2 * k <= 46 {
            nodes.push(Node::junction(k.to_string()));
        } else {
            nodes.push(Node::flux(k.to_string(), demand.clone()));
        }
    }
    let pipes = (2..=46usize)
        .map(|child| {
            let parent = if child == 2 { 1 } else { child.div_ceil(2) };
            Pipe {
                id: format!("P{:02}", child - 1),
                from: parent.to_string(),
                to: child.to_string(),
                grid: PipeGrid::new(geom, law, 10).expect("valid grid"),
            }
        })
        .collect();
    Network::new(nodes, pipes)
}

/// Fully parameterized benchmark scenario by name.
pub fn builtin_case(name: &str) -> Result<Scenario> {
    let base = |name: &str, network, t_end, output_dt, init, dt| Scenario {
        name: name.into(),
        network,
        t_end,
        output_dt,
        init,
        scheme: Scheme::New,
        options: SchemeOptions::default(),
        integrator: IntegratorConfig::with_dt(dt),
    };
    let s = match name {
        "pipe_step" => base(
            name,
            single_pipe(
                Signal::step(SignalUnit::Bar, 75.0, 70.0, 10.0),
                Signal::constant(SignalUnit::KgPerS, 150.0),
                30,
            ),
            300.0,
            1.0,
            Init::Steady,
            0.1,
        ),
        "pipe_wave" => {
            let flux = [150.0, 200.0, 250.0, 200.0, 150.0, 100.0, 150.0];
            let points = flux.iter().enumerate().map(|(k, &q)| (1000.0 * k as f64, q)).collect();
            let outlet = Signal::new(SignalUnit::KgPerS, Interp::Pconst, points).expect("valid signal");
            base(
                name,
                single_pipe(Signal::constant(SignalUnit::Bar, 75.0), outlet, 30),
                7000.0,
                10.0,
                Init::Steady,
                1.0,
            )
        }
        "pipe_steady" => base(
            name,
            single_pipe(
                Signal::constant(SignalUnit::Bar, 155.0),
                Signal::constant(SignalUnit::KgPerS, 150.0),
                60,
            ),
            1e4,
            1.0,
            Init::Uniform {
                p_pa: 155.0 * PA_PER_BAR,
                q_kgs: 150.0,
            },
            1.0,
        ),
        "diamond_step" => base(
            name,
            diamond(Signal::step(SignalUnit::KgPerS, 30.0, 40.0, 10.0)),
            300.0,
            1.0,
            Init::Steady,
            0.1,
        ),
        "tree46_step" => base(
            name,
            tree46(Signal::step(SignalUnit::KgPerS, 0.0, 40.0, 10.0)),
            1800.0,
            10.0,
            Init::Uniform {
                p_pa: 800.0 * PA_PER_BAR,
                q_kgs: 0.0,
            },
            1.0,
        ),
        other => return Err(ScenarioError::UnknownCase(other.into())),
    };
    Ok(s)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t_s: f64,
    pub pipe_id: String,
    pub cell_index: usize,
    pub x_m: f64,
    pub p_pa: f64,
    pub q_kgs: f64,
}

pub const CSV_HEADER: [&str; 6] = ["t_s", "pipe_id", "cell_index", "x_m", "p_pa", "q_kgs"];

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes every snapshot ordered by (time, pipe id, grid point); returns the
/// number of data rows.
pub fn write_csv<W: Write>(traj: &Trajectory, dest: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(dest);
    w.write_record(CSV_HEADER)?;
    let mut order: Vec<usize> = (0..traj.pipe_ids.len()).collect();
    order.sort_by(|&a, &b| traj.pipe_ids[a].cmp(&traj.pipe_ids[b]));
    let mut rows = 0;
    for (s, &t) in traj.times.iter().enumerate() {
        for &k in &order {
            for (i, &x) in traj.xs[k].iter().enumerate() {
                w.write_record([
                    sci(t),
                    traj.pipe_ids[k].clone(),
                    i.to_string(),
                    sci(x),
                    sci(traj.pressure(s, k, i)),
                    sci(traj.flux(s, k, i)),
                ])?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(|e| ScenarioError::Csv(e.into()))?;
    Ok(rows)
}

pub fn write_csv_file(traj: &Trajectory, path: &Path) -> Result<usize> {
    let file = std::fs::File::create(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(traj, std::io::BufWriter::new(file))
}

pub fn read_csv<R: Read>(src: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(src);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(ScenarioError::Semantic(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}

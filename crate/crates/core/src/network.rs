//! Networks of simulators and belief propagation through them.
//!
//! A network is a DAG over nodes `1..w`. Node inputs are wired either to a
//! coordinate of the root input `z` or to an output of an earlier node, and
//! a wire may only run from a lower node id to a higher one. Each node is
//! modelled by a trained emulator or by an exact function. Propagation
//! evaluates nodes in topological order, handing each node the second-order
//! belief assembled from its incoming wires.
//!
//! JSON form (indices are 1-based):
//!
//! ```json
//! {"root_dim": 1,
//!  "nodes": [{"id": 1, "p": 1, "q": 1, "model": "builtin:f1"},
//!            {"id": 2, "p": 1, "q": 1, "model": "emulator:f2.json"}],
//!  "wires": [{"from": "z:1", "to": "1:1"}, {"from": "1:out:1", "to": "2:1"}],
//!  "terminal": 2}
//! ```
//!
//! Sources are `z:r`, `i:out:k` or the shorthand `i:k`; targets are `j:s`.
//! Longer forms such as `1:1:out:1` read the node from the first field and
//! the output from the last.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::SecondOrderBelief;
use crate::emulator::{train, Design, Emulator, FitConfig, RegressionBasis};
use crate::error::{Error, Result};
use crate::testbed::BuiltinFunction;
use crate::uible::{uible_predict, UncertainInput};
use crate::uis::{stream_id, uis_evaluate, uis_predict_stream, SamplingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    /// 0-based root coordinate.
    Root(usize),
    /// Node id (1-based) and 0-based output index.
    Node { node: usize, output: usize },
}

/// Node id (1-based) and 0-based input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Target {
    pub node: usize,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wire {
    pub from: Source,
    pub to: Target,
}

impl Wire {
    /// Root coordinate `r` (1-based) into `node:slot` (1-based).
    pub fn root(r: usize, node: usize, slot: usize) -> Self {
        Self {
            from: Source::Root(r - 1),
            to: Target { node, slot: slot - 1 },
        }
    }

    /// Output `k` of node `i` into `node:slot`, all 1-based.
    pub fn link(i: usize, k: usize, node: usize, slot: usize) -> Self {
        Self {
            from: Source::Node { node: i, output: k - 1 },
            to: Target { node, slot: slot - 1 },
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Root(r) => write!(f, "z:{}", r + 1),
            Source::Node { node, output } => write!(f, "{node}:out:{}", output + 1),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.slot + 1)
    }
}

fn parse_index(s: &str, what: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("{what} `{s}` is not a positive integer")),
    }
}

fn parse_source(s: &str) -> std::result::Result<Source, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["z", r] => Ok(Source::Root(parse_index(r, "root coordinate")? - 1)),
        [node, .., output] if parts.len() >= 2 => Ok(Source::Node {
            node: parse_index(node, "source node")?,
            output: parse_index(output, "source output")? - 1,
        }),
        _ => Err(format!("cannot parse wire source `{s}`")),
    }
}

fn parse_target(s: &str) -> std::result::Result<Target, String> {
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [node, slot] => Ok(Target {
            node: parse_index(node, "target node")?,
            slot: parse_index(slot, "target slot")? - 1,
        }),
        _ => Err(format!("cannot parse wire target `{s}` (expected node:slot)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub p: usize,
    pub q: usize,
    /// `emulator:<path>` or `builtin:<name>`.
    pub model: String,
}

/// Structure of a simulator network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct NetworkSpec {
    pub root_dim: usize,
    pub nodes: Vec<NodeSpec>,
    pub wires: Vec<Wire>,
    pub terminal: Vec<usize>,
    /// Native bounds of `z`, used for direct emulation.
    pub root_bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Terminal {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawWire {
    from: String,
    to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    root_dim: usize,
    nodes: Vec<NodeSpec>,
    wires: Vec<RawWire>,
    terminal: Terminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root_bounds: Option<Vec<(f64, f64)>>,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        let wires = raw
            .wires
            .iter()
            .map(|w| {
                Ok(Wire {
                    from: parse_source(&w.from)?,
                    to: parse_target(&w.to)?,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        Ok(NetworkSpec {
            root_dim: raw.root_dim,
            nodes: raw.nodes,
            wires,
            terminal: match raw.terminal {
                Terminal::One(t) => vec![t],
                Terminal::Many(ts) => ts,
            },
            root_bounds: raw.root_bounds,
        })
    }
}

impl From<NetworkSpec> for RawSpec {
    fn from(spec: NetworkSpec) -> Self {
        RawSpec {
            root_dim: spec.root_dim,
            nodes: spec.nodes,
            wires: spec
                .wires
                .iter()
                .map(|w| RawWire {
                    from: w.from.to_string(),
                    to: w.to.to_string(),
                })
                .collect(),
            terminal: if spec.terminal.len() == 1 {
                Terminal::One(spec.terminal[0])
            } else {
                Terminal::Many(spec.terminal)
            },
            root_bounds: spec.root_bounds,
        }
    }
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn node(&self, id: usize) -> Option<&NodeSpec> {
        id.checked_sub(1).and_then(|i| self.nodes.get(i)).filter(|n| n.id == id)
    }

    /// Incoming source of every slot, indexed `[node - 1][slot]`.
    fn slot_sources(&self) -> Vec<Vec<Source>> {
        let mut out: Vec<Vec<Option<Source>>> =
            self.nodes.iter().map(|n| vec![None; n.p]).collect();
        for w in &self.wires {
            if let Some(slot) = out
                .get_mut(w.to.node.wrapping_sub(1))
                .and_then(|s| s.get_mut(w.to.slot))
            {
                *slot = Some(w.from);
            }
        }
        out.into_iter()
            .map(|s| s.into_iter().map(|x| x.expect("validated")).collect())
            .collect()
    }

    /// Dimension of the terminal output.
    pub fn terminal_dim(&self) -> usize {
        self.terminal
            .iter()
            .filter_map(|&t| self.node(t))
            .map(|n| n.q)
            .sum()
    }
}

/// Checks every structural invariant and returns the evaluation order.
/// All violations are reported together.
pub fn validate(spec: &NetworkSpec) -> Result<Vec<usize>> {
    let mut errors = Vec::new();
    if spec.root_dim == 0 {
        errors.push("root_dim must be at least 1".to_string());
    }
    if let Some(b) = &spec.root_bounds {
        if b.len() != spec.root_dim {
            errors.push(format!(
                "root_bounds has {} entries for root_dim {}",
                b.len(),
                spec.root_dim
            ));
        }
        for (r, (lo, hi)) in b.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                errors.push(format!("root bound {} is ({lo}, {hi})", r + 1));
            }
        }
    }
    if spec.nodes.is_empty() {
        errors.push("network has no nodes".to_string());
    }
    for (i, n) in spec.nodes.iter().enumerate() {
        if n.id != i + 1 {
            errors.push(format!(
                "node at position {} has id {}; ids must be 1..w in order",
                i + 1,
                n.id
            ));
        }
        if n.p == 0 || n.q == 0 {
            errors.push(format!("node {} needs p >= 1 and q >= 1", n.id));
        }
    }
    let w = spec.nodes.len();
    let mut incoming: Vec<Vec<usize>> = spec.nodes.iter().map(|n| vec![0; n.p]).collect();
    let mut edges = BTreeSet::new();
    for wire in &spec.wires {
        let label = format!("wire {} -> {}", wire.from, wire.to);
        let target = spec.node(wire.to.node);
        match target {
            None => errors.push(format!("{label}: target node {} does not exist", wire.to.node)),
            Some(t) if wire.to.slot >= t.p => errors.push(format!(
                "{label}: node {} has only {} input slots",
                t.id, t.p
            )),
            Some(_) => incoming[wire.to.node - 1][wire.to.slot] += 1,
        }
        match wire.from {
            Source::Root(r) if r >= spec.root_dim => errors.push(format!(
                "{label}: root has only {} coordinates",
                spec.root_dim
            )),
            Source::Root(_) => {}
            Source::Node { node, output } => match spec.node(node) {
                None => errors.push(format!("{label}: source node {node} does not exist")),
                Some(s) => {
                    if output >= s.q {
                        errors.push(format!("{label}: node {node} has only {} outputs", s.q));
                    }
                    if node >= wire.to.node {
                        errors.push(format!(
                            "{label}: wires must run from a lower node id to a higher one"
                        ));
                    }
                    if wire.to.node <= w {
                        edges.insert((node, wire.to.node));
                    }
                }
            },
        }
    }
    for (i, slots) in incoming.iter().enumerate() {
        for (s, &count) in slots.iter().enumerate() {
            match count {
                1 => {}
                0 => errors.push(format!("input slot {}:{} is not wired", i + 1, s + 1)),
                c => errors.push(format!("input slot {}:{} has {c} incoming wires", i + 1, s + 1)),
            }
        }
    }
    if spec.terminal.is_empty() {
        errors.push("no terminal node".to_string());
    }
    for &t in &spec.terminal {
        if spec.node(t).is_none() {
            errors.push(format!("terminal node {t} does not exist"));
        }
    }

    // Kahn's algorithm, lowest ready id first.
    let mut indegree = vec![0usize; w + 1];
    for &(_, to) in &edges {
        indegree[to] += 1;
    }
    let mut ready: BTreeSet<usize> = (1..=w).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(w);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &(from, to) in edges.range((i, 0)..(i + 1, 0)) {
            debug_assert_eq!(from, i);
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.insert(to);
            }
        }
    }
    if order.len() < w {
        let stuck: Vec<String> = (1..=w)
            .filter(|i| !order.contains(i))
            .map(|i| i.to_string())
            .collect();
        errors.push(format!("cycle through nodes {}", stuck.join(", ")));
    }

    if errors.is_empty() {
        Ok(order)
    } else {
        Err(Error::InvalidNetwork(errors))
    }
}

type ExactFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A cheap simulator evaluated directly.
#[derive(Clone)]
pub struct ExactFunction {
    pub name: String,
    pub p: usize,
    pub q: usize,
    f: Arc<ExactFn>,
}

impl ExactFunction {
    pub fn new(
        name: impl Into<String>,
        p: usize,
        q: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            p,
            q,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                context: "exact function input",
                expected: self.p,
                actual: x.len(),
            });
        }
        let y = (self.f)(x);
        if y.len() != self.q {
            return Err(Error::DimensionMismatch {
                context: "exact function output",
                expected: self.q,
                actual: y.len(),
            });
        }
        Ok(DVector::from_vec(y))
    }
}

impl fmt::Debug for ExactFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExactFunction({}, {} -> {})", self.name, self.p, self.q)
    }
}

impl From<BuiltinFunction> for ExactFunction {
    fn from(b: BuiltinFunction) -> Self {
        ExactFunction::new(b.name(), b.input_dim(), 1, move |x| vec![b.evaluate(x)])
    }
}

/// How a node is modelled.
#[derive(Debug, Clone)]
pub enum NodeModel {
    Emulator(Emulator),
    Exact(ExactFunction),
}

impl NodeModel {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            NodeModel::Emulator(e) => (e.p(), e.q()),
            NodeModel::Exact(f) => (f.p, f.q),
        }
    }

    /// Resolves `builtin:<name>` or `emulator:<path>` (relative to `base`).
    pub fn resolve(reference: &str, base: &Path) -> Result<Self> {
        match reference.split_once(':') {
            Some(("builtin", name)) => Ok(NodeModel::Exact(name.parse::<BuiltinFunction>()?.into())),
            Some(("emulator", path)) => Ok(NodeModel::Emulator(Emulator::load(&base.join(path))?)),
            _ => Err(Error::InvalidArgument(format!(
                "model reference `{reference}` must be builtin:<name> or emulator:<path>"
            ))),
        }
    }
}

/// Resolves every node's model reference.
pub fn load_models(spec: &NetworkSpec, base: &Path) -> Result<Vec<NodeModel>> {
    spec.nodes
        .iter()
        .map(|n| NodeModel::resolve(&n.model, base))
        .collect()
}

/// Linking method for emulated nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Uis(SamplingPolicy),
    Uible,
}

/// Beliefs produced by one propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Terminal outputs, concatenated over terminal nodes.
    pub terminal: SecondOrderBelief,
    /// Output belief of every node, indexed by `id - 1`.
    pub nodes: Vec<SecondOrderBelief>,
    /// Input-driven part of each UIS node's variance, when UIS was used.
    pub var_from_input: Vec<Option<DMatrix<f64>>>,
    /// Exact-function nodes that received uncertain inputs and were sampled.
    pub sampled_exact: Vec<usize>,
    /// Nodes whose input mean (or some UIS draw) left the training box.
    pub extrapolated: Vec<usize>,
    /// UIS nodes where uniform sampling fell back to normal.
    pub fell_back: Vec<usize>,
}

/// A validated network with a model for each node.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    models: Vec<NodeModel>,
    order: Vec<usize>,
    sources: Vec<Vec<Source>>,
    /// Policy used to sample exact functions at uncertain inputs when the
    /// method is UIBLE.
    pub exact_policy: SamplingPolicy,
}

impl Network {
    pub fn new(spec: NetworkSpec, models: Vec<NodeModel>) -> Result<Self> {
        let order = validate(&spec)?;
        if models.len() != spec.nodes.len() {
            return Err(Error::DimensionMismatch {
                context: "network models",
                expected: spec.nodes.len(),
                actual: models.len(),
            });
        }
        let mut errors = Vec::new();
        for (n, m) in spec.nodes.iter().zip(&models) {
            let (p, q) = m.dims();
            if (p, q) != (n.p, n.q) {
                errors.push(format!(
                    "node {} declares {} -> {} but its model maps {p} -> {q}",
                    n.id, n.p, n.q
                ));
            }
        }
        if !errors.is_empty() {
            return Err(Error::InvalidNetwork(errors));
        }
        let sources = spec.slot_sources();
        Ok(Self {
            spec,
            models,
            order,
            sources,
            exact_policy: SamplingPolicy::default(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn models(&self) -> &[NodeModel] {
        &self.models
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Replaces one node's model, keeping the structure.
    pub fn with_model(mut self, id: usize, model: NodeModel) -> Result<Self> {
        let n = self.spec.node(id).ok_or_else(|| {
            Error::InvalidArgument(format!("node {id} does not exist"))
        })?;
        if model.dims() != (n.p, n.q) {
            return Err(Error::InvalidNetwork(vec![format!(
                "replacement model for node {id} has the wrong dimensions"
            )]));
        }
        self.models[id - 1] = model;
        Ok(self)
    }

    fn check_root(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.spec.root_dim {
            return Err(Error::DimensionMismatch {
                context: "root input",
                expected: self.spec.root_dim,
                actual: z.len(),
            });
        }
        Ok(())
    }

    fn node_input(&self, id: usize, z: &[f64], beliefs: &[Option<SecondOrderBelief>]) -> UncertainInput {
        let sources = &self.sources[id - 1];
        let p = sources.len();
        let mut mean = DVector::zeros(p);
        let mut cov = DMatrix::zeros(p, p);
        for (s, src) in sources.iter().enumerate() {
            match *src {
                Source::Root(r) => mean[s] = z[r],
                Source::Node { node, output } => {
                    let b = beliefs[node - 1].as_ref().expect("topological order");
                    mean[s] = b.mean[output];
                    for (t, other) in sources.iter().enumerate() {
                        if let Source::Node { node: n2, output: o2 } = *other {
                            if n2 == node {
                                cov[(s, t)] = b.covariance[(output, o2)];
                            }
                        }
                    }
                }
            }
        }
        UncertainInput { mean, covariance: cov }
    }

    /// Propagates a root input through the network. `point` addresses the
    /// RNG streams of any sampling, so results do not depend on the order in
    /// which points are processed.
    pub fn propagate(&self, z: &[f64], method: &Method, point: usize) -> Result<Propagation> {
        self.check_root(z)?;
        let w = self.spec.nodes.len();
        let mut beliefs: Vec<Option<SecondOrderBelief>> = vec![None; w];
        let mut var_from_input = vec![None; w];
        let mut sampled_exact = Vec::new();
        let mut extrapolated = Vec::new();
        let mut fell_back = Vec::new();
        for &id in &self.order {
            let xi = self.node_input(id, z, &beliefs);
            let stream = stream_id(point, id);
            let known = xi.is_known();
            let belief = match (&self.models[id - 1], known) {
                (NodeModel::Exact(f), true) => SecondOrderBelief::point(f.eval(xi.mean.as_slice())?),
                (NodeModel::Exact(f), false) => {
                    let policy = match method {
                        Method::Uis(p) => *p,
                        Method::Uible => self.exact_policy,
                    };
                    let (r, _) = uis_evaluate(&xi, &policy, stream, |_| true, |x| {
                        Ok(SecondOrderBelief::point(f.eval(x)?))
                    })?;
                    sampled_exact.push(id);
                    if r.fell_back {
                        fell_back.push(id);
                    }
                    var_from_input[id - 1] = Some(r.var_from_input);
                    r.belief
                }
                (NodeModel::Emulator(e), true) => {
                    if e.is_extrapolation(xi.mean.as_slice()) {
                        extrapolated.push(id);
                    }
                    e.predict(xi.mean.as_slice())?
                }
                (NodeModel::Emulator(e), false) => match method {
                    Method::Uible => {
                        if e.is_extrapolation(xi.mean.as_slice()) {
                            extrapolated.push(id);
                        }
                        uible_predict(e, &xi)?
                    }
                    Method::Uis(policy) => {
                        let r = uis_predict_stream(e, &xi, policy, stream)?;
                        if r.extrapolated > 0 {
                            extrapolated.push(id);
                        }
                        if r.fell_back {
                            fell_back.push(id);
                        }
                        var_from_input[id - 1] = Some(r.var_from_input);
                        r.belief
                    }
                },
            };
            beliefs[id - 1] = Some(belief);
        }
        let nodes: Vec<SecondOrderBelief> = beliefs.into_iter().map(|b| b.expect("all nodes evaluated")).collect();
        let terminal = concat_beliefs(self.spec.terminal.iter().map(|&t| &nodes[t - 1]));
        Ok(Propagation {
            terminal,
            nodes,
            var_from_input,
            sampled_exact,
            extrapolated,
            fell_back,
        })
    }

    /// Propagates every row of `zs` (native units), in parallel. Results are
    /// in row order and independent of the thread count.
    pub fn propagate_many(&self, zs: &DMatrix<f64>, method: &Method) -> Result<Vec<Propagation>> {
        (0..zs.nrows())
            .into_par_iter()
            .map(|i| {
                let z: Vec<f64> = zs.row(i).iter().cloned().collect();
                self.propagate(&z, method, i)
            })
            .collect()
    }

    fn exact_functions(&self) -> Result<Vec<&ExactFunction>> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                NodeModel::Exact(f) => Ok(f),
                NodeModel::Emulator(_) => Err(Error::MissingExactFunction(i + 1)),
            })
            .collect()
    }

    /// The composite simulator `h(z)`, evaluated exactly. Every node must be
    /// an exact function.
    pub fn compose_truth(&self, z: &[f64]) -> Result<DVector<f64>> {
        self.check_root(z)?;
        let fs = self.exact_functions()?;
        let mut values: Vec<Option<DVector<f64>>> = vec![None; fs.len()];
        for &id in &self.order {
            let x: Vec<f64> = self.sources[id - 1]
                .iter()
                .map(|src| match *src {
                    Source::Root(r) => z[r],
                    Source::Node { node, output } => {
                        values[node - 1].as_ref().expect("topological order")[output]
                    }
                })
                .collect();
            values[id - 1] = Some(fs[id - 1].eval(&x)?);
        }
        let parts: Vec<f64> = self
            .spec
            .terminal
            .iter()
            .flat_map(|&t| values[t - 1].as_ref().expect("evaluated").iter().cloned().collect::<Vec<_>>())
            .collect();
        Ok(DVector::from_vec(parts))
    }

    /// Trains one emulator of the composite simulator on `design_z`, using
    /// exact composition to generate the training outputs.
    pub fn direct_emulate(
        &self,
        design_z: Design,
        basis: RegressionBasis,
        config: &FitConfig,
    ) -> Result<Emulator> {
        self.exact_functions()?;
        if design_z.p() != self.spec.root_dim {
            return Err(Error::DimensionMismatch {
                context: "direct emulation design",
                expected: self.spec.root_dim,
                actual: design_z.p(),
            });
        }
        let native = design_z.native();
        let rows: Vec<DVector<f64>> = (0..native.nrows())
            .into_par_iter()
            .map(|i| {
                let z: Vec<f64> = native.row(i).iter().cloned().collect();
                self.compose_truth(&z)
            })
            .collect::<Result<_>>()?;
        let q = self.spec.terminal_dim();
        let h = DMatrix::from_fn(rows.len(), q, |i, k| rows[i][k]);
        train(design_z, h, basis, config)
    }
}

fn concat_beliefs<'a>(parts: impl Iterator<Item = &'a SecondOrderBelief>) -> SecondOrderBelief {
    let parts: Vec<&SecondOrderBelief> = parts.collect();
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let q: usize = parts.iter().map(|b| b.dim()).sum();
    let mut mean = DVector::zeros(q);
    let mut cov = DMatrix::zeros(q, q);
    let mut at = 0;
    for b in parts {
        let d = b.dim();
        mean.rows_mut(at, d).copy_from(&b.mean);
        cov.view_mut((at, at), (d, d)).copy_from(&b.covariance);
        at += d;
    }
    SecondOrderBelief::from_computed(mean, cov)
}

/// The two-node chain `z -> f1 -> f2`.
pub fn chain_spec() -> NetworkSpec {
    NetworkSpec {
        root_dim: 1,
        nodes: vec![
            NodeSpec { id: 1, p: 1, q: 1, model: "builtin:f1".into() },
            NodeSpec { id: 2, p: 1, q: 1, model: "builtin:f2".into() },
        ],
        wires: vec![Wire::root(1, 1, 1), Wire::link(1, 1, 2, 1)],
        terminal: vec![2],
        root_bounds: Some(vec![(0.0, 10.0)]),
    }
}

/// The four-node network `h(z) = f4(f2(f1(z1)), f3(z2), z3)`.
pub fn network_spec() -> NetworkSpec {
    NetworkSpec {
        root_dim: 3,
        nodes: vec![
            NodeSpec { id: 1, p: 1, q: 1, model: "builtin:f1".into() },
            NodeSpec { id: 2, p: 1, q: 1, model: "builtin:f2".into() },
            NodeSpec { id: 3, p: 1, q: 1, model: "builtin:f3".into() },
            NodeSpec { id: 4, p: 3, q: 1, model: "builtin:f4".into() },
        ],
        wires: vec![
            Wire::root(1, 1, 1),
            Wire::link(1, 1, 2, 1),
            Wire::root(2, 3, 1),
            Wire::link(2, 1, 4, 1),
            Wire::link(3, 1, 4, 2),
            Wire::root(3, 4, 3),
        ],
        terminal: vec![4],
        root_bounds: Some(vec![(0.0, 10.0), (-4.0, 6.0), (1.0, 2.5)]),
    }
}

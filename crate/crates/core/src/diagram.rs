//! Open diagrams of decohered spiders.
//!
//! A [`Diagram`] is a multigraph whose vertices are weighted spiders and
//! whose boundary is an ordered list of input ports and an ordered list of
//! output ports. Spider legs are unordered, so only the underlying graph
//! matters. Every boundary port carries exactly one edge end; a bare wire is
//! an edge from an input port to an output port.
//!
//! Each node stores an explicit weight. The standard constructors fix it to
//! `2^(n-1)` for a green spider with `n` inputs and `2^(1-m)` for a red
//! spider with `m` outputs, so the node's tensor is independent of how its
//! legs are later bent around.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::f2linalg::{F2Matrix, F2Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    /// Copies its value to every leg; contributes `μ` when that value is 1.
    Green { mu: f64 },
    /// Constrains the parity of its legs; `1 - p` on even parity, `p` on odd.
    Red { p: f64 },
    /// Degree-0 multiplicative constant, valued by the node weight.
    Scalar,
}

impl NodeKind {
    pub fn is_green(&self) -> bool {
        matches!(self, NodeKind::Green { .. })
    }

    pub fn is_red(&self) -> bool {
        matches!(self, NodeKind::Red { .. })
    }

    pub fn same_color(&self, other: &NodeKind) -> bool {
        matches!(
            (self, other),
            (NodeKind::Green { .. }, NodeKind::Green { .. })
                | (NodeKind::Red { .. }, NodeKind::Red { .. })
        )
    }

    /// `μ` for green, `p` for red, `None` for scalars.
    pub fn param(&self) -> Option<f64> {
        match *self {
            NodeKind::Green { mu } => Some(mu),
            NodeKind::Red { p } => Some(p),
            NodeKind::Scalar => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Node(NodeId),
    Input(usize),
    Output(usize),
}

impl Endpoint {
    pub fn node(&self) -> Option<NodeId> {
        match *self {
            Endpoint::Node(id) => Some(id),
            _ => None,
        }
    }

    pub fn is_boundary(&self) -> bool {
        !matches!(self, Endpoint::Node(_))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Node(id) => write!(f, "{id}"),
            Endpoint::Input(i) => write!(f, "in{i}"),
            Endpoint::Output(j) => write!(f, "out{j}"),
        }
    }
}

/// A problem found by [`Diagram::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DanglingBoundary(Endpoint),
    BoundaryReused { port: Endpoint, uses: usize },
    PortOutOfRange { edge: EdgeId, port: Endpoint },
    UnknownNode { edge: EdgeId, node: NodeId },
    BoundaryLoop { edge: EdgeId },
    ParameterRange { node: NodeId, kind: NodeKind },
    Weight { node: NodeId, weight: f64 },
    ScalarDegree { node: NodeId, degree: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingBoundary(port) => write!(f, "dangling boundary: {port} has no edge"),
            Violation::BoundaryReused { port, uses } => {
                write!(f, "boundary port {port} has {uses} edge ends, expected 1")
            }
            Violation::PortOutOfRange { edge, port } => {
                write!(f, "edge {edge} uses nonexistent port {port}")
            }
            Violation::UnknownNode { edge, node } => {
                write!(f, "edge {edge} uses nonexistent node {node}")
            }
            Violation::BoundaryLoop { edge } => {
                write!(
                    f,
                    "edge {edge} joins two inputs or two outputs; use a cup or cap spider"
                )
            }
            Violation::ParameterRange { node, kind } => {
                write!(f, "parameter range: {node} has {kind:?}")
            }
            Violation::Weight { node, weight } => write!(f, "invalid weight {weight} on {node}"),
            Violation::ScalarDegree { node, degree } => {
                write!(f, "scalar {node} has degree {degree}")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagramError {
    #[error("parameter range: {0}")]
    ParameterRange(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("invalid diagram: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("edge {0} would join two inputs or two outputs")]
    BoundaryLoop(String),
}

/// An open string diagram `n → m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagram {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, (Endpoint, Endpoint)>,
    inputs: usize,
    outputs: usize,
    next_node: usize,
    next_edge: usize,
}

pub(crate) fn green_weight(inputs: usize) -> f64 {
    2f64.powi(inputs as i32 - 1)
}

pub(crate) fn red_weight(outputs: usize) -> f64 {
    2f64.powi(1 - outputs as i32)
}

fn check_mu(mu: f64) -> Result<(), DiagramError> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(DiagramError::ParameterRange(format!(
            "green parameter must be a finite mu >= 0, got {mu}"
        )))
    }
}

fn check_p(p: f64) -> Result<(), DiagramError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(DiagramError::ParameterRange(format!(
            "red parameter must be a probability, got {p}"
        )))
    }
}

impl Diagram {
    /// A diagram with the given boundary and nothing else. It only becomes
    /// valid once every port is wired.
    pub fn with_boundary(inputs: usize, outputs: usize) -> Self {
        Self {
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            inputs,
            outputs,
            next_node: 0,
            next_edge: 0,
        }
    }

    pub fn empty() -> Self {
        Self::with_boundary(0, 0)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> + '_ {
        self.nodes.iter().map(|(&id, n)| (id, n))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of green and red nodes.
    pub fn spider_count(&self) -> usize {
        self.nodes
            .values()
            .filter(|n| n.kind != NodeKind::Scalar)
            .count()
    }

    pub fn edge(&self, id: EdgeId) -> Option<(Endpoint, Endpoint)> {
        self.edges.get(&id).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, Endpoint, Endpoint)> + '_ {
        self.edges.iter().map(|(&id, &(a, b))| (id, a, b))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_node(&mut self, kind: NodeKind, weight: f64) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        self.nodes.insert(id, Node { kind, weight });
        id
    }

    pub fn add_edge(&mut self, a: Endpoint, b: Endpoint) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.edges.insert(id, (a, b));
        id
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Option<(Endpoint, Endpoint)> {
        self.edges.remove(&id)
    }

    /// Removes a node together with every edge touching it.
    pub fn remove_node(&mut self, id: NodeId) -> Option<Node> {
        let node = self.nodes.remove(&id)?;
        let target = Endpoint::Node(id);
        self.edges.retain(|_, (a, b)| *a != target && *b != target);
        Some(node)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    /// Edges touching `id`; a self-loop is listed once.
    pub fn incident_edges(&self, id: NodeId) -> Vec<EdgeId> {
        let target = Endpoint::Node(id);
        self.edges
            .iter()
            .filter(|(_, (a, b))| *a == target || *b == target)
            .map(|(&e, _)| e)
            .collect()
    }

    /// Number of leg ends on `id`; a self-loop counts twice.
    pub fn degree(&self, id: NodeId) -> usize {
        let target = Endpoint::Node(id);
        self.edges
            .values()
            .map(|(a, b)| (*a == target) as usize + (*b == target) as usize)
            .sum()
    }

    /// The endpoint of `edge` opposite to `from`.
    pub fn other_end(&self, edge: EdgeId, from: Endpoint) -> Option<Endpoint> {
        let (a, b) = self.edge(edge)?;
        if a == from {
            Some(b)
        } else if b == from {
            Some(a)
        } else {
            None
        }
    }

    /// The edge attached to a boundary port.
    pub fn boundary_edge(&self, port: Endpoint) -> Option<EdgeId> {
        self.edges
            .iter()
            .find(|(_, (a, b))| *a == port || *b == port)
            .map(|(&e, _)| e)
    }

    /// Single node with `inputs` input ports and `outputs` output ports.
    pub fn spider(kind: NodeKind, weight: f64, inputs: usize, outputs: usize) -> Self {
        let mut d = Self::with_boundary(inputs, outputs);
        let v = d.add_node(kind, weight);
        for i in 0..inputs {
            d.add_edge(Endpoint::Input(i), Endpoint::Node(v));
        }
        for j in 0..outputs {
            d.add_edge(Endpoint::Node(v), Endpoint::Output(j));
        }
        d
    }

    /// Green spider `n → m` with parameter `μ`, weight `2^(n-1)`.
    pub fn green(n: usize, m: usize, mu: f64) -> Result<Self, DiagramError> {
        check_mu(mu)?;
        Ok(Self::spider(NodeKind::Green { mu }, green_weight(n), n, m))
    }

    /// Red spider `n → m` with probability `p`, weight `2^(1-m)`.
    pub fn red(n: usize, m: usize, p: f64) -> Result<Self, DiagramError> {
        check_p(p)?;
        Ok(Self::spider(NodeKind::Red { p }, red_weight(m), n, m))
    }

    pub fn scalar(s: f64) -> Result<Self, DiagramError> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(DiagramError::ParameterRange(format!(
                "scalar must be finite and >= 0, got {s}"
            )));
        }
        let mut d = Self::empty();
        d.add_node(NodeKind::Scalar, s);
        Ok(d)
    }

    pub fn identity(n: usize) -> Self {
        Self::permutation(&(0..n).collect::<Vec<_>>()).expect("identity is a permutation")
    }

    /// Wire permutation sending input `i` to output `perm[i]`.
    pub fn permutation(perm: &[usize]) -> Result<Self, DiagramError> {
        let n = perm.len();
        let distinct: BTreeSet<_> = perm.iter().collect();
        if distinct.len() != n || perm.iter().any(|&j| j >= n) {
            return Err(DiagramError::ArityMismatch(format!(
                "{perm:?} is not a permutation"
            )));
        }
        let mut d = Self::with_boundary(n, n);
        for (i, &j) in perm.iter().enumerate() {
            d.add_edge(Endpoint::Input(i), Endpoint::Output(j));
        }
        Ok(d)
    }

    pub fn swap() -> Self {
        Self::permutation(&[1, 0]).expect("swap is a permutation")
    }

    /// `½(|00⟩ + |11⟩)`, a degree-2 green spider.
    pub fn cup() -> Self {
        Self::spider(NodeKind::Green { mu: 1.0 }, green_weight(0), 0, 2)
    }

    /// `2(⟨00| + ⟨11|)`, a degree-2 green spider.
    pub fn cap() -> Self {
        Self::spider(NodeKind::Green { mu: 1.0 }, green_weight(2), 2, 0)
    }

    /// Sequential composition: `self` then `next`.
    pub fn then(&self, next: &Diagram) -> Result<Diagram, DiagramError> {
        compose_seq(self, next)
    }

    /// Parallel composition with `other` below `self`.
    pub fn tensor(&self, other: &Diagram) -> Diagram {
        compose_par(self, other)
    }

    /// Bends every input into a trailing output with a cup. The result is
    /// `0 → (m + n)` with the original outputs first.
    pub fn bend_name(&self) -> Diagram {
        let (n, m) = (self.inputs, self.outputs);
        let mut d = self.clone();
        d.inputs = 0;
        d.outputs = m + n;
        for i in 0..n {
            let port = Endpoint::Input(i);
            let e = self
                .boundary_edge(port)
                .expect("bend_name needs a valid diagram");
            let other = self.other_end(e, port).expect("edge touches port");
            d.remove_edge(e);
            let cup = d.add_node(NodeKind::Green { mu: 1.0 }, green_weight(0));
            d.add_edge(Endpoint::Node(cup), other);
            d.add_edge(Endpoint::Node(cup), Endpoint::Output(m + i));
        }
        d
    }

    /// Bends the last `n` outputs back into new trailing inputs with caps.
    /// A cup spider left by [`Diagram::bend_name`] is spliced out instead,
    /// so `unbend(bend_name(D), n)` is isomorphic to `D`.
    pub fn unbend(&self, n: usize) -> Result<Diagram, DiagramError> {
        if n > self.outputs {
            return Err(DiagramError::ArityMismatch(format!(
                "cannot unbend {n} wires of a diagram with {} outputs",
                self.outputs
            )));
        }
        let base_in = self.inputs;
        let m = self.outputs - n;
        let mut d = self.clone();
        d.inputs = base_in + n;
        for i in 0..n {
            let port = Endpoint::Output(m + i);
            let new_port = Endpoint::Input(base_in + i);
            let e = d
                .boundary_edge(port)
                .ok_or_else(|| DiagramError::Invalid(vec![Violation::DanglingBoundary(port)]))?;
            let y = d.other_end(e, port).expect("edge touches port");
            if let Some(z) = d.bent_cup_partner(y, e) {
                if !matches!(z, Endpoint::Input(_)) {
                    d.remove_node(y.node().expect("cup is a node"));
                    d.add_edge(new_port, z);
                    continue;
                }
            }
            d.remove_edge(e);
            let cap = d.add_node(NodeKind::Green { mu: 1.0 }, green_weight(2));
            d.add_edge(y, Endpoint::Node(cap));
            d.add_edge(new_port, Endpoint::Node(cap));
        }
        d.outputs = m;
        Ok(d)
    }

    /// If `y` is a weight-½ identity green spider of degree 2 reached through
    /// `via`, the far end of its other leg.
    fn bent_cup_partner(&self, y: Endpoint, via: EdgeId) -> Option<Endpoint> {
        let id = y.node()?;
        let node = self.node(id)?;
        if node.kind != (NodeKind::Green { mu: 1.0 }) || node.weight != green_weight(0) {
            return None;
        }
        let legs = self.incident_edges(id);
        if legs.len() != 2 || self.degree(id) != 2 {
            return None;
        }
        let other = legs.into_iter().find(|&e| e != via)?;
        self.other_end(other, y)
    }

    /// Checks boundary wiring, parameter ranges and weights. Collects every
    /// violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        let mut port_uses: BTreeMap<Endpoint, usize> = BTreeMap::new();
        for (&e, &(a, b)) in &self.edges {
            for end in [a, b] {
                match end {
                    Endpoint::Node(id) if !self.nodes.contains_key(&id) => {
                        violations.push(Violation::UnknownNode { edge: e, node: id })
                    }
                    Endpoint::Input(i) if i >= self.inputs => {
                        violations.push(Violation::PortOutOfRange { edge: e, port: end })
                    }
                    Endpoint::Output(j) if j >= self.outputs => {
                        violations.push(Violation::PortOutOfRange { edge: e, port: end })
                    }
                    Endpoint::Input(_) | Endpoint::Output(_) => {
                        *port_uses.entry(end).or_default() += 1
                    }
                    Endpoint::Node(_) => {}
                }
            }
            if matches!(
                (a, b),
                (Endpoint::Input(_), Endpoint::Input(_))
                    | (Endpoint::Output(_), Endpoint::Output(_))
            ) {
                violations.push(Violation::BoundaryLoop { edge: e });
            }
        }
        let ports = (0..self.inputs)
            .map(Endpoint::Input)
            .chain((0..self.outputs).map(Endpoint::Output));
        for port in ports {
            match port_uses.get(&port).copied().unwrap_or(0) {
                0 => violations.push(Violation::DanglingBoundary(port)),
                1 => {}
                uses => violations.push(Violation::BoundaryReused { port, uses }),
            }
        }
        for (&id, node) in &self.nodes {
            let in_range = match node.kind {
                NodeKind::Green { mu } => mu.is_finite() && mu >= 0.0,
                NodeKind::Red { p } => (0.0..=1.0).contains(&p),
                NodeKind::Scalar => true,
            };
            if !in_range {
                violations.push(Violation::ParameterRange {
                    node: id,
                    kind: node.kind,
                });
            }
            let weight_ok = match node.kind {
                NodeKind::Scalar => node.weight.is_finite() && node.weight >= 0.0,
                _ => node.weight.is_finite() && node.weight > 0.0,
            };
            if !weight_ok {
                violations.push(Violation::Weight {
                    node: id,
                    weight: node.weight,
                });
            }
            if node.kind == NodeKind::Scalar {
                let degree = self.degree(id);
                if degree != 0 {
                    violations.push(Violation::ScalarDegree { node: id, degree });
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub(crate) fn ensure_valid(&self) -> Result<(), DiagramError> {
        self.validate().map_err(DiagramError::Invalid)
    }

    /// Copy with nodes and edges renumbered densely in their current order.
    pub fn compacted(&self) -> Diagram {
        let mut out = Diagram::with_boundary(self.inputs, self.outputs);
        let map: BTreeMap<NodeId, NodeId> = self
            .nodes
            .iter()
            .map(|(&id, node)| (id, out.add_node(node.kind, node.weight)))
            .collect();
        let remap = |e: Endpoint| match e {
            Endpoint::Node(id) => Endpoint::Node(map[&id]),
            other => other,
        };
        for &(a, b) in self.edges.values() {
            out.add_edge(remap(a), remap(b));
        }
        out
    }

    /// Cuts out the nodes in `site`. Edges with exactly one end in `site`
    /// become boundary ports in the order of `cut`: the first `inputs` of
    /// them inputs, the rest outputs.
    pub(crate) fn extract(
        &self,
        site: &BTreeSet<NodeId>,
        cut: &[EdgeId],
        inputs: usize,
    ) -> Diagram {
        let mut out = Diagram::with_boundary(inputs, cut.len() - inputs);
        let map: BTreeMap<NodeId, NodeId> = site
            .iter()
            .map(|&id| {
                (
                    id,
                    out.add_node(self.nodes[&id].kind, self.nodes[&id].weight),
                )
            })
            .collect();
        let inside = |e: &Endpoint| e.node().is_some_and(|id| site.contains(&id));
        let cut_set: BTreeSet<EdgeId> = cut.iter().copied().collect();
        for (&e, &(a, b)) in &self.edges {
            if inside(&a) && inside(&b) && !cut_set.contains(&e) {
                out.add_edge(
                    Endpoint::Node(map[&a.node().unwrap()]),
                    Endpoint::Node(map[&b.node().unwrap()]),
                );
            }
        }
        for (c, &e) in cut.iter().enumerate() {
            let (a, b) = self.edges[&e];
            let inner = if inside(&a) { a } else { b };
            let inner = Endpoint::Node(map[&inner.node().expect("cut edge touches the site")]);
            if c < inputs {
                out.add_edge(Endpoint::Input(c), inner);
            } else {
                out.add_edge(inner, Endpoint::Output(c - inputs));
            }
        }
        out
    }

    /// Replaces the nodes in `site` by `patch`, whose boundary ports are
    /// matched to `cut` as in [`Diagram::extract`].
    pub(crate) fn splice(
        &self,
        site: &BTreeSet<NodeId>,
        cut: &[EdgeId],
        inputs: usize,
        patch: &Diagram,
    ) -> Result<Diagram, DiagramError> {
        assert_eq!(patch.inputs, inputs);
        assert_eq!(patch.inputs + patch.outputs, cut.len());
        let inside = |e: &Endpoint| e.node().is_some_and(|id| site.contains(&id));
        let outer: Vec<Endpoint> = cut
            .iter()
            .map(|e| {
                let (a, b) = self.edges[e];
                if inside(&a) {
                    b
                } else {
                    a
                }
            })
            .collect();
        let mut out = self.clone();
        for id in site {
            out.remove_node(*id);
        }
        let map: BTreeMap<NodeId, NodeId> = patch
            .nodes
            .iter()
            .map(|(&id, node)| (id, out.add_node(node.kind, node.weight)))
            .collect();
        let resolve = |e: Endpoint| match e {
            Endpoint::Node(id) => Endpoint::Node(map[&id]),
            Endpoint::Input(i) => outer[i],
            Endpoint::Output(j) => outer[inputs + j],
        };
        for &(a, b) in patch.edges.values() {
            let (a, b) = (resolve(a), resolve(b));
            if matches!(
                (a, b),
                (Endpoint::Input(_), Endpoint::Input(_))
                    | (Endpoint::Output(_), Endpoint::Output(_))
            ) {
                return Err(DiagramError::BoundaryLoop(format!("{a}-{b}")));
            }
            // keep left-to-right orientation for boundary wires
            if matches!(a, Endpoint::Output(_)) || matches!(b, Endpoint::Input(_)) {
                out.add_edge(b, a);
            } else {
                out.add_edge(a, b);
            }
        }
        Ok(out)
    }

    /// Graph isomorphism preserving the boundary port order, node kinds,
    /// parameters and weights (compared exactly).
    pub fn is_isomorphic(&self, other: &Diagram) -> bool {
        isomorphism::isomorphic(self, other)
    }
}

/// Glues the outputs of `first` to the inputs of `second` in order.
pub fn compose_seq(first: &Diagram, second: &Diagram) -> Result<Diagram, DiagramError> {
    if first.outputs != second.inputs {
        return Err(DiagramError::ArityMismatch(format!(
            "cannot compose {}→{} with {}→{}",
            first.inputs, first.outputs, second.inputs, second.outputs
        )));
    }
    first.ensure_valid()?;
    second.ensure_valid()?;
    let mut out = Diagram::with_boundary(first.inputs, second.outputs);
    let map1: BTreeMap<NodeId, NodeId> = first
        .nodes
        .iter()
        .map(|(&id, node)| (id, out.add_node(node.kind, node.weight)))
        .collect();
    let map2: BTreeMap<NodeId, NodeId> = second
        .nodes
        .iter()
        .map(|(&id, node)| (id, out.add_node(node.kind, node.weight)))
        .collect();
    let remap1 = |e: Endpoint| match e {
        Endpoint::Node(id) => Endpoint::Node(map1[&id]),
        other => other,
    };
    let remap2 = |e: Endpoint| match e {
        Endpoint::Node(id) => Endpoint::Node(map2[&id]),
        other => other,
    };
    for &(a, b) in first.edges.values() {
        if !matches!(a, Endpoint::Output(_)) && !matches!(b, Endpoint::Output(_)) {
            out.add_edge(remap1(a), remap1(b));
        }
    }
    for &(a, b) in second.edges.values() {
        if !matches!(a, Endpoint::Input(_)) && !matches!(b, Endpoint::Input(_)) {
            out.add_edge(remap2(a), remap2(b));
        }
    }
    for j in 0..first.outputs {
        let left_port = Endpoint::Output(j);
        let right_port = Endpoint::Input(j);
        let left = first
            .other_end(
                first.boundary_edge(left_port).expect("validated"),
                left_port,
            )
            .expect("validated");
        let right = second
            .other_end(
                second.boundary_edge(right_port).expect("validated"),
                right_port,
            )
            .expect("validated");
        out.add_edge(remap1(left), remap2(right));
    }
    Ok(out)
}

/// Disjoint union; the boundary of `second` follows that of `first`.
pub fn compose_par(first: &Diagram, second: &Diagram) -> Diagram {
    let mut out = first.compacted();
    out.inputs += second.inputs;
    out.outputs += second.outputs;
    let map: BTreeMap<NodeId, NodeId> = second
        .nodes
        .iter()
        .map(|(&id, node)| (id, out.add_node(node.kind, node.weight)))
        .collect();
    let shift = |e: Endpoint| match e {
        Endpoint::Node(id) => Endpoint::Node(map[&id]),
        Endpoint::Input(i) => Endpoint::Input(i + first.inputs),
        Endpoint::Output(j) => Endpoint::Output(j + first.outputs),
    };
    for &(a, b) in second.edges.values() {
        out.add_edge(shift(a), shift(b));
    }
    out
}

/// Parallel composition of many diagrams; the empty diagram for none.
pub fn tensor_all<'a>(parts: impl IntoIterator<Item = &'a Diagram>) -> Diagram {
    parts
        .into_iter()
        .fold(Diagram::empty(), |acc, d| compose_par(&acc, d))
}

/// The affine map `y ↦ A y ⊕ x` as a bipartite diagram: one weight-1 green
/// spider per input, one weight-1 red spider per output carrying `x_j` as
/// its probability, an edge wherever `A` has a one.
pub fn affine_map(a: &F2Matrix, x: &F2Vector) -> Result<Diagram, DiagramError> {
    let (m, n) = (a.nrows(), a.ncols());
    if x.len() != m {
        return Err(DiagramError::ArityMismatch(format!(
            "offset has length {}, matrix has {m} rows",
            x.len()
        )));
    }
    let mut d = Diagram::with_boundary(n, m);
    let greens: Vec<NodeId> = (0..n)
        .map(|_| d.add_node(NodeKind::Green { mu: 1.0 }, 1.0))
        .collect();
    let reds: Vec<NodeId> = (0..m)
        .map(|j| {
            d.add_node(
                NodeKind::Red {
                    p: if x.get(j) { 1.0 } else { 0.0 },
                },
                1.0,
            )
        })
        .collect();
    for (i, &g) in greens.iter().enumerate() {
        d.add_edge(Endpoint::Input(i), Endpoint::Node(g));
    }
    for (j, &r) in reds.iter().enumerate() {
        for (i, &g) in greens.iter().enumerate() {
            if a.get(j, i) {
                d.add_edge(Endpoint::Node(g), Endpoint::Node(r));
            }
        }
        d.add_edge(Endpoint::Node(r), Endpoint::Output(j));
    }
    Ok(d)
}

/// Matrix arrow for `A` (`m × n`): evaluates to `Σ_y |A y⟩⟨y|`.
pub fn matrix_arrow(a: &F2Matrix) -> Diagram {
    affine_map(a, &F2Vector::zeros(a.nrows())).expect("zero offset has matching length")
}

/// Red `NOT` gates on the wires where `x` is one, bare wires elsewhere.
pub fn not_layer(x: &F2Vector) -> Diagram {
    let parts: Vec<Diagram> = x
        .bits()
        .map(|b| {
            if b {
                Diagram::red(1, 1, 1.0).expect("valid probability")
            } else {
                Diagram::identity(1)
            }
        })
        .collect();
    tensor_all(&parts)
}

/// The state `s Σ_y |A y ⊕ x⟩` for `A` of shape `n × k`.
pub fn affine_state(a: &F2Matrix, x: &F2Vector, s: f64) -> Result<Diagram, DiagramError> {
    if x.len() != a.nrows() {
        return Err(DiagramError::ArityMismatch(format!(
            "offset has length {}, matrix has {} rows",
            x.len(),
            a.nrows()
        )));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(DiagramError::ParameterRange(format!(
            "affine state scale must be positive, got {s}"
        )));
    }
    let k = a.ncols();
    let states: Vec<Diagram> = (0..k)
        .map(|_| Diagram::green(0, 1, 1.0).expect("valid"))
        .collect();
    // each uniform green state carries ½
    let scale = Diagram::scalar(s * 2f64.powi(k as i32))?;
    let prep = compose_par(&scale, &tensor_all(&states));
    prep.then(&matrix_arrow(a))?.then(&not_layer(x))
}

/// Number of wires `n` with `len == 2^n - 1`.
pub(crate) fn gadget_wires(len: usize) -> Option<usize> {
    let n = (len + 1).trailing_zeros() as usize;
    ((len + 1).is_power_of_two()).then_some(n)
}

/// The Fourier-form state `Λ Σ_x Π_{y≠0} λ_y^{x·y} |x⟩` on `n` wires,
/// where `params[y - 1] = λ_y` for `y` read as a big-endian index.
///
/// Each wire leaves a green copy spider; each nonzero `y` gets a red
/// parity spider over the wires in `y`, closed by a green effect `λ_y`.
pub fn fourier_gadget_state(params: &[f64], scale: f64) -> Result<Diagram, DiagramError> {
    let n = gadget_wires(params.len()).ok_or_else(|| {
        DiagramError::ArityMismatch(format!("{} gadget parameters is not 2^n - 1", params.len()))
    })?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DiagramError::ParameterRange(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if let Some(bad) = params.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(DiagramError::ParameterRange(format!(
            "gadget parameters must be positive, got {bad}"
        )));
    }
    let mut d = Diagram::with_boundary(0, n);
    d.add_node(NodeKind::Scalar, scale * 2f64.powi(n as i32));
    let copies: Vec<NodeId> = (0..n)
        .map(|_| d.add_node(NodeKind::Green { mu: 1.0 }, green_weight(0)))
        .collect();
    for (i, &c) in copies.iter().enumerate() {
        d.add_edge(Endpoint::Node(c), Endpoint::Output(i));
    }
    for (y, &lambda) in (1..).zip(params) {
        let parity = d.add_node(NodeKind::Red { p: 0.0 }, red_weight(1));
        let effect = d.add_node(NodeKind::Green { mu: lambda }, green_weight(1));
        for (i, &c) in copies.iter().enumerate() {
            if (y >> (n - 1 - i)) & 1 == 1 {
                d.add_edge(Endpoint::Node(c), Endpoint::Node(parity));
            }
        }
        d.add_edge(Endpoint::Node(parity), Endpoint::Node(effect));
    }
    Ok(d)
}

/// Green spider on registers of `k` wires: `inputs` registers in, `outputs`
/// registers out, wire `t` of every register meeting a spider with `mus[t]`.
/// Register `r` occupies ports `r*k .. r*k + k`.
pub fn big_green(
    k: usize,
    inputs: usize,
    outputs: usize,
    mus: &[f64],
) -> Result<Diagram, DiagramError> {
    if mus.len() != k {
        return Err(DiagramError::ArityMismatch(format!(
            "{} parameters for a register of {k}",
            mus.len()
        )));
    }
    mus.iter().try_for_each(|&mu| check_mu(mu))?;
    Ok(big_spider(k, inputs, outputs, |t| {
        (NodeKind::Green { mu: mus[t] }, green_weight(inputs))
    }))
}

/// Red counterpart of [`big_green`].
pub fn big_red(
    k: usize,
    inputs: usize,
    outputs: usize,
    ps: &[f64],
) -> Result<Diagram, DiagramError> {
    if ps.len() != k {
        return Err(DiagramError::ArityMismatch(format!(
            "{} parameters for a register of {k}",
            ps.len()
        )));
    }
    ps.iter().try_for_each(|&p| check_p(p))?;
    Ok(big_spider(k, inputs, outputs, |t| {
        (NodeKind::Red { p: ps[t] }, red_weight(outputs))
    }))
}

fn big_spider(
    k: usize,
    inputs: usize,
    outputs: usize,
    node: impl Fn(usize) -> (NodeKind, f64),
) -> Diagram {
    let mut d = Diagram::with_boundary(k * inputs, k * outputs);
    for t in 0..k {
        let (kind, weight) = node(t);
        let v = d.add_node(kind, weight);
        for r in 0..inputs {
            d.add_edge(Endpoint::Input(r * k + t), Endpoint::Node(v));
        }
        for r in 0..outputs {
            d.add_edge(Endpoint::Node(v), Endpoint::Output(r * k + t));
        }
    }
    d
}

/// Splits a register of `sizes.iter().sum()` wires into registers of the
/// given sizes. Registers are only a grouping of wires, so this is an
/// identity diagram.
pub fn divide(sizes: &[usize]) -> Diagram {
    Diagram::identity(sizes.iter().sum())
}

/// Inverse of [`divide`].
pub fn gather(sizes: &[usize]) -> Diagram {
    Diagram::identity(sizes.iter().sum())
}

mod isomorphism {
    use super::*;

    type Sig = ((u8, u64, u64), usize, Vec<Endpoint>);

    struct Shape {
        ids: Vec<NodeId>,
        labels: Vec<(u8, u64, u64)>,
        /// adjacency multiplicities between dense node indices
        adj: BTreeMap<(usize, usize), usize>,
        /// boundary ports attached to each node, sorted
        ports: Vec<Vec<Endpoint>>,
        bare: BTreeSet<(Endpoint, Endpoint)>,
    }

    fn shape(d: &Diagram) -> Shape {
        let ids: Vec<NodeId> = d.nodes.keys().copied().collect();
        let index: BTreeMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let labels = ids
            .iter()
            .map(|id| {
                let n = &d.nodes[id];
                let (tag, param) = match n.kind {
                    NodeKind::Green { mu } => (0, mu),
                    NodeKind::Red { p } => (1, p),
                    NodeKind::Scalar => (2, 0.0),
                };
                (tag, param.to_bits(), n.weight.to_bits())
            })
            .collect();
        let mut adj = BTreeMap::new();
        let mut ports = vec![Vec::new(); ids.len()];
        let mut bare = BTreeSet::new();
        for &(a, b) in d.edges.values() {
            match (a, b) {
                (Endpoint::Node(x), Endpoint::Node(y)) => {
                    let (x, y) = (index[&x], index[&y]);
                    *adj.entry((x.min(y), x.max(y))).or_insert(0) += 1;
                }
                (Endpoint::Node(x), port) | (port, Endpoint::Node(x)) => {
                    ports[index[&x]].push(port)
                }
                (p, q) => {
                    bare.insert((p.min(q), p.max(q)));
                }
            }
        }
        for p in &mut ports {
            p.sort();
        }
        Shape {
            ids,
            labels,
            adj,
            ports,
            bare,
        }
    }

    fn degree_profile(s: &Shape, v: usize) -> usize {
        s.adj
            .iter()
            .filter(|((a, b), _)| *a == v || *b == v)
            .map(|((a, b), c)| if a == b { 2 * c } else { *c })
            .sum()
    }

    pub(super) fn isomorphic(d1: &Diagram, d2: &Diagram) -> bool {
        if d1.inputs != d2.inputs
            || d1.outputs != d2.outputs
            || d1.nodes.len() != d2.nodes.len()
            || d1.edges.len() != d2.edges.len()
        {
            return false;
        }
        let (s1, s2) = (shape(d1), shape(d2));
        if s1.bare != s2.bare {
            return false;
        }
        let n = s1.ids.len();
        let sig = |s: &Shape, v: usize| -> Sig {
            (s.labels[v], degree_profile(s, v), s.ports[v].clone())
        };
        let sig1: Vec<Sig> = (0..n).map(|v| sig(&s1, v)).collect();
        let sig2: Vec<Sig> = (0..n).map(|v| sig(&s2, v)).collect();
        let mut sorted1 = sig1.clone();
        let mut sorted2 = sig2.clone();
        sorted1.sort();
        sorted2.sort();
        if sorted1 != sorted2 {
            return false;
        }
        // most constrained first: nodes touching the boundary, then by degree
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| {
            (
                std::cmp::Reverse(s1.ports[v].len()),
                std::cmp::Reverse(sig1[v].1),
            )
        });
        let mut assignment = vec![usize::MAX; n];
        let mut used = vec![false; n];
        extend(
            &s1,
            &s2,
            &sig1,
            &sig2,
            &order,
            0,
            &mut assignment,
            &mut used,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        s1: &Shape,
        s2: &Shape,
        sig1: &[Sig],
        sig2: &[Sig],
        order: &[usize],
        depth: usize,
        assignment: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        let Some(&v) = order.get(depth) else {
            return true;
        };
        let count =
            |s: &Shape, a: usize, b: usize| s.adj.get(&(a.min(b), a.max(b))).copied().unwrap_or(0);
        for w in 0..used.len() {
            if used[w] || sig1[v] != sig2[w] {
                continue;
            }
            if count(s1, v, v) != count(s2, w, w) {
                continue;
            }
            let consistent = order[..depth]
                .iter()
                .all(|&u| count(s1, v, u) == count(s2, w, assignment[u]));
            if !consistent {
                continue;
            }
            assignment[v] = w;
            used[w] = true;
            if extend(s1, s2, sig1, sig2, order, depth + 1, assignment, used) {
                return true;
            }
            used[w] = false;
            assignment[v] = usize::MAX;
        }
        false
    }
}

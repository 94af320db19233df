//! Local rewrite rules and a fusion-based simplifier.
//!
//! Fusion (`F1`, `F2`) and colour change of states (`M`) are exact by
//! construction. The remaining rules are checked at apply time: the
//! affected subdiagram is evaluated before and after, and an application
//! that changes it is refused with [`RewriteError::ShapeRejected`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{
    fourier_gadget_state, Diagram, DiagramError, EdgeId, Endpoint, NodeId, NodeKind,
};
use crate::fourier::{fourier_synthesize, FourierError};
use crate::semantics::{evaluate, EvalError, NonNegMatrix};

/// Relative tolerance of the apply-time check.
pub const SOUNDNESS_TOL: f64 = 1e-9;

/// Subdiagrams with more boundary wires than this are not evaluated by the
/// apply-time check.
pub const GATE_MAX_WIRES: usize = 16;

/// `p ⊕ q = p + q - 2pq`, the law of the XOR of independent coins.
///
/// Evaluated as `½ - 2(p - ½)(q - ½)` so that `½` absorbs exactly.
pub fn oplus(p: f64, q: f64) -> f64 {
    0.5 - 2.0 * (p - 0.5) * (q - 0.5)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    /// Green fusion.
    F1,
    /// Red fusion.
    F2,
    /// Colour change of a one-legged spider.
    M,
    /// A green spider fanned out through parity gadgets becomes a Fourier form.
    L,
    /// A parameter-free two-legged spider becomes a wire.
    Id,
    /// A wire gains a parameter-free green spider.
    IdIntro,
    /// A basis state is copied through a green spider.
    Copy,
    /// Green–red bialgebra.
    Bialg,
    Custom(String),
}

impl RuleId {
    pub fn name(&self) -> &str {
        match self {
            RuleId::F1 => "F1",
            RuleId::F2 => "F2",
            RuleId::M => "M",
            RuleId::L => "L",
            RuleId::Id => "ID",
            RuleId::IdIntro => "ID-intro",
            RuleId::Copy => "COPY",
            RuleId::Bialg => "BIALG",
            RuleId::Custom(s) => s,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RuleId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "F1" => RuleId::F1,
            "F2" => RuleId::F2,
            "M" => RuleId::M,
            "L" => RuleId::L,
            "ID" => RuleId::Id,
            "ID-intro" => RuleId::IdIntro,
            "COPY" => RuleId::Copy,
            "BIALG" => RuleId::Bialg,
            other => RuleId::Custom(other.to_string()),
        })
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RuleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().expect("infallible"))
    }
}

/// Where a rule applies: node ids and edge ids of the diagram at that time.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Site {
    pub fn node(id: NodeId) -> Self {
        Site {
            nodes: vec![id.0],
            edges: vec![],
        }
    }

    pub fn edge(id: EdgeId) -> Self {
        Site {
            nodes: vec![],
            edges: vec![id.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleInstance {
    pub rule: RuleId,
    pub site: Site,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

impl RuleInstance {
    pub fn new(rule: RuleId, site: Site) -> Self {
        RuleInstance {
            rule,
            site,
            params: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error("no match for {rule}: {reason}")]
    NoMatch { rule: RuleId, reason: String },
    #[error("wrong colour: {0}")]
    WrongColor(String),
    #[error("pole: a red state with p = 1 has no green form")]
    Pole,
    #[error("rule shape rejected: {rule} changes the semantics of its site ({detail})")]
    ShapeRejected { rule: RuleId, detail: String },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

fn no_match(rule: RuleId, reason: impl Into<String>) -> RewriteError {
    RewriteError::NoMatch {
        rule,
        reason: reason.into(),
    }
}

/// Relative agreement: `max |a - b| ≤ tol · max(|a|, |b|)`.
pub fn relatively_close(a: &NonNegMatrix, b: &NonNegMatrix, tol: f64) -> bool {
    if (a.in_qubits(), a.out_qubits()) != (b.in_qubits(), b.out_qubits()) {
        return false;
    }
    let scale = a.max_entry().max(b.max_entry());
    a.entries()
        .iter()
        .zip(b.entries())
        .all(|(x, y)| (x - y).abs() <= tol * scale)
}

/// Whether two diagrams evaluate to the same matrix within [`SOUNDNESS_TOL`].
pub fn evaluations_agree(before: &Diagram, after: &Diagram) -> bool {
    match (evaluate(before), evaluate(after)) {
        (Ok(a), Ok(b)) => relatively_close(&a, &b, SOUNDNESS_TOL),
        _ => false,
    }
}

fn endpoints(d: &Diagram, e: EdgeId, rule: RuleId) -> Result<(Endpoint, Endpoint), RewriteError> {
    d.edge(e)
        .ok_or_else(|| no_match(rule, format!("no edge {e}")))
}

fn node_of(d: &Diagram, id: NodeId, rule: RuleId) -> Result<crate::diagram::Node, RewriteError> {
    d.node(id)
        .copied()
        .ok_or_else(|| no_match(rule, format!("no node {id}")))
}

/// Moves every edge end at `from` onto `to`, then drops `from`. Returns the
/// number of edges that became self-loops on `to`, which are removed.
fn merge_into(d: &mut Diagram, from: NodeId, to: NodeId) -> usize {
    let (src, dst) = (Endpoint::Node(from), Endpoint::Node(to));
    let mut loops = 0;
    for e in d.incident_edges(from) {
        let (a, b) = d.remove_edge(e).expect("incident");
        let a = if a == src { dst } else { a };
        let b = if b == src { dst } else { b };
        if a == dst && b == dst {
            loops += 1;
        } else {
            d.add_edge(a, b);
        }
    }
    d.remove_node(from);
    loops
}

fn remove_self_loops(d: &mut Diagram, id: NodeId) -> usize {
    let target = Endpoint::Node(id);
    let loops: Vec<EdgeId> = d
        .incident_edges(id)
        .into_iter()
        .filter(|&e| d.edge(e) == Some((target, target)))
        .collect();
    for &e in &loops {
        d.remove_edge(e);
    }
    loops.len()
}

fn fusion_pair(d: &Diagram, edge: EdgeId, rule: RuleId) -> Result<(NodeId, NodeId), RewriteError> {
    match endpoints(d, edge, rule.clone())? {
        (Endpoint::Node(a), Endpoint::Node(b)) if a != b => Ok((a.min(b), a.max(b))),
        (Endpoint::Node(_), Endpoint::Node(_)) => Err(no_match(rule, "edge is a self-loop")),
        _ => Err(no_match(rule, "edge touches the boundary")),
    }
}

/// Fuses two green spiders joined by `edge`: parameters and weights multiply.
pub fn fuse_green(d: &Diagram, edge: EdgeId) -> Result<Diagram, RewriteError> {
    let (a, b) = fusion_pair(d, edge, RuleId::F1)?;
    let (na, nb) = (node_of(d, a, RuleId::F1)?, node_of(d, b, RuleId::F1)?);
    let (NodeKind::Green { mu: ma }, NodeKind::Green { mu: mb }) = (na.kind, nb.kind) else {
        return Err(RewriteError::WrongColor(format!(
            "{a} and {b} are not both green"
        )));
    };
    let mut out = d.clone();
    merge_into(&mut out, b, a);
    remove_self_loops(&mut out, a);
    *out.node_mut(a).expect("kept") = crate::diagram::Node {
        kind: NodeKind::Green { mu: ma * mb },
        weight: na.weight * nb.weight,
    };
    Ok(out)
}

/// Fuses two red spiders joined by `edge` with probabilities combined by
/// [`oplus`]. Parallel edges and self-loops each sum freely, contributing a
/// factor 2 apiece beyond the first joining edge.
pub fn fuse_red(d: &Diagram, edge: EdgeId) -> Result<Diagram, RewriteError> {
    fuse_red_with(d, edge, oplus)
}

/// [`fuse_red`] with a caller-chosen parameter combination. Anything other
/// than [`oplus`] is unsound; this exists to exercise the soundness checks.
pub fn fuse_red_with(
    d: &Diagram,
    edge: EdgeId,
    combine: impl Fn(f64, f64) -> f64,
) -> Result<Diagram, RewriteError> {
    let (a, b) = fusion_pair(d, edge, RuleId::F2)?;
    let (na, nb) = (node_of(d, a, RuleId::F2)?, node_of(d, b, RuleId::F2)?);
    let (NodeKind::Red { p }, NodeKind::Red { p: q }) = (na.kind, nb.kind) else {
        return Err(RewriteError::WrongColor(format!(
            "{a} and {b} are not both red"
        )));
    };
    let mut out = d.clone();
    let loops = remove_self_loops(&mut out, a) + remove_self_loops(&mut out, b);
    let joined = merge_into(&mut out, b, a);
    let weight = na.weight * nb.weight * 2f64.powi((joined - 1 + loops) as i32);
    *out.node_mut(a).expect("kept") = crate::diagram::Node {
        kind: NodeKind::Red {
            p: combine(p, q).clamp(0.0, 1.0),
        },
        weight,
    };
    Ok(out)
}

/// The unique leg of a one-legged spider.
fn single_leg(d: &Diagram, id: NodeId, rule: RuleId) -> Result<EdgeId, RewriteError> {
    let legs = d.incident_edges(id);
    if d.degree(id) != 1 {
        return Err(no_match(rule, format!("{id} has degree {}", d.degree(id))));
    }
    Ok(legs[0])
}

/// Replaces the nodes `site` by `patch` after checking that the two agree
/// as tensors over the cut wires. `verify` forces the check; otherwise it
/// is skipped for sites too large to evaluate.
fn replace_site(
    d: &Diagram,
    rule: RuleId,
    site: &BTreeSet<NodeId>,
    cut: &[EdgeId],
    inputs: usize,
    patch: &Diagram,
    verify: bool,
) -> Result<Diagram, RewriteError> {
    if cut.len() <= GATE_MAX_WIRES {
        let before = evaluate(&d.extract(site, cut, inputs))?;
        let after = evaluate(patch)?;
        if !relatively_close(&before, &after, SOUNDNESS_TOL) {
            return Err(RewriteError::ShapeRejected {
                rule,
                detail: format!(
                    "site {:?} over {} wires",
                    site.iter().map(|n| n.0).collect::<Vec<_>>(),
                    cut.len()
                ),
            });
        }
    } else if verify {
        return Err(RewriteError::ShapeRejected {
            rule,
            detail: format!(
                "site has {} boundary wires, above the check limit {GATE_MAX_WIRES}",
                cut.len()
            ),
        });
    }
    d.splice(site, cut, inputs, patch).map_err(|e| match e {
        DiagramError::BoundaryLoop(s) => {
            no_match(rule, format!("result would join two boundary ports ({s})"))
        }
        other => other.into(),
    })
}

/// Turns a one-legged red spider into a scalar and a one-legged green
/// spider, or the reverse.
pub fn color_convert_state(d: &Diagram, node: NodeId) -> Result<Diagram, RewriteError> {
    let n = node_of(d, node, RuleId::M)?;
    let leg = single_leg(d, node, RuleId::M)?;
    let patch = match n.kind {
        NodeKind::Red { p } => {
            if p >= 1.0 {
                return Err(RewriteError::Pole);
            }
            let green = Diagram::green(0, 1, p / (1.0 - p))?;
            // the green state carries weight ½
            Diagram::scalar(2.0 * n.weight * (1.0 - p))?.tensor(&green)
        }
        NodeKind::Green { mu } => {
            let red = Diagram::red(0, 1, mu / (1.0 + mu))?;
            Diagram::scalar(n.weight * (1.0 + mu))?.tensor(&red)
        }
        NodeKind::Scalar => return Err(RewriteError::WrongColor(format!("{node} is a scalar"))),
    };
    replace_site(
        d,
        RuleId::M,
        &BTreeSet::from([node]),
        &[leg],
        0,
        &patch,
        false,
    )
}

/// Replaces a two-legged green spider with `μ = 1`, or red spider with
/// `p = 0`, by a plain wire and its weight as a scalar.
pub fn remove_identity(d: &Diagram, node: NodeId) -> Result<Diagram, RewriteError> {
    let n = node_of(d, node, RuleId::Id)?;
    let is_identity = matches!(n.kind, NodeKind::Green { mu } if mu == 1.0)
        || matches!(n.kind, NodeKind::Red { p } if p == 0.0);
    if !is_identity {
        return Err(no_match(RuleId::Id, format!("{node} carries a parameter")));
    }
    let legs = d.incident_edges(node);
    if legs.len() != 2 || d.degree(node) != 2 {
        return Err(no_match(
            RuleId::Id,
            format!("{node} does not have two distinct legs"),
        ));
    }
    let existing: Vec<NodeId> = d
        .nodes()
        .filter(|(_, m)| m.kind == NodeKind::Scalar)
        .map(|(id, _)| id)
        .collect();
    let mut patch = Diagram::identity(1);
    if n.weight != 1.0 {
        patch = patch.tensor(&Diagram::scalar(n.weight)?);
    }
    let mut out = replace_site(
        d,
        RuleId::Id,
        &BTreeSet::from([node]),
        &legs,
        1,
        &patch,
        true,
    )?;
    // fold the new scalar into an existing one
    if let (Some(&first), true) = (existing.first(), n.weight != 1.0) {
        let added = out
            .nodes()
            .filter(|(id, m)| m.kind == NodeKind::Scalar && !existing.contains(id))
            .map(|(id, _)| id)
            .next();
        if let Some(added) = added {
            out.remove_node(added);
            out.node_mut(first).expect("kept").weight *= n.weight;
        }
    }
    Ok(out)
}

/// Inserts a weight-1 green spider with `μ = 1` on `edge`.
pub fn introduce_identity(d: &Diagram, edge: EdgeId) -> Result<Diagram, RewriteError> {
    let (a, b) = endpoints(d, edge, RuleId::IdIntro)?;
    let mut out = d.clone();
    out.remove_edge(edge);
    let v = out.add_node(NodeKind::Green { mu: 1.0 }, 1.0);
    out.add_edge(a, Endpoint::Node(v));
    out.add_edge(Endpoint::Node(v), b);
    Ok(out)
}

/// A one-legged red basis state (`p ∈ {0, 1}`) feeding a green spider is
/// copied onto every other leg of the green spider.
pub fn copy_rule(d: &Diagram, state: NodeId) -> Result<Diagram, RewriteError> {
    let s = node_of(d, state, RuleId::Copy)?;
    let NodeKind::Red { p } = s.kind else {
        return Err(RewriteError::WrongColor(format!("{state} is not red")));
    };
    if p != 0.0 && p != 1.0 {
        return Err(no_match(
            RuleId::Copy,
            format!("{state} is not a basis state"),
        ));
    }
    let leg = single_leg(d, state, RuleId::Copy)?;
    let Some(Endpoint::Node(g)) = d.other_end(leg, Endpoint::Node(state)) else {
        return Err(no_match(RuleId::Copy, "state does not feed a spider"));
    };
    let gn = node_of(d, g, RuleId::Copy)?;
    let NodeKind::Green { mu } = gn.kind else {
        return Err(no_match(RuleId::Copy, format!("{g} is not green")));
    };
    // self-loops on a green spider are trivial and vanish with it
    let others: Vec<EdgeId> = d
        .incident_edges(g)
        .into_iter()
        .filter(|&e| e != leg && d.edge(e) != Some((Endpoint::Node(g), Endpoint::Node(g))))
        .collect();
    let states: Vec<Diagram> = others
        .iter()
        .map(|_| Diagram::red(0, 1, p))
        .collect::<Result<_, _>>()?;
    let scalar = s.weight * gn.weight * ((1.0 - p) + p * mu);
    let patch = Diagram::scalar(scalar)?.tensor(&crate::diagram::tensor_all(&states));
    replace_site(
        d,
        RuleId::Copy,
        &BTreeSet::from([state, g]),
        &others,
        0,
        &patch,
        true,
    )
}

struct BialgebraSite {
    green: NodeId,
    red: NodeId,
    weight: f64,
    red_side: Vec<EdgeId>,
    green_side: Vec<EdgeId>,
}

fn bialgebra_site(d: &Diagram, edge: EdgeId) -> Result<BialgebraSite, RewriteError> {
    let (a, b) = fusion_pair(d, edge, RuleId::Bialg)?;
    let (na, nb) = (node_of(d, a, RuleId::Bialg)?, node_of(d, b, RuleId::Bialg)?);
    let (g, r, wg, wr) = match (na.kind, nb.kind) {
        (NodeKind::Green { mu }, NodeKind::Red { p }) if mu == 1.0 && p == 0.0 => {
            (a, b, na.weight, nb.weight)
        }
        (NodeKind::Red { p }, NodeKind::Green { mu }) if mu == 1.0 && p == 0.0 => {
            (b, a, nb.weight, na.weight)
        }
        _ => {
            return Err(no_match(
                RuleId::Bialg,
                "needs a parameter-free green and red pair",
            ))
        }
    };
    let legs = |x: NodeId| -> Result<Vec<EdgeId>, RewriteError> {
        let l: Vec<EdgeId> = d
            .incident_edges(x)
            .into_iter()
            .filter(|&e| e != edge)
            .collect();
        if l.len() + 1 != d.degree(x) {
            return Err(no_match(RuleId::Bialg, format!("{x} has a self-loop")));
        }
        let other = Endpoint::Node(if x == g { r } else { g });
        if l.iter()
            .any(|&e| d.other_end(e, Endpoint::Node(x)) == Some(other))
        {
            return Err(no_match(RuleId::Bialg, "parallel edges"));
        }
        if l.is_empty() {
            return Err(no_match(RuleId::Bialg, format!("{x} has no other legs")));
        }
        Ok(l)
    };
    Ok(BialgebraSite {
        green: g,
        red: r,
        weight: wg * wr,
        red_side: legs(r)?,
        green_side: legs(g)?,
    })
}

/// Green–red bialgebra on the single edge joining a parameter-free green
/// spider and a parameter-free red spider: the pair becomes a complete
/// bipartite graph of red-side greens and green-side reds.
pub fn bialgebra(d: &Diagram, edge: EdgeId) -> Result<Diagram, RewriteError> {
    let BialgebraSite {
        green: g,
        red: r,
        weight,
        red_side,
        green_side,
    } = bialgebra_site(d, edge)?;
    let mut patch = Diagram::with_boundary(0, red_side.len() + green_side.len());
    patch.add_node(NodeKind::Scalar, weight);
    let greens: Vec<NodeId> = red_side
        .iter()
        .map(|_| patch.add_node(NodeKind::Green { mu: 1.0 }, 1.0))
        .collect();
    let reds: Vec<NodeId> = green_side
        .iter()
        .map(|_| patch.add_node(NodeKind::Red { p: 0.0 }, 1.0))
        .collect();
    for (i, &v) in greens.iter().enumerate() {
        patch.add_edge(Endpoint::Node(v), Endpoint::Output(i));
        for &u in &reds {
            patch.add_edge(Endpoint::Node(v), Endpoint::Node(u));
        }
    }
    for (j, &u) in reds.iter().enumerate() {
        patch.add_edge(Endpoint::Node(u), Endpoint::Output(greens.len() + j));
    }
    let cut: Vec<EdgeId> = red_side.into_iter().chain(green_side).collect();
    replace_site(
        d,
        RuleId::Bialg,
        &BTreeSet::from([g, r]),
        &cut,
        0,
        &patch,
        true,
    )
}

/// A matched instance of the fan-out shape: a green hub with parameter
/// `λ` whose every leg enters its own parity spider, each of which also
/// carries a one-legged green `μ_i` and exactly one further leg.
#[derive(Clone, Debug)]
pub struct FanOut {
    pub hub: NodeId,
    pub lambda: f64,
    pub mus: Vec<f64>,
    /// Product of all weights in the site.
    pub weight: f64,
    pub site: BTreeSet<NodeId>,
    pub cut: Vec<EdgeId>,
}

impl FanOut {
    /// `v_y = W (∏ μ_i^{y_i} + λ ∏ μ_i^{1 - y_i})` over the cut wires.
    pub fn vector(&self) -> Vec<f64> {
        let n = self.mus.len();
        (0..1usize << n)
            .map(|y| {
                let bit = |i: usize| (y >> (n - 1 - i)) & 1 == 1;
                let low: f64 = (0..n)
                    .map(|i| if bit(i) { self.mus[i] } else { 1.0 })
                    .product();
                let high: f64 = (0..n)
                    .map(|i| if bit(i) { 1.0 } else { self.mus[i] })
                    .product();
                self.weight * (low + self.lambda * high)
            })
            .collect()
    }
}

pub fn match_fan_out(d: &Diagram, hub: NodeId) -> Result<FanOut, RewriteError> {
    let rule = RuleId::L;
    let h = node_of(d, hub, rule.clone())?;
    let NodeKind::Green { mu: lambda } = h.kind else {
        return Err(no_match(rule, format!("{hub} is not green")));
    };
    if lambda <= 0.0 {
        return Err(no_match(rule, "hub parameter must be positive"));
    }
    let spokes = d.incident_edges(hub);
    if spokes.is_empty() || spokes.len() != d.degree(hub) {
        return Err(no_match(
            rule,
            format!("{hub} needs at least one leg and no self-loops"),
        ));
    }
    let mut site = BTreeSet::from([hub]);
    let mut weight = h.weight;
    let mut mus = Vec::new();
    let mut pending = Vec::new();
    for &spoke in &spokes {
        let Some(Endpoint::Node(r)) = d.other_end(spoke, Endpoint::Node(hub)) else {
            return Err(no_match(rule, "hub leg reaches the boundary"));
        };
        let rn = node_of(d, r, rule.clone())?;
        if rn.kind != (NodeKind::Red { p: 0.0 })
            || d.degree(r) != 3
            || d.incident_edges(r).len() != 3
        {
            return Err(no_match(
                rule,
                format!("{r} is not a three-legged parity spider"),
            ));
        }
        if !site.insert(r) {
            return Err(no_match(rule, format!("{r} is reached twice")));
        }
        weight *= rn.weight;
        let mut leaf = None;
        let mut outward = Vec::new();
        for e in d.incident_edges(r).into_iter().filter(|&e| e != spoke) {
            let far = d.other_end(e, Endpoint::Node(r)).expect("incident");
            match far {
                Endpoint::Node(x)
                    if leaf.is_none()
                        && d.degree(x) == 1
                        && d.node(x).is_some_and(|n| n.kind.is_green()) =>
                {
                    leaf = Some(x)
                }
                _ => outward.push(e),
            }
        }
        let (Some(leaf), [out]) = (leaf, outward.as_slice()) else {
            return Err(no_match(
                rule,
                format!("{r} lacks a green leaf and one free leg"),
            ));
        };
        let ln = node_of(d, leaf, rule.clone())?;
        let mu = ln.kind.param().expect("green");
        if mu <= 0.0 {
            return Err(no_match(rule, "leaf parameters must be positive"));
        }
        site.insert(leaf);
        weight *= ln.weight;
        mus.push(mu);
        pending.push(*out);
    }
    for &e in &pending {
        let (a, b) = d.edge(e).expect("exists");
        let inside = |x: Endpoint| x.node().is_some_and(|id| site.contains(&id));
        if inside(a) && inside(b) {
            return Err(no_match(rule, "free legs must leave the site"));
        }
    }
    Ok(FanOut {
        hub,
        lambda,
        mus,
        weight,
        site,
        cut: pending,
    })
}

/// Rewrites a fan-out (see [`FanOut`]) into the Fourier form of its
/// vector over the free legs.
pub fn apply_rule_l(d: &Diagram, hub: NodeId) -> Result<Diagram, RewriteError> {
    let fan = match_fan_out(d, hub)?;
    let fd = fourier_synthesize(&fan.vector())?;
    let patch = fourier_gadget_state(&fd.lambda, fd.scale)?;
    replace_site(d, RuleId::L, &fan.site, &fan.cut, 0, &patch, false)
}

fn site_node(rule: &RuleInstance) -> Result<NodeId, RewriteError> {
    rule.site
        .nodes
        .first()
        .map(|&n| NodeId(n))
        .ok_or_else(|| no_match(rule.rule.clone(), "site names no node"))
}

fn site_edge(rule: &RuleInstance) -> Result<EdgeId, RewriteError> {
    rule.site
        .edges
        .first()
        .map(|&e| EdgeId(e))
        .ok_or_else(|| no_match(rule.rule.clone(), "site names no edge"))
}

/// Applies a rule instance.
pub fn apply(rule: &RuleInstance, d: &Diagram) -> Result<Diagram, RewriteError> {
    match &rule.rule {
        RuleId::F1 => fuse_green(d, site_edge(rule)?),
        RuleId::F2 => fuse_red(d, site_edge(rule)?),
        RuleId::M => color_convert_state(d, site_node(rule)?),
        RuleId::L => apply_rule_l(d, site_node(rule)?),
        RuleId::Id => remove_identity(d, site_node(rule)?),
        RuleId::IdIntro => introduce_identity(d, site_edge(rule)?),
        RuleId::Copy => copy_rule(d, site_node(rule)?),
        RuleId::Bialg => bialgebra(d, site_edge(rule)?),
        RuleId::Custom(name) => Err(no_match(
            rule.rule.clone(),
            format!("no implementation for custom rule {name}"),
        )),
    }
}

/// Applies `rule` to a copy of `d` and compares evaluations. A rule that
/// does not apply is not certified.
pub fn check_rule_soundness(rule: &RuleInstance, d: &Diagram) -> bool {
    match apply(rule, d) {
        Ok(after) => evaluations_agree(d, &after),
        Err(_) => false,
    }
}

/// Every site where `rule` matches syntactically. Rules with an apply-time
/// check may still refuse some of them.
pub fn find_matches(d: &Diagram, rule: &RuleId) -> Vec<RuleInstance> {
    let node_pair = |e: EdgeId| match d.edge(e) {
        Some((Endpoint::Node(a), Endpoint::Node(b))) if a != b => {
            Some((d.node(a)?.kind, d.node(b)?.kind))
        }
        _ => None,
    };
    let mut out = Vec::new();
    match rule {
        RuleId::F1 | RuleId::F2 => {
            for (e, _, _) in d.edges() {
                if let Some((ka, kb)) = node_pair(e) {
                    let hit = if *rule == RuleId::F1 {
                        ka.is_green() && kb.is_green()
                    } else {
                        ka.is_red() && kb.is_red()
                    };
                    if hit {
                        out.push(RuleInstance::new(rule.clone(), Site::edge(e)));
                    }
                }
            }
        }
        RuleId::Bialg => {
            for (e, _, _) in d.edges() {
                if bialgebra_site(d, e).is_ok() {
                    out.push(RuleInstance::new(rule.clone(), Site::edge(e)));
                }
            }
        }
        RuleId::IdIntro => out.extend(
            d.edges()
                .map(|(e, _, _)| RuleInstance::new(rule.clone(), Site::edge(e))),
        ),
        RuleId::M => {
            for (id, n) in d.nodes() {
                let ok = match n.kind {
                    NodeKind::Red { p } => p < 1.0,
                    NodeKind::Green { .. } => true,
                    NodeKind::Scalar => false,
                };
                if ok && d.degree(id) == 1 {
                    out.push(RuleInstance::new(rule.clone(), Site::node(id)));
                }
            }
        }
        RuleId::Id => {
            for (id, n) in d.nodes() {
                let free = matches!(n.kind, NodeKind::Green { mu } if mu == 1.0)
                    || matches!(n.kind, NodeKind::Red { p } if p == 0.0);
                if free && d.degree(id) == 2 && d.incident_edges(id).len() == 2 {
                    let ends: Vec<Endpoint> = d
                        .incident_edges(id)
                        .into_iter()
                        .filter_map(|e| d.other_end(e, Endpoint::Node(id)))
                        .collect();
                    let loop_free = !matches!(
                        ends.as_slice(),
                        [Endpoint::Input(_), Endpoint::Input(_)]
                            | [Endpoint::Output(_), Endpoint::Output(_)]
                    );
                    if loop_free {
                        out.push(RuleInstance::new(rule.clone(), Site::node(id)));
                    }
                }
            }
        }
        RuleId::Copy => {
            for (id, n) in d.nodes() {
                if matches!(n.kind, NodeKind::Red { p } if p == 0.0 || p == 1.0)
                    && d.degree(id) == 1
                {
                    let leg = d.incident_edges(id)[0];
                    if let Some(Endpoint::Node(g)) = d.other_end(leg, Endpoint::Node(id)) {
                        if d.node(g).is_some_and(|m| m.kind.is_green()) {
                            out.push(RuleInstance::new(rule.clone(), Site::node(id)));
                        }
                    }
                }
            }
        }
        RuleId::L => {
            for (id, n) in d.nodes() {
                if n.kind.is_green() && match_fan_out(d, id).is_ok() {
                    out.push(RuleInstance::new(rule.clone(), Site::node(id)));
                }
            }
        }
        RuleId::Custom(_) => {}
    }
    out
}

/// Records the parameters a rule instance acts on, for traces.
fn annotate(rule: RuleInstance, d: &Diagram) -> RuleInstance {
    let param = |id: usize| d.node(NodeId(id)).and_then(|n| n.kind.param());
    match rule.rule {
        RuleId::F1 | RuleId::F2 => {
            let Some((Endpoint::Node(a), Endpoint::Node(b))) =
                rule.site.edges.first().and_then(|&e| d.edge(EdgeId(e)))
            else {
                return rule;
            };
            let (a, b) = (a.min(b), a.max(b));
            let (pa, pb) = (
                param(a.0).unwrap_or(f64::NAN),
                param(b.0).unwrap_or(f64::NAN),
            );
            let fused = if rule.rule == RuleId::F1 {
                pa * pb
            } else {
                oplus(pa, pb)
            };
            let mut r = rule.with("a", pa).with("b", pb).with("result", fused);
            r.site.nodes = vec![a.0, b.0];
            r
        }
        RuleId::M | RuleId::Id | RuleId::Copy | RuleId::L => {
            match rule.site.nodes.first().and_then(|&n| param(n)) {
                Some(p) => rule.with("param", p),
                None => rule,
            }
        }
        _ => rule,
    }
}

/// Simplification rules in priority order.
const SIMPLIFY_RULES: [RuleId; 3] = [RuleId::F1, RuleId::F2, RuleId::Id];

/// Fuses spiders and removes identities until nothing matches. Each step
/// removes a spider, so this terminates.
pub fn simplify(d: &Diagram) -> Diagram {
    simplify_traced(d).0
}

/// [`simplify`] together with the applied rule instances, in order.
pub fn simplify_traced(d: &Diagram) -> (Diagram, Vec<RuleInstance>) {
    let mut current = d.clone();
    let mut trace = Vec::new();
    'outer: loop {
        for rule in &SIMPLIFY_RULES {
            for m in find_matches(&current, rule) {
                if let Ok(next) = apply(&m, &current) {
                    trace.push(annotate(m, &current));
                    current = next;
                    continue 'outer;
                }
            }
        }
        return (current, trace);
    }
}

/// [`simplify`] choosing uniformly among all applicable sites at each step.
pub fn simplify_random<R: Rng + ?Sized>(d: &Diagram, rng: &mut R) -> (Diagram, Vec<RuleInstance>) {
    let mut current = d.clone();
    let mut trace = Vec::new();
    loop {
        let mut candidates: Vec<RuleInstance> = SIMPLIFY_RULES
            .iter()
            .flat_map(|r| find_matches(&current, r))
            .collect();
        candidates.shuffle(rng);
        let step = candidates
            .into_iter()
            .find_map(|m| apply(&m, &current).ok().map(|next| (m, next)));
        match step {
            Some((m, next)) => {
                trace.push(annotate(m, &current));
                current = next;
            }
            None => return (current, trace),
        }
    }
}

/// Applies up to `steps` randomly chosen instances of `rules`, skipping
/// any that refuse.
pub fn random_rewrites<R: Rng + ?Sized>(
    d: &Diagram,
    rules: &[RuleId],
    steps: usize,
    rng: &mut R,
) -> (Diagram, Vec<RuleInstance>) {
    let mut current = d.clone();
    let mut trace = Vec::new();
    for _ in 0..steps {
        let mut candidates: Vec<RuleInstance> = rules
            .iter()
            .flat_map(|r| find_matches(&current, r))
            .collect();
        candidates.shuffle(rng);
        if let Some((m, next)) = candidates
            .into_iter()
            .find_map(|m| apply(&m, &current).ok().map(|next| (m, next)))
        {
            trace.push(annotate(m, &current));
            current = next;
        }
    }
    (current, trace)
}

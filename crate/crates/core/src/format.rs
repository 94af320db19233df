//! JSON file formats for diagrams, matrices and canonical data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{green_weight, red_weight, Diagram, Endpoint, NodeId, NodeKind, Violation};
use crate::normalform::NormalFormData;
use crate::semantics::{EvalError, NonNegMatrix};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("invalid diagram: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Diagram(Vec<Violation>),
    #[error(transparent)]
    Matrix(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindTag {
    Green,
    Red,
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: u64,
    pub kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum EndpointEntry {
    #[serde(rename = "node")]
    Node(u64),
    #[serde(rename = "in")]
    In(usize),
    #[serde(rename = "out")]
    Out(usize),
}

/// On-disk diagram. An edge `[a, b]` is read as `a` feeding `b`; this only
/// matters for default spider weights, which follow the constructors: a
/// green spider with `k` incoming edge ends gets `2^(k-1)`, a red spider
/// with `k` outgoing ends gets `2^(1-k)`. A scalar node's value is `param`
/// times `weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramFile {
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<[EndpointEntry; 2]>,
}

fn check_ports(ports: &[usize], what: &str) -> Result<(), FormatError> {
    if ports.iter().enumerate().any(|(i, &p)| i != p) {
        return Err(FormatError::Invalid(format!(
            "{what} must list 0..{} in order, got {ports:?}",
            ports.len()
        )));
    }
    Ok(())
}

impl DiagramFile {
    pub fn to_diagram(&self) -> Result<Diagram, FormatError> {
        check_ports(&self.inputs, "inputs")?;
        check_ports(&self.outputs, "outputs")?;
        let mut d = Diagram::with_boundary(self.inputs.len(), self.outputs.len());
        let mut ids: BTreeMap<u64, NodeId> = BTreeMap::new();
        let mut incoming: BTreeMap<u64, usize> = BTreeMap::new();
        let mut outgoing: BTreeMap<u64, usize> = BTreeMap::new();
        for [a, b] in &self.edges {
            if let EndpointEntry::Node(id) = a {
                *outgoing.entry(*id).or_default() += 1;
            }
            if let EndpointEntry::Node(id) = b {
                *incoming.entry(*id).or_default() += 1;
            }
        }
        for node in &self.nodes {
            let (kind, weight) = match node.kind {
                KindTag::Green => {
                    let mu = node.param.unwrap_or(1.0);
                    let default = green_weight(incoming.get(&node.id).copied().unwrap_or(0));
                    (NodeKind::Green { mu }, node.weight.unwrap_or(default))
                }
                KindTag::Red => {
                    let p = node.param.unwrap_or(0.0);
                    let default = red_weight(outgoing.get(&node.id).copied().unwrap_or(0));
                    (NodeKind::Red { p }, node.weight.unwrap_or(default))
                }
                KindTag::Scalar => (
                    NodeKind::Scalar,
                    node.param.unwrap_or(1.0) * node.weight.unwrap_or(1.0),
                ),
            };
            if ids.insert(node.id, d.add_node(kind, weight)).is_some() {
                return Err(FormatError::Invalid(format!(
                    "duplicate node id {}",
                    node.id
                )));
            }
        }
        let resolve = |e: &EndpointEntry| match *e {
            EndpointEntry::Node(id) => ids
                .get(&id)
                .map(|&n| Endpoint::Node(n))
                .ok_or_else(|| FormatError::Invalid(format!("edge uses unknown node {id}"))),
            EndpointEntry::In(i) => Ok(Endpoint::Input(i)),
            EndpointEntry::Out(j) => Ok(Endpoint::Output(j)),
        };
        for [a, b] in &self.edges {
            d.add_edge(resolve(a)?, resolve(b)?);
        }
        d.validate().map_err(FormatError::Diagram)?;
        Ok(d)
    }

    /// Node ids are renumbered densely; weights are always written.
    pub fn from_diagram(d: &Diagram) -> Self {
        let d = d.compacted();
        let nodes = d
            .nodes()
            .map(|(id, n)| match n.kind {
                NodeKind::Green { mu } => NodeEntry {
                    id: id.0 as u64,
                    kind: KindTag::Green,
                    param: Some(mu),
                    weight: Some(n.weight),
                },
                NodeKind::Red { p } => NodeEntry {
                    id: id.0 as u64,
                    kind: KindTag::Red,
                    param: Some(p),
                    weight: Some(n.weight),
                },
                NodeKind::Scalar => NodeEntry {
                    id: id.0 as u64,
                    kind: KindTag::Scalar,
                    param: Some(n.weight),
                    weight: None,
                },
            })
            .collect();
        let entry = |e: Endpoint| match e {
            Endpoint::Node(id) => EndpointEntry::Node(id.0 as u64),
            Endpoint::Input(i) => EndpointEntry::In(i),
            Endpoint::Output(j) => EndpointEntry::Out(j),
        };
        DiagramFile {
            inputs: (0..d.inputs()).collect(),
            outputs: (0..d.outputs()).collect(),
            nodes,
            edges: d.edges().map(|(_, a, b)| [entry(a), entry(b)]).collect(),
        }
    }
}

pub fn parse_diagram(text: &str) -> Result<Diagram, FormatError> {
    serde_json::from_str::<DiagramFile>(text)?.to_diagram()
}

/// One JSON line.
pub fn diagram_to_json(d: &Diagram) -> String {
    serde_json::to_string(&DiagramFile::from_diagram(d)).expect("diagram files serialize")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub in_qubits: usize,
    pub out_qubits: usize,
    pub entries: Vec<f64>,
}

impl MatrixFile {
    pub fn to_matrix(&self) -> Result<NonNegMatrix, FormatError> {
        if self.in_qubits + self.out_qubits > 30 {
            return Err(FormatError::Invalid("matrix has too many qubits".into()));
        }
        Ok(NonNegMatrix::new(
            self.in_qubits,
            self.out_qubits,
            self.entries.clone(),
        )?)
    }

    pub fn from_matrix(m: &NonNegMatrix) -> Self {
        MatrixFile {
            in_qubits: m.in_qubits(),
            out_qubits: m.out_qubits(),
            entries: m.entries().to_vec(),
        }
    }
}

pub fn parse_matrix(text: &str) -> Result<NonNegMatrix, FormatError> {
    serde_json::from_str::<MatrixFile>(text)?.to_matrix()
}

pub fn matrix_to_json(m: &NonNegMatrix) -> String {
    serde_json::to_string(&MatrixFile::from_matrix(m)).expect("matrix files serialize")
}

/// Rounds to 12 significant digits so that evaluator noise does not show
/// up in printed canonical data.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[derive(Serialize)]
struct CanonicalDatum<'a> {
    n: usize,
    k: usize,
    #[serde(rename = "A")]
    a: Vec<u8>,
    x: Vec<u8>,
    #[serde(rename = "Lambda")]
    scale: f64,
    lambda: &'a [f64],
}

#[derive(Serialize)]
struct ZeroDatum {
    zero: usize,
}

/// One JSON line with fields `n, k, A, x, Lambda, lambda` in that order.
/// `A` is row-major and `n × k`.
pub fn normal_form_to_json(nf: &NormalFormData) -> String {
    match nf {
        NormalFormData::Zero { n } => serde_json::to_string(&ZeroDatum { zero: *n }),
        NormalFormData::Affine(nf) => {
            let lambda: Vec<f64> = nf.fourier.lambda.iter().map(|&l| round_sig(l)).collect();
            serde_json::to_string(&CanonicalDatum {
                n: nf.a.nrows(),
                k: nf.a.ncols(),
                a: nf.a.to_bits(),
                x: nf.x.to_bits(),
                scale: round_sig(nf.fourier.scale),
                lambda: &lambda,
            })
        }
    }
    .expect("canonical data serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::normalize_diagram;
    use crate::semantics::evaluate;

    const COIN: &str = r#"{"inputs":[],"outputs":[0],"nodes":[{"id":7,"kind":"red","param":0.25}],"edges":[[{"node":7},{"out":0}]]}"#;

    #[test]
    fn parse_coin() {
        let d = parse_diagram(COIN).unwrap();
        assert_eq!(evaluate(&d).unwrap().entries(), &[0.75, 0.25]);
    }

    #[test]
    fn default_weights_from_orientation() {
        let cup = r#"{"inputs":[],"outputs":[0,1],"nodes":[{"id":0,"kind":"green"}],
            "edges":[[{"node":0},{"out":0}],[{"node":0},{"out":1}]]}"#;
        assert_eq!(
            evaluate(&parse_diagram(cup).unwrap()).unwrap().entries(),
            &[0.5, 0.0, 0.0, 0.5]
        );
        let cap = r#"{"inputs":[0,1],"outputs":[],"nodes":[{"id":0,"kind":"green"}],
            "edges":[[{"in":0},{"node":0}],[{"in":1},{"node":0}]]}"#;
        assert_eq!(
            evaluate(&parse_diagram(cap).unwrap()).unwrap().entries(),
            &[2.0, 0.0, 0.0, 2.0]
        );
    }

    #[test]
    fn scalar_param_times_weight() {
        let s = r#"{"inputs":[],"outputs":[],"nodes":[{"id":0,"kind":"scalar","param":3,"weight":0.5}],"edges":[]}"#;
        assert_eq!(
            evaluate(&parse_diagram(s).unwrap()).unwrap().entries(),
            &[1.5]
        );
    }

    #[test]
    fn round_trip_is_isomorphic() {
        let d = Diagram::red(2, 1, 0.3)
            .unwrap()
            .then(&Diagram::green(1, 2, 0.7).unwrap())
            .unwrap()
            .bend_name();
        let text = diagram_to_json(&d);
        let back = parse_diagram(&text).unwrap();
        assert!(back.is_isomorphic(&d));
        assert_eq!(diagram_to_json(&back), text);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(parse_diagram("{"), Err(FormatError::Json(_))));
        let dangling = r#"{"inputs":[0],"outputs":[],"nodes":[],"edges":[]}"#;
        let err = parse_diagram(dangling).unwrap_err();
        assert!(err.to_string().contains("dangling boundary"));
        let ports = r#"{"inputs":[1],"outputs":[],"nodes":[],"edges":[]}"#;
        assert!(matches!(parse_diagram(ports), Err(FormatError::Invalid(_))));
        let range = r#"{"inputs":[],"outputs":[0],"nodes":[{"id":0,"kind":"red","param":1.5}],"edges":[[{"node":0},{"out":0}]]}"#;
        assert!(parse_diagram(range)
            .unwrap_err()
            .to_string()
            .contains("parameter range"));
        let unknown = r#"{"inputs":[],"outputs":[0],"nodes":[],"edges":[[{"node":3},{"out":0}]]}"#;
        assert!(matches!(
            parse_diagram(unknown),
            Err(FormatError::Invalid(_))
        ));
    }

    #[test]
    fn matrix_files() {
        let m = parse_matrix(r#"{"in_qubits":1,"out_qubits":1,"entries":[0,1,1,0]}"#).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(
            matrix_to_json(&m),
            r#"{"in_qubits":1,"out_qubits":1,"entries":[0.0,1.0,1.0,0.0]}"#
        );
        assert!(parse_matrix(r#"{"in_qubits":1,"out_qubits":1,"entries":[0,1,1]}"#).is_err());
    }

    #[test]
    fn canonical_json() {
        let nf = normalize_diagram(&parse_diagram(COIN).unwrap()).unwrap();
        assert_eq!(
            normal_form_to_json(&nf),
            r#"{"n":1,"k":1,"A":[1],"x":[0],"Lambda":0.75,"lambda":[0.333333333333]}"#
        );
        assert_eq!(
            normal_form_to_json(&NormalFormData::Zero { n: 0 }),
            r#"{"zero":0}"#
        );
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(0.0), 0.0);
    }
}

//! Random diagrams and affine-support vectors for testing and fuzzing.

use rand::Rng;

use rand::seq::SliceRandom;

use crate::diagram::{compose_par, compose_seq, Diagram, Endpoint, NodeId, NodeKind};
use crate::f2linalg::{canonical_basis, canonical_coset_rep, F2Matrix, F2Vector};
use crate::rewrite::{find_matches, RuleId, RuleInstance};

/// Shape and parameter ranges for [`random_diagram`].
#[derive(Clone, Debug)]
pub struct DiagramParams {
    pub inputs: usize,
    pub outputs: usize,
    pub spiders: usize,
    /// Internal edges beyond those needed to connect every spider.
    pub extra_edges: usize,
    /// Chance that a spider gets a boundary value (`p, μ ∈ {0, 1}`).
    pub affine_chance: f64,
    /// Chance that a spider gets a random weight instead of 1.
    pub weight_chance: f64,
    /// Chance of a scalar node.
    pub scalar_chance: f64,
}

impl DiagramParams {
    pub fn new(inputs: usize, outputs: usize, spiders: usize) -> Self {
        DiagramParams {
            inputs,
            outputs,
            spiders: spiders.max(1),
            extra_edges: spiders,
            affine_chance: 0.15,
            weight_chance: 0.3,
            scalar_chance: 0.2,
        }
    }
}

pub fn random_kind<R: Rng + ?Sized>(rng: &mut R, affine_chance: f64) -> NodeKind {
    let affine = rng.gen_bool(affine_chance);
    if rng.gen_bool(0.5) {
        let mu = if affine {
            f64::from(rng.gen_range(0..2))
        } else {
            rng.gen_range(0.5..2.0)
        };
        NodeKind::Green { mu }
    } else {
        let p = if affine {
            f64::from(rng.gen_range(0..2))
        } else {
            rng.gen_range(0.2..0.8)
        };
        NodeKind::Red { p }
    }
}

/// A connected-ish random diagram: every boundary port lands on a random
/// spider, spiders are joined along a random tree, then extra edges
/// (including the odd parallel edge or self-loop) are sprinkled in.
pub fn random_diagram<R: Rng + ?Sized>(rng: &mut R, params: &DiagramParams) -> Diagram {
    let mut d = Diagram::with_boundary(params.inputs, params.outputs);
    let spiders: Vec<NodeId> = (0..params.spiders)
        .map(|_| {
            let kind = random_kind(rng, params.affine_chance);
            let weight = if rng.gen_bool(params.weight_chance) {
                rng.gen_range(0.5..2.0)
            } else {
                1.0
            };
            d.add_node(kind, weight)
        })
        .collect();
    let pick = |rng: &mut R| Endpoint::Node(spiders[rng.gen_range(0..spiders.len())]);
    for i in 0..params.inputs {
        let target = pick(rng);
        d.add_edge(Endpoint::Input(i), target);
    }
    for j in 0..params.outputs {
        let source = pick(rng);
        d.add_edge(source, Endpoint::Output(j));
    }
    for k in 1..spiders.len() {
        let parent = spiders[rng.gen_range(0..k)];
        d.add_edge(Endpoint::Node(parent), Endpoint::Node(spiders[k]));
    }
    for _ in 0..params.extra_edges {
        let (a, b) = (pick(rng), pick(rng));
        if a != b || rng.gen_bool(0.2) {
            d.add_edge(a, b);
        }
    }
    if rng.gen_bool(params.scalar_chance) {
        d.add_node(NodeKind::Scalar, rng.gen_range(0.5..2.0));
    }
    d
}

/// A random diagram with `inputs + outputs ≤ max_wires` and a handful of
/// spiders.
pub fn random_small_diagram<R: Rng + ?Sized>(rng: &mut R, max_wires: usize) -> Diagram {
    let wires = rng.gen_range(0..=max_wires);
    let inputs = rng.gen_range(0..=wires);
    let spiders = rng.gen_range(1..=6);
    let mut params = DiagramParams::new(inputs, wires - inputs, spiders);
    params.extra_edges = rng.gen_range(0..=spiders);
    random_diagram(rng, &params)
}

/// A random diagram containing a fan-out site for rule `L`: a green hub
/// whose legs each meet a parity spider with a green leaf, the free legs
/// running into a random diagram.
pub fn random_fan_out_diagram<R: Rng + ?Sized>(rng: &mut R, max_wires: usize) -> Diagram {
    let legs = rng.gen_range(1..=3);
    let mut fan = Diagram::with_boundary(0, legs);
    let hub = fan.add_node(
        NodeKind::Green {
            mu: rng.gen_range(0.2..3.0),
        },
        rng.gen_range(0.5..2.0),
    );
    for j in 0..legs {
        let parity = fan.add_node(NodeKind::Red { p: 0.0 }, rng.gen_range(0.5..2.0));
        let leaf = fan.add_node(
            NodeKind::Green {
                mu: rng.gen_range(0.2..3.0),
            },
            rng.gen_range(0.5..2.0),
        );
        fan.add_edge(Endpoint::Node(hub), Endpoint::Node(parity));
        fan.add_edge(Endpoint::Node(leaf), Endpoint::Node(parity));
        fan.add_edge(Endpoint::Node(parity), Endpoint::Output(j));
    }
    let rest = random_small_diagram(rng, max_wires.saturating_sub(legs).min(4));
    let tail_outputs = rng.gen_range(
        0..=max_wires
            .saturating_sub(rest.inputs() + rest.outputs())
            .min(2),
    );
    let spiders = rng.gen_range(1..=3);
    let tail = random_diagram(rng, &DiagramParams::new(legs, tail_outputs, spiders));
    let glued = compose_par(&rest, &fan);
    compose_seq(
        &glued,
        &compose_par(&Diagram::identity(rest.outputs()), &tail),
    )
    .expect("arities match")
}

/// A random diagram with at most `max_wires` boundary wires together with
/// a site where `rule` matches.
pub fn random_site<R: Rng + ?Sized>(
    rng: &mut R,
    rule: &RuleId,
    max_wires: usize,
) -> (Diagram, RuleInstance) {
    loop {
        let d = if *rule == RuleId::L {
            random_fan_out_diagram(rng, max_wires)
        } else {
            let wires = rng.gen_range(0..=max_wires);
            let inputs = rng.gen_range(0..=wires);
            let spiders = rng.gen_range(2..=6);
            let mut params = DiagramParams::new(inputs, wires - inputs, spiders);
            params.extra_edges = rng.gen_range(0..=spiders);
            if matches!(rule, RuleId::Id | RuleId::Copy | RuleId::Bialg) {
                params.affine_chance = 0.5;
            }
            random_diagram(rng, &params)
        };
        if let Some(site) = find_matches(&d, rule).choose(rng) {
            return (d.clone(), site.clone());
        }
    }
}

/// A random injective `n × k` matrix in canonical form.
pub fn random_canonical_basis<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> F2Matrix {
    assert!(k <= n);
    if k == 0 {
        return F2Matrix::zeros(n, 0);
    }
    loop {
        let columns: Vec<F2Vector> = (0..k)
            .map(|_| F2Vector::from_bits((0..n).map(|_| rng.gen_bool(0.5))))
            .collect();
        let a = canonical_basis(&columns).expect("columns share a length");
        if a.ncols() == k {
            return a;
        }
    }
}

/// A vector over `F_2^n` supported on the affine subspace `{A y ⊕ x}` with
/// log-uniform positive values in `[e^-3, e^3]`, together with `A` and `x`.
pub fn random_affine_vector<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    k: usize,
) -> (Vec<f64>, F2Matrix, F2Vector) {
    let a = random_canonical_basis(rng, n, k);
    let x = canonical_coset_rep(&a, &F2Vector::from_bits((0..n).map(|_| rng.gen_bool(0.5))));
    let mut v = vec![0.0; 1 << n];
    for y in 0..1usize << k {
        let point = a.mul_vec(&F2Vector::from_index(y, k)).xor(&x);
        v[point.to_index()] = rng.gen_range(-3.0f64..3.0).exp();
    }
    (v, a, x)
}

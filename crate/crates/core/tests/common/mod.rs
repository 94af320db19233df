#![allow(dead_code)]

use deczx::diagram::{Diagram, Endpoint, NodeKind};
use deczx::random::random_small_diagram;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sums the product of node tensors over every assignment of every edge.
/// Exponential in the edge count; the reference the evaluator is held to.
pub fn brute_force(d: &Diagram) -> Vec<f64> {
    let edges: Vec<(Endpoint, Endpoint)> = d.edges().map(|(_, a, b)| (a, b)).collect();
    assert!(edges.len() <= 22, "too many edges for brute force");
    let (n, m) = (d.inputs(), d.outputs());
    let total = n + m;
    let mut out = vec![0.0; 1 << total];
    let nodes: Vec<_> = d.nodes().map(|(id, node)| (id, *node)).collect();
    for assignment in 0..1usize << edges.len() {
        let bit = |e: usize| (assignment >> e) & 1;
        let mut value = 1.0;
        for (id, node) in &nodes {
            let legs: Vec<usize> = edges
                .iter()
                .enumerate()
                .flat_map(|(e, (a, b))| {
                    let here = Endpoint::Node(*id);
                    std::iter::repeat_n(bit(e), (*a == here) as usize + (*b == here) as usize)
                })
                .collect();
            value *= node.weight
                * match node.kind {
                    NodeKind::Scalar => 1.0,
                    // a leg-free green spider is the scalar 1 + μ
                    NodeKind::Green { mu } if legs.is_empty() => 1.0 + mu,
                    NodeKind::Green { mu } => {
                        if legs.iter().all(|&x| x == 0) {
                            1.0
                        } else if legs.iter().all(|&x| x == 1) {
                            mu
                        } else {
                            0.0
                        }
                    }
                    NodeKind::Red { p } => {
                        if legs.iter().sum::<usize>() % 2 == 0 {
                            1.0 - p
                        } else {
                            p
                        }
                    }
                };
            if value == 0.0 {
                break;
            }
        }
        if value == 0.0 {
            continue;
        }
        let mut ports: Vec<Option<usize>> = vec![None; total];
        let mut consistent = true;
        for (e, (a, b)) in edges.iter().enumerate() {
            for end in [a, b] {
                let slot = match *end {
                    Endpoint::Output(j) => j,
                    Endpoint::Input(i) => m + i,
                    Endpoint::Node(_) => continue,
                };
                match ports[slot] {
                    Some(v) if v != bit(e) => consistent = false,
                    _ => ports[slot] = Some(bit(e)),
                }
            }
        }
        if !consistent {
            continue;
        }
        let index = ports
            .iter()
            .fold(0, |acc, p| (acc << 1) | p.expect("every port has an edge"));
        out[index] += value;
    }
    out
}

/// `a · b` for row-major `r × k` and `k × c` matrices.
pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = (0..k).map(|t| a[i * k + t] * b[t * c + j]).sum();
        }
    }
    out
}

/// Kronecker product of row-major `r1 × c1` and `r2 × c2` matrices.
pub fn kron(a: &[f64], b: &[f64], (r1, c1): (usize, usize), (r2, c2): (usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; r1 * r2 * c1 * c2];
    for i in 0..r1 * r2 {
        for j in 0..c1 * c2 {
            out[i * c1 * c2 + j] = a[(i / r2) * c1 + j / c2] * b[(i % r2) * c2 + j % c2];
        }
    }
    out
}

/// `max |a - b| ≤ tol · max(1, max |entry|)`.
pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |s, x| s.max(x.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid diagrams with at most `max_wires` boundary wires.
pub fn arb_diagram(max_wires: usize) -> impl Strategy<Value = Diagram> {
    any::<u64>().prop_map(move |seed| random_small_diagram(&mut rng(seed), max_wires))
}

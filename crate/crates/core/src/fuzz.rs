//! Seeded differential fuzzing of the normal form, the rewrite rules and
//! equality, with greedy shrinking of failing diagrams.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagram::{Diagram, EdgeId, NodeId};
use crate::format::diagram_to_json;
use crate::normalform::{diagrams_equal, nf_to_diagram, normalize_diagram, DEFAULT_TOL};
use crate::random::random_small_diagram;
use crate::rewrite::{
    self, evaluations_agree, find_matches, relatively_close, RuleId, RuleInstance,
};
use crate::semantics::evaluate;

pub const MAX_WIRES: usize = 10;

#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub wires: usize,
    pub iters: usize,
    /// Replaces red fusion by a broken variant, to exercise failure reports.
    pub inject_fault: bool,
}

#[derive(Clone, Debug)]
pub struct FuzzFailure {
    pub iteration: usize,
    pub check: &'static str,
    pub detail: String,
    /// The smallest failing diagram found by shrinking, as a JSON line.
    pub reproducer: String,
}

#[derive(Clone, Debug, Default)]
pub struct FuzzReport {
    pub iterations: usize,
    pub checks: usize,
    pub failures: Vec<FuzzFailure>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

const RULES: [RuleId; 7] = [
    RuleId::F1,
    RuleId::F2,
    RuleId::M,
    RuleId::L,
    RuleId::Id,
    RuleId::Copy,
    RuleId::Bialg,
];

struct Failure {
    check: &'static str,
    detail: String,
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

fn apply_rule(
    rule: &RuleInstance,
    d: &Diagram,
    inject_fault: bool,
) -> Result<Diagram, rewrite::RewriteError> {
    if inject_fault && rule.rule == RuleId::F2 {
        let edge = EdgeId(rule.site.edges[0]);
        return rewrite::fuse_red_with(d, edge, |p, q| (p + q).min(1.0));
    }
    rewrite::apply(rule, d)
}

/// Runs every check on `d`; `seed` fixes which rule sites are tried.
fn check_diagram(
    d: &Diagram,
    seed: u64,
    inject_fault: bool,
    checks: &mut usize,
) -> Result<(), Failure> {
    let fail = |check, detail: String| Failure { check, detail };
    let original = evaluate(d).map_err(|e| fail("evaluate", e.to_string()))?;

    *checks += 1;
    let nf = normalize_diagram(d).map_err(|e| fail("normalize", e.to_string()))?;
    let rebuilt = nf_to_diagram(&nf)
        .unbend(d.inputs())
        .map_err(|e| fail("round trip", e.to_string()))?;
    let back = evaluate(&rebuilt).map_err(|e| fail("round trip", e.to_string()))?;
    if !relatively_close(&original, &back, DEFAULT_TOL) {
        return Err(fail(
            "round trip",
            "normal-form diagram evaluates differently".into(),
        ));
    }
    let again = normalize_diagram(&rebuilt).map_err(|e| fail("round trip", e.to_string()))?;
    if !again.same_shape(&nf) {
        return Err(fail(
            "round trip",
            "re-normalizing changed the discrete data".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rule in &RULES {
        let mut sites = find_matches(d, rule);
        sites.shuffle(&mut rng);
        for site in sites.into_iter().take(2) {
            *checks += 1;
            if let Ok(after) = apply_rule(&site, d, inject_fault) {
                if !evaluations_agree(d, &after) {
                    return Err(fail(
                        "rule soundness",
                        format!(
                            "{} at {}",
                            site.rule,
                            serde_json::to_string(&site.site).expect("sites serialize")
                        ),
                    ));
                }
            }
        }
    }

    *checks += 1;
    if !diagrams_equal(d, d, DEFAULT_TOL).map_err(|e| fail("reflexivity", e.to_string()))? {
        return Err(fail("reflexivity", "diagram is not equal to itself".into()));
    }

    *checks += 1;
    let simplified = rewrite::simplify(d);
    if !diagrams_equal(d, &simplified, DEFAULT_TOL).map_err(|e| fail("simplify", e.to_string()))? {
        return Err(fail(
            "simplify",
            "simplified diagram is not equal to the original".into(),
        ));
    }
    Ok(())
}

/// Removes edges between spiders and spiders off the boundary while the
/// failure persists.
fn shrink(d: &Diagram, seed: u64, inject_fault: bool, check: &'static str) -> Diagram {
    let still_fails = |c: &Diagram| {
        c.validate().is_ok()
            && matches!(check_diagram(c, seed, inject_fault, &mut 0), Err(f) if f.check == check)
    };
    let mut current = d.clone();
    loop {
        let mut progressed = false;
        let edges: Vec<EdgeId> = current
            .edges()
            .filter(|(_, a, b)| !a.is_boundary() && !b.is_boundary())
            .map(|(e, _, _)| e)
            .collect();
        for e in edges {
            let mut candidate = current.clone();
            candidate.remove_edge(e);
            if still_fails(&candidate) {
                current = candidate;
                progressed = true;
            }
        }
        let interior: Vec<NodeId> = current
            .nodes()
            .map(|(id, _)| id)
            .filter(|&id| {
                current.incident_edges(id).iter().all(|&e| {
                    let (a, b) = current.edge(e).expect("incident");
                    !a.is_boundary() && !b.is_boundary()
                })
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for id in interior {
            let mut candidate = current.clone();
            candidate.remove_node(id);
            if still_fails(&candidate) {
                current = candidate;
                progressed = true;
            }
        }
        if !progressed {
            return current.compacted();
        }
    }
}

pub fn run(config: &FuzzConfig) -> FuzzReport {
    let wires = config.wires.min(MAX_WIRES);
    let mut report = FuzzReport {
        iterations: config.iters,
        ..FuzzReport::default()
    };
    for iteration in 0..config.iters {
        let mut rng = iteration_rng(config.seed, iteration);
        let d = random_small_diagram(&mut rng, wires);
        let site_seed = config.seed ^ (iteration as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        if let Err(f) = check_diagram(&d, site_seed, config.inject_fault, &mut report.checks) {
            let small = shrink(&d, site_seed, config.inject_fault, f.check);
            report.failures.push(FuzzFailure {
                iteration,
                check: f.check,
                detail: f.detail,
                reproducer: diagram_to_json(&small),
            });
        }
    }
    report
}

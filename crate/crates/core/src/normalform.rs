//! Canonical normal forms for states with affine support, equality of
//! diagrams, and synthesis of diagrams from matrices.
//!
//! A nonzero vector `v` over `F_2^n` whose support is an affine subspace
//! `{A y ⊕ x}` is determined by the canonical pair `(A, x)` and the
//! full-support vector `u_y = v_{Ay⊕x}`, which in turn has a unique Fourier
//! parametrization. Maps `n → m` are handled through their bent states.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::diagram::{
    affine_map, fourier_gadget_state, matrix_arrow, not_layer, tensor_all, Diagram, DiagramError,
};
use crate::f2linalg::{canonical_basis, canonical_coset_rep, F2Matrix, F2Vector};
use crate::fourier::{fourier_evaluate, fourier_synthesize, FourierData, FourierError};
use crate::semantics::{evaluate, support_of, EvalError, NonNegMatrix};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("support is not affine: {a} ⊕ {b} ⊕ {c} is missing")]
    NonAffine {
        a: F2Vector,
        b: F2Vector,
        c: F2Vector,
    },
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error("arity mismatch: {0}")]
    Arity(String),
}

/// Canonical data of a nonzero state with affine support.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineNormalForm {
    /// `n × k`, columns the reduced echelon basis of the support direction.
    pub a: F2Matrix,
    /// The coset representative vanishing on the pivots of `a`.
    pub x: F2Vector,
    pub fourier: FourierData,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NormalFormData {
    Zero { n: usize },
    Affine(AffineNormalForm),
}

impl NormalFormData {
    pub fn n(&self) -> usize {
        match self {
            NormalFormData::Zero { n } => *n,
            NormalFormData::Affine(nf) => nf.a.nrows(),
        }
    }

    /// Rank of the support direction; `None` for the zero state.
    pub fn k(&self) -> Option<usize> {
        match self {
            NormalFormData::Zero { .. } => None,
            NormalFormData::Affine(nf) => Some(nf.a.ncols()),
        }
    }

    /// The state this datum describes.
    pub fn vector(&self) -> Vec<f64> {
        match self {
            NormalFormData::Zero { n } => vec![0.0; 1 << n],
            NormalFormData::Affine(nf) => {
                let (n, k) = (nf.a.nrows(), nf.a.ncols());
                let mut v = vec![0.0; 1 << n];
                for (y, u) in fourier_evaluate(&nf.fourier).into_iter().enumerate() {
                    let point = nf.a.mul_vec(&F2Vector::from_index(y, k)).xor(&nf.x);
                    v[point.to_index()] = u;
                }
                v
            }
        }
    }

    /// Same variant and discrete data; continuous data within relative `tol`.
    pub fn approx_eq(&self, other: &NormalFormData, tol: f64) -> bool {
        match (self, other) {
            (NormalFormData::Zero { n }, NormalFormData::Zero { n: m }) => n == m,
            (NormalFormData::Affine(p), NormalFormData::Affine(q)) => {
                let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs());
                p.a == q.a
                    && p.x == q.x
                    && close(p.fourier.scale, q.fourier.scale)
                    && p.fourier.lambda.len() == q.fourier.lambda.len()
                    && p.fourier
                        .lambda
                        .iter()
                        .zip(&q.fourier.lambda)
                        .all(|(&a, &b)| close(a, b))
            }
            _ => false,
        }
    }

    /// Whether the discrete parts `(n, k, A, x)` agree.
    pub fn same_shape(&self, other: &NormalFormData) -> bool {
        match (self, other) {
            (NormalFormData::Zero { n }, NormalFormData::Zero { n: m }) => n == m,
            (NormalFormData::Affine(p), NormalFormData::Affine(q)) => p.a == q.a && p.x == q.x,
            _ => false,
        }
    }
}

/// A triple `a, b, c` of support points with `a ⊕ b ⊕ c` outside the
/// support, or `None` when the support is affine.
///
/// Grows a subspace inside `S ⊕ a` one point at a time; the first point
/// whose translates leave `S ⊕ a` exhibits the triple.
pub fn non_affine_witness(support: &BTreeSet<F2Vector>) -> Option<(F2Vector, F2Vector, F2Vector)> {
    let a = support.iter().next()?.clone();
    let shifted: BTreeSet<F2Vector> = support.iter().map(|p| p.xor(&a)).collect();
    let mut span: BTreeSet<F2Vector> = BTreeSet::from([F2Vector::zeros(a.len())]);
    for b in &shifted {
        if span.contains(b) {
            continue;
        }
        let mut added = Vec::with_capacity(span.len());
        for v in &span {
            let sum = v.xor(b);
            if !shifted.contains(&sum) {
                return Some((a.clone(), v.xor(&a), b.xor(&a)));
            }
            added.push(sum);
        }
        span.extend(added);
    }
    None
}

/// Canonical datum of a state vector of length `2^n`.
pub fn normalize_state(v: &[f64]) -> Result<NormalFormData, NormalFormError> {
    let state = NonNegMatrix::state(v.to_vec())?;
    let n = state.out_qubits();
    let support = support_of(&state);
    if support.is_empty() {
        return Ok(NormalFormData::Zero { n });
    }
    if let Some((a, b, c)) = non_affine_witness(&support) {
        return Err(NormalFormError::NonAffine { a, b, c });
    }
    let base = support.iter().next().expect("nonempty").clone();
    let directions: Vec<F2Vector> = support.iter().map(|p| p.xor(&base)).collect();
    let a = canonical_basis(&directions).expect("support points share a length");
    let x = canonical_coset_rep(&a, &base);
    let k = a.ncols();
    let u: Vec<f64> = (0..1usize << k)
        .map(|y| v[a.mul_vec(&F2Vector::from_index(y, k)).xor(&x).to_index()])
        .collect();
    let fourier = fourier_synthesize(&u)?;
    Ok(NormalFormData::Affine(AffineNormalForm { a, x, fourier }))
}

/// Canonical datum of a diagram `n → m`, taken of its bent state on
/// `m + n` wires.
pub fn normalize_diagram(d: &Diagram) -> Result<NormalFormData, NormalFormError> {
    let state = evaluate(&d.bend_name())?;
    normalize_state(state.entries())
}

/// The normal-form diagram: a Fourier gadget state on `k` wires, the matrix
/// arrow of `A`, then `NOT` on the wires where `x` is one.
pub fn nf_to_diagram(nf: &NormalFormData) -> Diagram {
    match nf {
        NormalFormData::Zero { n } => {
            let zero = Diagram::scalar(0.0).expect("zero is a valid scalar");
            let states: Vec<Diagram> = (0..*n)
                .map(|_| Diagram::red(0, 1, 0.0).expect("valid"))
                .collect();
            zero.tensor(&tensor_all(&states))
        }
        NormalFormData::Affine(nf) => {
            let gadget = fourier_gadget_state(&nf.fourier.lambda, nf.fourier.scale)
                .expect("fourier data is positive");
            gadget
                .then(&matrix_arrow(&nf.a))
                .and_then(|d| d.then(&not_layer(&nf.x)))
                .expect("arities match by construction")
        }
    }
}

/// Like [`nf_to_diagram`] but with the offset folded into the red spiders
/// of the matrix arrow.
pub fn nf_to_compact_diagram(nf: &NormalFormData) -> Diagram {
    match nf {
        NormalFormData::Zero { .. } => nf_to_diagram(nf),
        NormalFormData::Affine(nf) => {
            let gadget = fourier_gadget_state(&nf.fourier.lambda, nf.fourier.scale)
                .expect("fourier data is positive");
            gadget
                .then(&affine_map(&nf.a, &nf.x).expect("offset matches"))
                .expect("arities match")
        }
    }
}

/// Whether two diagrams of the same type have the same interpretation,
/// decided through their canonical data.
pub fn diagrams_equal(d1: &Diagram, d2: &Diagram, tol: f64) -> Result<bool, NormalFormError> {
    if (d1.inputs(), d1.outputs()) != (d2.inputs(), d2.outputs()) {
        return Err(NormalFormError::Arity(format!(
            "{}→{} vs {}→{}",
            d1.inputs(),
            d1.outputs(),
            d2.inputs(),
            d2.outputs()
        )));
    }
    Ok(normalize_diagram(d1)?.approx_eq(&normalize_diagram(d2)?, tol))
}

/// A diagram `n → m` evaluating to `m`.
pub fn synthesize(m: &NonNegMatrix) -> Result<Diagram, NormalFormError> {
    let n = m.in_qubits();
    let bent = m.vectorize().scaled(2f64.powi(-(n as i32)));
    let nf = normalize_state(bent.entries())?;
    Ok(nf_to_diagram(&nf).unbend(n)?)
}

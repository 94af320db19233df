//! Dense evaluation of diagrams into nonnegative matrices.
//!
//! Index convention: a matrix `n → m` has `2^m` rows and `2^n` columns; wire
//! 0 is the most significant bit of both row and column indices. The
//! flattened vector `vec(M)` concatenates output bits then input bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::diagram::{Diagram, DiagramError, Endpoint, NodeKind, Violation};
use crate::f2linalg::F2Vector;

/// Relative threshold below which an entry counts as zero.
pub const SUPPORT_TOLERANCE: f64 = 1e-9;

/// Largest intermediate factor, in variables, the contraction will build.
pub const MAX_FACTOR_VARS: usize = 26;

/// Red spiders with more distinct legs than this are split into a chain.
const PARITY_CHUNK: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid diagram: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(
        "contraction needs a factor over {0} variables, more than the limit of {MAX_FACTOR_VARS}"
    )]
    TooLarge(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl From<EvalError> for DiagramError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Invalid(v) => DiagramError::Invalid(v),
            other => DiagramError::ArityMismatch(other.to_string()),
        }
    }
}

/// A `2^m × 2^n` matrix of nonnegative reals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NonNegMatrix {
    in_qubits: usize,
    out_qubits: usize,
    entries: Vec<f64>,
}

impl NonNegMatrix {
    pub fn new(in_qubits: usize, out_qubits: usize, entries: Vec<f64>) -> Result<Self, EvalError> {
        let expected = 1usize << (in_qubits + out_qubits);
        if entries.len() != expected {
            return Err(EvalError::Shape(format!(
                "{} entries for a {}→{} matrix, expected {expected}",
                entries.len(),
                in_qubits,
                out_qubits
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(EvalError::Shape(format!(
                "entry {bad} is not a finite nonnegative real"
            )));
        }
        Ok(Self {
            in_qubits,
            out_qubits,
            entries,
        })
    }

    pub fn zeros(in_qubits: usize, out_qubits: usize) -> Self {
        Self {
            in_qubits,
            out_qubits,
            entries: vec![0.0; 1 << (in_qubits + out_qubits)],
        }
    }

    pub fn identity(qubits: usize) -> Self {
        let dim = 1 << qubits;
        let mut m = Self::zeros(qubits, qubits);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    /// A state `0 → n`.
    pub fn state(entries: Vec<f64>) -> Result<Self, EvalError> {
        let n = entries.len().trailing_zeros() as usize;
        if !entries.len().is_power_of_two() {
            return Err(EvalError::Shape(format!(
                "state length {} is not a power of two",
                entries.len()
            )));
        }
        Self::new(0, n, entries)
    }

    pub fn in_qubits(&self) -> usize {
        self.in_qubits
    }

    pub fn out_qubits(&self) -> usize {
        self.out_qubits
    }

    pub fn rows(&self) -> usize {
        1 << self.out_qubits
    }

    pub fn cols(&self) -> usize {
        1 << self.in_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols() + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&x| x == 0.0)
    }

    /// Matrix product `self · rhs`, i.e. `rhs` first.
    pub fn mul(&self, rhs: &NonNegMatrix) -> Result<NonNegMatrix, EvalError> {
        if self.in_qubits != rhs.out_qubits {
            return Err(EvalError::Shape(format!(
                "cannot multiply {}→{} by {}→{}",
                self.in_qubits, self.out_qubits, rhs.in_qubits, rhs.out_qubits
            )));
        }
        let (r, k, c) = (self.rows(), self.cols(), rhs.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for t in 0..k {
                let a = self.entries[i * k + t];
                if a == 0.0 {
                    continue;
                }
                for j in 0..c {
                    out[i * c + j] += a * rhs.entries[t * c + j];
                }
            }
        }
        Ok(NonNegMatrix {
            in_qubits: rhs.in_qubits,
            out_qubits: self.out_qubits,
            entries: out,
        })
    }

    /// Kronecker product with `self` on the high wires.
    pub fn kron(&self, rhs: &NonNegMatrix) -> NonNegMatrix {
        let (r1, c1, r2, c2) = (self.rows(), self.cols(), rhs.rows(), rhs.cols());
        let mut out = vec![0.0; r1 * r2 * c1 * c2];
        let cols = c1 * c2;
        for i1 in 0..r1 {
            for j1 in 0..c1 {
                let a = self.entries[i1 * c1 + j1];
                for i2 in 0..r2 {
                    for j2 in 0..c2 {
                        out[(i1 * r2 + i2) * cols + j1 * c2 + j2] = a * rhs.entries[i2 * c2 + j2];
                    }
                }
            }
        }
        NonNegMatrix {
            in_qubits: self.in_qubits + rhs.in_qubits,
            out_qubits: self.out_qubits + rhs.out_qubits,
            entries: out,
        }
    }

    pub fn scaled(&self, s: f64) -> NonNegMatrix {
        NonNegMatrix {
            entries: self.entries.iter().map(|x| x * s).collect(),
            ..self.clone()
        }
    }

    /// Row-major flattening read as a state on `m + n` wires.
    pub fn vectorize(&self) -> NonNegMatrix {
        NonNegMatrix {
            in_qubits: 0,
            out_qubits: self.in_qubits + self.out_qubits,
            entries: self.entries.clone(),
        }
    }

    /// Inverse of [`NonNegMatrix::vectorize`]: the last `n` wires become inputs.
    pub fn unvectorize(&self, n: usize) -> Result<NonNegMatrix, EvalError> {
        let total = self.in_qubits + self.out_qubits;
        if n > total {
            return Err(EvalError::Shape(format!(
                "cannot take {n} inputs from {total} wires"
            )));
        }
        Ok(NonNegMatrix {
            in_qubits: n,
            out_qubits: total - n,
            entries: self.entries.clone(),
        })
    }
}

impl fmt::Display for NonNegMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|c| format!("{}", self.get(r, c)))
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// A `2^m × 2^n` complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    in_qubits: usize,
    out_qubits: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(
        in_qubits: usize,
        out_qubits: usize,
        entries: Vec<Complex64>,
    ) -> Result<Self, EvalError> {
        let expected = 1usize << (in_qubits + out_qubits);
        if entries.len() != expected {
            return Err(EvalError::Shape(format!(
                "{} entries, expected {expected}",
                entries.len()
            )));
        }
        Ok(Self {
            in_qubits,
            out_qubits,
            entries,
        })
    }

    pub fn in_qubits(&self) -> usize {
        self.in_qubits
    }

    pub fn out_qubits(&self) -> usize {
        self.out_qubits
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// Entrywise squared modulus.
pub fn decohere_pure(m: &ComplexMatrix) -> NonNegMatrix {
    NonNegMatrix {
        in_qubits: m.in_qubits,
        out_qubits: m.out_qubits,
        entries: m.entries.iter().map(|z| z.norm_sqr()).collect(),
    }
}

/// `max |a - b| ≤ tol · (1 + max |entry|)`.
pub fn approx_equal(a: &NonNegMatrix, b: &NonNegMatrix, tol: f64) -> Result<bool, EvalError> {
    if a.in_qubits != b.in_qubits || a.out_qubits != b.out_qubits {
        return Err(EvalError::Shape(format!(
            "{}→{} vs {}→{}",
            a.in_qubits, a.out_qubits, b.in_qubits, b.out_qubits
        )));
    }
    let scale = a.max_entry().max(b.max_entry());
    let diff = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(diff <= tol * (1.0 + scale))
}

/// Indices of the entries above [`SUPPORT_TOLERANCE`] times the largest
/// entry, as bit vectors over output wires then input wires.
pub fn support_of(m: &NonNegMatrix) -> BTreeSet<F2Vector> {
    let max = m.max_entry();
    let wires = m.in_qubits + m.out_qubits;
    if max == 0.0 {
        return BTreeSet::new();
    }
    m.entries
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > SUPPORT_TOLERANCE * max)
        .map(|(i, _)| F2Vector::from_index(i, wires))
        .collect()
}

pub fn support(d: &Diagram) -> Result<BTreeSet<F2Vector>, EvalError> {
    Ok(support_of(&evaluate(d)?))
}

/// A dense table over binary variables; bit `j` of the table index holds the
/// value of `vars[j]`.
#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    fn unary(var: usize, v0: f64, v1: f64) -> Self {
        Factor {
            vars: vec![var],
            table: vec![v0, v1],
        }
    }

    /// `even` on even parity of `vars`, `odd` otherwise.
    fn parity(vars: Vec<usize>, even: f64, odd: f64) -> Self {
        let table = (0..1usize << vars.len())
            .map(|i| if i.count_ones() % 2 == 0 { even } else { odd })
            .collect();
        Factor { vars, table }
    }

    fn is_subset_of(&self, other: &Factor) -> bool {
        self.vars
            .iter()
            .all(|v| other.vars.binary_search(v).is_ok())
    }
}

/// Pointwise product of `factors` over the sorted union of their variables.
fn product(factors: &[&Factor]) -> Factor {
    let vars: Vec<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let positions: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| {
            f.vars
                .iter()
                .map(|v| vars.binary_search(v).expect("union contains var"))
                .collect()
        })
        .collect();
    let size = 1usize << vars.len();
    let mut table = vec![1.0; size];
    for (f, pos) in factors.iter().zip(&positions) {
        for (idx, slot) in table.iter_mut().enumerate() {
            if *slot == 0.0 {
                continue;
            }
            let mut sub = 0;
            for (j, &p) in pos.iter().enumerate() {
                sub |= ((idx >> p) & 1) << j;
            }
            *slot *= f.table[sub];
        }
    }
    Factor { vars, table }
}

fn sum_out(f: &Factor, var: usize) -> Factor {
    let p = f.vars.binary_search(&var).expect("var present");
    let mut vars = f.vars.clone();
    vars.remove(p);
    let low = (1usize << p) - 1;
    let table = (0..1usize << vars.len())
        .map(|i| {
            let base = (i & low) | ((i & !low) << 1);
            f.table[base] + f.table[base | (1 << p)]
        })
        .collect();
    Factor { vars, table }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut cur = x;
        while self.0[cur] != root {
            let next = self.0[cur];
            self.0[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Merges factors whose variables are a subset of another's.
fn absorb(factors: &mut Vec<Factor>) {
    loop {
        let mut merged = false;
        'outer: for i in 0..factors.len() {
            for j in 0..factors.len() {
                if i != j && factors[i].is_subset_of(&factors[j]) {
                    let small = factors.swap_remove(i);
                    let j = if j == factors.len() { i } else { j };
                    factors[j] = product(&[&factors[j], &small]);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return;
        }
    }
}

/// Exact evaluation by variable elimination.
///
/// Every edge is a binary variable. All edges at a green spider carry the
/// same value, so they are merged first and the spider becomes a unary
/// factor; a red spider becomes a parity factor over its legs. Internal
/// variables are then summed out greedily, smallest resulting factor
/// first.
pub fn evaluate(d: &Diagram) -> Result<NonNegMatrix, EvalError> {
    d.validate().map_err(EvalError::Invalid)?;
    let edge_ids: Vec<_> = d.edges().map(|(e, _, _)| e).collect();
    let edge_index: BTreeMap<_, usize> =
        edge_ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut uf = UnionFind::new(edge_ids.len());
    let mut scalar = 1.0;
    let mut legs: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (e, a, b) in d.edges() {
        for end in [a, b] {
            if let Endpoint::Node(id) = end {
                legs.entry(id).or_default().push(edge_index[&e]);
            }
        }
    }
    for (id, node) in d.nodes() {
        if let NodeKind::Green { .. } = node.kind {
            if let Some(l) = legs.get(&id) {
                for w in l.windows(2) {
                    uf.union(w[0], w[1]);
                }
            }
        }
    }
    let mut factors = Vec::new();
    let mut next_var = edge_ids.len();
    for (id, node) in d.nodes() {
        let l = legs.get(&id).map(Vec::as_slice).unwrap_or(&[]);
        match node.kind {
            NodeKind::Scalar => scalar *= node.weight,
            NodeKind::Green { mu } => match l.first() {
                None => scalar *= node.weight * (1.0 + mu),
                Some(&e) => factors.push(Factor::unary(uf.find(e), node.weight, node.weight * mu)),
            },
            NodeKind::Red { p } => {
                let mut odd: BTreeSet<usize> = BTreeSet::new();
                for &e in l {
                    let v = uf.find(e);
                    if !odd.remove(&v) {
                        odd.insert(v);
                    }
                }
                let mut vars: Vec<usize> = odd.into_iter().collect();
                if vars.is_empty() {
                    scalar *= node.weight * (1.0 - p);
                    continue;
                }
                // long parities become a chain of small ones joined by fresh variables
                while vars.len() > PARITY_CHUNK {
                    let rest = vars.split_off(PARITY_CHUNK - 1);
                    let aux = next_var;
                    next_var += 1;
                    vars.push(aux);
                    factors.push(Factor::parity(vars, 1.0, 0.0));
                    vars = std::iter::once(aux).chain(rest).collect();
                }
                vars.sort_unstable();
                factors.push(Factor::parity(
                    vars,
                    node.weight * (1.0 - p),
                    node.weight * p,
                ));
            }
        }
    }

    let boundary_edge = |port: Endpoint| {
        let e = d.boundary_edge(port).expect("validated");
        edge_index[&e]
    };
    let in_vars: Vec<usize> = (0..d.inputs())
        .map(|i| uf.find(boundary_edge(Endpoint::Input(i))))
        .collect();
    let out_vars: Vec<usize> = (0..d.outputs())
        .map(|j| uf.find(boundary_edge(Endpoint::Output(j))))
        .collect();
    let boundary: BTreeSet<usize> = in_vars.iter().chain(&out_vars).copied().collect();

    // internal edge classes that no factor mentions each sum to 2
    let mut mentioned: BTreeSet<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .collect();
    mentioned.extend(boundary.iter().copied());
    let roots: BTreeSet<usize> = (0..edge_ids.len()).map(|e| uf.find(e)).collect();
    scalar *= 2f64.powi(roots.iter().filter(|r| !mentioned.contains(r)).count() as i32);

    absorb(&mut factors);
    let mut internal: BTreeSet<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .filter(|v| !boundary.contains(v))
        .collect();
    while !internal.is_empty() {
        let cost = |v: usize| {
            factors
                .iter()
                .filter(|f| f.vars.binary_search(&v).is_ok())
                .flat_map(|f| f.vars.iter().copied())
                .collect::<BTreeSet<_>>()
                .len()
        };
        let (size, var) = internal
            .iter()
            .map(|&v| (cost(v), v))
            .min()
            .expect("nonempty");
        if size > MAX_FACTOR_VARS {
            return Err(EvalError::TooLarge(size));
        }
        internal.remove(&var);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors
            .into_iter()
            .partition(|f| f.vars.binary_search(&var).is_ok());
        factors = rest;
        let merged = sum_out(&product(&touching.iter().collect::<Vec<_>>()), var);
        if merged.vars.is_empty() {
            scalar *= merged.table[0];
        } else {
            factors.push(merged);
            absorb(&mut factors);
        }
    }

    let boundary_vars: Vec<usize> = boundary.iter().copied().collect();
    if boundary_vars.len() > MAX_FACTOR_VARS {
        return Err(EvalError::TooLarge(boundary_vars.len()));
    }
    let mut all = product(&factors.iter().collect::<Vec<_>>());
    if all.vars.len() < boundary_vars.len() {
        // boundary variables no factor touches are unconstrained
        let pad: Vec<Factor> = boundary_vars
            .iter()
            .filter(|v| all.vars.binary_search(v).is_err())
            .map(|&v| Factor::unary(v, 1.0, 1.0))
            .collect();
        let mut refs: Vec<&Factor> = pad.iter().collect();
        refs.push(&all);
        all = product(&refs);
    }
    debug_assert_eq!(all.vars, boundary_vars);

    let (n, m) = (d.inputs(), d.outputs());
    let wires: Vec<usize> = out_vars
        .iter()
        .chain(&in_vars)
        .map(|v| all.vars.binary_search(v).unwrap())
        .collect();
    let total = n + m;
    let mut entries = vec![0.0; 1 << total];
    'entry: for (idx, slot) in entries.iter_mut().enumerate() {
        let mut sub = 0usize;
        let mut assigned = 0usize;
        for (w, &pos) in wires.iter().enumerate() {
            let bit = (idx >> (total - 1 - w)) & 1;
            if assigned >> pos & 1 == 1 {
                if (sub >> pos) & 1 != bit {
                    continue 'entry;
                }
            } else {
                assigned |= 1 << pos;
                sub |= bit << pos;
            }
        }
        *slot = scalar * all.table[sub];
    }
    Ok(NonNegMatrix {
        in_qubits: n,
        out_qubits: m,
        entries,
    })
}

//! Linear and affine algebra over GF(2).
//!
//! Vectors are packed bit strings. When a vector is identified with an
//! integer index (basis states, subsets), component 0 is the most
//! significant bit, so the string `01` is index 1 and `10` is index 2.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum F2Error {
    #[error("empty span: no vectors given")]
    EmptySpan,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid bit string {0:?}")]
    Parse(String),
}

const WORD: usize = 64;

fn word_count(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A vector in `F_2^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct F2Vector {
    len: usize,
    words: Vec<u64>,
}

impl F2Vector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn from_bits<I, B>(bits: I) -> Self
    where
        I: IntoIterator<Item = B>,
        B: Into<bool>,
    {
        let bits: Vec<bool> = bits.into_iter().map(Into::into).collect();
        let mut v = Self::zeros(bits.len());
        for (i, b) in bits.into_iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Big-endian decoding of `index` into `len` bits.
    pub fn from_index(index: usize, len: usize) -> Self {
        assert!(
            len >= usize::BITS as usize || index >> len == 0,
            "index {index} does not fit in {len} bits"
        );
        let mut v = Self::zeros(len);
        for i in 0..len {
            let shift = len - 1 - i;
            if shift < usize::BITS as usize && (index >> shift) & 1 == 1 {
                v.set(i, true);
            }
        }
        v
    }

    /// Inverse of [`F2Vector::from_index`]. Panics above 63 components.
    pub fn to_index(&self) -> usize {
        assert!(self.len < usize::BITS as usize, "vector too long to index");
        (0..self.len).fold(0, |acc, i| (acc << 1) | self.get(i) as usize)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &F2Vector) {
        assert_eq!(self.len, other.len, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &F2Vector) -> F2Vector {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// The scalar product `⊕_i a_i b_i`.
    pub fn dot(&self, other: &F2Vector) -> bool {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum::<u32>()
            % 2
            == 1
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Position of the first set component.
    pub fn leading_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(k, w)| k * WORD + w.trailing_zeros() as usize)
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.bits().map(u8::from).collect()
    }

    pub fn concat(&self, other: &F2Vector) -> F2Vector {
        F2Vector::from_bits(self.bits().chain(other.bits()))
    }
}

impl std::str::FromStr for F2Vector {
    type Err = F2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(F2Error::Parse(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(F2Vector::from_bits)
    }
}

impl fmt::Display for F2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for F2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F2Vector({self})")
    }
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct F2Matrix {
    rows: Vec<F2Vector>,
    cols: usize,
}

impl F2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows: vec![F2Vector::zeros(cols); rows],
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(rows: Vec<F2Vector>, cols: usize) -> Result<Self, F2Error> {
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(F2Error::LengthMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        Ok(Self { rows, cols })
    }

    /// Builds a matrix from nested 0/1 rows. Panics on ragged input.
    pub fn from_bit_rows(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let rows = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), cols, "ragged bit rows");
                F2Vector::from_bits(r.iter().map(|&b| b != 0))
            })
            .collect();
        Self { rows, cols }
    }

    pub fn from_columns(columns: &[F2Vector], rows: usize) -> Result<Self, F2Error> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(F2Error::LengthMismatch {
                    expected: rows,
                    found: c.len(),
                });
            }
            for i in 0..rows {
                m.set(i, j, c.get(i));
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.rows[i].set(j, value);
    }

    pub fn row(&self, i: usize) -> &F2Vector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[F2Vector] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> F2Vector {
        F2Vector::from_bits(self.rows.iter().map(|r| r.get(j)))
    }

    pub fn columns(&self) -> Vec<F2Vector> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> F2Matrix {
        let mut t = F2Matrix::zeros(self.cols, self.nrows());
        for i in 0..self.nrows() {
            for j in 0..self.cols {
                if self.get(i, j) {
                    t.set(j, i, true);
                }
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &F2Vector) -> F2Vector {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        F2Vector::from_bits(self.rows.iter().map(|r| r.dot(v)))
    }

    pub fn mul(&self, other: &F2Matrix) -> F2Matrix {
        assert_eq!(self.cols, other.nrows(), "matrix dimension mismatch");
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc = F2Vector::zeros(other.cols);
                for (k, orow) in other.rows.iter().enumerate() {
                    if r.get(k) {
                        acc.xor_assign(orow);
                    }
                }
                acc
            })
            .collect();
        F2Matrix {
            rows,
            cols: other.cols,
        }
    }

    /// Reduced row echelon form and the pivot column of each nonzero row.
    pub fn rref(&self) -> (F2Matrix, Vec<usize>) {
        let mut rows = self.rows.clone();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..self.cols {
            let Some(p) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.get(col) {
                    row.xor_assign(&pivot_row);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        (
            F2Matrix {
                rows,
                cols: self.cols,
            },
            pivots,
        )
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    pub fn is_invertible(&self) -> bool {
        self.nrows() == self.cols && self.rank() == self.cols
    }

    pub fn inverse(&self) -> Result<F2Matrix, F2Error> {
        if self.nrows() != self.cols {
            return Err(F2Error::InvalidDimension(format!(
                "{}x{} is not square",
                self.nrows(),
                self.cols
            )));
        }
        let n = self.cols;
        if n == 0 {
            return Ok(F2Matrix::zeros(0, 0));
        }
        let augmented: Vec<F2Vector> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.concat(&F2Vector::from_index(1 << (n - 1 - i), n)))
            .collect();
        let (reduced, pivots) = F2Matrix {
            rows: augmented,
            cols: 2 * n,
        }
        .rref();
        if pivots.len() < n || pivots[n - 1] >= n {
            return Err(F2Error::Singular);
        }
        let rows = reduced
            .rows
            .iter()
            .map(|r| F2Vector::from_bits(r.bits().skip(n)))
            .collect();
        Ok(F2Matrix { rows, cols: n })
    }

    /// Matrix with `self` on top of `other`.
    pub fn vstack(&self, other: &F2Matrix) -> F2Matrix {
        assert_eq!(self.cols, other.cols);
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        F2Matrix {
            rows,
            cols: self.cols,
        }
    }

    /// Block-diagonal sum.
    pub fn direct_sum(&self, other: &F2Matrix) -> F2Matrix {
        let cols = self.cols + other.cols;
        let left = F2Vector::zeros(self.cols);
        let right = F2Vector::zeros(other.cols);
        let rows = self
            .rows
            .iter()
            .map(|r| r.concat(&right))
            .chain(other.rows.iter().map(|r| left.concat(r)))
            .collect();
        F2Matrix { rows, cols }
    }

    /// Row-major flattening, one entry per bit.
    pub fn to_bits(&self) -> Vec<u8> {
        self.rows.iter().flat_map(|r| r.to_bits()).collect()
    }
}

impl fmt::Display for F2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.rows.iter().map(ToString::to_string).collect();
        write!(f, "[{}]", rows.join(","))
    }
}

impl fmt::Debug for F2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F2Matrix({}x{} {self})", self.nrows(), self.cols)
    }
}

fn common_length<'a>(
    points: impl IntoIterator<Item = &'a F2Vector>,
) -> Result<Option<usize>, F2Error> {
    let mut len = None;
    for p in points {
        match len {
            None => len = Some(p.len()),
            Some(n) if n != p.len() => {
                return Err(F2Error::LengthMismatch {
                    expected: n,
                    found: p.len(),
                })
            }
            _ => {}
        }
    }
    Ok(len)
}

/// Canonical injective basis of `span(points)`.
///
/// The columns are the nonzero rows of the reduced row echelon form of the
/// matrix whose rows are `points`, ordered by pivot. The result depends only
/// on the span.
pub fn canonical_basis(points: &[F2Vector]) -> Result<F2Matrix, F2Error> {
    let n = common_length(points)?.ok_or(F2Error::EmptySpan)?;
    let (reduced, pivots) = F2Matrix {
        rows: points.to_vec(),
        cols: n,
    }
    .rref();
    let columns = &reduced.rows[..pivots.len()];
    F2Matrix::from_columns(columns, n)
}

/// Pivot coordinate of each column of a canonical basis.
pub fn pivot_coordinates(basis: &F2Matrix) -> Vec<usize> {
    basis
        .columns()
        .iter()
        .map(|c| c.leading_one().expect("canonical basis has no zero column"))
        .collect()
}

/// The unique element of `x ⊕ Im(basis)` that vanishes on every pivot
/// coordinate of `basis`.
pub fn canonical_coset_rep(basis: &F2Matrix, x: &F2Vector) -> F2Vector {
    assert_eq!(basis.nrows(), x.len(), "offset length does not match basis");
    let mut rep = x.clone();
    for (j, column) in basis.columns().iter().enumerate() {
        let pivot = column
            .leading_one()
            .unwrap_or_else(|| panic!("column {j} of basis is zero"));
        if rep.get(pivot) {
            rep.xor_assign(column);
        }
    }
    rep
}

/// An affine subspace `{basis·y ⊕ offset}` in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineSupport {
    pub basis: F2Matrix,
    pub offset: F2Vector,
}

impl AffineSupport {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// The point `basis·y ⊕ offset`.
    pub fn point(&self, y: &F2Vector) -> F2Vector {
        self.basis.mul_vec(y).xor(&self.offset)
    }

    /// All points, in order of `y` as a big-endian index.
    pub fn points(&self) -> Vec<F2Vector> {
        let k = self.dim();
        (0..1usize << k)
            .map(|y| self.point(&F2Vector::from_index(y, k)))
            .collect()
    }

    pub fn contains(&self, z: &F2Vector) -> bool {
        let diff = z.xor(&self.offset);
        solve(&self.basis, &diff).is_some()
    }
}

/// Recognises affine subspaces. Empty input is not affine.
pub fn is_affine(points: &[F2Vector]) -> Result<Option<AffineSupport>, F2Error> {
    common_length(points)?;
    let set: BTreeSet<&F2Vector> = points.iter().collect();
    let Some(&p0) = set.iter().next() else {
        return Ok(None);
    };
    let shifted: Vec<F2Vector> = set.iter().map(|p| p.xor(p0)).collect();
    let basis = canonical_basis(&shifted)?;
    let rank = basis.ncols();
    if rank >= usize::BITS as usize || set.len() != 1usize << rank {
        return Ok(None);
    }
    // every shifted point lies in the span by construction, so equal
    // cardinality means equality
    let offset = canonical_coset_rep(&basis, p0);
    Ok(Some(AffineSupport { basis, offset }))
}

/// The `n × (2^n − 1)` matrix whose column for the nonempty subset `x`
/// (binary counting order) is `x` itself.
pub fn subset_matrix(n: usize) -> Result<F2Matrix, F2Error> {
    if n == 0 {
        return Err(F2Error::InvalidDimension(
            "subset matrix needs n >= 1".into(),
        ));
    }
    if n >= 24 {
        return Err(F2Error::InvalidDimension(format!(
            "subset matrix for n = {n} is too large"
        )));
    }
    let columns: Vec<F2Vector> = (1..1usize << n)
        .map(|x| F2Vector::from_index(x, n))
        .collect();
    F2Matrix::from_columns(&columns, n)
}

/// The permutation `σ_A` of nonzero vectors, `(σ_A)_{s,t} = [A t = s]`, as a
/// `(2^n − 1)`-square matrix indexed like the columns of [`subset_matrix`].
///
/// Satisfies `A · 𝔰_n = 𝔰_n · σ_A`, which is checked before returning.
pub fn induced_permutation(a: &F2Matrix) -> Result<F2Matrix, F2Error> {
    if !a.is_invertible() {
        return Err(F2Error::Singular);
    }
    let n = a.ncols();
    let size = (1usize << n) - 1;
    let mut sigma = F2Matrix::zeros(size, size);
    for t in 1..=size {
        let s = a.mul_vec(&F2Vector::from_index(t, n)).to_index();
        sigma.set(s - 1, t - 1, true);
    }
    let subsets = subset_matrix(n)?;
    assert_eq!(
        a.mul(&subsets),
        subsets.mul(&sigma),
        "induced permutation identity failed"
    );
    Ok(sigma)
}

/// Some `y` with `a · y = b`, free variables set to zero.
pub fn solve(a: &F2Matrix, b: &F2Vector) -> Option<F2Vector> {
    assert_eq!(
        a.nrows(),
        b.len(),
        "right-hand side length does not match rows"
    );
    let cols = a.ncols();
    let augmented: Vec<F2Vector> = a
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.concat(&F2Vector::from_bits([b.get(i)])))
        .collect();
    let (reduced, pivots) = F2Matrix {
        rows: augmented,
        cols: cols + 1,
    }
    .rref();
    if pivots.last() == Some(&cols) {
        return None;
    }
    let mut y = F2Vector::zeros(cols);
    for (r, &p) in pivots.iter().enumerate() {
        if reduced.get(r, cols) {
            y.set(p, true);
        }
    }
    Some(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> F2Vector {
        s.parse().unwrap()
    }

    #[test]
    fn index_round_trip_is_big_endian() {
        assert_eq!(v("01").to_index(), 1);
        assert_eq!(v("10").to_index(), 2);
        assert_eq!(F2Vector::from_index(6, 3), v("110"));
        let long = F2Vector::from_index(0, 130);
        assert_eq!(long.len(), 130);
        assert!(long.is_zero());
    }

    #[test]
    fn canonical_basis_examples() {
        let b = canonical_basis(&[v("11")]).unwrap();
        assert_eq!(b.columns(), vec![v("11")]);

        let b = canonical_basis(&[v("01"), v("10"), v("11")]).unwrap();
        assert_eq!(b, F2Matrix::identity(2));

        let b = canonical_basis(&[v("00")]).unwrap();
        assert_eq!((b.nrows(), b.ncols()), (2, 0));

        assert_eq!(canonical_basis(&[]), Err(F2Error::EmptySpan));
        assert!(matches!(
            canonical_basis(&[v("0"), v("01")]),
            Err(F2Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn canonical_basis_depends_only_on_span() {
        let a = canonical_basis(&[v("1100"), v("0110")]).unwrap();
        let b = canonical_basis(&[v("1010"), v("0110"), v("1100")]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.columns(), vec![v("1010"), v("0110")]);
    }

    #[test]
    fn is_affine_examples() {
        let and_support = [v("000"), v("001"), v("010"), v("111")];
        assert_eq!(is_affine(&and_support).unwrap(), None);

        let s = is_affine(&[v("01"), v("10")]).unwrap().unwrap();
        assert_eq!(s.basis.columns(), vec![v("11")]);
        assert_eq!(s.offset, v("01"));

        let all: Vec<_> = (0..8).map(|i| F2Vector::from_index(i, 3)).collect();
        let s = is_affine(&all).unwrap().unwrap();
        assert_eq!(s.basis, F2Matrix::identity(3));
        assert!(s.offset.is_zero());

        assert_eq!(is_affine(&[]).unwrap(), None);
        assert!(is_affine(&[v("0"), v("00")]).is_err());
    }

    #[test]
    fn coset_rep_examples() {
        let basis = F2Matrix::from_columns(&[v("11")], 2).unwrap();
        assert_eq!(canonical_coset_rep(&basis, &v("10")), v("01"));
        assert_eq!(
            canonical_coset_rep(&F2Matrix::identity(3), &v("101")),
            v("000")
        );
        let empty = F2Matrix::zeros(3, 0);
        assert_eq!(canonical_coset_rep(&empty, &v("101")), v("101"));
    }

    #[test]
    fn subset_matrix_examples() {
        assert_eq!(subset_matrix(1).unwrap(), F2Matrix::identity(1));
        let s2 = subset_matrix(2).unwrap();
        assert_eq!(s2, F2Matrix::from_bit_rows(&[&[0, 1, 1], &[1, 0, 1]]));
        let s3 = subset_matrix(3).unwrap();
        assert_eq!((s3.nrows(), s3.ncols()), (3, 7));
        assert_eq!(s3.column(6), v("111"));
        assert!(subset_matrix(0).is_err());
    }

    #[test]
    fn induced_permutation_examples() {
        assert_eq!(
            induced_permutation(&F2Matrix::identity(3)).unwrap(),
            F2Matrix::identity(7)
        );

        let a = F2Matrix::from_bit_rows(&[&[1, 1], &[0, 1]]);
        let sigma = induced_permutation(&a).unwrap();
        // columns indexed 01, 10, 11: 01 <-> 11, 10 fixed
        assert_eq!(
            sigma,
            F2Matrix::from_bit_rows(&[&[0, 0, 1], &[0, 1, 0], &[1, 0, 0]])
        );

        let singular = F2Matrix::from_bit_rows(&[&[1, 1], &[1, 1]]);
        assert_eq!(induced_permutation(&singular), Err(F2Error::Singular));
    }

    #[test]
    fn solve_examples() {
        let id = F2Matrix::identity(3);
        assert_eq!(solve(&id, &v("101")), Some(v("101")));
        let col = F2Matrix::from_columns(&[v("11")], 2).unwrap();
        assert_eq!(solve(&col, &v("11")), Some(v("1")));
        assert_eq!(solve(&col, &v("10")), None);
    }

    #[test]
    fn inverse_round_trip() {
        let a = F2Matrix::from_bit_rows(&[&[1, 1, 0], &[0, 1, 1], &[0, 0, 1]]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), F2Matrix::identity(3));
        assert_eq!(
            F2Matrix::from_bit_rows(&[&[1, 1], &[1, 1]]).inverse(),
            Err(F2Error::Singular)
        );
    }
}

//! Multiplicative Walsh–Fourier parametrization of full-support vectors.
//!
//! A vector `v` over `F_2^n` with every entry positive is written uniquely
//! as `v_x = Λ ∏_{y≠0} λ_y^{x·y}`. Taking logs turns this into a linear
//! system diagonalized by the Walsh–Hadamard transform.

use thiserror::Error;

/// Entries at or below this fraction of the maximum count as zero.
pub const FULL_SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("full support required: entry {index} is {value}")]
    NotFullSupport { index: usize, value: f64 },
    #[error("length {0} is not a power of two")]
    BadLength(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// `Λ` and the `2^n - 1` parameters `λ_y`, with `lambda[y - 1] = λ_y` for
/// `y` read as a big-endian index.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierData {
    pub n: usize,
    pub scale: f64,
    pub lambda: Vec<f64>,
}

impl FourierData {
    pub fn new(n: usize, scale: f64, lambda: Vec<f64>) -> Result<Self, FourierError> {
        if lambda.len() + 1 != 1 << n {
            return Err(FourierError::BadLength(lambda.len() + 1));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(FourierError::BadParameter(format!("scale {scale}")));
        }
        if let Some(l) = lambda.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(FourierError::BadParameter(format!("lambda {l}")));
        }
        Ok(Self { n, scale, lambda })
    }

    /// `λ_y`, with `λ_0 = 1`.
    pub fn param(&self, y: usize) -> f64 {
        if y == 0 {
            1.0
        } else {
            self.lambda[y - 1]
        }
    }
}

/// Unnormalized transform `(W u)_z = Σ_x (-1)^{x·z} u_x`.
pub fn walsh_hadamard(u: &[f64]) -> Result<Vec<f64>, FourierError> {
    if !u.len().is_power_of_two() {
        return Err(FourierError::BadLength(u.len()));
    }
    let mut w = u.to_vec();
    let mut h = 1;
    while h < w.len() {
        for block in w.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(w)
}

/// `Λ = v_0` and `ln λ_y = -2/2^n · (W ln(v/v_0))_y`.
pub fn fourier_synthesize(v: &[f64]) -> Result<FourierData, FourierError> {
    if !v.len().is_power_of_two() {
        return Err(FourierError::BadLength(v.len()));
    }
    let n = v.len().trailing_zeros() as usize;
    let max = v.iter().copied().fold(0.0, f64::max);
    if let Some((index, &value)) = v
        .iter()
        .enumerate()
        .find(|(_, &x)| !(x.is_finite() && x > FULL_SUPPORT_EPS * max && x > 0.0))
    {
        return Err(FourierError::NotFullSupport { index, value });
    }
    let v0 = v[0];
    let logs: Vec<f64> = v.iter().map(|&x| (x / v0).ln()).collect();
    let w = walsh_hadamard(&logs)?;
    let factor = -2.0 / v.len() as f64;
    let lambda = w[1..].iter().map(|&t| (factor * t).exp()).collect();
    Ok(FourierData {
        n,
        scale: v0,
        lambda,
    })
}

/// The direct product `v_x = Λ ∏_{y≠0} λ_y^{x·y}`.
pub fn fourier_evaluate(fd: &FourierData) -> Vec<f64> {
    (0..1usize << fd.n)
        .map(|x| {
            (1..1usize << fd.n)
                .filter(|y| (x & y).count_ones() % 2 == 1)
                .fold(fd.scale, |acc, y| acc * fd.lambda[y - 1])
        })
        .collect()
}

//! Truncated power series ("jets") of fixed degree.
//!
//! A series of degree `d` stores the classic Taylor coefficients
//! `c_k = f^(k)(x0) / k!` for `k = 0..=d`. Arithmetic is closed over a fixed
//! degree, so pushing an identity-seeded series through a composite function
//! yields all of its derivatives up to `d` at once.
//!
//! The surrogate network uses the slice kernels in this module
//! ([`sin_cos_into`], [`tanh_into`]) directly on flat buffers; the
//! [`TruncatedSeries`] type is the owned, checked front end.

use std::fmt;

use crate::error::SeriesError;
use crate::surrogate::{Axis, SurrogateNet};

/// Highest derivative order the jet extractor will propagate.
pub const MAX_JET_ORDER: usize = 8;

/// Binary operations supported by [`TruncatedSeries::combine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOp {
    Add,
    Sub,
    Mul,
}

/// Fixed-degree Taylor coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries {
    coeffs: Vec<f64>,
}

impl TruncatedSeries {
    /// Builds a series from raw Taylor coefficients; the degree is `coeffs.len() - 1`.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self, SeriesError> {
        if coeffs.is_empty() {
            return Err(SeriesError::Empty);
        }
        Ok(Self { coeffs })
    }

    pub fn zero(degree: usize) -> Self {
        Self {
            coeffs: vec![0.0; degree + 1],
        }
    }

    pub fn constant(value: f64, degree: usize) -> Self {
        let mut s = Self::zero(degree);
        s.coeffs[0] = value;
        s
    }

    /// The independent variable expanded around `value`: `value + h`.
    pub fn variable(value: f64, degree: usize) -> Self {
        let mut s = Self::constant(value, degree);
        if degree > 0 {
            s.coeffs[1] = 1.0;
        }
        s
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Derivative values `f^(k)(x0)`, i.e. coefficients rescaled by `k!`.
    pub fn derivatives(&self) -> Vec<f64> {
        let mut fact = 1.0;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k > 0 {
                    fact *= k as f64;
                }
                c * fact
            })
            .collect()
    }

    pub fn combine(&self, other: &Self, op: SeriesOp) -> Result<Self, SeriesError> {
        if self.degree() != other.degree() {
            return Err(SeriesError::DegreeMismatch {
                left: self.degree(),
                right: other.degree(),
            });
        }
        let coeffs = match op {
            SeriesOp::Add => self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
            SeriesOp::Sub => self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
            SeriesOp::Mul => {
                let mut out = vec![0.0; self.coeffs.len()];
                mul_into(&self.coeffs, &other.coeffs, &mut out);
                out
            }
        };
        Ok(Self { coeffs })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.combine(other, SeriesOp::Add)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.combine(other, SeriesOp::Sub)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.combine(other, SeriesOp::Mul)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Returns `(sin a, cos a)`.
    pub fn sin_cos(&self) -> (Self, Self) {
        let n = self.coeffs.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        sin_cos_into(&self.coeffs, &mut s, &mut c);
        (Self { coeffs: s }, Self { coeffs: c })
    }

    pub fn sin(&self) -> Self {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Self {
        self.sin_cos().1
    }

    pub fn tanh(&self) -> Self {
        let n = self.coeffs.len();
        let mut t = vec![0.0; n];
        let mut w = vec![0.0; n];
        tanh_into(&self.coeffs, &mut t, &mut w);
        Self { coeffs: t }
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// Truncated Cauchy product `out = a * b`. All three slices share one length.
pub fn mul_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for k in 0..out.len() {
        let mut acc = 0.0;
        for j in 0..=k {
            acc += a[j] * b[k - j];
        }
        out[k] = acc;
    }
}

/// Coupled recurrence `s' = c a'`, `c' = -s a'` written in coefficient form:
/// `k s_k = sum_{j=1..k} j a_j c_{k-j}` and `k c_k = -sum_{j=1..k} j a_j s_{k-j}`.
pub fn sin_cos_into(a: &[f64], s: &mut [f64], c: &mut [f64]) {
    let (s0, c0) = a[0].sin_cos();
    s[0] = s0;
    c[0] = c0;
    for k in 1..a.len() {
        let mut ds = 0.0;
        let mut dc = 0.0;
        for j in 1..=k {
            let ja = j as f64 * a[j];
            ds += ja * c[k - j];
            dc -= ja * s[k - j];
        }
        s[k] = ds / k as f64;
        c[k] = dc / k as f64;
    }
}

/// `t = tanh(a)` through `t' = (1 - t^2) a'`; `w` receives the coefficients
/// of `1 - t^2` (the derivative factor, reused by callers that need it).
pub fn tanh_into(a: &[f64], t: &mut [f64], w: &mut [f64]) {
    t[0] = a[0].tanh();
    w[0] = 1.0 - t[0] * t[0];
    for k in 1..a.len() {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += j as f64 * a[j] * w[k - j];
        }
        t[k] = acc / k as f64;
        let mut sq = 0.0;
        for i in 0..=k {
            sq += t[i] * t[k - i];
        }
        w[k] = -sq;
    }
}

/// Value and pure derivatives of a surrogate along one input axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeJet {
    pub axis: Axis,
    /// `values[k] = d^k u / d axis^k`.
    pub values: Vec<f64>,
}

/// Seeds `axis` with the identity series and the other input with a constant,
/// propagates through `net`, and rescales coefficients to derivative values.
pub fn derivatives_at(
    net: &SurrogateNet,
    x: f64,
    t: f64,
    axis: Axis,
    max_order: usize,
) -> Result<DerivativeJet, SeriesError> {
    if max_order > MAX_JET_ORDER {
        return Err(SeriesError::OrderTooHigh {
            requested: max_order,
            max: MAX_JET_ORDER,
        });
    }
    let series = net.propagate_series(x, t, axis, max_order);
    Ok(DerivativeJet {
        axis,
        values: series.derivatives(),
    })
}

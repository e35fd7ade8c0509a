//! Kernel functions and brute-force oracles.
//!
//! All kernels supported here are radial, symmetric, take values in `[0, 1]`
//! and satisfy `k(x, x) = 1`:
//!
//! | family               | formula                                | density exponent `p` |
//! |----------------------|----------------------------------------|----------------------|
//! | Gaussian             | `exp(-s * ||x - y||_2^2)`              | 0.173                |
//! | Exponential          | `exp(-s * ||x - y||_2)`                | 0.1                  |
//! | Laplacian            | `exp(-s * ||x - y||_1)`                | 0.5                  |
//! | Rational quadratic   | `(1 + s * ||x - y||_2^2)^-beta`        | 0 (conjectured)      |
//!
//! `s` is the bandwidth scale. The exponent `p` is the published query-cost
//! exponent of the best known fast density-estimation structure for that
//! family; it is recorded as metadata only ([`KernelFamily::kde_exponent`]).
//! Nothing in this crate certifies those exponents: the sampling backend
//! shipped here is the universal `p = 1` structure.
//!
//! The module also hosts the exact oracles used to validate every estimator:
//! [`exact_matvec`], [`exact_sum`] and [`exact_top_eig`]. These are direct
//! `O(n^2 d)` (or dense-eigensolve) computations, capped by default at
//! [`DEFAULT_ORACLE_CAP`] points so a misconfigured benchmark cannot silently
//! spend hours in a quadratic loop.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::points::PointSet;

/// Default size cap for the quadratic/cubic oracles.
pub const DEFAULT_ORACLE_CAP: usize = 5000;

/// The supported kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Exponential,
    Laplacian,
    RationalQuadratic,
}

impl KernelFamily {
    /// Published query-cost exponent of the fastest known KDE structure for
    /// this family (metadata only; see module docs).
    pub fn kde_exponent(self) -> f64 {
        match self {
            KernelFamily::Gaussian => 0.173,
            KernelFamily::Exponential => 0.1,
            KernelFamily::Laplacian => 0.5,
            KernelFamily::RationalQuadratic => 0.0,
        }
    }

    /// Canonical lower-case name, as accepted by the CLI.
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::RationalQuadratic => "rational-quadratic",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(KernelFamily::Gaussian),
            "exponential" => Ok(KernelFamily::Exponential),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "rational-quadratic" | "rational_quadratic" => Ok(KernelFamily::RationalQuadratic),
            other => Err(invalid(format!(
                "unknown kernel family '{other}' (expected gaussian, exponential, laplacian or rational-quadratic)"
            ))),
        }
    }
}

/// A fully specified kernel: family, bandwidth scale, and (for the rational
/// quadratic family) the exponent `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Multiplier `s` applied to the distance term; must be positive and finite.
    pub bandwidth_scale: f64,
    /// Exponent of the rational quadratic kernel; ignored by the other
    /// families. Must be positive.
    pub rq_beta: f64,
}

impl KernelSpec {
    /// Builds a spec with `rq_beta = 1`.
    pub fn new(family: KernelFamily, bandwidth_scale: f64) -> Result<Self> {
        Self::with_beta(family, bandwidth_scale, 1.0)
    }

    /// Builds a spec with an explicit rational-quadratic exponent.
    pub fn with_beta(family: KernelFamily, bandwidth_scale: f64, rq_beta: f64) -> Result<Self> {
        if !(bandwidth_scale.is_finite() && bandwidth_scale > 0.0) {
            return Err(invalid("bandwidth_scale must be finite and positive"));
        }
        if !(rq_beta.is_finite() && rq_beta > 0.0) {
            return Err(invalid("rq_beta must be finite and positive"));
        }
        Ok(Self {
            family,
            bandwidth_scale,
            rq_beta,
        })
    }

    pub fn gaussian(bandwidth_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth_scale)
    }

    pub fn exponential(bandwidth_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, bandwidth_scale)
    }

    pub fn laplacian(bandwidth_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, bandwidth_scale)
    }

    pub fn rational_quadratic(bandwidth_scale: f64, beta: f64) -> Result<Self> {
        Self::with_beta(KernelFamily::RationalQuadratic, bandwidth_scale, beta)
    }

    /// Evaluates `k(x, y)` after validating dimensions and finiteness.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.is_empty() {
            return Err(invalid("kernel arguments must be non-empty"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("kernel arguments must be finite"));
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluates `k(x, y)` assuming both slices have the same length and
    /// finite entries. Hot path for the quadratic loops; the distance of a
    /// point to itself is exactly zero, so `k(x, x) = 1` exactly.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let s = self.bandwidth_scale;
        match self.family {
            KernelFamily::Gaussian => {
                let mut d2 = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let t = a - b;
                    d2 += t * t;
                }
                (-s * d2).exp()
            }
            KernelFamily::Exponential => {
                let mut d2 = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let t = a - b;
                    d2 += t * t;
                }
                (-s * d2.sqrt()).exp()
            }
            KernelFamily::Laplacian => {
                let mut d1 = 0.0;
                for (a, b) in x.iter().zip(y) {
                    d1 += (a - b).abs();
                }
                (-s * d1).exp()
            }
            KernelFamily::RationalQuadratic => {
                let mut d2 = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let t = a - b;
                    d2 += t * t;
                }
                (1.0 + s * d2).powf(-self.rq_beta)
            }
        }
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::CapacityExceeded { n, cap })
    } else {
        Ok(())
    }
}

/// Exact `K y` by the direct double loop, `O(n^2 d)`.
///
/// `y` must have one entry per point; entries may be any finite reals.
pub fn exact_matvec(spec: &KernelSpec, xs: &PointSet, y: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matvec input vector must be finite"));
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let xi = xs.point(i);
        let mut acc = 0.0;
        for j in 0..n {
            acc += spec.eval_unchecked(xi, xs.point(j)) * y[j];
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Exact full kernel-matrix sum `s(K) = sum_{i,j} k(x_i, x_j)` under the
/// default oracle cap.
pub fn exact_sum(spec: &KernelSpec, xs: &PointSet) -> Result<f64> {
    exact_sum_capped(spec, xs, DEFAULT_ORACLE_CAP)
}

/// Exact kernel-matrix sum with an explicit size cap.
///
/// Accumulates the diagonal exactly as `n` and the off-diagonal part once per
/// unordered pair (doubled), which both halves the work and keeps the result
/// exactly symmetric.
pub fn exact_sum_capped(spec: &KernelSpec, xs: &PointSet, cap: usize) -> Result<f64> {
    let n = xs.len();
    check_cap(n, cap)?;
    let mut off = 0.0;
    for i in 0..n {
        let xi = xs.point(i);
        for j in (i + 1)..n {
            off += spec.eval_unchecked(xi, xs.point(j));
        }
    }
    Ok(n as f64 + 2.0 * off)
}

/// Exact top eigenpair `(lambda_1, v_1)` of the kernel matrix under the
/// default oracle cap.
pub fn exact_top_eig(spec: &KernelSpec, xs: &PointSet) -> Result<(f64, Vec<f64>)> {
    exact_top_eig_capped(spec, xs, DEFAULT_ORACLE_CAP)
}

/// Exact top eigenpair with an explicit size cap.
///
/// Uses a dense symmetric eigendecomposition, then reports the eigenvector as
/// the unit-normalized projection of the all-ones vector onto the top
/// eigenspace (all eigenvalues within `1e-9 * lambda_1` of the maximum). For
/// a non-negative symmetric matrix that projection is non-negative up to
/// rounding, even when the top eigenvalue is (near-)degenerate — e.g. for
/// well-separated points where `K` is essentially the identity — so the
/// Perron sign convention `v_1 >= 0` entrywise can be enforced by clamping
/// only roundoff-scale negatives. The returned pair satisfies
/// `||K v_1 - lambda_1 v_1||_2 <= 1e-8 * lambda_1`.
pub fn exact_top_eig_capped(
    spec: &KernelSpec,
    xs: &PointSet,
    cap: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = xs.len();
    check_cap(n, cap)?;
    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let xi = xs.point(i);
        for j in i..n {
            let v = spec.eval_unchecked(xi, xs.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let eig = k.clone().symmetric_eigen();
    let lambda1 = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);

    // Project the all-ones vector onto the top eigenspace. Its overlap with
    // the Perron direction is at least 1 (for a unit non-negative vector the
    // l1 norm dominates the l2 norm), so the projection cannot vanish.
    let tol = 1e-9 * lambda1.max(1.0);
    let ones = DVector::<f64>::from_element(n, 1.0);
    let mut v = DVector::<f64>::zeros(n);
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        if lambda1 - lam <= tol {
            let q = eig.eigenvectors.column(idx);
            let coeff = q.dot(&ones);
            v.axpy(coeff, &q, 1.0);
        }
    }
    v /= v.norm();
    // Roundoff-scale sign violations only; clamp and renormalize.
    for e in v.iter_mut() {
        if *e < 0.0 {
            *e = 0.0;
        }
    }
    v /= v.norm();

    let residual = (&k * &v - lambda1 * &v).norm();
    debug_assert!(
        residual <= 1e-8 * lambda1,
        "top-eigenpair residual {residual} above 1e-8 * {lambda1}"
    );
    Ok((lambda1, v.as_slice().to_vec()))
}

//! Kernel density estimation backends.
//!
//! A *density estimator* over a point set `S` (size `m`) answers queries
//! `D(q) ~ (1/m) * sum_{x in S} k(q, x)`. Every backend here honours the same
//! one-sided contract: with probability at least `1 - (m * fail_poly)^-1`
//! per query,
//!
//! ```text
//! mean <= D(q) <= (1 + eps) * mean + mu
//! ```
//!
//! where `mean` is the true average. The lower side is never allowed to dip
//! below the truth, which is what lets downstream consumers turn threshold
//! comparisons into deterministic dichotomies.
//!
//! Two backends are implemented:
//!
//! * [`KdeBackend::Exact`] — returns the true mean, at cost `m` kernel
//!   evaluations per query. Its claimed cost exponent is `p = 0`.
//! * [`KdeBackend::Sampling`] — the universal `p = 1` structure: averages the
//!   kernel over `r = ceil(3 * ln(m * fail_poly) / (eps^2 * mu))` uniform
//!   samples of `S` drawn with replacement, then applies the one-sided shift
//!   `(raw + mu/2) * (1 + eps/2)`. The per-query **work counter is `r`**, the
//!   nominal sample count, which is the quantity the cost model speaks about.
//!
//! When `r >= m` the sampling backend does not draw `r` individual indices:
//! the vector of per-point hit counts of `r` with-replacement draws is a
//! multinomial, which is simulated exactly by sequential conditional
//! binomials in index order, at `O(m)` actual cost. The resulting estimate
//! has identical distribution to the naive loop, so nothing about the
//! contract changes — only wall-clock time.
//!
//! [`ExclusionKde`] extends the sampling machinery with *query-excluding*
//! semantics: `D_{S \ x_i}(q)` for any held-out index `i`, used by the
//! kernel-sum estimators where each point queries the density of the others.
//! It is a segment tree over `S` (leaves in index order, padded to a power of
//! two; virtual padding leaves have cardinality zero and are never queried).
//! Each node holds an estimator for its contiguous slice with node-level
//! additive error `mu'' = mu / (100 * log2(padded))`; a query excluding `i`
//! decomposes `[0, i) ∪ (i, m)` into `O(log m)` aligned nodes and combines
//! their answers by cardinality-weighted averaging. Since the weights sum to
//! one, the combined answer inherits the sandwich with additive term at most
//! `mu''`, comfortably inside `mu`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binom::binomial;
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::points::PointSet;
use crate::seeds::derive;

/// Accuracy knobs shared by all KDE backends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeParams {
    /// Multiplicative slack, in `(0, 1)`.
    pub eps: f64,
    /// Additive floor, in `(0, 1)`.
    pub mu: f64,
    /// Per-query failure probability is `(m * fail_poly)^-1`-ish; must be
    /// at least 1.
    pub fail_poly: f64,
}

impl KdeParams {
    pub fn new(eps: f64, mu: f64, fail_poly: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
            return Err(invalid("kde eps must lie in (0, 1)"));
        }
        if !(mu.is_finite() && mu > 0.0 && mu < 1.0) {
            return Err(invalid("kde mu must lie in (0, 1)"));
        }
        if !(fail_poly.is_finite() && fail_poly >= 1.0) {
            return Err(invalid("kde fail_poly must be finite and >= 1"));
        }
        Ok(Self { eps, mu, fail_poly })
    }

    /// Nominal with-replacement sample count for a base set of size `m`:
    /// `max(1, ceil(3 * ln(m * fail_poly) / (eps^2 * mu)))`, capped at
    /// `2^62`.
    ///
    /// This is also the exact per-query work reported by the sampling
    /// backend, so halving `mu` doubles query cost (the `p = 1` scaling).
    /// The cap only binds when `mu` sits so far below `f64` resolution
    /// that the prescribed count is unrealizable anyway; `2^62` draws
    /// drive the relative sampling error below machine epsilon, and the
    /// one-sided shift by `mu / 2` already covers means smaller than the
    /// error such a count could resolve.
    pub fn sample_count(&self, m: usize) -> u64 {
        let r = (3.0 * (m as f64 * self.fail_poly).ln() / (self.eps * self.eps * self.mu)).ceil();
        // `as u64` saturates on overflow/NaN; the max(1) guard covers m = 1
        // where the logarithm vanishes.
        (r as u64).max(1).min(1 << 62)
    }
}

/// Which estimator implementation backs a [`KdeEstimator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdeBackend {
    /// True mean; `m` kernel evaluations per query.
    Exact,
    /// Uniform sampling with the one-sided shift; `sample_count(m)` work
    /// per query.
    Sampling,
}

impl std::str::FromStr for KdeBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(KdeBackend::Exact),
            "sampling" => Ok(KdeBackend::Sampling),
            other => Err(invalid(format!(
                "unknown kde backend '{other}' (expected exact or sampling)"
            ))),
        }
    }
}

/// One query's outcome: the density estimate and the work charged for it,
/// in kernel evaluations under the backend's cost model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeAnswer {
    pub value: f64,
    pub work: u64,
}

/// A density estimator over an owned copy of its base set.
///
/// Immutable after build; queries only advance an internal atomic counter
/// that indexes per-query random substreams, so shared references may query
/// concurrently. Sequential use is fully deterministic in the seed.
#[derive(Debug)]
pub struct KdeEstimator {
    backend: KdeBackend,
    spec: KernelSpec,
    points: PointSet,
    params: KdeParams,
    seed: u64,
    counter: AtomicU64,
}

impl KdeEstimator {
    /// Builds an estimator over (a copy of) `s`, which must be non-empty.
    pub fn build(
        backend: KdeBackend,
        spec: &KernelSpec,
        s: &PointSet,
        params: KdeParams,
        seed: u64,
    ) -> Result<Self> {
        if s.is_empty() {
            return Err(invalid("kde base set must be non-empty"));
        }
        Ok(Self {
            backend,
            spec: *spec,
            points: s.clone(),
            params,
            seed,
            counter: AtomicU64::new(0),
        })
    }

    /// Size of the base set.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty base sets
    }

    pub fn backend(&self) -> KdeBackend {
        self.backend
    }

    pub fn params(&self) -> KdeParams {
        self.params
    }

    /// Cost exponent claimed by the backend: the query cost model is
    /// `O(d * log(m) / (eps^2 * mu^p))` with `p = 1` for sampling and
    /// `p = 0` for exact.
    pub fn backend_p(&self) -> f64 {
        match self.backend {
            KdeBackend::Exact => 0.0,
            KdeBackend::Sampling => 1.0,
        }
    }

    /// Estimates the mean kernel value of `q` against the base set.
    pub fn query(&self, q: &[f64]) -> Result<KdeAnswer> {
        self.check_query(q)?;
        match self.backend {
            KdeBackend::Exact => Ok(self.query_exact(q)),
            KdeBackend::Sampling => {
                if self.points.len() == 1 {
                    // A multinomial over a single point is deterministic:
                    // all r draws hit it, so the sample mean is the one
                    // kernel value and no randomness is consumed. This is
                    // the hot case for bucketed matvecs with many
                    // singleton buckets.
                    let r = self.params.sample_count(1);
                    let raw = self.spec.eval_unchecked(q, self.points.point(0));
                    return Ok(KdeAnswer {
                        value: self.one_sided(raw),
                        work: r,
                    });
                }
                let stream = self.counter.fetch_add(1, Ordering::Relaxed);
                let mut rng = ChaCha8Rng::seed_from_u64(derive(self.seed, stream));
                Ok(self.query_sampling(q, &mut rng))
            }
        }
    }

    /// One-sided shift: centers the (zero-mean) sampling error above the
    /// truth while staying under the `(1 + eps) * mean + mu` ceiling.
    fn one_sided(&self, raw: f64) -> f64 {
        (raw + self.params.mu / 2.0) * (1.0 + self.params.eps / 2.0)
    }

    fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.points.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.points.dim(),
                got: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(invalid("query point must be finite"));
        }
        Ok(())
    }

    /// True mean in index order; `work = m`.
    fn query_exact(&self, q: &[f64]) -> KdeAnswer {
        let m = self.points.len();
        let mut acc = 0.0;
        for x in self.points.iter() {
            acc += self.spec.eval_unchecked(q, x);
        }
        KdeAnswer {
            value: acc / m as f64,
            work: m as u64,
        }
    }

    /// Sampling estimate; `work = r` (nominal draws), actual cost
    /// `O(min(r, m))` kernel evaluations.
    fn query_sampling(&self, q: &[f64], rng: &mut ChaCha8Rng) -> KdeAnswer {
        let m = self.points.len();
        let r = self.params.sample_count(m);
        let raw = if r < m as u64 {
            let mut acc = 0.0;
            for _ in 0..r {
                let j = rng.gen_range(0..m);
                acc += self.spec.eval_unchecked(q, self.points.point(j));
            }
            acc / r as f64
        } else {
            // Hit counts of r with-replacement draws form a multinomial over
            // the m points; realize it by conditional binomials in index
            // order. Count_j | rest ~ Bin(remaining, 1 / (m - j)).
            let mut acc = 0.0;
            let mut remaining = r;
            for j in 0..m {
                if remaining == 0 {
                    break;
                }
                let c = if j + 1 == m {
                    remaining
                } else {
                    binomial(remaining, 1.0 / (m - j) as f64, rng)
                };
                if c > 0 {
                    acc += c as f64 * self.spec.eval_unchecked(q, self.points.point(j));
                    remaining -= c;
                }
            }
            acc / r as f64
        };
        KdeAnswer {
            value: self.one_sided(raw),
            work: r,
        }
    }

}

/// Aligned segment-tree decomposition of `[l, r)` over `padded` leaves
/// (power of two). Returns heap-order node ids (root = 1), left-to-right.
fn cover_nodes(padded: usize, l: usize, r: usize) -> Vec<usize> {
    debug_assert!(padded.is_power_of_two() && r <= padded);
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut lo = l + padded;
    let mut hi = r + padded;
    while lo < hi {
        if lo & 1 == 1 {
            left.push(lo);
            lo += 1;
        }
        if hi & 1 == 1 {
            hi -= 1;
            right.push(hi);
        }
        lo >>= 1;
        hi >>= 1;
    }
    right.reverse();
    left.extend(right);
    left
}

/// Leaf range `[lo, hi)` covered by heap-order node `id` in a tree with
/// `padded` leaves.
fn node_range(padded: usize, id: usize) -> (usize, usize) {
    let depth = usize::BITS as usize - 1 - id.leading_zeros() as usize;
    let size = padded >> depth;
    let offset = (id - (1 << depth)) * size;
    (offset, offset + size)
}

/// A density estimator supporting hold-one-out queries `D_{S \ x_i}(q)`.
///
/// See the module docs for the tree layout. Built over sets of size at least
/// two (excluding the only point would leave nothing to average).
#[derive(Debug)]
pub struct ExclusionKde {
    backend: KdeBackend,
    m: usize,
    padded: usize,
    /// Estimator per aligned node whose leaf range is fully real, indexed by
    /// heap-order id; `None` for nodes touching virtual padding leaves.
    nodes: Vec<Option<KdeEstimator>>,
    /// Flat copy used by the exact fast path.
    base: KdeEstimator,
}

impl ExclusionKde {
    /// Builds the exclusion structure over (a copy of) `s` with `|s| >= 2`.
    ///
    /// Node estimators get additive error `mu'' = mu / (100 * log2(padded))`
    /// so that a whole `O(log m)`-node cover still lands within `mu` with
    /// margin to spare for the per-node union bound.
    pub fn build_exclusion(
        backend: KdeBackend,
        spec: &KernelSpec,
        s: &PointSet,
        params: KdeParams,
        seed: u64,
    ) -> Result<Self> {
        let m = s.len();
        if m < 2 {
            return Err(invalid("exclusion structure needs at least two points"));
        }
        let padded = m.next_power_of_two();
        let log2p = (padded.trailing_zeros() as f64).max(1.0);
        let node_params = KdeParams::new(params.eps, params.mu / (100.0 * log2p), params.fail_poly)?;
        let mut nodes: Vec<Option<KdeEstimator>> = Vec::with_capacity(2 * padded);
        for _ in 0..2 * padded {
            nodes.push(None);
        }
        for id in 1..2 * padded {
            let (lo, hi) = node_range(padded, id);
            if hi <= m {
                let slice = s.slice(lo, hi)?;
                nodes[id] = Some(KdeEstimator::build(
                    backend,
                    spec,
                    &slice,
                    node_params,
                    derive(seed, id as u64),
                )?);
            }
        }
        let base = KdeEstimator::build(backend, spec, s, params, seed)?;
        Ok(Self {
            backend,
            m,
            padded,
            nodes,
            base,
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor requires at least two points
    }

    /// Estimates the density of `q` against `S \ {x_skip}`.
    ///
    /// With the exact backend this is a single flat pass over the other
    /// `m - 1` points in index order — bit-identical to computing the
    /// excluded mean directly. With the sampling backend each covering
    /// node is queried and the answers are combined by cardinality weights.
    pub fn query_excluding(&self, q: &[f64], skip: usize) -> Result<KdeAnswer> {
        if skip >= self.m {
            return Err(invalid(format!(
                "exclusion index {skip} out of range for {} points",
                self.m
            )));
        }
        self.base.check_query(q)?;
        let weight = (self.m - 1) as f64;
        match self.backend {
            KdeBackend::Exact => {
                // One accumulator threaded across both ranges in index
                // order, bit-identical to a direct loop that skips x_skip.
                let mut acc = 0.0;
                for j in (0..skip).chain(skip + 1..self.m) {
                    acc += self.base.spec.eval_unchecked(q, self.base.points.point(j));
                }
                Ok(KdeAnswer {
                    value: acc / weight,
                    work: weight as u64,
                })
            }
            KdeBackend::Sampling => {
                let mut ids = cover_nodes(self.padded, 0, skip);
                ids.extend(cover_nodes(self.padded, skip + 1, self.m));
                let mut acc = 0.0;
                let mut work = 0u64;
                for id in ids {
                    let node = self.nodes[id]
                        .as_ref()
                        .expect("cover nodes lie inside the real leaf range");
                    let ans = node.query(q)?;
                    acc += node.len() as f64 * ans.value;
                    work = work.saturating_add(ans.work);
                }
                Ok(KdeAnswer {
                    value: acc / weight,
                    work,
                })
            }
        }
    }
}

//! Sublinear kernel linear algebra driven by density queries.
//!
//! For a dataset `x_1, ..., x_n` and a positive kernel `k` with unit
//! diagonal, the kernel matrix `K(i, j) = k(x_i, x_j)` is too large to
//! materialize once `n` reaches the tens of thousands, yet a *kernel
//! density* oracle — "estimate `mean_j k(q, x_j)` for a query `q`" —
//! answers in time far below `n`. This crate builds linear-algebra
//! primitives on top of such an oracle, trading exactness for one-sided,
//! relative-error guarantees whose cost scales sublinearly in the matrix
//! size:
//!
//! - [`kde`]: the density oracle itself, with an exact backend and a
//!   sampling backend (`(1 + eps)`-relative plus `mu`-additive error,
//!   always erring upward), plus a hold-one-out variant for leave-out row
//!   sums.
//! - [`linalg`]: non-negative matrix-vector products `K y` by bucketing
//!   `y` into near-equal levels and issuing one density query per bucket
//!   ([`nonneg_mvp`]), column-wise approximate multiplication
//!   ([`kernel_matmul`]), and quadratic forms ([`quadform`]).
//! - [`spectral`]: top-eigenpair estimation by power iteration on the
//!   noisy matvec ([`top_eigenpair`]), together with adversarial noise
//!   constructions that certify the method's hypotheses are tight.
//! - [`kernelsum`]: the full-matrix sum `s(K)` by two-level sampling with
//!   heavy/light row filtering ([`kernel_sum`]).
//! - [`kernels`]: the kernel families and the exact (quadratic-cost)
//!   oracles every estimate is validated against.
//! - [`dataset`]: dataset file I/O and the synthetic generators used by
//!   the benchmark CLI.
//!
//! Everything is deterministic given a seed: estimators derive one RNG
//! stream per query, so results are reproducible across runs and
//! platforms.
//!
//! # Example
//!
//! ```
//! use kdelinalg::{KdeBackend, KernelSpec, PointSet};
//!
//! let spec = KernelSpec::gaussian(0.5)?;
//! let xs = PointSet::from_rows(&[
//!     vec![0.0, 0.0],
//!     vec![0.1, -0.2],
//!     vec![4.0, 4.0],
//! ])?;
//! let y = vec![1.0, 0.5, 2.0];
//! let approx = kdelinalg::nonneg_mvp(&spec, &xs, &y, 0.2, KdeBackend::Sampling, 7)?;
//! let exact = kdelinalg::exact_matvec(&spec, &xs, &y)?;
//! for (a, e) in approx.z.iter().zip(&exact) {
//!     assert!(a >= e, "estimates never undershoot");
//! }
//! # Ok::<(), kdelinalg::Error>(())
//! ```

mod binom;
pub mod dataset;
pub mod error;
pub mod kde;
pub mod kernels;
pub mod kernelsum;
pub mod linalg;
pub mod points;
mod seeds;
pub mod spectral;

pub use dataset::{
    format_points, generate, parse_gen_spec, parse_points, read_points, write_points, GenKind,
    GenSpec,
};
pub use error::{Error, Result};
pub use kde::{ExclusionKde, KdeAnswer, KdeBackend, KdeEstimator, KdeParams};
pub use kernels::{
    exact_matvec, exact_sum, exact_sum_capped, exact_top_eig, exact_top_eig_capped, KernelFamily,
    KernelSpec, DEFAULT_ORACLE_CAP,
};
pub use kernelsum::{
    default_median_trials, dp_separation_scale, generate_dp_dataset, kernel_sum,
    kernel_sum_median, simulate_dp_sum, submatrix_sum_estimator, MedianSumEstimate, SumEstimate,
    SubmatrixSumEstimate,
};
pub use linalg::{
    kernel_matmul, mvp_drop_threshold, nonneg_mvp, quadform, BucketSummary, MatmulResult,
    MvpResult, QuadformResult,
};
pub use points::PointSet;
pub use seeds::derive as derive_seed;
pub use spectral::{
    adversary_iteration_lb_check, adversary_signed_noise_demo, adversary_stagnation_check,
    signed_noise_required_delta, top_eigenpair, top_eigenpair_with_oracle, EigenPair,
    ExactMatvecOracle, IterationStat, KdeMatvecOracle, NoisyMatvec, StagnationCheck,
};

//! Exact binomial sampling tuned for the multinomial realization loop.
//!
//! The sampling backend realizes each query's with-replacement draw counts
//! through a chain of conditional binomials, several million per second,
//! so the per-draw constant matters. This module implements the two
//! standard exact algorithms — inversion (BINV) for `n * p < 10` and the
//! triangle/parallelogram/tail rejection scheme BTPE (Kachitvichyanukul &
//! Schmeiser, 1988) otherwise — as a plain function without per-call
//! distribution objects. Both produce exact `Binomial(n, p)` variates; the
//! chain caps `n` at `2^62`, comfortably inside the `f64`-index range BTPE
//! needs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Draws an exact `Binomial(n, p)` variate. Requires `0 <= p <= 1` and
/// `n <= 2^62`.
pub(crate) fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p) && n <= (1 << 62));
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    // Work with p <= 1/2 and invert at the end if flipped.
    let (ps, flipped) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let result = if n as f64 * ps < 10.0 {
        binv(n, ps, rng)
    } else {
        btpe(n, ps, rng)
    };
    if flipped {
        n - result
    } else {
        result
    }
}

/// Inversion method; expected `n * p + 1` iterations, exact for any `n`
/// (the leading term `q^n` is computed as `exp(n * ln(1 - p))`, which
/// stays accurate where `powi` would overflow its exponent range).
fn binv(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    let q = 1.0 - p;
    let s = p / q;
    let a = (n as f64 + 1.0) * s;
    let r0 = (n as f64 * (-p).ln_1p()).exp();
    let mut r = r0;
    let mut u: f64 = rng.gen();
    let mut x = 0u64;
    while u > r {
        // The support ends at n; absorbing the (zero-measure) numerical
        // residue of the CDF into P(X = n) keeps the loop finite.
        if x == n {
            break;
        }
        u -= r;
        x += 1;
        r *= a / x as f64 - s;
    }
    x
}

/// BTPE rejection sampler for `p <= 1/2`, `n * p >= 10`, following the
/// published algorithm's region layout (triangle, parallelogram, left and
/// right exponential tails) and its squeeze/Stirling acceptance tests.
fn btpe(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    let nf = n as f64;
    let q = 1.0 - p;
    let np = nf * p;
    let npq = np * q;
    let f_m = np + p;
    let m = f_m as i64;
    let p1 = (2.195 * npq.sqrt() - 4.6 * q).floor() + 0.5;
    let x_m = m as f64 + 0.5;
    let x_l = x_m - p1;
    let x_r = x_m + p1;
    let c = 0.134 + 20.5 / (15.3 + m as f64);
    let a = (f_m - x_l) / (f_m - x_l * p);
    let lambda_l = a * (1.0 + 0.5 * a);
    let a = (x_r - f_m) / (x_r * q);
    let lambda_r = a * (1.0 + 0.5 * a);
    let p2 = p1 * (1.0 + 2.0 * c);
    let p3 = p2 + c / lambda_l;
    let p4 = p3 + c / lambda_r;

    loop {
        let u = rng.gen::<f64>() * p4;
        let mut v = rng.gen::<f64>();
        let y: i64;
        if u <= p1 {
            // Triangular central region: always accepted.
            return (x_m - p1 * v + u) as u64;
        } else if u <= p2 {
            // Parallelogram.
            let x = x_l + (u - p1) / c;
            v = v * c + 1.0 - (x - x_m).abs() / p1;
            if v > 1.0 || v <= 0.0 {
                continue;
            }
            y = x as i64;
        } else if u <= p3 {
            // Left exponential tail.
            y = (x_l + v.ln() / lambda_l) as i64;
            if y < 0 {
                continue;
            }
            v *= (u - p2) * lambda_l;
        } else {
            // Right exponential tail.
            y = (x_r - v.ln() / lambda_r) as i64;
            if y as u64 > n {
                continue;
            }
            v *= (u - p3) * lambda_r;
        }

        // Acceptance tests for the non-triangle regions.
        let k = (y - m).unsigned_abs();
        if k <= 20 || k as f64 >= npq / 2.0 - 1.0 {
            // Evaluate f(y)/f(m) by the recurrence.
            let s = p / q;
            let a = s * (nf + 1.0);
            let mut f = 1.0;
            match m.cmp(&y) {
                std::cmp::Ordering::Less => {
                    for i in (m + 1)..=y {
                        f *= a / i as f64 - s;
                    }
                }
                std::cmp::Ordering::Greater => {
                    for i in (y + 1)..=m {
                        f /= a / i as f64 - s;
                    }
                }
                std::cmp::Ordering::Equal => {}
            }
            if v <= f {
                return y as u64;
            }
        } else {
            // Squeeze around the normal core, then the exact Stirling test.
            let kf = k as f64;
            let rho = (kf / npq) * ((kf * (kf / 3.0 + 0.625) + 1.0 / 6.0) / npq + 0.5);
            let t = -kf * kf / (2.0 * npq);
            let alv = v.ln();
            if alv < t - rho {
                return y as u64;
            }
            if alv <= t + rho {
                let x1 = (y + 1) as f64;
                let f1 = (m + 1) as f64;
                let z = (n as i64 + 1 - m) as f64;
                let w = (n as i64 - y + 1) as f64;
                let stirling = |v: f64| {
                    let v2 = v * v;
                    (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / v2) / v2) / v2) / v2) / v
                        / 166320.0
                };
                let g = x_m * (f1 / x1).ln()
                    + (nf - m as f64 + 0.5) * (z / w).ln()
                    + (y - m) as f64 * (w * p / (x1 * q)).ln()
                    + stirling(f1)
                    + stirling(z)
                    + stirling(x1)
                    + stirling(w);
                if alv <= g {
                    return y as u64;
                }
            }
        }
    }
}

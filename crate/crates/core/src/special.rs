//! Scalar helpers: Bose occupations and their temperature derivatives,
//! combinatorial tables, finite-difference weights, and closed forms for
//! the thermal correlation of an Ohmic bath.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::C64;

/// `1 / (exp(beta * omega) - 1)` for complex `beta`.
pub fn bose(beta: C64, omega: f64) -> C64 {
    let x = beta * omega;
    C64::new(1.0, 0.0) / expm1(x)
}

fn expm1(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        // Taylor series keeps relative precision near the origin.
        let mut term = z;
        let mut sum = z;
        for k in 2..10 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        z.exp() - 1.0
    }
}

/// `d^p n / d beta^p` for `p = 0..=pmax` using `dn/dbeta = -omega n (n + 1)`.
///
/// Each derivative is a polynomial in `n`; coefficients are built by the
/// recursion `P_{p+1}(n) = -omega (n^2 + n) P_p'(n)`.
pub fn bose_beta_derivatives(beta: C64, omega: f64, pmax: usize) -> Vec<C64> {
    let n = bose(beta, omega);
    let mut poly: Vec<f64> = vec![0.0, 1.0];
    let mut out = Vec::with_capacity(pmax + 1);
    for p in 0..=pmax {
        out.push(eval_poly(&poly, n));
        if p == pmax {
            break;
        }
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &a) in poly.iter().enumerate().skip(1) {
            let d = a * k as f64;
            // d * n^{k-1} * (n^2 + n) = d n^{k+1} + d n^k
            next[k + 1] -= omega * d;
            next[k] -= omega * d;
        }
        poly = next;
    }
    out
}

fn eval_poly(coeffs: &[f64], x: C64) -> C64 {
    coeffs
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Complex cotangent.
pub fn cot(z: C64) -> C64 {
    z.cos() / z.sin()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Stirling numbers of the second kind `S(n, k)` for `n, k <= nmax`.
pub fn stirling2_table(nmax: usize) -> Vec<Vec<u64>> {
    let mut s = vec![vec![0u64; nmax + 1]; nmax + 1];
    s[0][0] = 1;
    for n in 1..=nmax {
        for k in 1..=n {
            s[n][k] = k as u64 * s[n - 1][k] + s[n - 1][k - 1];
        }
    }
    s
}

/// Finite-difference weights for the `order`-th derivative at `x0` from
/// samples at `nodes` (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// `sum_{k>=1} k^p (z + k beta)^{-(p+2)}` for every `p` in `0..=pmax`.
///
/// The series converges like `k^-2`, so a direct sum up to `K` is closed with
/// an Euler–Maclaurin tail. `K` grows with `|z| / |beta|` so that the tail
/// integral expansion in `z / (z + K beta)` stays well conditioned.
pub fn power_sums(z: C64, beta: C64, pmax: usize) -> Vec<C64> {
    let kcut = (8.0 * z.norm() / beta.norm()).ceil().max(64.0) as u64;
    let mut sums = vec![C64::new(0.0, 0.0); pmax + 1];
    for k in 1..kcut {
        let kf = k as f64;
        let inv = C64::new(1.0, 0.0) / (z + beta * kf);
        let mut term = inv * inv;
        for s in sums.iter_mut() {
            *s += term;
            term = term * inv * kf;
        }
    }
    let kf = kcut as f64;
    let u = z + beta * kf;
    for (p, s) in sums.iter_mut().enumerate() {
        *s += em_tail(z, beta, kf, u, p);
    }
    sums
}

fn em_tail(z: C64, beta: C64, k: f64, u: C64, p: usize) -> C64 {
    let sigma = (p + 2) as i32;
    // Integral of k^p (z + k beta)^{-sigma} from K to infinity, expanded
    // binomially in k = (u - z) / beta.
    let mut integral = C64::new(0.0, 0.0);
    for j in 0..=p {
        let e = j as i32 - sigma + 1;
        let b = binomial(p as u64, j as u64) as f64;
        integral += (-z).powi((p - j) as i32) * u.powi(e) * (b / (-e) as f64);
    }
    integral /= beta.powi(p as i32 + 1);
    // f^{(n)}(K) by Leibniz over k^p and (z + k beta)^{-sigma}.
    let deriv = |n: usize| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..=n.min(p) {
            let poly = falling(p, i) * k.powi((p - i) as i32);
            let m = n - i;
            let mut rising = 1.0;
            for l in 0..m {
                rising *= -((sigma as usize + l) as f64);
            }
            let power = beta.powi(m as i32) * u.powi(-(sigma + m as i32)) * rising;
            acc += power * (binomial(n as u64, i as u64) as f64 * poly);
        }
        acc
    };
    integral + deriv(0) * 0.5 - deriv(1) / 12.0 + deriv(3) / 720.0 - deriv(5) / 30240.0
}

fn falling(p: usize, i: usize) -> f64 {
    (0..i).fold(1.0, |acc, l| acc * (p - l) as f64)
}

/// Inverse-temperature derivatives `d^p/dbeta^p C(tau)` of the Ohmic
/// correlation with exponential cutoff, `p = 0..=pmax`.
///
/// Uses the exact series `C = lambda wc / (1 + i wc tau)^2
/// + (lambda / wc) sum_k [(a + k beta - i tau)^-2 + (a + k beta + i tau)^-2]`
/// with `a = 1 / wc`, valid for any `Re beta > 0` and real `tau`.
pub fn ohmic_correlation_derivatives(
    lambda: f64,
    omega_c: f64,
    beta: C64,
    tau: f64,
    pmax: usize,
) -> Vec<C64> {
    let a = 1.0 / omega_c;
    let s_minus = power_sums(C64::new(a, -tau), beta, pmax);
    let s_plus = power_sums(C64::new(a, tau), beta, pmax);
    let mut out = Vec::with_capacity(pmax + 1);
    for p in 0..=pmax {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        let mut v = (s_minus[p] + s_plus[p]) * (lambda / omega_c * sign * factorial(p as u64 + 1));
        if p == 0 {
            let d = C64::new(1.0, omega_c * tau);
            v += C64::new(lambda * omega_c, 0.0) / (d * d);
        }
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stirling_small_values() {
        let s = stirling2_table(6);
        assert_eq!(s[3][2], 3);
        assert_eq!(s[4][2], 7);
        assert_eq!(s[5][3], 25);
        assert_eq!(s[6][3], 90);
        // Row sums are Bell numbers.
        assert_eq!(s[5].iter().sum::<u64>(), 52);
    }

    #[test]
    fn bose_derivatives_match_finite_differences() {
        let b = C64::new(0.7, 0.2);
        let w = 1.3;
        let d = bose_beta_derivatives(b, w, 3);
        let h = 1e-4;
        let f = |x: f64| bose(b + x, w);
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        let d2 = (f(h) - f(0.0) * 2.0 + f(-h)) / (h * h);
        assert!((d[1] - d1).norm() < 1e-7 * d1.norm());
        assert!((d[2] - d2).norm() < 1e-5 * d2.norm());
    }

    #[test]
    fn fornberg_central_weights() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 1);
        assert!((w[0] + 0.5).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn power_sums_against_long_direct_sum() {
        let z = C64::new(0.3, -2.0);
        let beta = C64::new(0.5, 0.1);
        let s = power_sums(z, beta, 3);
        for p in 0..=3usize {
            let mut direct = C64::new(0.0, 0.0);
            // Direct sum to 2e6 plus the leading k^-2 tail.
            let n = 2_000_000u64;
            for k in 1..=n {
                let kf = k as f64;
                direct += (z + beta * kf).powi(-(p as i32 + 2)) * kf.powi(p as i32);
            }
            direct += C64::new(1.0, 0.0) / (beta.powi(p as i32 + 2) * n as f64);
            assert!((s[p] - direct).norm() < 1e-9 * direct.norm(), "p={p}");
        }
    }
}

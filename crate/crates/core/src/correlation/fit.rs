//! Complex-exponential fits of sampled correlation functions.
//!
//! A matrix pencil on the stacked Hankel matrices of the real and imaginary
//! parts gives starting exponents that are closed under conjugation. They are
//! refined by variable projection: the exponents are the nonlinear unknowns
//! of a Levenberg–Marquardt loop, and the amplitudes are eliminated by a
//! linear least-squares solve at every evaluation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result, C64};

/// Exponent parameterization that keeps the set closed under conjugation.
#[derive(Clone, Debug)]
struct Layout {
    n_real: usize,
    n_pairs: usize,
}

impl Layout {
    fn exponents(&self, p: &[f64]) -> Vec<C64> {
        let mut g = Vec::with_capacity(self.n_real + 2 * self.n_pairs);
        for &x in &p[..self.n_real] {
            g.push(C64::new(x, 0.0));
        }
        for i in 0..self.n_pairs {
            let (a, b) = (p[self.n_real + 2 * i], p[self.n_real + 2 * i + 1]);
            g.push(C64::new(a, b));
            g.push(C64::new(a, -b));
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct ExponentialFit {
    pub exponents: Vec<C64>,
    pub amplitudes: Vec<C64>,
    /// `max_i |fit(t_i) - y_i| / |y_0|`.
    pub residual: f64,
}

/// Least-squares amplitudes for fixed exponents. Returns `(amplitudes, max abs error)`.
pub fn amplitudes(times: &[f64], values: &[C64], exponents: &[C64]) -> Result<(Vec<C64>, f64)> {
    let a = design(times, exponents);
    let b = DVector::from_column_slice(values);
    let svd = a.clone().svd(true, true);
    let c = svd
        .solve(&b, 1e-14)
        .map_err(|e| Error::LinearAlgebra(e.into()))?;
    let fit = &a * &c;
    let err = fit
        .iter()
        .zip(values)
        .map(|(f, y)| (f - y).norm())
        .fold(0.0, f64::max);
    Ok((c.iter().copied().collect(), err))
}

pub(crate) fn design(times: &[f64], exponents: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(times.len(), exponents.len(), |i, r| (exponents[r] * times[i]).exp())
}

/// Fits `terms` exponentials to uniformly spaced samples.
pub fn fit_exponentials(times: &[f64], values: &[C64], terms: usize) -> Result<ExponentialFit> {
    let n = times.len();
    if terms == 0 || n < 4 * terms {
        return Err(Error::domain("too few samples for the requested number of terms"));
    }
    let scale = values[0].norm().max(values.iter().map(|v| v.norm()).fold(0.0, f64::max) * 1e-300);
    let dt = times[1] - times[0];
    let mut best: Option<ExponentialFit> = None;
    for frac in [0.125, 0.2, 0.25, 0.33, 0.4, 0.5] {
        let pencil = (n as f64 * frac) as usize;
        if pencil <= terms || pencil >= n - terms {
            continue;
        }
        let Some(start) = matrix_pencil(values, dt, terms, pencil) else {
            continue;
        };
        let Some(layout_params) = split(&start) else {
            continue;
        };
        let (layout, p0) = layout_params;
        let p = refine(times, values, &layout, p0);
        let exps = layout.exponents(&p);
        if exps.iter().any(|g| !(g.re < 0.0) || !g.is_finite()) {
            continue;
        }
        let Ok((amps, err)) = amplitudes(times, values, &exps) else {
            continue;
        };
        let residual = err / scale;
        if best.as_ref().map_or(true, |b| residual < b.residual) {
            best = Some(ExponentialFit {
                exponents: exps,
                amplitudes: amps,
                residual,
            });
        }
    }
    let mut fit = best.ok_or_else(|| Error::FitResidual {
        achieved: f64::INFINITY,
        tolerance: 0.0,
    })?;
    sort_terms(&mut fit);
    Ok(fit)
}

fn sort_terms(fit: &mut ExponentialFit) {
    let mut order: Vec<usize> = (0..fit.exponents.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (fit.exponents[a], fit.exponents[b]);
        y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im))
    });
    fit.exponents = order.iter().map(|&i| fit.exponents[i]).collect();
    fit.amplitudes = order.iter().map(|&i| fit.amplitudes[i]).collect();
}

fn matrix_pencil(values: &[C64], dt: f64, terms: usize, pencil: usize) -> Option<Vec<C64>> {
    let n = values.len();
    let rows = n - pencil;
    let y = DMatrix::from_fn(2 * rows, pencil + 1, |i, j| {
        let (block, i) = (i / rows, i % rows);
        let v = values[i + j];
        if block == 0 {
            v.re
        } else {
            v.im
        }
    });
    let svd = y.svd(false, true);
    let vt = svd.v_t?;
    // Right singular vectors are sorted by decreasing singular value.
    let v = vt.rows(0, terms).transpose();
    let v1 = v.rows(0, pencil).into_owned();
    let v2 = v.rows(1, pencil).into_owned();
    let pinv = v1.pseudo_inverse(1e-14).ok()?;
    let z = pinv * v2;
    let eig = z.complex_eigenvalues();
    let out: Vec<C64> = eig.iter().map(|z| z.ln() / dt).collect();
    if out.iter().all(|g| g.is_finite()) {
        Some(out)
    } else {
        None
    }
}

fn split(exps: &[C64]) -> Option<(Layout, Vec<f64>)> {
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    let mut negative_im = 0usize;
    for g in exps {
        if g.im.abs() <= 1e-9 * g.norm().max(1e-12) {
            reals.push(g.re);
        } else if g.im > 0.0 {
            pairs.push((g.re, g.im));
        } else {
            negative_im += 1;
        }
    }
    if negative_im != pairs.len() {
        return None;
    }
    let layout = Layout {
        n_real: reals.len(),
        n_pairs: pairs.len(),
    };
    let mut p = reals;
    for (a, b) in pairs {
        p.push(a);
        p.push(b);
    }
    Some((layout, p))
}

fn residual_vector(times: &[f64], values: &[C64], layout: &Layout, p: &[f64]) -> Option<Vec<f64>> {
    let g = layout.exponents(p);
    if g.iter().any(|g| !(g.re < 0.0)) {
        return None;
    }
    let a = design(times, &g);
    let b = DVector::from_column_slice(values);
    let c = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let fit = &a * &c;
    let mut r = Vec::with_capacity(2 * values.len());
    for (f, y) in fit.iter().zip(values) {
        r.push(f.re - y.re);
        r.push(f.im - y.im);
    }
    if r.iter().all(|x| x.is_finite()) {
        Some(r)
    } else {
        None
    }
}

fn refine(times: &[f64], values: &[C64], layout: &Layout, mut p: Vec<f64>) -> Vec<f64> {
    // Pencil estimates occasionally have a growing component; pull those
    // back into the stable half plane before starting.
    for i in 0..layout.n_real {
        if p[i] >= 0.0 {
            p[i] = -0.1;
        }
    }
    for i in 0..layout.n_pairs {
        let k = layout.n_real + 2 * i;
        if p[k] >= 0.0 {
            p[k] = -0.1;
        }
    }
    let Some(mut r) = residual_vector(times, values, layout, &p) else {
        return p;
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut c = cost(&r);
    let mut mu = 1e-3;
    let np = p.len();
    for _ in 0..200 {
        // Forward-difference Jacobian; the parameter count is tiny.
        let mut jac = DMatrix::<f64>::zeros(r.len(), np);
        let mut ok = true;
        for k in 0..np {
            let h = 1e-7 * p[k].abs().max(1e-2);
            let mut q = p.clone();
            q[k] += h;
            match residual_vector(times, values, layout, &q) {
                Some(rq) => {
                    for i in 0..r.len() {
                        jac[(i, k)] = (rq[i] - r[i]) / h;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for k in 0..np {
                lhs[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rq) = residual_vector(times, values, layout, &q) {
                let cq = cost(&rq);
                if cq < c {
                    let rel = (c - cq) / c.max(1e-300);
                    p = q;
                    r = rq;
                    c = cq;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    if rel < 1e-12 {
                        return p;
                    }
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_known_exponentials() {
        let g = [C64::new(-0.5, 2.0), C64::new(-0.5, -2.0), C64::new(-1.5, 0.0)];
        let c = [C64::new(1.0, 0.5), C64::new(1.0, -0.5), C64::new(0.3, 0.0)];
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let values: Vec<C64> = times
            .iter()
            .map(|&t| g.iter().zip(&c).map(|(g, c)| c * (g * t).exp()).sum())
            .collect();
        let fit = fit_exponentials(&times, &values, 3).unwrap();
        assert!(fit.residual < 1e-9, "residual {}", fit.residual);
        for gt in &g {
            assert!(fit.exponents.iter().any(|gf| (gf - gt).norm() < 1e-6));
        }
    }
}

//! Bath correlation functions, their exponential decompositions and the
//! counting-field derivative tables.
//!
//! Conventions: `C(tau) = int_0^inf J(w) [(n(w) + 1) e^{-i w tau} + n(w) e^{i w tau}] dw`
//! with `n` the Bose occupation. A basis term `r` carries an exponent `g_r`
//! and two amplitudes, `c_r` for `C(tau)` and `cbar_r` for `C(-tau)`, both on
//! `phi_r(tau) = exp(g_r tau)` for `tau >= 0`.
//!
//! Energy counting dresses the bath operator as `B[chi](t) = B(t + chi)`,
//! which turns the four side-resolved correlations into
//!
//! ```text
//! C^00(chi, tau) =  C(tau)          C^01(chi, tau) = -C(-tau - chi)
//! C^10(chi, tau) = -C(tau - chi)    C^11(chi, tau) =  C(-tau)
//! ```
//!
//! so on the basis each term becomes the rank-one kernel
//! `[[c, -cbar e^{g chi}], [-c e^{-g chi}, cbar]]`, indexed `[j][k]`.

pub mod fit;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{spectral_value, BathKind, BathModel, Scheme, SpectralDensity};
use crate::special::{binomial, bose, bose_beta_derivatives, cot, ohmic_correlation_derivatives};
use crate::{quad, CMat, Error, Result, C64, I};

/// `[j][k]` side-resolved amplitudes of one basis term.
pub type Kernel = [[C64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BasisKind {
    /// Finite mode sum, represented exactly.
    Exact,
    /// Analytic Matsubara series, truncated.
    Matsubara,
    /// Numerical fit or projection onto fitted exponents.
    Fitted,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecomposeOptions {
    /// Number of fitted exponentials for Ohmic baths.
    pub terms: usize,
    /// Number of Matsubara terms for Drude baths.
    pub n_matsubara: usize,
    pub window: f64,
    pub samples: usize,
    /// Relative tolerance on the reconstruction residual.
    pub tolerance: f64,
    /// Highest counting derivative stored in the table.
    pub q_max: usize,
    /// Project onto these exponents instead of fitting new ones.
    pub exponents: Option<Vec<C64>>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            terms: 7,
            n_matsubara: 4,
            window: 10.0,
            samples: 400,
            tolerance: 1e-4,
            q_max: 5,
            exponents: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpansionBasis {
    pub kind: BasisKind,
    /// `g_r`, so that `phi_r(t) = exp(g_r t)`.
    pub exponents: Vec<C64>,
    /// Closure matrix, `d phi_r / dt = sum_s eta_rs phi_s`.
    pub eta: CMat,
    pub phi0: Vec<C64>,
    pub beta: f64,
    /// `forward[p][r]`: `p`-th inverse-temperature derivative of `c_r`.
    pub forward: Vec<Vec<C64>>,
    /// `backward[p][r]`: same for `cbar_r`.
    pub backward: Vec<Vec<C64>>,
    /// `coeffs[r][q][j][k]`: `q`-th derivative in `i chi` at `chi = 0`.
    pub coeffs: Vec<Vec<Kernel>>,
    pub q_max: usize,
    pub scheme: Scheme,
    pub counted: bool,
    /// Relative reconstruction residual on the sampling window.
    pub residual: f64,
    pub window: f64,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl ExpansionBasis {
    pub fn n_terms(&self) -> usize {
        self.exponents.len()
    }

    /// `sum_r c_r phi_r(tau)`.
    pub fn reconstruct(&self, tau: f64) -> C64 {
        self.exponents
            .iter()
            .zip(&self.forward[0])
            .map(|(g, c)| c * (g * tau).exp())
            .sum()
    }

    /// `sum_r cbar_r phi_r(tau)`, which represents `C(-tau)`.
    pub fn reconstruct_backward(&self, tau: f64) -> C64 {
        self.exponents
            .iter()
            .zip(&self.backward[0])
            .map(|(g, c)| c * (g * tau).exp())
            .sum()
    }

    /// Two-point dressing of the stored amplitudes at counting field `chi`.
    pub fn kernel_at(&self, chi: C64) -> Vec<Kernel> {
        self.exponents
            .iter()
            .zip(self.forward[0].iter().zip(&self.backward[0]))
            .map(|(&g, (&c, &cb))| dressed_kernel(g, c, cb, chi))
            .collect()
    }

    /// `sum_r c^{jk}_{rq} phi_r(tau)`.
    pub fn counting_correlation(&self, j: usize, k: usize, q: usize, tau: f64) -> C64 {
        self.exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(g, table)| table[q][j][k] * (g * tau).exp())
            .sum()
    }

    pub fn closure_residual(&self) -> f64 {
        let r = self.n_terms();
        let mut worst = 0.0f64;
        for a in 0..r {
            for b in 0..r {
                let expect = if a == b { self.exponents[a] } else { C64::new(0.0, 0.0) };
                worst = worst.max((self.eta[(a, b)] - expect).norm());
            }
        }
        worst
    }
}

/// Rank-one kernel of a single exponential term at counting field `chi`.
pub fn dressed_kernel(g: C64, c: C64, cbar: C64, chi: C64) -> Kernel {
    [[c, -cbar * (g * chi).exp()], [-c * (-g * chi).exp(), cbar]]
}

/// `C(t)` at real inverse temperature. Continuum Ohmic baths are integrated
/// numerically; Drude baths use the Matsubara series summed to convergence;
/// discrete baths are summed exactly.
pub fn bare_correlation(bath: &BathModel, t: f64) -> Result<C64> {
    let beta = bath.beta;
    match &bath.kind {
        BathKind::Discrete(modes) => Ok(discrete_correlation(modes, C64::new(beta, 0.0), t)),
        BathKind::Continuum(sd @ SpectralDensity::OhmicExpCutoff { omega_c, lambda }) => {
            if *lambda == 0.0 {
                return Ok(C64::new(0.0, 0.0));
            }
            let upper = 60.0 * omega_c;
            let f = |w: f64| {
                let j = spectral_value(sd, w).unwrap_or(0.0);
                let coth = 1.0 + 2.0 * bose(C64::new(beta, 0.0), w).re;
                C64::new(j * coth * (w * t).cos(), -j * (w * t).sin())
            };
            let (v, _) = quad::integrate(f, 0.0, upper, 1e-13 * lambda, 1e-11, 20_000)?;
            Ok(v)
        }
        BathKind::Continuum(SpectralDensity::DrudeLorentz { lambda, gamma }) => {
            drude_series(*lambda, *gamma, beta, t)
        }
    }
}

fn discrete_correlation(modes: &[crate::model::Mode], beta: C64, t: f64) -> C64 {
    modes
        .iter()
        .map(|m| {
            let n = bose(beta, m.frequency);
            let g2 = m.coupling * m.coupling;
            let ph = C64::new(0.0, -m.frequency * t).exp();
            (ph * (n + 1.0) + ph.conj() * n) * g2
        })
        .sum()
}

fn drude_series(lambda: f64, gamma: f64, beta: f64, t: f64) -> Result<C64> {
    if t == 0.0 {
        return Err(Error::domain("Drude correlation diverges at t = 0"));
    }
    if t < 0.0 {
        return drude_series(lambda, gamma, beta, -t).map(|c| c.conj());
    }
    let main = (cot(C64::new(beta * gamma / 2.0, 0.0)) - I) * (lambda * gamma) * (-gamma * t).exp();
    let mut sum = 0.0;
    let mut k = 1u64;
    loop {
        let nu = 2.0 * core::f64::consts::PI * k as f64 / beta;
        let term = nu * (-nu * t).exp() / (nu * nu - gamma * gamma);
        sum += term;
        if nu * t > 40.0 || k > 50_000_000 {
            break;
        }
        k += 1;
    }
    Ok(main + 4.0 * lambda * gamma / beta * sum)
}

/// `d^p/dbeta^p C(tau)` for `p = 0..=pmax` at complex inverse temperature,
/// from closed forms. Drude baths only support `pmax = 0` at real `beta`.
pub fn thermal_correlation(kind: &BathKind, beta: C64, tau: f64, pmax: usize) -> Result<Vec<C64>> {
    match kind {
        BathKind::Discrete(modes) => {
            let mut out = vec![C64::new(0.0, 0.0); pmax + 1];
            for m in modes {
                let dn = bose_beta_derivatives(beta, m.frequency, pmax);
                let g2 = m.coupling * m.coupling;
                let ph = C64::new(0.0, -m.frequency * tau).exp();
                for p in 0..=pmax {
                    let plus_one = if p == 0 { 1.0 } else { 0.0 };
                    out[p] += (ph * (dn[p] + plus_one) + ph.conj() * dn[p]) * g2;
                }
            }
            Ok(out)
        }
        BathKind::Continuum(SpectralDensity::OhmicExpCutoff { lambda, omega_c }) => {
            if !(beta.re > 0.0) {
                return Err(Error::domain(format!("Re beta must be positive, got {beta}")));
            }
            Ok(ohmic_correlation_derivatives(*lambda, *omega_c, beta, tau, pmax))
        }
        BathKind::Continuum(SpectralDensity::DrudeLorentz { lambda, gamma }) => {
            if pmax > 0 || beta.im != 0.0 {
                return Err(Error::Unsupported(String::from(
                    "Drude Matsubara exponents depend on temperature; complex or differentiated temperatures are not representable on a fixed basis",
                )));
            }
            drude_series(*lambda, *gamma, beta.re, tau).map(|c| vec![c])
        }
    }
}

fn sample_times(window: f64, samples: usize, skip_origin: bool) -> Vec<f64> {
    let n = samples.max(2);
    let dt = window / (n - 1) as f64;
    (0..n)
        .map(|i| if skip_origin && i == 0 { dt * 0.5 } else { i as f64 * dt })
        .collect()
}

/// Least-squares projection of `d^p C(+-tau) / dbeta^p` onto fixed exponents.
/// Returns `(forward[p][r], backward[p][r], relative residual of p = 0)`.
pub fn project(
    kind: &BathKind,
    exponents: &[C64],
    beta: C64,
    pmax: usize,
    window: f64,
    samples: usize,
) -> Result<(Vec<Vec<C64>>, Vec<Vec<C64>>, f64)> {
    let times = sample_times(window, samples, false);
    let mut fwd = vec![Vec::with_capacity(times.len()); pmax + 1];
    let mut bwd = vec![Vec::with_capacity(times.len()); pmax + 1];
    for &t in &times {
        let f = thermal_correlation(kind, beta, t, pmax)?;
        let b = thermal_correlation(kind, beta, -t, pmax)?;
        for p in 0..=pmax {
            fwd[p].push(f[p]);
            bwd[p].push(b[p]);
        }
    }
    let a = fit::design(&times, exponents);
    let svd = a.clone().svd(true, true);
    let rhs = nalgebra::DMatrix::from_fn(times.len(), 2 * (pmax + 1), |i, col| {
        if col <= pmax {
            fwd[col][i]
        } else {
            bwd[col - pmax - 1][i]
        }
    });
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::LinearAlgebra(e.into()))?;
    let scale = fwd[0][0].norm().max(1e-300);
    let recon = &a * &sol;
    let mut err = 0.0f64;
    for i in 0..times.len() {
        err = err.max((recon[(i, 0)] - fwd[0][i]).norm());
        err = err.max((recon[(i, pmax + 1)] - bwd[0][i]).norm());
    }
    let col = |c: usize| -> Vec<C64> { sol.column(c).iter().copied().collect() };
    let forward = (0..=pmax).map(col).collect();
    let backward = (0..=pmax).map(|p| col(pmax + 1 + p)).collect();
    Ok((forward, backward, err / scale))
}

/// Exponential decomposition of a bath correlation, with counting tables
/// filled up to `opts.q_max` for the bath's own scheme.
pub fn decompose(bath: &BathModel, opts: &DecomposeOptions) -> Result<ExpansionBasis> {
    let beta = bath.beta;
    let scheme = bath.scheme;
    let need_derivs = bath.counted && scheme == Scheme::Single;
    let pmax = if need_derivs { opts.q_max } else { 0 };
    let mut warnings = Vec::new();
    let (kind, exponents, forward, backward, residual) = match &bath.kind {
        BathKind::Discrete(modes) => {
            let mut g = Vec::new();
            let mut fwd = vec![Vec::new(); pmax + 1];
            let mut bwd = vec![Vec::new(); pmax + 1];
            for m in modes {
                let dn = bose_beta_derivatives(C64::new(beta, 0.0), m.frequency, pmax);
                let g2 = m.coupling * m.coupling;
                g.push(C64::new(0.0, -m.frequency));
                g.push(C64::new(0.0, m.frequency));
                for p in 0..=pmax {
                    let one = if p == 0 { 1.0 } else { 0.0 };
                    fwd[p].push((dn[p] + one) * g2);
                    fwd[p].push(dn[p] * g2);
                    bwd[p].push(dn[p] * g2);
                    bwd[p].push((dn[p] + one) * g2);
                }
            }
            (BasisKind::Exact, g, fwd, bwd, 0.0)
        }
        BathKind::Continuum(SpectralDensity::DrudeLorentz { lambda, gamma }) => {
            if need_derivs {
                return Err(Error::Unsupported(String::from(
                    "single-measurement counting on a Drude bath needs temperature derivatives of Matsubara exponents",
                )));
            }
            let (g, c, cb) = drude_terms(*lambda, *gamma, beta, opts.n_matsubara);
            let nu_last = 2.0 * core::f64::consts::PI * opts.n_matsubara as f64 / beta;
            if nu_last < 10.0 * gamma.max(1.0) {
                warnings.push(format!(
                    "low temperature: highest Matsubara frequency {nu_last:.3} is below ten times the cutoff"
                ));
            }
            let times = sample_times(opts.window, opts.samples, true);
            let mut scale = 0.0f64;
            let mut err = 0.0f64;
            for &t in &times {
                let exact = drude_series(*lambda, *gamma, beta, t)?;
                let approx: C64 = g.iter().zip(&c).map(|(g, c)| c * (g * t).exp()).sum();
                scale = scale.max(exact.norm());
                err = err.max((exact - approx).norm());
            }
            let residual = err / scale.max(1e-300);
            if residual > opts.tolerance {
                warnings.push(format!(
                    "Matsubara truncation residual {residual:.3e} exceeds {:.1e}",
                    opts.tolerance
                ));
            }
            (BasisKind::Matsubara, g, vec![c], vec![cb], residual)
        }
        BathKind::Continuum(SpectralDensity::OhmicExpCutoff { lambda, omega_c }) => {
            let exps = match &opts.exponents {
                Some(e) => e.clone(),
                None => fit_ohmic_exponents(*omega_c, beta, opts)?,
            };
            let (fwd, bwd, residual) = if *lambda == 0.0 {
                let z = vec![vec![C64::new(0.0, 0.0); exps.len()]; pmax + 1];
                (z.clone(), z, 0.0)
            } else {
                project(&bath.kind, &exps, C64::new(beta, 0.0), pmax, opts.window, opts.samples)?
            };
            if residual > opts.tolerance {
                return Err(Error::FitResidual {
                    achieved: residual,
                    tolerance: opts.tolerance,
                });
            }
            (BasisKind::Fitted, exps, fwd, bwd, residual)
        }
    };
    let r = exponents.len();
    let mut eta = CMat::zeros(r);
    for (i, g) in exponents.iter().enumerate() {
        eta[(i, i)] = *g;
    }
    let basis = ExpansionBasis {
        kind,
        phi0: vec![C64::new(1.0, 0.0); r],
        exponents,
        eta,
        beta,
        forward,
        backward,
        coeffs: Vec::new(),
        q_max: 0,
        scheme,
        counted: bath.counted,
        residual,
        window: opts.window,
        samples: opts.samples,
        warnings,
    };
    counting_coefficients(basis, bath, scheme, if bath.counted { opts.q_max } else { 0 })
}

/// Fits exponents to the unit-strength Ohmic correlation. The exponents do
/// not depend on `lambda`, so callers can reuse them across a coupling scan.
pub fn fit_ohmic_exponents(omega_c: f64, beta: f64, opts: &DecomposeOptions) -> Result<Vec<C64>> {
    let kind = BathKind::Continuum(SpectralDensity::OhmicExpCutoff { lambda: 1.0, omega_c });
    let times = sample_times(opts.window, opts.samples, false);
    let mut values = Vec::with_capacity(times.len());
    for &t in &times {
        values.push(thermal_correlation(&kind, C64::new(beta, 0.0), t, 0)?[0]);
    }
    let f = fit::fit_exponentials(&times, &values, opts.terms)?;
    if f.residual > opts.tolerance {
        return Err(Error::FitResidual {
            achieved: f.residual,
            tolerance: opts.tolerance,
        });
    }
    Ok(f.exponents)
}

/// Matsubara exponents and amplitudes for a Drude bath.
pub fn drude_terms(lambda: f64, gamma: f64, beta: f64, n_matsubara: usize) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
    let mut g = vec![C64::new(-gamma, 0.0)];
    let ct = cot(C64::new(beta * gamma / 2.0, 0.0));
    let mut c = vec![(ct - I) * (lambda * gamma)];
    let mut cb = vec![(ct + I) * (lambda * gamma)];
    for k in 1..=n_matsubara {
        let nu = 2.0 * core::f64::consts::PI * k as f64 / beta;
        let a = C64::new(4.0 * lambda * gamma / beta * nu / (nu * nu - gamma * gamma), 0.0);
        g.push(C64::new(-nu, 0.0));
        c.push(a);
        cb.push(a);
    }
    (g, c, cb)
}

/// Fills `coeffs[r][q]` for `q <= q_max` under the given scheme.
///
/// Two-point: with `x = i chi`, only the cross terms depend on the field,
/// `c^10_q = -c (i g)^q` and `c^01_q = -cbar (-i g)^q`.
/// Single: the thermal weights are taken at `beta - x`, so each amplitude
/// also picks up `(-1)^p` times its `p`-th temperature derivative.
pub fn counting_coefficients(
    mut basis: ExpansionBasis,
    bath: &BathModel,
    scheme: Scheme,
    q_max: usize,
) -> Result<ExpansionBasis> {
    if scheme == Scheme::Single && q_max > 0 && basis.forward.len() <= q_max {
        let BathKind::Continuum(SpectralDensity::DrudeLorentz { .. }) = bath.kind else {
            let exps = basis.exponents.clone();
            let (f, b, _) = project_or_exact(bath, &exps, q_max, basis.window, basis.samples)?;
            basis.forward = f;
            basis.backward = b;
            return fill_table(basis, scheme, q_max);
        };
        return Err(Error::Unsupported(String::from(
            "single-measurement counting on a Drude bath needs temperature derivatives of Matsubara exponents",
        )));
    }
    fill_table(basis, scheme, q_max)
}

fn project_or_exact(
    bath: &BathModel,
    exps: &[C64],
    pmax: usize,
    window: f64,
    samples: usize,
) -> Result<(Vec<Vec<C64>>, Vec<Vec<C64>>, f64)> {
    match &bath.kind {
        BathKind::Discrete(_) => {
            let b = BathModel {
                counted: true,
                scheme: Scheme::Single,
                ..bath.clone()
            };
            let opts = DecomposeOptions {
                q_max: pmax,
                ..DecomposeOptions::default()
            };
            let basis = decompose(&b, &opts)?;
            Ok((basis.forward, basis.backward, 0.0))
        }
        _ => project(&bath.kind, exps, C64::new(bath.beta, 0.0), pmax, window, samples),
    }
}

fn fill_table(mut basis: ExpansionBasis, scheme: Scheme, q_max: usize) -> Result<ExpansionBasis> {
    let r = basis.n_terms();
    let mut table = Vec::with_capacity(r);
    for t in 0..r {
        let g = basis.exponents[t];
        let mut per_q = Vec::with_capacity(q_max + 1);
        for q in 0..=q_max {
            let k = match scheme {
                Scheme::TwoPoint => {
                    if q == 0 {
                        dressed_kernel(g, basis.forward[0][t], basis.backward[0][t], C64::new(0.0, 0.0))
                    } else {
                        let z = C64::new(0.0, 0.0);
                        [
                            [z, -basis.backward[0][t] * (-I * g).powu(q as u32)],
                            [-basis.forward[0][t] * (I * g).powu(q as u32), z],
                        ]
                    }
                }
                Scheme::Single => {
                    let sign = |p: usize| if p % 2 == 0 { 1.0 } else { -1.0 };
                    let c = |p: usize| basis.forward[p][t] * sign(p);
                    let cb = |p: usize| basis.backward[p][t] * sign(p);
                    let mut k10 = C64::new(0.0, 0.0);
                    let mut k01 = C64::new(0.0, 0.0);
                    for p in 0..=q {
                        let b = binomial(q as u64, p as u64) as f64;
                        k10 -= c(p) * (I * g).powu((q - p) as u32) * b;
                        k01 -= cb(p) * (-I * g).powu((q - p) as u32) * b;
                    }
                    [[c(q), k01], [k10, cb(q)]]
                }
            };
            per_q.push(k);
        }
        table.push(per_q);
    }
    basis.coeffs = table;
    basis.q_max = q_max;
    basis.scheme = scheme;
    Ok(basis)
}

/// Kernels at finite counting field `chi` for the chi-resolved hierarchy.
///
/// Uncounted baths ignore `chi`. A counted single-measurement bath has its
/// thermal weights re-evaluated at the complex inverse temperature
/// `beta - i chi` on the same exponents.
pub fn chi_kernel(bath: &BathModel, basis: &ExpansionBasis, chi: C64) -> Result<Vec<Kernel>> {
    if !bath.counted {
        return Ok(basis.kernel_at(C64::new(0.0, 0.0)));
    }
    match bath.scheme {
        Scheme::TwoPoint => Ok(basis.kernel_at(chi)),
        Scheme::Single => {
            let shifted = C64::new(bath.beta, 0.0) - I * chi;
            let (fwd, bwd) = match &bath.kind {
                BathKind::Discrete(modes) => {
                    let mut f = Vec::new();
                    let mut b = Vec::new();
                    for m in modes {
                        let n = bose(shifted, m.frequency);
                        let g2 = m.coupling * m.coupling;
                        f.push((n + 1.0) * g2);
                        f.push(n * g2);
                        b.push(n * g2);
                        b.push((n + 1.0) * g2);
                    }
                    (f, b)
                }
                BathKind::Continuum(SpectralDensity::OhmicExpCutoff { .. }) => {
                    let (f, b, _) = project(
                        &bath.kind,
                        &basis.exponents,
                        shifted,
                        0,
                        basis.window,
                        basis.samples,
                    )?;
                    (f[0].clone(), b[0].clone())
                }
                BathKind::Continuum(SpectralDensity::DrudeLorentz { .. }) => {
                    return Err(Error::Unsupported(String::from(
                        "single-measurement counting on a Drude bath",
                    )))
                }
            };
            Ok(basis
                .exponents
                .iter()
                .enumerate()
                .map(|(r, &g)| dressed_kernel(g, fwd[r], bwd[r], chi))
                .collect())
        }
    }
}

/// Two-point basis of `bath` with its thermal weights taken at the complex
/// inverse temperature `beta` on the exponents of `basis`. This is the
/// right-hand side route of the cross-scheme identity
/// `G_S(chi, beta) = G(chi, beta - i chi)`.
pub fn complex_temperature_basis(bath: &BathModel, basis: &ExpansionBasis, beta: C64) -> Result<ExpansionBasis> {
    let (fwd, bwd) = match &bath.kind {
        BathKind::Discrete(modes) => {
            let mut f = Vec::new();
            let mut b = Vec::new();
            for m in modes {
                let n = bose(beta, m.frequency);
                let g2 = m.coupling * m.coupling;
                f.push((n + 1.0) * g2);
                f.push(n * g2);
                b.push(n * g2);
                b.push((n + 1.0) * g2);
            }
            (f, b)
        }
        BathKind::Continuum(SpectralDensity::OhmicExpCutoff { .. }) => {
            let (f, b, _) = project(&bath.kind, &basis.exponents, beta, 0, basis.window, basis.samples)?;
            (f[0].clone(), b[0].clone())
        }
        BathKind::Continuum(SpectralDensity::DrudeLorentz { .. }) => {
            return Err(Error::Unsupported(String::from(
                "complex temperatures on a Drude bath",
            )))
        }
    };
    let shifted = ExpansionBasis {
        forward: vec![fwd],
        backward: vec![bwd],
        coeffs: Vec::new(),
        ..basis.clone()
    };
    fill_table(shifted, Scheme::TwoPoint, 0)
}

//! Exact references.
//!
//! [`FiniteModeSystem`] diagonalizes the full Hamiltonian of a system coupled
//! to a few bosonic modes in a truncated Fock space and evaluates both
//! generating functions directly. [`weak_coupling_current`] and
//! [`weak_coupling_conductance`] give the Pauli master-equation limit for
//! continuum baths.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{spectral_value, BathKind, BathModel, Mode, Scheme, SystemModel};
use crate::special::bose;
use crate::{CMat, Error, Result, C64, I};

/// Largest total dimension the dense oracle accepts.
pub const MAX_DIMENSION: usize = 4096;

/// Leakage threshold on the top Fock level population.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteModeSystem {
    pub h_sys: CMat,
    pub couplings: Vec<CMat>,
    pub modes: Vec<Vec<Mode>>,
    pub betas: Vec<f64>,
    pub counted: usize,
    /// Number of Fock levels kept per mode.
    pub fock_cutoff: usize,
    pub rho0: CMat,
}

impl FiniteModeSystem {
    /// Takes every bath of `baths` as discrete. The counted bath is the one
    /// flagged as such.
    pub fn from_model(model: &SystemModel, baths: &[BathModel], fock_cutoff: usize) -> Result<Self> {
        let mut modes = Vec::new();
        for b in baths {
            match &b.kind {
                BathKind::Discrete(m) => modes.push(m.clone()),
                BathKind::Continuum(_) => {
                    return Err(Error::domain("the exact oracle needs discrete baths"));
                }
            }
        }
        let counted = baths
            .iter()
            .position(|b| b.counted)
            .ok_or_else(|| Error::validation("counted", "no counted bath"))?;
        let s = FiniteModeSystem {
            h_sys: model.h_sys.clone(),
            couplings: model.couplings.clone(),
            modes,
            betas: baths.iter().map(|b| b.beta).collect(),
            counted,
            fock_cutoff,
            rho0: model.rho0.clone(),
        };
        s.dimension()?;
        Ok(s)
    }

    fn all_modes(&self) -> Vec<(usize, Mode)> {
        self.modes
            .iter()
            .enumerate()
            .flat_map(|(nu, ms)| ms.iter().map(move |m| (nu, *m)))
            .collect()
    }

    pub fn bath_dimension(&self) -> usize {
        self.fock_cutoff.pow(self.all_modes().len() as u32)
    }

    pub fn dimension(&self) -> Result<usize> {
        let n_modes = self.all_modes().len() as u32;
        let dim = self
            .fock_cutoff
            .checked_pow(n_modes)
            .and_then(|b| b.checked_mul(self.h_sys.dim()))
            .unwrap_or(usize::MAX);
        if dim > MAX_DIMENSION {
            return Err(Error::SizeOverflow {
                count: dim,
                cap: MAX_DIMENSION,
            });
        }
        Ok(dim)
    }

    /// Fock occupations of bath basis state `b`, mode-major with the last mode fastest.
    fn occupations(&self, mut b: usize, n_modes: usize) -> Vec<usize> {
        let mut occ = vec![0; n_modes];
        for k in (0..n_modes).rev() {
            occ[k] = b % self.fock_cutoff;
            b /= self.fock_cutoff;
        }
        occ
    }

    /// Eigenvalues of the counting observable `O = sum_k w_k n_k` over the counted bath, per bath basis state.
    pub fn counting_diagonal(&self) -> Vec<f64> {
        let modes = self.all_modes();
        (0..self.bath_dimension())
            .map(|b| {
                let occ = self.occupations(b, modes.len());
                modes
                    .iter()
                    .zip(&occ)
                    .filter(|((nu, _), _)| *nu == self.counted)
                    .map(|((_, m), &n)| m.frequency * n as f64)
                    .sum()
            })
            .collect()
    }

    /// Diagonal of the free bath Hamiltonian of bath `nu`.
    fn bath_energy_diagonal(&self, nu: usize) -> Vec<f64> {
        let modes = self.all_modes();
        (0..self.bath_dimension())
            .map(|b| {
                let occ = self.occupations(b, modes.len());
                modes
                    .iter()
                    .zip(&occ)
                    .filter(|((n, _), _)| *n == nu)
                    .map(|((_, m), &n)| m.frequency * n as f64)
                    .sum()
            })
            .collect()
    }

    /// `|| [O, H_bath] ||_max` on the constructed bath matrices.
    pub fn commutator_defect(&self) -> f64 {
        let h = self.bath_hamiltonian_dense();
        let o = self.counting_diagonal();
        let n = o.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((h[(i, j)] * (o[j] - o[i])).abs());
            }
        }
        worst
    }

    fn bath_hamiltonian_dense(&self) -> DMatrix<f64> {
        let nb = self.bath_dimension();
        let mut h = DMatrix::zeros(nb, nb);
        for nu in 0..self.modes.len() {
            for (b, e) in self.bath_energy_diagonal(nu).into_iter().enumerate() {
                h[(b, b)] += e;
            }
        }
        h
    }

    /// Thermal weights of the bath basis states. The counted bath may sit at a
    /// complex inverse temperature; weights are normalized on the truncated space.
    fn thermal_weights(&self, counted_beta: Option<C64>) -> Vec<C64> {
        let modes = self.all_modes();
        let mut per_mode: Vec<Vec<C64>> = Vec::with_capacity(modes.len());
        for (nu, m) in &modes {
            let beta = if *nu == self.counted {
                counted_beta.unwrap_or(C64::new(self.betas[*nu], 0.0))
            } else {
                C64::new(self.betas[*nu], 0.0)
            };
            let w: Vec<C64> = (0..self.fock_cutoff)
                .map(|n| (-beta * (m.frequency * n as f64)).exp())
                .collect();
            let z: C64 = w.iter().sum();
            per_mode.push(w.into_iter().map(|x| x / z).collect());
        }
        (0..self.bath_dimension())
            .map(|b| {
                let occ = self.occupations(b, modes.len());
                occ.iter()
                    .enumerate()
                    .map(|(k, &n)| per_mode[k][n])
                    .product()
            })
            .collect()
    }

    /// Dense total Hamiltonian, system index major.
    pub fn hamiltonian(&self) -> Result<DMatrix<C64>> {
        let dim = self.dimension()?;
        let ds = self.h_sys.dim();
        let nb = self.bath_dimension();
        let modes = self.all_modes();
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for s in 0..ds {
            for s2 in 0..ds {
                let hs = self.h_sys[(s, s2)];
                if hs != C64::new(0.0, 0.0) {
                    for b in 0..nb {
                        h[(s * nb + b, s2 * nb + b)] += hs;
                    }
                }
            }
        }
        let free = self.bath_hamiltonian_dense();
        for s in 0..ds {
            for b in 0..nb {
                h[(s * nb + b, s * nb + b)] += free[(b, b)];
            }
        }
        // V_nu (x) gamma_k (a_k + a_k^dagger)
        let stride = |k: usize| self.fock_cutoff.pow((modes.len() - 1 - k) as u32);
        for (k, (nu, m)) in modes.iter().enumerate() {
            let v = &self.couplings[*nu];
            let st = stride(k);
            for b in 0..nb {
                let n = (b / st) % self.fock_cutoff;
                if n + 1 >= self.fock_cutoff {
                    continue;
                }
                let b2 = b + st;
                let amp = m.coupling * ((n + 1) as f64).sqrt();
                for s in 0..ds {
                    for s2 in 0..ds {
                        let x = v[(s, s2)] * amp;
                        if x != C64::new(0.0, 0.0) {
                            h[(s * nb + b2, s2 * nb + b)] += x;
                            h[(s * nb + b, s2 * nb + b2)] += x;
                        }
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn diagonalize(&self) -> Result<Spectrum> {
        let h = self.hamiltonian()?;
        let real = h.iter().all(|z| z.im == 0.0);
        if real {
            let hr = h.map(|z| z.re);
            let eig = hr.symmetric_eigen();
            Ok(Spectrum {
                system: self.clone(),
                energies: eig.eigenvalues.iter().copied().collect(),
                vectors: Vectors::Real(eig.eigenvectors),
            })
        } else {
            let eig = h.symmetric_eigen();
            Ok(Spectrum {
                system: self.clone(),
                energies: eig.eigenvalues.iter().copied().collect(),
                vectors: Vectors::Complex(eig.eigenvectors),
            })
        }
    }
}

#[derive(Clone, Debug)]
enum Vectors {
    Real(DMatrix<f64>),
    Complex(DMatrix<C64>),
}

/// Eigen-decomposition of a [`FiniteModeSystem`] Hamiltonian.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub system: FiniteModeSystem,
    pub energies: Vec<f64>,
    vectors: Vectors,
}

/// Pairwise weights `P_ab` such that `f(t) = sum_ab P_ab e^{i (E_a - E_b) t}`.
struct Bilinear {
    p: DMatrix<C64>,
}

impl Spectrum {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `W^dagger X W`.
    fn to_eigenbasis(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        match &self.vectors {
            Vectors::Real(w) => {
                let xr = x.map(|z| z.re);
                let xi = x.map(|z| z.im);
                let wt = w.transpose();
                let re = &wt * (&xr * w);
                let im = &wt * (&xi * w);
                DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
            }
            Vectors::Complex(w) => w.adjoint() * (x * w),
        }
    }

    /// `W^dagger diag(d) W`.
    fn diag_to_eigenbasis(&self, d: &[C64]) -> DMatrix<C64> {
        match &self.vectors {
            Vectors::Real(w) => {
                let n = self.dim();
                let dr = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * d[i].re);
                let di = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * d[i].im);
                let wt = w.transpose();
                let re = &wt * dr;
                let im = &wt * di;
                DMatrix::from_fn(n, n, |i, j| C64::new(re[(i, j)], im[(i, j)]))
            }
            Vectors::Complex(w) => {
                let n = self.dim();
                let dw = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * d[i]);
                w.adjoint() * dw
            }
        }
    }

    /// Full-space initial state `rho0 (x) bath weights (x) extra(O)` as a dense matrix.
    fn initial_state(&self, weights: &[C64], extra: impl Fn(f64) -> C64) -> DMatrix<C64> {
        let sys = &self.system;
        let ds = sys.h_sys.dim();
        let nb = weights.len();
        let o = sys.counting_diagonal();
        let mut x = DMatrix::zeros(ds * nb, ds * nb);
        for s in 0..ds {
            for s2 in 0..ds {
                let r = sys.rho0[(s, s2)];
                if r == C64::new(0.0, 0.0) {
                    continue;
                }
                for b in 0..nb {
                    x[(s * nb + b, s2 * nb + b)] = r * weights[b] * extra(o[b]);
                }
            }
        }
        x
    }

    fn full_diag(&self, f: impl Fn(f64) -> C64) -> Vec<C64> {
        let o = self.system.counting_diagonal();
        let ds = self.system.h_sys.dim();
        (0..ds).flat_map(|_| o.iter().map(|&x| f(x))).collect()
    }

    /// `tr[U^dagger A U B]` as a bilinear form with `A = diag(a)`.
    fn bilinear(&self, a: &[C64], b: &DMatrix<C64>) -> Bilinear {
        let at = self.diag_to_eigenbasis(a);
        let bt = self.to_eigenbasis(b);
        let n = self.dim();
        Bilinear {
            p: DMatrix::from_fn(n, n, |i, j| at[(i, j)] * bt[(j, i)]),
        }
    }

    fn evaluate(&self, form: &Bilinear, t: f64) -> C64 {
        let n = self.dim();
        let ph: Vec<C64> = self.energies.iter().map(|&e| (I * (e * t)).exp()).collect();
        let mut total = C64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                row += form.p[(i, j)] * ph[j].conj();
            }
            total += ph[i] * row;
        }
        total
    }

    /// `G(chi, t)` on a time grid. `counted_beta` overrides the inverse
    /// temperature of the counted bath (complex values allowed).
    pub fn cgf(&self, chi: C64, times: &[f64], scheme: Scheme, counted_beta: Option<C64>) -> Result<Vec<C64>> {
        let weights = self.system.thermal_weights(counted_beta);
        let a = self.full_diag(|o| (I * chi * o).exp());
        let (b, offset) = match scheme {
            Scheme::TwoPoint => (self.initial_state(&weights, |o| (-I * chi * o).exp()), C64::new(0.0, 0.0)),
            Scheme::Single => {
                let o = self.system.counting_diagonal();
                let norm: C64 = weights.iter().zip(&o).map(|(w, &o)| w * (I * chi * o).exp()).sum();
                (self.initial_state(&weights, |_| C64::new(1.0, 0.0)), norm.ln())
            }
        };
        let form = self.bilinear(&a, &b);
        let mut out = Vec::with_capacity(times.len());
        let mut prev: Option<f64> = None;
        for &t in times {
            let v = self.evaluate(&form, t);
            if !(v.norm() > 1e-300) {
                return Err(Error::Underflow(v.norm()));
            }
            let mut g = v.ln() - offset;
            if let Some(p) = prev {
                let two_pi = 2.0 * core::f64::consts::PI;
                g.im += two_pi * ((p - g.im) / two_pi).round();
            }
            prev = Some(g.im);
            out.push(g);
        }
        Ok(out)
    }

    /// Largest population of any top Fock level over the time grid.
    pub fn leakage(&self, times: &[f64]) -> f64 {
        let modes = self.system.all_modes();
        let nb = self.system.bath_dimension();
        let weights = self.system.thermal_weights(None);
        let b = self.initial_state(&weights, |_| C64::new(1.0, 0.0));
        let mut top = vec![C64::new(0.0, 0.0); nb];
        for (bi, t) in top.iter_mut().enumerate() {
            let occ = self.system.occupations(bi, modes.len());
            if occ.iter().any(|&n| n + 1 == self.system.fock_cutoff) {
                *t = C64::new(1.0, 0.0);
            }
        }
        let ds = self.system.h_sys.dim();
        let a: Vec<C64> = (0..ds).flat_map(|_| top.iter().copied()).collect();
        let form = self.bilinear(&a, &b);
        times.iter().map(|&t| self.evaluate(&form, t).re).fold(0.0, f64::max)
    }

    /// `max_t |tr rho(t) - 1|` for the full evolved state.
    pub fn norm_defect(&self, times: &[f64]) -> f64 {
        let weights = self.system.thermal_weights(None);
        let b = self.initial_state(&weights, |_| C64::new(1.0, 0.0));
        let a = vec![C64::new(1.0, 0.0); self.dim()];
        let form = self.bilinear(&a, &b);
        times
            .iter()
            .map(|&t| (self.evaluate(&form, t) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    /// Mean and variance of `Delta O` from the two-point measurement
    /// distribution, enumerated over the eigenvalues of `O`.
    pub fn projective_moments(&self, t: f64) -> (f64, f64) {
        let o = self.system.counting_diagonal();
        let weights = self.system.thermal_weights(None);
        let mut levels: Vec<f64> = o.clone();
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let ds = self.system.h_sys.dim();
        let class = |x: f64| levels.iter().position(|l| (l - x).abs() < 1e-12).unwrap_or(0);
        let mut mean = 0.0;
        let mut second = 0.0;
        for (ci, &oi) in levels.iter().enumerate() {
            let b = self.initial_state(&weights, |x| {
                if class(x) == ci {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            for (cj, &oj) in levels.iter().enumerate() {
                let a: Vec<C64> = (0..ds)
                    .flat_map(|_| {
                        o.iter().map(move |&x| {
                            if class(x) == cj {
                                C64::new(1.0, 0.0)
                            } else {
                                C64::new(0.0, 0.0)
                            }
                        })
                    })
                    .collect();
                let p = self.evaluate(&self.bilinear(&a, &b), t).re;
                mean += p * (oj - oi);
                second += p * (oj - oi) * (oj - oi);
            }
        }
        (mean, second - mean * mean)
    }
}

/// `max |G_S(chi, beta, t) - G(chi, beta - i chi, t)|` over the grids.
pub fn identity_check_eq5(spectrum: &Spectrum, chis: &[f64], times: &[f64]) -> Result<f64> {
    let beta = spectrum.system.betas[spectrum.system.counted];
    let mut worst = 0.0f64;
    for &chi in chis {
        let c = C64::new(chi, 0.0);
        let gs = spectrum.cgf(c, times, Scheme::Single, None)?;
        let gt = spectrum.cgf(c, times, Scheme::TwoPoint, Some(C64::new(beta, 0.0) - I * c))?;
        for (a, b) in gs.iter().zip(&gt) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Golden-rule transfer rates `W[a][b]` (from `b` to `a`) through one bath,
/// in the eigenbasis of `H_S`. Returns `(energies, rates)`.
fn pauli_rates(model: &SystemModel, baths: &[BathModel], nu: usize, beta: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let h = model.h_sys.to_nalgebra();
    let eig = h.symmetric_eigen();
    let e: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let w = eig.eigenvectors;
    let v = w.adjoint() * model.couplings[nu].to_nalgebra() * &w;
    let d = e.len();
    let BathKind::Continuum(sd) = &baths[nu].kind else {
        return Err(Error::domain("the weak-coupling reference needs continuum baths"));
    };
    let mut rates = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let omega = e[b] - e[a];
            if a == b || omega.abs() < 1e-12 {
                continue;
            }
            let j = spectral_value(sd, omega.abs())?;
            let n = bose(C64::new(beta, 0.0), omega.abs()).re;
            let occupation = if omega > 0.0 { n + 1.0 } else { n };
            rates[(a, b)] = 2.0 * core::f64::consts::PI * v[(a, b)].norm_sqr() * j * occupation;
        }
    }
    Ok((e, rates))
}

/// Steady-state mean energy current into the counted bath from the Pauli
/// master equation, with the counted bath at inverse temperature `beta_counted`.
pub fn weak_coupling_current(model: &SystemModel, baths: &[BathModel], beta_counted: f64) -> Result<f64> {
    let counted = baths
        .iter()
        .position(|b| b.counted)
        .ok_or_else(|| Error::validation("counted", "no counted bath"))?;
    let d = model.dim;
    let mut total = DMatrix::<f64>::zeros(d, d);
    let mut energies = Vec::new();
    let mut counted_rates = DMatrix::zeros(d, d);
    for nu in 0..baths.len() {
        let beta = if nu == counted { beta_counted } else { baths[nu].beta };
        let (e, r) = pauli_rates(model, baths, nu, beta)?;
        total += &r;
        if nu == counted {
            counted_rates = r;
        }
        energies = e;
    }
    // Generator L = W - diag(column sums); replace one row by normalization.
    let mut gen = total.clone();
    for b in 0..d {
        let out: f64 = (0..d).map(|a| total[(a, b)]).sum();
        gen[(b, b)] -= out;
    }
    for b in 0..d {
        gen[(0, b)] = 1.0;
    }
    let mut rhs = DVector::zeros(d);
    rhs[0] = 1.0;
    let p = gen
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra(format!("singular rate matrix for {d} levels")))?;
    let mut current = 0.0;
    for a in 0..d {
        for b in 0..d {
            current += (energies[b] - energies[a]) * counted_rates[(a, b)] * p[b];
        }
    }
    Ok(current)
}

/// `beta^2 d I / d beta_counted` at equal temperatures, by central difference
/// with relative step `rel_step`.
pub fn weak_coupling_conductance(model: &SystemModel, baths: &[BathModel], rel_step: f64) -> Result<f64> {
    let counted = baths
        .iter()
        .position(|b| b.counted)
        .ok_or_else(|| Error::validation("counted", "no counted bath"))?;
    let beta = baths[counted].beta;
    let h = rel_step * beta;
    let plus = weak_coupling_current(model, baths, beta + h)?;
    let minus = weak_coupling_current(model, baths, beta - h)?;
    Ok(beta * beta * (plus - minus) / (2.0 * h))
}

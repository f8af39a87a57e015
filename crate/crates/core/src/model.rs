//! Physical setup: system Hamiltonian, couplings, baths and validation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{CMat, Error, Result, C64};

/// Tolerance on Hermiticity and trace normalization of model matrices.
pub const MATRIX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemModel {
    pub dim: usize,
    pub h_sys: CMat,
    /// One Hermitian coupling operator per bath, in bath order.
    pub couplings: Vec<CMat>,
    pub rho0: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SpectralDensity {
    /// `J(w) = (lambda / wc) w exp(-w / wc)`.
    OhmicExpCutoff { lambda: f64, omega_c: f64 },
    /// `J(w) = (2 lambda / pi) gamma w / (w^2 + gamma^2)`.
    DrudeLorentz { lambda: f64, gamma: f64 },
}

impl SpectralDensity {
    pub fn lambda(&self) -> f64 {
        match *self {
            SpectralDensity::OhmicExpCutoff { lambda, .. } => lambda,
            SpectralDensity::DrudeLorentz { lambda, .. } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            SpectralDensity::OhmicExpCutoff { omega_c, .. } => {
                SpectralDensity::OhmicExpCutoff { lambda, omega_c }
            }
            SpectralDensity::DrudeLorentz { gamma, .. } => SpectralDensity::DrudeLorentz { lambda, gamma },
        }
    }

    /// The cutoff scale (`omega_c` or `gamma`).
    pub fn cutoff(&self) -> f64 {
        match *self {
            SpectralDensity::OhmicExpCutoff { omega_c, .. } => omega_c,
            SpectralDensity::DrudeLorentz { gamma, .. } => gamma,
        }
    }
}

/// A single harmonic mode of a discrete bath.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mode {
    pub frequency: f64,
    pub coupling: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BathKind {
    Continuum(SpectralDensity),
    Discrete(Vec<Mode>),
}

/// Measurement scheme for the counted bath.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scheme {
    /// Projective measurements at `0` and `t`.
    TwoPoint,
    /// Difference of two single-measurement generating functions.
    Single,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::TwoPoint => "two_point",
            Scheme::Single => "single",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BathModel {
    pub kind: BathKind,
    pub beta: f64,
    /// Whether this bath's energy is the counted observable.
    pub counted: bool,
    pub scheme: Scheme,
}

impl BathModel {
    pub fn ohmic(lambda: f64, omega_c: f64, temperature: f64) -> Self {
        BathModel {
            kind: BathKind::Continuum(SpectralDensity::OhmicExpCutoff { lambda, omega_c }),
            beta: 1.0 / temperature,
            counted: false,
            scheme: Scheme::TwoPoint,
        }
    }

    pub fn drude(lambda: f64, gamma: f64, temperature: f64) -> Self {
        BathModel {
            kind: BathKind::Continuum(SpectralDensity::DrudeLorentz { lambda, gamma }),
            beta: 1.0 / temperature,
            counted: false,
            scheme: Scheme::TwoPoint,
        }
    }

    pub fn discrete(modes: Vec<Mode>, beta: f64) -> Self {
        BathModel {
            kind: BathKind::Discrete(modes),
            beta,
            counted: false,
            scheme: Scheme::TwoPoint,
        }
    }

    pub fn counted(mut self, scheme: Scheme) -> Self {
        self.counted = true;
        self.scheme = scheme;
        self
    }

    /// Overall coupling scale: `lambda` for continua, `sum gamma_k^2` for
    /// discrete baths.
    pub fn strength(&self) -> f64 {
        match &self.kind {
            BathKind::Continuum(sd) => sd.lambda(),
            BathKind::Discrete(modes) => modes.iter().map(|m| m.coupling * m.coupling).sum(),
        }
    }
}

/// `J(omega)` for a continuum density.
pub fn spectral_value(sd: &SpectralDensity, omega: f64) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::domain(format!("spectral density requested at omega = {omega}")));
    }
    Ok(match *sd {
        SpectralDensity::OhmicExpCutoff { lambda, omega_c } => lambda / omega_c * omega * (-omega / omega_c).exp(),
        SpectralDensity::DrudeLorentz { lambda, gamma } => {
            2.0 * lambda / core::f64::consts::PI * gamma * omega / (omega * omega + gamma * gamma)
        }
    })
}

/// `H_S = omega0 sigma_x + tunneling sigma_z`, `V = sigma_z` for every bath,
/// `rho0 = (sigma_x + 1) / 2`.
pub fn build_two_level_model(
    omega0: f64,
    tunneling: f64,
    baths: Vec<BathModel>,
) -> Result<(SystemModel, Vec<BathModel>)> {
    if !(omega0 > 0.0) {
        return Err(Error::validation("omega0", format!("omega0 must be positive, got {omega0}")));
    }
    let sx = CMat::pauli_x();
    let sz = CMat::pauli_z();
    let h_sys = &sx.scale(C64::new(omega0, 0.0)) + &sz.scale(C64::new(tunneling, 0.0));
    let rho0 = (&sx + &CMat::identity(2)).scale(C64::new(0.5, 0.0));
    let model = SystemModel {
        dim: 2,
        h_sys,
        couplings: baths.iter().map(|_| sz.clone()).collect(),
        rho0,
    };
    let report = validate(&model, &baths);
    if let Some(v) = report.first() {
        return Err(Error::validation(v.invariant, v.detail.clone()));
    }
    Ok((model, baths))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// The first violated invariant, if any.
    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    fn push(&mut self, invariant: &'static str, detail: String) {
        self.violations.push(Violation { invariant, detail });
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Validation {
                invariant: v.invariant,
                detail: v.detail,
            }),
        }
    }
}

/// Checks every model invariant; never fails, returns a report instead.
pub fn validate(model: &SystemModel, baths: &[BathModel]) -> ValidationReport {
    let mut r = ValidationReport::default();
    let d = model.dim;
    if d == 0 {
        r.push("dimension", String::from("system dimension must be positive"));
        return r;
    }
    let mats = core::iter::once(("h_sys", &model.h_sys))
        .chain(core::iter::once(("rho0", &model.rho0)))
        .chain(model.couplings.iter().map(|v| ("coupling", v)));
    for (name, m) in mats {
        if m.dim() != d {
            r.push("dimension", format!("{name} has dimension {} instead of {d}", m.dim()));
            return r;
        }
    }
    if !model.h_sys.is_hermitian(MATRIX_TOL) {
        r.push("hermiticity", format!("h_sys deviates by {:e}", model.h_sys.hermiticity_defect()));
    }
    for (i, v) in model.couplings.iter().enumerate() {
        if !v.is_hermitian(MATRIX_TOL) {
            r.push("hermiticity", format!("coupling {i} deviates by {:e}", v.hermiticity_defect()));
        }
    }
    let tr = model.rho0.trace();
    if (tr - 1.0).norm() > MATRIX_TOL {
        r.push("trace", format!("tr rho0 = {tr}"));
    }
    if !model.rho0.is_hermitian(MATRIX_TOL) {
        r.push("hermiticity", format!("rho0 deviates by {:e}", model.rho0.hermiticity_defect()));
    } else {
        let lowest = model.rho0.hermitian_eigenvalues()[0];
        if lowest < -MATRIX_TOL {
            r.push("positivity", format!("rho0 has eigenvalue {lowest:e}"));
        }
    }
    if model.couplings.len() != baths.len() {
        r.push(
            "coupling-count",
            format!("{} couplings for {} baths", model.couplings.len(), baths.len()),
        );
    }
    let counted = baths.iter().filter(|b| b.counted).count();
    if counted != 1 {
        r.push("counted", format!("exactly one bath must be counted, found {counted}"));
    }
    for (i, b) in baths.iter().enumerate() {
        if !(b.beta > 0.0) || !b.beta.is_finite() {
            r.push("temperature", format!("bath {i} has beta = {}", b.beta));
        }
        match &b.kind {
            BathKind::Continuum(sd) => {
                let (lambda, cut) = (sd.lambda(), sd.cutoff());
                if !(lambda >= 0.0) || !(cut > 0.0) {
                    r.push("spectral", format!("bath {i}: lambda = {lambda}, cutoff = {cut}"));
                }
            }
            BathKind::Discrete(modes) => {
                for (k, m) in modes.iter().enumerate() {
                    if !(m.frequency > 0.0) {
                        r.push("frequency", format!("bath {i} mode {k} has frequency {}", m.frequency));
                    }
                    if !m.coupling.is_finite() {
                        r.push("frequency", format!("bath {i} mode {k} has coupling {}", m.coupling));
                    }
                }
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_baths() -> Vec<BathModel> {
        alloc::vec![
            BathModel::ohmic(1.0, 3.0, 10.0).counted(Scheme::TwoPoint),
            BathModel::ohmic(1.0, 3.0, 10.0),
        ]
    }

    #[test]
    fn two_level_shorthand() {
        let (m, _) = build_two_level_model(1.0, 0.0, two_baths()).unwrap();
        assert_eq!(m.h_sys, CMat::pauli_x());
        assert_eq!(m.rho0, CMat::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]));
        let (m, _) = build_two_level_model(1.0, 1.0, two_baths()).unwrap();
        assert_eq!(m.h_sys, CMat::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]));
        assert!(build_two_level_model(0.0, 0.0, two_baths()).is_err());
    }

    #[test]
    fn rejects_bad_temperature() {
        let mut baths = two_baths();
        baths[1].beta = -1.0;
        let e = build_two_level_model(1.0, 0.0, baths).unwrap_err();
        assert!(matches!(e, Error::Validation { invariant: "temperature", .. }));
    }

    #[test]
    fn ohmic_value() {
        let sd = SpectralDensity::OhmicExpCutoff { lambda: 1.0, omega_c: 3.0 };
        assert_eq!(spectral_value(&sd, 0.0).unwrap(), 0.0);
        assert!((spectral_value(&sd, 1.0).unwrap() - 0.238_844).abs() < 1e-6);
        assert!(spectral_value(&sd, -1.0).is_err());
    }

    #[test]
    fn validation_names_invariants() {
        let (mut m, baths) = build_two_level_model(1.0, 0.0, two_baths()).unwrap();
        assert!(validate(&m, &baths).passed());
        m.rho0 = m.rho0.scale(C64::new(0.9, 0.0));
        assert_eq!(validate(&m, &baths).first().unwrap().invariant, "trace");
        let (mut m, _) = build_two_level_model(1.0, 0.0, two_baths()).unwrap();
        m.couplings[0] = CMat::from_rows(&[
            &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
            &[C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
        ]);
        assert_eq!(validate(&m, &baths).first().unwrap().invariant, "hermiticity");
    }
}

use fcs_heom_core::correlation::{bare_correlation, decompose, thermal_correlation, DecomposeOptions};
use fcs_heom_core::model::{BathKind, BathModel, Mode, Scheme};
use fcs_heom_core::quad;
use fcs_heom_core::{C64, I};

const W: f64 = 1.3;
const G: f64 = 0.2;
const BETA: f64 = 0.8;

/// Closed-form single-mode correlation at a possibly complex inverse temperature.
fn mode_c(beta: C64, tau: f64) -> C64 {
    let n = 1.0 / ((beta * W).exp() - 1.0);
    G * G * ((n + 1.0) * (-I * W * tau).exp() + n * (I * W * tau).exp())
}

/// Dressed `C^{jk}(chi, tau)` for energy counting, thermal weights at `beta`.
fn dressed(beta: C64, j: usize, k: usize, chi: f64, tau: f64) -> C64 {
    match (j, k) {
        (0, 0) => mode_c(beta, tau),
        (1, 1) => mode_c(beta, -tau),
        (1, 0) => -mode_c(beta, tau - chi),
        _ => -mode_c(beta, -tau - chi),
    }
}

/// Single scheme: weights at `beta - i chi` on top of the two-point dressing.
fn dressed_single(j: usize, k: usize, chi: f64, tau: f64) -> C64 {
    dressed(C64::new(BETA, -chi), j, k, chi, tau)
}

fn bath(scheme: Scheme) -> BathModel {
    BathModel::discrete(vec![Mode { frequency: W, coupling: G }], BETA).counted(scheme)
}

/// Derivative in `i chi` by a five-point stencil.
fn d_ichi(f: impl Fn(f64) -> C64, h: f64) -> C64 {
    let d = (-f(2.0 * h) + f(h) * 8.0 - f(-h) * 8.0 + f(-2.0 * h)) / (12.0 * h);
    -I * d
}

#[test]
fn discrete_reconstruction_is_exact() {
    let b = decompose(&bath(Scheme::TwoPoint), &DecomposeOptions::default()).unwrap();
    assert_eq!(b.n_terms(), 2);
    for k in 0..40 {
        let tau = -3.0 + 0.17 * k as f64;
        let exact = bare_correlation(&bath(Scheme::TwoPoint), tau).unwrap();
        assert!((b.reconstruct(tau) - exact).norm() < 1e-14);
        assert!((b.reconstruct(tau) - mode_c(C64::new(BETA, 0.0), tau)).norm() < 1e-14);
    }
    // C(t) = conj C(-t) for a stationary thermal bath.
    for tau in [0.3, 1.1, 4.0] {
        assert!((b.reconstruct(tau) - b.reconstruct(-tau).conj()).norm() < 1e-14);
    }
}

#[test]
fn first_counting_derivative_two_point() {
    let b = decompose(&bath(Scheme::TwoPoint), &DecomposeOptions { q_max: 3, ..Default::default() }).unwrap();
    for tau in [0.0, 0.4, 1.7, 3.2] {
        for (j, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let table = b.counting_correlation(j, k, 1, tau);
            let fd = d_ichi(|x| dressed(C64::new(BETA, 0.0), j, k, x, tau), 1e-3);
            assert!((table - fd).norm() < 1e-8, "({j},{k}) tau={tau}: {table} vs {fd}");
        }
    }
}

#[test]
fn first_counting_derivative_single() {
    let s = decompose(&bath(Scheme::Single), &DecomposeOptions { q_max: 3, ..Default::default() }).unwrap();
    let t = decompose(&bath(Scheme::TwoPoint), &DecomposeOptions { q_max: 3, ..Default::default() }).unwrap();
    for tau in [0.0, 0.9, 2.5] {
        for (j, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let table = s.counting_correlation(j, k, 1, tau);
            let fd = d_ichi(|x| dressed_single(j, k, x, tau), 1e-3);
            assert!((table - fd).norm() < 1e-8, "({j},{k}) tau={tau}: {table} vs {fd}");
            // The schemes differ exactly by the derivative of the thermal weights.
            let weights = d_ichi(|x| dressed(C64::new(BETA, -x), j, k, 0.0, tau), 1e-3);
            let diff = table - t.counting_correlation(j, k, 1, tau);
            assert!((diff - weights).norm() < 1e-8);
            assert!(weights.norm() > 1e-4);
        }
    }
}

#[test]
fn tables_at_finite_chi_match_dressed_formula() {
    let b = decompose(&bath(Scheme::TwoPoint), &DecomposeOptions::default()).unwrap();
    for chi in [-1.2, -0.4, 0.0, 0.5, 1.5] {
        let kernel = b.kernel_at(C64::new(chi, 0.0));
        for tau in [0.0, 0.8, 2.3] {
            for (j, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let sum: C64 = kernel.iter().zip(&b.exponents).map(|(kr, g)| kr[j][k] * (g * tau).exp()).sum();
                let exact = dressed(C64::new(BETA, 0.0), j, k, chi, tau);
                assert!((sum - exact).norm() < 1e-8, "chi={chi} ({j},{k}) tau={tau}");
            }
        }
    }
}

#[test]
fn zeroth_table_entry_is_the_plain_decomposition() {
    let b = decompose(&bath(Scheme::TwoPoint), &DecomposeOptions::default()).unwrap();
    for tau in [0.0, 1.0, 2.0] {
        assert!((b.counting_correlation(0, 0, 0, tau) - b.reconstruct(tau)).norm() < 1e-15);
    }
    assert_eq!(b.closure_residual(), 0.0);
}

#[test]
fn drude_matsubara_matches_quadrature() {
    let (lambda, gamma, temperature) = (0.5, 1.0, 2.0);
    let bath = BathModel::drude(lambda, gamma, temperature);
    let b = decompose(&bath, &DecomposeOptions { n_matsubara: 400, tolerance: 1.0, ..Default::default() }).unwrap();
    assert_eq!(b.n_terms(), 401);
    let BathKind::Continuum(sd) = bath.kind else { unreachable!() };
    for tau in [0.2, 0.7, 1.5, 4.0] {
        // Direct frequency integral of J(w)[coth(beta w/2) cos(w t) - i sin(w t)].
        let f = |w: f64| {
            let j = fcs_heom_core::model::spectral_value(&sd, w).unwrap();
            let coth = 1.0 / (0.5 * w / temperature).tanh();
            C64::new(j * coth * (w * tau).cos(), -j * (w * tau).sin())
        };
        let cut = 2000.0;
        let (q, _) = quad::integrate(f, 0.0, cut, 1e-10, 1e-10, 200_000).unwrap();
        // Beyond the cut J ~ c/w, and the tail integral is c E1(i cut tau).
        let c = fcs_heom_core::model::spectral_value(&sd, cut).unwrap() * cut;
        let z = I * cut * tau;
        let q = q + c * (-z).exp() / z * (1.0 - 1.0 / z + 2.0 / (z * z));
        let m = b.reconstruct(tau);
        assert!((q - m).norm() < 1e-6 * q.norm().max(1e-3) + 2e-6, "tau={tau}: {q} vs {m}");
        let c = thermal_correlation(&BathKind::Continuum(sd), C64::new(1.0 / temperature, 0.0), tau, 0).unwrap()[0];
        assert!((c - q).norm() < 1e-6);
    }
}

#[test]
fn ohmic_fit_meets_its_tolerance() {
    let bath = BathModel::ohmic(1.0, 3.0, 10.0);
    let b = decompose(&bath, &DecomposeOptions::default()).unwrap();
    assert!(b.residual <= 1e-4, "residual {}", b.residual);
    let c0 = bare_correlation(&bath, 0.0).unwrap().norm();
    for k in 0..200 {
        let tau = 10.0 * k as f64 / 199.0;
        let exact = bare_correlation(&bath, tau).unwrap();
        assert!((b.reconstruct(tau) - exact).norm() <= 1e-4 * c0 * 1.0001);
    }
}

#[test]
fn zero_coupling_gives_zero_correlation() {
    let bath = BathModel::ohmic(0.0, 3.0, 10.0);
    for tau in [0.0, 1.0, 5.0] {
        assert_eq!(bare_correlation(&bath, tau).unwrap(), C64::new(0.0, 0.0));
    }
}

use fcs_heom_core::correlation::{decompose, DecomposeOptions, ExpansionBasis};
use fcs_heom_core::hierarchy::PartitionTable;
use fcs_heom_core::model::{build_two_level_model, BathModel, Mode, Scheme, SystemModel};
use fcs_heom_core::oracle::FiniteModeSystem;
use fcs_heom_core::propagator::{
    cgf_series, Hierarchy, HierarchyOptions, IntegrationOptions, Method, Mode as Run, SideBasis,
};
use fcs_heom_core::special::fd_weights;
use fcs_heom_core::statistics::CumulantSeries;
use fcs_heom_core::{CMat, C64, I};

fn discrete_setup(scheme: Scheme) -> (SystemModel, Vec<BathModel>) {
    let baths = vec![
        BathModel::discrete(vec![Mode { frequency: 1.3, coupling: 0.12 }], 1.5).counted(scheme),
        BathModel::discrete(vec![Mode { frequency: 1.9, coupling: 0.1 }], 0.9),
    ];
    build_two_level_model(1.0, 0.4, baths).unwrap()
}

fn bases(baths: &[BathModel], q_max: usize) -> Vec<ExpansionBasis> {
    let opts = DecomposeOptions { q_max, ..DecomposeOptions::default() };
    baths.iter().map(|b| decompose(b, &opts).unwrap()).collect()
}

fn cascade(scheme: Scheme, m_max: usize, n_max: usize, dt: f64, t_end: f64, stride: usize) -> CumulantSeries {
    let (model, baths) = discrete_setup(scheme);
    let h = Hierarchy::new(&model, &baths, &bases(&baths, m_max), Run::MomentCascade { m_max }, &HierarchyOptions { n_max, ..Default::default() }).unwrap();
    let mut s = h.initial_state(&model.rho0).unwrap();
    let traj = h.integrate(&mut s, &IntegrationOptions { dt, t_end, stride, method: Method::Rk4 }).unwrap();
    CumulantSeries::from_trajectory(&traj, &PartitionTable::new(m_max), m_max, scheme, 0, baths[0].beta).unwrap()
}

#[test]
fn hand_assembled_single_term_rhs() {
    // Drude bath with no Matsubara terms has exactly one exponential.
    let bath = BathModel::drude(0.3, 0.7, 2.0).counted(Scheme::TwoPoint);
    let (model, baths) = build_two_level_model(1.0, 0.5, vec![bath]).unwrap();
    let b = decompose(&baths[0], &DecomposeOptions { n_matsubara: 0, tolerance: 10.0, q_max: 0, ..Default::default() }).unwrap();
    assert_eq!(b.n_terms(), 1);
    let opts = HierarchyOptions { n_max: 1, side_basis: SideBasis::Paper, ..Default::default() };
    let h = Hierarchy::new(&model, &baths, &[b.clone()], Run::MomentCascade { m_max: 0 }, &opts).unwrap();
    assert_eq!(h.n_fields(), 3);

    let m = b.kernel_at(C64::new(0.0, 0.0))[0];
    let g = b.exponents[0];
    let v = &model.couplings[0];
    let hs = &model.h_sys;
    let field = |k: u32| {
        CMat::from_vec(2, (0..4).map(|i| C64::new(0.3 * i as f64 + 0.1 * k as f64, 0.7 - 0.2 * (i * k) as f64)).collect())
    };
    let fields: Vec<CMat> = (0..3).map(|i| field(i as u32 + 1)).collect();
    let y: Vec<C64> = fields.iter().flat_map(|f| f.as_slice().to_vec()).collect();
    let mut out = vec![C64::new(0.0, 0.0); y.len()];
    let mut ws = h.workspace();
    h.rhs(&y, &mut out, &mut ws);

    let lindblad_free = |s: &CMat| (&(hs * s) - &(s * hs)).scale(-I);
    let side = |k: usize, s: &CMat| if k == 0 { v * s } else { s * v };
    // Field i has one quantum on side `which[i]`.
    let which: Vec<Option<usize>> = (0..3).map(|i| h.space.n(i).iter().position(|&x| x == 1)).collect();
    for i in 0..3 {
        let s = &fields[i];
        let expect = match which[i] {
            None => {
                let mut e = lindblad_free(s);
                for (j, w) in which.iter().enumerate() {
                    if let Some(k) = w {
                        let sig = &fields[j];
                        e = &e - &(&(v * sig).scale(m[0][*k]) + &(sig * v).scale(m[1][*k]));
                    }
                }
                e
            }
            Some(k) => &(&lindblad_free(s) + &s.scale(g)) + &side(k, &fields[0]),
        };
        let got = CMat::from_vec(2, out[4 * i..4 * i + 4].to_vec());
        assert!((&got - &expect).max_abs() < 1e-12, "field {i}");
    }
}

#[test]
fn rk4_self_convergence_order() {
    let (model, baths) = discrete_setup(Scheme::TwoPoint);
    let h = Hierarchy::new(&model, &baths, &bases(&baths, 1), Run::MomentCascade { m_max: 1 }, &HierarchyOptions { n_max: 4, ..Default::default() }).unwrap();
    let run = |dt: f64| {
        let mut s = h.initial_state(&model.rho0).unwrap();
        h.integrate(&mut s, &IntegrationOptions { dt, t_end: 3.0, stride: 1_000_000, method: Method::Rk4 }).unwrap();
        s.fields
    };
    let (a, b, c) = (run(0.1), run(0.05), run(0.025));
    let diff = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let order = (diff(&a, &b) / diff(&b, &c)).log2();
    assert!(order >= 3.8, "measured order {order}");
}

#[test]
fn trace_and_hermiticity_are_preserved() {
    let (model, baths) = discrete_setup(Scheme::TwoPoint);
    let h = Hierarchy::new(&model, &baths, &bases(&baths, 2), Run::MomentCascade { m_max: 2 }, &HierarchyOptions { n_max: 6, ..Default::default() }).unwrap();
    let mut s = h.initial_state(&model.rho0).unwrap();
    let traj = h.integrate(&mut s, &IntegrationOptions { dt: 0.01, t_end: 10.0, stride: 10, method: Method::Rk4 }).unwrap();
    for (t, tr) in traj.root_traces(0).iter().enumerate() {
        assert!((tr - 1.0).norm() < 1e-6, "t index {t}: {tr}");
        assert!(traj.rho(t).hermiticity_defect() < 1e-8);
    }
}

#[test]
fn step_halving_tracks_fixed_step() {
    let (model, baths) = discrete_setup(Scheme::TwoPoint);
    let h = Hierarchy::new(&model, &baths, &bases(&baths, 1), Run::MomentCascade { m_max: 1 }, &HierarchyOptions { n_max: 4, ..Default::default() }).unwrap();
    let run = |method: Method, dt: f64| {
        let mut s = h.initial_state(&model.rho0).unwrap();
        h.integrate(&mut s, &IntegrationOptions { dt, t_end: 2.0, stride: 10, method }).unwrap();
        s.fields
    };
    let fine = run(Method::Rk4, 0.002);
    let adaptive = run(Method::Rk4Halving { tolerance: 1e-9 }, 0.01);
    let err = fine.iter().zip(&adaptive).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(err < 1e-7, "{err}");
}

#[test]
fn cascade_moments_match_oracle() {
    for scheme in [Scheme::TwoPoint, Scheme::Single] {
        let series = cascade(scheme, 2, 8, 0.01, 4.0, 100);
        let (model, baths) = discrete_setup(scheme);
        let spec = FiniteModeSystem::from_model(&model, &baths, 9).unwrap().diagonalize().unwrap();
        for (i, &t) in series.times.iter().enumerate().skip(1) {
            // Cumulants from the exact generating function by a centred difference in chi.
            let h = 1e-3;
            let g: Vec<C64> = [-2.0, -1.0, 1.0, 2.0]
                .iter()
                .map(|k| spec.cgf(C64::new(k * h, 0.0), &[t], scheme, None).unwrap()[0])
                .collect();
            let d1 = (-g[3] + g[2] * 8.0 - g[1] * 8.0 + g[0]) / (12.0 * h);
            let d2 = (-g[3] + g[2] * 16.0 + g[1] * 16.0 - g[0]) / (12.0 * h * h);
            // G = sum kappa_n (i chi)^n / n!
            let (k1, k2) = ((d1 / I).re, -d2.re);
            let e1 = (series.cumulants[1][i] - k1).abs() / k1.abs().max(1e-3);
            let e2 = (series.cumulants[2][i] - k2).abs() / k2.abs().max(1e-3);
            assert!(e1 < 1e-4 && e2 < 1e-4, "{scheme:?} t={t}: {e1:e} {e2:e}");
            if scheme == Scheme::TwoPoint {
                let (mean, var) = spec.projective_moments(t);
                assert!((mean - series.cumulants[1][i]).abs() < 1e-4 * mean.abs().max(1e-3));
                assert!((var - series.cumulants[2][i]).abs() < 1e-4 * var.abs().max(1e-3));
            }
        }
    }
}

#[test]
fn chi_resolved_derivatives_match_cascade() {
    let scheme = Scheme::TwoPoint;
    let series = cascade(scheme, 3, 6, 0.01, 3.0, 100);
    let (model, baths) = discrete_setup(scheme);
    let b = bases(&baths, 0);
    let step = 0.005;
    let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let runs: Vec<Vec<C64>> = nodes
        .iter()
        .map(|k| {
            let chi = C64::new(k * step, 0.0);
            let h = Hierarchy::new(&model, &baths, &b, Run::ChiResolved { chi }, &HierarchyOptions { n_max: 6, ..Default::default() }).unwrap();
            let mut s = h.initial_state(&model.rho0).unwrap();
            let traj = h.integrate(&mut s, &IntegrationOptions { dt: 0.01, t_end: 3.0, stride: 100, method: Method::Rk4 }).unwrap();
            cgf_series(&traj).unwrap()
        })
        .collect();
    for order in 1..=3 {
        let w = fd_weights(0.0, &nodes, order);
        for (t, _) in series.times.iter().enumerate().skip(1) {
            let d: C64 = w.iter().zip(&runs).map(|(wi, g)| g[t] * *wi).sum::<C64>() / step.powi(order as i32);
            // d^n G / d chi^n = i^n kappa_n
            let kappa = (d / I.powu(order as u32)).re;
            let reference = series.cumulants[order][t];
            assert!((kappa - reference).abs() <= 1e-4 * reference.abs().max(1e-2), "order {order} t index {t}: {kappa} vs {reference}");
        }
    }
}

#[test]
fn zero_field_and_zero_time_generating_function() {
    let (model, baths) = discrete_setup(Scheme::TwoPoint);
    let b = bases(&baths, 0);
    for chi in [0.0, 0.8] {
        let h = Hierarchy::new(&model, &baths, &b, Run::ChiResolved { chi: C64::new(chi, 0.0) }, &HierarchyOptions { n_max: 4, ..Default::default() }).unwrap();
        let mut s = h.initial_state(&model.rho0).unwrap();
        let traj = h.integrate(&mut s, &IntegrationOptions { dt: 0.01, t_end: 2.0, stride: 20, method: Method::Rk4 }).unwrap();
        let g = cgf_series(&traj).unwrap();
        assert!(g[0].norm() < 1e-15);
        if chi == 0.0 {
            assert!(g.iter().all(|x| x.norm() < 1e-9));
        }
    }
}

//! Mode drivers: each turns a validated configuration into artifacts.

use fcs_heom_core::model::{BathKind, BathModel, Mode, Scheme};
use fcs_heom_core::oracle::{identity_check_eq5, FiniteModeSystem};
use fcs_heom_core::statistics::{kappa_from_fluctuations, steady_state_checks, sutran_residual, cgf_rate};
use fcs_heom_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checkpoint;
use crate::config::{ModeKind, RunConfig, ScanParameter};
use crate::engine::{escalate, parallel_map, rate_deviations, Convergence, Engine, SeriesRun};
use crate::error::AppError;
use crate::output::{Artifacts, Cell, Table};

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1, seed: 0 }
    }
}

/// Runs `cfg` (already validated) and returns its artifacts with the overall
/// convergence status.
pub fn execute(cfg: &RunConfig, opts: RunOptions) -> Result<(Artifacts, Convergence), AppError> {
    let (model, baths) = cfg.build_model()?;
    let spacing = match cfg.mode.kind {
        ModeKind::OracleCompare => cfg.numerics.t_end / (cfg.mode.n_times - 1) as f64,
        _ => cfg.spacing(),
    };
    let (mut art, status) = match cfg.mode.kind {
        ModeKind::ConductanceScan => conductance_scan(cfg, &model, &baths, spacing, opts)?,
        _ => {
            let engine = Engine::new(model, baths, cfg.numerics.clone(), spacing)?;
            match cfg.mode.kind {
                ModeKind::Transient => transient(cfg, &engine, opts)?,
                ModeKind::ChiScan => chi_scan(cfg, &engine, opts)?,
                ModeKind::OracleCompare => oracle_compare(cfg, &engine, opts)?,
                ModeKind::ConductanceScan => unreachable!(),
            }
        }
    };
    if let serde_json::Value::Object(m) = &mut art.metadata {
        m.insert("mode".into(), json!(cfg.mode.kind.name()));
        m.insert("numerics".into(), serde_json::to_value(&cfg.numerics).unwrap_or_default());
        m.insert("system".into(), serde_json::to_value(&cfg.system).unwrap_or_default());
        m.insert("baths".into(), serde_json::to_value(&cfg.baths).unwrap_or_default());
        m.insert("workers".into(), json!(opts.workers));
        m.insert("convergence".into(), json!(status));
    }
    Ok((art, status))
}

fn series_table(name: &str, run: &SeriesRun) -> Table {
    let s = &run.series;
    let order = s.order();
    let mut header = vec!["time".to_string()];
    for prefix in ["moment", "cumulant", "dcumulant_dt", "factorial_cumulant"] {
        header.extend((1..=order).map(|n| format!("{prefix}_{n}")));
    }
    header.push("scheme".into());
    let rates = s.rates();
    let mut t = Table { name: name.into(), header, rows: Vec::new() };
    for (i, &time) in s.times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![time.into()];
        row.extend((1..=order).map(|n| Cell::Num(s.moments[n][i])));
        row.extend((1..=order).map(|n| Cell::Num(s.cumulants[n][i])));
        row.extend((1..=order).map(|n| Cell::Num(rates[n][i])));
        row.extend((1..=order).map(|n| Cell::Num(s.factorial_cumulants[n][i])));
        row.push(s.scheme.name().into());
        t.rows.push(row);
    }
    t
}

fn transient(cfg: &RunConfig, engine: &Engine, opts: RunOptions) -> Result<(Artifacts, Convergence), AppError> {
    let n = &cfg.numerics;
    let m = &cfg.mode;
    let order = n.m_max.max(m.relation_order).max(1);
    let schemes = m.scheme.schemes();
    let beta = engine.beta();
    let esc = escalate(
        n,
        |depth| {
            let runs = parallel_map(&schemes, opts.workers, |&s| engine.series(beta, s, order, depth, n.t_end));
            runs.into_iter().collect::<Result<Vec<_>, _>>()
        },
        |runs| runs.iter().flat_map(|r| r.series.cumulants[1..].to_vec()).collect(),
    )?;
    let runs = &esc.value;
    let mut tables: Vec<Table> = runs.iter().map(|r| series_table(&format!("cumulants_{}", r.series.scheme.name()), r)).collect();
    let mut meta = json!({
        "n_max": esc.n_max,
        "escalation": esc.history,
        "fields": runs[0].n_fields,
        "dt": runs[0].dt,
        "trace_drift": runs.iter().map(|r| r.trace_drift).fold(0.0, f64::max),
        "hermiticity": runs.iter().map(|r| r.hermiticity).fold(0.0, f64::max),
        "fit_residuals": engine.fit_residuals,
    });
    let tp = runs.iter().find(|r| r.series.scheme == Scheme::TwoPoint);
    let s = runs.iter().find(|r| r.series.scheme == Scheme::Single);
    if let (Some(tp), Some(s)) = (tp, s) {
        let dev = rate_deviations(&tp.series, &s.series, order);
        let kappa = kappa_from_fluctuations(&tp.series, &s.series, beta).ok();
        let mut header: Vec<String> = vec!["time".into()];
        header.extend((1..=order).map(|k| format!("deviation_{k}")));
        header.push("kappa_fluctuations".into());
        let mut t = Table { name: "deviations".into(), header, rows: Vec::new() };
        for (i, &time) in tp.series.times.iter().enumerate() {
            let mut row: Vec<Cell> = vec![time.into()];
            row.extend(dev.iter().map(|d| Cell::Num(d[i])));
            row.push(kappa.as_ref().map_or(f64::NAN, |k| k[i]).into());
            t.rows.push(row);
        }
        tables.push(t);

        // Transient relations need temperature stencils of both schemes.
        if m.relation_order > 0 {
            let tp_half = 2 * (m.relation_m + m.relation_order - 1).div_ceil(2);
            let s_half = 2 * m.relation_m.div_ceil(2);
            let (tp_st, _) = engine.stencil(Scheme::TwoPoint, order, tp_half, esc.n_max, n.t_end, opts.workers)?;
            let (s_st, _) = engine.stencil(Scheme::Single, order, s_half, esc.n_max, n.t_end, opts.workers)?;
            let mut header: Vec<String> = vec!["time".into()];
            let mut cols = Vec::new();
            for nn in 1..=m.relation_order {
                for mm in 0..=m.relation_m {
                    let e = sutran_residual(&tp_st, &s_st, nn, mm)?;
                    header.push(format!("residual_n{nn}_m{mm}"));
                    header.push(format!("budget_n{nn}_m{mm}"));
                    cols.push(e.values);
                    cols.push(e.error);
                }
            }
            let mut t = Table { name: "relations".into(), header, rows: Vec::new() };
            for (i, &time) in tp_st.times().iter().enumerate() {
                let mut row: Vec<Cell> = vec![time.into()];
                row.extend(cols.iter().map(|c| Cell::Num(c[i])));
                t.rows.push(row);
            }
            tables.push(t);
            let steady = steady_state_checks(&tp_st, m.relation_order, n.steady_window, n.steady_tol)?;
            meta["steady_state"] = json!({
                "reached": steady.steady.reached,
                "drift": steady.steady.drift,
                "saito_utsumi": steady.saito_utsumi.iter().map(|r| json!({"n": r.n, "m": r.m, "residual": r.residual, "budget": r.budget})).collect::<Vec<_>>(),
            });
        }
    }
    let checkpoint = cfg.output.checkpoint.then(|| checkpoint::encode(&runs[0].final_state, runs[0].fingerprint));
    let bases = engine.bases(&engine.baths, n.q_max)?;
    Ok((Artifacts { tables, metadata: meta, bases, checkpoint }, esc.status))
}

/// Baths with the scanned parameter set to `value`.
pub fn scan_baths(baths: &[BathModel], parameter: ScanParameter, value: f64) -> Vec<BathModel> {
    baths
        .iter()
        .cloned()
        .map(|mut b| {
            match (parameter, &mut b.kind) {
                (ScanParameter::Lambda, BathKind::Continuum(sd)) => *sd = sd.with_lambda(value),
                (ScanParameter::OmegaC, BathKind::Continuum(sd)) => {
                    use fcs_heom_core::model::SpectralDensity::*;
                    *sd = match *sd {
                        OhmicExpCutoff { lambda, .. } => OhmicExpCutoff { lambda, omega_c: value },
                        DrudeLorentz { lambda, .. } => DrudeLorentz { lambda, gamma: value },
                    }
                }
                (ScanParameter::Temperature, _) => b.beta = 1.0 / value,
                _ => {}
            }
            b
        })
        .collect()
}

fn conductance_scan(
    cfg: &RunConfig,
    model: &fcs_heom_core::model::SystemModel,
    baths: &[BathModel],
    spacing: f64,
    opts: RunOptions,
) -> Result<(Artifacts, Convergence), AppError> {
    let parameter = cfg.mode.parameter.ok_or_else(|| AppError::Validation("mode.parameter missing".into()))?;
    let points = parallel_map(&cfg.mode.values, opts.workers, |&v| {
        let engine = Engine::new(model.clone(), scan_baths(baths, parameter, v), cfg.numerics.clone(), spacing)?;
        let point = engine.conductance_point()?;
        Ok::<_, AppError>((v, engine.weak_reference(), point))
    });
    let points = points.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut summary = Table::new(
        "conductance",
        &["value", "kappa_finite_bias", "kappa_fluctuations", "relative_gap", "kappa_weak", "n_max", "t_end", "steady", "status"],
    );
    let mut series = Table::new("conductance_series", &["value", "time", "kappa_finite_bias", "kappa_fluctuations"]);
    let mut status = Convergence::Converged;
    let mut detail = Vec::new();
    for (v, weak, p) in &points {
        let point_status = if p.steady { p.status } else { Convergence::NotConverged };
        status = status.and(point_status);
        summary.push(vec![
            (*v).into(),
            p.kappa_finite_bias.into(),
            p.kappa_fluctuations.into(),
            p.relative_gap.into(),
            weak.unwrap_or(f64::NAN).into(),
            p.n_max.into(),
            p.t_end.into(),
            (if p.steady { "yes" } else { "no" }).into(),
            Cell::Text(format!("{:?}", point_status).to_lowercase()),
        ]);
        for (i, &t) in p.run.times.iter().enumerate() {
            series.push(vec![(*v).into(), t.into(), p.run.finite_bias[i].into(), p.run.fluctuations[i].into()]);
        }
        detail.push(json!({"value": v, "escalation": p.history, "fields": p.run.n_fields, "drift": p.drift, "trace_drift": p.run.trace_drift}));
    }
    let meta = json!({ "parameter": format!("{parameter:?}").to_lowercase(), "points": detail });
    Ok((Artifacts { tables: vec![summary, series], metadata: meta, bases: Vec::new(), checkpoint: None }, status))
}

fn chi_scan(cfg: &RunConfig, engine: &Engine, opts: RunOptions) -> Result<(Artifacts, Convergence), AppError> {
    let n = &cfg.numerics;
    let scheme: Scheme = cfg.baths[cfg.counted()].scheme.into();
    let runs = parallel_map(&cfg.mode.chi, opts.workers, |&chi| {
        escalate(
            n,
            |depth| engine.chi_cgf(C64::new(chi, 0.0), scheme, depth, n.t_end, None),
            |r| vec![r.g.iter().map(|g| g.re).collect(), r.g.iter().map(|g| g.im).collect()],
        )
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new("cgf", &["chi", "time", "re_g", "im_g", "scheme"]);
    let mut status = Convergence::Converged;
    for (chi, esc) in cfg.mode.chi.iter().zip(&runs) {
        status = status.and(esc.status);
        for (time, g) in esc.value.times.iter().zip(&esc.value.g) {
            t.push(vec![(*chi).into(), (*time).into(), g.re.into(), g.im.into(), scheme.name().into()]);
        }
    }
    let mut tables = vec![t];
    // Fluctuation-theorem symmetry F(chi) = F(-chi + i a), a = beta_counted - beta_other.
    if scheme == Scheme::TwoPoint && engine.baths.len() == 2 {
        let other = 1 - engine.counted;
        let a = engine.beta() - engine.baths[other].beta;
        let mut ft = Table::new("fluctuation_theorem", &["chi", "re_f", "im_f", "re_f_mirror", "im_f_mirror", "residual"]);
        let items: Vec<(f64, usize)> = cfg.mode.chi.iter().zip(&runs).map(|(c, e)| (*c, e.n_max)).collect();
        let mirrored = parallel_map(&items, opts.workers, |&(chi, depth)| {
            let mirror = C64::new(-chi, a);
            engine.chi_cgf(mirror, scheme, depth, n.t_end, None)
        });
        for ((chi, esc), mirror) in cfg.mode.chi.iter().zip(&runs).zip(mirrored) {
            let mirror = mirror?;
            let f = cgf_rate(&esc.value.times, &esc.value.g, n.steady_window)?;
            let fm = cgf_rate(&mirror.times, &mirror.g, n.steady_window)?;
            ft.push(vec![(*chi).into(), f.re.into(), f.im.into(), fm.re.into(), fm.im.into(), (f - fm).norm().into()]);
        }
        tables.push(ft);
    }
    let meta = json!({
        "n_max": runs.iter().map(|e| e.n_max).collect::<Vec<_>>(),
        "escalation": runs.iter().map(|e| e.history.clone()).collect::<Vec<_>>(),
    });
    Ok((Artifacts { tables, metadata: meta, bases: engine.bases(&engine.baths, 0)?, checkpoint: None }, status))
}

fn all_discrete(baths: &[BathModel]) -> bool {
    baths.iter().all(|b| matches!(b.kind, BathKind::Discrete(_)))
}

fn oracle_compare(cfg: &RunConfig, engine: &Engine, opts: RunOptions) -> Result<(Artifacts, Convergence), AppError> {
    if !all_discrete(&engine.baths) {
        return Err(AppError::Validation("oracle_compare needs discrete baths only".into()));
    }
    let n = &cfg.numerics;
    let fm = FiniteModeSystem::from_model(&engine.model, &engine.baths, cfg.mode.fock_cutoff)?;
    let dimension = fm.dimension()?;
    let commutator = fm.commutator_defect();
    let mut t = Table::new("oracle", &["scheme", "chi", "time", "heom_re", "heom_im", "exact_re", "exact_im", "abs_error"]);
    let mut status = Convergence::Converged;
    let mut worst = serde_json::Map::new();
    let mut leakage = 0.0f64;
    let mut norm = 0.0f64;
    let mut eq5 = f64::NAN;
    for scheme in cfg.mode.scheme.schemes() {
        let mut baths = engine.baths.clone();
        baths[engine.counted].scheme = scheme;
        let spectrum = FiniteModeSystem::from_model(&engine.model, &baths, cfg.mode.fock_cutoff)?.diagonalize()?;
        let runs = parallel_map(&cfg.mode.chi, opts.workers, |&chi| {
            escalate(
                n,
                |depth| engine.chi_cgf(C64::new(chi, 0.0), scheme, depth, n.t_end, None),
                |r| vec![r.g.iter().map(|g| g.re).collect(), r.g.iter().map(|g| g.im).collect()],
            )
        });
        let mut max_err = 0.0f64;
        for (chi, esc) in cfg.mode.chi.iter().zip(runs) {
            let esc = esc?;
            status = status.and(esc.status);
            let exact = spectrum.cgf(C64::new(*chi, 0.0), &esc.value.times, scheme, None)?;
            for ((time, g), e) in esc.value.times.iter().zip(&esc.value.g).zip(&exact) {
                let err = (g - e).norm();
                max_err = max_err.max(err);
                t.push(vec![scheme.name().into(), (*chi).into(), (*time).into(), g.re.into(), g.im.into(), e.re.into(), e.im.into(), err.into()]);
            }
        }
        worst.insert(scheme.name().into(), json!(max_err));
        let times: Vec<f64> = (0..cfg.mode.n_times).map(|i| i as f64 * engine.spacing).collect();
        leakage = leakage.max(spectrum.leakage(&times));
        norm = norm.max(spectrum.norm_defect(&times));
        if scheme == Scheme::TwoPoint {
            eq5 = identity_check_eq5(&spectrum, &cfg.mode.chi, &times)?;
        }
    }
    let draws = random_identity_draws(cfg.mode.draws, opts.seed)?;
    let meta = json!({
        "dimension": dimension,
        "commutator_defect": commutator,
        "max_abs_error": worst,
        "leakage": leakage,
        "leakage_reliable": leakage < fcs_heom_core::oracle::LEAKAGE_LIMIT,
        "norm_defect": norm,
        "identity_residual": eq5,
        "random_identity_residuals": draws,
        "seed": opts.seed,
    });
    Ok((Artifacts { tables: vec![t], metadata: meta, bases: engine.bases(&engine.baths, 0)?, checkpoint: None }, status))
}

/// Cross-scheme identity residuals of the exact oracle on `draws` random
/// two-bath, one-mode-per-bath systems.
pub fn random_identity_draws(draws: usize, seed: u64) -> Result<Vec<f64>, AppError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chis = [-0.8, -0.3, 0.0, 0.4, 0.9];
    let times: Vec<f64> = (0..=10).map(|i| 0.5 * i as f64).collect();
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut bath = |counted: bool| {
            let m = Mode { frequency: rng.gen_range(0.6..2.2), coupling: rng.gen_range(0.03..0.25) };
            let b = BathModel::discrete(vec![m], rng.gen_range(0.4..2.5));
            if counted {
                b.counted(Scheme::TwoPoint)
            } else {
                b
            }
        };
        let baths = vec![bath(true), bath(false)];
        let tunneling = rng.gen_range(0.0..1.0);
        let (model, baths) = fcs_heom_core::model::build_two_level_model(1.0, tunneling, baths)?;
        let spectrum = FiniteModeSystem::from_model(&model, &baths, 6)?.diagonalize()?;
        out.push(identity_check_eq5(&spectrum, &chis, &times)?);
    }
    Ok(out)
}


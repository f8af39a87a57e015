//! Run orchestration on top of the core crate: basis preparation, depth
//! escalation, temperature stencils and the per-mode drivers.

use std::collections::HashMap;

use fcs_heom_core::correlation::{complex_temperature_basis, decompose, fit_ohmic_exponents, DecomposeOptions, ExpansionBasis};
use fcs_heom_core::hierarchy::PartitionTable;
use fcs_heom_core::model::{BathKind, BathModel, Scheme, SpectralDensity, SystemModel};
use fcs_heom_core::propagator::{
    cgf_series, AuxiliaryState, Hierarchy, HierarchyOptions, IntegrationOptions, Method, Mode, Trajectory,
};
use fcs_heom_core::statistics::{
    detect_steady_state, kappa_finite_bias, kappa_from_fluctuations, time_derivative, window_mean, BetaStencil,
    CumulantSeries,
};
use fcs_heom_core::{C64, I};
use serde::Serialize;

use crate::config::Numerics;
use crate::error::AppError;

/// Outcome of the depth escalation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    NotConverged,
    /// Escalation disabled (`n_max_cap == n_max`).
    Unchecked,
}

impl Convergence {
    /// The worse of two statuses.
    pub fn and(self, other: Convergence) -> Convergence {
        use Convergence::*;
        match (self, other) {
            (NotConverged, _) | (_, NotConverged) => NotConverged,
            (Unchecked, _) | (_, Unchecked) => Unchecked,
            _ => Converged,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Escalated<T> {
    pub value: T,
    pub n_max: usize,
    pub status: Convergence,
    /// `(n_max, relative change against the previous depth)`.
    pub history: Vec<(usize, f64)>,
}

/// Largest relative change between two sets of series, each normalized by
/// its own peak magnitude.
pub fn relative_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale
        })
        .fold(0.0, f64::max)
}

/// Runs at `n_max, n_max + step, ...` until successive observables change by
/// less than the tolerance or the cap is reached.
pub fn escalate<T, R, O>(numerics: &Numerics, mut run: R, observe: O) -> Result<Escalated<T>, AppError>
where
    R: FnMut(usize) -> Result<T, AppError>,
    O: Fn(&T) -> Vec<Vec<f64>>,
{
    let mut n = numerics.n_max;
    let mut value = run(n)?;
    let mut history = vec![(n, f64::NAN)];
    if numerics.n_max_cap <= n || numerics.n_max_step == 0 {
        return Ok(Escalated { value, n_max: n, status: Convergence::Unchecked, history });
    }
    while n < numerics.n_max_cap {
        let next_n = (n + numerics.n_max_step).min(numerics.n_max_cap);
        let next = run(next_n)?;
        let change = relative_change(&observe(&next), &observe(&value));
        history.push((next_n, change));
        value = next;
        n = next_n;
        if change < numerics.convergence_tol {
            return Ok(Escalated { value, n_max: n, status: Convergence::Converged, history });
        }
    }
    Ok(Escalated { value, n_max: n, status: Convergence::NotConverged, history })
}

/// One moment-cascade run.
#[derive(Clone, Debug)]
pub struct SeriesRun {
    pub series: CumulantSeries,
    pub n_fields: usize,
    pub dt: f64,
    /// `max_t |tr rho(t) - 1|`.
    pub trace_drift: f64,
    /// `max_t |rho - rho^dagger|`.
    pub hermiticity: f64,
    pub fingerprint: u64,
    pub final_state: AuxiliaryState,
}

/// One chi-resolved run.
#[derive(Clone, Debug)]
pub struct ChiRun {
    pub times: Vec<f64>,
    pub g: Vec<C64>,
    pub n_fields: usize,
}

/// Model plus prepared bath bases shared by every run of a configuration.
#[derive(Clone, Debug)]
pub struct Engine {
    pub model: SystemModel,
    pub baths: Vec<BathModel>,
    pub counted: usize,
    pub numerics: Numerics,
    /// Output spacing in time units.
    pub spacing: f64,
    exponents: Vec<Option<Vec<C64>>>,
    /// Reconstruction residual of each nominal basis.
    pub fit_residuals: Vec<f64>,
}

impl Engine {
    /// Fits the Ohmic exponents once at the nominal temperatures. Temperature
    /// stencils project onto these fixed exponents.
    pub fn new(model: SystemModel, baths: Vec<BathModel>, numerics: Numerics, spacing: f64) -> Result<Self, AppError> {
        let counted = baths
            .iter()
            .position(|b| b.counted)
            .ok_or_else(|| AppError::Validation("no counted bath".into()))?;
        let mut cache: HashMap<(u64, u64), Vec<C64>> = HashMap::new();
        let mut exponents = Vec::new();
        for b in &baths {
            exponents.push(match b.kind {
                BathKind::Continuum(SpectralDensity::OhmicExpCutoff { omega_c, .. }) => {
                    let key = (omega_c.to_bits(), b.beta.to_bits());
                    if !cache.contains_key(&key) {
                        let e = fit_ohmic_exponents(omega_c, b.beta, &decompose_options(&numerics, 0, None))?;
                        cache.insert(key, e);
                    }
                    Some(cache[&key].clone())
                }
                _ => None,
            });
        }
        let mut engine = Engine { model, baths, counted, numerics, spacing, exponents, fit_residuals: Vec::new() };
        let nominal = engine.bases(&engine.baths, 0)?;
        engine.fit_residuals = nominal.iter().map(|b| b.residual).collect();
        Ok(engine)
    }

    pub fn beta(&self) -> f64 {
        self.baths[self.counted].beta
    }

    /// Expansion bases of `baths` on the engine's exponents.
    pub fn bases(&self, baths: &[BathModel], q_max: usize) -> Result<Vec<ExpansionBasis>, AppError> {
        baths
            .iter()
            .zip(&self.exponents)
            .map(|(b, e)| decompose(b, &decompose_options(&self.numerics, q_max, e.clone())).map_err(AppError::from))
            .collect()
    }

    /// Baths with the counted one moved to `beta` and measured in `scheme`.
    pub fn baths_at(&self, beta: f64, scheme: Scheme) -> Vec<BathModel> {
        let mut baths = self.baths.clone();
        baths[self.counted].beta = beta;
        baths[self.counted].scheme = scheme;
        baths
    }

    fn options(&self, n_max: usize) -> HierarchyOptions {
        HierarchyOptions { n_max, side_basis: self.numerics.side_basis.into(), cap: self.numerics.field_cap }
    }

    fn integration(&self, h: &Hierarchy, t_end: f64) -> IntegrationOptions {
        let dt = h.stable_step(self.numerics.dt, self.spacing);
        let stride = (self.spacing / dt).round().max(1.0) as usize;
        let t_end = (t_end / self.spacing).round().max(1.0) * self.spacing;
        let method = match self.numerics.step_halving {
            Some(tolerance) => Method::Rk4Halving { tolerance },
            None => Method::Rk4,
        };
        IntegrationOptions { dt, t_end, stride, method }
    }

    /// Moment-cascade run of cumulants up to `order` with the counted bath at `beta`.
    pub fn series(&self, beta: f64, scheme: Scheme, order: usize, n_max: usize, t_end: f64) -> Result<SeriesRun, AppError> {
        let baths = self.baths_at(beta, scheme);
        let bases = self.bases(&baths, order.max(1))?;
        let h = Hierarchy::new(&self.model, &baths, &bases, Mode::MomentCascade { m_max: order }, &self.options(n_max))?;
        let mut state = h.initial_state(&self.model.rho0)?;
        let opts = self.integration(&h, t_end);
        let traj = h.integrate(&mut state, &opts)?;
        let table = PartitionTable::new(order);
        let series = CumulantSeries::from_trajectory(&traj, &table, order, scheme, self.counted, beta)?;
        let (trace_drift, hermiticity) = density_checks(&traj);
        Ok(SeriesRun {
            series,
            n_fields: h.n_fields(),
            dt: opts.dt,
            trace_drift,
            hermiticity,
            fingerprint: h.space.fingerprint(),
            final_state: state,
        })
    }

    /// Chi-resolved generating function. With `counted_beta` the counted bath
    /// is measured in the two-point scheme at that complex inverse temperature.
    pub fn chi_cgf(
        &self,
        chi: C64,
        scheme: Scheme,
        n_max: usize,
        t_end: f64,
        counted_beta: Option<C64>,
    ) -> Result<ChiRun, AppError> {
        let baths = self.baths_at(self.beta(), if counted_beta.is_some() { Scheme::TwoPoint } else { scheme });
        let mut bases = self.bases(&baths, 0)?;
        if let Some(beta) = counted_beta {
            bases[self.counted] = complex_temperature_basis(&baths[self.counted], &bases[self.counted], beta)?;
        }
        let h = Hierarchy::new(&self.model, &baths, &bases, Mode::ChiResolved { chi }, &self.options(n_max))?;
        let mut state = h.initial_state(&self.model.rho0)?;
        let opts = self.integration(&h, t_end);
        let traj = h.integrate(&mut state, &opts)?;
        Ok(ChiRun { g: cgf_series(&traj)?, times: traj.times, n_fields: h.n_fields() })
    }

    /// The four runs behind both conductance estimators at depth `n_max`.
    pub fn conductance(&self, n_max: usize, t_end: f64) -> Result<ConductanceRun, AppError> {
        let beta = self.beta();
        let delta = self.numerics.beta_step * beta;
        let plus = self.series(beta + delta / 2.0, Scheme::TwoPoint, 1, n_max, t_end)?;
        let minus = self.series(beta - delta / 2.0, Scheme::TwoPoint, 1, n_max, t_end)?;
        let tp = self.series(beta, Scheme::TwoPoint, 2, n_max, t_end)?;
        let s = self.series(beta, Scheme::Single, 2, n_max, t_end)?;
        Ok(ConductanceRun {
            times: tp.series.times.clone(),
            finite_bias: kappa_finite_bias(&plus.series, &minus.series, beta, delta)?,
            fluctuations: kappa_from_fluctuations(&tp.series, &s.series, beta)?,
            n_fields: tp.n_fields,
            trace_drift: [&plus, &minus, &tp, &s].iter().map(|r| r.trace_drift).fold(0.0, f64::max),
        })
    }

    /// Conductance with depth escalation, extending the run time by doubling
    /// up to `t_end_cap` until both estimators are steady.
    pub fn conductance_point(&self) -> Result<ConductancePoint, AppError> {
        let mut t_end = self.numerics.t_end;
        let observe = |r: &ConductanceRun| vec![r.finite_bias.clone(), r.fluctuations.clone()];
        let mut esc = escalate(&self.numerics, |n| self.conductance(n, t_end), observe)?;
        loop {
            let run = &esc.value;
            let window = self.numerics.steady_window;
            let tol = self.numerics.steady_tol;
            let a = detect_steady_state(&run.times, &run.fluctuations, window, tol);
            let b = detect_steady_state(&run.times, &run.finite_bias, window, tol);
            if (a.reached && b.reached) || t_end >= self.numerics.t_end_cap {
                let start = a.window_start.max(b.window_start);
                let kf = window_mean(&run.fluctuations, start);
                let kb = window_mean(&run.finite_bias, start);
                return Ok(ConductancePoint {
                    kappa_finite_bias: kb,
                    kappa_fluctuations: kf,
                    relative_gap: (kb - kf).abs() / kf.abs().max(1e-300),
                    steady: a.reached && b.reached,
                    drift: a.drift.max(b.drift),
                    t_end,
                    n_max: esc.n_max,
                    status: esc.status,
                    history: esc.history.clone(),
                    run: esc.value.clone(),
                });
            }
            t_end = (2.0 * t_end).min(self.numerics.t_end_cap);
            esc.value = self.conductance(esc.n_max, t_end)?;
        }
    }

    /// Runs of one scheme on the stencil `beta0 + k h`, `|k| <= half_width`.
    pub fn stencil(
        &self,
        scheme: Scheme,
        order: usize,
        half_width: usize,
        n_max: usize,
        t_end: f64,
        workers: usize,
    ) -> Result<(BetaStencil, f64), AppError> {
        let beta = self.beta();
        let h = self.numerics.beta_step * beta;
        let k = half_width as i64;
        let offsets: Vec<i64> = (-k..=k).collect();
        let runs = parallel_map(&offsets, workers, |&i| self.series(beta + i as f64 * h, scheme, order, n_max, t_end));
        let mut series = Vec::new();
        let mut drift = 0.0f64;
        for run in runs {
            let run = run?;
            drift = drift.max(run.trace_drift);
            series.push(run.series);
        }
        Ok((BetaStencil::new(beta, h, series)?, drift))
    }

    /// Weak-coupling conductance for the engine's model, where defined.
    pub fn weak_reference(&self) -> Option<f64> {
        let mut baths = self.baths.clone();
        baths[self.counted].scheme = Scheme::TwoPoint;
        fcs_heom_core::oracle::weak_coupling_conductance(&self.model, &baths, 1e-3).ok()
    }

    /// Cross-scheme identity through the hierarchy: the single-measurement
    /// generating function from its moment cascade, resummed as a Taylor
    /// series in `chi`, against a two-point chi-resolved run at the complex
    /// inverse temperature `beta - i chi`. Returns the largest deviation over
    /// the chi grid and output times.
    pub fn cross_scheme_residual(&self, chis: &[f64], order: usize, n_max: usize, t_end: f64) -> Result<f64, AppError> {
        let single = self.series(self.beta(), Scheme::Single, order, n_max, t_end)?.series;
        let mut worst = 0.0f64;
        for &chi in chis {
            let c = C64::new(chi, 0.0);
            let shifted = C64::new(self.beta(), 0.0) - I * c;
            let run = self.chi_cgf(c, Scheme::TwoPoint, n_max, t_end, Some(shifted))?;
            for (t, g) in run.g.iter().enumerate() {
                let mut taylor = C64::new(0.0, 0.0);
                let mut pow = C64::new(1.0, 0.0);
                let mut fact = 1.0;
                for n in 1..=order {
                    pow *= I * c;
                    fact *= n as f64;
                    taylor += pow * single.cumulants[n][t] / fact;
                }
                worst = worst.max((taylor - g).norm());
            }
        }
        Ok(worst)
    }
}

fn decompose_options(n: &Numerics, q_max: usize, exponents: Option<Vec<C64>>) -> DecomposeOptions {
    DecomposeOptions {
        terms: n.terms,
        n_matsubara: n.n_matsubara,
        window: n.fit_window,
        samples: n.fit_samples,
        tolerance: n.fit_tolerance,
        q_max,
        exponents,
    }
}

fn density_checks(traj: &Trajectory) -> (f64, f64) {
    let k = traj.root_m.iter().position(|m| m.iter().all(|&x| x == 0)).unwrap_or(0);
    let trace = traj.root_traces(k).iter().map(|t| (t - 1.0).norm()).fold(0.0, f64::max);
    let herm = (0..traj.times.len())
        .map(|t| traj.root(t, k).hermiticity_defect())
        .fold(0.0, f64::max);
    (trace, herm)
}

#[derive(Clone, Debug)]
pub struct ConductanceRun {
    pub times: Vec<f64>,
    pub finite_bias: Vec<f64>,
    pub fluctuations: Vec<f64>,
    pub n_fields: usize,
    pub trace_drift: f64,
}

#[derive(Clone, Debug)]
pub struct ConductancePoint {
    pub kappa_finite_bias: f64,
    pub kappa_fluctuations: f64,
    pub relative_gap: f64,
    pub steady: bool,
    pub drift: f64,
    pub t_end: f64,
    pub n_max: usize,
    pub status: Convergence,
    pub history: Vec<(usize, f64)>,
    pub run: ConductanceRun,
}

/// Difference of the cumulant rates between the two schemes,
/// `d/dt (kappa_n^S - kappa_n^TP)`, for `n = 1..=order`.
pub fn rate_deviations(two_point: &CumulantSeries, single: &CumulantSeries, order: usize) -> Vec<Vec<f64>> {
    (1..=order)
        .map(|n| {
            let d: Vec<f64> = single.cumulants[n].iter().zip(&two_point.cumulants[n]).map(|(s, t)| s - t).collect();
            time_derivative(&two_point.times, &d)
        })
        .collect()
}

/// Applies `f` to every item on `workers` threads, returning results in
/// input order. Each item runs sequentially on one thread, so results do not
/// depend on the worker count.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every item is processed")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escalation_stops_when_changes_are_small() {
        let numerics = Numerics { n_max: 2, n_max_step: 2, n_max_cap: 20, convergence_tol: 1e-3, ..Numerics::default() };
        // Value approaches 1 geometrically with depth.
        let esc = escalate(&numerics, |n| Ok(1.0 - 0.5f64.powi(n as i32)), |v| vec![vec![*v]]).unwrap();
        assert_eq!(esc.status, Convergence::Converged);
        assert!(esc.n_max < 20);
        let stuck = escalate(&numerics, |n| Ok(n as f64), |v| vec![vec![*v]]).unwrap();
        assert_eq!(stuck.status, Convergence::NotConverged);
        assert_eq!(stuck.n_max, 20);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
    }
}

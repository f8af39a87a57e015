//! Moments, cumulants and transport coefficients.
//!
//! Naming follows `J_m^n`: `n` derivatives in `i chi` and `m` derivatives in
//! the inverse temperature of the counted bath. `J^n_0` is the `n`-th
//! cumulant of the measured energy difference; a `Single` suffix marks the
//! single-measurement scheme.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::hierarchy::PartitionTable;
use crate::model::Scheme;
use crate::propagator::Trajectory;
use crate::special::{binomial, fd_weights, stirling2_table};
use crate::{Error, Result, C64};

/// Relative precision assumed for cumulants coming out of a run.
pub const ROUNDOFF: f64 = 1e-12;

/// `mu_M(t) = Re tr sum_{|m| = M} a_m sigma_m(t)` for `M = 0..=order`.
pub fn moments_from_trajectory(traj: &Trajectory, table: &PartitionTable, order: usize) -> Result<Vec<Vec<f64>>> {
    let available = traj.root_m.first().map_or(0, |m| m.len());
    if order > available {
        return Err(Error::Order {
            requested: order,
            available,
        });
    }
    let weight = |m: &[u8]| m.iter().enumerate().map(|(i, &c)| (i + 1) * c as usize).sum::<usize>();
    let mut out = vec![vec![0.0; traj.times.len()]; order + 1];
    for (k, m) in traj.root_m.iter().enumerate() {
        let w = weight(m);
        if w > order {
            continue;
        }
        let a = table.get(m) as f64;
        for (t, tr) in traj.root_traces(k).into_iter().enumerate() {
            out[w][t] += a * tr.re;
        }
    }
    Ok(out)
}

/// Cumulants from raw moments (`mu[0] = 1`). Entry 0 of the result is 0.
pub fn cumulants_from_moments(mu: &[f64]) -> Vec<f64> {
    let n = mu.len();
    let mut k = vec![0.0; n];
    for order in 1..n {
        let mut v = mu[order];
        for m in 1..order {
            v -= binomial((order - 1) as u64, (m - 1) as u64) as f64 * k[m] * mu[order - m];
        }
        k[order] = v;
    }
    k
}

/// Inverse of [`cumulants_from_moments`].
pub fn moments_from_cumulants(k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut mu = vec![0.0; n];
    if n > 0 {
        mu[0] = 1.0;
    }
    for order in 1..n {
        let mut v = 0.0;
        for m in 1..=order {
            v += binomial((order - 1) as u64, (m - 1) as u64) as f64 * k[m] * mu[order - m];
        }
        mu[order] = v;
    }
    mu
}

/// `F_n = k_n - sum_{m<n} S(n, m) F_m`, with `S` the Stirling numbers of the second kind.
pub fn factorial_cumulants(k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let s = stirling2_table(n.max(1) - 1);
    let mut f = vec![0.0; n];
    for order in 1..n {
        let mut v = k[order];
        for m in 1..order {
            v -= s[order][m] as f64 * f[m];
        }
        f[order] = v;
    }
    f
}

/// Inverse of [`factorial_cumulants`].
pub fn cumulants_from_factorial(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let s = stirling2_table(n.max(1) - 1);
    (0..n)
        .map(|order| (1..=order).map(|m| s[order][m] as f64 * f[m]).sum())
        .collect()
}

/// Second-order finite-difference derivative on a (possibly non-uniform) grid.
pub fn time_derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 3 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = if i == 0 {
                (0, 3)
            } else if i == n - 1 {
                (n - 3, n)
            } else {
                (i - 1, i + 2)
            };
            let w = fd_weights(times[i], &times[lo..hi], 1);
            w.iter().zip(&values[lo..hi]).map(|(w, v)| w * v).sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CumulantSeries {
    pub times: Vec<f64>,
    /// `moments[M][t]`, `M = 0..=order`.
    pub moments: Vec<Vec<f64>>,
    /// `cumulants[n][t]`; row 0 is zero.
    pub cumulants: Vec<Vec<f64>>,
    pub factorial_cumulants: Vec<Vec<f64>>,
    pub scheme: Scheme,
    pub bath: usize,
    pub beta: f64,
}

impl CumulantSeries {
    pub fn from_trajectory(
        traj: &Trajectory,
        table: &PartitionTable,
        order: usize,
        scheme: Scheme,
        bath: usize,
        beta: f64,
    ) -> Result<Self> {
        let moments = moments_from_trajectory(traj, table, order)?;
        Ok(Self::from_moments(traj.times.clone(), moments, scheme, bath, beta))
    }

    pub fn from_moments(times: Vec<f64>, moments: Vec<Vec<f64>>, scheme: Scheme, bath: usize, beta: f64) -> Self {
        let order = moments.len();
        let nt = times.len();
        let mut cumulants = vec![vec![0.0; nt]; order];
        let mut factorial = vec![vec![0.0; nt]; order];
        for t in 0..nt {
            let mu: Vec<f64> = moments.iter().map(|row| row[t]).collect();
            let k = cumulants_from_moments(&mu);
            let f = factorial_cumulants(&k);
            for n in 0..order {
                cumulants[n][t] = k[n];
                factorial[n][t] = f[n];
            }
        }
        CumulantSeries {
            times,
            moments,
            cumulants,
            factorial_cumulants: factorial,
            scheme,
            bath,
            beta,
        }
    }

    pub fn order(&self) -> usize {
        self.cumulants.len().saturating_sub(1)
    }

    /// `d kappa_n / dt` for `n = 0..=order`.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        self.cumulants.iter().map(|k| time_derivative(&self.times, k)).collect()
    }

    pub fn cumulant(&self, n: usize) -> Result<&[f64]> {
        self.cumulants.get(n).map(|v| v.as_slice()).ok_or(Error::Order {
            requested: n,
            available: self.order(),
        })
    }
}

/// A time series with a pointwise error estimate.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub values: Vec<f64>,
    pub error: Vec<f64>,
}

/// Cumulant series on the inverse-temperature grid `beta0 + k h`, `k = -K..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaStencil {
    pub beta0: f64,
    pub step: f64,
    /// `series[k + K]` was run at `beta0 + k step`.
    pub series: Vec<CumulantSeries>,
}

impl BetaStencil {
    pub fn new(beta0: f64, step: f64, series: Vec<CumulantSeries>) -> Result<Self> {
        if series.len() % 2 == 0 {
            return Err(Error::Grid(String::from("a centred stencil needs an odd number of runs")));
        }
        if series.iter().any(|s| !same_grid(&s.times, &series[0].times)) {
            return Err(Error::Grid(String::from("stencil runs have different time grids")));
        }
        Ok(BetaStencil { beta0, step, series })
    }

    pub fn half_width(&self) -> usize {
        self.series.len() / 2
    }

    pub fn times(&self) -> &[f64] {
        &self.series[self.half_width()].times
    }

    /// Offsets needed for an `m`-th derivative: the minimal centred stencil
    /// and the same stencil at twice the spacing.
    pub fn nodes_for(m: usize) -> (Vec<i64>, Vec<i64>) {
        let p = m.div_ceil(2) as i64;
        let fine: Vec<i64> = (-p..=p).collect();
        let coarse = fine.iter().map(|k| 2 * k).collect();
        (fine, coarse)
    }

    fn apply(&self, n: usize, m: usize, offsets: &[i64]) -> Result<(Vec<f64>, f64)> {
        let k = self.half_width() as i64;
        if offsets.iter().any(|o| o.abs() > k) {
            return Err(Error::Order {
                requested: m,
                available: self.half_width() * 2,
            });
        }
        let nodes: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
        let w = fd_weights(0.0, &nodes, m);
        let scale = self.step.powi(m as i32);
        let nt = self.times().len();
        let mut out = vec![0.0; nt];
        for (wi, &o) in w.iter().zip(offsets) {
            let s = self.series[(o + k) as usize].cumulant(n)?;
            for t in 0..nt {
                out[t] += wi * s[t] / scale;
            }
        }
        let wsum = w.iter().map(|x| x.abs()).sum::<f64>() / scale;
        Ok((out, wsum))
    }

    /// `J_m^n(t)` with a Richardson error estimate `|D_h - D_2h|` plus a
    /// roundoff floor. If the coarse stencil does not fit, only the roundoff
    /// floor is attached.
    pub fn j_coefficient(&self, n: usize, m: usize) -> Result<Estimate> {
        let (fine, coarse) = Self::nodes_for(m);
        let (values, wsum) = self.apply(n, m, &fine)?;
        let nt = values.len();
        let mut error = vec![0.0; nt];
        if m > 0 {
            let magnitude: Vec<f64> = (0..nt)
                .map(|t| {
                    self.series
                        .iter()
                        .map(|s| s.cumulants[n][t].abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            let coarse_values = self.apply(n, m, &coarse).ok();
            for t in 0..nt {
                let richardson = coarse_values.as_ref().map_or(0.0, |(c, _)| (values[t] - c[t]).abs());
                error[t] = richardson + ROUNDOFF * magnitude[t] * wsum;
            }
        }
        Ok(Estimate { values, error })
    }
}

/// Output grids of runs with different internal steps agree only to rounding.
fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// `beta^2 d/dt [kappa_1(beta + delta/2) - kappa_1(beta - delta/2)] / delta`.
pub fn kappa_finite_bias(plus: &CumulantSeries, minus: &CumulantSeries, beta: f64, delta: f64) -> Result<Vec<f64>> {
    if !same_grid(&plus.times, &minus.times) {
        return Err(Error::Grid(String::from("finite-bias runs have different time grids")));
    }
    let a = plus.cumulant(1)?;
    let b = minus.cumulant(1)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / delta).collect();
    Ok(time_derivative(&plus.times, &diff).into_iter().map(|v| beta * beta * v).collect())
}

/// `(beta^2 / 2) d/dt [kappa_2^TwoPoint - kappa_2^Single]` at equal temperatures.
pub fn kappa_from_fluctuations(two_point: &CumulantSeries, single: &CumulantSeries, beta: f64) -> Result<Vec<f64>> {
    if two_point.scheme != Scheme::TwoPoint || single.scheme != Scheme::Single {
        return Err(Error::Mode(String::from("need one two-point and one single-measurement series")));
    }
    if !same_grid(&two_point.times, &single.times) {
        return Err(Error::Grid(String::from("scheme runs have different time grids")));
    }
    let a = two_point.cumulant(2)?;
    let b = single.cumulant(2)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(time_derivative(&two_point.times, &diff)
        .into_iter()
        .map(|v| 0.5 * beta * beta * v)
        .collect())
}

/// Residual of the transient relation
/// `J_{S,m}^n - sum_j C(n, j) (-1)^j J_{m+j}^{n-j}`, with the propagated
/// finite-difference error budget.
pub fn sutran_residual(two_point: &BetaStencil, single: &BetaStencil, n: usize, m: usize) -> Result<Estimate> {
    if !same_grid(two_point.times(), single.times()) {
        return Err(Error::Grid(String::from("scheme stencils have different time grids")));
    }
    if (two_point.beta0 - single.beta0).abs() > 1e-14 * two_point.beta0.abs() {
        return Err(Error::Grid(String::from("scheme stencils are centred on different temperatures")));
    }
    let js = single.j_coefficient(n, m)?;
    let mut values = js.values.clone();
    let mut error = js.error.clone();
    for j in 0..=n {
        if n - j == 0 {
            // J^0 = G(0) = 0 identically.
            continue;
        }
        let c = binomial(n as u64, j as u64) as f64 * if j % 2 == 0 { 1.0 } else { -1.0 };
        let term = two_point.j_coefficient(n - j, m + j)?;
        for t in 0..values.len() {
            values[t] -= c * term.values[t];
            error[t] += c.abs() * term.error[t];
        }
    }
    Ok(Estimate { values, error })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SteadyState {
    pub reached: bool,
    /// First grid index of the trailing window.
    pub window_start: usize,
    /// Largest deviation within the window relative to the reference scale.
    pub drift: f64,
}

/// Steady state if, over the trailing `window`, `rate` stays within
/// `tolerance` of its final value relative to `max(|final|, max |rate|)`.
pub fn detect_steady_state(times: &[f64], rate: &[f64], window: f64, tolerance: f64) -> SteadyState {
    let n = times.len();
    if n == 0 {
        return SteadyState {
            reached: false,
            window_start: 0,
            drift: f64::INFINITY,
        };
    }
    let t_end = times[n - 1];
    let start = times.iter().position(|&t| t >= t_end - window).unwrap_or(n - 1);
    let covered = t_end - times[start] >= window * (1.0 - 1e-9) && times[0] <= t_end - window + 1e-12;
    let last = rate[n - 1];
    let scale = rate.iter().map(|r| r.abs()).fold(last.abs(), f64::max).max(f64::MIN_POSITIVE);
    let drift = rate[start..].iter().map(|r| (r - last).abs()).fold(0.0, f64::max) / scale;
    SteadyState {
        reached: covered && drift <= tolerance,
        window_start: start,
        drift,
    }
}

/// Mean of `values` over the indices `start..`.
pub fn window_mean(values: &[f64], start: usize) -> f64 {
    let tail = &values[start.min(values.len())..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Steady-state relation residual `L_m^n - sum_j C(m, j) (-1)^{n+j} L_{m-j}^{n+j}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelationResidual {
    pub n: usize,
    pub m: usize,
    pub residual: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SteadyStateReport {
    pub steady: SteadyState,
    /// `l[n][m]`, with error `l_error[n][m]`.
    pub l: Vec<Vec<f64>>,
    pub l_error: Vec<Vec<f64>>,
    pub saito_utsumi: Vec<RelationResidual>,
}

/// Steady-state coefficients `L_m^n = lim d/dt J_m^n` averaged over the
/// trailing window, and the Saito–Utsumi residuals for `1 <= n`, `n + m <= order`.
/// Temperatures must be equal for the relations to apply.
pub fn steady_state_checks(stencil: &BetaStencil, order: usize, window: f64, tolerance: f64) -> Result<SteadyStateReport> {
    let times = stencil.times().to_vec();
    let centre = &stencil.series[stencil.half_width()];
    let rate1 = time_derivative(&times, centre.cumulant(1)?);
    let steady = detect_steady_state(&times, &rate1, window, tolerance);
    let mut l = vec![vec![f64::NAN; order + 1]; order + 1];
    let mut l_error = vec![vec![f64::NAN; order + 1]; order + 1];
    for n in 1..=order {
        for m in 0..=order - n {
            let Ok(j) = stencil.j_coefficient(n, m) else {
                continue;
            };
            let rate = time_derivative(&times, &j.values);
            let err_rate = time_derivative(&times, &j.error);
            let mean = window_mean(&rate, steady.window_start);
            // Spread over the window plus the propagated stencil error.
            let spread = rate[steady.window_start..]
                .iter()
                .map(|r| (r - mean).abs())
                .fold(0.0, f64::max);
            let fd = err_rate[steady.window_start..].iter().map(|x| x.abs()).fold(0.0, f64::max);
            l[n][m] = mean;
            l_error[n][m] = spread + fd;
        }
    }
    let mut relations = Vec::new();
    for n in 1..=order {
        for m in 0..=order - n {
            let mut rhs = 0.0;
            let mut budget = l_error[n][m];
            let mut ok = l[n][m].is_finite();
            for j in 0..=m {
                let (nn, mm) = (n + j, m - j);
                if nn > order || !l[nn][mm].is_finite() {
                    ok = false;
                    break;
                }
                let c = binomial(m as u64, j as u64) as f64 * if (n + j) % 2 == 0 { 1.0 } else { -1.0 };
                rhs += c * l[nn][mm];
                budget += c.abs() * l_error[nn][mm];
            }
            if ok {
                relations.push(RelationResidual {
                    n,
                    m,
                    residual: l[n][m] - rhs,
                    budget,
                });
            }
        }
    }
    Ok(SteadyStateReport {
        steady,
        l,
        l_error,
        saito_utsumi: relations,
    })
}

/// Late-time slope of a generating-function series, `(G(t_end) - G(t_end - window)) / window`.
pub fn cgf_rate(times: &[f64], g: &[C64], window: f64) -> Result<C64> {
    let n = times.len();
    if n < 2 {
        return Err(Error::Grid(String::from("need at least two samples")));
    }
    let t_end = times[n - 1];
    let start = times.iter().position(|&t| t >= t_end - window).unwrap_or(0).min(n - 2);
    Ok((g[n - 1] - g[start]) / (t_end - times[start]))
}

/// Transport coefficients of a run set.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportReport {
    pub times: Vec<f64>,
    /// `j[n][m]` from the two-point scheme.
    pub j: Vec<Vec<Option<Estimate>>>,
    /// `js[n][m]` from the single-measurement scheme.
    pub js: Vec<Vec<Option<Estimate>>>,
    pub kappa_finite_bias: Option<Vec<f64>>,
    pub kappa_fluctuations: Option<Vec<f64>>,
    /// Transient relation residuals keyed by `(n, m)`.
    pub deviations: Vec<(usize, usize, Estimate)>,
    pub steady: Option<SteadyStateReport>,
    pub notes: Vec<String>,
}

impl TransportReport {
    /// Fills every coefficient and residual the two stencils support.
    pub fn from_stencils(two_point: &BetaStencil, single: &BetaStencil, max_n: usize, max_m: usize) -> Self {
        let mut report = TransportReport {
            times: two_point.times().to_vec(),
            ..TransportReport::default()
        };
        let fill = |s: &BetaStencil, m_cap: usize| -> Vec<Vec<Option<Estimate>>> {
            (0..=max_n)
                .map(|n| (0..=m_cap).map(|m| s.j_coefficient(n, m).ok()).collect())
                .collect()
        };
        report.j = fill(two_point, max_m + max_n);
        report.js = fill(single, max_m);
        for n in 1..=max_n {
            for m in 0..=max_m {
                match sutran_residual(two_point, single, n, m) {
                    Ok(e) => report.deviations.push((n, m, e)),
                    Err(e) => report.notes.push(format!("relation (n={n}, m={m}) skipped: {e}")),
                }
            }
        }
        report
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion; a failing
//! criterion is reported, not panicked on.

use std::io::Write;
use std::time::Instant;

use fcs_heom::config::Numerics;
use fcs_heom::engine::{Convergence, Engine};
use fcs_heom::output::{Artifacts, Table};
use fcs_heom::runner::{execute, RunOptions};
use fcs_heom::RunConfig;
use fcs_heom_core::hierarchy::{partitions, PartitionTable};
use fcs_heom_core::model::{build_two_level_model, BathModel, Mode, Scheme};
use fcs_heom_core::propagator::{Hierarchy, HierarchyOptions, IntegrationOptions, Method, Mode as Run};
use fcs_heom_core::statistics::{cumulants_from_factorial, cumulants_from_moments, factorial_cumulants, moments_from_cumulants};
use fcs_heom_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const ORACLE: &str = include_str!("configs/oracle.toml");
const RELATIONS: &str = include_str!("configs/relations.toml");
const DEVIATIONS: &str = include_str!("configs/deviations.toml");
const SCAN_WEAK: &str = include_str!("configs/scan_weak.toml");
const SCAN_STRONG: &str = include_str!("configs/scan_strong.toml");
const TRANSIENT_KAPPA: &str = include_str!("configs/transient_kappa.toml");

#[derive(Default)]
struct Ledger {
    passed: usize,
    failed: usize,
    /// Largest trace drift seen in any run.
    trace_drift: f64,
    /// Runs whose depth escalation did not converge.
    unconverged: Vec<String>,
}

impl Ledger {
    fn report(&mut self, name: &str, pass: bool, detail: String) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        std::io::stdout().flush().ok();
    }

    fn depth(&mut self, run: &str, history: &Value, tol: f64) {
        let last = history.as_array().and_then(|h| h.last()).and_then(|e| e[1].as_f64());
        if !last.is_some_and(|c| c < tol) {
            self.unconverged.push(run.to_string());
        }
    }
}

fn run(text: &str) -> (RunConfig, Artifacts, Convergence) {
    let cfg = RunConfig::parse(text).expect("config parses");
    cfg.validate().expect("config is valid");
    let (art, status) = execute(&cfg, RunOptions::default()).expect("run succeeds");
    (cfg, art, status)
}

fn table<'a>(art: &'a Artifacts, name: &str) -> &'a Table {
    art.tables.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("table {name}"))
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_else(|| panic!("column {name}"))
}

fn with_lambda(text: &str, lambda: f64) -> String {
    text.replace("lambda = 0.15", &format!("lambda = {lambda}"))
}

fn oracle_equivalence(l: &mut Ledger) {
    let clock = Instant::now();
    let (cfg, art, status) = run(ORACLE);
    let meta = &art.metadata;
    let tp = meta["max_abs_error"]["two_point"].as_f64().unwrap();
    let s = meta["max_abs_error"]["single"].as_f64().unwrap();
    let leak = meta["leakage"].as_f64().unwrap();
    let points = table(&art, "oracle").rows.len() / 2;
    if status != Convergence::Converged {
        l.unconverged.push("oracle".into());
    }
    l.report(
        "oracle equivalence",
        tp <= 1e-3 && s <= 1e-3 && points == cfg.mode.chi.len() * cfg.mode.n_times,
        format!(
            "max |G_heom - G_exact| two_point {tp:.2e}, single {s:.2e} (tol 1e-3) on {}x{} grid, dimension {}, Fock leakage {leak:.1e}, {:.0} s for both schemes",
            cfg.mode.chi.len(),
            cfg.mode.n_times,
            meta["dimension"],
            clock.elapsed().as_secs_f64()
        ),
    );
    let exact = meta["identity_residual"].as_f64().unwrap();
    let draws: Vec<f64> = meta["random_identity_residuals"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let worst_draw = draws.iter().cloned().fold(0.0, f64::max);
    let heom = heom_identity_draws(10, 11);
    let worst_heom = heom.iter().cloned().fold(0.0, f64::max);
    l.report(
        "scheme identity",
        exact <= 1e-10 && worst_draw <= 1e-10 && draws.len() == 10 && worst_heom <= 1e-4,
        format!(
            "exact oracle {exact:.1e} and {} random draws max {worst_draw:.1e} (tol 1e-10); hierarchy cross-scheme over {} draws max {worst_heom:.2e} (tol 1e-4)",
            draws.len(),
            heom.len()
        ),
    );
}

/// Single-scheme cumulants resummed in chi against two-point runs at complex
/// inverse temperature, on random one-mode-per-bath systems.
fn heom_identity_draws(draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numerics = Numerics { dt: 0.01, ..Numerics::default() };
    (0..draws)
        .map(|_| {
            let mut bath = || {
                let m = Mode { frequency: rng.gen_range(0.6..2.2), coupling: rng.gen_range(0.03..0.15) };
                BathModel::discrete(vec![m], rng.gen_range(0.4..2.5))
            };
            let baths = vec![bath().counted(Scheme::Single), bath()];
            let tunneling = rng.gen_range(0.0..1.0);
            let (model, baths) = build_two_level_model(1.0, tunneling, baths).unwrap();
            let engine = Engine::new(model, baths, numerics.clone(), 0.1).unwrap();
            engine.cross_scheme_residual(&[-0.2, 0.15], 8, 6, 3.0).unwrap()
        })
        .collect()
}

fn transient_relations(l: &mut Ledger) {
    let (cfg, art, _) = run(RELATIONS);
    l.trace_drift = l.trace_drift.max(art.metadata["trace_drift"].as_f64().unwrap());
    l.depth("relations", &art.metadata["escalation"], cfg.numerics.convergence_tol);
    let t = table(&art, "relations");
    let mut worst = (0.0f64, String::new());
    let mut pass = true;
    for n in 1..=cfg.mode.relation_order {
        for m in 0..=cfg.mode.relation_m {
            let r = col(t, &format!("residual_n{n}_m{m}"));
            let b = col(t, &format!("budget_n{n}_m{m}"));
            for (x, e) in r.iter().zip(&b) {
                let ok = x.abs() <= *e || x.abs() <= 1e-12;
                pass &= ok && x.is_finite();
                if *e > 0.0 && x.abs() / e > worst.0 {
                    worst = (x.abs() / e, format!("n={n} m={m}"));
                }
            }
        }
    }
    l.report(
        "transient relations",
        pass,
        format!(
            "n<=3, m<=1 at {} output times, n_max {}; largest residual/budget {:.2} ({})",
            t.rows.len(),
            art.metadata["n_max"],
            worst.0,
            worst.1
        ),
    );
}

struct ScanPoint {
    lambda: f64,
    finite_bias: f64,
    fluctuations: f64,
    gap: f64,
    weak: f64,
    steady: bool,
}

fn scan(l: &mut Ledger, name: &str, text: &str) -> Vec<ScanPoint> {
    let (cfg, art, _) = run(text);
    let t = table(&art, "conductance");
    let steady: Vec<bool> = t.rows.iter().map(|r| matches!(&r[7], fcs_heom::output::Cell::Text(s) if s == "yes")).collect();
    for p in art.metadata["points"].as_array().unwrap() {
        l.trace_drift = l.trace_drift.max(p["trace_drift"].as_f64().unwrap());
        l.depth(&format!("{name} lambda={}", p["value"]), &p["escalation"], cfg.numerics.convergence_tol);
    }
    let (v, kb, kf, gap, weak) = (col(t, "value"), col(t, "kappa_finite_bias"), col(t, "kappa_fluctuations"), col(t, "relative_gap"), col(t, "kappa_weak"));
    (0..v.len())
        .map(|i| ScanPoint { lambda: v[i], finite_bias: kb[i], fluctuations: kf[i], gap: gap[i], weak: weak[i], steady: steady[i] })
        .collect()
}

fn conductance(l: &mut Ledger) {
    let weak = scan(l, "scan_weak", SCAN_WEAK);
    let strong = scan(l, "scan_strong", SCAN_STRONG);

    let grid = [0.01, 0.05, 0.1, 0.5, 1.0];
    let picked: Vec<&ScanPoint> = weak.iter().filter(|p| grid.iter().any(|g| (p.lambda - g).abs() < 1e-12)).collect();
    let worst = picked.iter().map(|p| p.gap).fold(0.0, f64::max);
    let all_steady = picked.iter().all(|p| p.steady);
    l.report(
        "steady conductance estimators",
        picked.len() == grid.len() && worst <= 0.02 && all_steady,
        format!(
            "largest relative gap {worst:.2e} (tol 2e-2) over lambda {:?}; steady reached at all points: {all_steady}",
            picked.iter().map(|p| p.lambda).collect::<Vec<_>>()
        ),
    );

    let (cfg, art, _) = run(TRANSIENT_KAPPA);
    let p = &art.metadata["points"][0];
    l.trace_drift = l.trace_drift.max(p["trace_drift"].as_f64().unwrap());
    l.depth("transient kappa", &p["escalation"], cfg.numerics.convergence_tol);
    let t = table(&art, "conductance_series");
    let (kb, kf) = (col(t, "kappa_finite_bias"), col(t, "kappa_fluctuations"));
    let peak = kf.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let dev = kb.iter().zip(&kf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
    l.report(
        "transient conductance estimators",
        dev <= 0.05,
        format!("J = lambda = 1: max_t |kappa_bias - kappa_fluct| / max_t |kappa_fluct| = {dev:.2e} (tol 5e-2) over {} times", kf.len()),
    );

    let low: Vec<&ScanPoint> = weak.iter().filter(|p| p.lambda <= 0.15 + 1e-12).collect();
    let rel: Vec<f64> = low.iter().map(|p| (p.fluctuations - p.weak).abs() / p.weak.abs()).collect();
    let worst_rel = rel.iter().cloned().fold(0.0, f64::max);
    let xs: Vec<f64> = low.iter().map(|p| p.lambda).collect();
    let ys: Vec<f64> = low.iter().map(|p| p.fluctuations).collect();
    let r2 = r_squared(&xs, &ys);
    l.report(
        "weak-coupling limit",
        worst_rel <= 0.05 && r2 >= 0.999,
        format!(
            "relative deviation from the weak-coupling reference {:?} at lambda {xs:?} (tol 5e-2); linear fit R^2 {r2:.6} (min 0.999)",
            rel.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    );

    let mut all: Vec<&ScanPoint> = weak.iter().chain(&strong).collect();
    all.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let slopes: Vec<f64> = all.windows(2).map(|w| w[1].fluctuations - w[0].fluctuations).collect();
    let first_down = slopes.iter().position(|s| *s < 0.0);
    let turnover = slopes.first().is_some_and(|s| *s > 0.0) && first_down.is_some_and(|i| slopes[..i].iter().all(|s| *s > 0.0));
    let peak = all.iter().max_by(|a, b| a.fluctuations.total_cmp(&b.fluctuations)).unwrap();
    l.report(
        "conductance turnover",
        turnover,
        format!(
            "kappa(lambda) on {:?}: {:?}; maximum at lambda {} (finite-bias route {:.5e})",
            all.iter().map(|p| p.lambda).collect::<Vec<_>>(),
            all.iter().map(|p| format!("{:.5e}", p.fluctuations)).collect::<Vec<_>>(),
            peak.lambda,
            peak.finite_bias
        ),
    );
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

fn deviation_scaling(l: &mut Ledger) {
    let lambdas = [0.15, 0.3, 0.6];
    let at = 2.0;
    let mut values = vec![Vec::new(); 5];
    for lambda in lambdas {
        let (cfg, art, _) = run(&with_lambda(DEVIATIONS, lambda));
        l.trace_drift = l.trace_drift.max(art.metadata["trace_drift"].as_f64().unwrap());
        l.depth(&format!("deviations lambda={lambda}"), &art.metadata["escalation"], cfg.numerics.convergence_tol);
        let t = table(&art, "deviations");
        let times = col(t, "time");
        let i = times.iter().position(|x| (x - at).abs() < 1e-9).expect("output at the probe time");
        for (n, v) in values.iter_mut().enumerate() {
            v.push(col(t, &format!("deviation_{}", n + 1))[i].abs());
        }
    }
    let mut pass = true;
    let mut detail = Vec::new();
    for (n, v) in values.iter().enumerate() {
        let increasing = v.windows(2).all(|w| w[1] > w[0]);
        let resolved = v.iter().all(|x| *x > 1e-9);
        pass &= increasing && resolved;
        detail.push(format!(
            "n={} {:?}{}",
            n + 1,
            v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            if resolved { "" } else { " (zero to rounding)" }
        ));
    }
    l.report(
        "deviation scaling",
        pass,
        format!("|d/dt (kappa_n^S - kappa_n^TP)| at t = {at} for lambda {lambdas:?}: {}", detail.join("; ")),
    );
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// Moments from cumulants by summing over every set partition of `{1..n}`.
fn brute_moments(k: &[f64], n: usize) -> f64 {
    fn rec(i: usize, n: usize, blocks: &mut Vec<usize>, k: &[f64], acc: &mut f64) {
        if i == n {
            *acc += blocks.iter().map(|&b| k[b]).product::<f64>();
            return;
        }
        for j in 0..blocks.len() {
            blocks[j] += 1;
            rec(i + 1, n, blocks, k, acc);
            blocks[j] -= 1;
        }
        blocks.push(1);
        rec(i + 1, n, blocks, k, acc);
        blocks.pop();
    }
    let mut acc = 0.0;
    rec(0, n, &mut Vec::new(), k, &mut acc);
    acc
}

/// Signed Stirling numbers of the first kind from the falling factorial.
fn stirling_first(n: usize) -> Vec<Vec<i64>> {
    let mut s = vec![vec![0i64; n + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for j in 1..=i {
            s[i][j] = s[i - 1][j - 1] - (i as i64 - 1) * s[i - 1][j];
        }
    }
    s
}

fn combinatorics(l: &mut Ledger) {
    let table = PartitionTable::new(5);
    let mut a_ok = true;
    for m in partitions(5) {
        let order: u64 = m.iter().enumerate().map(|(q, &c)| (q as u64 + 1) * c as u64).sum();
        let den: u64 = m.iter().enumerate().map(|(q, &c)| factorial(q as u64 + 1).pow(c as u32) * factorial(c as u64)).product();
        a_ok &= table.get(&m) == factorial(order) / den;
    }

    let k = [0.0, 3.0, -2.0, 5.0, 1.0, -4.0, 2.0];
    let mu = moments_from_cumulants(&k);
    let rec_ok = (1..k.len()).all(|n| mu[n] == brute_moments(&k, n)) && cumulants_from_moments(&mu) == k;

    let s = stirling_first(6);
    let f = factorial_cumulants(&k);
    let stirling_ok = (1..k.len()).all(|n| f[n] == (1..=n).map(|j| s[n][j] as f64 * k[j]).sum::<f64>()) && cumulants_from_factorial(&f) == k;

    l.report(
        "combinatorics",
        a_ok && rec_ok && stirling_ok,
        format!("a_m for |m| <= 5 vs multinomial formula: {a_ok}; cumulant recursion vs set-partition sum: {rec_ok}; factorial cumulants vs Stirling numbers: {stirling_ok}"),
    );
}

fn rk4_order() -> f64 {
    let cfg = RunConfig::parse(RELATIONS).unwrap();
    let (model, baths) = cfg.build_model().unwrap();
    let engine = Engine::new(model.clone(), baths.clone(), cfg.numerics.clone(), cfg.spacing()).unwrap();
    let bases = engine.bases(&baths, 2).unwrap();
    let h = Hierarchy::new(&model, &baths, &bases, Run::MomentCascade { m_max: 2 }, &HierarchyOptions { n_max: 6, ..Default::default() }).unwrap();
    let t_end = 2.0;
    let dt0 = h.stable_step(0.02, t_end);
    let final_state = |dt: f64| {
        let mut s = h.initial_state(&model.rho0).unwrap();
        h.integrate(&mut s, &IntegrationOptions { dt, t_end, stride: usize::MAX, method: Method::Rk4 }).unwrap();
        s.fields
    };
    let (a, b, c) = (final_state(dt0), final_state(dt0 / 2.0), final_state(dt0 / 4.0));
    let diff = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    (diff(&a, &b) / diff(&b, &c)).log2()
}

fn main() {
    let clock = Instant::now();
    let mut l = Ledger::default();
    // Optional section filters: `cargo test --test acceptance -- oracle`.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let sections: [(&str, fn(&mut Ledger)); 5] = [
        ("combinatorics", combinatorics),
        ("oracle", oracle_equivalence),
        ("relations", transient_relations),
        ("deviations", deviation_scaling),
        ("conductance", conductance),
    ];
    for (name, section) in sections {
        if filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())) {
            section(&mut l);
        }
    }
    if !filters.is_empty() && !filters.iter().any(|f| "hygiene".contains(f.as_str())) {
        println!("acceptance: {} passed, {} failed (filtered)", l.passed, l.failed);
        return;
    }

    let order = rk4_order();
    let drift = l.trace_drift;
    let converged = l.unconverged.is_empty();
    l.report(
        "numerics hygiene",
        order >= 3.8 && drift <= 1e-6 && converged,
        format!(
            "RK4 self-convergence order {order:.2} (min 3.8); largest trace drift {drift:.1e} (tol 1e-6); depth escalation converged in every run: {}",
            if converged { "yes".to_string() } else { format!("no ({})", l.unconverged.join(", ")) }
        ),
    );
    println!("acceptance: {} passed, {} failed, {:.0} s", l.passed, l.failed, clock.elapsed().as_secs_f64());
}

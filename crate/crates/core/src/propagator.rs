//! Right-hand side assembly and time integration of the hierarchy.
//!
//! For a field `sigma(n, m)` the equation of motion reads
//!
//! ```text
//! d sigma / dt = -i [H, sigma] + (sum_a n_a g_a) sigma
//!              + sum_a U_a sigma(n + e_a, m)
//!              + sum_a n_a D_a sigma(n - e_a, m)
//!              + sum_{a, q} m_q U_aq sigma(n + e_a, m - e_q)
//! ```
//!
//! where every `U` and `D` is a left/right multiplication by a coupling
//! operator. In the literal side basis a slot is `(bath, term, side k)`,
//! `U = -sum_j M_jk V^j` with `M` the counting kernel of the term, and
//! `D = phi(0) V^k`.
//!
//! The reduced side basis applies an invertible change of variables to the
//! two sides of every term. Because each kernel at `chi = 0` has rank one,
//! one transformed slot is never raised by the plain hierarchy and at most
//! by the moment cascade. Baths sharing a coupling operator and exponents
//! are merged first. Root fields are unchanged by either transformation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::correlation::{chi_kernel, ExpansionBasis, Kernel};
use crate::hierarchy::{IndexSpace, SlotKind, DEFAULT_CAP};
use crate::model::{BathModel, SystemModel};
use crate::{CMat, Error, Result, C64, I};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Mode {
    /// Moment cascade up to order `m_max`.
    MomentCascade { m_max: usize },
    /// Fixed counting field; the root trace is the generating function.
    ChiResolved { chi: C64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SideBasis {
    /// One slot per bath, term and side.
    Paper,
    /// Rank-one reduced slots with bath merging.
    #[default]
    Reduced,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyOptions {
    pub n_max: usize,
    pub side_basis: SideBasis,
    pub cap: usize,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            n_max: 4,
            side_basis: SideBasis::Reduced,
            cap: DEFAULT_CAP,
        }
    }
}

/// One hierarchy slot after the side transformation.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    /// Group of merged baths this slot belongs to.
    pub group: usize,
    pub term: usize,
    /// Side in the literal basis, transformed row otherwise.
    pub side: usize,
    pub kind: SlotKind,
    pub exponent: C64,
    /// Index into the coupling-operator list.
    pub op: usize,
    /// Left/right factors of the lowering action, without `n_a`.
    pub down: (C64, C64),
    /// Left/right factors of the raising action, per cascade order `q`.
    pub up: Vec<(C64, C64)>,
}

/// Precomputed superoperator coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTables {
    pub h_sys: CMat,
    pub ops: Vec<CMat>,
    pub slots: Vec<Slot>,
    /// Baths feeding each group.
    pub groups: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    src: u32,
    op: u16,
    fl: C64,
    fr: C64,
}

/// Flat storage of every field at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryState {
    pub t: f64,
    pub dim: usize,
    pub fields: Vec<C64>,
}

impl AuxiliaryState {
    pub fn field(&self, i: usize) -> CMat {
        let d2 = self.dim * self.dim;
        CMat::from_vec(self.dim, self.fields[i * d2..(i + 1) * d2].to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rk4,
    /// Every output interval is split into equal steps; the count doubles
    /// until one step and two half steps agree to `tolerance`.
    Rk4Halving { tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    pub method: Method,
}

/// Root fields (`n = 0`) recorded on the output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Partition vector of every recorded root, in storage order.
    pub root_m: Vec<Vec<u8>>,
    /// `roots[t]` concatenates the root fields at `times[t]`.
    pub roots: Vec<Vec<C64>>,
}

impl Trajectory {
    pub fn root(&self, t: usize, k: usize) -> CMat {
        let d2 = self.dim * self.dim;
        CMat::from_vec(self.dim, self.roots[t][k * d2..(k + 1) * d2].to_vec())
    }

    /// Reduced density matrix (`m = 0` root).
    pub fn rho(&self, t: usize) -> CMat {
        self.root(t, 0)
    }

    pub fn root_traces(&self, k: usize) -> Vec<C64> {
        let d = self.dim;
        self.roots
            .iter()
            .map(|r| (0..d).map(|i| r[k * d * d + i * d + i]).sum())
            .collect()
    }
}

pub struct Hierarchy {
    pub space: IndexSpace,
    pub tables: CouplingTables,
    pub mode: Mode,
    dim: usize,
    term_ptr: Vec<u32>,
    terms: Vec<Term>,
    diag: Vec<C64>,
    roots: Vec<usize>,
}

impl core::fmt::Debug for Hierarchy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Hierarchy")
            .field("fields", &self.space.len())
            .field("slots", &self.tables.slots.len())
            .field("terms", &self.terms.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl Hierarchy {
    pub fn new(
        model: &SystemModel,
        baths: &[BathModel],
        bases: &[ExpansionBasis],
        mode: Mode,
        opts: &HierarchyOptions,
    ) -> Result<Self> {
        let tables = build_tables(model, baths, bases, mode, opts.side_basis)?;
        let m_max = match mode {
            Mode::MomentCascade { m_max } => m_max,
            Mode::ChiResolved { .. } => 0,
        };
        let kinds: Vec<SlotKind> = tables.slots.iter().map(|s| s.kind).collect();
        let space = IndexSpace::with_slots(&kinds, opts.n_max, m_max, opts.cap)?;
        Ok(Self::assemble(space, tables, mode, model.dim))
    }

    fn assemble(space: IndexSpace, tables: CouplingTables, mode: Mode, dim: usize) -> Self {
        let n_fields = space.len();
        let mut term_ptr = Vec::with_capacity(n_fields + 1);
        let mut terms = Vec::new();
        let mut diag = Vec::with_capacity(n_fields);
        term_ptr.push(0u32);
        let push = |terms: &mut Vec<Term>, src: usize, op: usize, fl: C64, fr: C64| {
            if fl != ZERO || fr != ZERO {
                terms.push(Term {
                    src: src as u32,
                    op: op as u16,
                    fl,
                    fr,
                });
            }
        };
        for i in 0..n_fields {
            let n = space.n(i);
            let m = space.m(i);
            let mut d = ZERO;
            for (a, slot) in tables.slots.iter().enumerate() {
                let na = n[a] as f64;
                d += slot.exponent * na;
                if let Some(j) = space.raise(i, a) {
                    push(&mut terms, j, slot.op, slot.up[0].0, slot.up[0].1);
                }
                if n[a] > 0 {
                    if let Some(j) = space.lower(i, a) {
                        push(&mut terms, j, slot.op, slot.down.0 * na, slot.down.1 * na);
                    }
                }
            }
            for link in space.cascade(i) {
                let slot = &tables.slots[link.slot as usize];
                let q = link.q as usize;
                let mq = m[q - 1] as f64;
                if let Some(&(ul, ur)) = slot.up.get(q) {
                    push(&mut terms, link.target as usize, slot.op, ul * mq, ur * mq);
                }
            }
            diag.push(d);
            term_ptr.push(terms.len() as u32);
        }
        let roots = space.roots();
        Hierarchy {
            space,
            tables,
            mode,
            dim,
            term_ptr,
            terms,
            diag,
            roots,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_fields(&self) -> usize {
        self.space.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Offsets of the `n = 0` fields; the first is the density matrix.
    pub fn root_offsets(&self) -> &[usize] {
        &self.roots
    }

    /// All fields zero except the root `m = 0`, which holds `rho0`.
    pub fn initial_state(&self, rho0: &CMat) -> Result<AuxiliaryState> {
        if rho0.dim() != self.dim {
            return Err(Error::domain(format!(
                "initial state has dimension {}, system has {}",
                rho0.dim(),
                self.dim
            )));
        }
        let d2 = self.dim * self.dim;
        let mut fields = vec![ZERO; self.n_fields() * d2];
        fields[..d2].copy_from_slice(rho0.as_slice());
        Ok(AuxiliaryState {
            t: 0.0,
            dim: self.dim,
            fields,
        })
    }

    pub fn workspace(&self) -> Workspace {
        let len = self.n_fields() * self.dim * self.dim;
        Workspace {
            products: vec![ZERO; 2 * self.tables.ops.len() * len],
            k: vec![ZERO; len],
            tmp: vec![ZERO; len],
            acc: vec![ZERO; len],
            y0: Vec::new(),
            half: Vec::new(),
        }
    }

    /// `out = rhs(y)`.
    pub fn rhs(&self, y: &[C64], out: &mut [C64], ws: &mut Workspace) {
        let products = &mut ws.products;
        self.rhs_with(y, out, products);
    }

    fn rhs_with(&self, y: &[C64], out: &mut [C64], products: &mut [C64]) {
        let d = self.dim;
        let d2 = d * d;
        let len = y.len();
        // products = [V_0 sigma, sigma V_0, V_1 sigma, ...], field-major within each block.
        for (o, op) in self.tables.ops.iter().enumerate() {
            let v = op.as_slice();
            let (left, rest) = products[2 * o * len..].split_at_mut(len);
            let right = &mut rest[..len];
            for_each_chunk(left, right, y, d2, |l, r, s| {
                matmul(v, s, l, d);
                matmul(s, v, r, d);
            });
        }
        let products = &*products;
        let h = self.tables.h_sys.as_slice();
        let fill = |i: usize, o: &mut [C64]| {
            let s = &y[i * d2..(i + 1) * d2];
            commutator_term(h, s, o, d);
            let g = self.diag[i];
            if g != ZERO {
                for (x, v) in o.iter_mut().zip(s) {
                    *x += g * v;
                }
            }
            for t in &self.terms[self.term_ptr[i] as usize..self.term_ptr[i + 1] as usize] {
                let base = 2 * t.op as usize * len + t.src as usize * d2;
                let l = &products[base..base + d2];
                let r = &products[base + len..base + len + d2];
                for k in 0..d2 {
                    o[k] += t.fl * l[k] + t.fr * r[k];
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(d2).enumerate().for_each(|(i, o)| fill(i, o));
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (i, o) in out.chunks_mut(d2).enumerate() {
                fill(i, o);
            }
        }
    }

    /// Power-iteration estimate of the spectral radius of the right-hand side.
    pub fn spectral_radius(&self, iterations: usize) -> f64 {
        let len = self.n_fields() * self.dim * self.dim;
        if len == 0 {
            return 0.0;
        }
        let mut products = vec![ZERO; 2 * self.tables.ops.len() * len];
        // Deterministic, non-degenerate start vector.
        let mut x: Vec<C64> = (0..len)
            .map(|i| {
                let u = ((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 11) as f64 / (1u64 << 53) as f64;
                C64::new(u - 0.5, 0.5 - u * u)
            })
            .collect();
        let mut y = vec![ZERO; len];
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut estimate = 0.0f64;
        for k in 0..iterations {
            let nx = norm(&x);
            if nx == 0.0 {
                break;
            }
            for v in x.iter_mut() {
                *v /= nx;
            }
            self.rhs_with(&x, &mut y, &mut products);
            let ratio = norm(&y);
            if k + 5 >= iterations {
                estimate = estimate.max(ratio);
            }
            core::mem::swap(&mut x, &mut y);
        }
        estimate
    }

    /// Step no larger than `dt` that keeps RK4 inside its stability region,
    /// chosen so that `interval` is an integer number of steps.
    pub fn stable_step(&self, dt: f64, interval: f64) -> f64 {
        let rho = 1.2 * self.spectral_radius(40);
        let limit = if rho > 0.0 { 2.5 / rho } else { f64::INFINITY };
        let target = dt.min(limit);
        let n = (interval / target).ceil().max(1.0);
        interval / n
    }

    fn rk4_step(&self, y: &mut [C64], dt: f64, ws: &mut Workspace) {
        let Workspace {
            products, k, tmp, acc, ..
        } = ws;
        let h2 = dt * 0.5;
        self.rhs_with(y, k, products);
        for i in 0..y.len() {
            acc[i] = k[i];
            tmp[i] = y[i] + k[i] * h2;
        }
        self.rhs_with(tmp, k, products);
        for i in 0..y.len() {
            acc[i] += k[i] * 2.0;
            tmp[i] = y[i] + k[i] * h2;
        }
        self.rhs_with(tmp, k, products);
        for i in 0..y.len() {
            acc[i] += k[i] * 2.0;
            tmp[i] = y[i] + k[i] * dt;
        }
        self.rhs_with(tmp, k, products);
        let h6 = dt / 6.0;
        for i in 0..y.len() {
            y[i] += (acc[i] + k[i]) * h6;
        }
    }

    fn check_finite(&self, y: &[C64], t: f64) -> Result<()> {
        let sum: f64 = y.iter().map(|z| z.re.abs() + z.im.abs()).sum();
        if sum.is_finite() {
            return Ok(());
        }
        let d2 = self.dim * self.dim;
        let index = y.iter().position(|z| !z.is_finite()).unwrap_or(0) / d2;
        Err(Error::NonFinite { index, t })
    }

    fn snapshot(&self, y: &[C64]) -> Vec<C64> {
        let d2 = self.dim * self.dim;
        let mut out = Vec::with_capacity(self.roots.len() * d2);
        for &r in &self.roots {
            out.extend_from_slice(&y[r * d2..(r + 1) * d2]);
        }
        out
    }

    /// Integrates `state` to `opts.t_end`, recording the root fields on the
    /// output grid (including the starting time).
    pub fn integrate(&self, state: &mut AuxiliaryState, opts: &IntegrationOptions) -> Result<Trajectory> {
        let mut ws = self.workspace();
        self.integrate_with(state, opts, &mut ws, |_, _| {})
    }

    /// As [`Hierarchy::integrate`], calling `observe(t, fields)` at every
    /// output time.
    pub fn integrate_with<F: FnMut(f64, &[C64])>(
        &self,
        state: &mut AuxiliaryState,
        opts: &IntegrationOptions,
        ws: &mut Workspace,
        mut observe: F,
    ) -> Result<Trajectory> {
        if !(opts.dt > 0.0) || !(opts.t_end >= state.t) || opts.stride == 0 {
            return Err(Error::domain("integration needs dt > 0, t_end >= t and stride >= 1"));
        }
        let span = opts.t_end - state.t;
        let n_steps = (span / opts.dt).round().max(if span > 0.0 { 1.0 } else { 0.0 }) as usize;
        let dt = if n_steps > 0 { span / n_steps as f64 } else { opts.dt };
        let t0 = state.t;
        let mut traj = Trajectory {
            dim: self.dim,
            times: vec![t0],
            root_m: self.roots.iter().map(|&r| self.space.m(r).to_vec()).collect(),
            roots: vec![self.snapshot(&state.fields)],
        };
        observe(t0, &state.fields);
        let mut sub = 1usize;
        let mut step = 0usize;
        while step < n_steps {
            let chunk = opts.stride.min(n_steps - step);
            match opts.method {
                Method::Rk4 => {
                    for _ in 0..chunk {
                        self.rk4_step(&mut state.fields, dt, ws);
                    }
                }
                Method::Rk4Halving { tolerance } => {
                    sub = self.halving_interval(state, dt * chunk as f64, sub, tolerance, ws)?;
                }
            }
            step += chunk;
            state.t = t0 + step as f64 * dt;
            self.check_finite(&state.fields, state.t)?;
            traj.times.push(state.t);
            traj.roots.push(self.snapshot(&state.fields));
            observe(state.t, &state.fields);
        }
        Ok(traj)
    }

    /// Advances over one output interval, doubling the step count until a
    /// full step and two half steps agree everywhere. Returns the step count
    /// that worked, as the starting guess for the next interval.
    fn halving_interval(
        &self,
        state: &mut AuxiliaryState,
        interval: f64,
        mut sub: usize,
        tolerance: f64,
        ws: &mut Workspace,
    ) -> Result<usize> {
        let mut previous = f64::INFINITY;
        loop {
            let h = interval / sub as f64;
            let mut y = state.fields.clone();
            let mut worst = 0.0f64;
            for _ in 0..sub {
                let mut full = core::mem::take(&mut ws.y0);
                full.clear();
                full.extend_from_slice(&y);
                self.rk4_step(&mut full, h, ws);
                self.rk4_step(&mut y, h * 0.5, ws);
                self.rk4_step(&mut y, h * 0.5, ws);
                let err = full
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                ws.y0 = full;
                worst = worst.max(err);
                if !(err <= tolerance) {
                    break;
                }
            }
            if worst <= tolerance {
                state.fields = y;
                // Let the step grow back when there is ample headroom.
                return Ok(if worst < tolerance / 64.0 && sub > 1 { sub / 2 } else { sub });
            }
            if !(worst < previous) || sub > (1 << 20) {
                return Err(Error::StepControl {
                    t: state.t,
                    error: worst,
                    tolerance,
                });
            }
            previous = worst;
            sub *= 2;
        }
    }
}

/// Scratch buffers reused across right-hand side evaluations.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    products: Vec<C64>,
    k: Vec<C64>,
    tmp: Vec<C64>,
    acc: Vec<C64>,
    y0: Vec<C64>,
    #[allow(dead_code)]
    half: Vec<C64>,
}

fn for_each_chunk<F>(left: &mut [C64], right: &mut [C64], y: &[C64], d2: usize, f: F)
where
    F: Fn(&mut [C64], &mut [C64], &[C64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        left.par_chunks_mut(d2)
            .zip(right.par_chunks_mut(d2))
            .zip(y.par_chunks(d2))
            .for_each(|((l, r), s)| f(l, r, s));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for ((l, r), s) in left.chunks_mut(d2).zip(right.chunks_mut(d2)).zip(y.chunks(d2)) {
            f(l, r, s);
        }
    }
}

#[inline]
fn matmul(a: &[C64], b: &[C64], out: &mut [C64], d: usize) {
    if d == 2 {
        out[0] = a[0] * b[0] + a[1] * b[2];
        out[1] = a[0] * b[1] + a[1] * b[3];
        out[2] = a[2] * b[0] + a[3] * b[2];
        out[3] = a[2] * b[1] + a[3] * b[3];
        return;
    }
    for i in 0..d {
        for j in 0..d {
            let mut s = ZERO;
            for k in 0..d {
                s += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = s;
        }
    }
}

/// `out = -i (h s - s h)`.
#[inline]
fn commutator_term(h: &[C64], s: &[C64], out: &mut [C64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += h[i * d + k] * s[k * d + j] - s[i * d + k] * h[k * d + j];
            }
            out[i * d + j] = -I * acc;
        }
    }
}

/// Kernels of every bath per term and cascade order, `[r][q]`.
fn bath_kernels(bath: &BathModel, basis: &ExpansionBasis, mode: Mode) -> Result<Vec<Vec<Kernel>>> {
    let r = basis.n_terms();
    match mode {
        Mode::ChiResolved { chi } => {
            let k = chi_kernel(bath, basis, chi)?;
            Ok(k.into_iter().map(|k| vec![k]).collect())
        }
        Mode::MomentCascade { m_max } => {
            let zero = [[ZERO; 2]; 2];
            if bath.counted && basis.q_max < m_max {
                return Err(Error::Order {
                    requested: m_max,
                    available: basis.q_max,
                });
            }
            Ok((0..r)
                .map(|t| {
                    (0..=m_max)
                        .map(|q| {
                            if q == 0 {
                                basis.coeffs[t][0]
                            } else if bath.counted {
                                basis.coeffs[t][q]
                            } else {
                                zero
                            }
                        })
                        .collect()
                })
                .collect())
        }
    }
}

struct Group {
    op: usize,
    exponents: Vec<C64>,
    phi0: Vec<C64>,
    kernels: Vec<Vec<Kernel>>,
    baths: Vec<usize>,
    counted: bool,
}

/// Builds the slot list for the given side basis.
pub fn build_tables(
    model: &SystemModel,
    baths: &[BathModel],
    bases: &[ExpansionBasis],
    mode: Mode,
    side_basis: SideBasis,
) -> Result<CouplingTables> {
    if baths.len() != bases.len() || baths.len() != model.couplings.len() {
        return Err(Error::domain("one coupling operator and one basis per bath are required"));
    }
    let mut ops: Vec<CMat> = Vec::new();
    let mut groups: Vec<Group> = Vec::new();
    for (nu, (bath, basis)) in baths.iter().zip(bases).enumerate() {
        if basis.eta.dim() != basis.n_terms() || basis.closure_residual() != 0.0 {
            return Err(Error::Unsupported(String::from("only diagonal closure matrices are supported")));
        }
        let v = &model.couplings[nu];
        let op = match ops.iter().position(|o| o == v) {
            Some(p) => p,
            None => {
                ops.push(v.clone());
                ops.len() - 1
            }
        };
        let kernels = bath_kernels(bath, basis, mode)?;
        let chi_counted = bath.counted && matches!(mode, Mode::ChiResolved { .. });
        let target = if side_basis == SideBasis::Reduced {
            groups.iter().position(|g| {
                g.op == op && g.exponents == basis.exponents && g.phi0 == basis.phi0 && !(chi_counted || (g.counted && matches!(mode, Mode::ChiResolved { .. })))
            })
        } else {
            None
        };
        match target {
            Some(gi) => {
                let g = &mut groups[gi];
                for (acc, add) in g.kernels.iter_mut().zip(&kernels) {
                    for (a, b) in acc.iter_mut().zip(add) {
                        for j in 0..2 {
                            for k in 0..2 {
                                a[j][k] += b[j][k];
                            }
                        }
                    }
                }
                g.baths.push(nu);
                g.counted |= bath.counted;
            }
            None => groups.push(Group {
                op,
                exponents: basis.exponents.clone(),
                phi0: basis.phi0.clone(),
                kernels,
                baths: vec![nu],
                counted: bath.counted,
            }),
        }
    }
    let mut slots = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for (r, ks) in g.kernels.iter().enumerate() {
            let transform = match side_basis {
                SideBasis::Paper => None,
                SideBasis::Reduced => rank_one_transform(&ks[0]),
            };
            let (t, t_inv) = transform.unwrap_or(([[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]], [
                [C64::new(1.0, 0.0), ZERO],
                [ZERO, C64::new(1.0, 0.0)],
            ]));
            for a in 0..2 {
                let mut up = Vec::with_capacity(ks.len());
                for m in ks {
                    // (M T^{-1})_{ja}
                    let col = |j: usize| m[j][0] * t_inv[0][a] + m[j][1] * t_inv[1][a];
                    let scale = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
                    let clean = |z: C64| if z.norm() <= 1e-13 * scale { ZERO } else { z };
                    up.push((-clean(col(0)), -clean(col(1))));
                }
                let raised = up[0].0 != ZERO || up[0].1 != ZERO;
                let cascaded = up[1..].iter().any(|u| u.0 != ZERO || u.1 != ZERO);
                let kind = if side_basis == SideBasis::Paper || raised {
                    SlotKind::Primary
                } else if cascaded {
                    SlotKind::CascadeOnly
                } else {
                    continue;
                };
                let phi = g.phi0[r];
                slots.push(Slot {
                    group: gi,
                    term: r,
                    side: a,
                    kind,
                    exponent: g.exponents[r],
                    op: g.op,
                    down: (t[a][0] * phi, t[a][1] * phi),
                    up,
                });
            }
        }
    }
    Ok(CouplingTables {
        h_sys: model.h_sys.clone(),
        ops,
        slots,
        groups: groups.into_iter().map(|g| g.baths).collect(),
    })
}

type Mat2 = [[C64; 2]; 2];

/// For `M = u w^T`, returns `T` with first row `w / s` and second row the
/// unit vector on the smaller entry of `w`, together with `T^{-1}`.
fn rank_one_transform(m: &Kernel) -> Option<(Mat2, Mat2)> {
    let scale = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let kc = if m[0][0].norm().max(m[1][0].norm()) >= m[0][1].norm().max(m[1][1].norm()) {
        0
    } else {
        1
    };
    let u = [m[0][kc], m[1][kc]];
    let jr = if u[0].norm() >= u[1].norm() { 0 } else { 1 };
    let w = [m[jr][0] / u[jr], m[jr][1] / u[jr]];
    for j in 0..2 {
        for k in 0..2 {
            if (m[j][k] - u[j] * w[k]).norm() > 1e-12 * scale {
                return None;
            }
        }
    }
    let s = w[0].norm().max(w[1].norm()).sqrt();
    let p = if w[0].norm() <= w[1].norm() { 0 } else { 1 };
    let one = C64::new(1.0, 0.0);
    let mut t = [[w[0] / s, w[1] / s], [ZERO, ZERO]];
    t[1][p] = one;
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    if det.norm() == 0.0 {
        return None;
    }
    let inv = [[t[1][1] / det, -t[0][1] / det], [-t[1][0] / det, t[0][0] / det]];
    Some((t, inv))
}

/// `ln tr rho(chi, t)` along a trajectory, unwrapped for continuity in `t`.
pub fn cgf_series(traj: &Trajectory) -> Result<Vec<C64>> {
    let traces = traj.root_traces(0);
    let mut out = Vec::with_capacity(traces.len());
    let mut prev_phase: Option<f64> = None;
    for tr in traces {
        let mag = tr.norm();
        if !(mag > 1e-300) {
            return Err(Error::Underflow(mag));
        }
        let mut phase = tr.arg();
        if let Some(p) = prev_phase {
            let two_pi = 2.0 * core::f64::consts::PI;
            phase += two_pi * ((p - phase) / two_pi).round();
        }
        prev_phase = Some(phase);
        out.push(C64::new(mag.ln(), phase));
    }
    Ok(out)
}

/// Single-point CGF sample, `ln tr` of the density-matrix field.
pub fn cgf_sample(state: &AuxiliaryState) -> Result<C64> {
    let d = state.dim;
    let tr: C64 = (0..d).map(|i| state.fields[i * d + i]).sum();
    let mag = tr.norm();
    if !(mag > 1e-300) {
        return Err(Error::Underflow(mag));
    }
    Ok(C64::new(mag.ln(), tr.arg()))
}

//! Auxiliary-field multi-indices.
//!
//! A field is labelled by an occupation vector `n` over slots and a partition
//! vector `m` (`m[q - 1]` is the multiplicity of part `q`). In the literal
//! layout a slot is a `(bath, term, side)` triple; the propagator may also
//! build spaces over transformed slots, some of which can only be raised by
//! the moment cascade. For those *cascade-only* slots a field can influence a
//! moment of order at most `m_max` only if its cascade-only occupation plus
//! `|m|` stays within `m_max`, so the rest are never enumerated.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

/// Marker for a neighbor that falls outside the truncated space.
pub const ABSENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Primary,
    CascadeOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HierarchyIndex {
    pub n: Vec<u8>,
    pub m: Vec<u8>,
}

impl HierarchyIndex {
    pub fn level(&self) -> usize {
        self.n.iter().map(|&x| x as usize).sum()
    }

    /// `sum_q q m_q`.
    pub fn weight(&self) -> usize {
        weight(&self.m)
    }
}

fn weight(m: &[u8]) -> usize {
    m.iter().enumerate().map(|(i, &c)| (i + 1) * c as usize).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CascadeLink {
    pub slot: u16,
    /// Part size, `1..=m_max`.
    pub q: u8,
    pub target: u32,
}

#[derive(Clone, Debug)]
pub struct IndexSpace {
    kinds: Vec<SlotKind>,
    n_max: usize,
    m_max: usize,
    /// Row-major `(n, m)` records in canonical order.
    data: Vec<u8>,
    raise: Vec<u32>,
    lower: Vec<u32>,
    cascade_ptr: Vec<u32>,
    cascade: Vec<CascadeLink>,
}

/// Default hard cap on the number of fields.
pub const DEFAULT_CAP: usize = 4_000_000;

impl IndexSpace {
    /// All `(n, m)` with `level(n) <= n_max` and `weight(m) <= m_max` over
    /// `n_baths * n_terms * 2` slots.
    pub fn enumerate(n_baths: usize, n_terms: usize, n_max: usize, m_max: usize, cap: usize) -> Result<Self> {
        let kinds = vec![SlotKind::Primary; n_baths * n_terms * 2];
        Self::with_slots(&kinds, n_max, m_max, cap)
    }

    pub fn with_slots(kinds: &[SlotKind], n_max: usize, m_max: usize, cap: usize) -> Result<Self> {
        let s = kinds.len();
        if n_max > u8::MAX as usize || m_max > u8::MAX as usize || s > u16::MAX as usize {
            return Err(Error::domain("hierarchy parameters exceed the index width"));
        }
        let parts = partitions(m_max);
        let cascade_only = kinds.iter().any(|k| *k == SlotKind::CascadeOnly);
        let count = count_fields(kinds, n_max, m_max, &parts);
        if count > cap {
            return Err(Error::SizeOverflow { count, cap });
        }
        let stride = s + m_max;
        let mut records: Vec<u8> = Vec::with_capacity(count * stride);
        let mut n = vec![0u8; s];
        let mut emit = |n: &[u8], k1: usize| {
            for m in &parts {
                if cascade_only && k1 + weight(m) > m_max {
                    continue;
                }
                records.extend_from_slice(n);
                records.extend_from_slice(m);
            }
        };
        occupations(kinds, 0, n_max, m_max, 0, &mut n, &mut emit);
        let mut order: Vec<usize> = (0..records.len() / stride.max(1)).collect();
        if stride == 0 {
            order = vec![0];
        }
        let rec = |i: usize| &records[i * stride..(i + 1) * stride];
        order.sort_by(|&a, &b| compare(rec(a), rec(b), s));
        let mut data = Vec::with_capacity(records.len());
        for &i in &order {
            data.extend_from_slice(rec(i));
        }
        let mut space = IndexSpace {
            kinds: kinds.to_vec(),
            n_max,
            m_max,
            data,
            raise: Vec::new(),
            lower: Vec::new(),
            cascade_ptr: Vec::new(),
            cascade: Vec::new(),
        };
        space.build_neighbors();
        Ok(space)
    }

    fn stride(&self) -> usize {
        self.kinds.len() + self.m_max
    }

    pub fn len(&self) -> usize {
        if self.stride() == 0 {
            1
        } else {
            self.data.len() / self.stride()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_slots(&self) -> usize {
        self.kinds.len()
    }

    pub fn slot_kinds(&self) -> &[SlotKind] {
        &self.kinds
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn n(&self, i: usize) -> &[u8] {
        let s = self.stride();
        &self.data[i * s..i * s + self.kinds.len()]
    }

    pub fn m(&self, i: usize) -> &[u8] {
        let s = self.stride();
        &self.data[i * s + self.kinds.len()..(i + 1) * s]
    }

    pub fn index(&self, i: usize) -> HierarchyIndex {
        HierarchyIndex {
            n: self.n(i).to_vec(),
            m: self.m(i).to_vec(),
        }
    }

    /// Offset of `(n, m)` by binary search over the canonical order.
    pub fn find(&self, n: &[u8], m: &[u8]) -> Option<usize> {
        if n.len() != self.kinds.len() || m.len() != self.m_max {
            return None;
        }
        let s = self.stride();
        if s == 0 {
            return Some(0);
        }
        let mut key = Vec::with_capacity(s);
        key.extend_from_slice(n);
        key.extend_from_slice(m);
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match compare(&self.data[mid * s..(mid + 1) * s], &key, self.kinds.len()) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn raise(&self, i: usize, slot: usize) -> Option<usize> {
        opt(self.raise[i * self.kinds.len() + slot])
    }

    pub fn lower(&self, i: usize, slot: usize) -> Option<usize> {
        opt(self.lower[i * self.kinds.len() + slot])
    }

    /// `(n - e_from + e_to, m)`.
    pub fn swap(&self, i: usize, from: usize, to: usize) -> Option<usize> {
        let mut n = self.n(i).to_vec();
        if n[from] == 0 {
            return None;
        }
        n[from] -= 1;
        n[to] += 1;
        self.find(&n, self.m(i))
    }

    /// Links `(n + e_slot, m - e_q)` for every slot and every part present in `m`.
    pub fn cascade(&self, i: usize) -> &[CascadeLink] {
        &self.cascade[self.cascade_ptr[i] as usize..self.cascade_ptr[i + 1] as usize]
    }

    /// Offsets of the `n = 0` fields, in canonical order (first is `m = 0`).
    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.n(i).iter().all(|&x| x == 0)).collect()
    }

    /// FNV-1a hash of the layout, used to guard checkpoint restores.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for b in (self.kinds.len() as u64).to_le_bytes() {
            eat(b);
        }
        eat(self.n_max as u8);
        eat(self.m_max as u8);
        for k in &self.kinds {
            eat(*k as u8);
        }
        for &b in &self.data {
            eat(b);
        }
        h
    }

    fn build_neighbors(&mut self) {
        let n_fields = self.len();
        let s = self.kinds.len();
        let mut raise = vec![ABSENT; n_fields * s];
        let mut lower = vec![ABSENT; n_fields * s];
        let mut cascade_ptr = Vec::with_capacity(n_fields + 1);
        let mut cascade = Vec::new();
        cascade_ptr.push(0u32);
        let mut n = vec![0u8; s];
        let mut m = vec![0u8; self.m_max];
        for i in 0..n_fields {
            n.copy_from_slice(self.n(i));
            m.copy_from_slice(self.m(i));
            for a in 0..s {
                if n[a] > 0 {
                    n[a] -= 1;
                    lower[i * s + a] = self.find(&n, &m).map_or(ABSENT, |x| x as u32);
                    n[a] += 1;
                }
                if (n[a] as usize) < self.n_max {
                    n[a] += 1;
                    raise[i * s + a] = self.find(&n, &m).map_or(ABSENT, |x| x as u32);
                    for q in 0..self.m_max {
                        if m[q] > 0 {
                            m[q] -= 1;
                            if let Some(t) = self.find(&n, &m) {
                                cascade.push(CascadeLink {
                                    slot: a as u16,
                                    q: (q + 1) as u8,
                                    target: t as u32,
                                });
                            }
                            m[q] += 1;
                        }
                    }
                    n[a] -= 1;
                }
            }
            cascade_ptr.push(cascade.len() as u32);
        }
        self.raise = raise;
        self.lower = lower;
        self.cascade_ptr = cascade_ptr;
        self.cascade = cascade;
    }
}

fn opt(x: u32) -> Option<usize> {
    if x == ABSENT {
        None
    } else {
        Some(x as usize)
    }
}

/// Canonical order: level first, then `n` lexicographically, then `m`.
fn compare(a: &[u8], b: &[u8], n_slots: usize) -> Ordering {
    let la: usize = a[..n_slots].iter().map(|&x| x as usize).sum();
    let lb: usize = b[..n_slots].iter().map(|&x| x as usize).sum();
    la.cmp(&lb).then_with(|| a.cmp(b))
}

fn occupations<F: FnMut(&[u8], usize)>(
    kinds: &[SlotKind],
    slot: usize,
    left: usize,
    k1_left: usize,
    k1: usize,
    n: &mut [u8],
    emit: &mut F,
) {
    if slot == kinds.len() {
        emit(n, k1);
        return;
    }
    let cap = match kinds[slot] {
        SlotKind::Primary => left,
        SlotKind::CascadeOnly => left.min(k1_left),
    };
    for v in 0..=cap {
        n[slot] = v as u8;
        let (k1l, k1n) = match kinds[slot] {
            SlotKind::Primary => (k1_left, k1),
            SlotKind::CascadeOnly => (k1_left - v, k1 + v),
        };
        occupations(kinds, slot + 1, left - v, k1l, k1n, n, emit);
    }
    n[slot] = 0;
}

fn count_fields(kinds: &[SlotKind], n_max: usize, m_max: usize, parts: &[Vec<u8>]) -> usize {
    let primary = kinds.iter().filter(|k| **k == SlotKind::Primary).count();
    let secondary = kinds.len() - primary;
    // multisets of size <= l over p slots = C(p + l, l)
    let upto = |p: usize, l: usize| -> usize { binom(p + l, l) };
    let exactly = |p: usize, l: usize| -> usize {
        if p == 0 {
            usize::from(l == 0)
        } else {
            binom(p + l - 1, l)
        }
    };
    let mut total = 0usize;
    for m in parts {
        let w = weight(m);
        let k1_cap = if secondary > 0 { m_max - w } else { 0 };
        for k1 in 0..=k1_cap.min(n_max) {
            total = total.saturating_add(exactly(secondary, k1).saturating_mul(upto(primary, n_max - k1)));
        }
    }
    total
}

fn binom(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(usize::MAX as u128) as usize
}

/// All partition vectors with `sum_q q m_q <= m_max`, in lexicographic order.
pub fn partitions(m_max: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut m = vec![0u8; m_max];
    fn rec(q: usize, left: usize, m: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if q > m.len() {
            out.push(m.clone());
            return;
        }
        for c in 0..=left / q {
            m[q - 1] = c as u8;
            rec(q + 1, left - c * q, m, out);
        }
        m[q - 1] = 0;
    }
    rec(1, m_max, &mut m, &mut out);
    out.sort();
    out
}

/// Partition vectors of exactly `order`, with `m_max` entries.
pub fn partitions_of(order: usize, m_max: usize) -> Vec<Vec<u8>> {
    partitions(m_max).into_iter().filter(|m| weight(m) == order).collect()
}

/// Cached partition coefficients, generated by brute-force enumeration.
#[derive(Clone, Debug)]
pub struct PartitionTable {
    m_max: usize,
    entries: Vec<(Vec<u8>, u64)>,
}

impl PartitionTable {
    pub fn new(m_max: usize) -> Self {
        let mut entries = Vec::new();
        for order in 0..=m_max {
            for (pattern, count) in set_partition_patterns(order) {
                let mut m = vec![0u8; m_max];
                for (q, c) in pattern.iter().enumerate() {
                    if *c > 0 {
                        m[q] = *c;
                    }
                }
                entries.push((m, count));
            }
        }
        entries.sort();
        PartitionTable { m_max, entries }
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// `a_m`, or zero if `m` is not a partition of weight `<= m_max`.
    pub fn get(&self, m: &[u8]) -> u64 {
        let mut key = vec![0u8; self.m_max];
        for (q, &c) in m.iter().enumerate() {
            if c > 0 {
                if q >= self.m_max {
                    return 0;
                }
                key[q] = c;
            }
        }
        self.entries
            .binary_search_by(|(k, _)| k.as_slice().cmp(&key))
            .map_or(0, |i| self.entries[i].1)
    }
}

/// `a_m` for a single partition vector: the number of set partitions of
/// `{1..M}` whose block sizes follow `m`.
pub fn partition_coefficient(m: &[u8]) -> u64 {
    let order = weight(m);
    let mut want = m.to_vec();
    want.resize(order.max(m.len()), 0);
    set_partition_patterns(order)
        .into_iter()
        .find(|(p, _)| {
            let mut p = p.clone();
            p.resize(want.len(), 0);
            p == want
        })
        .map_or(0, |(_, c)| c)
}

/// Tally of block-size patterns over all set partitions of `{1..order}`,
/// enumerated as restricted growth strings.
fn set_partition_patterns(order: usize) -> Vec<(Vec<u8>, u64)> {
    let mut tally: Vec<(Vec<u8>, u64)> = Vec::new();
    if order == 0 {
        return vec![(Vec::new(), 1)];
    }
    let mut a = vec![0usize; order];
    loop {
        let blocks = a.iter().copied().max().unwrap_or(0) + 1;
        let mut sizes = vec![0usize; blocks];
        for &b in &a {
            sizes[b] += 1;
        }
        let mut pattern = vec![0u8; order];
        for s in sizes {
            pattern[s - 1] += 1;
        }
        match tally.iter_mut().find(|(p, _)| *p == pattern) {
            Some(e) => e.1 += 1,
            None => tally.push((pattern, 1)),
        }
        // Next restricted growth string: a[0] = 0, a[i] <= 1 + max(a[..i]).
        let mut i = order - 1;
        loop {
            if i == 0 {
                tally.sort();
                return tally;
            }
            let max_prefix = a[..i].iter().copied().max().unwrap_or(0);
            if a[i] <= max_prefix {
                a[i] += 1;
                for x in a.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

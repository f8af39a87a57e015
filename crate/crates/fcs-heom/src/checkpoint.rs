//! Binary checkpoints of a hierarchy state.
//!
//! Layout, all little-endian: the magic `FCSHEOM1`, the index-space
//! fingerprint (`u64`), `t` (`f64`), `dim` and the field count (`u64` each),
//! then every complex entry as a pair of `f64`.

use fcs_heom_core::propagator::{AuxiliaryState, Hierarchy};
use fcs_heom_core::C64;

use crate::error::AppError;

pub const MAGIC: &[u8; 8] = b"FCSHEOM1";

pub fn encode(state: &AuxiliaryState, fingerprint: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 16 * state.fields.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&fingerprint.to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    out.extend_from_slice(&(state.dim as u64).to_le_bytes());
    let d2 = (state.dim * state.dim).max(1);
    out.extend_from_slice(&((state.fields.len() / d2) as u64).to_le_bytes());
    for z in &state.fields {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

/// Restores a state for `hierarchy`, refusing checkpoints written for a
/// different index space.
pub fn decode(bytes: &[u8], hierarchy: &Hierarchy) -> Result<AuxiliaryState, AppError> {
    let bad = |what: &str| AppError::Validation(format!("checkpoint: {what}"));
    if bytes.len() < 40 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let word = |i: usize| <[u8; 8]>::try_from(&bytes[i..i + 8]).expect("eight bytes");
    let fingerprint = u64::from_le_bytes(word(8));
    if fingerprint != hierarchy.space.fingerprint() {
        return Err(bad("index space fingerprint does not match"));
    }
    let t = f64::from_le_bytes(word(16));
    let dim = u64::from_le_bytes(word(24)) as usize;
    let n_fields = u64::from_le_bytes(word(32)) as usize;
    if dim != hierarchy.dim() || n_fields != hierarchy.n_fields() {
        return Err(bad("dimensions do not match"));
    }
    let n = n_fields * dim * dim;
    if bytes.len() != 40 + 16 * n {
        return Err(bad("truncated payload"));
    }
    let fields = (0..n)
        .map(|k| {
            let o = 40 + 16 * k;
            C64::new(f64::from_le_bytes(word(o)), f64::from_le_bytes(word(o + 8)))
        })
        .collect();
    Ok(AuxiliaryState { t, dim, fields })
}

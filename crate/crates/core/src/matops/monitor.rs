//! Process-wide record of the worst relative solver residual.
//!
//! Every Lyapunov and Riccati solve reports `‖residual‖_F / max(1, ‖rhs‖_F)`
//! for the matrix it returns. Callers reset the record, run a workload and
//! read back the maximum.

use std::sync::atomic::{AtomicU64, Ordering};

static WORST: AtomicU64 = AtomicU64::new(0);

pub(crate) fn record(residual: f64, rhs_norm: f64) {
    let rel = residual / rhs_norm.max(1.0);
    let rel = if rel.is_nan() { f64::INFINITY } else { rel };
    let _ = WORST.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
        (rel > f64::from_bits(bits)).then(|| rel.to_bits())
    });
}

/// Largest relative residual recorded since the last reset.
pub fn worst_relative_residual() -> f64 {
    f64::from_bits(WORST.load(Ordering::Relaxed))
}

pub fn reset_residual_monitor() {
    WORST.store(0.0f64.to_bits(), Ordering::Relaxed);
}

pub mod cascade_demo;
pub mod consistency_sweep;
pub mod example1;
pub mod lyapunov_audit;
pub mod pe_check;
pub mod unicycle_compare;

use dtcascade::unicycle::{ControllerGains, Correction, ReferenceSignal, Signal};

/// Reference and gains of the small-`w_M` regime where every case-study
/// constant is admissible.
pub fn validated_refs() -> ReferenceSignal {
    ReferenceSignal { vr: Signal::Constant { value: 0.5 }, wr: Signal::Sine { amplitude: 0.5, frequency: 1.0, phase: 0.0 } }
}

pub fn validated_gains() -> ControllerGains {
    ControllerGains { a1: 1.0, a2: 1.0, alpha_y: 0.1, correction: Correction::Full }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `0, 1, …, ⌈2π/T⌉`: one period of a unit-frequency reference.
pub fn one_period(t: f64) -> Vec<usize> {
    (0..=(2.0 * std::f64::consts::PI / t).ceil() as usize).collect()
}

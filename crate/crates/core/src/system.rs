//! Common interface for anything that can be iterated as `y(k+1) = F_T(k, y(k))`.

use crate::cascade::Trajectory;
use crate::discretize::ParameterizedMap;
use crate::error::{Error, Result};
use crate::vecops::all_finite;

pub trait DiscreteSystem: Send + Sync {
    fn dim(&self) -> usize;
    fn t_max(&self) -> f64;
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>>;
}

impl DiscreteSystem for ParameterizedMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn t_max(&self) -> f64 {
        self.t_max
    }
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        ParameterizedMap::step(self, t, k, y)
    }
}

impl<S: DiscreteSystem + ?Sized> DiscreteSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn t_max(&self) -> f64 {
        (**self).t_max()
    }
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        (**self).step(t, k, y)
    }
}

pub(crate) fn check_period(t: f64, t_max: f64) -> Result<()> {
    if t > 0.0 && t < t_max {
        Ok(())
    } else {
        Err(Error::Precondition(format!("sampling period {t} outside (0, {t_max})")))
    }
}

/// `φ_T(k, k0, y0)` for `k = k0 ..= k0 + steps`. The first non-finite state
/// aborts with its step index.
pub fn simulate<S: DiscreteSystem + ?Sized>(
    sys: &S,
    t: f64,
    k0: usize,
    y0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    check_period(t, sys.t_max())?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(y0.to_vec());
    for i in 0..steps {
        let next = sys.step(t, k0 + i, &states[i])?;
        if !all_finite(&next) {
            return Err(Error::Divergence { index: k0 + i + 1 });
        }
        states.push(next);
    }
    Ok(Trajectory::new(t, k0, states))
}

//! Right-continuous survival step functions.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `S(t)` as a right-continuous step function: `S(t) = values[k]` for
/// `grid[k] <= t < grid[k+1]`, and `S(t) = 1` before the first grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidData("curve grid must be finite and nonnegative".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData("curve grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidData("survival values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidData("survival values must be nonincreasing".into()));
        }
        Ok(Self { grid, values })
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_parts_unchecked(grid: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    /// `S(t) = 1` everywhere.
    pub fn constant_one() -> Self {
        Self { grid: Vec::new(), values: Vec::new() }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `S(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// `S(t-)`, the left limit.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// `t -> S(t) / S(c)` for `t >= c`, starting with value 1 at `c`.
    pub fn conditional_residual(&self, c: f64) -> Result<SurvivalCurve> {
        let s_c = self.eval(c);
        if !(s_c > 0.0) {
            return Err(Error::DegenerateConditioning(c));
        }
        let start = self.grid.partition_point(|&g| g <= c);
        let mut grid = Vec::with_capacity(self.grid.len() - start + 1);
        let mut values = Vec::with_capacity(grid.capacity());
        grid.push(c);
        values.push(1.0);
        for k in start..self.grid.len() {
            grid.push(self.grid[k]);
            values.push((self.values[k] / s_c).clamp(0.0, 1.0));
        }
        Ok(SurvivalCurve { grid, values })
    }

    /// Inverse-CDF draw from a residual curve (conditioning point = first grid
    /// point), truncated at `t_max`: the mass `S(t_max)` becomes a point mass
    /// at `t_max`. `u` is uniform on `[0, 1)`.
    pub fn residual_quantile(&self, t_max: f64, u: f64) -> f64 {
        let v = 1.0 - u;
        // First grid point after the conditioning point with S(t) < v.
        let tail = self.values.get(1..).unwrap_or(&[]);
        let k = tail.partition_point(|&s| s >= v);
        match self.grid.get(k + 1) {
            Some(&t) if t <= t_max => t,
            _ => t_max,
        }
    }
}

/// Product-limit estimate from `(time, event)` pairs. The grid holds the
/// distinct event times.
pub fn kaplan_meier(time: &[f64], event: &[bool]) -> SurvivalCurve {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut at_risk = time.len();
    let mut s = 1.0;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = time[order[k]];
        let mut j = k;
        let mut deaths = 0usize;
        while j < order.len() && time[order[j]] == t {
            deaths += usize::from(event[order[j]]);
            j += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            grid.push(t);
            values.push(s.max(0.0));
        }
        at_risk -= j - k;
        k = j;
    }
    SurvivalCurve { grid, values }
}

impl core::fmt::Display for SurvivalCurve {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let parts: Vec<_> = self.grid.iter().zip(&self.values).map(|(t, s)| format!("{t}:{s:.4}")).collect();
        write!(f, "S[{}]", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn km_hand_example() {
        // {t=1 event, t=2 censored, t=3 event}: 2/3 after 1, 0 after 3.
        let c = kaplan_meier(&[1.0, 2.0, 3.0], &[true, false, true]);
        assert_eq!(c.grid(), &[1.0, 3.0]);
        assert!((c.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((c.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.eval(2.9) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.eval(3.0), 0.0);
        assert!((c.left_limit(3.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn km_reversed_roles_all_censored_at_five() {
        let c = kaplan_meier(&[5.0; 4], &[true; 4]);
        assert_eq!(c.eval(4.99), 1.0);
        assert_eq!(c.eval(5.0), 0.0);
    }

    #[test]
    fn residual_ratio() {
        let s = SurvivalCurve::new(vec![2.0, 5.0], vec![0.5, 0.25]).unwrap();
        let r = s.conditional_residual(2.0).unwrap();
        assert_eq!(r.eval(2.0), 1.0);
        assert!((r.eval(5.0) - 0.5).abs() < 1e-15);
        assert!((r.eval(100.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residual_degenerate() {
        let s = SurvivalCurve::new(vec![1.0], vec![0.0]).unwrap();
        assert_eq!(s.conditional_residual(2.0), Err(Error::DegenerateConditioning(2.0)));
    }

    #[test]
    fn quantile_point_masses() {
        let r = SurvivalCurve::new(vec![1.0, 4.0], vec![1.0, 0.0]).unwrap();
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(r.residual_quantile(9.0, u), 4.0);
        }
        let flat = SurvivalCurve::new(vec![1.0, 4.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(flat.residual_quantile(9.0, 0.7), 9.0);
    }

    #[test]
    fn validation() {
        assert!(SurvivalCurve::new(vec![1.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(SurvivalCurve::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(SurvivalCurve::new(vec![1.0], vec![1.5]).is_err());
    }
}

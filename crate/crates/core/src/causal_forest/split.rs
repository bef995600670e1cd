//! Shared CART split search on a scalar target.

use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Arm constraint: every child must contain at least `min_arm` units with
/// each value of `flag` (the treatment, or the instrument for instrumental
/// forests).
#[derive(Clone, Copy)]
pub(crate) struct Arms<'a> {
    pub flag: &'a [bool],
    pub min_arm: usize,
}

pub(crate) struct SplitRule<'a> {
    pub min_node: usize,
    /// Minimum child share of the parent size.
    pub alpha: f64,
    pub arms: Option<Arms<'a>>,
}

/// Best `(feature, threshold)` maximizing `sL^2/wL + sR^2/wR` over the
/// candidate features, where `s` sums `weight * target` and `w` sums weights.
/// `target` and `weight` are indexed by unit. First maximum wins.
pub(crate) fn best_split(
    x: &Matrix,
    idx: &[u32],
    target: &[f64],
    weight: &[f64],
    features: &[usize],
    rule: &SplitRule<'_>,
) -> Option<(usize, f64)> {
    let m = idx.len();
    if m < 2 * rule.min_node.max(1) {
        return None;
    }
    let min_child = rule.min_node.max(libm::ceil(rule.alpha * m as f64) as usize).max(1);
    let total_ones = rule.arms.map_or(0, |a| idx.iter().filter(|&&i| a.flag[i as usize]).count());
    let s_tot: f64 = idx.iter().map(|&i| weight[i as usize] * target[i as usize]).sum();
    let w_tot: f64 = idx.iter().map(|&i| weight[i as usize]).sum();

    let mut sorted: Vec<u32> = idx.to_vec();
    let mut best: Option<(usize, f64, f64)> = None;
    for &j in features {
        sorted.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)));
        let (mut s_left, mut w_left) = (0.0, 0.0);
        let mut ones_left = 0usize;
        for k in 0..m - 1 {
            let i = sorted[k] as usize;
            s_left += weight[i] * target[i];
            w_left += weight[i];
            if let Some(a) = rule.arms {
                ones_left += usize::from(a.flag[i]);
            }
            let n_left = k + 1;
            let n_right = m - n_left;
            if n_left < min_child {
                continue;
            }
            if n_right < min_child {
                break;
            }
            let v = x.get(i, j);
            let v_next = x.get(sorted[k + 1] as usize, j);
            if v == v_next {
                continue;
            }
            if let Some(a) = rule.arms {
                if !both_values(ones_left, n_left, total_ones, n_right, a.min_arm) {
                    continue;
                }
            }
            let w_right = w_tot - w_left;
            if !(w_left > 0.0 && w_right > 0.0) {
                continue;
            }
            let s_right = s_tot - s_left;
            let crit = s_left * s_left / w_left + s_right * s_right / w_right;
            if best.map_or(true, |(_, _, c)| crit > c) {
                let mut thr = 0.5 * (v + v_next);
                if !(thr < v_next) {
                    thr = v;
                }
                best = Some((j, thr, crit));
            }
        }
    }
    best.map(|(j, t, _)| (j, t))
}

#[inline]
fn both_values(ones_left: usize, n_left: usize, ones_total: usize, n_right: usize, k: usize) -> bool {
    let ones_right = ones_total - ones_left;
    ones_left >= k && n_left - ones_left >= k && ones_right >= k && n_right - ones_right >= k
}

/// Default number of candidate features per split.
pub(crate) fn default_mtry(p: usize) -> usize {
    p.min(libm::ceil(libm::sqrt(p as f64)) as usize + 20)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_step_in_target() {
        let x = Matrix::new(6, 1, alloc::vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9]).unwrap();
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let w = [1.0; 6];
        let rule = SplitRule { min_node: 1, alpha: 0.0, arms: None };
        let (j, t) = best_split(&x, &[0, 1, 2, 3, 4, 5], &y, &w, &[0], &rule).unwrap();
        assert_eq!(j, 0);
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn arm_constraint_blocks_pure_children() {
        let x = Matrix::new(4, 1, alloc::vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let y = [0.0, 0.0, 1.0, 1.0];
        let wt = [1.0; 4];
        let w = [true, true, false, false];
        let rule = SplitRule { min_node: 1, alpha: 0.0, arms: Some(Arms { flag: &w, min_arm: 1 }) };
        assert!(best_split(&x, &[0, 1, 2, 3], &y, &wt, &[0], &rule).is_none());
    }
}

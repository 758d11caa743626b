use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OspaConfig {
    /// Cutoff c, meters.
    pub cutoff: f64,
    /// Order p ≥ 1.
    pub order: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        OspaConfig {
            cutoff: 500.0,
            order: 2.0,
        }
    }
}

impl OspaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite() && self.order >= 1.0 && self.order.is_finite()) {
            return Err(Error::InvalidConfig("OSPA needs c > 0 and p ≥ 1".into()));
        }
        Ok(())
    }
}

/// Minimum-cost assignment of every row to a distinct column, for a row-major
/// `rows × cols` cost matrix with `rows ≤ cols`. Returns the column chosen for
/// each row. Shortest augmenting paths with potentials, O(rows²·cols).
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Vec<usize> {
    assert!(rows <= cols, "hungarian needs rows ≤ cols");
    assert_eq!(cost.len(), rows * cols);
    let inf = f64::INFINITY;
    // 1-based internally; column 0 is a virtual source.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// OSPA distance between two finite point sets, meters.
pub fn ospa(truth: &[Vec2], estimate: &[Vec2], config: &OspaConfig) -> f64 {
    let (small, large) = if truth.len() <= estimate.len() {
        (truth, estimate)
    } else {
        (estimate, truth)
    };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return 0.0;
    }
    let c = config.cutoff;
    let p = config.order;
    let cp = libm::pow(c, p);
    let mut matched = Vec::with_capacity(m);
    if m > 0 {
        let cost: Vec<f64> = small
            .iter()
            .flat_map(|a| large.iter().map(move |b| libm::pow(a.distance(*b).min(c), p)))
            .collect();
        let assignment = hungarian(&cost, m, n);
        matched.extend(assignment.iter().enumerate().map(|(r, &col)| cost[r * n + col]));
        // Summing in sorted order makes the result independent of which set
        // played the row role.
        matched.sort_by(f64::total_cmp);
    }
    let total: f64 = matched.iter().sum::<f64>() + cp * (n - m) as f64;
    libm::pow(total / n as f64, 1.0 / p).min(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn go(r: usize, rows: usize, cols: usize, used: &mut Vec<bool>, cost: &[f64]) -> f64 {
            if r == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cols {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[r * cols + j] + go(r + 1, rows, cols, used, cost));
                    used[j] = false;
                }
            }
            best
        }
        go(0, rows, cols, &mut vec![false; cols], cost)
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&cost, 3, 3);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r * 3 + c]).sum();
        assert_eq!(total, 5.0);
        let rect = [9.0, 1.0, 7.0, 1.0, 8.0, 9.0];
        let a = hungarian(&rect, 2, 3);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| rect[r * 3 + c]).sum();
        assert_eq!(total, brute(&rect, 2, 3));
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for rows in 1..=5 {
            for cols in rows..=6 {
                let cost: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
                let a = hungarian(&cost, rows, cols);
                let mut seen = a.clone();
                seen.sort();
                seen.dedup();
                assert_eq!(seen.len(), rows);
                let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r * cols + c]).sum();
                assert!((total - brute(&cost, rows, cols)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ospa_conventions() {
        let cfg = OspaConfig::default();
        assert_eq!(ospa(&[], &[], &cfg), 0.0);
        assert_eq!(ospa(&[Vec2::new(1.0, 2.0)], &[], &cfg), 500.0);
        assert_eq!(ospa(&[], &[Vec2::new(1.0, 2.0)], &cfg), 500.0);
        let x = [Vec2::new(0.0, 0.0)];
        let y = [Vec2::new(3.0, 4.0)];
        assert!((ospa(&x, &y, &cfg) - 5.0).abs() < 1e-12);
        // One matched at 5 m, one missed: sqrt((25 + 500²)/2).
        let y2 = [Vec2::new(3.0, 4.0), Vec2::new(1e4, 0.0)];
        assert!((ospa(&x, &y2, &cfg) - ((25.0 + 250_000.0) / 2.0f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn far_pairs_saturate_at_cutoff() {
        let cfg = OspaConfig::default();
        let x = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let y = [Vec2::new(5e3, 0.0), Vec2::new(-5e3, 0.0)];
        assert_eq!(ospa(&x, &y, &cfg), 500.0);
    }
}

//! Doubly stochastic mixing of constraint estimates.
//!
//! One synchronous round computes, for every agent `i` from the same
//! snapshot `e(t)`,
//!
//! ```text
//! e_i(t+1) = sum_j w_ij e_j(t) + g_i(y_i(t+1)) - g_i(y_i(t))
//! ```
//!
//! Column sums of one make the average of the estimates follow the average of
//! the true contributions exactly, whatever the trajectory of `y`.

use std::collections::VecDeque;

use crate::error::{Axis, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Validated `N x N` doubly stochastic matrix with a strongly connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    /// Checks entries, marginals and strong connectivity (forward and
    /// transposed reachability from agent 0).
    pub fn validate(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::param("weights", "empty matrix"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    row: i,
                    len: row.len(),
                });
            }
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NegativeEntry { row: i, col: j, value: v });
                }
                if !(v <= 1.0) {
                    return Err(Error::EntryOutOfRange { row: i, col: j, value: v });
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            let residual = row.iter().sum::<f64>() - 1.0;
            if residual.abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic {
                    axis: Axis::Row,
                    index: i,
                    residual,
                });
            }
        }
        for j in 0..n {
            let residual = rows.iter().map(|r| r[j]).sum::<f64>() - 1.0;
            if residual.abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic {
                    axis: Axis::Column,
                    index: j,
                    residual,
                });
            }
        }
        let w = WeightMatrix {
            n,
            w: rows.iter().flatten().copied().collect(),
        };
        // Edge j -> i iff w_ij > 0.
        if let Some(to) = w.unreachable_from_zero(false) {
            return Err(Error::NotStronglyConnected { from: 0, to });
        }
        if let Some(from) = w.unreachable_from_zero(true) {
            return Err(Error::NotStronglyConnected { from, to: 0 });
        }
        Ok(w)
    }

    fn unreachable_from_zero(&self, transposed: bool) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                // forward: u -> v when w_vu > 0; transposed: u -> v when w_uv > 0
                let weight = if transposed { self.get(u, v) } else { self.get(v, u) };
                if weight > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// `{ j != i : w_ij > 0 }`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.get(i, j) > 0.0)
    }

    /// `{ j : w_ij > 0 }`, self included when the diagonal is positive.
    pub fn in_neighborhood(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j) > 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Uniform averaging over a complete graph.
    pub fn uniform(n: usize) -> Self {
        WeightMatrix {
            n,
            w: vec![1.0 / n as f64; n * n],
        }
    }
}

fn check_lengths(n: usize, k: usize, name: &str, list: &[Vec<f64>]) -> Result<()> {
    if list.len() != n {
        return Err(Error::dim(format!("{name} list"), n, list.len()));
    }
    for (i, v) in list.iter().enumerate() {
        if v.len() != k {
            return Err(Error::dim(format!("{name}[{i}]"), k, v.len()));
        }
    }
    Ok(())
}

/// One synchronous estimate round; every agent reads the same `e_prev`.
pub fn update_estimates(
    w: &WeightMatrix,
    e_prev: &[Vec<f64>],
    g_new: &[Vec<f64>],
    g_old: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = w.size();
    let k = e_prev.first().map_or(0, Vec::len);
    check_lengths(n, k, "e_prev", e_prev)?;
    check_lengths(n, k, "g_new", g_new)?;
    check_lengths(n, k, "g_old", g_old)?;

    Ok((0..n)
        .map(|i| {
            let mut next: Vec<f64> = g_new[i].iter().zip(&g_old[i]).map(|(a, b)| a - b).collect();
            for (j, ej) in e_prev.iter().enumerate() {
                let wij = w.get(i, j);
                if wij == 0.0 {
                    continue;
                }
                for (acc, v) in next.iter_mut().zip(ej) {
                    *acc += wij * v;
                }
            }
            next
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_matrix() -> Vec<Vec<f64>> {
        vec![
            vec![0.75, 0.125, 0.125],
            vec![0.125, 0.875, 0.0],
            vec![0.125, 0.0, 0.875],
        ]
    }

    #[test]
    fn accepts_three_agent_matrix() {
        let w = WeightMatrix::validate(&reference_matrix()).unwrap();
        assert_eq!(w.size(), 3);
        assert_eq!(w.neighbors(0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(w.neighbors(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(w.in_neighborhood(2).collect::<Vec<_>>(), vec![0, 2]);
        assert!(w.is_symmetric());
    }

    #[test]
    fn identity_is_not_strongly_connected() {
        for n in 2..5 {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            assert!(matches!(
                WeightMatrix::validate(&rows),
                Err(Error::NotStronglyConnected { .. })
            ));
        }
    }

    #[test]
    fn negative_entry_is_reported() {
        let rows = vec![
            vec![0.6, 0.6, -0.2],
            vec![0.2, 0.2, 0.6],
            vec![0.2, 0.2, 0.6],
        ];
        assert!(matches!(
            WeightMatrix::validate(&rows),
            Err(Error::NegativeEntry { row: 0, col: 2, .. })
        ));
    }

    #[test]
    fn row_and_column_sums_are_checked() {
        let rows = vec![vec![0.5, 0.4], vec![0.5, 0.5]];
        assert!(matches!(
            WeightMatrix::validate(&rows),
            Err(Error::NotDoublyStochastic { axis: Axis::Row, index: 0, .. })
        ));
        // Row stochastic but not column stochastic.
        let rows = vec![vec![0.5, 0.5], vec![0.9, 0.1]];
        assert!(matches!(
            WeightMatrix::validate(&rows),
            Err(Error::NotDoublyStochastic { axis: Axis::Column, index: 0, .. })
        ));
        assert!(matches!(
            WeightMatrix::validate(&[vec![0.5, 0.5], vec![0.5]]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn directed_cycle_is_strongly_connected_but_one_way_chain_is_not() {
        // Permutation matrix of a 3-cycle.
        let cycle = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        assert!(WeightMatrix::validate(&cycle).is_ok());
        let split = vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ];
        assert!(matches!(
            WeightMatrix::validate(&split),
            Err(Error::NotStronglyConnected { from: 0, to: 2 })
        ));
    }

    #[test]
    fn pure_averaging() {
        let w = WeightMatrix::validate(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let g = vec![vec![7.0], vec![-1.0]];
        let e = update_estimates(&w, &[vec![1.0], vec![3.0]], &g, &g).unwrap();
        assert_eq!(e, vec![vec![2.0], vec![2.0]]);
    }

    #[test]
    fn frozen_contributions_preserve_the_mean() {
        let w = WeightMatrix::validate(&reference_matrix()).unwrap();
        let e_prev = vec![vec![1.0, -2.0], vec![0.5, 4.0], vec![-3.0, 0.25]];
        let g = vec![vec![9.0, 9.0]; 3];
        let e = update_estimates(&w, &e_prev, &g, &g).unwrap();
        for k in 0..2 {
            let before: f64 = e_prev.iter().map(|v| v[k]).sum();
            let after: f64 = e.iter().map(|v| v[k]).sum();
            assert!((before - after).abs() < 1e-15);
        }
    }

    #[test]
    fn non_neighbor_estimates_have_no_effect() {
        let w = WeightMatrix::validate(&reference_matrix()).unwrap();
        let g = vec![vec![0.0]; 3];
        let base = vec![vec![1.0], vec![2.0], vec![3.0]];
        let mut perturbed = base.clone();
        perturbed[2][0] = 1e6; // agent 2 is not a neighbor of agent 1
        let a = update_estimates(&w, &base, &g, &g).unwrap();
        let b = update_estimates(&w, &perturbed, &g, &g).unwrap();
        assert_eq!(a[1], b[1]);
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn shape_errors() {
        let w = WeightMatrix::uniform(2);
        let ok = vec![vec![0.0]; 2];
        assert!(update_estimates(&w, &[vec![0.0]], &ok, &ok).is_err());
        assert!(update_estimates(&w, &ok, &[vec![0.0], vec![0.0, 1.0]], &ok).is_err());
    }
}

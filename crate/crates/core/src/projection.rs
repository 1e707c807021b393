//! Euclidean projection onto the supported feasible-set family.

use crate::error::{Error, Result};
use crate::problem::FeasibleSet;

/// `argmin_{z in set} ||z - x||_2`. Product sets are projected block by block.
pub fn project(set: &FeasibleSet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != set.dim() {
        return Err(Error::dim("projection input", set.dim(), x.len()));
    }
    let mut out = x.to_vec();
    project_in_place(set, &mut out);
    Ok(out)
}

fn project_in_place(set: &FeasibleSet, x: &mut [f64]) {
    match set {
        FeasibleSet::Box { lower, upper } => project_box(x, lower, upper),
        FeasibleSet::SimplexBlocks { blocks, .. } => {
            for b in blocks {
                project_simplex(&mut x[b.range.clone()], b.target);
            }
        }
        FeasibleSet::Product(children) => {
            let mut offset = 0;
            for c in children {
                let d = c.dim();
                project_in_place(c, &mut x[offset..offset + d]);
                offset += d;
            }
        }
    }
}

pub fn project_box(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        if *v < lo {
            *v = lo;
        } else if *v > hi {
            *v = hi;
        }
    }
}

/// Projection onto `{z >= 0, sum z = target}` by sorting and thresholding.
pub fn project_simplex(x: &mut [f64], target: f64) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let sum: f64 = x.iter().sum();
    if x.iter().all(|&v| v >= 0.0) && (sum - target).abs() <= 4.0 * f64::EPSILON * target.max(1.0) {
        return;
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Descending by value; ties keep index order.
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));

    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (rank, &j) in order.iter().enumerate() {
        cumulative += x[j];
        let candidate = (cumulative - target) / (rank + 1) as f64;
        if x[j] - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - theta).max(0.0);
    }

    // Push the rounding residue onto the largest coordinate so the block sum
    // matches `target` to machine precision.
    let residue = target - x.iter().sum::<f64>();
    if residue != 0.0 {
        let top = order[0];
        x[top] = (x[top] + residue).max(0.0);
    }
}

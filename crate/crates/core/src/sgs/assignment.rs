use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Optimal one-to-one matching of size `min(m, n)`, rows ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub total_cost: f64,
}

/// Rectangular linear sum assignment (minimization) by shortest augmenting
/// paths with row/column potentials.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (m, n) = (cost.rows(), cost.cols());
    if m == 0 || n == 0 {
        return Err(Error::domain("assignment over an empty cost matrix"));
    }
    if !cost.is_finite() {
        return Err(Error::domain("assignment cost matrix has non-finite entries"));
    }
    // Work with rows <= cols.
    let transpose = m > n;
    let (nr, nc) = if transpose { (n, m) } else { (m, n) };
    let at = |i: usize, j: usize| if transpose { cost.get(j, i) } else { cost.get(i, j) };

    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0f64; nr + 1];
    let mut v = vec![0.0f64; nc + 1];
    let mut owner = vec![0usize; nc + 1];
    let mut way = vec![0usize; nc + 1];
    for i in 1..=nr {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; nc + 1];
        let mut used = vec![false; nc + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=nc {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=nc {
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

    let mut pairs: Vec<(usize, usize)> = (1..=nc)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (r, c) = (owner[j] - 1, j - 1);
            if transpose {
                (c, r)
            } else {
                (r, c)
            }
        })
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Ok(Assignment {
        rows: pairs.iter().map(|p| p.0).collect(),
        cols: pairs.iter().map(|p| p.1).collect(),
        total_cost,
    })
}

//! Exhaustive solvers for tiny SVM duals:
//!
//!   maximize  W(a) = sum a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij
//!   subject to 0 <= a_i <= C and sum a_i y_i = 0.

pub fn linear_gram(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum()).collect())
        .collect()
}

pub fn dual_objective(k: &[Vec<f64>], y: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k[i][j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is negligible relative to the matrix scale.
fn solve_linear(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-10 * scale {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

/// Global optimum by enumerating every assignment of each multiplier to
/// {0, C, free}. For each assignment the free multipliers solve the
/// stationarity conditions on that face together with the equality
/// constraint; feasible candidates are compared by objective. The dual is
/// concave, and some optimum always lies on a face whose system is
/// nonsingular, so the best candidate is the optimum. Cost is 3^n small
/// solves, fine up to about a dozen points.
pub fn exhaustive(k: &[Vec<f64>], y: &[f64], c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    assert!(n <= 14, "exhaustive QP is exponential in the point count");
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    let feas_eps = 1e-9 * c.max(1.0);

    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut state = vec![0u8; n];
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let bound_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| y[i] * a[i]).sum();

        if free.is_empty() {
            if bound_sum.abs() > feas_eps {
                continue;
            }
        } else {
            let f = free.len();
            let mut m = vec![vec![0.0; f + 1]; f + 1];
            let mut rhs = vec![0.0; f + 1];
            for (r, &i) in free.iter().enumerate() {
                for (cc, &j) in free.iter().enumerate() {
                    m[r][cc] = q[i][j];
                }
                m[r][f] = y[i];
                m[f][r] = y[i];
                let fixed: f64 = (0..n).filter(|&j| state[j] != 2).map(|j| q[i][j] * a[j]).sum();
                rhs[r] = 1.0 - fixed;
            }
            rhs[f] = -bound_sum;
            let Some(sol) = solve_linear(m, rhs) else {
                continue;
            };
            if sol[..f].iter().any(|&v| v < -feas_eps || v > c + feas_eps) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r].clamp(0.0, c);
            }
        }
        let w = dual_objective(k, y, &a);
        if w > best.0 {
            best = (w, a);
        }
    }
    best
}

/// Brute-force grid search over the 4-point dual: a_1..a_3 on a grid of
/// `steps + 1` values in [0, C], with a_4 fixed by the equality constraint.
pub fn grid_four_points(k: &[Vec<f64>], y: &[f64], c: f64, steps: usize) -> f64 {
    assert_eq!(y.len(), 4);
    let mut best = f64::NEG_INFINITY;
    let v = |i: usize| c * i as f64 / steps as f64;
    for i in 0..=steps {
        for j in 0..=steps {
            for l in 0..=steps {
                let a = [v(i), v(j), v(l)];
                let a4 = -(a[0] * y[0] + a[1] * y[1] + a[2] * y[2]) * y[3];
                if !(-1e-12..=c + 1e-12).contains(&a4) {
                    continue;
                }
                best = best.max(dual_objective(k, y, &[a[0], a[1], a[2], a4.clamp(0.0, c)]));
            }
        }
    }
    best
}

/// Margin-unit KKT violation of every training point for multipliers `a`
/// and bias `b`.
pub fn kkt_residuals(k: &[Vec<f64>], y: &[f64], a: &[f64], b: f64, c: f64) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let f: f64 = (0..y.len()).map(|j| a[j] * y[j] * k[i][j]).sum::<f64>() + b;
            let m = y[i] * f - 1.0;
            if a[i] <= 0.0 {
                (-m).max(0.0)
            } else if a[i] >= c {
                m.max(0.0)
            } else {
                m.abs()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_symmetric_points() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = [-1.0, 1.0];
        let (w, a) = exhaustive(&linear_gram(&x), &y, 10.0);
        // optimum a = (1/2, 1/2): W = 1 - 1/2 * (1/4 * 4) = 1/2
        assert!((w - 0.5).abs() < 1e-12);
        assert!((a[0] - 0.5).abs() < 1e-12 && (a[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn xor_grid_and_exhaustive_agree() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let k = linear_gram(&x);
        let c = 1.0;
        let g = grid_four_points(&k, &y, c, 100);
        let (e, _) = exhaustive(&k, &y, c);
        assert!((g - 4.0 * c).abs() < 1e-12);
        assert!((e - g).abs() < 1e-9);
    }
}

//! Two-variable SMO for the dual QP
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  yᵀα = Δ,  0 ≤ αᵢ ≤ Cᵢ,  yᵢ ∈ {+1, -1}
//! ```
//!
//! with `Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)`. The working pair is the maximal violating pair;
//! ties go to the lowest index. The update follows the usual clipped
//! analytic step.

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

pub(crate) struct Problem<'a> {
    /// Row-major kernel matrix `K` (unsigned).
    pub kernel: &'a [f64],
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation `m(α) - M(α)`.
    pub violation: f64,
}

fn at_upper(a: f64, c: f64) -> bool {
    a >= c
}

fn at_lower(a: f64) -> bool {
    a <= 0.0
}

fn in_up(a: f64, c: f64, y: f64) -> bool {
    (y > 0.0 && !at_upper(a, c)) || (y < 0.0 && !at_lower(a))
}

fn in_low(a: f64, c: f64, y: f64) -> bool {
    (y > 0.0 && !at_lower(a)) || (y < 0.0 && !at_upper(a, c))
}

/// Returns the violating pair `(i, j)` and `m - M`, or `None` when one of
/// the index sets is empty.
fn select(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> Option<(usize, usize, f64)> {
    let mut i = None;
    let mut gmax = f64::NEG_INFINITY;
    let mut j = None;
    let mut gmin = f64::INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], upper[t], y[t]) && v > gmax {
            gmax = v;
            i = Some(t);
        }
        if in_low(alpha[t], upper[t], y[t]) && v < gmin {
            gmin = v;
            j = Some(t);
        }
    }
    Some((i?, j?, gmax - gmin))
}

pub(crate) fn solve(prob: Problem<'_>, tol: f64) -> Result<Solution> {
    let Problem {
        kernel,
        p,
        y,
        upper,
        mut alpha,
    } = prob;
    let n = alpha.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];
    let mut grad = p.clone();
    for j in 0..n {
        if alpha[j] != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += q(i, j) * alpha[j];
            }
        }
    }

    let max_iter = (100 * n).max(1_000_000);
    let mut iterations = 0;
    let violation = loop {
        let Some((i, j, gap)) = select(&alpha, &grad, &y, &upper) else {
            break 0.0;
        };
        if gap <= tol {
            break gap;
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged {
                solver: "SMO",
                iterations,
                residual: gap,
            });
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    // offset: mean over free variables, else midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if at_upper(alpha[t], upper[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        0.5 * (ub + lb)
    };
    Ok(Solution {
        alpha,
        rho,
        iterations,
        violation,
    })
}

#[cfg(test)]
/// Maximal KKT violation `m(α) - M(α)` of a feasible point; 0 when either
/// index set is empty.
pub(crate) fn kkt_violation(kernel: &[f64], p: &[f64], y: &[f64], upper: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| p[i] + (0..n).map(|j| y[i] * y[j] * kernel[i * n + j] * alpha[j]).sum::<f64>())
        .collect();
    select(alpha, &grad, y, upper).map_or(0.0, |(_, _, g)| g.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_problem_has_closed_form() {
        // points at -1 and +1 on a line, linear kernel: α = 0.5 each, ρ = 0
        let x = [-1.0f64, 1.0];
        let k: Vec<f64> = x.iter().flat_map(|a| x.iter().map(move |b| a * b)).collect();
        let sol = solve(
            Problem {
                kernel: &k,
                p: vec![-1.0; 2],
                y: vec![-1.0, 1.0],
                upper: vec![10.0; 2],
                alpha: vec![0.0; 2],
            },
            1e-12,
        )
        .unwrap();
        assert!((sol.alpha[0] - 0.5).abs() < 1e-12 && (sol.alpha[1] - 0.5).abs() < 1e-12);
        assert!(sol.rho.abs() < 1e-12);
        assert!(kkt_violation(&k, &[-1.0; 2], &[-1.0, 1.0], &[10.0; 2], &sol.alpha) < 1e-12);
    }
}

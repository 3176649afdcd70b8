//! Projected gradient descent with Armijo backtracking on the stacked increments.
//!
//! Feasibility is kept by a sequential clamp: each increment is bounded by its
//! own box and by the room left in the accumulated input-deviation box, so every
//! iterate satisfies both constraint families exactly.

use super::config::MpcConfig;
use super::cost::MpcProblem;
use crate::scalar::Real;

const ARMIJO_SIGMA: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const INITIAL_STEP: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutcome<T> {
    pub dw: Vec<[T; 2]>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Clamps `dw` in place so that every increment lies in `[dw_min, dw_max]` and
/// every partial sum `w0 + dw_0 + ... + dw_i` lies in `[w_min, w_max]`.
///
/// `w0` must already lie inside its box.
pub fn project_increments<T: Real>(dw: &mut [[T; 2]], w0: [T; 2], cfg: &MpcConfig<T>) {
    let mut w = w0;
    for u in dw.iter_mut() {
        for k in 0..2 {
            let lo = cfg.dw_min[k].max(cfg.w_min[k] - w[k]);
            let hi = cfg.dw_max[k].min(cfg.w_max[k] - w[k]);
            let mut x = u[k].max(lo).min(hi);
            // w + (w_max - w) can round one ulp past the bound
            let nudge = T::epsilon() * (w[k].abs() + x.abs()) + T::min_positive_value();
            while w[k] + x > cfg.w_max[k] {
                x = x - nudge;
            }
            while w[k] + x < cfg.w_min[k] {
                x = x + nudge;
            }
            u[k] = x;
            w[k] = w[k] + x;
        }
    }
}

/// Runs projected gradient descent from `start` (projected first).
pub fn projected_gradient<T: Real>(
    problem: &MpcProblem<'_, T>,
    w0: [T; 2],
    start: &[[T; 2]],
) -> SolverOutcome<T> {
    let cfg = problem.config;
    let n = problem.horizon();
    let mut z = start.to_vec();
    z.resize(n, [T::zero(); 2]);
    project_increments(&mut z, w0, cfg);
    let mut g = vec![[T::zero(); 2]; n];
    let mut j = problem.evaluate_with_gradient(&z, &mut g);
    let mut alpha = T::lit(INITIAL_STEP);
    let mut trial = vec![[T::zero(); 2]; n];
    let mut g_new = vec![[T::zero(); 2]; n];
    let mut iterations = 0;
    let mut converged = false;
    let sigma = T::lit(ARMIJO_SIGMA);

    while iterations < cfg.max_iters {
        iterations += 1;
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for (t, (zi, gi)) in trial.iter_mut().zip(z.iter().zip(&g)) {
                *t = [zi[0] - step * gi[0], zi[1] - step * gi[1]];
            }
            project_increments(&mut trial, w0, cfg);
            let moved = trial.iter().zip(&z).fold(T::zero(), |m, (a, b)| {
                m.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs())
            });
            if moved == T::zero() {
                break;
            }
            let decrease: T = trial
                .iter()
                .zip(&z)
                .zip(&g)
                .fold(T::zero(), |acc, ((a, b), gi)| {
                    acc + gi[0] * (a[0] - b[0]) + gi[1] * (a[1] - b[1])
                });
            let j_trial = problem.evaluate(&trial);
            if j_trial <= j + sigma * decrease {
                accepted = Some((j_trial, moved));
                break;
            }
            step = step * T::lit(0.5);
        }
        let Some((j_trial, moved)) = accepted else {
            // no feasible descent at machine precision: stationary
            converged = true;
            break;
        };
        let j_new = problem.evaluate_with_gradient(&trial, &mut g_new);
        debug_assert!(j_new == j_trial);
        // Barzilai-Borwein step for the next iteration
        let mut ss = T::zero();
        let mut sy = T::zero();
        for i in 0..n {
            for k in 0..2 {
                let s = trial[i][k] - z[i][k];
                let y = g_new[i][k] - g[i][k];
                ss = ss + s * s;
                sy = sy + s * y;
            }
        }
        alpha = if sy > T::zero() {
            ss / sy
        } else {
            step * T::two()
        };
        alpha = alpha.max(T::lit(MIN_STEP)).min(T::lit(MAX_STEP));
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        j = j_new;
        if moved / step <= cfg.tol {
            converged = true;
            break;
        }
    }
    SolverOutcome {
        dw: z,
        cost: j,
        iterations,
        converged,
    }
}

/// Best of projected gradient runs from the zero sequence and every extra start.
///
/// The zero sequence is always feasible and always run, so the returned cost
/// never exceeds the zero-increment cost.
pub fn solve_increments<T: Real>(
    problem: &MpcProblem<'_, T>,
    w0: [T; 2],
    starts: &[Vec<[T; 2]>],
) -> SolverOutcome<T> {
    let zero = vec![[T::zero(); 2]; problem.horizon()];
    let mut best = projected_gradient(problem, w0, &zero);
    let mut total = best.iterations;
    for s in starts {
        let run = projected_gradient(problem, w0, s);
        total += run.iterations;
        if run.cost < best.cost {
            best = run;
        }
    }
    best.iterations = total;
    best
}

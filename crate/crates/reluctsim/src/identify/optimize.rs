//! Derivative-free simplex minimization with parameter transforms.
//!
//! Positive parameters are searched in log space and box-bounded parameters
//! through a sine transform, so iterates can never leave their domain.
//! Restarts rebuild the simplex around the incumbent with a deterministic,
//! seeded jitter.

use crate::error::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Coordinate transform between external (model) and internal (search) space.
#[derive(Clone, Copy, Debug)]
pub enum Transform {
    Identity,
    /// x = exp(y): strictly positive parameters.
    LogPositive,
    /// x = lo + (hi−lo)·(sin(y)+1)/2: hard box bounds.
    Bounded { lo: f64, hi: f64 },
}

impl Transform {
    fn to_internal(&self, x: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(x),
            Transform::LogPositive => {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(Error::Optimizer(format!(
                        "log-transformed parameter must be positive, got {x}"
                    )))
                }
            }
            Transform::Bounded { lo, hi } => {
                if x < *lo || x > *hi {
                    return Err(Error::Optimizer(format!(
                        "parameter {x} outside bounds [{lo}, {hi}]"
                    )));
                }
                let u = (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
                Ok(u.asin())
            }
        }
    }

    fn to_external(&self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::LogPositive => y.exp(),
            Transform::Bounded { lo, hi } => lo + (hi - lo) * (y.sin() + 1.0) * 0.5,
        }
    }
}

/// Optimizer settings; the defaults match the identification pipeline.
#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    pub restarts: usize,
    /// Relative simplex-extent tolerance.
    pub x_tol: f64,
    /// Relative objective-spread tolerance.
    pub f_tol: f64,
    /// Relative initial simplex step.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            restarts: 3,
            x_tol: 1e-6,
            f_tol: 1e-9,
            initial_step: 0.1,
            seed: 0,
        }
    }
}

/// Outcome of a fit: parameters in external space plus bookkeeping.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `objective` from `initial` (external space). Non-finite objective
/// values reject the candidate; a non-finite value at the initial point is an
/// error.
pub fn minimize<F>(
    mut objective: F,
    initial: &[f64],
    transforms: &[Transform],
    opts: &MinimizeOptions,
) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = initial.len();
    if n == 0 || transforms.len() != n {
        return Err(Error::Optimizer(format!(
            "dimension mismatch: {} parameters vs {} transforms",
            n,
            transforms.len()
        )));
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::Optimizer("initial point must be finite".into()));
    }
    let y0: Vec<f64> = initial
        .iter()
        .zip(transforms.iter())
        .map(|(x, t)| t.to_internal(*x))
        .collect::<Result<_>>()?;

    let mut evals = 0usize;
    let mut eval = |y: &[f64]| -> f64 {
        let x: Vec<f64> = y
            .iter()
            .zip(transforms.iter())
            .map(|(yi, t)| t.to_external(*yi))
            .collect();
        let f = objective(&x);
        evals += 1;
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    };

    let f0 = eval(&y0);
    if !f0.is_finite() {
        return Err(Error::Optimizer(
            "objective is not finite at the initial point".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_y = y0.clone();
    let mut best_f = f0;
    let mut total_iters = 0usize;
    let mut converged = false;

    for restart in 0..=opts.restarts {
        let scale = opts.initial_step * 0.5f64.powi(restart as i32);
        let (y, f, iters, conv) =
            nelder_mead(&mut eval, &best_y, best_f, scale, opts, restart, &mut rng);
        total_iters += iters;
        if f < best_f {
            best_f = f;
            best_y = y;
        }
        converged = conv;
        if conv && restart > 0 {
            break;
        }
    }

    let params: Vec<f64> = best_y
        .iter()
        .zip(transforms.iter())
        .map(|(y, t)| t.to_external(*y))
        .collect();
    Ok(FitResult {
        params,
        objective: best_f,
        iterations: total_iters,
        evaluations: evals,
        converged,
    })
}

#[allow(clippy::too_many_arguments)]
fn nelder_mead<E>(
    eval: &mut E,
    y0: &[f64],
    f0: f64,
    scale: f64,
    opts: &MinimizeOptions,
    restart: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64, usize, bool)
where
    E: FnMut(&[f64]) -> f64,
{
    let n = y0.len();
    // Initial simplex: incumbent plus one jittered step per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((y0.to_vec(), f0));
    for k in 0..n {
        let mut y = y0.to_vec();
        let jitter = if restart == 0 {
            1.0
        } else {
            rng.random_range(0.5..1.5)
        };
        let step = scale * jitter * y[k].abs().max(1.0);
        y[k] += step;
        let f = eval(&y);
        simplex.push((y, f));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iters = 0;
    let mut converged = false;

    while iters < opts.max_iters {
        iters += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;

        // Convergence: objective spread and simplex extent both small.
        let f_spread = (f_worst - f_best).abs();
        let x_extent = (0..n)
            .map(|j| {
                let lo = simplex.iter().map(|(y, _)| y[j]).fold(f64::INFINITY, f64::min);
                let hi = simplex
                    .iter()
                    .map(|(y, _)| y[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                (hi - lo) / simplex[0].0[j].abs().max(1.0)
            })
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tol * (f_best.abs() + 1e-300) || x_extent <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst.
        let mut centroid = vec![0.0; n];
        for (y, _) in simplex.iter().take(n) {
            for j in 0..n {
                centroid[j] += y[j] / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + alpha * (centroid[j] - worst.0[j]))
            .collect();
        let f_reflect = eval(&reflect);

        if f_reflect < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + gamma * (reflect[j] - centroid[j]))
                .collect();
            let f_expand = eval(&expand);
            simplex[n] = if f_expand < f_reflect {
                (expand, f_expand)
            } else {
                (reflect, f_reflect)
            };
        } else if f_reflect < simplex[n - 1].1 {
            simplex[n] = (reflect, f_reflect);
        } else {
            // Contract toward the better of worst/reflected.
            let (base, f_base) = if f_reflect < worst.1 {
                (&reflect, f_reflect)
            } else {
                (&worst.0, worst.1)
            };
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + rho * (base[j] - centroid[j]))
                .collect();
            let f_contract = eval(&contract);
            if f_contract < f_base {
                simplex[n] = (contract, f_contract);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        v.0[j] = best[j] + sigma * (v.0[j] - best[j]);
                    }
                    v.1 = eval(&v.0);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (y, f) = simplex.swap_remove(0);
    (y, f, iters, converged)
}

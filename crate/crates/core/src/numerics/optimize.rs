//! Derivative-free minimization (Nelder–Mead simplex with restarts).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions<T> {
    /// Initial simplex edge per coordinate. A zero entry falls back to 5% of
    /// the start value (or 2.5e-4 when that is zero).
    pub initial_step: Vec<T>,
    /// Stop when the simplex diameter (max-norm) falls below this.
    pub x_tolerance: T,
    /// ...and the spread of objective values falls below this times
    /// `1 + |f_best|`.
    pub f_tolerance: T,
    pub max_iterations: usize,
    /// Number of times the simplex is rebuilt around the incumbent after
    /// convergence; each restart must improve by more than `f_tolerance`
    /// to trigger the next one.
    pub restarts: usize,
}

impl<T: Real> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            initial_step: Vec::new(),
            x_tolerance: T::lit(1e-10),
            f_tolerance: T::lit(1e-14),
            max_iterations: 20_000,
            restarts: 2,
        }
    }
}

impl<T: Real> NelderMeadOptions<T> {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_step(mut self, step: Vec<T>) -> Self {
        self.initial_step = step;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum<T> {
    pub argmin: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    /// `false` when the iteration budget ran out before the tolerances were met.
    pub converged: bool,
    /// Best objective value after each iteration (non-increasing).
    pub best_history: Vec<T>,
}

/// Minimizes `objective` starting from `start`.
///
/// Errors with [`Error::NonFiniteObjective`] as soon as the objective returns
/// NaN; `+inf` is accepted as a penalty value except at the start point.
pub fn nelder_mead<T, F>(mut objective: F, start: &[T], opts: &NelderMeadOptions<T>) -> Result<Minimum<T>>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let dim = start.len();
    if dim == 0 {
        return Err(invalid("start", "need at least one parameter"));
    }
    if !opts.initial_step.is_empty() && opts.initial_step.len() != dim {
        return Err(invalid("initial_step", "length must match start"));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[T]| -> Result<T> {
        evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            Err(Error::NonFiniteObjective {
                point: x.iter().map(|v| v.as_f64()).collect(),
            })
        } else {
            Ok(v)
        }
    };
    let f0 = eval(start)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: start.iter().map(|v| v.as_f64()).collect(),
        });
    }

    let steps: Vec<T> = (0..dim)
        .map(|i| {
            let s = opts.initial_step.get(i).copied().unwrap_or(T::zero());
            if s != T::zero() {
                s
            } else if start[i] != T::zero() {
                T::lit(0.05) * start[i]
            } else {
                T::lit(2.5e-4)
            }
        })
        .collect();

    let mut best = (start.to_vec(), f0);
    let mut iterations = 0usize;
    let mut history = Vec::new();
    let mut converged = false;
    for round in 0..=opts.restarts {
        let previous = best.1;
        let (x, fx, its, ok) = simplex_run(
            &mut eval,
            &best.0,
            best.1,
            &steps,
            opts,
            opts.max_iterations.saturating_sub(iterations),
            &mut history,
        )?;
        iterations += its;
        converged = ok;
        if fx <= best.1 {
            best = (x, fx);
        }
        let improved = previous - best.1 > opts.f_tolerance;
        if !ok || (round > 0 && !improved) {
            break;
        }
    }
    Ok(Minimum {
        argmin: best.0,
        value: best.1,
        iterations,
        evaluations,
        converged,
        best_history: history,
    })
}

#[allow(clippy::type_complexity)]
fn simplex_run<T: Real>(
    eval: &mut impl FnMut(&[T]) -> Result<T>,
    x0: &[T],
    f0: T,
    steps: &[T],
    opts: &NelderMeadOptions<T>,
    budget: usize,
    history: &mut Vec<T>,
) -> Result<(Vec<T>, T, usize, bool)> {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));

    let mut pts: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    pts.push((x0.to_vec(), f0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] = x[i] + steps[i];
        let f = eval(&x)?;
        pts.push((x, f));
    }

    let mut it = 0usize;
    loop {
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN filtered in eval"));
        history.push(pts[0].1);

        let f_spread = pts[dim].1 - pts[0].1;
        let x_spread = pts[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&pts[0].0).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        let f_ok = f_spread <= opts.f_tolerance * (T::one() + pts[0].1.abs()) || (f_spread.is_nan() && pts[0].1.is_infinite());
        if f_ok && x_spread <= opts.x_tolerance {
            let (x, f) = pts.swap_remove(0);
            return Ok((x, f, it, true));
        }
        if it >= budget {
            let (x, f) = pts.swap_remove(0);
            return Ok((x, f, it, false));
        }
        it += 1;

        let mut centroid = vec![T::zero(); dim];
        for (x, _) in &pts[..dim] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let n = T::from_usize_lossy(dim);
        for c in centroid.iter_mut() {
            *c = *c / n;
        }
        let toward = |coef: T, x: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(x)
                .map(|(&c, &xi)| c + coef * (xi - c))
                .collect()
        };

        let worst = pts[dim].0.clone();
        let xr = toward(-alpha, &worst);
        let fr = eval(&xr)?;
        if fr < pts[0].1 {
            let xe = toward(-gamma, &worst);
            let fe = eval(&xe)?;
            pts[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < pts[dim - 1].1 {
            pts[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < pts[dim].1 {
            let xc = toward(-rho, &worst);
            let fc = eval(&xc)?;
            (xc, fc)
        } else {
            let xc = toward(rho, &worst);
            let fc = eval(&xc)?;
            (xc, fc)
        };
        if fc < pts[dim].1.min(fr) {
            pts[dim] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = pts[0].0.clone();
        for (x, f) in pts.iter_mut().skip(1) {
            for (xi, &bi) in x.iter_mut().zip(&best) {
                *xi = bi + sigma * (*xi - bi);
            }
            *f = eval(x)?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let m = nelder_mead(|x: &[f64]| (x[0] - 3.0).powi(2), &[0.0], &Default::default()).unwrap();
        assert!((m.argmin[0] - 3.0).abs() < 1e-6);
        assert!(m.converged);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.0, 1.0], &NelderMeadOptions::default().with_restarts(5)).unwrap();
        assert!(m.value < 1e-8, "value {}", m.value);
        assert!((m.argmin[0] - 1.0).abs() < 1e-4 && (m.argmin[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn absolute_value() {
        let m = nelder_mead(|x: &[f64]| x[0].abs(), &[5.0], &Default::default()).unwrap();
        assert!(m.argmin[0].abs() < 1e-4);
    }

    #[test]
    fn nan_reports_point() {
        let err = nelder_mead(
            |x: &[f64]| if x[0] > 1.02 { f64::NAN } else { x[0] },
            &[1.0],
            &NelderMeadOptions::default().with_step(vec![0.5]),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteObjective { point } => assert!(point[0] > 1.02),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn history_is_monotone() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(4) + (x[1] + 2.0).powi(2) + x[0] * x[1] * 0.1;
        let m = nelder_mead(f, &[3.0, 3.0], &Default::default()).unwrap();
        assert!(m.best_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_iterations: 5, ..Default::default() };
        let m = nelder_mead(f, &[-1.0, 1.0], &opts).unwrap();
        assert!(!m.converged);
    }
}

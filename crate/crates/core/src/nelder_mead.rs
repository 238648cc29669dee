//! Derivative-free simplex minimization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop once every vertex lies within `xtol` of the best one.
    pub xtol: f64,
    /// Stop once the spread of simplex values is below `ftol` (and the
    /// simplex is within `100 · xtol`). Zero disables this test.
    pub ftol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { xtol: 1e-8, ftol: 0.0, max_evals: 2000, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// `(iteration, best value so far)` after every iteration.
    pub trace: Vec<(usize, f64)>,
}

/// Standard reflection / expansion / contraction / shrink iteration.
/// Non-finite objective values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    start: &[f64],
    options: &NelderMeadOptions,
) -> Result<NelderMeadResult> {
    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(start, &mut evals);
    if !f0.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f0)];
    for k in 0..n {
        let mut x = start.to_vec();
        x[k] += options.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push((iteration, simplex[0].1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = simplex[n].1 - simplex[0].1;
        if diameter <= options.xtol
            || (options.ftol > 0.0 && spread <= options.ftol && diameter <= 100.0 * options.xtol)
        {
            converged = true;
            break;
        }
        if evals >= options.max_evals {
            break;
        }
        iteration += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let x = along(0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        } else {
            let x = along(-0.5);
            let v = eval(&x, &mut evals);
            (x, v)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x0.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    let (x, f) = simplex.swap_remove(0);
    Ok(NelderMeadResult { x, f, evals, converged, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_in_one_dimension() {
        let r = nelder_mead(|x| (x[0] - 2.0).powi(2), &[0.0], &NelderMeadOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let opts = NelderMeadOptions { xtol: 1e-10, max_evals: 20_000, ..Default::default() };
        let r = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.0, 1.0],
            &opts,
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let r = nelder_mead(|_| f64::INFINITY, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(matches!(r, Err(Error::NonFiniteStart)));
    }

    #[test]
    fn deterministic_trace() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + (x[1] + 0.2).powi(2);
        let a = nelder_mead(f, &[1.0, 1.0], &NelderMeadOptions::default()).unwrap();
        let b = nelder_mead(f, &[1.0, 1.0], &NelderMeadOptions::default()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}

//! First-moment recentering: the shift `a` with `∫ (ρ_{K-a} - 1) ω dσ = 0`.

use std::f64::consts::PI;

use crate::body::ConvexBody;
use crate::error::{Error, Result};
use crate::functionals::hausdorff_to_shifted_ball;
use crate::sphere_grid::{SphereGrid, Vec3};

pub const REGIME_BOUND: f64 = 0.25;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone)]
pub struct RecenterResult {
    pub shift: Vec3,
    pub residual_moment: Vec3,
    /// Number of moment-map evaluations.
    pub iterations: usize,
    /// Largest ratio of consecutive step lengths.
    pub max_step_ratio: f64,
    /// `d_H(K, B)` of the input body.
    pub hausdorff: f64,
    /// `|a| / d_H(K, B)` (zero for the ball itself).
    pub bound_ratio: f64,
}

/// `Φ_K(a) = ∫ (ρ_{K-a}(ω) - 1) ω dσ(ω)`.
pub fn phi_map(body: &ConvexBody, grid: &SphereGrid, a: &Vec3) -> Result<Vec3> {
    let moved = body.translated(-a);
    if !moved.origin_interior() {
        return Err(Error::OriginNotInterior);
    }
    let u: Vec<f64> = moved.radial_samples(grid)?.iter().map(|r| r - 1.0).collect();
    grid.first_moment(&u)
}

/// Fixed-point iteration `a ← a + (3/4π) Φ_K(a)` from `a = 0`, i.e. Newton
/// with the Jacobian `-(4π/3) I` of the centered ball.
pub fn recenter(body: &ConvexBody, grid: &SphereGrid, tol: f64) -> Result<RecenterResult> {
    let hausdorff = hausdorff_to_shifted_ball(body, grid, &Vec3::zeros())?;
    if hausdorff >= REGIME_BOUND {
        return Err(Error::Regime { dist: hausdorff, bound: REGIME_BOUND });
    }
    let mut a = Vec3::zeros();
    let mut last_step: Option<f64> = None;
    let mut max_step_ratio = 0.0f64;
    for iterations in 1..=MAX_ITERATIONS {
        let phi = phi_map(body, grid, &a)?;
        if phi.norm() <= tol {
            let bound_ratio = if hausdorff > 0.0 { a.norm() / hausdorff } else { 0.0 };
            return Ok(RecenterResult {
                shift: a,
                residual_moment: phi,
                iterations,
                max_step_ratio,
                hausdorff,
                bound_ratio,
            });
        }
        let step = phi * (3.0 / (4.0 * PI));
        let len = step.norm();
        if let Some(prev) = last_step {
            if prev > 0.0 {
                max_step_ratio = max_step_ratio.max(len / prev);
            }
        }
        last_step = Some(len);
        a += step;
    }
    Err(Error::NoConvergence {
        solver: "recenter",
        detail: format!("moment still above {tol} after {MAX_ITERATIONS} iterations"),
    })
}

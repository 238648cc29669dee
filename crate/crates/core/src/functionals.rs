//! Deficit, Hausdorff asymmetry and the quotient `Q*` on bodies of
//! unit-ball volume.

use std::f64::consts::PI;
use std::io::Write;

use crate::body::{ConvexBody, AXES};
use crate::error::{Error, Result};
use crate::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::quadrature::{golden_max, golden_min};
use crate::sphere_grid::{angles, tangent_frame, SphereGrid, Vec3};

pub const UNIT_VOLUME: f64 = 4.0 * PI / 3.0;
pub const VOLUME_REL_TOL: f64 = 1e-4;
pub const DEFICIT_SLACK: f64 = 1e-8;
pub const BALL_DEFICIT: f64 = 1e-12;
pub const BALL_LAMBDA: f64 = 1e-10;
pub const DEFAULT_LAMBDA_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FunctionalReport {
    pub volume: f64,
    pub perimeter: f64,
    pub deficit: f64,
    pub lambda_star: f64,
    pub optimal_shift: Vec3,
    /// `f64::INFINITY` on balls.
    pub q_star: f64,
    pub diameter: f64,
    pub is_ball: bool,
}

pub const REPORT_HEADER: [&str; 10] = [
    "body_id",
    "volume",
    "perimeter",
    "deficit",
    "lambda_star",
    "shift_x",
    "shift_y",
    "shift_z",
    "q_star",
    "diameter",
];

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.12e}")
    }
}

impl FunctionalReport {
    pub fn csv_record(&self, body_id: &str) -> Vec<String> {
        let mut r = vec![body_id.to_string()];
        r.extend(
            [
                self.volume,
                self.perimeter,
                self.deficit,
                self.lambda_star,
                self.optimal_shift.x,
                self.optimal_shift.y,
                self.optimal_shift.z,
                self.q_star,
                self.diameter,
            ]
            .iter()
            .map(|v| fmt_num(*v)),
        );
        r
    }
}

/// Writes report rows under the standard header.
pub fn write_reports<W: Write>(out: W, rows: &[(String, FunctionalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (id, r) in rows {
        w.write_record(r.csv_record(id))?;
    }
    w.flush()?;
    Ok(())
}

/// Rejects volumes further than `1e-4` (relative) from `4π/3`.
pub fn check_unit_volume(volume: f64) -> Result<()> {
    let rel_err = (volume - UNIT_VOLUME).abs() / UNIT_VOLUME;
    if rel_err > VOLUME_REL_TOL || !rel_err.is_finite() {
        return Err(Error::VolumeConstraint { volume, rel_err });
    }
    Ok(())
}

fn clamp_deficit(d: f64) -> Result<f64> {
    if d < -DEFICIT_SLACK {
        Err(Error::NegativeDeficit(d))
    } else {
        Ok(d.max(0.0))
    }
}

/// `(P - 4π) / 4π` for a body of unit-ball volume.
pub fn deficit(body: &ConvexBody, grid: &SphereGrid) -> Result<f64> {
    check_unit_volume(body.volume(grid)?)?;
    clamp_deficit((body.surface_area(grid)? - 4.0 * PI) / (4.0 * PI))
}

/// `(P - P(B_r)) / P(B_r)` against an explicit reference radius.
pub fn deficit_with_reference(body: &ConvexBody, grid: &SphereGrid, reference_radius: f64) -> Result<f64> {
    let pr = 4.0 * PI * reference_radius * reference_radius;
    clamp_deficit((body.surface_area(grid)? - pr) / pr)
}

/// Directions and support values used for sup-norm evaluation: grid nodes
/// plus the six coordinate axes.
pub struct SupportTable {
    pub directions: Vec<Vec3>,
    pub values: Vec<f64>,
}

impl SupportTable {
    pub fn new(body: &ConvexBody, grid: &SphereGrid) -> Result<Self> {
        let directions: Vec<Vec3> = grid.nodes().iter().chain(AXES.iter()).copied().collect();
        let values = if body.is_axisymmetric() {
            // Support depends on colatitude only: one value per ring.
            let rings: Vec<f64> =
                grid.theta_nodes().iter().map(|&t| body.meridian_support(t)).collect::<Result<_>>()?;
            let mut v: Vec<f64> = (0..grid.len()).map(|k| rings[grid.ring_of(k)]).collect();
            let (side, north, south) =
                (body.meridian_support(PI / 2.0)?, body.meridian_support(0.0)?, body.meridian_support(PI)?);
            v.extend([side, side, side, side, north, south]);
            v
        } else {
            directions.iter().map(|d| body.support(d)).collect::<Result<_>>()?
        };
        Ok(SupportTable { directions, values })
    }

    /// `max_i |h_i - 1 - x·ν_i|`.
    pub fn sup_distance(&self, x: &Vec3) -> f64 {
        self.directions
            .iter()
            .zip(&self.values)
            .map(|(d, h)| (h - 1.0 - x.dot(d)).abs())
            .fold(0.0, f64::max)
    }

    fn top_indices(&self, x: &Vec3, k: usize) -> Vec<usize> {
        let mut idx: Vec<(usize, f64)> = self
            .directions
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (d, h))| (i, (h - 1.0 - x.dot(d)).abs()))
            .collect();
        let k = k.min(idx.len());
        idx.select_nth_unstable_by(k - 1, |a, b| b.1.total_cmp(&a.1));
        idx.truncate(k);
        idx.into_iter().map(|(i, _)| i).collect()
    }
}

/// `d_H(K, B + x) = max_ν |h_K(ν) - 1 - x·ν|` over grid nodes and axes.
pub fn hausdorff_to_shifted_ball(body: &ConvexBody, grid: &SphereGrid, x: &Vec3) -> Result<f64> {
    Ok(SupportTable::new(body, grid)?.sup_distance(x))
}

#[derive(Debug, Clone)]
pub struct LambdaStar {
    pub value: f64,
    pub shift: Vec3,
    /// Evaluations of the sup-norm objective.
    pub evaluations: usize,
}

/// `λ* = min_x d_H(K, B + x)`.
pub fn lambda_star(body: &ConvexBody, grid: &SphereGrid, tol: f64) -> Result<LambdaStar> {
    if !(tol > 0.0) {
        return Err(Error::Parse(format!("tolerance must be positive, got {tol}")));
    }
    let table = SupportTable::new(body, grid)?;
    if body.is_axisymmetric() {
        axisymmetric_lambda(body, grid, &table, tol)
    } else {
        general_lambda(body, &table, tol)
    }
}

/// Axisymmetric bodies: the objective is invariant under rotations about
/// `e₃`, so a minimizer lies on the axis and the problem is a 1-D convex
/// minimization over `x = s e₃`.
fn axisymmetric_lambda(body: &ConvexBody, grid: &SphereGrid, table: &SupportTable, tol: f64) -> Result<LambdaStar> {
    let mut betas: Vec<f64> = vec![0.0];
    betas.extend_from_slice(grid.theta_nodes());
    betas.push(PI);
    let hs: Vec<f64> = betas.iter().map(|&b| body.meridian_support(b)).collect::<Result<_>>()?;
    let reach = hs.iter().fold(0.0f64, |m, h| m.max(h.abs())) + 1.0;
    let discrete =
        |s: f64| -> f64 { betas.iter().zip(&hs).map(|(b, h)| (h - 1.0 - s * b.cos()).abs()).fold(0.0, f64::max) };
    let analytic = body.has_analytic_support();
    let evaluations = std::cell::Cell::new(0usize);
    let continuous = |s: f64| -> f64 {
        evaluations.set(evaluations.get() + 1);
        let mut best = discrete(s);
        if !analytic {
            return best;
        }
        // Refine the sup between neighboring rings around the largest values.
        let mut ranked: Vec<(f64, usize)> = betas
            .iter()
            .zip(&hs)
            .enumerate()
            .map(|(i, (b, h))| ((h - 1.0 - s * b.cos()).abs(), i))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        for &(_, i) in ranked.iter().take(4) {
            let lo = betas[i.saturating_sub(1)];
            let hi = betas[(i + 1).min(betas.len() - 1)];
            let g = |b: f64| {
                body.meridian_support(b).map(|h| (h - 1.0 - s * b.cos()).abs()).unwrap_or(f64::NEG_INFINITY)
            };
            best = best.max(golden_max(g, lo, hi, 1e-12).1);
        }
        best
    };
    let s_tol = (0.1 * tol).min(1e-10);
    let (s, value) = golden_min(continuous, -reach, reach, s_tol);
    let shift = Vec3::new(0.0, 0.0, s);
    // Certificate: off-axis perturbations cannot do better on the full table.
    let delta = (10.0 * tol).max(1e-4);
    let at_axis = table.sup_distance(&shift);
    for d in AXES.iter() {
        let trial = table.sup_distance(&(shift + d * delta));
        if trial < at_axis - tol {
            return Err(Error::NoConvergence {
                solver: "lambda_star",
                detail: format!("perturbed shift improves {at_axis} to {trial}"),
            });
        }
    }
    Ok(LambdaStar { value: value.max(at_axis), shift, evaluations: evaluations.get() })
}

fn general_lambda(body: &ConvexBody, table: &SupportTable, tol: f64) -> Result<LambdaStar> {
    let mut evaluations = 0usize;
    // Subgradient phase from the center of the support box.
    let mut x = Vec3::new(
        0.5 * (table.values[table.values.len() - 6] - table.values[table.values.len() - 5]),
        0.5 * (table.values[table.values.len() - 4] - table.values[table.values.len() - 3]),
        0.5 * (table.values[table.values.len() - 2] - table.values[table.values.len() - 1]),
    );
    let mut best_x = x;
    let mut best_f = table.sup_distance(&x);
    let scale = best_f.max(1e-3);
    for k in 0..300 {
        let (i, r) = table
            .directions
            .iter()
            .zip(&table.values)
            .enumerate()
            .map(|(i, (d, h))| (i, h - 1.0 - x.dot(d)))
            .fold((0, 0.0f64), |acc, v| if v.1.abs() > acc.1.abs() { v } else { acc });
        evaluations += 1;
        // ∂/∂x |h - 1 - x·ν| = -sign(r) ν
        let g = -table.directions[i] * r.signum();
        x -= g * (scale / (k as f64 + 1.0).sqrt());
        let f = table.sup_distance(&x);
        if f < best_f {
            best_f = f;
            best_x = x;
        }
    }
    let analytic = body.has_analytic_support();
    let objective = |p: &Vec3| -> f64 {
        if analytic {
            continuous_sup(body, table, p)
        } else {
            table.sup_distance(p)
        }
    };
    let opts = NelderMeadOptions { xtol: (0.01 * tol).min(1e-10), ftol: 0.0, max_evals: 4000, initial_step: scale * 0.1 };
    let polish = |start: Vec3, evaluations: &mut usize| -> Result<(Vec3, f64)> {
        let r = nelder_mead(|p| table.sup_distance(&Vec3::new(p[0], p[1], p[2])), start.as_slice(), &opts)?;
        *evaluations += r.evals;
        let mut p = Vec3::new(r.x[0], r.x[1], r.x[2]);
        let mut f = r.f;
        if analytic {
            let step = NelderMeadOptions { initial_step: 1e-3, max_evals: 600, ..opts };
            let r = nelder_mead(|q| objective(&Vec3::new(q[0], q[1], q[2])), p.as_slice(), &step)?;
            *evaluations += r.evals;
            p = Vec3::new(r.x[0], r.x[1], r.x[2]);
            f = r.f;
        }
        Ok((p, f))
    };
    let (mut shift, mut value) = polish(best_x, &mut evaluations)?;
    for round in 0..3 {
        let delta = (10.0 * tol).max(1e-3);
        let mut improved = false;
        for d in AXES.iter() {
            let (p, f) = polish(shift + d * delta, &mut evaluations)?;
            if f < value - tol {
                improved = true;
            }
            if f < value {
                value = f;
                shift = p;
            }
        }
        if !improved {
            break;
        }
        if round == 2 {
            return Err(Error::NoConvergence {
                solver: "lambda_star",
                detail: format!("restarts kept improving the value (now {value})"),
            });
        }
    }
    Ok(LambdaStar { value, shift, evaluations })
}

/// Sup distance with the largest table entries refined off the table by a
/// local 2-D search over directions.
fn continuous_sup(body: &ConvexBody, table: &SupportTable, x: &Vec3) -> f64 {
    let mut best = table.sup_distance(x);
    for i in table.top_indices(x, 6) {
        let nu0 = table.directions[i];
        let (theta, phi) = angles(&nu0);
        let (e1, e2) = tangent_frame(theta, phi);
        let g = |p: &[f64]| {
            let nu = (nu0 + e1 * p[0] + e2 * p[1]).normalize();
            -body.support(&nu).map(|h| (h - 1.0 - x.dot(&nu)).abs()).unwrap_or(f64::NEG_INFINITY)
        };
        let opts = NelderMeadOptions { xtol: 1e-9, ftol: 0.0, max_evals: 200, initial_step: 0.01 };
        if let Ok(r) = nelder_mead(g, &[0.0, 0.0], &opts) {
            best = best.max(-r.f);
        }
    }
    best
}

/// `Q* = δ ln(δ + 1/δ) P³ / λ*²`, or `+∞` below the ball thresholds.
pub fn q_star_from_parts(deficit: f64, perimeter: f64, lambda_star: f64) -> f64 {
    if deficit < BALL_DEFICIT || lambda_star < BALL_LAMBDA {
        return f64::INFINITY;
    }
    deficit * (deficit + 1.0 / deficit).ln() * perimeter.powi(3) / (lambda_star * lambda_star)
}

pub fn q_star(body: &ConvexBody, grid: &SphereGrid) -> Result<f64> {
    Ok(evaluate(body, grid, DEFAULT_LAMBDA_TOL)?.q_star)
}

/// All functionals of a body of unit-ball volume.
pub fn evaluate(body: &ConvexBody, grid: &SphereGrid, tol: f64) -> Result<FunctionalReport> {
    let volume = body.volume(grid)?;
    check_unit_volume(volume)?;
    let perimeter = body.surface_area(grid)?;
    let deficit = clamp_deficit((perimeter - 4.0 * PI) / (4.0 * PI))?;
    let lambda = lambda_star(body, grid, tol)?;
    let diameter = body.diameter(grid)?;
    let q = q_star_from_parts(deficit, perimeter, lambda.value);
    Ok(FunctionalReport {
        volume,
        perimeter,
        deficit,
        lambda_star: lambda.value,
        optimal_shift: lambda.shift,
        q_star: q,
        diameter,
        is_ball: q.is_infinite(),
    })
}

/// `P - (2π/√3) diam^{1/2}` for a body of unit-ball volume.
pub fn diameter_perimeter_check(body: &ConvexBody, grid: &SphereGrid) -> Result<f64> {
    check_unit_volume(body.volume(grid)?)?;
    let p = body.surface_area(grid)?;
    let d = body.diameter(grid)?;
    Ok(p - 2.0 * PI / 3f64.sqrt() * d.sqrt())
}

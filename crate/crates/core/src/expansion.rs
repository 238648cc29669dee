//! Second-order perimeter expansion, slope bounds and the one-disk
//! logarithmic capacity estimate.

use std::f64::consts::PI;

use crate::body::{ConvexBody, RadialField};
use crate::error::{Error, Result};
use crate::functionals::{fmt_num, hausdorff_to_shifted_ball, UNIT_VOLUME};
use crate::harmonics::{analyze, quadratic_form_q2};
use crate::sphere_grid::{direction, disk_mask, ColatitudeRule, GeodesicDisk, SphereGrid, Vec3};

pub const VOLUME_TOL: f64 = 1e-6;
pub const SLOPE_REGIME: f64 = 0.5;
pub const CAPACITY_BAND: f64 = 0.15;
pub const MIN_DISK_NODES: usize = 8;

#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub perimeter_exact: f64,
    /// `(1/2) ∫ (|∇u|² - 2u²)` by grid quadrature.
    pub quadratic_part: f64,
    /// The same quantity from the harmonic coefficients of `u`.
    pub quadratic_part_spectral: f64,
    pub remainder: f64,
    /// `‖u‖_∞ + ‖∇u‖_∞`.
    pub eta: f64,
    /// `∫ (u² + |∇u|²)`.
    pub energy: f64,
    pub remainder_ratio: f64,
}

pub const EXPANSION_HEADER: [&str; 6] =
    ["body_id", "eta", "perimeter_exact", "quadratic_part", "remainder", "remainder_ratio"];

impl ExpansionReport {
    pub fn csv_record(&self, body_id: &str) -> Vec<String> {
        let mut r = vec![body_id.to_string()];
        r.extend(
            [self.eta, self.perimeter_exact, self.quadratic_part, self.remainder, self.remainder_ratio]
                .iter()
                .map(|v| fmt_num(*v)),
        );
        r
    }
}

fn expansion_from_samples(grid: &SphereGrid, u: &[f64], grad_sq: &[f64]) -> Result<ExpansionReport> {
    let volume = grid.integrate(&u.iter().map(|x| (1.0 + x).powi(3)).collect::<Vec<_>>())? / 3.0;
    let rel_err = (volume - UNIT_VOLUME).abs() / UNIT_VOLUME;
    if rel_err > VOLUME_TOL {
        return Err(Error::VolumeConstraint { volume, rel_err });
    }
    let area: Vec<f64> = u.iter().zip(grad_sq).map(|(x, g)| (1.0 + x) * ((1.0 + x).powi(2) + g).sqrt()).collect();
    let perimeter_exact = grid.integrate(&area)?;
    let quad: Vec<f64> = u.iter().zip(grad_sq).map(|(x, g)| g - 2.0 * x * x).collect();
    let quadratic_part = 0.5 * grid.integrate(&quad)?;
    let spectrum = analyze(grid, u, grid.band_limit())?;
    let quadratic_part_spectral = 0.5 * quadratic_form_q2(&spectrum);
    let remainder = perimeter_exact - 4.0 * PI - quadratic_part;
    let sup_u = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sup_g = grad_sq.iter().fold(0.0f64, |m, g| m.max(*g)).sqrt();
    let eta = sup_u + sup_g;
    let energy = grid.integrate(&u.iter().zip(grad_sq).map(|(x, g)| x * x + g).collect::<Vec<_>>())?;
    let remainder_ratio = if eta * energy > 0.0 { remainder.abs() / (eta * energy) } else { 0.0 };
    Ok(ExpansionReport {
        perimeter_exact,
        quadratic_part,
        quadratic_part_spectral,
        remainder,
        eta,
        energy,
        remainder_ratio,
    })
}

/// Expansion report for a sampled field, with the spectral gradient.
pub fn fuglede_report(field: &RadialField) -> Result<ExpansionReport> {
    let g = field.gradient()?;
    if g.unresolved {
        return Err(Error::UnresolvedGradient { fraction: g.top_degree_fraction });
    }
    expansion_from_samples(field.grid(), field.values(), &g.norm_sq)
}

/// Expansion report for a body sampled on `grid`, using its analytic radial
/// gradient where one exists.
pub fn fuglede_report_for_body(body: &ConvexBody, grid: &SphereGrid) -> Result<ExpansionReport> {
    if let ConvexBody::SampledRadial { field, .. } = body {
        return fuglede_report(field);
    }
    let mut u = Vec::with_capacity(grid.len());
    let mut gs = Vec::with_capacity(grid.len());
    for w in grid.nodes() {
        let (r, g) = body.radial_and_gradient(w)?;
        u.push(r - 1.0);
        gs.push(g.norm_squared());
    }
    expansion_from_samples(grid, &u, &gs)
}

/// Remainder of the unconstrained expansion
/// `P = 4π + 2∫u + ∫u² + (1/2)∫|∇u|² + R`; returns `(R, eta, energy)`.
pub fn raw_expansion_remainder(field: &RadialField) -> Result<(f64, f64, f64)> {
    let grid = field.grid();
    let g = field.gradient()?;
    let u = field.values();
    let area: Vec<f64> = u.iter().zip(&g.norm_sq).map(|(x, s)| (1.0 + x) * ((1.0 + x).powi(2) + s).sqrt()).collect();
    let p = grid.integrate(&area)?;
    let expansion: Vec<f64> = u.iter().zip(&g.norm_sq).map(|(x, s)| 2.0 * x + x * x + 0.5 * s).collect();
    let r = p - 4.0 * PI - grid.integrate(&expansion)?;
    let eta = u.iter().fold(0.0f64, |m, x| m.max(x.abs())) + g.norm_sq.iter().fold(0.0f64, |m, s| m.max(*s)).sqrt();
    let energy = grid.integrate(&u.iter().zip(&g.norm_sq).map(|(x, s)| x * x + s).collect::<Vec<_>>())?;
    Ok((r, eta, energy))
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeCheck {
    /// `d_H(K, B)`.
    pub lambda: f64,
    pub sup_grad: f64,
    /// `2√λ (1+λ)/(1-λ)`.
    pub bound: f64,
    pub ratio: f64,
}

/// `sup |∇u|` against `2√λ (1+λ)/(1-λ)`. The sup runs over the grid nodes
/// and, for axisymmetric bodies, a dense meridian that reaches the poles.
pub fn slope_bound_check(body: &ConvexBody, grid: &SphereGrid) -> Result<SlopeCheck> {
    let lambda = hausdorff_to_shifted_ball(body, grid, &Vec3::zeros())?;
    if lambda >= SLOPE_REGIME {
        return Err(Error::Regime { dist: lambda, bound: SLOPE_REGIME });
    }
    let mut sup = 0.0f64;
    for w in grid.nodes() {
        sup = sup.max(body.radial_and_gradient(w)?.1.norm());
    }
    if body.is_axisymmetric() {
        for theta in meridian_scan() {
            sup = sup.max(body.radial_and_gradient(&direction(theta, 0.0))?.1.norm());
        }
    }
    let bound = 2.0 * lambda.sqrt() * (1.0 + lambda) / (1.0 - lambda);
    let ratio = if bound > 0.0 { sup / bound } else { 0.0 };
    Ok(SlopeCheck { lambda, sup_grad: sup, bound, ratio })
}

/// Colatitudes uniform on `[0, π]` plus geometric clusters at both poles.
fn meridian_scan() -> Vec<f64> {
    let mut t: Vec<f64> = (0..=4000).map(|k| PI * k as f64 / 4000.0).collect();
    for k in 0..60 {
        let x = 1e-9 * 1.4f64.powi(k);
        if x < 1e-2 {
            t.push(x);
            t.push(PI - x);
        }
    }
    t.retain(|x| *x >= 1e-9 && *x <= PI - 1e-9);
    t
}

/// `∫ |∇v|²`: spectral on Gauss-Legendre grids, otherwise the lattice
/// energy in the conformal coordinate `s = log tan(θ/2)`, where the sphere's
/// Dirichlet integral is the flat one of the `(s, φ)` cylinder.
pub fn dirichlet_energy(field: &RadialField) -> Result<f64> {
    match field.grid().rule() {
        ColatitudeRule::GaussLegendre => Ok(field.spectrum()?.dirichlet_energy()),
        ColatitudeRule::PolarGraded => Ok(lattice_dirichlet_energy(field.grid(), field.values())),
    }
}

/// P1 lattice energy between rings in `s`, plus first differences in `φ`.
/// Values are taken constant beyond the first and last rings.
pub fn lattice_dirichlet_energy(grid: &SphereGrid, v: &[f64]) -> f64 {
    let n_phi = grid.n_phi();
    let dphi = 2.0 * PI / n_phi as f64;
    let s: Vec<f64> = grid.theta_nodes().iter().map(|t| (0.5 * t).tan().ln()).collect();
    let mut e = 0.0;
    for i in 0..grid.n_theta() - 1 {
        let ds = s[i + 1] - s[i];
        for j in 0..n_phi {
            let d = v[grid.index(i + 1, j)] - v[grid.index(i, j)];
            e += d * d / ds * dphi;
        }
    }
    for (i, t) in grid.theta_nodes().iter().enumerate() {
        let width = grid.ring_weights()[i] / t.sin().powi(2);
        for j in 0..n_phi {
            let d = v[grid.index(i, (j + 1) % n_phi)] - v[grid.index(i, j)];
            e += width * d * d / dphi;
        }
    }
    e
}

#[derive(Debug, Clone, Copy)]
pub struct CapacityCheck {
    pub energy: f64,
    /// `2πh² / |log a|`.
    pub bound: f64,
    pub ratio: f64,
    pub l2_norm: f64,
    pub nodes_in_disk: usize,
    pub pass: bool,
}

/// Checks `∫|∇v|² ≥ (1 - band) · 2πh²/|log a|` for a field holding height
/// `h` on the disk of radius `a`.
pub fn capacity_lower_bound_check(
    v: &RadialField,
    disk: &GeodesicDisk,
    h: f64,
    band: f64,
) -> Result<CapacityCheck> {
    let grid = v.grid();
    let mask = disk_mask(grid, disk);
    let nodes_in_disk = mask.iter().filter(|m| **m).count();
    if nodes_in_disk < MIN_DISK_NODES {
        return Err(Error::InvalidDisk(format!(
            "only {nodes_in_disk} grid nodes inside the disk, need {MIN_DISK_NODES}"
        )));
    }
    if let Some((_, x)) = v.values().iter().zip(&mask).filter(|(_, m)| **m).find(|(x, _)| **x < h) {
        return Err(Error::Hypothesis(format!("v = {x} < h = {h} inside the disk")));
    }
    let l2_norm = grid.integrate(&v.values().iter().map(|x| x * x).collect::<Vec<_>>())?.sqrt();
    if l2_norm > h / 3.0 {
        return Err(Error::Hypothesis(format!("‖v‖ = {l2_norm} exceeds h/3 = {}", h / 3.0)));
    }
    let energy = dirichlet_energy(v)?;
    let bound = 2.0 * PI * h * h / disk.radius().ln().abs();
    let ratio = energy / bound;
    Ok(CapacityCheck { energy, bound, ratio, l2_norm, nodes_in_disk, pass: ratio >= 1.0 - band })
}

/// Zonal log-cap profile `h · clamp(log(ρ₀/θ)/log(ρ₀/a), 0, 1)`.
pub fn log_cap_profile(grid: std::sync::Arc<SphereGrid>, h: f64, a: f64, rho0: f64) -> Result<RadialField> {
    let l = (rho0 / a).ln();
    RadialField::from_fn(grid, |w| {
        let theta = w.z.clamp(-1.0, 1.0).acos();
        h * ((rho0 / theta).ln() / l).clamp(0.0, 1.0)
    })
}

/// Exact Dirichlet integral of the log-cap profile on the sphere.
pub fn log_cap_energy(h: f64, a: f64, rho0: f64) -> f64 {
    let l = (rho0 / a).ln();
    let integral = crate::quadrature::integrate(|t| t.sin() / (t * t), a, rho0, 1e-13, &[]);
    2.0 * PI * h * h / (l * l) * integral
}

/// Mean of `v` over each colatitude ring about `pole`, which must be `±e₃`.
pub fn circular_means(v: &RadialField, pole: &Vec3) -> Result<Vec<f64>> {
    let grid = v.grid();
    let north = (pole - Vec3::z()).norm() < 1e-12;
    let south = (pole + Vec3::z()).norm() < 1e-12;
    if !north && !south {
        return Err(Error::Hypothesis("pole must be aligned with the grid axis".into()));
    }
    let n_phi = grid.n_phi();
    let mut means: Vec<f64> = (0..grid.n_theta())
        .map(|i| (0..n_phi).map(|j| v.values()[grid.index(i, j)]).sum::<f64>() / n_phi as f64)
        .collect();
    if south {
        means.reverse();
    }
    Ok(means)
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationCheck {
    pub lambda: f64,
    pub alpha: f64,
    /// `c_α λ` with `c_α = (1 - α)/2`.
    pub radius: f64,
    /// Extreme value of the radial displacement over the disk.
    pub extreme: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn propagation_radius(lambda: f64, alpha: f64) -> f64 {
    0.5 * (1.0 - alpha) * lambda
}

/// Outward propagation from a raised pole: `u ≥ αλ(1 - η)` on the polar
/// disk of radius `c_α λ`, sampled on 64 rings × 64 longitudes.
pub fn outward_propagation_check(body: &ConvexBody, lambda: f64, alpha: f64, eta: f64) -> Result<PropagationCheck> {
    let radius = propagation_radius(lambda, alpha);
    let mut extreme = f64::INFINITY;
    for i in 0..64 {
        let theta = radius * i as f64 / 64.0;
        for j in 0..64 {
            let w = direction(theta, 2.0 * PI * j as f64 / 64.0);
            extreme = extreme.min(body.radial(&w)? - 1.0);
        }
    }
    let threshold = alpha * lambda * (1.0 - eta);
    Ok(PropagationCheck { lambda, alpha, radius, extreme, threshold, pass: extreme >= threshold })
}

/// Inward propagation from a depressed pole: `ρ ≤ 1 - αλ(1 - η)` on the
/// grid nodes of the polar disk of radius `c_α λ`.
pub fn inward_propagation_check(field: &RadialField, lambda: f64, alpha: f64, eta: f64) -> Result<PropagationCheck> {
    let radius = propagation_radius(lambda, alpha);
    let disk = GeodesicDisk::new(Vec3::z(), radius)?;
    let mask = disk_mask(field.grid(), &disk);
    let inside: Vec<f64> =
        field.values().iter().zip(&mask).filter(|(_, m)| **m).map(|(u, _)| 1.0 + u).collect();
    if inside.is_empty() {
        return Err(Error::InvalidDisk(format!("no grid nodes within {radius} of the pole")));
    }
    let extreme = inside.iter().fold(f64::NEG_INFINITY, |m, r| m.max(*r));
    let threshold = 1.0 - alpha * lambda * (1.0 - eta);
    Ok(PropagationCheck { lambda, alpha, radius, extreme, threshold, pass: extreme <= threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{slab_cut_ball, ConeSides};
    use crate::harmonics::sample_harmonic;
    use crate::sphere_grid::{build_grid, build_polar_graded_grid};
    use std::sync::Arc;

    #[test]
    fn zero_field_has_no_remainder() {
        let g = Arc::new(build_grid(16, 32).unwrap());
        let f = RadialField::from_fn(g, |_| 0.0).unwrap();
        let r = fuglede_report(&f).unwrap();
        assert!(r.remainder.abs() < 1e-12 && r.quadratic_part == 0.0);
    }

    #[test]
    fn volume_corrected_y20() {
        let g = Arc::new(build_grid(48, 96).unwrap());
        let eps = 0.02;
        let y = sample_harmonic(&g, 2, 0);
        // Constant shift restoring the volume: (1/3)∫(1 + c + εY)³ = 4π/3.
        let vol = |c: f64| {
            let vals: Vec<f64> = y.iter().map(|v| (1.0 + c + eps * v).powi(3)).collect();
            g.integrate(&vals).unwrap() / 3.0
        };
        let (mut lo, mut hi) = (-0.01, 0.01);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if vol(mid) < UNIT_VOLUME {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        let f = RadialField::new(Arc::clone(&g), y.iter().map(|v| c + eps * v).collect()).unwrap();
        let r = fuglede_report(&f).unwrap();
        assert!((r.quadratic_part - 2.0 * eps * eps).abs() < 0.05 * 2.0 * eps * eps, "{}", r.quadratic_part);
        assert!((r.quadratic_part - r.quadratic_part_spectral).abs() < 1e-8 * r.quadratic_part.abs());
        assert!(r.remainder_ratio < 10.0);
    }

    #[test]
    fn volume_gate() {
        let g = Arc::new(build_grid(16, 32).unwrap());
        let f = RadialField::from_fn(g, |_| 0.01).unwrap();
        assert!(matches!(fuglede_report(&f), Err(Error::VolumeConstraint { .. })));
    }

    #[test]
    fn slope_checks() {
        let g = build_grid(64, 128).unwrap();
        let b = slope_bound_check(&ConvexBody::ball(1.0).unwrap(), &g).unwrap();
        assert!(b.sup_grad < 1e-12);
        assert_eq!(b.ratio, 0.0);
        let lambda = 1e-3;
        let cone = slope_bound_check(&ConvexBody::cone_hull(lambda, ConeSides::Two).unwrap(), &g).unwrap();
        let r = cone.sup_grad / (2.0 * lambda).sqrt();
        assert!((0.9..=1.05).contains(&r), "{r}");
        assert!(cone.ratio <= 1.0);
        let s = slope_bound_check(&ConvexBody::unit_volume_spheroid(1.2).unwrap(), &g).unwrap();
        assert!(s.ratio < 1.0);
        let far = ConvexBody::unit_volume_spheroid(3.0).unwrap();
        assert!(matches!(slope_bound_check(&far, &g), Err(Error::Regime { .. })));
    }

    #[test]
    fn log_cap_capacity() {
        let g = Arc::new(build_polar_graded_grid(1e-4, 8, 4, 8).unwrap());
        let (h, a, rho0) = (1.0, 1e-3, 0.5);
        let v = log_cap_profile(Arc::clone(&g), h, a, rho0).unwrap();
        let disk = GeodesicDisk::new(Vec3::z(), a).unwrap();
        let c = capacity_lower_bound_check(&v, &disk, h, CAPACITY_BAND).unwrap();
        let flat = 2.0 * PI * h * h / (rho0 / a).ln();
        let exact = log_cap_energy(h, a, rho0);
        assert!((c.energy - exact).abs() < 5e-3 * exact, "{} vs {exact}", c.energy);
        assert!((0.99..=1.10).contains(&(c.energy / flat)));
        assert!(c.pass && c.ratio >= 0.85);

        let a2 = 1e-2;
        let v2 = log_cap_profile(Arc::clone(&g), h, a2, rho0).unwrap();
        let c2 = capacity_lower_bound_check(&v2, &GeodesicDisk::new(Vec3::z(), a2).unwrap(), h, CAPACITY_BAND).unwrap();
        assert!(c2.bound > c.bound && c2.pass);

        let constant = RadialField::from_fn(Arc::clone(&g), |_| h).unwrap();
        assert!(matches!(capacity_lower_bound_check(&constant, &disk, h, CAPACITY_BAND), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn means_on_rings() {
        let g = Arc::new(build_grid(24, 48).unwrap());
        let c = RadialField::from_fn(Arc::clone(&g), |_| 0.3).unwrap();
        assert!(circular_means(&c, &Vec3::z()).unwrap().iter().all(|m| (m - 0.3).abs() < 1e-15));
        let y20 = RadialField::new(Arc::clone(&g), sample_harmonic(&g, 2, 0)).unwrap();
        let m = circular_means(&y20, &Vec3::z()).unwrap();
        for (i, mi) in m.iter().enumerate() {
            assert!((mi - y20.values()[g.index(i, 0)]).abs() < 1e-12);
        }
        let y22 = RadialField::new(Arc::clone(&g), sample_harmonic(&g, 2, 2)).unwrap();
        assert!(circular_means(&y22, &-Vec3::z()).unwrap().iter().all(|m| m.abs() < 1e-10));
        assert!(circular_means(&y22, &Vec3::x()).is_err());
    }

    #[test]
    fn propagation_on_cones_and_slabs() {
        let g = Arc::new(build_polar_graded_grid(1e-4, 4, 4, 16).unwrap());
        for lambda in [0.1, 0.05, 0.02] {
            let cone = ConvexBody::cone_hull(lambda, ConeSides::One).unwrap();
            let slab = slab_cut_ball(Arc::clone(&g), lambda).unwrap();
            for alpha in [0.5, 0.8] {
                assert!(outward_propagation_check(&cone, lambda, alpha, 0.1).unwrap().pass);
                assert!(inward_propagation_check(&slab, lambda, alpha, 0.1).unwrap().pass);
            }
        }
    }
}

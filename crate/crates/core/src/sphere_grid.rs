//! Tensor quadrature on the unit sphere, geodesic disks and spectral
//! tangential differentiation.
//!
//! Nodes are stored ring by ring: index `i * n_phi + j` is colatitude ring
//! `i` (increasing from the north pole) and longitude `j`.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::harmonics;

pub type Vec3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-10;

/// Colatitude rule a grid was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColatitudeRule {
    /// Gauss-Legendre in `cos θ`; supports exact harmonic analysis.
    GaussLegendre,
    /// Composite Gauss-Legendre panels in `θ`, graded geometrically towards
    /// the north pole. Resolves small polar caps; no spectral operations.
    PolarGraded,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    n_theta: usize,
    n_phi: usize,
    theta_nodes: Vec<f64>,
    ring_weights: Vec<f64>,
    phi_nodes: Vec<f64>,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    rule: ColatitudeRule,
}

/// Gauss-Legendre nodes (descending) and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    let dp = nf * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Unit vector at colatitude `theta` and longitude `phi`.
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

/// Colatitude and longitude (in `[0, 2π)`) of a nonzero vector.
pub fn angles(v: &Vec3) -> (f64, f64) {
    let rxy = v.x.hypot(v.y);
    let theta = rxy.atan2(v.z);
    let mut phi = v.y.atan2(v.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    (theta, phi)
}

/// Orthonormal tangent frame `(e_θ, e_φ)` at `(theta, phi)`.
pub fn tangent_frame(theta: f64, phi: f64) -> (Vec3, Vec3) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-sp, cp, 0.0))
}

pub(crate) fn check_unit(v: &Vec3) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::NotUnit { norm: n });
    }
    Ok(())
}

/// Gauss-Legendre in `cos θ` tensored with `n_phi` uniform longitudes.
pub fn build_grid(n_theta: usize, n_phi: usize) -> Result<SphereGrid> {
    if n_theta < 4 || n_phi < 8 {
        return Err(Error::DegenerateGrid { n_theta, n_phi });
    }
    let (x, w) = gauss_legendre(n_theta);
    let theta: Vec<f64> = x.iter().map(|z| z.clamp(-1.0, 1.0).acos()).collect();
    Ok(SphereGrid::from_rings(theta, w, n_phi, ColatitudeRule::GaussLegendre))
}

/// Tensor grid whose colatitude rule uses Gauss-Legendre panels graded
/// geometrically from `finest` up to one radian, with `panels_per_octave`
/// panels per doubling of `θ`, then uniform panels down to the south pole.
pub fn build_polar_graded_grid(
    finest: f64,
    panels_per_octave: usize,
    nodes_per_panel: usize,
    n_phi: usize,
) -> Result<SphereGrid> {
    if !(finest > 0.0 && finest < 0.5) || panels_per_octave == 0 || nodes_per_panel < 2 {
        return Err(Error::DegenerateGrid { n_theta: nodes_per_panel, n_phi });
    }
    if n_phi < 8 {
        return Err(Error::DegenerateGrid { n_theta: nodes_per_panel, n_phi });
    }
    let ratio = 2f64.powf(1.0 / panels_per_octave as f64);
    let mut breaks = vec![0.0, finest];
    while *breaks.last().unwrap() < 1.0 {
        let b = breaks.last().unwrap() * ratio;
        breaks.push(b);
    }
    let b = *breaks.last().unwrap();
    let width = b * (ratio - 1.0);
    let rest = ((PI - b) / width).ceil() as usize;
    let step = (PI - b) / rest as f64;
    for k in 1..=rest {
        breaks.push(b + k as f64 * step);
    }
    *breaks.last_mut().unwrap() = PI;

    let (gx, gw) = gauss_legendre(nodes_per_panel);
    let mut theta = Vec::new();
    let mut ring_w = Vec::new();
    for pair in breaks.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let half = 0.5 * (pair[1] - pair[0]);
        // gx is descending; walk it backwards to keep θ ascending.
        for k in (0..nodes_per_panel).rev() {
            let t = mid + half * gx[k];
            theta.push(t);
            ring_w.push(half * gw[k] * t.sin());
        }
    }
    Ok(SphereGrid::from_rings(theta, ring_w, n_phi, ColatitudeRule::PolarGraded))
}

impl SphereGrid {
    fn from_rings(theta: Vec<f64>, ring_weights: Vec<f64>, n_phi: usize, rule: ColatitudeRule) -> Self {
        let n_theta = theta.len();
        let dphi = 2.0 * PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (t, rw) in theta.iter().zip(&ring_weights) {
            for p in &phi {
                nodes.push(direction(*t, *p));
                weights.push(rw * dphi);
            }
        }
        SphereGrid {
            n_theta,
            n_phi,
            theta_nodes: theta,
            ring_weights,
            phi_nodes: phi,
            nodes,
            weights,
            rule,
        }
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn theta_nodes(&self) -> &[f64] {
        &self.theta_nodes
    }

    pub fn phi_nodes(&self) -> &[f64] {
        &self.phi_nodes
    }

    /// Colatitude weights (integrating `sin θ dθ`), one per ring.
    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weights
    }

    pub fn rule(&self) -> ColatitudeRule {
        self.rule
    }

    pub fn index(&self, ring: usize, col: usize) -> usize {
        ring * self.n_phi + col
    }

    pub fn ring_of(&self, index: usize) -> usize {
        index / self.n_phi
    }

    /// Largest degree `L` for which analysis and synthesis round-trip exactly.
    pub fn band_limit(&self) -> usize {
        self.n_theta.saturating_sub(1).min((self.n_phi - 1) / 2)
    }

    /// Index of the antipodal node, when the grid contains it.
    pub fn antipode(&self, index: usize) -> Option<usize> {
        if self.rule != ColatitudeRule::GaussLegendre || !self.n_phi.is_multiple_of(2) {
            return None;
        }
        let ring = index / self.n_phi;
        let col = index % self.n_phi;
        Some(self.index(self.n_theta - 1 - ring, (col + self.n_phi / 2) % self.n_phi))
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: values.len() });
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Quadrature of a function evaluated at every node.
    pub fn integrate_fn<F: Fn(&Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(n, w)| w * f(n)).sum()
    }

    /// Vector-valued quadrature `∫ f(ω) ω dσ`.
    pub fn first_moment(&self, values: &[f64]) -> Result<Vec3> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: values.len() });
        }
        Ok(self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(values)
            .fold(Vec3::zeros(), |acc, ((n, w), v)| acc + n * (w * v)))
    }
}

/// Great-circle distance, in `[0, π]`.
pub fn geodesic_distance(a: &Vec3, b: &Vec3) -> Result<f64> {
    check_unit(a)?;
    check_unit(b)?;
    Ok(angle_between(a, b))
}

pub(crate) fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let dot = a.dot(b).clamp(-1.0, 1.0);
    a.cross(b).norm().atan2(dot)
}

#[derive(Debug, Clone, Copy)]
pub struct GeodesicDisk {
    center: Vec3,
    radius: f64,
}

impl GeodesicDisk {
    pub fn new(center: Vec3, radius: f64) -> Result<Self> {
        check_unit(&center).map_err(|_| Error::InvalidDisk(format!("center norm {}", center.norm())))?;
        if !(radius > 0.0 && radius < PI) {
            return Err(Error::InvalidDisk(format!("radius {radius} not in (0, π)")));
        }
        Ok(GeodesicDisk { center, radius })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, omega: &Vec3) -> bool {
        angle_between(omega, &self.center) < self.radius
    }
}

pub fn disk_mask(grid: &SphereGrid, disk: &GeodesicDisk) -> Vec<bool> {
    grid.nodes().iter().map(|n| disk.contains(n)).collect()
}

/// Tangential gradient of a grid function, synthesized from its spectrum.
#[derive(Debug, Clone)]
pub struct SurfaceGradient {
    /// `∂_θ u` per node.
    pub d_theta: Vec<f64>,
    /// `(1/sin θ) ∂_φ u` per node.
    pub d_phi: Vec<f64>,
    pub norm_sq: Vec<f64>,
    /// Fraction of the non-constant L² energy carried by the top tenth of degrees.
    pub top_degree_fraction: f64,
    pub unresolved: bool,
}

pub fn surface_gradient(grid: &SphereGrid, u: &[f64]) -> Result<SurfaceGradient> {
    let degree = grid.band_limit();
    let spectrum = harmonics::analyze(grid, u, degree)?;
    let (d_theta, d_phi) = harmonics::synthesize_gradient(&spectrum, grid)?;
    let norm_sq = d_theta.iter().zip(&d_phi).map(|(a, b)| a * a + b * b).collect();
    let top_degree_fraction = spectrum.top_degree_fraction(0.1);
    Ok(SurfaceGradient {
        d_theta,
        d_phi,
        norm_sq,
        top_degree_fraction,
        unresolved: top_degree_fraction > 0.1,
    })
}

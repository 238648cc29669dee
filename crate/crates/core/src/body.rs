//! Convex bodies in ℝ³: support and radial functions, volume, surface area,
//! diameter, and a sampled convexity test.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harmonics::{self, HarmonicSpectrum};
use crate::quadrature;
use crate::sphere_grid::{
    angles, build_grid, direction, surface_gradient, tangent_frame, SphereGrid,
    SurfaceGradient, Vec3,
};

const MERIDIAN_TOL: f64 = 1e-13;
const MERIDIAN_SAMPLES: usize = 400;

/// A scalar grid function `u = ρ - 1` describing a star-shaped body.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
    spectrum: OnceLock<Option<HarmonicSpectrum>>,
}

impl RadialField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some((index, &u)) = values.iter().enumerate().find(|(_, u)| !(1.0 + **u > 0.0)) {
            return Err(Error::NonPositive { index, value: 1.0 + u });
        }
        Ok(RadialField { grid, values, spectrum: OnceLock::new() })
    }

    /// Samples `u(ω)` at every node.
    pub fn from_fn<F: Fn(&Vec3) -> f64>(grid: Arc<SphereGrid>, u: F) -> Result<Self> {
        let values = grid.nodes().iter().map(u).collect();
        Self::new(grid, values)
    }

    /// Samples `ρ(ω) - 1` of a body.
    pub fn from_body(grid: Arc<SphereGrid>, body: &ConvexBody) -> Result<Self> {
        let values = grid.nodes().iter().map(|w| body.radial(w).map(|r| r - 1.0)).collect::<Result<_>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<SphereGrid> {
        Arc::clone(&self.grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rho_values(&self) -> Vec<f64> {
        self.values.iter().map(|u| 1.0 + u).collect()
    }

    /// Harmonic coefficients of `u` up to the grid band limit.
    pub fn spectrum(&self) -> Result<&HarmonicSpectrum> {
        self.spectrum
            .get_or_init(|| harmonics::analyze(&self.grid, &self.values, self.grid.band_limit()).ok())
            .as_ref()
            .ok_or(Error::NotSpectralGrid)
    }

    pub fn gradient(&self) -> Result<SurfaceGradient> {
        surface_gradient(&self.grid, &self.values)
    }

    /// `u` at an arbitrary direction: band-limited interpolation on
    /// Gauss-Legendre grids, bilinear in `(θ, φ)` otherwise.
    pub fn u_at(&self, omega: &Vec3) -> f64 {
        match self.spectrum() {
            Ok(s) => s.eval(omega),
            Err(_) => self.bilinear(omega),
        }
    }

    pub fn rho_at(&self, omega: &Vec3) -> f64 {
        1.0 + self.u_at(omega)
    }

    fn bilinear(&self, omega: &Vec3) -> f64 {
        let g = &self.grid;
        let (theta, phi) = angles(omega);
        let th = g.theta_nodes();
        let n_phi = g.n_phi();
        let dphi = 2.0 * PI / n_phi as f64;
        let jf = phi / dphi;
        let j0 = (jf.floor() as usize) % n_phi;
        let j1 = (j0 + 1) % n_phi;
        let tphi = jf - jf.floor();
        let ring_value = |i: usize| {
            (1.0 - tphi) * self.values[g.index(i, j0)] + tphi * self.values[g.index(i, j1)]
        };
        let pole_mean = |i: usize| -> f64 {
            (0..n_phi).map(|j| self.values[g.index(i, j)]).sum::<f64>() / n_phi as f64
        };
        let last = th.len() - 1;
        if theta <= th[0] {
            let t = theta / th[0];
            return (1.0 - t) * pole_mean(0) + t * ring_value(0);
        }
        if theta >= th[last] {
            let t = (PI - theta) / (PI - th[last]);
            return (1.0 - t) * pole_mean(last) + t * ring_value(last);
        }
        let i1 = th.partition_point(|&t| t < theta);
        let i0 = i1 - 1;
        let t = (theta - th[i0]) / (th[i1] - th[i0]);
        (1.0 - t) * ring_value(i0) + t * ring_value(i1)
    }
}

/// Which poles of the unit ball are raised to a cone apex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeSides {
    One,
    Two,
}

#[derive(Debug, Clone)]
pub enum ConvexBody {
    Ball {
        radius: f64,
        center: Vec3,
    },
    /// `(x² + y²)/a² + z²/c² ≤ 1`, translated to `center`.
    Spheroid {
        a: f64,
        c: f64,
        center: Vec3,
    },
    /// Convex hull of the unit ball and the apex `(1 + λ) e₃` (and its mirror).
    ConeHull {
        lambda: f64,
        sides: ConeSides,
    },
    /// `(r/a)^p + (|z|/c)^p ≤ 1` with `r² = x² + y²` and `p > 1`.
    Superspheroid {
        a: f64,
        c: f64,
        exponent: f64,
    },
    /// `ρ = ρ_base · exp(Σ c_lm Y_lm)`.
    Modulated {
        base: Box<ConvexBody>,
        log_modulation: HarmonicSpectrum,
        cloud: PointCloudCache,
    },
    SampledRadial {
        field: RadialField,
        claimed_convex: bool,
    },
    Translate {
        base: Box<ConvexBody>,
        shift: Vec3,
    },
    Scaled {
        base: Box<ConvexBody>,
        factor: f64,
    },
}

/// Lazily built boundary samples of a non-axisymmetric modulated body.
#[derive(Debug, Clone, Default)]
pub struct PointCloudCache(OnceLock<Vec<Vec3>>);

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBody(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ConvexBody {
    pub fn ball(radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Ok(ConvexBody::Ball { radius, center: Vec3::zeros() })
    }

    pub fn ball_at(radius: f64, center: Vec3) -> Result<Self> {
        positive("radius", radius)?;
        Ok(ConvexBody::Ball { radius, center })
    }

    pub fn spheroid(a: f64, c: f64) -> Result<Self> {
        positive("a", a)?;
        positive("c", c)?;
        Ok(ConvexBody::Spheroid { a, c, center: Vec3::zeros() })
    }

    /// Spheroid of unit-ball volume with polar semiaxis `c` (`a = c^{-1/2}`).
    pub fn unit_volume_spheroid(c: f64) -> Result<Self> {
        Self::spheroid(c.powf(-0.5), c)
    }

    pub fn cone_hull(lambda: f64, sides: ConeSides) -> Result<Self> {
        positive("lambda", lambda)?;
        Ok(ConvexBody::ConeHull { lambda, sides })
    }

    pub fn superspheroid(a: f64, c: f64, exponent: f64) -> Result<Self> {
        positive("a", a)?;
        positive("c", c)?;
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(Error::InvalidBody(format!("exponent must exceed 1, got {exponent}")));
        }
        Ok(ConvexBody::Superspheroid { a, c, exponent })
    }

    pub fn modulated(base: ConvexBody, log_modulation: HarmonicSpectrum) -> Self {
        ConvexBody::Modulated { base: Box::new(base), log_modulation, cloud: PointCloudCache::default() }
    }

    pub fn sampled(field: RadialField, claimed_convex: bool) -> Self {
        ConvexBody::SampledRadial { field, claimed_convex }
    }

    /// `self + shift`; balls and spheroids absorb the shift into their center.
    pub fn translated(&self, shift: Vec3) -> Self {
        match self {
            ConvexBody::Ball { radius, center } => ConvexBody::Ball { radius: *radius, center: center + shift },
            ConvexBody::Spheroid { a, c, center } => ConvexBody::Spheroid { a: *a, c: *c, center: center + shift },
            ConvexBody::Translate { base, shift: s } => ConvexBody::Translate { base: base.clone(), shift: s + shift },
            _ => ConvexBody::Translate { base: Box::new(self.clone()), shift },
        }
    }

    /// `factor · self`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        positive("scale factor", factor)?;
        Ok(match self {
            ConvexBody::Ball { radius, center } => ConvexBody::Ball { radius: radius * factor, center: center * factor },
            ConvexBody::Spheroid { a, c, center } => {
                ConvexBody::Spheroid { a: a * factor, c: c * factor, center: center * factor }
            }
            ConvexBody::Superspheroid { a, c, exponent } => {
                ConvexBody::Superspheroid { a: a * factor, c: c * factor, exponent: *exponent }
            }
            ConvexBody::Scaled { base, factor: f } => ConvexBody::Scaled { base: base.clone(), factor: f * factor },
            _ => ConvexBody::Scaled { base: Box::new(self.clone()), factor },
        })
    }

    /// Uniformly rescaled copy of volume `4π/3`.
    pub fn normalized_to_unit_volume(&self, grid: &SphereGrid) -> Result<Self> {
        let v = self.volume(grid)?;
        self.scaled((4.0 * PI / 3.0 / v).cbrt())
    }

    /// True when the body is a surface of revolution about the `e₃` axis.
    pub fn is_axisymmetric(&self) -> bool {
        match self {
            ConvexBody::Ball { center, .. } | ConvexBody::Spheroid { center, .. } => center.x == 0.0 && center.y == 0.0,
            ConvexBody::ConeHull { .. } | ConvexBody::Superspheroid { .. } => true,
            ConvexBody::Modulated { base, log_modulation, .. } => {
                base.is_axisymmetric() && log_modulation.iter().all(|(_, m, c)| m == 0 || c == 0.0)
            }
            ConvexBody::SampledRadial { .. } => false,
            ConvexBody::Translate { base, shift } => base.is_axisymmetric() && shift.x == 0.0 && shift.y == 0.0,
            ConvexBody::Scaled { base, .. } => base.is_axisymmetric(),
        }
    }

    /// True when the support function has a closed form.
    pub fn has_analytic_support(&self) -> bool {
        match self {
            ConvexBody::Ball { .. }
            | ConvexBody::Spheroid { .. }
            | ConvexBody::ConeHull { .. }
            | ConvexBody::Superspheroid { .. } => true,
            ConvexBody::Modulated { .. } | ConvexBody::SampledRadial { .. } => false,
            ConvexBody::Translate { base, .. } | ConvexBody::Scaled { base, .. } => base.has_analytic_support(),
        }
    }

    /// `h(ν) = sup { x·ν : x ∈ K }`.
    pub fn support(&self, nu: &Vec3) -> Result<f64> {
        match self {
            ConvexBody::Ball { radius, center } => Ok(radius + center.dot(nu)),
            ConvexBody::Spheroid { a, c, center } => {
                Ok((a * a * (nu.x * nu.x + nu.y * nu.y) + c * c * nu.z * nu.z).sqrt() + center.dot(nu))
            }
            ConvexBody::ConeHull { lambda, sides } => {
                let apex = match sides {
                    ConeSides::One => (1.0 + lambda) * nu.z,
                    ConeSides::Two => (1.0 + lambda) * nu.z.abs(),
                };
                Ok(apex.max(1.0))
            }
            ConvexBody::Superspheroid { a, c, exponent } => {
                let q = exponent / (exponent - 1.0);
                let r = (a * nu.x.hypot(nu.y)).powf(q) + (c * nu.z.abs()).powf(q);
                Ok(r.powf(1.0 / q))
            }
            ConvexBody::Modulated { cloud, .. } => {
                if self.is_axisymmetric() {
                    let (beta, _) = angles(nu);
                    Ok(nu.norm() * self.meridian_support_numeric(beta)?)
                } else {
                    let pts = cloud.0.get_or_init(|| self.boundary_cloud());
                    Ok(cloud_support(pts, nu))
                }
            }
            ConvexBody::SampledRadial { field, claimed_convex } => {
                if !claimed_convex {
                    return Err(Error::UnsupportedSupport);
                }
                let best = field
                    .grid()
                    .nodes()
                    .iter()
                    .zip(field.values())
                    .map(|(w, u)| (1.0 + u) * w.dot(nu))
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(best)
            }
            ConvexBody::Translate { base, shift } => Ok(base.support(nu)? + shift.dot(nu)),
            ConvexBody::Scaled { base, factor } => Ok(factor * base.support(nu)?),
        }
    }

    fn boundary_cloud(&self) -> Vec<Vec3> {
        let grid = build_grid(96, 192).expect("static grid size");
        grid.nodes().iter().filter_map(|w| self.radial(w).ok().map(|r| w * r)).collect()
    }

    /// Support value at colatitude `beta` (longitude 0) of an axisymmetric
    /// body.
    pub fn meridian_support(&self, beta: f64) -> Result<f64> {
        if self.has_analytic_support() {
            self.support(&direction(beta, 0.0))
        } else {
            self.meridian_support_numeric(beta)
        }
    }

    /// `max_θ ρ(θ) cos(θ - β)` over the meridian half-plane.
    fn meridian_support_numeric(&self, beta: f64) -> Result<f64> {
        let g = |t: f64| self.radial(&direction(t, 0.0)).map(|r| r * (t - beta).cos());
        let n = MERIDIAN_SAMPLES;
        let step = PI / (n - 1) as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for k in 0..n {
            let v = g(k as f64 * step)?;
            if v > best.1 {
                best = (k, v);
            }
        }
        let lo = (best.0.saturating_sub(1)) as f64 * step;
        let hi = ((best.0 + 1).min(n - 1)) as f64 * step;
        let (_, v) = quadrature::golden_max(|t| g(t).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-10);
        Ok(v.max(best.1))
    }

    /// `ρ(ω) = max { t ≥ 0 : tω ∈ K }`.
    pub fn radial(&self, omega: &Vec3) -> Result<f64> {
        match self {
            ConvexBody::Ball { radius, center } => {
                if center.norm() >= *radius {
                    return Err(Error::OriginNotInterior);
                }
                let b = omega.dot(center);
                Ok(b + (b * b - center.norm_squared() + radius * radius).sqrt())
            }
            ConvexBody::Spheroid { a, c, center } => {
                let d = Vec3::new(1.0 / (a * a), 1.0 / (a * a), 1.0 / (c * c));
                let cq = center.component_mul(&d).dot(center) - 1.0;
                if cq >= 0.0 {
                    return Err(Error::OriginNotInterior);
                }
                let aq = omega.component_mul(&d).dot(omega);
                let bq = omega.component_mul(&d).dot(center);
                Ok((bq + (bq * bq - aq * cq).sqrt()) / aq)
            }
            ConvexBody::ConeHull { .. } | ConvexBody::Superspheroid { .. } => {
                let (theta, _) = angles(omega);
                Ok(self.meridian_profile(theta).0)
            }
            ConvexBody::Modulated { base, log_modulation, .. } => {
                Ok(base.radial(omega)? * log_modulation.eval(omega).exp())
            }
            ConvexBody::SampledRadial { field, .. } => Ok(field.rho_at(omega)),
            ConvexBody::Translate { base, shift } => translate_ray_exit(base, shift, omega),
            ConvexBody::Scaled { base, factor } => Ok(factor * base.radial(omega)?),
        }
    }

    /// `ρ` and `dρ/dθ` at colatitude `theta` for the closed-form
    /// axisymmetric profiles.
    fn meridian_profile(&self, theta: f64) -> (f64, f64) {
        match *self {
            ConvexBody::ConeHull { lambda, sides } => {
                let (t, sign) = match sides {
                    ConeSides::Two if theta > PI / 2.0 => (PI - theta, -1.0),
                    _ => (theta, 1.0),
                };
                let theta0 = (1.0 / (1.0 + lambda)).acos();
                if t <= theta0 {
                    let s = (2.0 * lambda + lambda * lambda).sqrt();
                    let (st, ct) = t.sin_cos();
                    let den = ct + st * s;
                    let rho = (1.0 + lambda) / den;
                    let drho = -(1.0 + lambda) * (-st + s * ct) / (den * den);
                    (rho, sign * drho)
                } else {
                    (1.0, 0.0)
                }
            }
            ConvexBody::Superspheroid { a, c, exponent: p } => {
                let (s, k) = theta.sin_cos();
                let x = s / a;
                let y = k.abs() / c;
                let g = x.powf(p) + y.powf(p);
                let rho = g.powf(-1.0 / p);
                let dg = x.powf(p - 1.0) * k / a - y.powf(p - 1.0) * k.signum() * s / c;
                (rho, -rho / g * dg)
            }
            _ => unreachable!("closed-form meridian profile requested for {self:?}"),
        }
    }

    /// `ρ(ω)` and the tangential gradient `∇_S ρ(ω)`.
    pub fn radial_and_gradient(&self, omega: &Vec3) -> Result<(f64, Vec3)> {
        match self {
            ConvexBody::Ball { .. } | ConvexBody::Spheroid { .. } => {
                let rho = self.radial(omega)?;
                let x = omega * rho;
                let n = match self {
                    ConvexBody::Ball { center, .. } => x - center,
                    ConvexBody::Spheroid { a, c, center } => {
                        (x - center).component_mul(&Vec3::new(1.0 / (a * a), 1.0 / (a * a), 1.0 / (c * c)))
                    }
                    _ => unreachable!(),
                };
                Ok((rho, gradient_from_normal(rho, &n, omega)))
            }
            ConvexBody::ConeHull { .. } | ConvexBody::Superspheroid { .. } => {
                let (theta, phi) = angles(omega);
                let (rho, drho) = self.meridian_profile(theta);
                let (et, _) = tangent_frame(theta, phi);
                Ok((rho, et * drho))
            }
            ConvexBody::Modulated { base, log_modulation, .. } => {
                let (rb, gb) = base.radial_and_gradient(omega)?;
                let (m, gm) = log_modulation.eval_with_gradient(omega, true);
                let rho = rb * m.exp();
                Ok((rho, (gb / rb + gm) * rho))
            }
            ConvexBody::SampledRadial { field, .. } => {
                let s = field.spectrum()?;
                let (u, g) = s.eval_with_gradient(omega, true);
                Ok((1.0 + u, g))
            }
            ConvexBody::Translate { base, shift } => {
                let rho = translate_ray_exit(base, shift, omega)?;
                let p = omega * rho - shift;
                let pn = p.norm();
                let (rb, gb) = base.radial_and_gradient(&(p / pn))?;
                let n = (p / pn) * rb - gb;
                Ok((rho, gradient_from_normal(rho, &n, omega)))
            }
            ConvexBody::Scaled { base, factor } => {
                let (r, g) = base.radial_and_gradient(omega)?;
                Ok((factor * r, g * *factor))
            }
        }
    }

    /// Outward unit normal at the boundary point in direction `omega`.
    pub fn outward_normal(&self, omega: &Vec3) -> Result<Vec3> {
        let (rho, g) = self.radial_and_gradient(omega)?;
        Ok((omega * rho - g).normalize())
    }

    /// Membership test; requires the origin in the interior.
    pub fn contains(&self, x: &Vec3) -> Result<bool> {
        match self {
            ConvexBody::Ball { radius, center } => Ok((x - center).norm() <= *radius),
            ConvexBody::Spheroid { a, c, center } => {
                let d = x - center;
                Ok((d.x * d.x + d.y * d.y) / (a * a) + d.z * d.z / (c * c) <= 1.0)
            }
            ConvexBody::Translate { base, shift } => base.contains(&(x - shift)),
            _ => {
                let r = x.norm();
                if r == 0.0 {
                    return Ok(true);
                }
                Ok(r <= self.radial(&(x / r))?)
            }
        }
    }

    /// Strict interiority of the origin.
    pub fn origin_interior(&self) -> bool {
        match self {
            ConvexBody::Ball { radius, center } => center.norm() < *radius,
            ConvexBody::Spheroid { a, c, center } => {
                (center.x * center.x + center.y * center.y) / (a * a) + center.z * center.z / (c * c) < 1.0
            }
            ConvexBody::Translate { base, shift } => {
                let s = shift.norm();
                s == 0.0 || base.radial(&(-shift / s)).map(|r| s < r).unwrap_or(false)
            }
            ConvexBody::Modulated { base, .. } | ConvexBody::Scaled { base, .. } => base.origin_interior(),
            _ => true,
        }
    }

    /// Closed-form volume when available.
    pub fn volume_analytic(&self) -> Option<f64> {
        match self {
            ConvexBody::Ball { radius, .. } => Some(4.0 / 3.0 * PI * radius.powi(3)),
            ConvexBody::Spheroid { a, c, .. } => Some(4.0 / 3.0 * PI * a * a * c),
            ConvexBody::ConeHull { lambda, sides } => {
                let (cap, cone) = cone_pieces(*lambda);
                let k = if *sides == ConeSides::Two { 2.0 } else { 1.0 };
                Some(4.0 / 3.0 * PI + k * (cone.volume - cap.volume))
            }
            ConvexBody::Translate { base, .. } => base.volume_analytic(),
            ConvexBody::Scaled { base, factor } => base.volume_analytic().map(|v| v * factor.powi(3)),
            _ => None,
        }
    }

    /// Closed-form surface area when available.
    pub fn area_analytic(&self) -> Option<f64> {
        match self {
            ConvexBody::Ball { radius, .. } => Some(4.0 * PI * radius * radius),
            ConvexBody::Spheroid { a, c, .. } => Some(spheroid_area(*a, *c)),
            ConvexBody::ConeHull { lambda, sides } => {
                let (cap, cone) = cone_pieces(*lambda);
                let k = if *sides == ConeSides::Two { 2.0 } else { 1.0 };
                Some(4.0 * PI + k * (cone.area - cap.area))
            }
            ConvexBody::Translate { base, .. } => base.area_analytic(),
            ConvexBody::Scaled { base, factor } => base.area_analytic().map(|v| v * factor * factor),
            _ => None,
        }
    }

    /// Colatitudes where the meridian profile has a kink.
    fn meridian_kinks(&self) -> Vec<f64> {
        match self {
            ConvexBody::ConeHull { lambda, sides } => {
                let t0 = (1.0 / (1.0 + lambda)).acos();
                match sides {
                    ConeSides::One => vec![t0],
                    ConeSides::Two => vec![t0, PI - t0],
                }
            }
            ConvexBody::Scaled { base, .. } | ConvexBody::Modulated { base, .. } => base.meridian_kinks(),
            _ => Vec::new(),
        }
    }

    /// `(ρ, ∂_θ ρ)` along the `φ = 0` meridian.
    fn meridian_pair(&self, theta: f64) -> Result<(f64, f64)> {
        let (rho, g) = self.radial_and_gradient(&direction(theta, 0.0))?;
        let (et, _) = tangent_frame(theta, 0.0);
        Ok((rho, g.dot(&et)))
    }

    fn meridian_integral<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> Result<f64> {
        if !self.origin_interior() {
            return Err(Error::OriginNotInterior);
        }
        let kinks = self.meridian_kinks();
        let v = quadrature::integrate(
            |t| match self.meridian_pair(t) {
                Ok((r, dr)) => f(t, r, dr),
                Err(_) => f64::NAN,
            },
            0.0,
            PI,
            MERIDIAN_TOL,
            &kinks,
        );
        if v.is_finite() {
            Ok(2.0 * PI * v)
        } else {
            Err(Error::OriginNotInterior)
        }
    }

    /// `(1/3) ∫ ρ³ dσ` by quadrature: adaptive along the meridian for
    /// axisymmetric bodies, on `grid` otherwise.
    pub fn volume_by_quadrature(&self, grid: &SphereGrid) -> Result<f64> {
        if self.is_axisymmetric() {
            return self.meridian_integral(|t, r, _| r.powi(3) * t.sin() / 3.0);
        }
        self.volume_on_grid(grid)
    }

    pub fn volume_on_grid(&self, grid: &SphereGrid) -> Result<f64> {
        let rho = self.radial_samples(grid)?;
        Ok(grid.integrate(&rho.iter().map(|r| r.powi(3)).collect::<Vec<_>>())? / 3.0)
    }

    /// `∫ ρ √(ρ² + |∇ρ|²) dσ` by quadrature, with the same routing as
    /// [`Self::volume_by_quadrature`].
    pub fn area_by_quadrature(&self, grid: &SphereGrid) -> Result<f64> {
        if self.is_axisymmetric() {
            return self.meridian_integral(|t, r, dr| r * (r * r + dr * dr).sqrt() * t.sin());
        }
        self.area_on_grid(grid)
    }

    pub fn area_on_grid(&self, grid: &SphereGrid) -> Result<f64> {
        if let ConvexBody::SampledRadial { field, .. } = self {
            let g = field.gradient()?;
            if g.unresolved {
                return Err(Error::UnresolvedGradient { fraction: g.top_degree_fraction });
            }
            let integrand: Vec<f64> = field
                .values()
                .iter()
                .zip(&g.norm_sq)
                .map(|(u, gs)| (1.0 + u) * ((1.0 + u).powi(2) + gs).sqrt())
                .collect();
            return field.grid().integrate(&integrand);
        }
        if !self.origin_interior() {
            return Err(Error::OriginNotInterior);
        }
        let mut total = 0.0;
        for (w, wt) in grid.nodes().iter().zip(grid.weights()) {
            let (r, g) = self.radial_and_gradient(w)?;
            total += wt * r * (r * r + g.norm_squared()).sqrt();
        }
        Ok(total)
    }

    pub fn radial_samples(&self, grid: &SphereGrid) -> Result<Vec<f64>> {
        if !self.origin_interior() {
            return Err(Error::OriginNotInterior);
        }
        grid.nodes().iter().map(|w| self.radial(w)).collect()
    }

    /// Closed form when available, quadrature otherwise.
    pub fn volume(&self, grid: &SphereGrid) -> Result<f64> {
        match self.volume_analytic() {
            Some(v) => Ok(v),
            None => self.volume_by_quadrature(grid),
        }
    }

    pub fn surface_area(&self, grid: &SphereGrid) -> Result<f64> {
        match self.area_analytic() {
            Some(v) => Ok(v),
            None => self.area_by_quadrature(grid),
        }
    }

    /// Maximal width `max_ν h(ν) + h(-ν)`.
    pub fn diameter(&self, grid: &SphereGrid) -> Result<f64> {
        match self {
            ConvexBody::Ball { radius, .. } => return Ok(2.0 * radius),
            ConvexBody::Spheroid { a, c, .. } => return Ok(2.0 * a.max(*c)),
            ConvexBody::Scaled { base, factor } => return Ok(factor * base.diameter(grid)?),
            _ => {}
        }
        if self.is_axisymmetric() {
            let width = |b: f64| -> f64 {
                match (self.meridian_support(b), self.meridian_support(PI - b)) {
                    (Ok(x), Ok(y)) => x + y,
                    _ => f64::NEG_INFINITY,
                }
            };
            let n = 64;
            let step = 0.5 * PI / n as f64;
            let mut best = (0usize, f64::NEG_INFINITY);
            for k in 0..=n {
                let w = width(k as f64 * step);
                if w > best.1 {
                    best = (k, w);
                }
            }
            let lo = best.0.saturating_sub(1) as f64 * step;
            let hi = (best.0 + 1).min(n) as f64 * step;
            let (_, w) = quadrature::golden_max(width, lo, hi, 1e-9);
            return Ok(w.max(best.1));
        }
        let mut best = f64::NEG_INFINITY;
        for nu in grid.nodes().iter().chain(AXES.iter()) {
            best = best.max(self.support(nu)? + self.support(&-nu)?);
        }
        Ok(best)
    }

    pub fn convexity_check(&self, pairs: usize, tol: f64, seed: u64) -> Result<ConvexityReport> {
        convexity_check_probe(self, pairs, tol, seed)
    }

    /// Deterministic midpoint test on short chords around every point of a
    /// fine lattice. A closed star-shaped surface that is locally convex is
    /// convex, and random chords tend to miss small concave patches.
    /// Axisymmetric bodies only need the meridian.
    pub fn local_convexity_check(&self, tol: f64) -> Result<ConvexityReport> {
        const OFFSETS: [f64; 3] = [0.01, 0.05, 0.2];
        let mut worst = f64::INFINITY;
        let mut pairs = 0;
        let mut chord = |w: &Vec3, t: &Vec3, d: f64| -> Result<()> {
            let a = w * d.cos() + t * d.sin();
            let b = w * d.cos() - t * d.sin();
            let m = (a * self.radial(&a)? + b * self.radial(&b)?) * 0.5;
            let mn = m.norm();
            worst = worst.min(self.radial(&(m / mn))? - mn);
            pairs += 1;
            Ok(())
        };
        if self.is_axisymmetric() {
            for k in 0..=2000 {
                let theta = PI * k as f64 / 2000.0;
                let w = direction(theta, 0.0);
                let t = direction(theta + 0.5 * PI, 0.0);
                for d in OFFSETS {
                    chord(&w, &t, d)?;
                }
            }
        } else {
            let (n_theta, n_phi) = (64, 128);
            for i in 0..n_theta {
                let theta = PI * (i as f64 + 0.5) / n_theta as f64;
                for j in 0..n_phi {
                    let phi = 2.0 * PI * j as f64 / n_phi as f64;
                    let (et, ep) = tangent_frame(theta, phi);
                    let w = direction(theta, phi);
                    for k in 0..4 {
                        let psi = PI * k as f64 / 4.0;
                        let t = et * psi.cos() + ep * psi.sin();
                        for d in OFFSETS {
                            chord(&w, &t, d)?;
                        }
                    }
                }
            }
        }
        Ok(ConvexityReport { pass: worst >= -tol, worst_margin: worst, pairs })
    }
}

/// Coordinate axes, appended to direction tables since Gauss-Legendre
/// grids contain neither pole.
pub const AXES: [Vec3; 6] = [
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(-1.0, 0.0, 0.0),
    Vec3::new(0.0, 1.0, 0.0),
    Vec3::new(0.0, -1.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
    Vec3::new(0.0, 0.0, -1.0),
];

fn cloud_support(points: &[Vec3], nu: &Vec3) -> f64 {
    points.iter().map(|p| p.dot(nu)).fold(f64::NEG_INFINITY, f64::max)
}

/// `∇_S ρ = -ρ (n - (n·ω) ω) / (n·ω)` for any (unnormalized) outward normal.
fn gradient_from_normal(rho: f64, n: &Vec3, omega: &Vec3) -> Vec3 {
    let nw = n.dot(omega);
    -(n - omega * nw) * (rho / nw)
}

fn translate_ray_exit(base: &ConvexBody, shift: &Vec3, omega: &Vec3) -> Result<f64> {
    let s = shift.norm();
    if s > 0.0 && base.radial(&(-shift / s))? <= s {
        return Err(Error::OriginNotInterior);
    }
    // Gauge excess of the base body at the point t ω - shift.
    let f = |t: f64| -> Result<f64> {
        let p = omega * t - shift;
        let r = p.norm();
        if r == 0.0 {
            return Ok(-1.0);
        }
        Ok(r / base.radial(&(p / r))? - 1.0)
    };
    let mut lo = 0.0;
    let mut hi = s + base.radial(omega)?.max(1e-3);
    while f(hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidBody("unbounded ray".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

struct Piece {
    volume: f64,
    area: f64,
}

/// The spherical cap replaced by the cone, and the cone itself, for a cone
/// hull with apex height `1 + λ`.
fn cone_pieces(lambda: f64) -> (Piece, Piece) {
    let z0 = 1.0 / (1.0 + lambda);
    let r0 = (1.0 - z0 * z0).sqrt();
    let h = 1.0 - z0;
    let height = 1.0 + lambda - z0;
    let cap = Piece { volume: PI * h * h * (3.0 - h) / 3.0, area: 2.0 * PI * h };
    let cone = Piece { volume: PI * r0 * r0 * height / 3.0, area: PI * r0 * (r0 * r0 + height * height).sqrt() };
    (cap, cone)
}

/// Closed-form area of the spheroid with semiaxes `a, a, c`.
pub fn spheroid_area(a: f64, c: f64) -> f64 {
    if a == c {
        return 4.0 * PI * a * a;
    }
    if a < c {
        let e = (1.0 - (a / c).powi(2)).sqrt();
        let ratio = if e < 1e-3 { 1.0 + e * e / 6.0 + 3.0 * e.powi(4) / 40.0 } else { e.asin() / e };
        2.0 * PI * a * a * (1.0 + (c / a) * ratio)
    } else {
        let e = (1.0 - (c / a).powi(2)).sqrt();
        let ratio = if e < 1e-3 { 1.0 + e * e / 3.0 + e.powi(4) / 5.0 } else { e.atanh() / e };
        2.0 * PI * a * a * (1.0 + (1.0 - e * e) * ratio)
    }
}

/// `ρ_L = 1 / h_{L°}` node by node.
pub fn radial_from_support_polar(grid: Arc<SphereGrid>, h_polar: &[f64]) -> Result<RadialField> {
    if h_polar.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: h_polar.len() });
    }
    if let Some((index, &value)) = h_polar.iter().enumerate().find(|(_, h)| !(**h > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    RadialField::new(grid, h_polar.iter().map(|h| 1.0 / h - 1.0).collect())
}

/// Anything with a radial function that can be probed at arbitrary
/// directions.
pub trait RadialProbe {
    fn rho_probe(&self, omega: &Vec3) -> f64;
}

impl RadialProbe for RadialField {
    fn rho_probe(&self, omega: &Vec3) -> f64 {
        self.rho_at(omega)
    }
}

impl RadialProbe for ConvexBody {
    fn rho_probe(&self, omega: &Vec3) -> f64 {
        self.radial(omega).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvexityReport {
    pub pass: bool,
    /// Most negative `ρ(m̂) - |m|` found (positive when every midpoint is inside).
    pub worst_margin: f64,
    pub pairs: usize,
}

fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Midpoint test on random boundary pairs; half the pairs are nearby
/// (within 0.6 rad), where local concavity shows first.
pub fn convexity_check<P: RadialProbe>(probe: &P, pairs: usize, tol: f64, seed: u64) -> Result<ConvexityReport> {
    convexity_check_probe(probe, pairs, tol, seed)
}

fn convexity_check_probe<P: RadialProbe + ?Sized>(probe: &P, pairs: usize, tol: f64, seed: u64) -> Result<ConvexityReport> {
    if pairs < 1000 {
        return Err(Error::Hypothesis(format!("convexity check needs at least 1000 pairs, got {pairs}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for k in 0..pairs {
        let w1 = random_direction(&mut rng);
        let w2 = if k % 2 == 0 {
            random_direction(&mut rng)
        } else {
            let (theta, phi) = angles(&w1);
            let (et, ep) = tangent_frame(theta, phi);
            let psi: f64 = rng.gen_range(0.0..2.0 * PI);
            let d: f64 = rng.gen_range(0.0..0.6);
            let t = et * psi.cos() + ep * psi.sin();
            w1 * d.cos() + t * d.sin()
        };
        let x = w1 * probe.rho_probe(&w1);
        let y = w2 * probe.rho_probe(&w2);
        let m = (x + y) * 0.5;
        let mn = m.norm();
        if mn < 1e-12 {
            continue;
        }
        let margin = probe.rho_probe(&(m / mn)) - mn;
        if margin.is_nan() {
            return Err(Error::OriginNotInterior);
        }
        worst = worst.min(margin);
    }
    Ok(ConvexityReport { pass: worst >= -tol, worst_margin: worst, pairs })
}

/// Slab-cut unit ball `B ∩ {x₃ ≤ 1 - λ}` sampled on a grid.
pub fn slab_cut_ball(grid: Arc<SphereGrid>, lambda: f64) -> Result<RadialField> {
    positive("lambda", lambda)?;
    let h = 1.0 - lambda;
    RadialField::from_fn(grid, |w| if w.z > h { h / w.z - 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g64() -> SphereGrid {
        build_grid(64, 128).unwrap()
    }

    #[test]
    fn competitor_support_and_radial() {
        let f = ConvexBody::spheroid(1.0 / 6f64.sqrt(), 6.0).unwrap();
        assert_relative_eq!(f.support(&Vec3::z()).unwrap(), 6.0, epsilon = 1e-14);
        assert_relative_eq!(f.support(&Vec3::x()).unwrap(), 0.408_248_290_463_863, epsilon = 1e-12);
        assert_relative_eq!(f.radial(&Vec3::x()).unwrap(), 1.0 / 6f64.sqrt(), epsilon = 1e-14);
        let b = ConvexBody::ball(1.0).unwrap();
        let w = Vec3::new(0.3, -0.4, 0.5).normalize();
        assert_relative_eq!(b.support(&w).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(b.radial(&w).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cone_hull_profile() {
        let k = ConvexBody::cone_hull(0.1, ConeSides::One).unwrap();
        assert_relative_eq!(k.radial(&Vec3::z()).unwrap(), 1.1, epsilon = 1e-14);
        assert_relative_eq!(k.radial(&-Vec3::z()).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(k.support(&Vec3::z()).unwrap(), 1.1, epsilon = 1e-14);
        // The radial profile is continuous at the tangency angle.
        let t0 = (1.0f64 / 1.1).acos();
        let below = k.radial(&direction(t0 - 1e-9, 0.3)).unwrap();
        assert!((below - 1.0).abs() < 1e-8);
        let two = ConvexBody::cone_hull(0.1, ConeSides::Two).unwrap();
        assert_relative_eq!(two.diameter(&g64()).unwrap(), 2.2, epsilon = 1e-9);
    }

    #[test]
    fn cone_hull_closed_forms_match_quadrature() {
        let g = g64();
        for sides in [ConeSides::One, ConeSides::Two] {
            let k = ConvexBody::cone_hull(0.1, sides).unwrap();
            let va = k.volume_analytic().unwrap();
            let vq = k.volume_by_quadrature(&g).unwrap();
            assert_relative_eq!(va, vq, max_relative = 1e-11);
            let aa = k.area_analytic().unwrap();
            let aq = k.area_by_quadrature(&g).unwrap();
            assert_relative_eq!(aa, aq, max_relative = 1e-11);
        }
    }

    #[test]
    fn polar_support_to_radial() {
        let g = Arc::new(build_grid(8, 16).unwrap());
        let one = radial_from_support_polar(Arc::clone(&g), &vec![1.0; g.len()]).unwrap();
        assert!(one.rho_values().iter().all(|r| *r == 1.0));
        let half = radial_from_support_polar(Arc::clone(&g), &vec![2.0; g.len()]).unwrap();
        assert!(half.rho_values().iter().all(|r| *r == 0.5));
        let r = 1.7;
        let ball_polar = radial_from_support_polar(Arc::clone(&g), &vec![1.0 / r; g.len()]).unwrap();
        assert!(ball_polar.rho_values().iter().all(|x| (x - r).abs() < 1e-15));
        let mut bad = vec![1.0; g.len()];
        bad[3] = 0.0;
        assert!(matches!(radial_from_support_polar(g, &bad), Err(Error::NonPositive { index: 3, .. })));
    }

    #[test]
    fn volumes_and_areas() {
        let g = g64();
        let f = ConvexBody::spheroid(1.0 / 6f64.sqrt(), 6.0).unwrap();
        assert_relative_eq!(f.volume(&g).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-14);
        let p = f.surface_area(&g).unwrap();
        assert!(p > 24.21 && p < 24.23, "{p}");
        let b2 = ConvexBody::ball(2.0).unwrap();
        assert_relative_eq!(b2.volume(&g).unwrap(), 32.0 * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(b2.volume_on_grid(&g).unwrap(), 32.0 * PI / 3.0, max_relative = 1e-12);
        assert_relative_eq!(b2.area_on_grid(&g).unwrap(), 16.0 * PI, max_relative = 1e-12);
        // Oblate closed form against quadrature.
        let o = ConvexBody::spheroid(1.3, 0.7).unwrap();
        assert_relative_eq!(o.area_analytic().unwrap(), o.area_by_quadrature(&g).unwrap(), max_relative = 1e-11);
    }

    #[test]
    fn spheroid_reduces_to_ball() {
        let g = g64();
        let s = ConvexBody::spheroid(1.3, 1.3).unwrap();
        let b = ConvexBody::ball(1.3).unwrap();
        for w in g.nodes().iter().step_by(97) {
            assert!((s.support(w).unwrap() - b.support(w).unwrap()).abs() < 1e-10);
            assert!((s.radial(w).unwrap() - b.radial(w).unwrap()).abs() < 1e-10);
        }
        assert!((s.volume(&g).unwrap() - b.volume(&g).unwrap()).abs() < 1e-10);
        assert!((s.surface_area(&g).unwrap() - b.surface_area(&g).unwrap()).abs() < 1e-10);
        // Nearly spherical spheroids use the series branch of the area formula.
        let near = spheroid_area(1.0, 1.0 + 1e-8);
        assert!((near - 4.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn translated_bodies() {
        let g = g64();
        let t = Vec3::new(0.1, -0.2, 0.15);
        let cone = ConvexBody::cone_hull(0.2, ConeSides::One).unwrap();
        let moved = cone.translated(t);
        for w in g.nodes().iter().step_by(131) {
            let r = moved.radial(w).unwrap();
            let x = w * r - t;
            assert!((x.norm() - cone.radial(&x.normalize()).unwrap()).abs() < 1e-10);
        }
        assert_relative_eq!(
            moved.area_on_grid(&build_grid(128, 256).unwrap()).unwrap(),
            cone.area_analytic().unwrap(),
            max_relative = 2e-3
        );
        let far = ConvexBody::ball(1.0).unwrap().translated(Vec3::new(0.0, 0.0, 1.5));
        assert!(matches!(far.radial(&Vec3::z()), Err(Error::OriginNotInterior)));
    }

    #[test]
    fn radial_gradient_matches_finite_differences() {
        let bodies = vec![
            ConvexBody::spheroid(0.8, 1.4).unwrap().translated(Vec3::new(0.05, 0.02, -0.1)),
            ConvexBody::superspheroid(1.0, 1.2, 3.0).unwrap(),
            ConvexBody::cone_hull(0.3, ConeSides::Two).unwrap().translated(Vec3::new(0.0, 0.1, 0.05)),
            {
                let mut s = HarmonicSpectrum::zeros(3);
                s.set(2, 1, 0.05);
                s.set(3, 0, -0.04);
                ConvexBody::modulated(ConvexBody::ball(1.0).unwrap(), s)
            },
        ];
        let omega = direction(1.1, 0.7);
        let (et, ep) = tangent_frame(1.1, 0.7);
        let h = 1e-6;
        for b in &bodies {
            let (_, grad) = b.radial_and_gradient(&omega).unwrap();
            let dt = (b.radial(&direction(1.1 + h, 0.7)).unwrap() - b.radial(&direction(1.1 - h, 0.7)).unwrap())
                / (2.0 * h);
            let dp = (b.radial(&direction(1.1, 0.7 + h)).unwrap() - b.radial(&direction(1.1, 0.7 - h)).unwrap())
                / (2.0 * h * 1.1f64.sin());
            assert!((grad.dot(&et) - dt).abs() < 1e-6, "{b:?}");
            assert!((grad.dot(&ep) - dp).abs() < 1e-6, "{b:?}");
        }
    }

    #[test]
    fn superspheroid_with_exponent_two_is_a_spheroid() {
        let s = ConvexBody::superspheroid(0.7, 1.9, 2.0).unwrap();
        let e = ConvexBody::spheroid(0.7, 1.9).unwrap();
        let g = g64();
        for w in g.nodes().iter().step_by(53) {
            assert!((s.support(w).unwrap() - e.support(w).unwrap()).abs() < 1e-12);
            assert!((s.radial(w).unwrap() - e.radial(w).unwrap()).abs() < 1e-12);
        }
        assert_relative_eq!(s.volume(&g).unwrap(), e.volume(&g).unwrap(), max_relative = 1e-11);
        assert_relative_eq!(s.surface_area(&g).unwrap(), e.surface_area(&g).unwrap(), max_relative = 1e-11);
    }

    #[test]
    fn numeric_meridian_support() {
        let mut s = HarmonicSpectrum::zeros(2);
        s.set(2, 0, 0.0);
        let m = ConvexBody::modulated(ConvexBody::spheroid(0.9, 1.3).unwrap(), s);
        let e = ConvexBody::spheroid(0.9, 1.3).unwrap();
        for beta in [0.0, 0.3, 1.0, PI / 2.0, 2.5, PI] {
            let nu = direction(beta, 0.0);
            assert!((m.support(&nu).unwrap() - e.support(&nu).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn convexity_checks() {
        let g = Arc::new(build_grid(32, 64).unwrap());
        let ball = RadialField::from_fn(Arc::clone(&g), |_| 0.0).unwrap();
        let r = convexity_check(&ball, 2000, 1e-12, 42).unwrap();
        assert!(r.pass && r.worst_margin >= -1e-12);
        let sph = RadialField::from_body(Arc::clone(&g), &ConvexBody::unit_volume_spheroid(1.3).unwrap()).unwrap();
        assert!(convexity_check(&sph, 2000, 1e-8, 42).unwrap().pass);
        let y40 = harmonics::sample_harmonic(&g, 4, 0);
        let bumpy = RadialField::new(Arc::clone(&g), y40.iter().map(|y| 0.5 * y).collect()).unwrap();
        let r = convexity_check(&bumpy, 2000, 1e-8, 42).unwrap();
        assert!(!r.pass && r.worst_margin < 0.0);
        assert!(convexity_check(&ball, 10, 1e-8, 42).is_err());
    }

    #[test]
    fn unsupported_support_for_unflagged_samples() {
        let g = Arc::new(build_grid(8, 16).unwrap());
        let f = RadialField::from_fn(g, |_| 0.0).unwrap();
        assert!(matches!(ConvexBody::sampled(f.clone(), false).support(&Vec3::z()), Err(Error::UnsupportedSupport)));
        assert!(ConvexBody::sampled(f, true).support(&Vec3::z()).is_ok());
    }

    #[test]
    fn field_rejects_nonpositive_radius() {
        let g = Arc::new(build_grid(8, 16).unwrap());
        assert!(matches!(RadialField::from_fn(g, |w| if w.z > 0.9 { -1.5 } else { 0.0 }), Err(Error::NonPositive { .. })));
    }
}

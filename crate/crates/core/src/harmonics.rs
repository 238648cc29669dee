//! Real orthonormal spherical harmonics on Gauss-Legendre grids.
//!
//! Convention: `Y_l0 = p̄_l0(θ)`, `Y_lm = √2 p̄_lm(θ) cos mφ` and
//! `Y_l,-m = √2 p̄_lm(θ) sin mφ` for `m > 0`, where `p̄_lm` are associated
//! Legendre functions (no Condon-Shortley phase) scaled so that
//! `∫ Y_lm² dσ = 1`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use crate::error::{Error, Result};
use crate::sphere_grid::{angles, tangent_frame, ColatitudeRule, SphereGrid, Vec3};

/// Normalized associated Legendre functions and their `θ`-derivatives at a
/// single colatitude, for all `0 ≤ m ≤ l ≤ lmax`.
pub(crate) struct AssocLegendre {
    lmax: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

impl AssocLegendre {
    pub(crate) fn new(lmax: usize) -> Self {
        let n = tri(lmax, lmax) + 1;
        AssocLegendre { lmax, p: vec![0.0; n], dp: vec![0.0; n] }
    }

    pub(crate) fn compute(&mut self, theta: f64, with_derivative: bool) {
        let lmax = self.lmax;
        let (s, c) = theta.sin_cos();
        let p = &mut self.p;
        p[0] = 0.5 / PI.sqrt();
        for m in 0..=lmax {
            if m > 0 {
                let mf = m as f64;
                p[tri(m, m)] = p[tri(m - 1, m - 1)] * ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
            }
            if m < lmax {
                p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * c * p[tri(m, m)];
            }
            let m2 = (m * m) as f64;
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - m2)).sqrt();
                let l1 = lf - 1.0;
                let b = ((l1 * l1 - m2) / (4.0 * l1 * l1 - 1.0)).sqrt();
                p[tri(l, m)] = a * (c * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
            }
        }
        if with_derivative {
            let s = if s.abs() < 1e-300 { 1e-300 } else { s };
            for l in 0..=lmax {
                let lf = l as f64;
                for m in 0..=l {
                    let mut d = lf * c * p[tri(l, m)];
                    if l > m {
                        let m2 = (m * m) as f64;
                        d -= ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - m2)).sqrt() * p[tri(l - 1, m)];
                    }
                    self.dp[tri(l, m)] = d / s;
                }
            }
        }
    }

    #[inline]
    pub(crate) fn p(&self, l: usize, m: usize) -> f64 {
        self.p[tri(l, m)]
    }

    #[inline]
    pub(crate) fn dp(&self, l: usize, m: usize) -> f64 {
        self.dp[tri(l, m)]
    }
}

/// Real spherical-harmonic coefficients `c_lm`, `0 ≤ l ≤ L`, `|m| ≤ l`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    max_degree: usize,
    coeffs: Vec<f64>,
}

impl HarmonicSpectrum {
    pub fn zeros(max_degree: usize) -> Self {
        HarmonicSpectrum { max_degree, coeffs: vec![0.0; (max_degree + 1) * (max_degree + 1)] }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    #[inline]
    pub fn index(l: usize, m: i64) -> usize {
        ((l * l + l) as i64 + m) as usize
    }

    pub fn get(&self, l: usize, m: i64) -> f64 {
        if l > self.max_degree || m.unsigned_abs() as usize > l {
            return 0.0;
        }
        self.coeffs[Self::index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, value: f64) {
        assert!(l <= self.max_degree && m.unsigned_abs() as usize <= l, "({l},{m}) out of range");
        self.coeffs[Self::index(l, m)] = value;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(l, m, c_lm)` in increasing `l`, then `m`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64, f64)> + '_ {
        (0..=self.max_degree).flat_map(move |l| {
            (-(l as i64)..=l as i64).map(move |m| (l, m, self.coeffs[Self::index(l, m)]))
        })
    }

    pub fn degree_energy(&self, l: usize) -> f64 {
        (-(l as i64)..=l as i64).map(|m| self.get(l, m).powi(2)).sum()
    }

    /// `Σ c²`, equal to `∫ u² dσ` for band-limited `u`.
    pub fn parseval(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `Σ l(l+1) c²`, equal to `∫ |∇u|² dσ`.
    pub fn dirichlet_energy(&self) -> f64 {
        self.iter().map(|(l, _, c)| (l * (l + 1)) as f64 * c * c).sum()
    }

    /// Share of the `l ≥ 1` energy in degrees above `(1 - top) L`.
    pub fn top_degree_fraction(&self, top: f64) -> f64 {
        let cut = ((1.0 - top) * self.max_degree as f64).floor() as usize;
        let mut total = 0.0;
        let mut high = 0.0;
        for l in 1..=self.max_degree {
            let e = self.degree_energy(l);
            total += e;
            if l > cut {
                high += e;
            }
        }
        // Round-off level content carries no resolution information.
        if total > 1e-24 * self.parseval() {
            high / total
        } else {
            0.0
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ell", "m", "coefficient"])?;
        for (l, m, c) in self.iter() {
            w.write_record(&[l.to_string(), m.to_string(), format!("{c:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Value at an arbitrary direction.
    pub fn eval(&self, omega: &Vec3) -> f64 {
        self.eval_with_gradient(omega, false).0
    }

    /// Value and tangential gradient at an arbitrary direction.
    pub fn eval_with_gradient(&self, omega: &Vec3, with_gradient: bool) -> (f64, Vec3) {
        let (theta, phi) = angles(omega);
        let theta = theta.clamp(1e-9, PI - 1e-9);
        let mut leg = AssocLegendre::new(self.max_degree);
        leg.compute(theta, with_gradient);
        let s = theta.sin();
        let mut value = 0.0;
        let mut g_theta = 0.0;
        let mut g_phi = 0.0;
        for m in 0..=self.max_degree {
            let (sm, cm) = (m as f64 * phi).sin_cos();
            let mi = m as i64;
            for l in m..=self.max_degree {
                let (cc, cs) = if m == 0 {
                    (self.get(l, 0), 0.0)
                } else {
                    (SQRT_2 * self.get(l, mi), SQRT_2 * self.get(l, -mi))
                };
                if cc == 0.0 && cs == 0.0 {
                    continue;
                }
                let p = leg.p(l, m);
                value += p * (cc * cm + cs * sm);
                if with_gradient {
                    g_theta += leg.dp(l, m) * (cc * cm + cs * sm);
                    g_phi += m as f64 * p * (cs * cm - cc * sm) / s;
                }
            }
        }
        let grad = if with_gradient {
            let (et, ep) = tangent_frame(theta, phi);
            et * g_theta + ep * g_phi
        } else {
            Vec3::zeros()
        };
        (value, grad)
    }
}

/// Value of the single real harmonic `Y_lm` at `omega`.
pub fn real_harmonic(l: usize, m: i64, omega: &Vec3) -> f64 {
    let mut s = HarmonicSpectrum::zeros(l);
    s.set(l, m, 1.0);
    s.eval(omega)
}

/// Value and tangential gradient of `Y_lm` at `omega`.
pub fn real_harmonic_with_gradient(l: usize, m: i64, omega: &Vec3) -> (f64, Vec3) {
    let mut s = HarmonicSpectrum::zeros(l);
    s.set(l, m, 1.0);
    s.eval_with_gradient(omega, true)
}

/// Samples of `Y_lm` on the grid nodes.
pub fn sample_harmonic(grid: &SphereGrid, l: usize, m: i64) -> Vec<f64> {
    let mut s = HarmonicSpectrum::zeros(l);
    s.set(l, m, 1.0);
    synthesize_values(&s, grid)
}

struct TrigTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
    n_phi: usize,
}

impl TrigTable {
    fn new(grid: &SphereGrid, mmax: usize) -> Self {
        let n_phi = grid.n_phi();
        let mut cos = vec![0.0; (mmax + 1) * n_phi];
        let mut sin = vec![0.0; (mmax + 1) * n_phi];
        for m in 0..=mmax {
            for (j, phi) in grid.phi_nodes().iter().enumerate() {
                let (s, c) = (m as f64 * phi).sin_cos();
                cos[m * n_phi + j] = c;
                sin[m * n_phi + j] = s;
            }
        }
        TrigTable { cos, sin, n_phi }
    }

    fn cos_row(&self, m: usize) -> &[f64] {
        &self.cos[m * self.n_phi..(m + 1) * self.n_phi]
    }

    fn sin_row(&self, m: usize) -> &[f64] {
        &self.sin[m * self.n_phi..(m + 1) * self.n_phi]
    }
}

/// Projection `c_lm = ∫ u Y_lm dσ` by grid quadrature.
pub fn analyze(grid: &SphereGrid, values: &[f64], degree: usize) -> Result<HarmonicSpectrum> {
    if grid.rule() != ColatitudeRule::GaussLegendre {
        return Err(Error::NotSpectralGrid);
    }
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
    }
    let limit = grid.band_limit();
    if degree > limit {
        return Err(Error::DegreeTooLarge { degree, limit });
    }
    let n_phi = grid.n_phi();
    let dphi = 2.0 * PI / n_phi as f64;
    let trig = TrigTable::new(grid, degree);
    let mut leg = AssocLegendre::new(degree);
    let mut out = HarmonicSpectrum::zeros(degree);
    let mut a = vec![0.0; degree + 1];
    let mut b = vec![0.0; degree + 1];
    for (i, &theta) in grid.theta_nodes().iter().enumerate() {
        let ring = &values[i * n_phi..(i + 1) * n_phi];
        for m in 0..=degree {
            let (cr, sr) = (trig.cos_row(m), trig.sin_row(m));
            let mut sa = 0.0;
            let mut sb = 0.0;
            for j in 0..n_phi {
                sa += ring[j] * cr[j];
                sb += ring[j] * sr[j];
            }
            a[m] = sa;
            b[m] = sb;
        }
        let w = grid.ring_weights()[i] * dphi;
        leg.compute(theta, false);
        for m in 0..=degree {
            let mi = m as i64;
            for l in m..=degree {
                let p = w * leg.p(l, m);
                if m == 0 {
                    out.coeffs[HarmonicSpectrum::index(l, 0)] += p * a[0];
                } else {
                    out.coeffs[HarmonicSpectrum::index(l, mi)] += SQRT_2 * p * a[m];
                    out.coeffs[HarmonicSpectrum::index(l, -mi)] += SQRT_2 * p * b[m];
                }
            }
        }
    }
    Ok(out)
}

fn synthesize_values(spectrum: &HarmonicSpectrum, grid: &SphereGrid) -> Vec<f64> {
    let degree = spectrum.max_degree();
    let n_phi = grid.n_phi();
    let mmax = degree.min(n_phi);
    let trig = TrigTable::new(grid, mmax);
    let mut leg = AssocLegendre::new(degree);
    let mut out = vec![0.0; grid.len()];
    let mut fc = vec![0.0; mmax + 1];
    let mut fs = vec![0.0; mmax + 1];
    for (i, &theta) in grid.theta_nodes().iter().enumerate() {
        leg.compute(theta, false);
        for m in 0..=mmax {
            let mi = m as i64;
            let (mut sc, mut ss) = (0.0, 0.0);
            for l in m..=degree {
                let p = leg.p(l, m);
                if m == 0 {
                    sc += p * spectrum.get(l, 0);
                } else {
                    sc += SQRT_2 * p * spectrum.get(l, mi);
                    ss += SQRT_2 * p * spectrum.get(l, -mi);
                }
            }
            fc[m] = sc;
            fs[m] = ss;
        }
        let ring = &mut out[i * n_phi..(i + 1) * n_phi];
        for m in 0..=mmax {
            let (cr, sr) = (trig.cos_row(m), trig.sin_row(m));
            for j in 0..n_phi {
                ring[j] += fc[m] * cr[j] + fs[m] * sr[j];
            }
        }
    }
    out
}

/// Pointwise sum `Σ c_lm Y_lm` at the grid nodes.
pub fn synthesize(spectrum: &HarmonicSpectrum, grid: &SphereGrid) -> Vec<f64> {
    synthesize_values(spectrum, grid)
}

/// `(∂_θ u, (1/sin θ) ∂_φ u)` at the grid nodes.
pub fn synthesize_gradient(spectrum: &HarmonicSpectrum, grid: &SphereGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let degree = spectrum.max_degree();
    let n_phi = grid.n_phi();
    let mmax = degree.min(n_phi);
    let trig = TrigTable::new(grid, mmax);
    let mut leg = AssocLegendre::new(degree);
    let mut d_theta = vec![0.0; grid.len()];
    let mut d_phi = vec![0.0; grid.len()];
    let mut tc = vec![0.0; mmax + 1];
    let mut ts = vec![0.0; mmax + 1];
    let mut pc = vec![0.0; mmax + 1];
    let mut ps = vec![0.0; mmax + 1];
    for (i, &theta) in grid.theta_nodes().iter().enumerate() {
        leg.compute(theta, true);
        let s = theta.sin();
        for m in 0..=mmax {
            let mi = m as i64;
            let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
            for l in m..=degree {
                let (cc, cs) = if m == 0 {
                    (spectrum.get(l, 0), 0.0)
                } else {
                    (SQRT_2 * spectrum.get(l, mi), SQRT_2 * spectrum.get(l, -mi))
                };
                let dp = leg.dp(l, m);
                let p = leg.p(l, m);
                a += dp * cc;
                b += dp * cs;
                c += p * cc;
                d += p * cs;
            }
            tc[m] = a;
            ts[m] = b;
            // ∂_φ (cc cos mφ + cs sin mφ) = m (cs cos mφ - cc sin mφ)
            pc[m] = m as f64 * d / s;
            ps[m] = -(m as f64) * c / s;
        }
        let rt = &mut d_theta[i * n_phi..(i + 1) * n_phi];
        for m in 0..=mmax {
            let (cr, sr) = (trig.cos_row(m), trig.sin_row(m));
            for j in 0..n_phi {
                rt[j] += tc[m] * cr[j] + ts[m] * sr[j];
            }
        }
        let rp = &mut d_phi[i * n_phi..(i + 1) * n_phi];
        for m in 0..=mmax {
            let (cr, sr) = (trig.cos_row(m), trig.sin_row(m));
            for j in 0..n_phi {
                rp[j] += pc[m] * cr[j] + ps[m] * sr[j];
            }
        }
    }
    Ok((d_theta, d_phi))
}

/// `Σ (l(l+1) - 2) c_lm²`, the form `∫(|∇u|² - 2u²) dσ` in coefficients.
pub fn quadratic_form_q2(spectrum: &HarmonicSpectrum) -> f64 {
    spectrum
        .iter()
        .map(|(l, _, c)| ((l * (l + 1)) as f64 - 2.0) * c * c)
        .sum()
}

/// Zeroes the constant and the three translation modes.
pub fn project_out_low_modes(spectrum: &HarmonicSpectrum) -> HarmonicSpectrum {
    let mut out = spectrum.clone();
    out.coeffs[HarmonicSpectrum::index(0, 0)] = 0.0;
    if out.max_degree >= 1 {
        for m in -1..=1 {
            out.coeffs[HarmonicSpectrum::index(1, m)] = 0.0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct GapCheck {
    pub q2: f64,
    pub l2sq: f64,
    pub margin: f64,
}

impl GapCheck {
    pub fn passes(&self) -> bool {
        self.margin >= -1e-6 * self.l2sq
    }
}

/// Degree-two gap `Q2(u) - 4‖u‖²` for a field without degree 0/1 content.
pub fn spectral_gap_check(grid: &SphereGrid, u: &[f64]) -> Result<GapCheck> {
    let spectrum = analyze(grid, u, grid.band_limit())?;
    let l2sq = grid.integrate(&u.iter().map(|v| v * v).collect::<Vec<_>>())?;
    let norm = l2sq.sqrt();
    let low = [(0, 0), (1, -1), (1, 0), (1, 1)]
        .iter()
        .map(|&(l, m)| spectrum.get(l, m).abs())
        .fold(0.0, f64::max);
    if low > 1e-6 * norm {
        return Err(Error::Hypothesis(format!(
            "low-mode content {low:.3e} exceeds 1e-6·‖u‖ = {:.3e}",
            1e-6 * norm
        )));
    }
    let q2 = quadratic_form_q2(&spectrum);
    Ok(GapCheck { q2, l2sq, margin: q2 - 4.0 * l2sq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_grid::build_grid;
    use approx::assert_relative_eq;

    fn grid() -> SphereGrid {
        build_grid(24, 48).unwrap()
    }

    #[test]
    fn orthonormality_on_grid() {
        let g = build_grid(16, 32).unwrap();
        let lmax = 8;
        let mut samples = Vec::new();
        for l in 0..=lmax {
            for m in -(l as i64)..=l as i64 {
                samples.push(((l, m), sample_harmonic(&g, l, m)));
            }
        }
        for (a, ya) in &samples {
            for (b, yb) in &samples {
                let prod: Vec<f64> = ya.iter().zip(yb).map(|(x, y)| x * y).collect();
                let v = g.integrate(&prod).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-10, "{a:?} {b:?}: {v}");
            }
        }
    }

    #[test]
    fn analyze_known_fields() {
        let g = grid();
        let y20 = sample_harmonic(&g, 2, 0);
        let s = analyze(&g, &y20, 10).unwrap();
        assert_relative_eq!(s.get(2, 0), 1.0, epsilon = 1e-12);
        for (l, m, c) in s.iter() {
            if (l, m) != (2, 0) {
                assert!(c.abs() < 1e-10);
            }
        }
        let ones = vec![1.0; g.len()];
        let s = analyze(&g, &ones, 10).unwrap();
        assert_relative_eq!(s.get(0, 0), (4.0 * PI).sqrt(), epsilon = 1e-12);
        let z: Vec<f64> = g.nodes().iter().map(|n| n.z).collect();
        let s = analyze(&g, &z, 10).unwrap();
        assert_relative_eq!(s.get(1, 0), (4.0 * PI / 3.0).sqrt(), epsilon = 1e-10);
        assert!(s.iter().filter(|(l, _, _)| *l != 1).all(|(_, _, c)| c.abs() < 1e-10));
    }

    #[test]
    fn analyze_rejects_large_degree() {
        let g = grid();
        let v = vec![0.0; g.len()];
        assert!(matches!(analyze(&g, &v, 24), Err(Error::DegreeTooLarge { .. })));
    }

    #[test]
    fn synthesis_round_trip() {
        let g = grid();
        assert!(synthesize(&HarmonicSpectrum::zeros(5), &g).iter().all(|v| *v == 0.0));
        let mut s = HarmonicSpectrum::zeros(5);
        s.set(0, 0, (4.0 * PI).sqrt());
        assert!(synthesize(&s, &g).iter().all(|v| (v - 1.0).abs() < 1e-13));

        let mut s = HarmonicSpectrum::zeros(5);
        s.set(3, 1, 0.1);
        s.set(5, -2, 0.05);
        let u = synthesize(&s, &g);
        let back = analyze(&g, &u, g.band_limit()).unwrap();
        let u2 = synthesize(&back, &g);
        let err = u.iter().zip(&u2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9);
    }

    #[test]
    fn q2_values() {
        let eps = 0.3;
        for (l, expected) in [(1usize, 0.0), (2, 4.0 * eps * eps), (0, -2.0 * eps * eps)] {
            let mut s = HarmonicSpectrum::zeros(3);
            s.set(l, 0, eps);
            assert_relative_eq!(quadratic_form_q2(&s), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn low_mode_projection() {
        let mut s = HarmonicSpectrum::zeros(3);
        s.set(1, 1, 1.0);
        assert_eq!(project_out_low_modes(&s).parseval(), 0.0);
        let mut s = HarmonicSpectrum::zeros(3);
        s.set(2, 0, 1.0);
        assert_eq!(project_out_low_modes(&s), s);
        let mut s = HarmonicSpectrum::zeros(3);
        s.set(0, 0, 0.5);
        s.set(1, -1, 0.25);
        s.set(2, 1, 0.7);
        s.set(3, 3, -0.2);
        let p = project_out_low_modes(&s);
        assert_relative_eq!(p.parseval(), s.parseval() - 0.25 - 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn gap_check_cases() {
        let g = grid();
        let y20 = sample_harmonic(&g, 2, 0);
        let r = spectral_gap_check(&g, &y20).unwrap();
        assert!(r.margin.abs() < 1e-10);
        let y53 = sample_harmonic(&g, 5, 3);
        let r = spectral_gap_check(&g, &y53).unwrap();
        assert_relative_eq!(r.q2, 28.0 * r.l2sq, max_relative = 1e-10);
        assert_relative_eq!(r.margin, 24.0 * r.l2sq, max_relative = 1e-10);
        let ones = vec![1.0; g.len()];
        assert!(matches!(spectral_gap_check(&g, &ones), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn point_evaluation_matches_grid() {
        let g = grid();
        let mut s = HarmonicSpectrum::zeros(6);
        s.set(4, -3, 0.4);
        s.set(6, 5, -0.3);
        s.set(2, 0, 0.2);
        let u = synthesize(&s, &g);
        for k in (0..g.len()).step_by(37) {
            assert!((s.eval(&g.nodes()[k]) - u[k]).abs() < 1e-12);
        }
        let (dt, dp) = synthesize_gradient(&s, &g).unwrap();
        for k in (0..g.len()).step_by(41) {
            let (t, p) = angles(&g.nodes()[k]);
            let (et, ep) = tangent_frame(t, p);
            let (_, grad) = s.eval_with_gradient(&g.nodes()[k], true);
            assert!((grad.dot(&et) - dt[k]).abs() < 1e-10);
            assert!((grad.dot(&ep) - dp[k]).abs() < 1e-10);
        }
    }
}

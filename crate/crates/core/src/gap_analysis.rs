//! Scaling diagnostics: divergence of `Q*` near the ball and along
//! elongating spheroids.

use std::f64::consts::PI;
use std::io::Write;

use crate::body::ConvexBody;
use crate::error::{Error, Result};
use crate::functionals::{diameter_perimeter_check, evaluate, fmt_num, lambda_star, q_star_from_parts};
use crate::quadrature::golden_min;
use crate::sphere_grid::SphereGrid;

/// `16π³`, the threshold a minimizing sequence must stay below.
pub const GAP_THRESHOLD: f64 = 16.0 * PI * PI * PI;
/// `64π³/3`, the asymptotic lower bound near the ball.
pub const LOCAL_CONSTANT: f64 = 64.0 * PI * PI * PI / 3.0;
pub const NEAR_BALL_REGIME: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub param: f64,
    pub lambda_star: f64,
    pub deficit: f64,
    /// `δ |log λ*| / λ*²`.
    pub ratio_local: f64,
    pub q_star: f64,
    pub perimeter: f64,
    pub diameter: f64,
    /// `δ P³ / λ*²`.
    pub ratio_coercive: f64,
}

pub const SCAN_HEADER: [&str; 8] =
    ["param", "lambda_star", "deficit", "ratio_local", "q_star", "perimeter", "diameter", "ratio_coercive"];

impl ScanRow {
    pub fn csv_record(&self) -> Vec<String> {
        [
            self.param,
            self.lambda_star,
            self.deficit,
            self.ratio_local,
            self.q_star,
            self.perimeter,
            self.diameter,
            self.ratio_coercive,
        ]
        .iter()
        .map(|v| fmt_num(*v))
        .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Assertion { name: name.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone)]
pub struct Scan {
    pub rows: Vec<ScanRow>,
    pub assertions: Vec<Assertion>,
    /// Reference values printed alongside the rows.
    pub references: Vec<(String, f64)>,
}

impl Scan {
    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SCAN_HEADER)?;
        for r in &self.rows {
            w.write_record(r.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, v) in &self.references {
            s.push_str(&format!("REF {name} = {v:.6}\n"));
        }
        for a in &self.assertions {
            s.push_str(&format!("{} {}: {}\n", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail));
        }
        s
    }
}

fn row_for(param: f64, body: &ConvexBody, grid: &SphereGrid, tol: f64) -> Result<ScanRow> {
    let r = evaluate(body, grid, tol)?;
    let l2 = r.lambda_star * r.lambda_star;
    Ok(ScanRow {
        param,
        lambda_star: r.lambda_star,
        deficit: r.deficit,
        ratio_local: r.deficit * r.lambda_star.ln().abs() / l2,
        q_star: r.q_star,
        perimeter: r.perimeter,
        diameter: r.diameter,
        ratio_coercive: r.deficit * r.perimeter.powi(3) / l2,
    })
}

/// Scans a family converging to the ball. Rows are sorted by decreasing
/// `λ*`, i.e. towards the ball.
pub fn near_ball_scan<F>(family: F, params: &[f64], grid: &SphereGrid, tol: f64) -> Result<Scan>
where
    F: Fn(f64) -> Result<ConvexBody>,
{
    let mut rows = Vec::with_capacity(params.len());
    for &p in params {
        let row = row_for(p, &family(p)?, grid, tol)?;
        if row.q_star.is_infinite() {
            return Err(Error::BallInFamily(p));
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| b.lambda_star.total_cmp(&a.lambda_star));
    let mut assertions = Vec::new();

    let regime: Vec<&ScanRow> = rows.iter().filter(|r| r.lambda_star < NEAR_BALL_REGIME).collect();
    let increasing = regime.windows(2).all(|w| w[1].q_star > w[0].q_star);
    let qs: Vec<String> = regime.iter().map(|r| format!("{:.2}", r.q_star)).collect();
    assertions.push(Assertion::new(
        "q_star strictly increasing towards the ball",
        increasing,
        format!("q_star = [{}]", qs.join(", ")),
    ));

    if let Some(last) = rows.last() {
        assertions.push(Assertion::new(
            "q_star above 16π³ at the smallest parameter",
            last.q_star > GAP_THRESHOLD,
            format!("q_star({}) = {:.2} vs {:.2}", last.param, last.q_star, GAP_THRESHOLD),
        ));
    }

    if rows.len() >= 3 {
        let tail = &rows[rows.len() - 3..];
        let ratios: Vec<f64> = tail.iter().map(|r| r.deficit / (r.lambda_star * r.lambda_star)).collect();
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assertions.push(Assertion::new(
            "deficit/lambda² stable within a factor 1.5 over the last three rows",
            hi / lo <= 1.5,
            format!("δ/λ*² = {:?}, spread {:.3}", ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(), hi / lo),
        ));
        // Growth per halving of the parameter between consecutive rows.
        let mut growths = Vec::new();
        for w in tail.windows(2) {
            let halvings = (w[0].param / w[1].param).log2();
            growths.push((w[1].q_star / w[0].q_star).powf(1.0 / halvings) - 1.0);
        }
        assertions.push(Assertion::new(
            "q_star grows at least 20% per halving over the last three rows",
            growths.iter().all(|g| *g >= 0.2),
            format!("growth per halving = {:?}", growths.iter().map(|g| format!("{:.1}%", 100.0 * g)).collect::<Vec<_>>()),
        ));
    }
    Ok(Scan {
        rows,
        assertions,
        references: vec![("64π³/3".into(), LOCAL_CONSTANT), ("16π³".into(), GAP_THRESHOLD)],
    })
}

/// Near-ball spheroids of unit volume, `c = 1 + ε`.
pub fn near_ball_spheroid(eps: f64) -> Result<ConvexBody> {
    ConvexBody::unit_volume_spheroid(1.0 + eps)
}

/// Unit-volume spheroids `a = c^{-1/2}` with increasing `c`.
pub fn elongation_scan(c_values: &[f64], grid: &SphereGrid, tol: f64) -> Result<Scan> {
    if let Some(c) = c_values.iter().find(|c| !(**c >= 2.0)) {
        return Err(Error::Hypothesis(format!("elongation scan needs c >= 2, got {c}")));
    }
    let mut rows = Vec::new();
    let mut margins = Vec::new();
    for &c in c_values {
        let body = ConvexBody::unit_volume_spheroid(c)?;
        rows.push(row_for(c, &body, grid, tol)?);
        margins.push(diameter_perimeter_check(&body, grid)?);
    }
    let mut assertions = vec![Assertion::new(
        "ratio_coercive >= 1 on every row",
        rows.iter().all(|r| r.ratio_coercive >= 1.0),
        format!("min {:.3}", rows.iter().map(|r| r.ratio_coercive).fold(f64::INFINITY, f64::min)),
    )];
    let tail: Vec<&ScanRow> = rows.iter().filter(|r| r.param >= 6.0).collect();
    let mut sorted = tail.clone();
    sorted.sort_by(|a, b| a.param.total_cmp(&b.param));
    assertions.push(Assertion::new(
        "q_star strictly increasing for c >= 6",
        sorted.windows(2).all(|w| w[1].q_star > w[0].q_star),
        format!("q_star = {:?}", sorted.iter().map(|r| format!("{:.2}", r.q_star)).collect::<Vec<_>>()),
    ));
    assertions.push(Assertion::new(
        "perimeter >= (2π/√3) diam^(1/2) on every row",
        margins.iter().all(|m| *m > 0.0),
        format!("min margin {:.4}", margins.iter().cloned().fold(f64::INFINITY, f64::min)),
    ));
    Ok(Scan { rows, assertions, references: vec![("16π³".into(), GAP_THRESHOLD)] })
}

#[derive(Debug, Clone, Copy)]
pub struct RegimeCheck {
    pub pass: bool,
    pub q_star: f64,
    /// `δ log(δ + 1/δ)`.
    pub lhs: f64,
    /// `M λ*² / P³`.
    pub rhs: f64,
    /// `δ |log λ*| / λ*²`.
    pub ratio_local: f64,
}

/// `δ log(δ + 1/δ) ≤ M λ*² / P³`, the rearrangement of `Q* ≤ M`. A body
/// with `Q* > M` reports `pass = false`.
pub fn deficit_upper_regime_check(body: &ConvexBody, grid: &SphereGrid, m: f64, tol: f64) -> Result<RegimeCheck> {
    let lambda = lambda_star(body, grid, tol)?.value;
    if lambda >= NEAR_BALL_REGIME {
        return Err(Error::Regime { dist: lambda, bound: NEAR_BALL_REGIME });
    }
    let r = evaluate(body, grid, tol)?;
    let lhs = r.deficit * (r.deficit + 1.0 / r.deficit).ln();
    let rhs = m * r.lambda_star * r.lambda_star / r.perimeter.powi(3);
    let q = q_star_from_parts(r.deficit, r.perimeter, r.lambda_star);
    Ok(RegimeCheck {
        // Relative slack so that M = Q* itself passes despite round-off.
        pass: lhs <= rhs * (1.0 + 1e-12),
        q_star: q,
        lhs,
        rhs,
        ratio_local: r.deficit * r.lambda_star.ln().abs() / (r.lambda_star * r.lambda_star),
    })
}

/// `min_{μ ≥ 0} max{2πα² - 2μ, 4μ}` by golden section; returns `(μ, value)`.
pub fn minimax_balance(alpha: f64) -> (f64, f64) {
    let top = 2.0 * PI * alpha * alpha;
    golden_min(|mu| (top - 2.0 * mu).max(4.0 * mu), 0.0, top, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::ConeSides;
    use crate::sphere_grid::build_grid;

    #[test]
    fn balance_constant() {
        for alpha in [0.5, 0.8, 1.0] {
            let (mu, v) = minimax_balance(alpha);
            assert!((v - 4.0 * PI * alpha * alpha / 3.0).abs() < 1e-8);
            assert!((mu - PI * alpha * alpha / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ball_in_family_is_rejected() {
        let g = build_grid(16, 32).unwrap();
        let r = near_ball_scan(near_ball_spheroid, &[0.1, 0.0], &g, 1e-9);
        assert!(matches!(r, Err(Error::BallInFamily(p)) if p == 0.0));
    }

    #[test]
    fn regime_check_by_construction() {
        let g = build_grid(64, 128).unwrap();
        let body = near_ball_spheroid(0.05).unwrap();
        let q = crate::functionals::q_star(&body, &g).unwrap();
        assert!(deficit_upper_regime_check(&body, &g, q, 1e-9).unwrap().pass);
        assert!(!deficit_upper_regime_check(&body, &g, q / 2.0, 1e-9).unwrap().pass);
        let cone = ConvexBody::cone_hull(0.05, ConeSides::One).unwrap().normalized_to_unit_volume(&g).unwrap();
        let r = deficit_upper_regime_check(&cone, &g, 1e4, 1e-9).unwrap();
        assert!(r.ratio_local.is_finite() && r.ratio_local > 0.0);
    }

    #[test]
    fn elongation_rows() {
        let g = build_grid(64, 128).unwrap();
        let s = elongation_scan(&[6.0, 12.0, 24.0, 60.0], &g, 1e-9).unwrap();
        assert!(s.all_pass(), "{}", s.summary());
        let q6 = s.rows[0].q_star;
        let q60 = s.rows[3].q_star;
        assert!(q6 > 360.0 && q6 < 368.0);
        assert!(q60 > 1000.0 && q60 < 1200.0, "{q60}");
        assert!(elongation_scan(&[1.5], &g, 1e-9).is_err());
    }
}

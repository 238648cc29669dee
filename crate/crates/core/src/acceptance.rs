//! The fourteen-item acceptance suite behind `isoq verify`.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{spheroid_area, ConeSides, ConvexBody};
use crate::error::Result;
use crate::expansion::{
    capacity_lower_bound_check, fuglede_report_for_body, log_cap_profile, slope_bound_check, CAPACITY_BAND,
};
use crate::functionals::{
    diameter_perimeter_check, evaluate, hausdorff_to_shifted_ball, lambda_star, UNIT_VOLUME,
};
use crate::gap_analysis::{elongation_scan, minimax_balance, near_ball_scan, near_ball_spheroid, GAP_THRESHOLD};
use crate::harmonics::{analyze, quadratic_form_q2, sample_harmonic, synthesize, HarmonicSpectrum};
use crate::optimizer::{minimize_family, spheroid_q_closed_form, Family, OptimizationProblem};
use crate::recenter::{phi_map, recenter};
use crate::sphere_grid::{build_grid, build_polar_graded_grid, GeodesicDisk, SphereGrid, Vec3};

pub const CRITERIA: usize = 14;
/// Wall-clock budget of the whole suite.
pub const SUITE_BUDGET: Duration = Duration::from_secs(300);

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub n_theta: usize,
    pub n_phi: usize,
    pub tol_lambda: f64,
    pub tol_recenter: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { n_theta: 128, n_phi: 256, tol_lambda: 1e-9, tol_recenter: 1e-10, seed: 42 }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    /// One machine-readable line, e.g. `criterion  3 PASS ball-convention: ...`.
    /// Timings are left out so the output is reproducible.
    pub fn line(&self) -> String {
        format!("criterion {:>2} {} {}: {}", self.id, if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub const NAMES: [&str; CRITERIA] = [
    "competitor",
    "prolate-area",
    "ball-convention",
    "spectral-gap",
    "expansion-remainder",
    "slope-bound",
    "log-capacity",
    "recentering",
    "diameter-perimeter",
    "coercivity",
    "near-ball-divergence",
    "lambda-oracle",
    "minimax-balance",
    "optimizer",
];

/// Resolves an item filter: a criterion number or name.
pub fn resolve(item: &str) -> Option<usize> {
    if let Ok(n) = item.parse::<usize>() {
        return (1..=CRITERIA).contains(&n).then_some(n);
    }
    NAMES.iter().position(|n| *n == item).map(|i| i + 1)
}

struct Context {
    cfg: SuiteConfig,
    grid: Arc<SphereGrid>,
    started: Instant,
}

/// Runs the selected criteria (all when `only` is empty), calling `report`
/// after each one.
pub fn run<F: FnMut(&Outcome)>(cfg: &SuiteConfig, only: &[usize], mut report: F) -> Result<Vec<Outcome>> {
    let ctx = Context {
        grid: Arc::new(build_grid(cfg.n_theta, cfg.n_phi)?),
        cfg: cfg.clone(),
        started: Instant::now(),
    };
    let mut out = Vec::new();
    for id in 1..=CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match criterion(&ctx, id) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let o = Outcome { id, name: NAMES[id - 1], pass, detail, elapsed: t.elapsed() };
        report(&o);
        out.push(o);
    }
    Ok(out)
}

fn criterion(ctx: &Context, id: usize) -> Result<(bool, String)> {
    match id {
        1 => competitor(ctx),
        2 => prolate_area(ctx),
        3 => ball_convention(ctx),
        4 => spectral_gap(ctx),
        5 => expansion_remainder(ctx),
        6 => slope_bound(ctx),
        7 => log_capacity(),
        8 => recentering(ctx),
        9 => diameter_perimeter(ctx),
        10 => coercivity(ctx),
        11 => near_ball(ctx),
        12 => lambda_oracle(ctx),
        13 => minimax(),
        14 => optimizer(ctx),
        _ => unreachable!("criterion ids are 1..=14"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn competitor(ctx: &Context) -> Result<(bool, String)> {
    let t = Instant::now();
    let body = ConvexBody::spheroid(1.0 / 6f64.sqrt(), 6.0)?;
    let g = &ctx.grid;
    let v_quad = body.volume_on_grid(g)?;
    let v_exact = body.volume(g)?;
    let r = evaluate(&body, g, ctx.cfg.tol_lambda)?;
    let elapsed = t.elapsed();
    let checks = [
        rel(v_quad, UNIT_VOLUME) <= 1e-6,
        rel(v_exact, UNIT_VOLUME) <= 1e-12,
        (r.lambda_star - 5.0).abs() <= 1e-6,
        r.optimal_shift.norm() <= 1e-6,
        r.perimeter > 24.21 && r.perimeter < 24.23,
        r.deficit > 0.925 && r.deficit < 0.929,
        r.q_star > 360.0 && r.q_star < 368.0 && r.q_star < GAP_THRESHOLD,
        elapsed <= Duration::from_secs(2),
    ];
    Ok((
        checks.iter().all(|c| *c),
        format!(
            "V_quad rel {:.1e}, λ* = {:.9}, |x| = {:.1e}, P = {:.5}, δ = {:.5}, Q* = {:.3} < 16π³ = {:.2}{}",
            rel(v_quad, UNIT_VOLUME),
            r.lambda_star,
            r.optimal_shift.norm(),
            r.perimeter,
            r.deficit,
            r.q_star,
            GAP_THRESHOLD,
            if elapsed <= Duration::from_secs(2) { "" } else { ", over the 2 s budget" }
        ),
    ))
}

fn prolate_area(ctx: &Context) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for c in [1.5f64, 3.0, 6.0, 60.0] {
        let a = c.powf(-0.5);
        let quad = ConvexBody::spheroid(a, c)?.area_by_quadrature(&ctx.grid)?;
        worst = worst.max(rel(quad, spheroid_area(a, c)));
    }
    Ok((worst <= 1e-6, format!("worst relative error {worst:.2e}")))
}

fn ball_convention(ctx: &Context) -> Result<(bool, String)> {
    let r = evaluate(&ConvexBody::ball(1.0)?, &ctx.grid, ctx.cfg.tol_lambda)?;
    Ok((
        r.q_star == f64::INFINITY && r.deficit.abs() <= 1e-10,
        format!("q_star = {}, δ = {:.1e}", r.q_star, r.deficit),
    ))
}

fn spectral_gap(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let deg = g.band_limit();
    let l2 = |u: &[f64]| g.integrate(&u.iter().map(|x| x * x).collect::<Vec<_>>());
    let y20 = sample_harmonic(g, 2, 0);
    let q = quadratic_form_q2(&analyze(g, &y20, deg)?);
    let err20 = (q - 4.0 * l2(&y20)?).abs();
    let mut err1 = 0.0f64;
    for m in -1..=1 {
        err1 = err1.max(quadratic_form_q2(&analyze(g, &sample_harmonic(g, 1, m), deg)?).abs());
    }
    let top = deg.min(10);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut worst = f64::INFINITY;
    if top >= 2 {
        for _ in 0..100 {
            let mut s = HarmonicSpectrum::zeros(top);
            for l in 2..=top {
                for m in -(l as i64)..=l as i64 {
                    s.set(l, m, rng.gen_range(-1.0..1.0));
                }
            }
            let u = synthesize(&s, g);
            worst = worst.min(quadratic_form_q2(&analyze(g, &u, deg)?) - 4.0 * l2(&u)?);
        }
    }
    Ok((
        err20 <= 1e-10 && err1 <= 1e-10 && worst >= -1e-10,
        format!("|Q2(Y20) - 4‖u‖²| = {err20:.1e}, max |Q2(Y1m)| = {err1:.1e}, min margin over 100 spectra = {worst:.3e}"),
    ))
}

fn expansion_remainder(ctx: &Context) -> Result<(bool, String)> {
    let mut ratios = Vec::new();
    for eps in [0.1, 0.05, 0.02] {
        ratios.push(fuglede_report_for_body(&near_ball_spheroid(eps)?, &ctx.grid)?.remainder_ratio);
    }
    let growth = ratios.iter().cloned().fold(0.0f64, f64::max) / ratios[0];
    Ok((
        growth <= 1.1,
        format!("remainder ratios {:?}, max/first = {growth:.4}", ratios.iter().map(|r| format!("{r:.4e}")).collect::<Vec<_>>()),
    ))
}

fn slope_bound(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let bodies = [
        near_ball_spheroid(0.1)?,
        near_ball_spheroid(0.05)?,
        near_ball_spheroid(0.02)?,
        ConvexBody::cone_hull(0.1, ConeSides::One)?,
        ConvexBody::cone_hull(0.01, ConeSides::Two)?,
        ConvexBody::ball(1.0)?.translated(Vec3::new(0.05, 0.0, -0.05)),
    ];
    let mut worst = 0.0f64;
    for b in &bodies {
        worst = worst.max(slope_bound_check(b, g)?.ratio);
    }
    let lambda = 1e-3;
    let cone = slope_bound_check(&ConvexBody::cone_hull(lambda, ConeSides::Two)?, g)?;
    let sharp = cone.sup_grad / (2.0 * lambda).sqrt();
    Ok((
        worst <= 1.0 && cone.ratio <= 1.0 && (0.9..=1.05).contains(&sharp),
        format!("worst sup|∇u| / bound = {worst:.4}, cone sup|∇u|/√(2λ) = {sharp:.4}"),
    ))
}

fn log_capacity() -> Result<(bool, String)> {
    let g = Arc::new(build_polar_graded_grid(1e-4, 8, 4, 8)?);
    let (h, a, rho0) = (1.0, 1e-3, 0.5);
    let v = log_cap_profile(g, h, a, rho0)?;
    let c = capacity_lower_bound_check(&v, &GeodesicDisk::new(Vec3::z(), a)?, h, CAPACITY_BAND)?;
    let flat = c.energy / (2.0 * PI / (rho0 / a).ln());
    Ok((
        (0.99..=1.10).contains(&flat) && c.ratio >= 0.85,
        format!("energy = {:.5}, energy/(2π/log(ρ₀/a)) = {flat:.4}, energy/(2π/|log a|) = {:.4}", c.energy, c.ratio),
    ))
}

fn recentering(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let t = Vec3::new(0.0, 0.0, 0.2);
    let body = ConvexBody::ball(1.0)?.translated(t);
    let r = recenter(&body, g, ctx.cfg.tol_recenter.min(1e-8))?;
    let err = (r.shift - t).norm();
    let ball = ConvexBody::ball(1.0)?;
    let slope = phi_map(&ball, g, &Vec3::new(0.0, 0.0, 0.01))?.z / 0.01;
    let slope_err = rel(slope, -4.0 * PI / 3.0);
    Ok((
        err <= 1e-8 && r.residual_moment.norm() <= 1e-8 && r.iterations <= 30 && slope_err <= 0.01,
        format!(
            "shift error {err:.1e}, residual {:.1e}, {} iterations, Φ slope {slope:.5} (rel err {slope_err:.2e})",
            r.residual_moment.norm(),
            r.iterations
        ),
    ))
}

fn diameter_perimeter(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let mut bodies = Vec::new();
    for c in [1.1, 1.5, 2.0, 3.0, 6.0, 12.0, 24.0, 60.0] {
        bodies.push(ConvexBody::unit_volume_spheroid(c)?);
    }
    for (lambda, sides) in [(0.1, ConeSides::One), (0.5, ConeSides::One), (0.1, ConeSides::Two), (2.0, ConeSides::Two)] {
        bodies.push(ConvexBody::cone_hull(lambda, sides)?.normalized_to_unit_volume(g)?);
    }
    let mut worst = f64::INFINITY;
    for b in &bodies {
        worst = worst.min(diameter_perimeter_check(b, g)?);
    }
    Ok((worst > 0.0, format!("min margin {worst:.4} over {} bodies", bodies.len())))
}

fn coercivity(ctx: &Context) -> Result<(bool, String)> {
    let scan = elongation_scan(&[6.0, 12.0, 24.0, 60.0], &ctx.grid, ctx.cfg.tol_lambda)?;
    let q: Vec<f64> = scan.rows.iter().map(|r| r.q_star).collect();
    let increasing = q.windows(2).all(|w| w[1] > w[0]);
    Ok((
        increasing && q[3] > 2.0 * q[0],
        format!("q_star = {:?}", q.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()),
    ))
}

fn near_ball(ctx: &Context) -> Result<(bool, String)> {
    let scan = near_ball_scan(near_ball_spheroid, &[0.1, 0.05, 0.02, 0.01], &ctx.grid, ctx.cfg.tol_lambda)?;
    let q: Vec<String> = scan.rows.iter().map(|r| format!("{:.1}", r.q_star)).collect();
    let failed: Vec<&str> = scan.assertions.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
    let detail = if failed.is_empty() {
        format!("q_star = {q:?}")
    } else {
        let why: Vec<String> =
            scan.assertions.iter().filter(|a| !a.pass).map(|a| format!("{} ({})", a.name, a.detail)).collect();
        format!("q_star = {q:?}; failed: {}", why.join("; "))
    };
    Ok((scan.all_pass(), detail))
}

fn lambda_oracle(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let body = ConvexBody::cone_hull(0.1, ConeSides::One)?;
    let l = lambda_star(&body, g, ctx.cfg.tol_lambda)?;
    // Brute-force scan of on-axis shifts.
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=2000 {
        let s = -0.1 + 0.2 * k as f64 / 2000.0;
        let d = hausdorff_to_shifted_ball(&body, g, &Vec3::new(0.0, 0.0, s))?;
        if d < best.0 {
            best = (d, s);
        }
    }
    let shift_err = (l.shift - Vec3::new(0.0, 0.0, 0.05)).norm();
    Ok((
        (l.value - 0.05).abs() <= 1e-6 && shift_err <= 1e-6 && (best.0 - l.value).abs() <= 1e-6 && (best.1 - 0.05).abs() <= 1e-4,
        format!("λ* = {:.9}, shift error {shift_err:.1e}, scan minimum {:.9} at s = {:.4}", l.value, best.0, best.1),
    ))
}

fn minimax() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for alpha in [0.5, 0.8, 1.0] {
        let (_, v) = minimax_balance(alpha);
        worst = worst.max((v - 4.0 * PI * alpha * alpha / 3.0).abs());
    }
    Ok((worst <= 1e-8, format!("worst deviation from 4πα²/3: {worst:.1e}")))
}

fn optimizer(ctx: &Context) -> Result<(bool, String)> {
    let g = &ctx.grid;
    let mut problem = OptimizationProblem::new(Family::Spheroid);
    problem.seed = ctx.cfg.seed;
    problem.lambda_tol = ctx.cfg.tol_lambda;
    let best = minimize_family(&problem, g, 1)?;
    let (lo, hi) = problem.bounds[0];
    let oracle = (0..200)
        .map(|k| spheroid_q_closed_form(lo + (hi - lo) * k as f64 / 199.0))
        .fold(f64::INFINITY, f64::min);
    let match_err = rel(best.report.q_star, oracle);

    let family = Family::Harmonic {
        max_degree: 4,
        zonal_only: true,
        seed: Box::new(ConvexBody::unit_volume_spheroid(best.params[0])?),
    };
    let mut seeded = OptimizationProblem::new(family);
    seeded.seed = ctx.cfg.seed;
    seeded.lambda_tol = ctx.cfg.tol_lambda;
    seeded.options.max_evals = 40;
    let h = minimize_family(&seeded, g, 1)?;
    let monotone = h.report.q_star <= h.start_value * (1.0 + 1e-9);
    let total = ctx.started.elapsed();
    Ok((
        match_err <= 0.01 && monotone && total <= SUITE_BUDGET,
        format!(
            "spheroid best Q* = {:.4} at c = {:.4}, grid-scan oracle {oracle:.4} (rel {match_err:.1e}); harmonic {:.4} <= seed {:.4}{}",
            best.report.q_star,
            best.params[0],
            h.report.q_star,
            h.start_value,
            if total <= SUITE_BUDGET { "" } else { "; suite over the 5 min budget" }
        ),
    ))
}

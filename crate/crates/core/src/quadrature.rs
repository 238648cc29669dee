//! Adaptive one-dimensional quadrature (Gauss-Kronrod 7/15).

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// `∫_a^b f` to relative tolerance `rel_tol`, splitting first at the given
/// interior breakpoints (kinks) and then into 16 equal panels per piece.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, breakpoints: &[f64]) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|x| *x > a && *x < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    let mut stack = Vec::new();
    for w in cuts.windows(2) {
        let step = (w[1] - w[0]) / 16.0;
        for k in 0..16 {
            stack.push((w[0] + k as f64 * step, w[0] + (k + 1) as f64 * step, 0u32));
        }
    }
    let coarse: f64 = stack.iter().map(|&(x0, x1, _)| kronrod(&f, x0, x1).0.abs()).sum();
    let abs_tol = rel_tol * coarse.max(1e-300);
    let total_len = b - a;
    let mut sum = 0.0;
    while let Some((x0, x1, depth)) = stack.pop() {
        let (v, err) = kronrod(&f, x0, x1);
        let share = abs_tol * (x1 - x0) / total_len;
        if err <= share || depth >= 40 {
            sum += v;
        } else {
            let m = 0.5 * (x0 + x1);
            stack.push((x0, m, depth + 1));
            stack.push((m, x1, depth + 1));
        }
    }
    sum
}

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(|x| -f(x), a, b, tol);
    (x, -v)
}

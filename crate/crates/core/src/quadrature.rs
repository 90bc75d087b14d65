//! Integral form of the MDD objective for scalar conditioning variables,
//!
//! ```text
//! MDD_n(theta) = int |G_n(s, theta)|^2 / (c_1 s^2) ds,
//! ```
//!
//! evaluated by adaptive Gauss-Kronrod quadrature directly on the
//! characteristic process. It shares nothing with the pairwise-distance
//! evaluation except the residuals, which makes it a test oracle for
//! [`crate::mdd::mdd_objective`]; estimation never calls it.

use crate::error::{Error, Result};
use crate::mdd::{centered, char_process, WeightFunction};
use crate::model::{evaluate, ResidualModel};
use crate::sample::Sample;

#[derive(Clone, Debug)]
pub struct QuadratureConfig {
    /// Half-width of the neighborhood of `s = 0` replaced by the quadratic
    /// leading term of `|G_n(s)|^2`.
    pub eps: f64,
    /// Lower bound on the truncation point `S`.
    pub s_max: f64,
    pub rel_tol: f64,
    /// `S` is raised until `S * (smallest nonzero gap)` reaches this many
    /// radians, so every distinct pair oscillates well inside `[eps, S]`.
    pub tail_cycles: f64,
    /// Hard ceiling on `S`.
    pub s_cap: f64,
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            s_max: 200.0,
            rel_tol: 1e-6,
            tail_cycles: 50.0,
            s_cap: 1e5,
            max_depth: 30,
        }
    }
}

// Gauss-Kronrod 7/15 nodes on [-1, 1] (non-negative half).
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
    0.209_482_141_084_728_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    max_depth: usize,
) -> Result<f64> {
    let (value, err) = gk15(f, a, b);
    if err <= tol || (b - a) < 1e-12 * b.abs().max(1.0) {
        return Ok(value);
    }
    if depth >= max_depth {
        return Err(Error::Quadrature(format!(
            "no convergence on [{a:.6}, {b:.6}] (error estimate {err:.3e}, tolerance {tol:.3e})"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, 0.5 * tol, depth + 1, max_depth)?
        + adaptive(f, m, b, 0.5 * tol, depth + 1, max_depth)?)
}

pub fn mdd_via_quadrature(
    model: &dyn ResidualModel,
    sample: &Sample,
    theta: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if sample.q() != 1 {
        return Err(Error::Quadrature(format!(
            "integral form is implemented for scalar X only (q = {})",
            sample.q()
        )));
    }
    let ev = evaluate(model, sample, theta, false)?;
    let (n, l) = (ev.n, ev.l);
    let a = centered(&ev.h, n, l);
    let c1 = WeightFunction::new(1).c_q;
    let x = sample.x_column(0);

    let mut min_gap = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    // |G_n(s)|^2 tends on average to the tied-pair mass as s grows.
    let mut tied = 0.0;
    for t in 0..n {
        for s in 0..n {
            let gap = (x[t] - x[s]).abs();
            if gap == 0.0 {
                let at = &a[t * l..(t + 1) * l];
                let as_ = &a[s * l..(s + 1) * l];
                tied += at.iter().zip(as_).map(|(u, v)| u * v).sum::<f64>();
            } else {
                min_gap = min_gap.min(gap);
                max_gap = max_gap.max(gap);
            }
        }
    }
    tied /= (n * n) as f64;
    if max_gap == 0.0 {
        // every X equal: G_n(s) = exp(i s X) * mean(a) = 0
        return Ok(0.0);
    }

    let s_upper = cfg
        .s_max
        .max((cfg.tail_cycles / min_gap).min(cfg.s_cap));

    // Leading term near zero: G_n(s) ~ i s (1/n) sum_t a_t X_t.
    let mut slope_sq = 0.0;
    for i in 0..l {
        let m: f64 = (0..n).map(|t| a[t * l + i] * x[t]).sum::<f64>() / n as f64;
        slope_sq += m * m;
    }
    let near_zero = cfg.eps * slope_sq / c1;

    let integrand = |s: f64| -> f64 {
        let g = char_process(&a, l, sample, &[s]).expect("q = 1 checked above");
        g.iter().map(|z| z.norm_sqr()).sum::<f64>() / (c1 * s * s)
    };

    // Panels of half a period at the fastest frequency; a coarse pass sets
    // the absolute tolerance.
    let width = std::f64::consts::PI / max_gap;
    let span = s_upper - cfg.eps;
    let panels = ((span / width).ceil() as usize).max(1);
    let step = span / panels as f64;
    let edges: Vec<(f64, f64)> = (0..panels)
        .map(|i| {
            let lo = cfg.eps + i as f64 * step;
            let hi = if i + 1 == panels { s_upper } else { lo + step };
            (lo, hi)
        })
        .collect();
    let coarse: f64 = edges.iter().map(|&(lo, hi)| gk15(&integrand, lo, hi).0).sum();
    let scale = (coarse + near_zero).abs().max(f64::MIN_POSITIVE);
    let tol_per_unit = cfg.rel_tol * scale / span;
    let mut middle = 0.0;
    for &(lo, hi) in &edges {
        middle += adaptive(&integrand, lo, hi, tol_per_unit * (hi - lo), 0, cfg.max_depth)?;
    }

    let tail = tied / (c1 * s_upper);
    Ok(2.0 * (near_zero + middle + tail))
}

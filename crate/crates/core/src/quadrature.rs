//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

use crate::error::{FellerError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

// Gauss weights attached to XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and interval budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadControl {
    fn default() -> Self {
        QuadControl {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
///
/// The returned value is the Kronrod estimate; the error estimate is the
/// summed |K15 - G7| over the final partition.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, ctrl: QuadControl) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut segments = vec![kronrod(&f, a, b)];
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if error <= ctrl.abs_tol.max(ctrl.rel_tol * total.abs()) {
            return Ok((total, error));
        }
        if segments.len() >= ctrl.max_intervals {
            return Err(FellerError::NonConvergence {
                what: "adaptive quadrature",
                terms: segments.len(),
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty partition");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval can no longer be split in binary64
            return Ok((total, error));
        }
        segments.push(kronrod(&f, s.a, mid));
        segments.push(kronrod(&f, mid, s.b));
    }
}

/// Integrates `f` over `[a, +inf)` through the map `x = a + s / (1 - s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    ctrl: QuadControl,
) -> Result<(f64, f64)> {
    let mapped = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - s;
        let x = a + s / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, ctrl)
}

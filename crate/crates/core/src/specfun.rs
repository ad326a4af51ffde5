//! Real-argument exponential integrals and Kummer's confluent hypergeometric
//! function `M(a, b, z)`.
//!
//! Negative arguments of `E1` are handled by the principal-value convention
//! `E1(x) = -Ei(-x)` for `x < 0`: the `-/+ i pi` branch offset is never
//! represented.

use crate::error::{FellerError, Result};

/// Euler–Mascheroni constant (20 significant digits).
#[allow(clippy::excessive_precision)]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

/// Below this argument `E1` is summed as a power series, above it through
/// a continued fraction.
const E1_SERIES_LIMIT: f64 = 1.5;

/// Upper end of the convergent `Ei` power series on the positive axis.
const EI_SERIES_LIMIT: f64 = 40.0;

/// Largest `|z|` accepted by [`kummer_m`].
pub const KUMMER_MAX_ABS_Z: f64 = 200.0;

const ITER_CAP: usize = 10_000;

/// Truncation control for power series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub tol: f64,
}

impl SeriesControl {
    pub fn new(max_terms: usize, tol: f64) -> Result<Self> {
        if max_terms == 0 {
            return Err(FellerError::config("SeriesControl.max_terms must be >= 1"));
        }
        if !(tol > 0.0 && tol < 1.0) {
            return Err(FellerError::config("SeriesControl.tol must lie in (0, 1)"));
        }
        Ok(SeriesControl { max_terms, tol })
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        SeriesControl {
            max_terms: 500,
            tol: 1e-17,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Exponential integral `E1(x) = int_1^inf e^{-tx} / t dt` for `x > 0`.
///
/// Underflows to `0.0` once `e^{-x}` does.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(FellerError::domain("exp_integral_e1", x));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    if x <= E1_SERIES_LIMIT {
        Ok(e1_series(x))
    } else {
        e1_continued_fraction(x)
    }
}

// E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
fn e1_series(x: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut power = 1.0; // (-x)^k / k!
    for k in 1..ITER_CAP {
        power *= -x / k as f64;
        let term = power / k as f64;
        acc.add(term);
        if term.abs() < f64::EPSILON * 1e-2 * acc.value().abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - acc.value()
}

// Modified Lentz evaluation of the even contraction of the E1 continued
// fraction, accurate for x >= 1.
fn e1_continued_fraction(x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..ITER_CAP {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() <= f64::EPSILON {
            return Ok(h * (-x).exp());
        }
    }
    Err(FellerError::NonConvergence {
        what: "E1 continued fraction",
        terms: ITER_CAP,
    })
}

/// Principal-value exponential integral `Ei(x)` for real `x != 0`.
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    if x == 0.0 || x.is_nan() {
        return Err(FellerError::domain("exp_integral_ei", x));
    }
    if x < 0.0 {
        let y = -x;
        if y <= E1_SERIES_LIMIT {
            Ok(-e1_series(y))
        } else {
            Ok(-stieltjes_fraction(y)? * (-y).exp())
        }
    } else if x <= EI_SERIES_LIMIT {
        Ok(ei_series(x))
    } else {
        Ok(ei_asymptotic(x))
    }
}

// e^{x} E1(x) = 1/(x + 1/(1 + 1/(x + 2/(1 + 2/(x + ...))))), evaluated
// bottom-up at increasing depth until two depths agree.
fn stieltjes_fraction(x: f64) -> Result<f64> {
    let eval = |depth: usize| {
        let mut tail = x;
        for k in (1..=depth).rev() {
            let k = k as f64;
            tail = x + k / (1.0 + k / tail);
        }
        1.0 / tail
    };
    let mut depth = 32;
    let mut prev = eval(depth);
    while depth < 1 << 16 {
        depth *= 2;
        let next = eval(depth);
        if (next - prev).abs() <= 2.0 * f64::EPSILON * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(FellerError::NonConvergence {
        what: "Ei continued fraction",
        terms: depth,
    })
}

// Ei(x) = gamma + ln x + sum_{k>=1} x^k / (k k!)
fn ei_series(x: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut power = 1.0;
    for k in 1..ITER_CAP {
        power *= x / k as f64;
        let term = power / k as f64;
        acc.add(term);
        if term.abs() < f64::EPSILON * 1e-2 * acc.value().abs() {
            break;
        }
    }
    EULER_GAMMA + x.ln() + acc.value()
}

// Ei(x) ~ e^x / x * sum_k k! / x^k, truncated at the smallest term.
fn ei_asymptotic(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..ITER_CAP {
        let next = term * k as f64 / x;
        if next >= term || next < f64::EPSILON * 1e-2 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    x.exp() / x * sum
}

/// Real part of the boundary value of `E1` on the negative axis,
/// `-Ei(-x)` for `x < 0`.
pub fn e1_negative_principal(x: f64) -> Result<f64> {
    if !(x < 0.0) {
        return Err(FellerError::domain("e1_negative_principal", x));
    }
    Ok(-exp_integral_ei(-x)?)
}

/// `E1` with the principal-value convention on both half-axes.
pub fn e1_principal(z: f64) -> Result<f64> {
    if z > 0.0 {
        exp_integral_e1(z)
    } else if z < 0.0 {
        e1_negative_principal(z)
    } else {
        Err(FellerError::domain("e1_principal", z))
    }
}

/// Kummer's function `M(a, b, z) = sum_n (a)_n z^n / ((b)_n n!)`.
///
/// Negative `z` goes through Kummer's transformation
/// `M(a, b, z) = e^z M(b - a, b, -z)` so that the summed series has no
/// cancellation when `b - a >= 0`.
pub fn kummer_m(a: f64, b: f64, z: f64, ctrl: &SeriesControl) -> Result<f64> {
    if b <= 0.0 && b.fract() == 0.0 {
        return Err(FellerError::domain(
            "kummer_m (b must not be a non-positive integer)",
            b,
        ));
    }
    if !a.is_finite() || !b.is_finite() || !z.is_finite() {
        return Err(FellerError::domain("kummer_m", z));
    }
    if z.abs() > KUMMER_MAX_ABS_Z {
        return Err(FellerError::NonConvergence {
            what: "kummer_m (|z| beyond series range)",
            terms: 0,
        });
    }
    if z < 0.0 {
        return Ok(z.exp() * kummer_series(b - a, b, -z, ctrl)?);
    }
    kummer_series(a, b, z, ctrl)
}

fn kummer_series(a: f64, b: f64, z: f64, ctrl: &SeriesControl) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    let mut term = 1.0;
    acc.add(term);
    if z == 0.0 {
        return Ok(1.0);
    }
    for n in 0..ctrl.max_terms {
        let n = n as f64;
        term *= (a + n) * z / ((b + n) * (n + 1.0));
        acc.add(term);
        if term == 0.0 {
            // a is a non-positive integer: the series terminated
            return Ok(acc.value());
        }
        // ratio test guards against stopping on a locally small term while
        // the series is still growing
        let ratio = ((a + n + 1.0) * z / ((b + n + 1.0) * (n + 2.0))).abs();
        if ratio < 1.0 && term.abs() <= ctrl.tol * acc.value().abs() {
            return Ok(acc.value());
        }
    }
    Err(FellerError::NonConvergence {
        what: "kummer_m",
        terms: ctrl.max_terms,
    })
}

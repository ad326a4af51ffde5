//! Mass-coordinate (pseudo-inverse) formulation.
//!
//! The unknowns are the positions `X_k(t)` of fixed cumulative-probability
//! levels `P_k`, stored through `Y_k = e^{gamma t} X_k`. With
//! `q_{k+1/2} = dP_{k+1/2} / (Y_{k+1} - Y_k)` the semi-discrete system is
//!
//! ```text
//! dY_0/dt = 0
//! dY_k/dt = -eta e^{gamma t} (Y_k / dP_k) (q_{k+1/2} - q_{k-1/2}),   0 < k < N
//! dY_N/dt = +eta e^{gamma t} (Y_N / dP_N) q_{N-1/2}
//! ```
//!
//! Positive reconstructed density is equivalent to strictly increasing
//! nodes, so every operation here rejects states that lose ordering.

use serde::{Deserialize, Serialize};

use crate::analytic::{FellerParams, SteadyStateParams};
use crate::error::{FellerError, Result};
use crate::quadrature::{integrate_to_infinity, QuadControl};

/// Shape of the initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum IcDescriptor {
    /// `(e^{-x/s1} + e^{-(x - x0)/s2}) / (s1 + s2 e^{x0/s2})`
    DoubleExp { sigma1: f64, sigma2: f64, x0: f64 },
    /// The zero-flux steady state `C2 e^{-gamma x/eta}` (only `C1 = 0` is a
    /// normalizable density).
    Steady { c1: f64, c2: f64 },
    /// Piecewise-linear density through `(x, p0)` samples, zero beyond the
    /// last abscissa.
    Tabulated { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    DoubleExp {
        s1: f64,
        s2: f64,
        x0: f64,
        norm: f64,
    },
    Exponential {
        rate: f64,
    },
    Tabulated {
        x: Vec<f64>,
        p: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

/// A normalized initial density with its primitive and quantile function.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    descriptor: IcDescriptor,
    shape: Shape,
}

impl InitialCondition {
    pub fn new(descriptor: IcDescriptor, params: &FellerParams) -> Result<Self> {
        let shape = match &descriptor {
            IcDescriptor::DoubleExp { sigma1, sigma2, x0 } => {
                if !(*sigma1 > 0.0 && *sigma2 > 0.0 && *x0 >= 0.0) {
                    return Err(FellerError::config(
                        "double_exp needs sigma1, sigma2 > 0 and x0 >= 0",
                    ));
                }
                Shape::DoubleExp {
                    s1: *sigma1,
                    s2: *sigma2,
                    x0: *x0,
                    norm: sigma1 + sigma2 * (x0 / sigma2).exp(),
                }
            }
            IcDescriptor::Steady { c1, c2 } => {
                let ss = SteadyStateParams { c1: *c1, c2: *c2 };
                if ss.c1 != 0.0 {
                    return Err(FellerError::config(
                        "steady initial data with C1 != 0 is not integrable on the half-line",
                    ));
                }
                if !(params.gamma > 0.0) || ss.c2 <= 0.0 {
                    return Err(FellerError::config(
                        "steady initial data needs gamma > 0 and C2 > 0 to be a density",
                    ));
                }
                // C2 only fixes the amplitude; the density is normalized
                Shape::Exponential {
                    rate: params.rate(),
                }
            }
            IcDescriptor::Tabulated { samples } => tabulated_shape(samples)?,
        };
        Ok(InitialCondition { descriptor, shape })
    }

    pub fn double_exp(sigma1: f64, sigma2: f64, x0: f64) -> Result<Self> {
        let dummy = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        Self::new(IcDescriptor::DoubleExp { sigma1, sigma2, x0 }, &dummy)
    }

    pub fn steady(params: &FellerParams, c2: f64) -> Result<Self> {
        Self::new(IcDescriptor::Steady { c1: 0.0, c2 }, params)
    }

    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self> {
        let dummy = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        Self::new(IcDescriptor::Tabulated { samples }, &dummy)
    }

    pub fn descriptor(&self) -> &IcDescriptor {
        &self.descriptor
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match &self.shape {
            Shape::DoubleExp { s1, s2, x0, norm } => {
                ((-x / s1).exp() + (-(x - x0) / s2).exp()) / norm
            }
            Shape::Exponential { rate } => rate * (-rate * x).exp(),
            Shape::Tabulated {
                x: xs,
                p,
                cumulative,
            } => {
                let last = *xs.last().expect("validated");
                if x > last {
                    return 0.0;
                }
                let j = segment(xs, x);
                let w = (x - xs[j]) / (xs[j + 1] - xs[j]);
                let total = *cumulative.last().expect("validated");
                (p[j] + w * (p[j + 1] - p[j])) / total
            }
        }
    }

    /// `1 - P0(x)`, computed without cancellation where a closed form exists.
    pub fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match &self.shape {
            Shape::DoubleExp { s1, s2, x0, norm } => {
                (s1 * (-x / s1).exp() + s2 * (-(x - x0) / s2).exp()) / norm
            }
            Shape::Exponential { rate } => (-rate * x).exp(),
            Shape::Tabulated { .. } => 1.0 - self.primitive(x),
        }
    }

    /// `P0(x) = int_0^x p0`.
    pub fn primitive(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.shape {
            Shape::DoubleExp { .. } => 1.0 - self.tail(x),
            Shape::Exponential { rate } => -(-rate * x).exp_m1(),
            Shape::Tabulated {
                x: xs,
                p,
                cumulative,
            } => {
                let total = *cumulative.last().expect("validated");
                let last = *xs.last().expect("validated");
                if x >= last {
                    return 1.0;
                }
                let j = segment(xs, x);
                let h = x - xs[j];
                let slope = (p[j + 1] - p[j]) / (xs[j + 1] - xs[j]);
                (cumulative[j] + h * (p[j] + 0.5 * slope * h)) / total
            }
        }
    }

    /// Pseudo-inverse `inf { x : P0(x) >= u }` for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(FellerError::domain("quantile", u));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.primitive(hi) < u {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(FellerError::TailNotReached {
                    tail_tol: 1.0 - u,
                    searched: hi,
                });
            }
        }
        let mut lo = 0.0;
        // safeguarded Newton on the bracket [lo, hi]
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.primitive(x) - u;
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.density(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi || f == 0.0 {
                break;
            }
        }
        Ok(x)
    }

    /// First moment `int_0^inf x p0(x) dx`: exact for tabulated data (the
    /// density is piecewise linear), by quadrature otherwise.
    pub fn first_moment(&self) -> Result<f64> {
        match &self.shape {
            Shape::Tabulated { x, p, cumulative } => {
                // int over [a, b] of x times the linear interpolant of (pa, pb)
                let sum: f64 = x
                    .windows(2)
                    .zip(p.windows(2))
                    .map(|(x, p)| {
                        (x[1] - x[0]) * (p[0] * (2.0 * x[0] + x[1]) + p[1] * (x[0] + 2.0 * x[1]))
                            / 6.0
                    })
                    .sum();
                Ok(sum / cumulative.last().expect("validated"))
            }
            _ => Ok(integrate_to_infinity(|s| s * self.density(s), 0.0, QuadControl::default())?.0),
        }
    }
}

fn segment(xs: &[f64], x: f64) -> usize {
    xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1
}

fn tabulated_shape(samples: &[(f64, f64)]) -> Result<Shape> {
    if samples.len() < 2 {
        return Err(FellerError::config(
            "tabulated initial data needs at least two samples",
        ));
    }
    if samples[0].0 != 0.0 {
        return Err(FellerError::config(
            "tabulated initial data must start at x = 0",
        ));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(FellerError::config(
            "tabulated abscissae must be strictly increasing",
        ));
    }
    if samples
        .iter()
        .any(|s| !(s.1 >= 0.0) || !s.0.is_finite() || !s.1.is_finite())
    {
        return Err(FellerError::config(
            "tabulated density must be finite and non-negative",
        ));
    }
    let x: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mut cumulative = Vec::with_capacity(x.len());
    cumulative.push(0.0);
    for j in 1..x.len() {
        let prev = cumulative[j - 1];
        cumulative.push(prev + 0.5 * (x[j] - x[j - 1]) * (p[j] + p[j - 1]));
    }
    if !(*cumulative.last().expect("non-empty") > 0.0) {
        return Err(FellerError::config("tabulated density has zero mass"));
    }
    Ok(Shape::Tabulated { x, p, cumulative })
}

/// How the initial node positions are laid out on `[0, l0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingStrategy {
    /// `x_1 .. x_N` geometrically spaced from `x_first` to `x_max`, plus
    /// `x_0 = 0`. Defaults: `x_max = l0`, `x_first = 1e-3 x_max`.
    LogSpaced {
        #[serde(default)]
        x_max: Option<f64>,
        #[serde(default)]
        x_first: Option<f64>,
    },
    Uniform,
    Custom {
        positions: Vec<f64>,
    },
}

/// Node count, tail cutoff and layout of the initial sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub tail_tol: f64,
    pub strategy: SamplingStrategy,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(FellerError::config("sampling.N must be at least 3"));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(FellerError::config("sampling.tail_tol must lie in (0, 1)"));
        }
        match &self.strategy {
            SamplingStrategy::LogSpaced { x_max, x_first } => {
                if matches!(x_max, Some(v) if !(*v > 0.0)) {
                    return Err(FellerError::config("log_spaced.x_max must be positive"));
                }
                if matches!(x_first, Some(v) if !(*v > 0.0)) {
                    return Err(FellerError::config("log_spaced.x_first must be positive"));
                }
                if let (Some(hi), Some(lo)) = (x_max, x_first) {
                    if lo >= hi {
                        return Err(FellerError::config(
                            "log_spaced.x_first must be below x_max",
                        ));
                    }
                }
            }
            SamplingStrategy::Uniform => {}
            SamplingStrategy::Custom { positions } => {
                if positions.len() != self.n + 1 {
                    return Err(FellerError::config(format!(
                        "custom sampling needs N + 1 = {} positions, got {}",
                        self.n + 1,
                        positions.len()
                    )));
                }
                check_positions(positions)?;
            }
        }
        Ok(())
    }
}

fn check_positions(positions: &[f64]) -> Result<()> {
    if positions.first() != Some(&0.0) {
        return Err(FellerError::config("node positions must start at 0"));
    }
    if positions
        .windows(2)
        .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return Err(FellerError::config(
            "node positions must be strictly increasing and finite",
        ));
    }
    Ok(())
}

/// Smallest `l0` with `1 - P0(l0) < tail_tol`, by bisection to a relative
/// bracket width of `1e-12`.
pub fn choose_domain_l0(ic: &InitialCondition, tail_tol: f64) -> Result<f64> {
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(FellerError::config("tail_tol must lie in (0, 1)"));
    }
    const SEARCH_LIMIT: f64 = 1e12;
    let mut hi = 1.0;
    while !(ic.tail(hi) < tail_tol) {
        hi *= 2.0;
        if hi > SEARCH_LIMIT {
            return Err(FellerError::TailNotReached {
                tail_tol,
                searched: SEARCH_LIMIT,
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if ic.tail(mid) < tail_tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Initial node positions `x_0 = 0 < x_1 < ... < x_N`.
pub fn initial_positions(cfg: &SamplingConfig, l0: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cfg.n;
    let positions = match &cfg.strategy {
        SamplingStrategy::Uniform => {
            if !(l0 > 0.0) {
                return Err(FellerError::config("uniform sampling needs l0 > 0"));
            }
            let mut v: Vec<f64> = (0..=n).map(|k| l0 * k as f64 / n as f64).collect();
            v[n] = l0;
            v
        }
        SamplingStrategy::LogSpaced { x_max, x_first } => {
            let hi = x_max.unwrap_or(l0);
            let lo = x_first.unwrap_or(1e-3 * hi);
            if !(hi > 0.0 && lo > 0.0 && lo < hi) {
                return Err(FellerError::config("log_spaced needs 0 < x_first < x_max"));
            }
            let (a, b) = (lo.log10(), hi.log10());
            let mut v = Vec::with_capacity(n + 1);
            v.push(0.0);
            v.extend((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)));
            v[1] = lo;
            v[n] = hi;
            v
        }
        SamplingStrategy::Custom { positions } => positions.clone(),
    };
    check_positions(&positions)?;
    Ok(positions)
}

/// Choice of the node weight `dP_k` from the two adjacent cell masses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    #[default]
    Arithmetic,
    Geometric,
}

impl std::str::FromStr for MeanKind {
    type Err = FellerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(MeanKind::Arithmetic),
            "geometric" => Ok(MeanKind::Geometric),
            other => Err(FellerError::config(format!("unknown mean kind '{other}'"))),
        }
    }
}

/// Fixed cumulative-probability levels and the spacings derived from them.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    cumulative: Vec<f64>,
    dp_half: Vec<f64>,
    dp_center: Vec<f64>,
    inv_dp_center: Vec<f64>,
    mean_kind: MeanKind,
}

impl MassGrid {
    /// Builds the grid from levels `P_0 < P_1 < ... < P_N`, `N >= 2`.
    pub fn from_cumulative(cumulative: Vec<f64>, mean_kind: MeanKind) -> Result<Self> {
        let n = cumulative.len().saturating_sub(1);
        if n < 2 {
            return Err(FellerError::config(
                "a mass grid needs at least three levels",
            ));
        }
        let dp_half: Vec<f64> = cumulative.windows(2).map(|w| w[1] - w[0]).collect();
        for (k, &dp) in dp_half.iter().enumerate() {
            let floor = 4.0 * f64::EPSILON * cumulative[k + 1].abs();
            if !(dp > floor) {
                return Err(FellerError::DegenerateGrid { index: k, dp });
            }
        }
        let mut dp_center = Vec::with_capacity(n + 1);
        // k = 0 carries a half cell; it multiplies X_0 = 0 in every sum
        dp_center.push(0.5 * dp_half[0]);
        for k in 1..n {
            let (left, right) = (dp_half[k - 1], dp_half[k]);
            dp_center.push(match mean_kind {
                MeanKind::Arithmetic => 0.5 * (left + right),
                MeanKind::Geometric => (left * right).sqrt(),
            });
        }
        dp_center.push(0.5 * (cumulative[n] - cumulative[n - 2]));
        Ok(MassGrid {
            cumulative,
            dp_half,
            inv_dp_center: dp_center.iter().map(|d| 1.0 / d).collect(),
            dp_center,
            mean_kind,
        })
    }

    /// Index of the last node.
    pub fn n(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `dP_{k+1/2} = P_{k+1} - P_k`, `k = 0..N-1`.
    pub fn dp_half(&self) -> &[f64] {
        &self.dp_half
    }

    /// Node weights `dP_k`, `k = 0..N`.
    pub fn dp_center(&self) -> &[f64] {
        &self.dp_center
    }

    /// `dP_N = (P_N - P_{N-2}) / 2`.
    pub fn dp_right(&self) -> f64 {
        self.dp_center[self.n()]
    }

    pub fn mean_kind(&self) -> MeanKind {
        self.mean_kind
    }
}

/// Time and node values `Y_k = e^{gamma t} X_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub y: Vec<f64>,
}

impl ParticleState {
    pub fn new(t: f64, y: Vec<f64>) -> Result<Self> {
        let state = ParticleState { t, y };
        state.check_ordering()?;
        Ok(state)
    }

    /// Fails with the first index whose right gap is not positive.
    pub fn check_ordering(&self) -> Result<()> {
        check_ordering(self.t, &self.y)
    }
}

pub(crate) fn check_ordering(t: f64, y: &[f64]) -> Result<()> {
    if y.first() != Some(&0.0) {
        return Err(FellerError::OrderingViolation { index: 0, t });
    }
    for (k, w) in y.windows(2).enumerate() {
        if !(w[1] - w[0] > 0.0) || !w[1].is_finite() {
            return Err(FellerError::OrderingViolation { index: k, t });
        }
    }
    Ok(())
}

/// Mass grid `P_k = P0(x_k)` and the initial state `Y_k(0) = x_k`.
pub fn build_mass_grid(
    ic: &InitialCondition,
    positions: &[f64],
    mean_kind: MeanKind,
) -> Result<(MassGrid, ParticleState)> {
    check_positions(positions)?;
    let cumulative: Vec<f64> = positions.iter().map(|&x| ic.primitive(x)).collect();
    let grid = MassGrid::from_cumulative(cumulative, mean_kind)?;
    let state = ParticleState::new(0.0, positions.to_vec())?;
    Ok((grid, state))
}

/// Right-hand side of the node equations, written into `out`.
pub fn lagrangian_rhs_into(
    t: f64,
    y: &[f64],
    grid: &MassGrid,
    params: &FellerParams,
    out: &mut [f64],
) -> Result<()> {
    let n = grid.n();
    debug_assert_eq!(y.len(), n + 1);
    debug_assert_eq!(out.len(), n + 1);
    let scale = params.eta * (params.gamma * t).exp();
    if let Some(k) = y.windows(2).position(|w| !(w[1] - w[0] > 0.0)) {
        return Err(FellerError::OrderingViolation { index: k, t });
    }
    // out[k + 1] temporarily holds q_{k+1/2}
    for ((q, w), dp) in out[1..].iter_mut().zip(y.windows(2)).zip(&grid.dp_half) {
        *q = dp / (w[1] - w[0]);
    }
    let q_last = out[n];
    out[0] = 0.0;
    for k in 1..n {
        out[k] = -scale * y[k] * grid.inv_dp_center[k] * (out[k + 1] - out[k]);
    }
    out[n] = scale * y[n] * grid.inv_dp_center[n] * q_last;
    Ok(())
}

/// Right-hand side `dY/dt` of the node equations.
pub fn lagrangian_rhs(
    state: &ParticleState,
    grid: &MassGrid,
    params: &FellerParams,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.y.len()];
    lagrangian_rhs_into(state.t, &state.y, grid, params, &mut out)?;
    Ok(out)
}

/// `P_N - P_0`.
pub fn total_probability(grid: &MassGrid) -> f64 {
    grid.cumulative[grid.n()] - grid.cumulative[0]
}

/// `sum_k dP_k X_k` with `X_k = e^{-gamma t} Y_k`.
///
/// Along the semi-discrete dynamics this obeys `M1' = eta m - gamma M1`
/// with `m` the total probability.
pub fn first_moment(state: &ParticleState, grid: &MassGrid, params: &FellerParams) -> f64 {
    let back = (-params.gamma * state.t).exp();
    grid.dp_center
        .iter()
        .zip(&state.y)
        .map(|(w, y)| w * y)
        .sum::<f64>()
        * back
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: FellerParams = FellerParams {
        gamma: 1.0,
        eta: 1.0,
    };

    fn steady_ic() -> InitialCondition {
        InitialCondition::steady(&UNIT, 1.0).unwrap()
    }

    #[test]
    fn domain_for_exponential_tail() {
        let l0 = choose_domain_l0(&steady_ic(), 1e-5).unwrap();
        let exact = -(1e-5f64).ln();
        assert!((l0 - exact).abs() < 1e-10 * exact, "{l0}");
        assert!(steady_ic().tail(l0) < 1e-5);
    }

    #[test]
    fn domain_shrinks_as_tolerance_approaches_one() {
        let l0 = choose_domain_l0(&steady_ic(), 1.0 - 1e-9).unwrap();
        assert!(l0 < 1e-8, "{l0}");
    }

    #[test]
    fn domain_for_double_exponential() {
        let ic = InitialCondition::double_exp(2.0, 1.0, 3.0).unwrap();
        let l0 = choose_domain_l0(&ic, 1e-5).unwrap();
        // independent root of 1 - P(x) = 1e-5 using the closed-form tail
        let f = |x: f64| (2.0 * (-x / 2.0).exp() + (-(x - 3.0)).exp()) / (2.0 + 3f64.exp()) - 1e-5;
        let (mut lo, mut hi) = (10.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((l0 - hi).abs() < 1e-9 * hi, "{l0} vs {hi}");
    }

    #[test]
    fn domain_fails_when_tail_never_drops() {
        // a flat tabulated density whose support ends before reaching the cut
        let ic = InitialCondition::tabulated(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert!(choose_domain_l0(&ic, 1e-5).is_ok());
        assert!(choose_domain_l0(&ic, 0.0).is_err());
    }

    #[test]
    fn position_layouts() {
        let uniform = SamplingConfig {
            n: 4,
            tail_tol: 1e-5,
            strategy: SamplingStrategy::Uniform,
        };
        assert_eq!(
            initial_positions(&uniform, 1.0).unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );

        let log = SamplingConfig {
            n: 100,
            tail_tol: 1e-5,
            strategy: SamplingStrategy::LogSpaced {
                x_max: Some(20.0),
                x_first: None,
            },
        };
        let v = initial_positions(&log, 18.0).unwrap();
        assert_eq!(v.len(), 101);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[100], 20.0);
        assert_eq!(v[1], 0.02);

        let small = SamplingConfig {
            n: 3,
            tail_tol: 1e-5,
            strategy: SamplingStrategy::LogSpaced {
                x_max: Some(10.0),
                x_first: Some(1e-3),
            },
        };
        let v = initial_positions(&small, 5.0).unwrap();
        let want = [0.0, 1e-3, 0.1, 10.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() <= 1e-15 * b, "{v:?}");
        }
    }

    #[test]
    fn invalid_sampling_configs() {
        let mut cfg = SamplingConfig {
            n: 2,
            tail_tol: 1e-5,
            strategy: SamplingStrategy::Uniform,
        };
        assert!(initial_positions(&cfg, 1.0).is_err());
        cfg.n = 3;
        cfg.tail_tol = 1.0;
        assert!(initial_positions(&cfg, 1.0).is_err());
        cfg.tail_tol = 1e-3;
        cfg.strategy = SamplingStrategy::Custom {
            positions: vec![0.0, 1.0, 0.5, 2.0],
        };
        assert!(initial_positions(&cfg, 1.0).is_err());
        cfg.strategy = SamplingStrategy::LogSpaced {
            x_max: Some(1.0),
            x_first: Some(0.0),
        };
        assert!(initial_positions(&cfg, 1.0).is_err());
    }

    #[test]
    fn grid_levels_from_closed_form() {
        let ic = steady_ic();
        let positions = [0.0, std::f64::consts::LN_2, 5.0, 11.5];
        let (grid, state) = build_mass_grid(&ic, &positions, MeanKind::Arithmetic).unwrap();
        assert_eq!(grid.cumulative()[0], 0.0);
        assert!((grid.cumulative()[1] - 0.5).abs() < 1e-16);
        assert_eq!(state.t, 0.0);
        assert_eq!(state.y, positions.to_vec());
        assert_eq!(grid.dp_half().len(), 3);
        assert!(
            (grid.dp_right() - 0.5 * (grid.cumulative()[3] - grid.cumulative()[1])).abs() < 1e-16
        );
    }

    #[test]
    fn geometric_mean_weights() {
        let grid =
            MassGrid::from_cumulative(vec![0.0, 0.1, 0.5, 0.9], MeanKind::Geometric).unwrap();
        assert!((grid.dp_center()[1] - (0.1f64 * 0.4).sqrt()).abs() < 1e-16);
        assert!((grid.dp_center()[2] - (0.4f64 * 0.4).sqrt()).abs() < 1e-16);
        assert_eq!(grid.mean_kind(), MeanKind::Geometric);
    }

    #[test]
    fn flat_density_is_rejected() {
        // zero density on [1, 2] leaves a cell without probability
        let ic = InitialCondition::tabulated(vec![(0.0, 1.0), (1.0, 0.0), (2.0, 0.0), (3.0, 1.0)])
            .unwrap();
        let err =
            build_mass_grid(&ic, &[0.0, 0.5, 1.2, 1.8, 3.0], MeanKind::Arithmetic).unwrap_err();
        assert!(
            matches!(err, FellerError::DegenerateGrid { index: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn tabulated_matches_closed_form_grid() {
        let ic = steady_ic();
        let samples: Vec<(f64, f64)> = (0..=40_000)
            .map(|j| {
                let x = 40.0 * j as f64 / 40_000.0;
                (x, (-x).exp())
            })
            .collect();
        let tab = InitialCondition::tabulated(samples).unwrap();
        let positions = [0.0, 0.3, 1.0, 2.0, 4.0, 8.0];
        let (a, _) = build_mass_grid(&ic, &positions, MeanKind::Arithmetic).unwrap();
        let (b, _) = build_mass_grid(&tab, &positions, MeanKind::Arithmetic).unwrap();
        for (pa, pb) in a.cumulative().iter().zip(b.cumulative()) {
            assert!((pa - pb).abs() < 1e-8, "{pa} vs {pb}");
        }
    }

    #[test]
    fn rhs_three_node_example() {
        let grid = MassGrid::from_cumulative(vec![0.0, 0.5, 1.0], MeanKind::Arithmetic).unwrap();
        let params = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 2.0]).unwrap();
        let d = lagrangian_rhs(&state, &grid, &params).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn rhs_rejects_collisions() {
        let grid = MassGrid::from_cumulative(vec![0.0, 0.5, 1.0], MeanKind::Arithmetic).unwrap();
        let state = ParticleState {
            t: 0.3,
            y: vec![0.0, 1.0, 1.0],
        };
        let err = lagrangian_rhs(&state, &grid, &UNIT).unwrap_err();
        assert!(matches!(
            err,
            FellerError::OrderingViolation { index: 1, .. }
        ));
        assert!(ParticleState::new(0.0, vec![0.1, 1.0]).is_err());
    }

    // For a sampled steady state, Y_t = gamma e^{gamma t} X. The deviation at
    // interior nodes is a consistency error that vanishes under refinement.
    // The boundary node is excluded: its zero-flux closure drops the tail
    // mass beyond x_N.
    #[test]
    fn rhs_consistent_with_steady_state_under_refinement() {
        let ic = steady_ic();
        let l0 = choose_domain_l0(&ic, 1e-5).unwrap();
        let mut prev = f64::INFINITY;
        for n in [125, 250, 500, 1000] {
            let cfg = SamplingConfig {
                n,
                tail_tol: 1e-5,
                strategy: SamplingStrategy::Uniform,
            };
            let positions = initial_positions(&cfg, l0).unwrap();
            let (grid, state) = build_mass_grid(&ic, &positions, MeanKind::Arithmetic).unwrap();
            let d = lagrangian_rhs(&state, &grid, &UNIT).unwrap();
            let dev = (1..n)
                .map(|k| (d[k] - state.y[k]).abs() / state.y[k])
                .fold(0.0, f64::max);
            assert!(dev < 0.5 * prev, "n={n}: {dev} vs {prev}");
            prev = dev;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn moments_and_mass() {
        let grid =
            MassGrid::from_cumulative(vec![0.0, 0.25, 0.6, 0.9], MeanKind::Arithmetic).unwrap();
        assert!((total_probability(&grid) - 0.9).abs() < 1e-16);
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let m = first_moment(&state, &grid, &UNIT);
        let doubled = ParticleState::new(0.0, state.y.iter().map(|y| 2.0 * y).collect()).unwrap();
        assert!((first_moment(&doubled, &grid, &UNIT) - 2.0 * m).abs() < 1e-15);
        // Y = e^{gamma t} X: same positions later in time give a smaller moment
        let later = ParticleState {
            t: 1.0,
            ..state.clone()
        };
        assert!((first_moment(&later, &grid, &UNIT) - m / std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_primitive() {
        let ic = InitialCondition::double_exp(2.0, 1.0, 3.0).unwrap();
        for &u in &[0.0, 1e-9, 0.1, 0.5, 0.9, 0.999_99] {
            let x = ic.quantile(u).unwrap();
            assert!((ic.primitive(x) - u).abs() < 1e-13, "u={u}");
        }
        assert!(ic.quantile(1.0).is_err());
    }

    #[test]
    fn first_moment_of_initial_data() {
        let ic = InitialCondition::double_exp(2.0, 1.0, 3.0).unwrap();
        let e3 = 3f64.exp();
        // int x e^{-x/2} = 4 and int x e^{-(x-3)} = e^3
        let want = (4.0 + e3) / (2.0 + e3);
        assert!((ic.first_moment().unwrap() - want).abs() < 1e-10);
        assert!((steady_ic().first_moment().unwrap() - 1.0).abs() < 1e-10);
        // right triangle on [0, 3] peaking at 3: mean 2
        let ramp = InitialCondition::tabulated(vec![(0.0, 0.0), (1.5, 1.0), (3.0, 2.0)]).unwrap();
        assert!((ramp.first_moment().unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn steady_descriptor_restrictions() {
        assert!(InitialCondition::new(IcDescriptor::Steady { c1: 1.0, c2: 1.0 }, &UNIT).is_err());
        let expanding = FellerParams {
            gamma: -0.1,
            eta: 1.0,
        };
        assert!(InitialCondition::steady(&expanding, 1.0).is_err());
    }
}

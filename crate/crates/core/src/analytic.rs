//! Exact solutions of the Feller equation and the tools that check them.
//!
//! All residuals are measured on the conservative form `p_t + F_x` with
//! `F = -x (gamma p + eta p_x)`.

use serde::{Deserialize, Serialize};

use crate::error::{FellerError, Result};
use crate::specfun::{e1_principal, kummer_m, SeriesControl};

/// Drift `gamma` (1/time) and diffusion `eta` (x/time) coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FellerParams {
    pub gamma: f64,
    pub eta: f64,
}

impl FellerParams {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        let params = FellerParams { gamma, eta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(FellerError::config("gamma must be finite"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(FellerError::config("eta must be positive and finite"));
        }
        Ok(())
    }

    /// `gamma / eta`, the decay rate of the zero-flux steady state.
    pub fn rate(&self) -> f64 {
        self.gamma / self.eta
    }
}

/// Weights of the two steady-state branches `C1 E1(-gamma x/eta)` and `C2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyStateParams {
    pub c1: f64,
    pub c2: f64,
}

impl SteadyStateParams {
    pub fn is_trivial(&self) -> bool {
        self.c1 == 0.0 && self.c2 == 0.0
    }
}

/// A point `(t, x, p)` of the graph of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionSample {
    pub t: f64,
    pub x: f64,
    pub p: f64,
}

/// `F = -x (gamma p + eta p_x)`.
pub fn physical_flux(params: &FellerParams, x: f64, p: f64, p_x: f64) -> f64 {
    -x * (params.gamma * p + params.eta * p_x)
}

/// Steady state `e^{-gamma x/eta} (C1 E1(-gamma x/eta) + C2)`; it carries the
/// constant flux `C1 eta`.
pub fn steady_state_p(params: &FellerParams, ss: &SteadyStateParams, x: f64) -> Result<f64> {
    let z = -params.rate() * x;
    if ss.c1 == 0.0 {
        return Ok(ss.c2 * z.exp());
    }
    if params.gamma == 0.0 {
        return Err(FellerError::domain(
            "steady_state_p (gamma = 0 with C1 != 0)",
            params.gamma,
        ));
    }
    if !(x > 0.0) {
        return Err(FellerError::domain("steady_state_p", x));
    }
    Ok(z.exp() * (ss.c1 * e1_principal(z)? + ss.c2))
}

/// Solution invariant under the third generator:
/// `(C2 - C1 t + (C1/gamma) ln x) e^{-gamma x/eta}`.
pub fn xi3_solution(params: &FellerParams, ss: &SteadyStateParams, t: f64, x: f64) -> Result<f64> {
    check_log_family(params, x, "xi3_solution")?;
    let g = params.gamma;
    Ok((ss.c2 - ss.c1 * t + ss.c1 / g * x.ln()) * (-g * x / params.eta).exp())
}

/// Solution invariant under the fourth generator:
/// `(C1 + C2 t + (C2/gamma) ln x) e^{gamma t}`.
pub fn xi4_solution(params: &FellerParams, ss: &SteadyStateParams, t: f64, x: f64) -> Result<f64> {
    check_log_family(params, x, "xi4_solution")?;
    let g = params.gamma;
    Ok((ss.c1 + ss.c2 * t + ss.c2 / g * x.ln()) * (g * t).exp())
}

fn check_log_family(params: &FellerParams, x: f64, what: &'static str) -> Result<()> {
    if params.gamma == 0.0 {
        return Err(FellerError::domain(what, params.gamma));
    }
    if !(x > 0.0) {
        return Err(FellerError::domain(what, x));
    }
    Ok(())
}

/// The five implemented one-parameter point symmetry groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    TimeShift,
    ScaleP,
    ExpScale3,
    ExpScale4,
    AddKummerM,
}

impl SymmetryKind {
    pub const ALL: [SymmetryKind; 5] = [
        SymmetryKind::TimeShift,
        SymmetryKind::ScaleP,
        SymmetryKind::ExpScale3,
        SymmetryKind::ExpScale4,
        SymmetryKind::AddKummerM,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SymmetryKind::TimeShift => "time_shift",
            SymmetryKind::ScaleP => "scale_p",
            SymmetryKind::ExpScale3 => "exp_scale_3",
            SymmetryKind::ExpScale4 => "exp_scale_4",
            SymmetryKind::AddKummerM => "add_kummer_m",
        }
    }
}

impl std::str::FromStr for SymmetryKind {
    type Err = FellerError;

    fn from_str(s: &str) -> Result<Self> {
        SymmetryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FellerError::config(format!("unknown symmetry kind '{s}'")))
    }
}

/// A group element: `kind` with parameter `epsilon`; `c` is the spectral
/// parameter of [`SymmetryKind::AddKummerM`] and is ignored otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryTransform {
    pub kind: SymmetryKind,
    pub epsilon: f64,
    pub c: f64,
}

impl SymmetryTransform {
    pub fn new(kind: SymmetryKind, epsilon: f64) -> Self {
        SymmetryTransform {
            kind,
            epsilon,
            c: 0.0,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// The group inverse, which for every implemented kind is the same map
    /// with `-epsilon`.
    pub fn inverse(&self) -> Self {
        SymmetryTransform {
            epsilon: -self.epsilon,
            ..*self
        }
    }
}

/// `e^{(gamma + c) t} M(1 + c/gamma, 1, gamma x/eta) e^{-gamma x/eta}`, the
/// particular solution added by [`SymmetryKind::AddKummerM`].
pub fn kummer_mode(params: &FellerParams, c: f64, t: f64, x: f64) -> Result<f64> {
    let g = params.gamma;
    if g == 0.0 {
        return Err(FellerError::domain("kummer_mode (gamma = 0)", g));
    }
    let z = g * x / params.eta;
    let m = kummer_m(1.0 + c / g, 1.0, z, &SeriesControl::default())?;
    Ok(m * (-z + (g + c) * t).exp())
}

/// Maps one point of a solution graph to the corresponding point of the
/// transformed solution.
pub fn apply_point_symmetry(
    tr: &SymmetryTransform,
    params: &FellerParams,
    s: SolutionSample,
) -> Result<SolutionSample> {
    let eps = tr.epsilon;
    let g = params.gamma;
    let SolutionSample { t, x, p } = s;
    match tr.kind {
        SymmetryKind::TimeShift => Ok(SolutionSample { t: t + eps, x, p }),
        SymmetryKind::ScaleP => Ok(SolutionSample {
            t,
            x,
            p: eps.exp() * p,
        }),
        SymmetryKind::ExpScale3 => {
            if g == 0.0 {
                return Err(FellerError::domain("exp_scale_3 (gamma = 0)", g));
            }
            let growth = (g * t).exp();
            let shifted = eps * g + growth;
            if !(shifted > 0.0) {
                return Err(FellerError::domain(
                    "exp_scale_3 (eps*gamma + e^{gamma t} <= 0)",
                    shifted,
                ));
            }
            Ok(SolutionSample {
                t: shifted.ln() / g,
                x: growth / shifted * x,
                p: (1.0 + eps * g / growth) * p,
            })
        }
        SymmetryKind::ExpScale4 => {
            if g == 0.0 {
                return Err(FellerError::domain("exp_scale_4 (gamma = 0)", g));
            }
            let growth = (g * t).exp();
            let denom = 1.0 - eps * g * growth;
            if !(denom > 0.0) {
                return Err(FellerError::domain(
                    "exp_scale_4 (1 - eps*gamma*e^{gamma t} <= 0)",
                    denom,
                ));
            }
            Ok(SolutionSample {
                t: t - denom.ln() / g,
                x: x / denom,
                p: (-eps * g * g * x * growth / (params.eta * denom)).exp() * p,
            })
        }
        SymmetryKind::AddKummerM => Ok(SolutionSample {
            t,
            x,
            p: p + eps * kummer_mode(params, tr.c, t, x)?,
        }),
    }
}

/// Evaluates the image of `solution` under `tr` at `(t, x)`: the point is
/// pulled back with the inverse element, the original solution is sampled
/// there and the sample is pushed forward.
pub fn transformed_solution<F>(
    tr: SymmetryTransform,
    params: FellerParams,
    solution: F,
) -> impl Fn(f64, f64) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    move |t, x| {
        let source = apply_point_symmetry(&tr.inverse(), &params, SolutionSample { t, x, p: 0.0 })?;
        let p = solution(source.t, source.x)?;
        let image = apply_point_symmetry(&tr, &params, SolutionSample { p, ..source })?;
        Ok(image.p)
    }
}

/// Tensor grid of `(t, x)` points at which a residual is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualGrid {
    pub t_range: (f64, f64),
    pub nt: usize,
    pub x_range: (f64, f64),
    pub nx: usize,
}

impl ResidualGrid {
    fn axis(range: (f64, f64), n: usize) -> impl Iterator<Item = f64> {
        let step = if n > 1 {
            (range.1 - range.0) / (n - 1) as f64
        } else {
            0.0
        };
        (0..n).map(move |i| range.0 + step * i as f64)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        Self::axis(self.t_range, self.nt)
            .flat_map(move |t| Self::axis(self.x_range, self.nx).map(move |x| (t, x)))
    }
}

/// Max and root-mean-square norms of a residual field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max: f64,
    pub rms: f64,
}

/// Residual of `p_t + F_x` by centered differences: the time derivative with
/// half-width `h_t`, the flux evaluated at the staggered points `x +/- h_x/2`
/// from the neighbouring samples.
pub fn pde_residual<F>(
    solution: F,
    params: &FellerParams,
    grid: &ResidualGrid,
    h_t: f64,
    h_x: f64,
) -> Result<ResidualReport>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let mut max: f64 = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (t, x) in grid.points() {
        let p_t = (solution(t + h_t, x)? - solution(t - h_t, x)?) / (2.0 * h_t);
        let left = solution(t, x - h_x)?;
        let mid = solution(t, x)?;
        let right = solution(t, x + h_x)?;
        let flux_right = physical_flux(
            params,
            x + 0.5 * h_x,
            0.5 * (mid + right),
            (right - mid) / h_x,
        );
        let flux_left = physical_flux(
            params,
            x - 0.5 * h_x,
            0.5 * (left + mid),
            (mid - left) / h_x,
        );
        let r = p_t + (flux_right - flux_left) / h_x;
        max = max.max(r.abs());
        sum_sq += r * r;
        count += 1;
    }
    Ok(ResidualReport {
        max,
        rms: if count > 0 {
            (sum_sq / count as f64).sqrt()
        } else {
            0.0
        },
    })
}

/// Observed order `log2(e_coarse / e_fine)` between consecutive halvings.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Density samples `p(x_j, t)` on an arbitrary increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

/// Flux `G` of the conservation law `(E1(-gamma x/eta) p)_t + G_x = 0`.
pub fn conservation_flux(params: &FellerParams, x: f64, p: f64, p_x: f64) -> Result<f64> {
    let w = e1_principal(-params.rate() * x)?;
    Ok(-params.eta * (params.rate() * x).exp() * p
        - x * (params.gamma * w * p + params.eta * w * p_x))
}

/// Value and first derivative at `s` of the quadratic through the three
/// samples nearest to `s`.
fn quadratic_at(x: &[f64], p: &[f64], s: f64) -> (f64, f64) {
    let n = x.len();
    let j = x.partition_point(|&v| v <= s).clamp(1, n - 1) - 1;
    // choose the stencil {j-1, j, j+1} or {j, j+1, j+2}, whichever is tighter
    let start = if j == 0 {
        0
    } else if j + 2 >= n {
        n - 3
    } else if s - x[j - 1] <= x[j + 2] - s {
        j - 1
    } else {
        j
    };
    let (x0, x1, x2) = (x[start], x[start + 1], x[start + 2]);
    let (p0, p1, p2) = (p[start], p[start + 1], p[start + 2]);
    let l0 = (s - x1) * (s - x2) / ((x0 - x1) * (x0 - x2));
    let l1 = (s - x0) * (s - x2) / ((x1 - x0) * (x1 - x2));
    let l2 = (s - x0) * (s - x1) / ((x2 - x0) * (x2 - x1));
    let d0 = ((s - x1) + (s - x2)) / ((x0 - x1) * (x0 - x2));
    let d1 = ((s - x0) + (s - x2)) / ((x1 - x0) * (x1 - x2));
    let d2 = ((s - x0) + (s - x1)) / ((x2 - x0) * (x2 - x1));
    (p0 * l0 + p1 * l1 + p2 * l2, p0 * d0 + p1 * d1 + p2 * d2)
}

/// Linear interpolation of the samples at `s`, which lies inside them.
fn linear_at(x: &[f64], p: &[f64], s: f64) -> f64 {
    let j = x.partition_point(|&v| v <= s).clamp(1, x.len() - 1);
    let f = (s - x[j - 1]) / (x[j] - x[j - 1]);
    p[j - 1] + f * (p[j] - p[j - 1])
}

// Trapezoid rule over the piecewise-linear interpolant. Its value moves
// continuously as samples cross `a` or `b`, so differencing it in time does
// not pick up stencil-switching jumps.
fn weighted_mass(params: &FellerParams, snap: &DensitySnapshot, a: f64, b: f64) -> Result<f64> {
    let weight = |x: f64| e1_principal(-params.rate() * x);
    let mut nodes = vec![(a, linear_at(&snap.x, &snap.p, a))];
    nodes.extend(
        snap.x
            .iter()
            .zip(&snap.p)
            .filter(|(x, _)| **x > a && **x < b)
            .map(|(x, p)| (*x, *p)),
    );
    nodes.push((b, linear_at(&snap.x, &snap.p, b)));
    let mut total = 0.0;
    let mut prev = (a, weight(a)? * nodes[0].1);
    for &(x, p) in &nodes[1..] {
        let cur = (x, weight(x)? * p);
        total += 0.5 * (cur.0 - prev.0) * (cur.1 + prev.1);
        prev = cur;
    }
    Ok(total)
}

/// Checks `d/dt int_a^b E1(-gamma x/eta) p dx = G(a) - G(b)` along a series
/// of density snapshots and returns the largest discrepancy over the
/// interior snapshot times.
///
/// The weighted mass is integrated with the trapezoid rule; the time
/// derivative uses centered differences between neighbouring snapshots;
/// `p` and `p_x` at the interval ends come from local quadratic fits.
pub fn conservation_law_check(
    snapshots: &[DensitySnapshot],
    params: &FellerParams,
    a: f64,
    b: f64,
) -> Result<f64> {
    if !(a > 0.0) {
        return Err(FellerError::domain(
            "conservation_law_check (interval touches x = 0)",
            a,
        ));
    }
    if !(b > a) {
        return Err(FellerError::domain(
            "conservation_law_check (need b > a)",
            b,
        ));
    }
    if params.gamma == 0.0 {
        return Err(FellerError::domain(
            "conservation_law_check (gamma = 0)",
            0.0,
        ));
    }
    if snapshots.len() < 3 {
        return Err(FellerError::config(
            "conservation_law_check needs at least three snapshots",
        ));
    }
    for snap in snapshots {
        if snap.x.len() < 3 || snap.x.len() != snap.p.len() {
            return Err(FellerError::config(
                "density snapshot needs >= 3 matching samples",
            ));
        }
        if a <= snap.x[0] || b >= *snap.x.last().expect("non-empty") {
            return Err(FellerError::domain(
                "conservation_law_check (interval not inside samples)",
                b,
            ));
        }
    }
    let masses = snapshots
        .iter()
        .map(|s| weighted_mass(params, s, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mut defect: f64 = 0.0;
    for i in 1..snapshots.len() - 1 {
        let rate = (masses[i + 1] - masses[i - 1]) / (snapshots[i + 1].t - snapshots[i - 1].t);
        let s = &snapshots[i];
        let (pa, pxa) = quadratic_at(&s.x, &s.p, a);
        let (pb, pxb) = quadratic_at(&s.x, &s.p, b);
        let net = conservation_flux(params, a, pa, pxa)? - conservation_flux(params, b, pb, pxb)?;
        defect = defect.max((rate - net).abs());
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: FellerParams = FellerParams {
        gamma: 1.0,
        eta: 1.0,
    };

    fn pure_exp() -> SteadyStateParams {
        SteadyStateParams { c1: 0.0, c2: 1.0 }
    }

    #[test]
    fn params_validation() {
        assert!(FellerParams::new(1.0, 0.0).is_err());
        assert!(FellerParams::new(f64::NAN, 1.0).is_err());
        assert!(FellerParams::new(-0.1, 1.0).is_ok());
    }

    #[test]
    fn steady_state_values() {
        assert_eq!(steady_state_p(&UNIT, &pure_exp(), 0.0).unwrap(), 1.0);
        for &x in &[0.1, 1.0, 7.5] {
            let v = steady_state_p(&UNIT, &pure_exp(), x).unwrap();
            assert!((v - (-x).exp()).abs() < 1e-16);
        }
        let general = SteadyStateParams { c1: 1.0, c2: 0.5 };
        assert!(steady_state_p(&UNIT, &general, 0.0).is_err());
        let flat = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        assert!(steady_state_p(&flat, &general, 1.0).is_err());
    }

    #[test]
    fn flux_vanishes_at_origin() {
        assert_eq!(physical_flux(&UNIT, 0.0, 3.0, -7.0), 0.0);
    }

    #[test]
    fn steady_state_carries_flux_c1_eta() {
        for params in [
            UNIT,
            FellerParams {
                gamma: -0.3,
                eta: 2.0,
            },
            FellerParams {
                gamma: 0.7,
                eta: 0.5,
            },
        ] {
            for ss in [pure_exp(), SteadyStateParams { c1: 0.8, c2: -0.2 }] {
                for &x in &[0.3, 1.0, 2.5] {
                    let h = 1e-5;
                    let p = steady_state_p(&params, &ss, x).unwrap();
                    let p_x = (steady_state_p(&params, &ss, x + h).unwrap()
                        - steady_state_p(&params, &ss, x - h).unwrap())
                        / (2.0 * h);
                    let f = physical_flux(&params, x, p, p_x);
                    assert!(
                        (f - ss.c1 * params.eta).abs() < 1e-7,
                        "{params:?} {ss:?} x={x}: {f}"
                    );
                }
            }
        }
    }

    #[test]
    fn invariant_families_special_points() {
        let v = xi3_solution(&UNIT, &pure_exp(), 2.0, 1.3).unwrap();
        assert!((v - (-1.3f64).exp()).abs() < 1e-16);
        let ss = SteadyStateParams { c1: 1.0, c2: 0.0 };
        assert_eq!(xi3_solution(&UNIT, &ss, 0.0, 1.0).unwrap(), 0.0);
        assert!(xi3_solution(&UNIT, &ss, 0.0, 0.0).is_err());
        assert!(xi4_solution(&UNIT, &ss, 0.0, -1.0).is_err());
    }

    #[test]
    fn symmetry_identity_at_zero_parameter() {
        let s = SolutionSample {
            t: 0.4,
            x: 1.7,
            p: 0.3,
        };
        for kind in SymmetryKind::ALL {
            let out = apply_point_symmetry(&SymmetryTransform::new(kind, 0.0), &UNIT, s).unwrap();
            assert!(
                (out.t - s.t).abs() < 1e-15
                    && (out.x - s.x).abs() < 1e-15
                    && (out.p - s.p).abs() < 1e-15,
                "{kind:?}"
            );
        }
    }

    #[test]
    fn time_shift_is_a_translation() {
        let s = SolutionSample {
            t: 0.4,
            x: 1.7,
            p: 0.3,
        };
        let out = apply_point_symmetry(
            &SymmetryTransform::new(SymmetryKind::TimeShift, 0.25),
            &UNIT,
            s,
        )
        .unwrap();
        assert_eq!(
            out,
            SolutionSample {
                t: 0.65,
                x: 1.7,
                p: 0.3
            }
        );
    }

    #[test]
    fn exp_scale_domains() {
        let s = SolutionSample {
            t: 0.0,
            x: 1.0,
            p: 1.0,
        };
        // eps*gamma + 1 <= 0
        assert!(apply_point_symmetry(
            &SymmetryTransform::new(SymmetryKind::ExpScale3, -1.0),
            &UNIT,
            s
        )
        .is_err());
        // 1 - eps*gamma <= 0
        assert!(apply_point_symmetry(
            &SymmetryTransform::new(SymmetryKind::ExpScale4, 1.0),
            &UNIT,
            s
        )
        .is_err());
        let flat = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        assert!(apply_point_symmetry(
            &SymmetryTransform::new(SymmetryKind::AddKummerM, 0.1),
            &flat,
            s
        )
        .is_err());
    }

    #[test]
    fn zero_solution_has_zero_residual() {
        let grid = ResidualGrid {
            t_range: (0.0, 1.0),
            nt: 4,
            x_range: (0.5, 2.0),
            nx: 5,
        };
        let r = pde_residual(|_, _| Ok(0.0), &UNIT, &grid, 1e-2, 1e-2).unwrap();
        assert_eq!(r.max, 0.0);
        assert_eq!(r.rms, 0.0);
    }

    #[test]
    fn residual_of_steady_state_is_second_order() {
        let grid = ResidualGrid {
            t_range: (0.0, 1.0),
            nt: 3,
            x_range: (0.5, 3.0),
            nx: 11,
        };
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                pde_residual(
                    |_, x| steady_state_p(&UNIT, &pure_exp(), x),
                    &UNIT,
                    &grid,
                    h,
                    h,
                )
                .unwrap()
                .max
            })
            .collect();
        for order in observed_orders(&errs) {
            assert!((order - 2.0).abs() < 0.3, "{errs:?}");
        }
    }

    #[test]
    fn quadratic_fit_is_exact_on_parabolas() {
        let x = [0.0, 0.3, 1.0, 1.4, 2.2];
        let p: Vec<f64> = x.iter().map(|v| 2.0 - v + 0.5 * v * v).collect();
        for &s in &[0.1, 0.9, 1.2, 2.0] {
            let (v, d) = quadratic_at(&x, &p, s);
            assert!((v - (2.0 - s + 0.5 * s * s)).abs() < 1e-13);
            assert!((d - (-1.0 + s)).abs() < 1e-13);
        }
    }

    #[test]
    fn conservation_check_zero_and_steady_data() {
        let xs: Vec<f64> = (0..=400).map(|j| 0.05 * j as f64).collect();
        let zero: Vec<DensitySnapshot> = (0..5)
            .map(|i| DensitySnapshot {
                t: i as f64,
                x: xs.clone(),
                p: vec![0.0; xs.len()],
            })
            .collect();
        assert_eq!(
            conservation_law_check(&zero, &UNIT, 1.0, 10.0).unwrap(),
            0.0
        );

        let steady: Vec<DensitySnapshot> = (0..5)
            .map(|i| DensitySnapshot {
                t: i as f64,
                x: xs.clone(),
                p: xs.iter().map(|x| (-x).exp()).collect(),
            })
            .collect();
        let d = conservation_law_check(&steady, &UNIT, 1.0, 10.0).unwrap();
        assert!(d < 1e-3, "{d}");
        assert!(conservation_law_check(&steady, &UNIT, 0.0, 10.0).is_err());
        assert!(conservation_law_check(&steady, &UNIT, 1.0, 25.0).is_err());
    }
}

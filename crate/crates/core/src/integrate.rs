//! Time marching for the node equations.
//!
//! Both steppers keep the nodes strictly increasing: a step whose stages or
//! result lose ordering is rejected and retried with a smaller step.

use serde::{Deserialize, Serialize};

use crate::analytic::FellerParams;
use crate::error::{FellerError, Result};
use crate::lagrange::{check_ordering, lagrangian_rhs_into, MassGrid, ParticleState};

/// Step-size controller settings for [`rk45_advance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub abstol: f64,
    pub reltol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_grow")]
    pub grow_max: f64,
    #[serde(default = "default_shrink")]
    pub shrink_min: f64,
}

fn default_safety() -> f64 {
    0.9
}

fn default_grow() -> f64 {
    5.0
}

fn default_shrink() -> f64 {
    0.2
}

impl StepControl {
    /// Defaults for a run of length `horizon`: `dt_init = 1e-4 T`,
    /// `dt_min = 1e-12 T`, `dt_max = T`.
    pub fn for_horizon(horizon: f64, abstol: f64, reltol: f64) -> Self {
        StepControl {
            abstol,
            reltol,
            dt_init: 1e-4 * horizon,
            dt_min: 1e-12 * horizon,
            dt_max: horizon,
            safety: default_safety(),
            grow_max: default_grow(),
            shrink_min: default_shrink(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abstol > 0.0) {
            return Err(FellerError::config("step.abstol must be positive"));
        }
        if !(self.reltol > 0.0 && self.reltol < 1.0) {
            return Err(FellerError::config("step.reltol must lie in (0, 1)"));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(FellerError::config(
                "step sizes must satisfy 0 < dt_min <= dt_init <= dt_max",
            ));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(FellerError::config("step.safety must lie in (0, 1]"));
        }
        if !(self.shrink_min > 0.0 && self.shrink_min < 1.0 && self.grow_max > 1.0) {
            return Err(FellerError::config(
                "step controller needs 0 < shrink_min < 1 < grow_max",
            ));
        }
        Ok(())
    }
}

/// Step counts and the states at the requested output times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub accepted: usize,
    pub rejected: usize,
    /// States at the requested output times inside `[t0, t_end]`, in order.
    pub outputs: Vec<ParticleState>,
    /// State at `t_end`.
    pub last: ParticleState,
}

/// One forward-Euler update. Fails if the result loses ordering.
pub fn euler_step(
    state: &ParticleState,
    grid: &MassGrid,
    params: &FellerParams,
    dt: f64,
) -> Result<ParticleState> {
    if !(dt >= 0.0) {
        return Err(FellerError::domain("euler step", dt));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let mut slope = vec![0.0; state.y.len()];
    lagrangian_rhs_into(state.t, &state.y, grid, params, &mut slope)?;
    let y: Vec<f64> = state
        .y
        .iter()
        .zip(&slope)
        .map(|(y, d)| y + dt * d)
        .collect();
    let t = state.t + dt;
    check_ordering(t, &y)?;
    Ok(ParticleState { t, y })
}

/// Fixed-step forward Euler to `t_end`. A step that breaks ordering is
/// halved and retried; the step then stays at the reduced size.
pub fn euler_advance(
    state: &ParticleState,
    grid: &MassGrid,
    params: &FellerParams,
    t_end: f64,
    dt: f64,
    dt_min: f64,
) -> Result<ParticleState> {
    if !(dt > 0.0 && dt_min > 0.0) {
        return Err(FellerError::config(
            "euler stepping needs dt > 0 and dt_min > 0",
        ));
    }
    let mut current = state.clone();
    let mut h = dt;
    while current.t < t_end {
        let remaining = t_end - current.t;
        // absorb a rounding-sized remainder into the final step
        let last = remaining <= h * (1.0 + 1e-9);
        let step = if last { remaining } else { h };
        match euler_step(&current, grid, params, step) {
            Ok(mut next) => {
                if last {
                    next.t = t_end;
                }
                current = next;
            }
            Err(FellerError::OrderingViolation { .. }) => {
                h *= 0.5;
                if h < dt_min {
                    return Err(FellerError::StepSizeUnderflow {
                        t: current.t,
                        dt_min,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(current)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            next: vec![0.0; n],
        }
    }
}

/// Attempts one step of size `h` from `(t, y)` with `k[0] = f(t, y)`.
/// Returns the weighted max-norm error, or `None` when a stage or the
/// result loses ordering.
fn dp_attempt(
    t: f64,
    y: &[f64],
    h: f64,
    grid: &MassGrid,
    params: &FellerParams,
    ctrl: &StepControl,
    ws: &mut Workspace,
) -> Result<Option<f64>> {
    let Workspace { k, stage, next } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    macro_rules! stage {
        ($c:expr, $out:expr, $body:expr) => {{
            for (i, s) in stage.iter_mut().enumerate() {
                *s = y[i] + h * $body(i);
            }
            match lagrangian_rhs_into(t + $c * h, stage, grid, params, $out) {
                Ok(()) => {}
                Err(FellerError::OrderingViolation { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }};
    }
    stage!(C2, k2, |i| A21 * k1[i]);
    stage!(C3, k3, |i| A31 * k1[i] + A32 * k2[i]);
    stage!(C4, k4, |i| A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    stage!(C5, k5, |i| A51 * k1[i]
        + A52 * k2[i]
        + A53 * k3[i]
        + A54 * k4[i]);
    stage!(1.0, k6, |i| A61 * k1[i]
        + A62 * k2[i]
        + A63 * k3[i]
        + A64 * k4[i]
        + A65 * k5[i]);
    for (i, v) in next.iter_mut().enumerate() {
        *v = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    match lagrangian_rhs_into(t + h, next, grid, params, k7) {
        Ok(()) => {}
        Err(FellerError::OrderingViolation { .. }) => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut err: f64 = 0.0;
    for i in 0..y.len() {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = ctrl.abstol + ctrl.reltol * y[i].abs().max(next[i].abs());
        err = err.max(e.abs() / scale);
    }
    Ok(Some(err))
}

/// Adaptive Dormand–Prince (4,5) integration from `state.t` to `t_end`.
///
/// Steps are truncated to land exactly on each output time in
/// `(state.t, t_end]` and on `t_end`. `observer` sees every accepted state.
pub fn rk45_advance(
    state: &ParticleState,
    grid: &MassGrid,
    params: &FellerParams,
    t_end: f64,
    ctrl: &StepControl,
    output_times: &[f64],
    mut observer: Option<&mut dyn FnMut(&ParticleState)>,
) -> Result<TrajectoryRecord> {
    ctrl.validate()?;
    state.check_ordering()?;
    if !(t_end >= state.t) {
        return Err(FellerError::config(
            "t_end must not precede the current time",
        ));
    }
    if output_times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(FellerError::config("output times must be non-decreasing"));
    }
    let mut outputs = Vec::new();
    let mut pending = output_times
        .iter()
        .copied()
        .filter(|&t| t <= t_end)
        .peekable();
    while let Some(&t) = pending.peek() {
        if t > state.t {
            break;
        }
        if t == state.t {
            outputs.push(state.clone());
        }
        pending.next();
    }

    let n = state.y.len();
    let mut ws = Workspace::new(n);
    let mut t = state.t;
    let mut y = state.y.clone();
    let mut accepted = 0;
    let mut rejected = 0;
    let mut h = ctrl.dt_init.min(ctrl.dt_max);
    if t < t_end {
        lagrangian_rhs_into(t, &y, grid, params, &mut ws.k[0])?;
    }
    while t < t_end {
        let target = pending.peek().copied().unwrap_or(t_end).min(t_end);
        let landing = t + h >= target;
        let step = if landing { target - t } else { h };
        match dp_attempt(t, &y, step, grid, params, ctrl, &mut ws)? {
            Some(err) if err <= 1.0 => {
                accepted += 1;
                t = if landing { target } else { t + step };
                std::mem::swap(&mut y, &mut ws.next);
                ws.k.swap(0, 6);
                let factor = if err == 0.0 {
                    ctrl.grow_max
                } else {
                    (ctrl.safety * err.powf(-0.2)).clamp(ctrl.shrink_min, ctrl.grow_max)
                };
                // a truncated landing step does not limit the next proposal
                h = (step * factor)
                    .max(if landing { h } else { 0.0 })
                    .min(ctrl.dt_max);
                let current = ParticleState { t, y: y.clone() };
                if let Some(obs) = observer.as_mut() {
                    obs(&current);
                }
                while let Some(&to) = pending.peek() {
                    if to > t {
                        break;
                    }
                    outputs.push(current.clone());
                    pending.next();
                }
            }
            outcome => {
                rejected += 1;
                let factor = match outcome {
                    Some(err) => (ctrl.safety * err.powf(-0.2)).clamp(ctrl.shrink_min, 1.0),
                    None => ctrl.shrink_min,
                };
                h = step * factor;
                if h < ctrl.dt_min {
                    return Err(FellerError::StepSizeUnderflow {
                        t,
                        dt_min: ctrl.dt_min,
                    });
                }
            }
        }
    }
    Ok(TrajectoryRecord {
        accepted,
        rejected,
        outputs,
        last: ParticleState { t, y },
    })
}

/// Explicit Eulerian stability bound `dx_min^2 / (2 eta X_N)` for the
/// current node spacing. Diagnostic only.
pub fn cfl_reference_dt(state: &ParticleState, params: &FellerParams) -> f64 {
    let back = (-params.gamma * state.t).exp();
    let dx_min = state
        .y
        .windows(2)
        .map(|w| (w[1] - w[0]) * back)
        .fold(f64::INFINITY, f64::min);
    let x_n = state.y.last().copied().unwrap_or(0.0) * back;
    dx_min * dx_min / (2.0 * params.eta * x_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrange::MeanKind;

    fn two_cell_grid() -> MassGrid {
        MassGrid::from_cumulative(vec![0.0, 0.5, 1.0], MeanKind::Arithmetic).unwrap()
    }

    // With P = [0, 1/2, 1] and Y(0) = [0, 1, 3] the system is self-similar:
    // Y(t) = s(t) Y(0), s' = (eta/2) e^{gamma t}.
    fn similarity_scale(params: &FellerParams, t: f64) -> f64 {
        let kappa = 0.5 * params.eta;
        if params.gamma == 0.0 {
            1.0 + kappa * t
        } else {
            1.0 + kappa * (params.gamma * t).exp_m1() / params.gamma
        }
    }

    #[test]
    fn euler_hand_example() {
        let params = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 2.0]).unwrap();
        let next = euler_step(&state, &two_cell_grid(), &params, 0.1).unwrap();
        assert_eq!(next.y[0], 0.0);
        assert_eq!(next.y[1], 1.0);
        assert!((next.y[2] - 2.2).abs() < 1e-15);
        assert!((next.t - 0.1).abs() < 1e-16);
        assert_eq!(
            euler_step(&state, &two_cell_grid(), &params, 0.0).unwrap(),
            state
        );
    }

    #[test]
    fn euler_rejects_overshoot() {
        let params = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        let grid =
            MassGrid::from_cumulative(vec![0.0, 0.1, 0.2, 1.0], MeanKind::Arithmetic).unwrap();
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 1.001, 5.0]).unwrap();
        assert!(matches!(
            euler_step(&state, &grid, &params, 1.0),
            Err(FellerError::OrderingViolation { .. })
        ));
        let done = euler_advance(&state, &grid, &params, 1e-3, 1.0, 1e-12).unwrap();
        assert_eq!(done.t, 1e-3);
        done.check_ordering().unwrap();
    }

    #[test]
    fn rk45_matches_self_similar_pair() {
        for params in [
            FellerParams {
                gamma: 0.0,
                eta: 1.0,
            },
            FellerParams {
                gamma: 0.7,
                eta: 1.3,
            },
            FellerParams {
                gamma: -0.4,
                eta: 0.5,
            },
        ] {
            let state = ParticleState::new(0.0, vec![0.0, 1.0, 3.0]).unwrap();
            let ctrl = StepControl::for_horizon(1.0, 1e-8, 1e-8);
            let rec =
                rk45_advance(&state, &two_cell_grid(), &params, 1.0, &ctrl, &[], None).unwrap();
            let s = similarity_scale(&params, 1.0);
            assert_eq!(rec.last.t, 1.0);
            assert!(
                (rec.last.y[2] - 3.0 * s).abs() <= 1e-8,
                "{params:?}: {} vs {}",
                rec.last.y[2],
                3.0 * s
            );
            assert!((rec.last.y[1] - s).abs() <= 1e-8);
        }
    }

    #[test]
    fn rk45_zero_horizon_is_identity() {
        let params = FellerParams {
            gamma: 1.0,
            eta: 1.0,
        };
        let state = ParticleState::new(2.0, vec![0.0, 1.0, 3.0]).unwrap();
        let ctrl = StepControl::for_horizon(1.0, 1e-6, 1e-6);
        let rec =
            rk45_advance(&state, &two_cell_grid(), &params, 2.0, &ctrl, &[2.0], None).unwrap();
        assert_eq!(rec.accepted + rec.rejected, 0);
        assert_eq!(rec.last, state);
        assert_eq!(rec.outputs, vec![state]);
    }

    #[test]
    fn rk45_lands_on_output_times() {
        let params = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 3.0]).unwrap();
        let ctrl = StepControl::for_horizon(2.0, 1e-9, 1e-9);
        let times = [0.0, 0.25, 0.5, 1.3, 2.0, 5.0];
        let mut seen = Vec::new();
        let mut obs = |s: &ParticleState| seen.push(s.t);
        let rec = rk45_advance(
            &state,
            &two_cell_grid(),
            &params,
            2.0,
            &ctrl,
            &times,
            Some(&mut obs),
        )
        .unwrap();
        let got: Vec<f64> = rec.outputs.iter().map(|s| s.t).collect();
        assert_eq!(got, vec![0.0, 0.25, 0.5, 1.3, 2.0]);
        assert_eq!(seen.len(), rec.accepted);
        assert!(seen.windows(2).all(|w| w[1] > w[0]));
        for out in &rec.outputs {
            let s = similarity_scale(&params, out.t);
            assert!((out.y[2] - 3.0 * s).abs() < 1e-8);
        }
    }

    #[test]
    fn rk45_is_deterministic() {
        let params = FellerParams {
            gamma: 0.3,
            eta: 1.0,
        };
        let grid = MassGrid::from_cumulative(vec![0.0, 0.2, 0.5, 0.8, 0.95], MeanKind::Arithmetic)
            .unwrap();
        let state = ParticleState::new(0.0, vec![0.0, 0.4, 1.1, 2.0, 3.5]).unwrap();
        let ctrl = StepControl::for_horizon(3.0, 1e-7, 1e-7);
        let a = rk45_advance(&state, &grid, &params, 3.0, &ctrl, &[1.0, 2.0], None).unwrap();
        let b = rk45_advance(&state, &grid, &params, 3.0, &ctrl, &[1.0, 2.0], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rk45_reports_underflow() {
        let params = FellerParams {
            gamma: 1.0,
            eta: 1.0,
        };
        let state = ParticleState::new(0.0, vec![0.0, 1.0, 3.0]).unwrap();
        let mut ctrl = StepControl::for_horizon(1.0, 1e-300, 1e-15);
        ctrl.dt_min = 0.5;
        ctrl.dt_init = 0.5;
        let err =
            rk45_advance(&state, &two_cell_grid(), &params, 1.0, &ctrl, &[], None).unwrap_err();
        assert!(
            matches!(err, FellerError::StepSizeUnderflow { .. }),
            "{err}"
        );
    }

    #[test]
    fn step_control_validation() {
        let mut ctrl = StepControl::for_horizon(10.0, 1e-5, 1e-5);
        assert_eq!(ctrl.dt_init, 1e-3);
        assert_eq!(ctrl.dt_min, 1e-11);
        ctrl.validate().unwrap();
        ctrl.reltol = 1.0;
        assert!(ctrl.validate().is_err());
        ctrl.reltol = 1e-5;
        ctrl.dt_min = 1.0;
        assert!(ctrl.validate().is_err());
    }

    #[test]
    fn cfl_bound() {
        let params = FellerParams {
            gamma: 0.0,
            eta: 1.0,
        };
        let state = ParticleState::new(0.0, vec![0.0, 0.01, 1.0, 20.0]).unwrap();
        assert!((cfl_reference_dt(&state, &params) - 2.5e-6).abs() < 1e-18);
        let doubled = FellerParams {
            gamma: 0.0,
            eta: 2.0,
        };
        assert!((cfl_reference_dt(&state, &doubled) - 1.25e-6).abs() < 1e-18);
    }
}

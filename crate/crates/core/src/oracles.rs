//! Independent reference solutions: an implicit finite-volume solver on a
//! truncated interval and a Monte Carlo simulation of the square-root
//! diffusion. Both are deliberately unrelated to the node formulation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{DensitySnapshot, FellerParams};
use crate::error::{FellerError, Result};
use crate::lagrange::InitialCondition;

/// Uniform-cell discretization of `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerianConfig {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "M")]
    pub cells: usize,
    pub dt: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl EulerianConfig {
    pub fn new(length: f64, cells: usize, dt: f64) -> Self {
        EulerianConfig {
            length,
            cells,
            dt,
            theta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || self.cells < 16 || !(self.dt > 0.0) {
            return Err(FellerError::config(
                "eulerian oracle needs L > 0, M >= 16 and dt > 0",
            ));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(FellerError::config("eulerian theta must lie in [1/2, 1]"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }
}

/// Cell-average densities at the requested times plus mass bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianRun {
    pub snapshots: Vec<DensitySnapshot>,
    pub steps: usize,
    /// Largest relative change of `sum p_j dx` over a single step.
    pub max_step_mass_drift: f64,
}

/// Fraction of the domain at its right end whose mass must stay small.
const TAIL_FRACTION: f64 = 0.05;
const TAIL_MASS_LIMIT: f64 = 1e-3;

fn tail_mass(p: &[f64], dx: f64) -> f64 {
    let m = p.len();
    let start = ((1.0 - TAIL_FRACTION) * m as f64).floor() as usize;
    p[start..].iter().sum::<f64>() * dx
}

/// Tridiagonal operator `D` with `(D p)_j = F_{j+1/2} - F_{j-1/2}`.
struct FluxOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl FluxOperator {
    fn new(params: &FellerParams, m: usize, dx: f64) -> Self {
        // face flux F_{j+1/2} = a_j p_j + b_j p_{j+1} on interior faces
        let mut a = vec![0.0; m.saturating_sub(1)];
        let mut b = vec![0.0; m.saturating_sub(1)];
        for j in 0..m - 1 {
            let xf = (j + 1) as f64 * dx;
            a[j] = -xf * (0.5 * params.gamma - params.eta / dx);
            b[j] = -xf * (0.5 * params.gamma + params.eta / dx);
        }
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        for j in 0..m {
            if j + 1 < m {
                diag[j] += a[j];
                upper[j] += b[j];
            }
            if j > 0 {
                diag[j] -= b[j - 1];
                lower[j] -= a[j - 1];
            }
        }
        FluxOperator { lower, diag, upper }
    }

    fn apply(&self, p: &[f64], out: &mut [f64]) {
        let m = p.len();
        for j in 0..m {
            let mut v = self.diag[j] * p[j];
            if j > 0 {
                v += self.lower[j] * p[j - 1];
            }
            if j + 1 < m {
                v += self.upper[j] * p[j + 1];
            }
            out[j] = v;
        }
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm); `rhs` becomes
/// the solution.
fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) {
    let m = rhs.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for j in 1..m {
        let denom = diag[j] - lower[j] * scratch[j - 1];
        scratch[j] = upper[j] / denom;
        rhs[j] = (rhs[j] - lower[j] * rhs[j - 1]) / denom;
    }
    for j in (0..m - 1).rev() {
        rhs[j] -= scratch[j] * rhs[j + 1];
    }
}

/// Conservative theta-scheme for `p_t = [x (gamma p + eta p_x)]_x` on
/// uniform cells with zero flux at both ends.
///
/// Outputs are cell averages at cell centres. Fails if more than `1e-3`
/// of the mass sits in the last 5% of the interval at any output time.
pub fn eulerian_solve(
    cfg: &EulerianConfig,
    params: &FellerParams,
    ic: Option<&InitialCondition>,
    t_end: f64,
    output_times: &[f64],
) -> Result<EulerianRun> {
    cfg.validate()?;
    let m = cfg.cells;
    let dx = cfg.dx();
    let centers: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * dx).collect();
    let mut p: Vec<f64> = match ic {
        Some(ic) => (0..m)
            .map(|j| (ic.primitive((j + 1) as f64 * dx) - ic.primitive(j as f64 * dx)) / dx)
            .collect(),
        None => vec![0.0; m],
    };
    let op = FluxOperator::new(params, m, dx);
    let mut snapshots = Vec::new();
    let mut outputs = output_times
        .iter()
        .copied()
        .filter(|&t| t <= t_end)
        .peekable();
    let snapshot = |t: f64, p: &[f64]| -> Result<DensitySnapshot> {
        let tail = tail_mass(p, dx);
        if tail > TAIL_MASS_LIMIT {
            return Err(FellerError::TruncationInvalid {
                mass: tail,
                length: cfg.length,
                t,
            });
        }
        Ok(DensitySnapshot {
            t,
            x: centers.clone(),
            p: p.to_vec(),
        })
    };
    while outputs.peek().is_some_and(|&t| t <= 0.0) {
        snapshots.push(snapshot(0.0, &p)?);
        outputs.next();
    }

    let mut explicit = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_drift: f64 = 0.0;
    let mut mass: f64 = p.iter().sum::<f64>() * dx;
    while t < t_end {
        let target = outputs.peek().copied().unwrap_or(t_end).min(t_end);
        let landing = t + cfg.dt >= target * (1.0 - 1e-12);
        let h = if landing { target - t } else { cfg.dt };
        let r = h / dx;
        op.apply(&p, &mut explicit);
        for j in 0..m {
            explicit[j] = p[j] - (1.0 - cfg.theta) * r * explicit[j];
            lower[j] = cfg.theta * r * op.lower[j];
            diag[j] = 1.0 + cfg.theta * r * op.diag[j];
            upper[j] = cfg.theta * r * op.upper[j];
        }
        solve_tridiagonal(&lower, &diag, &upper, &mut explicit, &mut scratch);
        std::mem::swap(&mut p, &mut explicit);
        t = if landing { target } else { t + h };
        steps += 1;
        let new_mass: f64 = p.iter().sum::<f64>() * dx;
        if mass > 0.0 {
            max_drift = max_drift.max((new_mass - mass).abs() / mass);
        }
        mass = new_mass;
        while outputs.peek().is_some_and(|&to| to <= t) {
            snapshots.push(snapshot(t, &p)?);
            outputs.next();
        }
    }
    Ok(EulerianRun {
        snapshots,
        steps,
        max_step_mass_drift: max_drift,
    })
}

/// Drift term used by the Monte Carlo simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    /// `eta - gamma x`: the diffusion whose forward equation is the PDE
    /// solved by the rest of this crate.
    #[default]
    Matched,
    /// `-gamma x` alone; its forward equation carries an extra `eta p_x`
    /// transport term.
    Linear,
}

/// Starting values of the simulated paths.
#[derive(Debug, Clone, PartialEq)]
pub enum McInit {
    Point(f64),
    Sample(InitialCondition),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub init: McInit,
    pub drift: DriftForm,
    pub bins: usize,
}

impl MCConfig {
    pub fn new(paths: usize, dt: f64, seed: u64, init: McInit) -> Self {
        MCConfig {
            paths,
            dt,
            seed,
            init,
            drift: DriftForm::default(),
            bins: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || !(self.dt > 0.0) || self.bins == 0 {
            return Err(FellerError::config(
                "monte carlo needs paths >= 1, dt > 0 and bins >= 1",
            ));
        }
        if let McInit::Point(x0) = self.init {
            if !(x0 >= 0.0) {
                return Err(FellerError::config(
                    "monte carlo start point must be non-negative",
                ));
            }
        }
        Ok(())
    }
}

/// Terminal-time histogram of the path ensemble.
///
/// Paths sitting at `0` are tallied in `absorbed`, not binned, so
/// `sum density * width + absorbed / paths = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub absorbed: usize,
    pub paths: usize,
    pub mean: f64,
    pub std_error: f64,
}

impl Histogram {
    pub fn absorbed_fraction(&self) -> f64 {
        self.absorbed as f64 / self.paths as f64
    }

    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// Densities at bin centres.
    pub fn curve(&self) -> Curve {
        let x = self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Curve {
            x,
            p: self.density.clone(),
        }
    }

    pub fn from_samples(samples: &[f64], bins: usize) -> Self {
        let paths = samples.len();
        let n = paths as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let top = samples.iter().copied().fold(0.0, f64::max);
        let top = if top > 0.0 { top } else { 1.0 };
        let width = top / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut absorbed = 0;
        for &x in samples {
            if x <= 0.0 {
                absorbed += 1;
            } else {
                counts[((x / width) as usize).min(bins - 1)] += 1;
            }
        }
        Histogram {
            edges: (0..=bins)
                .map(|i| if i == bins { top } else { i as f64 * width })
                .collect(),
            density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
            absorbed,
            paths,
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// CSV with header `bin_left,bin_right,density` and a trailing
    /// `# absorbed=<fraction>` line.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = crate::reconstruct::csv_writer(sink);
        let io = |e: csv::Error| FellerError::Io(e.into());
        w.write_record(["bin_left", "bin_right", "density"])
            .map_err(io)?;
        for (edge, d) in self.edges.windows(2).zip(&self.density) {
            w.write_record([
                format!("{:.16e}", edge[0]),
                format!("{:.16e}", edge[1]),
                format!("{d:.16e}"),
            ])
            .map_err(io)?;
        }
        let mut sink = w
            .into_inner()
            .map_err(|e| FellerError::Io(e.into_error()))?;
        writeln!(sink, "# absorbed={:.16e}", self.absorbed_fraction())?;
        sink.flush()?;
        Ok(())
    }
}

/// Full-truncation Euler–Maruyama for `dX = drift dt + sqrt(2 eta X) dW`.
///
/// Path `i` draws from its own ChaCha stream `i` under `seed`, so results
/// do not depend on thread scheduling.
pub fn mc_simulate(cfg: &MCConfig, params: &FellerParams, t_end: f64) -> Result<Histogram> {
    Ok(Histogram::from_samples(
        &mc_paths(cfg, params, t_end)?,
        cfg.bins,
    ))
}

/// Terminal values of all paths, in path order.
pub fn mc_paths(cfg: &MCConfig, params: &FellerParams, t_end: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(t_end >= 0.0) {
        return Err(FellerError::config(
            "monte carlo horizon must be non-negative",
        ));
    }
    let steps = (t_end / cfg.dt)
        .round()
        .max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let sqrt_h = h.sqrt();
    let offset = match cfg.drift {
        DriftForm::Matched => params.eta,
        DriftForm::Linear => 0.0,
    };
    let (gamma, two_eta) = (params.gamma, 2.0 * params.eta);
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path);
            let mut x = match &cfg.init {
                McInit::Point(x0) => *x0,
                McInit::Sample(ic) => ic.quantile(rng.random::<f64>())?,
            };
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                let xp = x.max(0.0);
                x = (x + (offset - gamma * xp) * h + (two_eta * xp).sqrt() * sqrt_h * z).max(0.0);
            }
            Ok(x)
        })
        .collect()
}

/// Piecewise-linear density through `(x, p)` samples, `x` increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl Curve {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if x.len() != p.len() || x.len() < 2 {
            return Err(FellerError::config(
                "a curve needs matching x and p with at least two points",
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FellerError::config(
                "curve abscissae must be strictly increasing",
            ));
        }
        Ok(Curve { x, p })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let j = self
            .x
            .partition_point(|&v| v <= x)
            .clamp(1, self.x.len() - 1)
            - 1;
        let w = (x - self.x[j]) / (self.x[j + 1] - self.x[j]);
        self.p[j] + w * (self.p[j + 1] - self.p[j])
    }

    fn span(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Restriction to `[lo, hi]` with interpolated end points.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Curve> {
        let (a, b) = self.span();
        let (lo, hi) = (lo.max(a), hi.min(b));
        if !(hi > lo) {
            return Err(FellerError::EmptyOverlap);
        }
        let mut x = vec![lo];
        x.extend(self.x.iter().copied().filter(|&v| v > lo && v < hi));
        x.push(hi);
        let p = x.iter().map(|&v| self.eval(v)).collect();
        Ok(Curve { x, p })
    }
}

impl From<&DensitySnapshot> for Curve {
    fn from(s: &DensitySnapshot) -> Self {
        Curve {
            x: s.x.clone(),
            p: s.p.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Linf,
    L1,
}

/// Distance between two densities on their common interval, both
/// interpolated onto the union of their abscissae.
pub fn compare_pdf(a: &Curve, b: &Curve, metric: Metric) -> Result<f64> {
    let (a0, a1) = a.span();
    let (b0, b1) = b.span();
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if !(hi > lo) {
        return Err(FellerError::EmptyOverlap);
    }
    let mut grid: Vec<f64> =
        a.x.iter()
            .chain(&b.x)
            .copied()
            .filter(|&v| v > lo && v < hi)
            .collect();
    grid.push(lo);
    grid.push(hi);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let diff: Vec<f64> = grid
        .iter()
        .map(|&x| (a.eval(x) - b.eval(x)).abs())
        .collect();
    Ok(match metric {
        Metric::Linf => diff.iter().copied().fold(0.0, f64::max),
        Metric::L1 => grid
            .windows(2)
            .zip(diff.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum(),
    })
}

//! Physical positions and densities from node states, and snapshot CSV I/O.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::analytic::{DensitySnapshot, FellerParams};
use crate::error::{FellerError, Result};
use crate::lagrange::{
    first_moment, total_probability, InitialCondition, MassGrid, MeanKind, ParticleState,
};

/// Physical view of a node state.
///
/// `p[k]` is the forward-difference density `dP_{k+1/2} / (X_{k+1} - X_k)`
/// attributed to `x[k]`; it has one entry fewer than `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub cumulative: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub mass: f64,
    pub m1: f64,
}

impl Snapshot {
    /// `(x_k, p_k)` pairs for `k = 0..N-1`.
    pub fn density_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.p.iter().copied())
    }

    /// The samples of [`Snapshot::density_points`] as a density series.
    pub fn node_density(&self) -> DensitySnapshot {
        DensitySnapshot {
            t: self.t,
            x: self.x[..self.p.len()].to_vec(),
            p: self.p.clone(),
        }
    }

    /// Cell densities placed at cell midpoints `(X_k + X_{k+1})/2`.
    ///
    /// The values equal `p`; only the abscissae move. Compared against a
    /// smooth density this placement is second order in the gap, whereas
    /// the left-node placement of `density_points` is first order.
    pub fn cell_density(&self) -> DensitySnapshot {
        DensitySnapshot {
            t: self.t,
            x: self.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            p: self.p.clone(),
        }
    }
}

/// `X_k = e^{-gamma t} Y_k`.
pub fn recover_x(state: &ParticleState, params: &FellerParams) -> Vec<f64> {
    let back = (-params.gamma * state.t).exp();
    state.y.iter().map(|y| y * back).collect()
}

pub fn reconstruct_pdf(
    state: &ParticleState,
    grid: &MassGrid,
    params: &FellerParams,
) -> Result<Snapshot> {
    state.check_ordering()?;
    let x = recover_x(state, params);
    let p = grid
        .dp_half()
        .iter()
        .zip(x.windows(2))
        .map(|(dp, w)| dp / (w[1] - w[0]))
        .collect();
    Ok(Snapshot {
        t: state.t,
        cumulative: grid.cumulative().to_vec(),
        x,
        y: state.y.clone(),
        p,
        mass: total_probability(grid),
        m1: first_moment(state, grid, params),
    })
}

const SNAPSHOT_HEADER: [&str; 6] = ["t", "k", "P", "X", "Y", "p"];

fn fmt(v: f64) -> String {
    // 17 significant digits round-trip binary64
    format!("{v:.16e}")
}

pub(crate) fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn csv_error(e: csv::Error) -> FellerError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FellerError::Io(io),
        other => FellerError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes snapshots as `t,k,P,X,Y,p` rows, one per node; `p` is empty on
/// the last node.
pub fn write_snapshot_csv<W: Write>(snapshots: &[Snapshot], sink: W) -> Result<()> {
    let mut w = csv_writer(sink);
    w.write_record(SNAPSHOT_HEADER).map_err(csv_error)?;
    for s in snapshots {
        for k in 0..s.x.len() {
            let p = s.p.get(k).map(|&v| fmt(v)).unwrap_or_default();
            w.write_record([
                fmt(s.t),
                k.to_string(),
                fmt(s.cumulative[k]),
                fmt(s.x[k]),
                fmt(s.y[k]),
                p,
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot_file(snapshots: &[Snapshot], path: &Path) -> Result<()> {
    write_snapshot_csv(snapshots, BufWriter::new(File::create(path)?))
}

fn parse_field(value: &str, line: usize, name: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|e| FellerError::Parse {
        line,
        message: format!("column {name}: {e}"),
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(FellerError::Parse {
            line: 1,
            message: format!("expected header '{}'", want.join(",")),
        });
    }
    Ok(())
}

/// Reads a file produced by [`write_snapshot_csv`]. `mean` selects the node
/// weights used to recompute the first moment.
pub fn read_snapshot_csv<R: Read>(
    source: R,
    mean: MeanKind,
    params: &FellerParams,
) -> Result<Vec<Snapshot>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    check_header(&mut reader, &SNAPSHOT_HEADER)?;
    let mut rows: Vec<(usize, f64, usize, f64, f64, f64, Option<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let k = record[1]
            .trim()
            .parse::<usize>()
            .map_err(|e| FellerError::Parse {
                line,
                message: format!("column k: {e}"),
            })?;
        let p = match record[5].trim() {
            "" => None,
            v => Some(parse_field(v, line, "p")?),
        };
        rows.push((
            line,
            parse_field(&record[0], line, "t")?,
            k,
            parse_field(&record[2], line, "P")?,
            parse_field(&record[3], line, "X")?,
            parse_field(&record[4], line, "Y")?,
            p,
        ));
    }

    let mut snapshots = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let t = rows[start].1;
        let mut end = start;
        while end < rows.len() && rows[end].1 == t && rows[end].2 == end - start {
            end += 1;
        }
        let block = &rows[start..end];
        if block.len() < 3 || (end < rows.len() && rows[end].2 != 0) {
            let line = rows[end.min(rows.len() - 1)].0;
            return Err(FellerError::Parse {
                line,
                message: "node rows must run k = 0..N with N >= 2 for each time".into(),
            });
        }
        let n = block.len() - 1;
        let mut p = Vec::with_capacity(n);
        for (i, row) in block.iter().enumerate() {
            match (row.6, i < n) {
                (Some(v), true) => p.push(v),
                (None, false) => {}
                _ => {
                    return Err(FellerError::Parse {
                        line: row.0,
                        message: "p must be present on every node but the last".into(),
                    })
                }
            }
        }
        let cumulative: Vec<f64> = block.iter().map(|r| r.3).collect();
        let grid = MassGrid::from_cumulative(cumulative.clone(), mean)?;
        let state = ParticleState {
            t,
            y: block.iter().map(|r| r.5).collect(),
        };
        snapshots.push(Snapshot {
            t,
            cumulative,
            x: block.iter().map(|r| r.4).collect(),
            p,
            mass: total_probability(&grid),
            m1: first_moment(&state, &grid, params),
            y: state.y,
        });
        start = end;
    }
    Ok(snapshots)
}

/// Reads a tabulated initial density with header `x,p0`.
pub fn read_tabulated_ic<R: Read>(source: R) -> Result<InitialCondition> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    check_header(&mut reader, &["x", "p0"])?;
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let x = parse_field(&record[0], line, "x")?;
        let p0 = parse_field(&record[1], line, "p0")?;
        if samples.is_empty() && x != 0.0 {
            return Err(FellerError::Parse {
                line,
                message: "x must start at 0".into(),
            });
        }
        if samples.last().is_some_and(|&(prev, _)| !(x > prev)) {
            return Err(FellerError::Parse {
                line,
                message: "x must be strictly increasing".into(),
            });
        }
        if !(p0 >= 0.0) || !p0.is_finite() {
            return Err(FellerError::Parse {
                line,
                message: "p0 must be finite and non-negative".into(),
            });
        }
        samples.push((x, p0));
    }
    InitialCondition::tabulated(samples)
}

/// Node trajectory rows `t,k,X`.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv_writer(sink);
        inner.write_record(["t", "k", "X"]).map_err(csv_error)?;
        Ok(TrajectoryWriter { inner })
    }

    pub fn record(&mut self, state: &ParticleState, params: &FellerParams) -> Result<()> {
        let t = fmt(state.t);
        for (k, x) in recover_x(state, params).into_iter().enumerate() {
            self.inner
                .write_record([t.as_str(), &k.to_string(), &fmt(x)])
                .map_err(csv_error)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

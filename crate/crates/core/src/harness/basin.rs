use std::io::Write;
use std::path::PathBuf;

use rand::Rng;

use crate::baselines::MetaPolicy;
use crate::deriv::JointPolicy;
use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::meva::PolicyInit;
use crate::registry::{PolicyArgs, Registry};

#[derive(Clone, Debug, PartialEq)]
pub struct BasinSpec {
    /// Cells per axis.
    pub resolution: usize,
    /// The grid covers `[-half_width, half_width]²`.
    pub half_width: f64,
    pub algorithm: String,
    pub alpha: Option<f64>,
    /// Meta-discount for MeVa.
    pub gamma: Option<f64>,
    pub steps: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for BasinSpec {
    fn default() -> Self {
        Self { resolution: 64, half_width: 8.0, algorithm: "naive".into(), alpha: None, gamma: None, steps: 300, checkpoint: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasinLabel {
    /// Positive quadrant.
    B,
    /// Negative quadrant.
    A,
    Other,
    Diverged,
}

impl BasinLabel {
    pub fn classify(x: &[f64]) -> Self {
        if x.iter().any(|v| !v.is_finite()) {
            BasinLabel::Diverged
        } else if x.iter().all(|&v| v > 0.0) {
            BasinLabel::B
        } else if x.iter().all(|&v| v < 0.0) {
            BasinLabel::A
        } else {
            BasinLabel::Other
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasinLabel::B => "B",
            BasinLabel::A => "A",
            BasinLabel::Other => "other",
            BasinLabel::Diverged => "diverged",
        }
    }

    pub fn gray(self) -> u8 {
        match self {
            BasinLabel::B => 255,
            BasinLabel::A => 0,
            BasinLabel::Other => 64,
            BasinLabel::Diverged => 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasinCell {
    pub start: [f64; 2],
    pub label: BasinLabel,
    pub end: [f64; 2],
}

/// Row-major cells, `x1` varying fastest and `x2` increasing with the row.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinMap {
    pub resolution: usize,
    pub cells: Vec<BasinCell>,
}

impl BasinMap {
    pub fn fraction(&self, label: BasinLabel) -> f64 {
        self.cells.iter().filter(|c| c.label == label).count() as f64 / self.cells.len() as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x1_0,x2_0,label,final_x1,final_x2")?;
        for c in &self.cells {
            writeln!(w, "{},{},{},{},{}", c.start[0], c.start[1], c.label.name(), c.end[0], c.end[1])?;
        }
        Ok(())
    }

    /// Binary PGM with the largest `x2` in the top row.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.resolution;
        write!(w, "P5\n{n} {n}\n255\n")?;
        let mut bytes = Vec::with_capacity(n * n);
        for row in (0..n).rev() {
            bytes.extend(self.cells[row * n..(row + 1) * n].iter().map(|c| c.label.gray()));
        }
        w.write_all(&bytes)
    }
}

/// Cell centres of a symmetric grid.
pub fn grid_axis(resolution: usize, half_width: f64) -> Vec<f64> {
    let h = 2.0 * half_width / resolution as f64;
    (0..resolution).map(|i| -half_width + (i as f64 + 0.5) * h).collect()
}

/// Step both players by their rules, freezing pairs that leave the finite range.
fn advance(game: &GameSpec, policy: &dyn MetaPolicy, xs: &mut [JointPolicy], live: &mut [bool]) -> Result<()> {
    let idx: Vec<usize> = (0..xs.len()).filter(|&i| live[i]).collect();
    if idx.is_empty() {
        return Ok(());
    }
    let batch: Vec<JointPolicy> = idx.iter().map(|&i| xs[i].clone()).collect();
    let moves: Vec<Vec<Vec<f64>>> = (0..2).map(|p| policy.step_batch(game, &batch, p)).collect::<Result<_>>()?;
    for (j, &i) in idx.iter().enumerate() {
        for p in 0..2 {
            xs[i].row_mut(p).copy_from_slice(&moves[p][j]);
        }
        if !xs[i].is_finite() || xs[i].as_slice().iter().any(|v| v.abs() > 1e12) {
            live[i] = false;
            xs[i].as_mut_slice().fill(f64::NAN);
        }
    }
    Ok(())
}

/// Label every grid cell by the quadrant its trajectory ends in.
pub fn basin_map(game: &GameSpec, policy: &dyn MetaPolicy, spec: &BasinSpec) -> Result<BasinMap> {
    if game.dim() != 1 {
        return Err(Error::Argument(format!("basin maps need a two-dimensional game, not {}", game.name())));
    }
    if spec.resolution == 0 {
        return Err(Error::Config("basin resolution must be positive".into()));
    }
    let axis = grid_axis(spec.resolution, spec.half_width);
    let mut starts = Vec::with_capacity(axis.len() * axis.len());
    for &x2 in &axis {
        for &x1 in &axis {
            starts.push(JointPolicy::from_rows(&[&[x1], &[x2]])?);
        }
    }
    let mut xs = starts.clone();
    let mut live = vec![true; xs.len()];
    for _ in 0..spec.steps {
        advance(game, policy, &mut xs, &mut live)?;
    }
    let cells = starts
        .iter()
        .zip(&xs)
        .map(|(s, e)| BasinCell {
            start: [s.row(0)[0], s.row(1)[0]],
            label: BasinLabel::classify(e.as_slice()),
            end: [e.row(0)[0], e.row(1)[0]],
        })
        .collect();
    Ok(BasinMap { resolution: spec.resolution, cells })
}

/// Build the spec's algorithm from the registry and map its basins.
pub fn run_basin(game: &GameSpec, spec: &BasinSpec, registry: &Registry) -> Result<BasinMap> {
    let args = PolicyArgs { alpha: spec.alpha, gamma: spec.gamma, checkpoint: spec.checkpoint.clone(), ..PolicyArgs::new(game) };
    let policy = registry.build(&spec.algorithm, &args)?;
    basin_map(game, policy.as_ref(), spec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub batch: usize,
    pub steps: usize,
    /// Initial policies are uniform on `[-half_width, half_width]`.
    pub half_width: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { batch: 16, steps: 300, half_width: 8.0 }
    }
}

/// One row per run and step; diverged runs carry NaN from the failing step on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub run: usize,
    pub t: usize,
    pub x: Vec<f64>,
    pub f: [f64; 2],
}

pub fn run_trajectories<R: Rng + ?Sized>(
    game: &GameSpec,
    policy: &dyn MetaPolicy,
    spec: &TrajectorySpec,
    rng: &mut R,
) -> Result<Vec<TrajectoryRow>> {
    let mut xs: Vec<JointPolicy> = (0..spec.batch).map(|_| PolicyInit::Uniform(spec.half_width).sample(2, game.dim(), rng)).collect();
    let mut live = vec![true; xs.len()];
    let mut rows = Vec::with_capacity(spec.batch * (spec.steps + 1));
    let record = |rows: &mut Vec<TrajectoryRow>, t: usize, xs: &[JointPolicy], live: &[bool]| -> Result<()> {
        for (run, x) in xs.iter().enumerate() {
            let f = if live[run] { game.value(x).map(|r| [r.0[0], r.0[1]])? } else { [f64::NAN; 2] };
            rows.push(TrajectoryRow { run, t, x: x.as_slice().to_vec(), f });
        }
        Ok(())
    };
    record(&mut rows, 0, &xs, &live)?;
    for t in 1..=spec.steps {
        advance(game, policy, &mut xs, &mut live)?;
        record(&mut rows, t, &xs, &live)?;
    }
    rows.sort_by_key(|r| (r.run, r.t));
    Ok(rows)
}

pub fn write_trajectories_csv<W: Write>(rows: &[TrajectoryRow], mut w: W) -> std::io::Result<()> {
    let width = rows.first().map_or(0, |r| r.x.len());
    let xs: Vec<String> = (1..=width).map(|i| format!("x{i}")).collect();
    writeln!(w, "run,t,{},f1,f2", xs.join(","))?;
    for r in rows {
        let x: Vec<String> = r.x.iter().map(f64::to_string).collect();
        writeln!(w, "{},{},{},{},{}", r.run, r.t, x.join(","), r.f[0], r.f[1])?;
    }
    Ok(())
}

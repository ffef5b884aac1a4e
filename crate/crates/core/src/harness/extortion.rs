use std::io::Write;
use std::path::PathBuf;

use rand::Rng;

use crate::baselines::MetaPolicy;
use crate::deriv::JointPolicy;
use crate::error::{Error, Result};
use crate::games::{hull_contains, return_region, GameSpec, ReturnPairCloud};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtortionSpec {
    pub pairs: usize,
    pub steps: usize,
    /// Snapshot interval in steps; step 0 and the last step are always included.
    pub every: usize,
    /// Random opponents per return region.
    pub opponents: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExtortionSpec {
    fn default() -> Self {
        Self { pairs: 8, steps: 300, every: 10, opponents: 2000, checkpoint: None }
    }
}

impl ExtortionSpec {
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut t: Vec<usize> = (0..=self.steps).step_by(self.every.max(1)).collect();
        if t.last() != Some(&self.steps) {
            t.push(self.steps);
        }
        t
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub pair: usize,
    pub t: usize,
    pub cloud: ReturnPairCloud,
    /// Returns of the shaping player and its opponent.
    pub actual: (f64, f64),
    pub slope: f64,
    pub inside_hull: bool,
}

/// Shape a naive player with `shaper` (playing side 1) and record return regions.
pub fn run_extortion<R: Rng + ?Sized>(
    game: &GameSpec,
    shaper: &dyn MetaPolicy,
    opponent: &dyn MetaPolicy,
    inits: &[JointPolicy],
    spec: &ExtortionSpec,
    rng: &mut R,
) -> Result<Vec<Snapshot>> {
    if game.matrix().is_none() {
        return Err(Error::Argument("extortion analysis needs a repeated matrix game".into()));
    }
    let snaps = spec.snapshot_steps();
    let mut out = Vec::new();
    let mut xs: Vec<JointPolicy> = Vec::with_capacity(inits.len());
    for x in inits {
        let mut x = x.clone();
        let r0 = shaper.initial(game, 0, x.row(0))?;
        let c0 = opponent.initial(game, 1, x.row(1))?;
        x.row_mut(0).copy_from_slice(&r0);
        x.row_mut(1).copy_from_slice(&c0);
        xs.push(x);
    }
    for t in 0..=spec.steps {
        if snaps.contains(&t) {
            for (pair, x) in xs.iter().enumerate() {
                let cloud = return_region(x.row(0), game, spec.opponents, rng)?;
                let r = game.value(x)?;
                let actual = (r.0[0], r.0[1]);
                let slope = cloud.front_slope();
                let inside_hull = hull_contains(&cloud.hull, actual, 1e-6);
                out.push(Snapshot { pair, t, cloud, actual, slope, inside_hull });
            }
        }
        if t == spec.steps {
            break;
        }
        let a = shaper.step_batch(game, &xs, 0)?;
        let b = opponent.step_batch(game, &xs, 1)?;
        for (i, x) in xs.iter_mut().enumerate() {
            x.row_mut(0).copy_from_slice(&a[i]);
            x.row_mut(1).copy_from_slice(&b[i]);
            if !x.is_finite() {
                return Err(Error::Numeric(format!("extortion run diverged at step {}", t + 1)));
            }
        }
    }
    Ok(out)
}

pub fn write_extortion_csv<W: Write>(snaps: &[Snapshot], mut w: W) -> std::io::Result<()> {
    writeln!(w, "pair,t,front_slope,return_shaper,return_opponent,inside_hull")?;
    for s in snaps {
        writeln!(w, "{},{},{},{},{},{}", s.pair, s.t, s.slope, s.actual.0, s.actual.1, s.inside_hull)?;
    }
    Ok(())
}

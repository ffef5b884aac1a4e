use std::io::Write;

use crate::error::{Error, Result};
use crate::games::GameSpec;
use crate::meva::{train, Exploration, MevaConfig, Opponents};
use crate::valuenet::Formulation;

pub const VARIANTS: [&str; 8] =
    ["full", "param_noise", "lambda1", "lambda0_k1", "no_target_net", "no_distributional", "v_formulation", "fixed_gamma"];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSpec {
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub outer_loops: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self { variants: VARIANTS.iter().map(|s| s.to_string()).collect(), seeds: (0..10).collect(), outer_loops: 500 }
    }
}

/// The full method with one component changed.
pub fn variant_config(base: &MevaConfig, variant: &str) -> Result<MevaConfig> {
    let mut c = base.clone();
    match variant {
        "full" => {}
        "param_noise" => c.exploration = Exploration::ParamNoise,
        "lambda1" => c.lambda = 1.0,
        "lambda0_k1" => {
            c.lambda = 0.0;
            c.stride = 1;
        }
        "no_target_net" => c.target_net = false,
        "no_distributional" => c.distributional = false,
        "v_formulation" => c.formulation = Formulation::V,
        "fixed_gamma" => c.variable_gamma = false,
        other => return Err(Error::Config(format!("unknown ablation variant '{other}' (known: {})", VARIANTS.join(", ")))),
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub outer_loop: usize,
    pub short_td: f64,
    pub long_td: Option<f64>,
    pub self_return: Option<f64>,
    pub exploit_return: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// `(variant, seed, error)` for runs that failed; the grid carries on past them.
    pub failures: Vec<(String, u64, String)>,
}

impl AblationReport {
    fn rows_of<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a AblationRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Median over seeds of the mean monitored self-play return in the last `window` loops.
    pub fn final_self_return(&self, variant: &str, window: usize) -> Option<f64> {
        let mut per_seed = Vec::new();
        let mut seeds: Vec<u64> = self.rows_of(variant).map(|r| r.seed).collect();
        seeds.dedup();
        for seed in seeds {
            let vals: Vec<f64> = self.rows_of(variant).filter(|r| r.seed == seed).filter_map(|r| r.self_return).collect();
            let tail = &vals[vals.len().saturating_sub(window)..];
            if !tail.is_empty() {
                per_seed.push(tail.iter().sum::<f64>() / tail.len() as f64);
            }
        }
        median(&mut per_seed)
    }

    /// Median over seeds of the long-horizon TD error at the first logged loop `>= outer_loop`.
    pub fn long_td_at(&self, variant: &str, outer_loop: usize) -> Option<f64> {
        let mut seeds: Vec<u64> = self.rows_of(variant).map(|r| r.seed).collect();
        seeds.dedup();
        let mut vals: Vec<f64> = seeds
            .into_iter()
            .filter_map(|seed| {
                self.rows_of(variant).find(|r| r.seed == seed && r.outer_loop >= outer_loop && r.long_td.is_some())?.long_td
            })
            .collect();
        median(&mut vals)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "variant,seed,outer_loop,short_td,long_td,self_return,exploit_return")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.variant,
                r.seed,
                r.outer_loop,
                r.short_td,
                opt(r.long_td),
                opt(r.self_return),
                opt(r.exploit_return)
            )?;
        }
        Ok(())
    }
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Self-play training of every variant and seed, logging TD errors and monitors.
pub fn run_ablation(game: &GameSpec, base: &MevaConfig, spec: &AblationSpec) -> Result<AblationReport> {
    let mut report = AblationReport::default();
    let mut configs = Vec::new();
    for v in &spec.variants {
        let mut c = variant_config(base, v)?;
        c.outer_loops = spec.outer_loops;
        configs.push((v.clone(), c));
    }
    for (variant, config) in &configs {
        for &seed in &spec.seeds {
            match train(game, &Opponents::SelfPlay, config, seed) {
                Ok(out) => report.rows.extend(out.log.into_iter().map(|l| AblationRow {
                    variant: variant.clone(),
                    seed,
                    outer_loop: l.outer_loop,
                    short_td: l.short_td,
                    long_td: l.long_td,
                    self_return: l.mean_self_return,
                    exploit_return: l.exploit_return,
                })),
                Err(e) => report.failures.push((variant.clone(), seed, e.to_string())),
            }
        }
    }
    Ok(report)
}

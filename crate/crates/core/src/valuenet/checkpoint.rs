//! JSON checkpoint container shared by every learned meta-policy.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Activation, Formulation, Layout, ModelParams, ScaleShift};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub game: String,
    pub formulation: String,
    pub hyperparameters: BTreeMap<String, Value>,
    pub seed: u64,
    pub outer_loops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub game: String,
    pub formulation: String,
    pub hyperparameters: BTreeMap<String, Value>,
    pub seed: u64,
    pub outer_loops: u64,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, arrays: Vec<NamedArray>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            game: meta.game,
            formulation: meta.formulation,
            hyperparameters: meta.hyperparameters,
            seed: meta.seed,
            outer_loops: meta.outer_loops,
            arrays,
        }
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            game: self.game.clone(),
            formulation: self.formulation.clone(),
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
            outer_loops: self.outer_loops,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        for a in &self.arrays {
            if a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("array '{}' has non-finite values", a.name)));
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        for a in &ck.arrays {
            if a.shape.iter().product::<usize>() != a.values.len() {
                return Err(Error::Checkpoint(format!(
                    "array '{}' has shape {:?} but {} values",
                    a.name,
                    a.shape,
                    a.values.len()
                )));
            }
            if a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("array '{}' has non-finite values", a.name)));
            }
        }
        Ok(ck)
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing array '{name}'")))
    }
}

pub(crate) fn layout_to_json(l: &Layout) -> Value {
    json!({
        "players": l.players,
        "policy_dim": l.policy_dim,
        "hidden": l.hidden,
        "outputs": l.outputs,
        "shared": l.shared,
        "scale_shift": l.scale_shift.name(),
        "final_activation": l.final_activation.name(),
        "formulation": l.formulation.name(),
    })
}

pub(crate) fn layout_from_json(v: &Value) -> Result<Layout> {
    let bad = |k: &str| Error::Checkpoint(format!("bad or missing layout field '{k}'"));
    let uint = |k: &str| v.get(k).and_then(Value::as_u64).map(|u| u as usize).ok_or_else(|| bad(k));
    let text = |k: &str| v.get(k).and_then(Value::as_str).ok_or_else(|| bad(k));
    Ok(Layout {
        players: uint("players")?,
        policy_dim: uint("policy_dim")?,
        hidden: uint("hidden")?,
        outputs: uint("outputs")?,
        shared: v.get("shared").and_then(Value::as_bool).ok_or_else(|| bad("shared"))?,
        scale_shift: ScaleShift::parse(text("scale_shift")?).ok_or_else(|| bad("scale_shift"))?,
        final_activation: Activation::parse(text("final_activation")?).ok_or_else(|| bad("final_activation"))?,
        formulation: Formulation::parse(text("formulation")?).ok_or_else(|| bad("formulation"))?,
    })
}

impl ModelParams {
    pub fn to_arrays(&self) -> Vec<NamedArray> {
        self.structure
            .tensors
            .iter()
            .map(|t| {
                let len: usize = t.shape.iter().product();
                NamedArray { name: t.name.clone(), shape: t.shape.clone(), values: self.data[t.offset..t.offset + len].to_vec() }
            })
            .collect()
    }

    pub fn from_arrays(layout: Layout, arrays: &[NamedArray]) -> Result<Self> {
        let structure = super::Structure::new(&layout);
        let mut data = vec![0.0; structure.total];
        for t in &structure.tensors {
            let a = arrays
                .iter()
                .find(|a| a.name == t.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing array '{}'", t.name)))?;
            if a.shape != t.shape || a.values.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "array '{}' has shape {:?}, layout expects {:?}",
                    t.name, a.shape, t.shape
                )));
            }
            data[t.offset..t.offset + a.values.len()].copy_from_slice(&a.values);
        }
        ModelParams::from_data(layout, data)
    }
}

/// Write model parameters and metadata; the layout is stored alongside the hyperparameters.
pub fn save_checkpoint(params: &ModelParams, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut meta = meta.clone();
    meta.hyperparameters.insert("layout".into(), layout_to_json(&params.layout));
    if meta.formulation.is_empty() {
        meta.formulation = params.layout.formulation.name().into();
    }
    Checkpoint::new(meta, params.to_arrays()).write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let ck = Checkpoint::read(path)?;
    let layout = layout_from_json(
        ck.hyperparameters.get("layout").ok_or_else(|| Error::Checkpoint("checkpoint has no layout".into()))?,
    )?;
    let params = ModelParams::from_arrays(layout, &ck.arrays)?;
    Ok((params, ck.meta()))
}

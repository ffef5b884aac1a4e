//! The meta-value network.
//!
//! Each player's `(x_i, γ_i)` goes through an encoder giving `z_i`. Player
//! `i`'s prediction decodes `[z_i, z_{-i}]` and projects the final hidden
//! units onto `M` quantiles. Encoder and decoder are shared across players
//! by default; an optional per-player elementwise scale and shift on the
//! encodings breaks the resulting player-swap equivariance.
//!
//! Batches are laid out player-major: row `i * B + b` belongs to player `i`
//! of batch element `b`.

mod checkpoint;
mod explore;
pub mod layers;
mod optim;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, NamedArray, FORMAT_VERSION};
pub use explore::{head_noise, sign_flip, Perturbation, SignMask, PARAM_NOISE_STD, DEFAULT_FLIP_PROB};
pub use layers::Activation;
pub use optim::{ema_update, AdamW, TargetParams};

use crate::deriv::JointPolicy;
use crate::error::{Error, Result};
use layers::{view1, view1_mut, view2, DenseNorm, GatedMlp, MlpCache};

pub const HIDDEN: usize = 64;
const GATE_INIT: f64 = 2.0;

/// Whether the model predicts meta-values directly or the expected next-state value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    V,
    U,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::V => "V",
            Formulation::U => "U",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "V" | "v" => Some(Formulation::V),
            "U" | "u" => Some(Formulation::U),
            _ => None,
        }
    }
}

/// Elementwise scale and shift applied to the encodings before decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleShift {
    None,
    Shared,
    PerPlayer,
}

impl ScaleShift {
    pub fn name(self) -> &'static str {
        match self {
            ScaleShift::None => "none",
            ScaleShift::Shared => "shared",
            ScaleShift::PerPlayer => "per_player",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ScaleShift::None),
            "shared" => Some(ScaleShift::Shared),
            "per_player" => Some(ScaleShift::PerPlayer),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub players: usize,
    pub policy_dim: usize,
    pub hidden: usize,
    /// Head width: quantile count `M` for value models.
    pub outputs: usize,
    /// Encoder/decoder/head weights shared across players.
    pub shared: bool,
    pub scale_shift: ScaleShift,
    pub final_activation: Activation,
    pub formulation: Formulation,
}

impl Layout {
    pub fn new(policy_dim: usize, outputs: usize) -> Self {
        Self {
            players: 2,
            policy_dim,
            hidden: HIDDEN,
            outputs,
            shared: true,
            scale_shift: ScaleShift::None,
            final_activation: Activation::Gelu,
            formulation: Formulation::V,
        }
    }
}

#[derive(Clone, Debug)]
struct Copy_ {
    enc: GatedMlp,
    dec: GatedMlp,
    head_w: usize,
    head_b: usize,
}

#[derive(Clone, Debug)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    init: Init,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    FanIn(usize),
    Const(f64),
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Clone, Debug)]
pub struct Structure {
    copies: Vec<Copy_>,
    scale: usize,
    shift: usize,
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

struct Alloc {
    tensors: Vec<TensorSpec>,
    next: usize,
}

impl Alloc {
    fn take(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.next;
        self.next += shape.iter().product::<usize>();
        self.tensors.push(TensorSpec { name, shape, offset, init });
        offset
    }

    fn dense(&mut self, prefix: &str, fan_in: usize, fan_out: usize, act: Activation) -> DenseNorm {
        DenseNorm {
            fan_in,
            fan_out,
            w: self.take(format!("{prefix}.w"), vec![fan_in, fan_out], Init::FanIn(fan_in)),
            b: self.take(format!("{prefix}.b"), vec![fan_out], Init::Const(0.0)),
            gain: self.take(format!("{prefix}.ln_gain"), vec![fan_out], Init::Const(1.0)),
            offset: self.take(format!("{prefix}.ln_offset"), vec![fan_out], Init::Const(0.0)),
            act,
        }
    }

    fn mlp(&mut self, prefix: &str, fan_in: usize, hidden: usize, final_act: Activation) -> GatedMlp {
        GatedMlp {
            input: self.dense(&format!("{prefix}.input"), fan_in, hidden, Activation::Gelu),
            residual: self.dense(&format!("{prefix}.residual"), hidden, hidden, Activation::Gelu),
            gate: self.take(format!("{prefix}.gate"), vec![hidden], Init::Const(GATE_INIT)),
            output: self.dense(&format!("{prefix}.output"), hidden, hidden, final_act),
        }
    }
}

impl Structure {
    pub fn new(layout: &Layout) -> Self {
        let h = layout.hidden;
        let mut alloc = Alloc { tensors: Vec::new(), next: 0 };
        let n_copies = if layout.shared { 1 } else { layout.players };
        let mut copies = Vec::with_capacity(n_copies);
        for c in 0..n_copies {
            let tag = if layout.shared { String::new() } else { format!("p{c}.") };
            let enc = alloc.mlp(&format!("{tag}encoder"), layout.policy_dim + 1, h, Activation::Gelu);
            let dec = alloc.mlp(&format!("{tag}decoder"), 2 * h, h, layout.final_activation);
            let head_w = alloc.take(format!("{tag}head.w"), vec![h, layout.outputs], Init::Const(0.0));
            let head_b = alloc.take(format!("{tag}head.b"), vec![layout.outputs], Init::Const(0.0));
            copies.push(Copy_ { enc, dec, head_w, head_b });
        }
        let ss_groups = match layout.scale_shift {
            ScaleShift::None => 0,
            ScaleShift::Shared => 1,
            ScaleShift::PerPlayer => layout.players,
        };
        let (scale, shift) = if ss_groups > 0 {
            (
                alloc.take("scale_shift.scale".into(), vec![ss_groups, h], Init::Const(1.0)),
                alloc.take("scale_shift.shift".into(), vec![ss_groups, h], Init::Const(0.0)),
            )
        } else {
            (0, 0)
        };
        Structure { copies, scale, shift, total: alloc.next, tensors: alloc.tensors }
    }
}

/// All weights of a value (or update-field) network.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub layout: Layout,
    structure: Structure,
    pub data: Vec<f64>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.data == other.data
    }
}

/// Fan-in scaled normal init for weight matrices; zeros for the head.
pub fn init_params<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> ModelParams {
    let structure = Structure::new(layout);
    let mut data = vec![0.0; structure.total];
    for t in &structure.tensors {
        let len: usize = t.shape.iter().product();
        let dst = &mut data[t.offset..t.offset + len];
        match t.init {
            Init::Const(v) => dst.iter_mut().for_each(|d| *d = v),
            Init::FanIn(fan_in) => {
                let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("valid std");
                dst.iter_mut().for_each(|d| *d = normal.sample(rng));
            }
        }
    }
    ModelParams { layout: layout.clone(), structure, data }
}

/// `M` quantile estimates for one player.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileValue(pub Vec<f64>);

impl QuantileValue {
    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Quantile midpoints `τ_m = (2m - 1) / 2M`.
    pub fn taus(m: usize) -> Vec<f64> {
        (1..=m).map(|k| (2 * k - 1) as f64 / (2 * m) as f64).collect()
    }
}

/// Batched network outputs, rows player-major.
#[derive(Clone, Debug)]
pub struct Outputs {
    pub batch: usize,
    pub q: Array2<f64>,
}

impl Outputs {
    pub fn row(&self, player: usize, b: usize) -> ArrayView1<'_, f64> {
        self.q.row(player * self.batch + b)
    }

    pub fn mean(&self, player: usize, b: usize) -> f64 {
        self.row(player, b).mean().unwrap_or(0.0)
    }

    pub fn block(&self, player: usize) -> ArrayView2<'_, f64> {
        self.q.slice(s![player * self.batch..(player + 1) * self.batch, ..])
    }
}

/// A batch of joint policies with per-player conditioning (discount rates).
#[derive(Clone, Debug)]
pub struct Batch {
    /// `B × (P·N)`
    pub x: Array2<f64>,
    /// `B × P`
    pub cond: Array2<f64>,
}

impl Batch {
    pub fn new(x: Array2<f64>, cond: Array2<f64>) -> Self {
        assert_eq!(x.nrows(), cond.nrows());
        Self { x, cond }
    }

    pub fn single(x: &JointPolicy, cond: &[f64]) -> Self {
        let x = Array2::from_shape_vec((1, x.as_slice().len()), x.as_slice().to_vec()).expect("shape");
        let cond = Array2::from_shape_vec((1, cond.len()), cond.to_vec()).expect("shape");
        Self { x, cond }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Replacement for the head's mean weight vector, one row per batch element.
///
/// Exploration perturbs the head; only its mean over quantiles matters for
/// policy updates.
pub type HeadMeans<'a> = Option<ArrayView2<'a, f64>>;

struct Forward {
    enc: Vec<MlpCache>,
    dec: Vec<MlpCache>,
}

impl ModelParams {
    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn copy_for(&self, player: usize) -> &Copy_ {
        &self.structure.copies[if self.layout.shared { 0 } else { player }]
    }

    fn ss_group(&self, player: usize) -> Option<usize> {
        match self.layout.scale_shift {
            ScaleShift::None => None,
            ScaleShift::Shared => Some(0),
            ScaleShift::PerPlayer => Some(player),
        }
    }

    /// Offsets of the head weights `[H × M]` used for `player`.
    pub fn head_offsets(&self, player: usize) -> (usize, usize) {
        let c = self.copy_for(player);
        (c.head_w, c.head_b)
    }

    /// Mean over quantiles of the head weight columns.
    pub fn head_mean(&self, player: usize) -> Array1<f64> {
        let c = self.copy_for(player);
        view2(&self.data, c.head_w, self.layout.hidden, self.layout.outputs).mean_axis(Axis(1)).expect("non-empty head")
    }

    fn encoder_input(&self, batch: &Batch, player: usize) -> Array2<f64> {
        let n = self.layout.policy_dim;
        let mut rows = Array2::zeros((batch.len(), n + 1));
        rows.slice_mut(s![.., ..n]).assign(&batch.x.slice(s![.., player * n..(player + 1) * n]));
        rows.column_mut(n).assign(&batch.cond.column(player));
        rows
    }

    fn scale_shift(&self, z: &Array2<f64>, player: usize) -> Array2<f64> {
        match self.ss_group(player) {
            None => z.clone(),
            Some(g) => {
                let h = self.layout.hidden;
                let scale = view1(&self.data, self.structure.scale + g * h, h);
                let shift = view1(&self.data, self.structure.shift + g * h, h);
                let mut out = z * &scale;
                out += &shift;
                out
            }
        }
    }

    fn decoder_input(&self, scaled: &[Array2<f64>], player: usize) -> Array2<f64> {
        let h = self.layout.hidden;
        let other = 1 - player;
        let mut rows = Array2::zeros((scaled[player].nrows(), 2 * h));
        rows.slice_mut(s![.., ..h]).assign(&scaled[player]);
        rows.slice_mut(s![.., h..]).assign(&scaled[other]);
        rows
    }

    fn encode_all(&self, batch: &Batch) -> (Vec<MlpCache>, Vec<Array2<f64>>) {
        let p = &self.data;
        let enc: Vec<MlpCache> = (0..self.layout.players)
            .map(|i| self.copy_for(i).enc.forward(p, self.encoder_input(batch, i)))
            .collect();
        let scaled = enc.iter().enumerate().map(|(i, c)| self.scale_shift(c.out(), i)).collect();
        (enc, scaled)
    }

    fn run(&self, batch: &Batch) -> Forward {
        let (enc, scaled) = self.encode_all(batch);
        let dec = (0..self.layout.players)
            .map(|i| self.copy_for(i).dec.forward(&self.data, self.decoder_input(&scaled, i)))
            .collect();
        Forward { enc, dec }
    }

    fn head(&self, u: &Array2<f64>, player: usize) -> Array2<f64> {
        let c = self.copy_for(player);
        let w = view2(&self.data, c.head_w, self.layout.hidden, self.layout.outputs);
        let b = view1(&self.data, c.head_b, self.layout.outputs);
        let mut q = u.dot(&w);
        q += &b;
        q
    }

    /// Quantile outputs for every player of every batch element.
    pub fn forward_batch(&self, batch: &Batch) -> Outputs {
        let fwd = self.run(batch);
        self.collect_outputs(&fwd, batch.len())
    }

    fn collect_outputs(&self, fwd: &Forward, b: usize) -> Outputs {
        let m = self.layout.outputs;
        let mut q = Array2::zeros((self.layout.players * b, m));
        for (i, dec) in fwd.dec.iter().enumerate() {
            q.slice_mut(s![i * b..(i + 1) * b, ..]).assign(&self.head(dec.out(), i));
        }
        Outputs { batch: b, q }
    }

    /// Quantile predictions for a single joint policy.
    pub fn forward(&self, x: &JointPolicy, cond: &[f64]) -> Result<Vec<QuantileValue>> {
        self.check_input(x, cond)?;
        let out = self.forward_batch(&Batch::single(x, cond));
        Ok((0..self.layout.players).map(|i| QuantileValue(out.row(i, 0).to_vec())).collect())
    }

    fn check_input(&self, x: &JointPolicy, cond: &[f64]) -> Result<()> {
        if x.players() != self.layout.players || x.dim() != self.layout.policy_dim {
            return Err(Error::Shape(format!(
                "model expects {}x{} policies, got {}x{}",
                self.layout.players,
                self.layout.policy_dim,
                x.players(),
                x.dim()
            )));
        }
        if cond.len() != self.layout.players {
            return Err(Error::Shape(format!("expected {} discount rates", self.layout.players)));
        }
        if let Some(g) = cond.iter().find(|g| !(0.0..1.0).contains(*g)) {
            return Err(Error::Argument(format!("discount rate {g} outside [0, 1)")));
        }
        Ok(())
    }

    /// `∇_{x_i}` of player `i`'s mean prediction, for each listed player.
    ///
    /// Returns a `B × (P·N)` array; blocks of unlisted players are zero.
    pub fn input_grads(&self, batch: &Batch, players: &[usize], head_means: HeadMeans<'_>) -> Array2<f64> {
        let (enc, scaled) = self.encode_all(batch);
        let (n, h) = (self.layout.policy_dim, self.layout.hidden);
        let mut out = Array2::zeros((batch.len(), self.layout.players * n));
        for &i in players {
            let c = self.copy_for(i);
            let dec = c.dec.forward(&self.data, self.decoder_input(&scaled, i));
            let du = match head_means {
                Some(rows) => rows.to_owned(),
                None => {
                    let w = self.head_mean(i);
                    w.broadcast((batch.len(), h)).expect("broadcast").to_owned()
                }
            };
            let din = c.dec.backward(&self.data, &dec, &du, None);
            let mut dz = din.slice(s![.., ..h]).to_owned();
            if let Some(g) = self.ss_group(i) {
                dz *= &view1(&self.data, self.structure.scale + g * h, h);
            }
            let dx = c.enc.backward(&self.data, &enc[i], &dz, None);
            out.slice_mut(s![.., i * n..(i + 1) * n]).assign(&dx.slice(s![.., ..n]));
        }
        out
    }

    /// Single-policy convenience wrapper around [`input_grads`](Self::input_grads).
    pub fn input_grad(&self, x: &JointPolicy, cond: &[f64], player: usize) -> Result<Vec<f64>> {
        self.check_input(x, cond)?;
        let g = self.input_grads(&Batch::single(x, cond), &[player], None);
        let n = self.layout.policy_dim;
        Ok(g.slice(s![0, player * n..(player + 1) * n]).to_vec())
    }

    /// Exact parameter gradient of a scalar loss of the outputs.
    ///
    /// `loss` maps the outputs to `(value, ∂value/∂outputs)`. The batch is a
    /// constant: nothing flows back into the policies.
    pub fn param_grad<F>(&self, batch: &Batch, loss: F) -> (f64, Vec<f64>)
    where
        F: FnOnce(&Outputs) -> (f64, Array2<f64>),
    {
        let fwd = self.run(batch);
        let outputs = self.collect_outputs(&fwd, batch.len());
        let (value, dq) = loss(&outputs);
        let grad = self.backward(&fwd, batch.len(), &dq);
        (value, grad)
    }

    fn backward(&self, fwd: &Forward, b: usize, dq: &Array2<f64>) -> Vec<f64> {
        let (h, m) = (self.layout.hidden, self.layout.outputs);
        let players = self.layout.players;
        let mut grad = self.zeros_like();
        let mut dscaled: Vec<Array2<f64>> = (0..players).map(|_| Array2::zeros((b, h))).collect();
        for i in 0..players {
            let c = self.copy_for(i);
            let dqi = dq.slice(s![i * b..(i + 1) * b, ..]);
            let u = fwd.dec[i].out();
            {
                let mut dw = layers::view2_mut(&mut grad, c.head_w, h, m);
                ndarray::linalg::general_mat_mul(1.0, &u.t(), &dqi, 1.0, &mut dw);
            }
            {
                let mut db = view1_mut(&mut grad, c.head_b, m);
                db += &dqi.sum_axis(Axis(0));
            }
            let w = view2(&self.data, c.head_w, h, m);
            let du = dqi.dot(&w.t());
            let din = c.dec.backward(&self.data, &fwd.dec[i], &du, Some(&mut grad));
            dscaled[i] += &din.slice(s![.., ..h]);
            dscaled[1 - i] += &din.slice(s![.., h..]);
        }
        for i in 0..players {
            let mut dz = dscaled[i].clone();
            if let Some(g) = self.ss_group(i) {
                let z = fwd.enc[i].out();
                {
                    let mut ds = view1_mut(&mut grad, self.structure.scale + g * h, h);
                    ds += &(&dscaled[i] * z).sum_axis(Axis(0));
                }
                {
                    let mut dt = view1_mut(&mut grad, self.structure.shift + g * h, h);
                    dt += &dscaled[i].sum_axis(Axis(0));
                }
                dz *= &view1(&self.data, self.structure.scale + g * h, h);
            }
            self.copy_for(i).enc.backward(&self.data, &fwd.enc[i], &dz, Some(&mut grad));
        }
        grad
    }

    /// Flat-vector view of one named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let t = self.structure.tensors.iter().find(|t| t.name == name)?;
        let len: usize = t.shape.iter().product();
        Some(&self.data[t.offset..t.offset + len])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let t = self.structure.tensors.iter().find(|t| t.name == name)?;
        let len: usize = t.shape.iter().product();
        Some(&mut self.data[t.offset..t.offset + len])
    }

    /// Rebuild from a layout and a flat vector, checking the length.
    pub fn from_data(layout: Layout, data: Vec<f64>) -> Result<Self> {
        let structure = Structure::new(&layout);
        if data.len() != structure.total {
            return Err(Error::Shape(format!("expected {} parameters, got {}", structure.total, data.len())));
        }
        Ok(Self { layout, structure, data })
    }
}

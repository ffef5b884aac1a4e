//! Batched dense layers with manual backpropagation.
//!
//! Weights live in one flat parameter vector; each layer only knows its
//! offsets into it. Gradients accumulate into a vector with the same layout.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

const LN_EPS: f64 = 1e-5;
const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gelu" => Some(Activation::Gelu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[inline]
fn gelu(a: f64) -> f64 {
    0.5 * a * (1.0 + libm::erf(a * INV_SQRT_2))
}

#[inline]
fn gelu_grad(a: f64) -> f64 {
    0.5 * (1.0 + libm::erf(a * INV_SQRT_2)) + a * INV_SQRT_2PI * (-0.5 * a * a).exp()
}

pub(crate) fn view2<'a>(p: &'a [f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout offsets")
}

pub(crate) fn view1<'a>(p: &'a [f64], off: usize, len: usize) -> ArrayView1<'a, f64> {
    ArrayView1::from(&p[off..off + len])
}

pub(crate) fn view2_mut<'a>(p: &'a mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout offsets")
}

pub(crate) fn view1_mut<'a>(p: &'a mut [f64], off: usize, len: usize) -> ArrayViewMut1<'a, f64> {
    ArrayViewMut1::from(&mut p[off..off + len])
}

/// `act(LayerNorm(x W + b))`, with learned norm gain and offset.
#[derive(Clone, Debug)]
pub struct DenseNorm {
    pub fan_in: usize,
    pub fan_out: usize,
    pub w: usize,
    pub b: usize,
    pub gain: usize,
    pub offset: usize,
    pub act: Activation,
}

pub struct DenseCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pre_act: Array2<f64>,
    pub out: Array2<f64>,
}

impl DenseNorm {
    pub fn forward(&self, p: &[f64], input: Array2<f64>) -> DenseCache {
        let w = view2(p, self.w, self.fan_in, self.fan_out);
        let b = view1(p, self.b, self.fan_out);
        let mut lin = input.dot(&w);
        lin += &b;
        let n = self.fan_out as f64;
        let mut inv_std = Array1::zeros(lin.nrows());
        for (mut row, s) in lin.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row *= inv;
            *s = inv;
        }
        let xhat = lin;
        let gain = view1(p, self.gain, self.fan_out);
        let offset = view1(p, self.offset, self.fan_out);
        let mut pre_act = &xhat * &gain;
        pre_act += &offset;
        let out = match self.act {
            Activation::Gelu => pre_act.mapv(gelu),
            Activation::Tanh => pre_act.mapv(f64::tanh),
        };
        DenseCache { input, xhat, inv_std, pre_act, out }
    }

    /// Backpropagate `dout`; accumulates parameter gradients when `grads` is given.
    pub fn backward(&self, p: &[f64], cache: &DenseCache, dout: &Array2<f64>, grads: Option<&mut [f64]>) -> Array2<f64> {
        let mut da = dout.clone();
        match self.act {
            Activation::Gelu => Zip::from(&mut da).and(&cache.pre_act).for_each(|d, &a| *d *= gelu_grad(a)),
            Activation::Tanh => Zip::from(&mut da).and(&cache.out).for_each(|d, &o| *d *= 1.0 - o * o),
        }
        let gain = view1(p, self.gain, self.fan_out);
        let mut dxhat = &da * &gain;
        let n = self.fan_out as f64;
        // LayerNorm backward, row by row, in place on dxhat.
        for ((mut row, xh), &inv) in dxhat.axis_iter_mut(Axis(0)).zip(cache.xhat.axis_iter(Axis(0))).zip(cache.inv_std.iter()) {
            let mean_d = row.sum() / n;
            let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
            Zip::from(&mut row).and(&xh).for_each(|d, &x| *d = inv * (*d - mean_d - x * mean_dx));
        }
        let dpre = dxhat;
        if let Some(g) = grads {
            {
                let mut dg = view1_mut(g, self.gain, self.fan_out);
                dg += &(&da * &cache.xhat).sum_axis(Axis(0));
            }
            {
                let mut dbeta = view1_mut(g, self.offset, self.fan_out);
                dbeta += &da.sum_axis(Axis(0));
            }
            {
                let mut dw = view2_mut(g, self.w, self.fan_in, self.fan_out);
                ndarray::linalg::general_mat_mul(1.0, &cache.input.t(), &dpre, 1.0, &mut dw);
            }
            let mut db = view1_mut(g, self.b, self.fan_out);
            db += &dpre.sum_axis(Axis(0));
        }
        let w = view2(p, self.w, self.fan_in, self.fan_out);
        dpre.dot(&w.t())
    }
}

/// Input layer, gated residual block and output layer.
///
/// The residual block merges `h` with `T(h)` through learned unitwise gates:
/// `g ⊙ h + (1 - g) ⊙ T(h)` with `g = sigmoid(gate)`.
#[derive(Clone, Debug)]
pub struct GatedMlp {
    pub input: DenseNorm,
    pub residual: DenseNorm,
    pub gate: usize,
    pub output: DenseNorm,
}

pub struct MlpCache {
    input: DenseCache,
    residual: DenseCache,
    gate: Array1<f64>,
    merged_minus_t: Array2<f64>,
    pub output: DenseCache,
}

impl MlpCache {
    pub fn out(&self) -> &Array2<f64> {
        &self.output.out
    }
}

impl GatedMlp {
    pub fn forward(&self, p: &[f64], x: Array2<f64>) -> MlpCache {
        let input = self.input.forward(p, x);
        let h = input.out.clone();
        let residual = self.residual.forward(p, h);
        let gate = view1(p, self.gate, self.residual.fan_out).mapv(crate::deriv::sigmoid);
        // merged = t + g ⊙ (h - t)
        let h_minus_t = &input.out - &residual.out;
        let merged = &residual.out + &(&h_minus_t * &gate);
        let output = self.output.forward(p, merged);
        MlpCache { input, residual, gate, merged_minus_t: h_minus_t, output }
    }

    pub fn backward(&self, p: &[f64], cache: &MlpCache, dout: &Array2<f64>, mut grads: Option<&mut [f64]>) -> Array2<f64> {
        let dmerged = self.output.backward(p, &cache.output, dout, grads.as_deref_mut());
        if let Some(g) = grads.as_deref_mut() {
            let dg = (&dmerged * &cache.merged_minus_t).sum_axis(Axis(0));
            let mut dgate = view1_mut(g, self.gate, self.residual.fan_out);
            Zip::from(&mut dgate).and(&dg).and(&cache.gate).for_each(|d, &v, &s| *d += v * s * (1.0 - s));
        }
        let one_minus: Array1<f64> = cache.gate.mapv(|s| 1.0 - s);
        let dt = &dmerged * &one_minus;
        let mut dh = &dmerged * &cache.gate;
        dh += &self.residual.backward(p, &cache.residual, &dt, grads.as_deref_mut());
        self.input.backward(p, &cache.input, &dh, grads)
    }
}

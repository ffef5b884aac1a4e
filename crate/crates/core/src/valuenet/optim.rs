use super::ModelParams;

/// Adaptive moments with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(len: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "moment state does not match parameters");
        assert_eq!(grad.len(), self.m.len(), "gradient does not match parameters");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p = *p * decay - self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Slowly tracking copy of the model used for bootstrap targets.
#[derive(Clone, Debug)]
pub struct TargetParams {
    pub params: ModelParams,
    pub inertia: f64,
}

impl TargetParams {
    pub fn new(params: &ModelParams, inertia: f64) -> Self {
        Self { params: params.clone(), inertia }
    }

    pub fn update(&mut self, online: &ModelParams) {
        ema_update(&mut self.params.data, &online.data, self.inertia);
    }
}

/// `target ← target + (1 - ρ)(online - target)`.
pub fn ema_update(target: &mut [f64], online: &[f64], inertia: f64) {
    let k = 1.0 - inertia;
    for (t, &o) in target.iter_mut().zip(online) {
        *t += k * (o - *t);
    }
}

use crate::nn::ParamSet;
use crate::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// `lr0 * (1 - step / total)^power`, zero from `total` on.
pub fn poly_learning_rate(lr0: f64, step: u64, total: u64, power: f64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    lr0 * (1.0 - step as f64 / total as f64).powf(power)
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub weight_decay: f64,
    /// First and second moments, one flat vector per parameter tensor.
    pub(crate) m: Vec<Vec<f32>>,
    pub(crate) v: Vec<Vec<f32>>,
    /// Updates applied so far; drives bias correction.
    pub(crate) step: u64,
}

impl AdamW {
    pub fn new(params: &impl ParamSet<f32>, weight_decay: f64) -> Self {
        let shapes: Vec<usize> = params.named_tensors().iter().map(|t| t.values.len()).collect();
        AdamW {
            weight_decay,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut impl ParamSet<f32>, grads: &impl ParamSet<f32>, lr: f64) -> Result<()> {
        let grads = grads.named_tensors();
        let mut params = params.named_tensors_mut();
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 / (1.0 - BETA1.powi(t));
        let c2 = 1.0 / (1.0 - BETA2.powi(t));
        let decay = (1.0 - lr * self.weight_decay) as f32;
        let (b1, b2) = (BETA1 as f32, BETA2 as f32);
        let (lr, c1, c2, eps) = (lr as f32, c1 as f32, c2 as f32, EPS as f32);
        for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            if p.values.len() != g.values.len() || m.len() != g.values.len() {
                return Err(Error::Shape(format!("tensor {} changed size", p.name)));
            }
            for i in 0..m.len() {
                let gi = g.values[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = (m[i] * c1) / ((v[i] * c2).sqrt() + eps);
                p.values[i] = p.values[i] * decay - lr * update;
            }
        }
        Ok(())
    }
}

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.8,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay:
/// `p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: Vec<u64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        Self {
            config,
            m: params.values().iter().map(|t| vec![0.0; t.numel()]).collect(),
            v: params.values().iter().map(|t| vec![0.0; t.numel()]).collect(),
            steps: vec![0; params.len()],
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    /// Update every parameter that has a gradient. Parameters without one
    /// (not reached by the loss) are left untouched; a store with no
    /// gradients at all is an error.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::shape("optimizer state does not match parameter store"));
        }
        if params.ids().all(|id| params.grad(id).is_none()) {
            return Err(Error::invalid("optimizer step without gradients"));
        }
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        for id in params.ids().collect::<Vec<_>>() {
            let Some(grad) = params.grad(id).cloned() else { continue };
            if let Some(bad) = grad.data().iter().find(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} contains {bad}",
                    params.name(id)
                )));
            }
            let i = id.index();
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.value_mut(id).data_mut();
            for j in 0..p.len() {
                let g = grad.data()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * weight_decay * p[j] + lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn round_to_f32(&mut self) {
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            buf.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    /// Moments and step counts as named tensors, keyed by parameter name.
    pub fn records(&self, params: &ParamStore, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(3 * params.len());
        for id in params.ids() {
            let i = id.index();
            let name = params.name(id);
            let shape = params.value(id).shape().to_vec();
            out.push((
                format!("{prefix}m/{name}"),
                Tensor::new(shape.clone(), self.m[i].clone()).expect("moment shape"),
            ));
            out.push((
                format!("{prefix}v/{name}"),
                Tensor::new(shape, self.v[i].clone()).expect("moment shape"),
            ));
            out.push((
                format!("{prefix}t/{name}"),
                Tensor::from_vec(vec![self.steps[i] as f64]),
            ));
        }
        out
    }

    pub fn load_records(&mut self, params: &ParamStore, records: &[(String, Tensor)], prefix: &str) -> Result<()> {
        let find = |key: String| -> Result<&Tensor> {
            records
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer record {key}")))
        };
        for id in params.ids() {
            let i = id.index();
            let name = params.name(id);
            let m = find(format!("{prefix}m/{name}"))?;
            let v = find(format!("{prefix}v/{name}"))?;
            let t = find(format!("{prefix}t/{name}"))?;
            if m.numel() != self.m[i].len() || v.numel() != self.v[i].len() || t.numel() != 1 {
                return Err(Error::Checkpoint(format!("optimizer record for {name} has the wrong size")));
            }
            self.m[i] = m.data().to_vec();
            self.v[i] = v.data().to_vec();
            self.steps[i] = t.item() as u64;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(value: f64) -> (ParamStore, super::super::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::from_vec(vec![value]));
        (s, id)
    }

    #[test]
    fn decay_only_update() {
        let (mut s, id) = store(1.0);
        s.set_grad(id, Some(Tensor::from_vec(vec![0.0])));
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, 2e-4).unwrap();
        assert!((s.value(id).item() - 0.999_998).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let (mut s, id) = store(0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &s);
        let lr = 1e-3;
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..200 {
            s.set_grad(id, Some(Tensor::from_vec(vec![0.37])));
            opt.step(&mut s, lr).unwrap();
            let p = s.value(id).item();
            last_step = prev - p;
            prev = p;
        }
        assert!((last_step - lr).abs() < 1e-3 * lr, "{last_step}");
    }

    #[test]
    fn missing_grads_is_an_error() {
        let (mut s, _) = store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        assert!(opt.step(&mut s, 1e-3).is_err());
    }

    #[test]
    fn state_records_roundtrip() {
        let (mut s, id) = store(0.5);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        s.set_grad(id, Some(Tensor::from_vec(vec![0.25])));
        opt.step(&mut s, 1e-3).unwrap();
        let recs = opt.records(&s, "opt.");
        let mut fresh = AdamW::new(AdamWConfig::default(), &s);
        fresh.load_records(&s, &recs, "opt.").unwrap();
        assert_eq!(fresh.m, opt.m);
        assert_eq!(fresh.v, opt.v);
        assert_eq!(fresh.steps, opt.steps);
    }
}

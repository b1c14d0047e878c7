use super::params::ParamStore;

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Adam with per-parameter step counts; frozen parameters keep their moments untouched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: Vec<Option<Moments>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        if self.state.len() < store.len() {
            self.state.resize(store.len(), None);
        }
        for (p, slot) in store.iter_mut().zip(&mut self.state) {
            if p.frozen {
                continue;
            }
            let Some(g) = p.tensor.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let s = slot.get_or_insert_with(|| Moments {
                m: vec![0.0; g.len()],
                v: vec![0.0; g.len()],
                t: 0,
            });
            s.t += 1;
            let c1 = 1.0 - self.beta1.powi(s.t);
            let c2 = 1.0 - self.beta2.powi(s.t);
            for (((w, gi), m), v) in p.tensor.data_mut().iter_mut().zip(&g).zip(&mut s.m).zip(&mut s.v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use crate::rng;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        let id = s.add("w", vec![2], 1, Init::Zeros, &mut rng::seeded(0)).unwrap();
        s.get_mut(id).tensor.accumulate_grad(&[3.0, -0.5]);
        Adam::new().step(&mut s, 0.1);
        let w = s.get(id).tensor.data();
        assert!((w[0] + 0.1).abs() < 1e-6 && (w[1] - 0.1).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn frozen_and_zero_rate_do_not_move() {
        let mut s = ParamStore::new();
        let a = s.add("a", vec![2], 1, Init::Uniform, &mut rng::seeded(1)).unwrap();
        let b = s.add("b", vec![2], 1, Init::Uniform, &mut rng::seeded(2)).unwrap();
        let before = s.clone();
        s.get_mut(a).frozen = true;
        for id in [a, b] {
            s.get_mut(id).tensor.accumulate_grad(&[1.0, 1.0]);
        }
        let mut opt = Adam::new();
        opt.step(&mut s, 0.0);
        assert_eq!(s.get(b).tensor.data(), before.get(b).tensor.data());
        opt.step(&mut s, 0.5);
        assert_eq!(s.get(a).tensor.data(), before.get(a).tensor.data());
        assert_ne!(s.get(b).tensor.data(), before.get(b).tensor.data());
    }
}

//! Adam with bias correction, per-block freezing and optional row masks on
//! the embedding matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Block, BtnParams, Tensors};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplier on the learning rate of the feature encoder, which stands
    /// in for a pretrained layer that should adapt slowly.
    pub encoder_lr_scale: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, encoder_lr_scale: 0.1 }
    }
}

/// Which parameters an update may touch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateMask {
    pub frozen: BTreeSet<Block>,
    /// When set, only these embedding rows move (both embedding blocks).
    pub rows: Option<BTreeSet<usize>>,
}

impl UpdateMask {
    pub fn all() -> Self {
        Self::default()
    }

    /// Only the given embedding rows train; every other block is frozen.
    pub fn rows_only(rows: impl IntoIterator<Item = usize>) -> Self {
        UpdateMask {
            frozen: Block::ALL
                .into_iter()
                .filter(|b| !matches!(b, Block::Embed | Block::EmbedUp))
                .collect(),
            rows: Some(rows.into_iter().collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Tensors,
    v: Tensors,
    step: u64,
}

impl AdamState {
    pub fn new(params: &BtnParams) -> Self {
        AdamState { m: Tensors::zeros_like(&params.t), v: Tensors::zeros_like(&params.t), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Keeps moment shapes in line after embedding columns were appended.
    pub fn grow(&mut self, params: &BtnParams) {
        let rows = params.t.embed.rows;
        let cols = params.t.embed.cols;
        for t in [&mut self.m, &mut self.v] {
            while t.embed.rows < rows {
                t.embed.push_row(&vec![0.0; cols]);
            }
            if let Some(up) = &mut t.embed_up {
                while up.rows < rows {
                    up.push_row(&vec![0.0; cols]);
                }
            }
        }
    }

    pub fn step(&mut self, params: &mut BtnParams, grad: &Tensors, cfg: &AdamConfig, mask: &UpdateMask) {
        self.grow(params);
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        let cols = params.t.embed.cols;
        for b in Block::ALL {
            if mask.frozen.contains(&b) {
                continue;
            }
            let (Some(p), Some(g), Some(m), Some(v)) =
                (params.t.block_mut(b), grad.block(b), self.m.block_mut(b), self.v.block_mut(b))
            else {
                continue;
            };
            let lr = match b {
                Block::EncoderWeight | Block::EncoderBias => cfg.learning_rate * cfg.encoder_lr_scale,
                _ => cfg.learning_rate,
            };
            let row_ok = |i: usize| match (&mask.rows, b) {
                (Some(rows), Block::Embed | Block::EmbedUp) => rows.contains(&(i / cols)),
                _ => true,
            };
            for i in 0..p.len() {
                if !row_ok(i) {
                    continue;
                }
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small() -> BtnParams {
        BtnParams::init(ModelConfig { rank: 3, hidden: 2, feature_dim: 2, ..Default::default() }, 4)
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = small();
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = Tensors::zeros_like(&p.t);
        for _ in 0..5 {
            st.step(&mut p, &g, &AdamConfig::default(), &UpdateMask::all());
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_steps_match_hand_arithmetic() {
        // f(x) = x², x0 = 1, lr = 0.1.
        let mut p = small();
        p.t.a_bar = vec![1.0, 0.0, 0.0];
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mask = UpdateMask { frozen: Block::ALL.into_iter().filter(|&b| b != Block::ABar).collect(), rows: None };
        let mut st = AdamState::new(&p);
        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for k in 1..=3 {
            let mut g = Tensors::zeros_like(&p.t);
            g.a_bar[0] = 2.0 * p.t.a_bar[0];
            st.step(&mut p, &g, &cfg, &mask);
            let gx = 2.0 * x;
            m = 0.9 * m + 0.1 * gx;
            v = 0.999 * v + 0.001 * gx * gx;
            let mh = m / (1.0 - 0.9f64.powi(k));
            let vh = v / (1.0 - 0.999f64.powi(k));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.t.a_bar[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn masks_hold_blocks_and_rows() {
        let mut p = small();
        let before = p.clone();
        let mut g = Tensors::zeros_like(&p.t);
        for b in Block::ALL {
            if let Some(d) = g.block_mut(b) {
                d.iter_mut().for_each(|x| *x = 1.0);
            }
        }
        let mut st = AdamState::new(&p);
        st.step(&mut p, &g, &AdamConfig::default(), &UpdateMask::rows_only([2]));
        assert_eq!(p.t.w, before.t.w);
        assert_eq!(p.t.enc_w, before.t.enc_w);
        for row in [0, 1, 3] {
            assert_eq!(p.t.embed.row(row), before.t.embed.row(row));
        }
        assert_ne!(p.t.embed.row(2), before.t.embed.row(2));
    }
}

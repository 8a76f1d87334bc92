//! Shared convolutional trunk, separate fully-connected heads for actor and
//! critic, the goal actor and the twin Q-functions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layers::{concat, relu, relu_backward, sigmoid, sigmoid_backward, split, tanh, tanh_backward, Conv3x3, ConvCache, LayerNorm, Linear, LnCache};
use crate::params::ParamSet;
use crate::real::Real;

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Map planes fed to the trunk (semantic channels plus auxiliary planes).
    pub in_channels: usize,
    /// Side of the (pooled) square input map.
    pub map_side: usize,
    pub conv_channels: usize,
    pub conv_layers: usize,
    pub embed: usize,
    pub enc_width: usize,
    pub hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { in_channels: 11, map_side: 24, conv_channels: 32, conv_layers: 4, embed: 50, enc_width: 16, hidden: 256 }
    }
}

impl NetConfig {
    pub fn conv_out_side(&self) -> usize {
        self.map_side.saturating_sub(2 * self.conv_layers)
    }

    pub fn conv_flat(&self) -> usize {
        self.conv_channels * self.conv_out_side() * self.conv_out_side()
    }

    pub fn obs_len(&self) -> usize {
        self.in_channels * self.map_side * self.map_side
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.conv_out_side() == 0 {
            return Err(ModelError::Config(format!("map side {} too small for {} conv layers", self.map_side, self.conv_layers)));
        }
        if [self.in_channels, self.conv_channels, self.conv_layers, self.embed, self.enc_width, self.hidden].contains(&0) {
            return Err(ModelError::Config("all sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    fc: Linear,
    ln: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Layer descriptors; identical for online and target parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub cfg: NetConfig,
    convs: Vec<Conv3x3>,
    critic_head: Head,
    actor_head: Head,
    actor: Mlp,
    q1: Mlp,
    q2: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams<T> {
    pub trunk: ParamSet<T>,
    pub critic_head: ParamSet<T>,
    pub actor_head: ParamSet<T>,
    pub actor: ParamSet<T>,
    pub q1: ParamSet<T>,
    pub q2: ParamSet<T>,
}

impl<T: Real> NetParams<T> {
    pub fn groups(&self) -> [(&'static str, &ParamSet<T>); 6] {
        [
            ("trunk", &self.trunk),
            ("critic_head", &self.critic_head),
            ("actor_head", &self.actor_head),
            ("actor", &self.actor),
            ("q1", &self.q1),
            ("q2", &self.q2),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut ParamSet<T>); 6] {
        [
            ("trunk", &mut self.trunk),
            ("critic_head", &mut self.critic_head),
            ("actor_head", &mut self.actor_head),
            ("actor", &mut self.actor),
            ("q1", &mut self.q1),
            ("q2", &mut self.q2),
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self.trunk.zeros_like(),
            critic_head: self.critic_head.zeros_like(),
            actor_head: self.actor_head.zeros_like(),
            actor: self.actor.zeros_like(),
            q1: self.q1.zeros_like(),
            q2: self.q2.zeros_like(),
        }
    }

    pub fn soft_update(&mut self, online: &Self, tau: T) {
        for ((_, t), (_, o)) in self.groups_mut().into_iter().zip(online.groups()) {
            t.soft_update(o, tau);
        }
    }

    pub fn cast<U: Real>(&self) -> NetParams<U> {
        NetParams {
            trunk: self.trunk.cast(),
            critic_head: self.critic_head.cast(),
            actor_head: self.actor_head.cast(),
            actor: self.actor.cast(),
            q1: self.q1.cast(),
            q2: self.q2.cast(),
        }
    }
}

fn head<T: Real>(ps: &mut ParamSet<T>, input: usize, embed: usize, rng: &mut ChaCha8Rng) -> Head {
    Head { fc: Linear::new(ps, "fc", input, embed, 1.0, rng), ln: LayerNorm::new(ps, "ln", embed) }
}

fn mlp<T: Real>(ps: &mut ParamSet<T>, sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
    let n = sizes.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let gain = if i + 1 < n { RELU_GAIN } else { 1.0 };
            Linear::new(ps, &format!("fc{i}"), sizes[i], sizes[i + 1], gain, rng)
        })
        .collect();
    Mlp { layers }
}

/// Builds the architecture and freshly initialized parameters.
pub fn build<T: Real>(cfg: &NetConfig, seed: u64) -> Result<(Arch, NetParams<T>), ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trunk = ParamSet::new();
    let convs = (0..cfg.conv_layers)
        .map(|i| {
            let cin = if i == 0 { cfg.in_channels } else { cfg.conv_channels };
            Conv3x3::new(&mut trunk, &format!("conv{i}"), cin, cfg.conv_channels, RELU_GAIN, &mut rng)
        })
        .collect();
    let head_in = cfg.conv_flat() + cfg.enc_width;
    let mut critic_head = ParamSet::new();
    let ch = head(&mut critic_head, head_in, cfg.embed, &mut rng);
    let mut actor_head = ParamSet::new();
    let ah = head(&mut actor_head, head_in, cfg.embed, &mut rng);
    let mut actor = ParamSet::new();
    let am = mlp(&mut actor, &[cfg.embed + cfg.enc_width, cfg.hidden, cfg.hidden, 2], &mut rng);
    let q_sizes = [cfg.embed + cfg.enc_width + 2, cfg.hidden, cfg.hidden, 1];
    let mut q1 = ParamSet::new();
    let m1 = mlp(&mut q1, &q_sizes, &mut rng);
    let mut q2 = ParamSet::new();
    let m2 = mlp(&mut q2, &q_sizes, &mut rng);
    let arch = Arch { cfg: cfg.clone(), convs, critic_head: ch, actor_head: ah, actor: am, q1: m1, q2: m2 };
    Ok((arch, NetParams { trunk, critic_head, actor_head, actor, q1, q2 }))
}

pub struct TrunkOut<T> {
    pub flat: Vec<T>,
    acts: Vec<Vec<T>>,
    caches: Vec<ConvCache<T>>,
}

struct HeadCache<T> {
    x: Vec<T>,
    ln: LnCache<T>,
    emb: Vec<T>,
}

struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
    out: Vec<T>,
}

fn check(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::Shape { what, expected, got });
    }
    Ok(())
}

impl Arch {
    pub fn trunk_forward<T: Real>(&self, ps: &ParamSet<T>, obs: &[T], batch: usize) -> Result<TrunkOut<T>, ModelError> {
        let cfg = &self.cfg;
        check("map tensor", batch * cfg.obs_len(), obs.len())?;
        if batch == 0 {
            return Err(ModelError::EmptyBatch);
        }
        let (c, m) = (cfg.in_channels, cfg.map_side);
        let plane = m * m;
        // sample-major → channel-major
        let mut x = vec![T::zero(); obs.len()];
        for b in 0..batch {
            for ch in 0..c {
                x[(ch * batch + b) * plane..][..plane].copy_from_slice(&obs[(b * c + ch) * plane..][..plane]);
            }
        }
        let mut side = m;
        let mut acts = Vec::with_capacity(self.convs.len());
        let mut caches = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let input = acts.last().unwrap_or(&x);
            let (mut y, cache) = conv.forward(ps, input, batch, side, side);
            relu(&mut y);
            side -= 2;
            acts.push(y);
            caches.push(cache);
        }
        let last = acts.last().expect("at least one conv layer");
        let (co, sp) = (cfg.conv_channels, side * side);
        let mut flat = vec![T::zero(); batch * co * sp];
        for ch in 0..co {
            for b in 0..batch {
                flat[(b * co + ch) * sp..][..sp].copy_from_slice(&last[(ch * batch + b) * sp..][..sp]);
            }
        }
        Ok(TrunkOut { flat, acts, caches })
    }

    fn trunk_backward<T: Real>(&self, ps: &ParamSet<T>, grads: &mut ParamSet<T>, out: &TrunkOut<T>, dflat: &[T], batch: usize) {
        let co = self.cfg.conv_channels;
        let side = self.cfg.conv_out_side();
        let sp = side * side;
        let mut d = vec![T::zero(); dflat.len()];
        for ch in 0..co {
            for b in 0..batch {
                d[(ch * batch + b) * sp..][..sp].copy_from_slice(&dflat[(b * co + ch) * sp..][..sp]);
            }
        }
        for (i, conv) in self.convs.iter().enumerate().rev() {
            relu_backward(&out.acts[i], &mut d);
            match conv.backward(ps, grads, &out.caches[i], &d, batch, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    fn head_forward<T: Real>(&self, head: &Head, ps: &ParamSet<T>, flat: &[T], enc: &[T], batch: usize) -> HeadCache<T> {
        let x = concat(flat, self.cfg.conv_flat(), enc, self.cfg.enc_width, batch);
        let pre = head.fc.forward(ps, &x, batch);
        let (mut emb, ln) = head.ln.forward(ps, &pre);
        tanh(&mut emb);
        HeadCache { x, ln, emb }
    }

    /// Returns the gradient with respect to the trunk features.
    fn head_backward<T: Real>(&self, head: &Head, ps: &ParamSet<T>, mut grads: Option<&mut ParamSet<T>>, cache: &HeadCache<T>, demb: &[T], batch: usize) -> Vec<T> {
        let mut d = demb.to_vec();
        tanh_backward(&cache.emb, &mut d);
        let dpre = head.ln.backward(ps, grads.as_deref_mut(), &cache.ln, &d);
        let dx = head.fc.backward(ps, grads, &cache.x, &dpre, batch);
        split(&dx, self.cfg.conv_flat(), self.cfg.enc_width, batch).0
    }

    fn mlp_forward<T: Real>(&self, m: &Mlp, ps: &ParamSet<T>, input: Vec<T>, batch: usize) -> MlpCache<T> {
        let mut inputs = vec![input];
        let n = m.layers.len();
        for (i, l) in m.layers.iter().enumerate() {
            let mut y = l.forward(ps, inputs.last().expect("input"), batch);
            if i + 1 < n {
                relu(&mut y);
                inputs.push(y);
            } else {
                return MlpCache { inputs, out: y };
            }
        }
        unreachable!("mlp has at least one layer")
    }

    fn mlp_backward<T: Real>(&self, m: &Mlp, ps: &ParamSet<T>, mut grads: Option<&mut ParamSet<T>>, cache: &MlpCache<T>, dout: &[T], batch: usize) -> Vec<T> {
        let mut d = dout.to_vec();
        for (i, l) in m.layers.iter().enumerate().rev() {
            d = l.backward(ps, grads.as_deref_mut(), &cache.inputs[i], &d, batch);
            if i > 0 {
                relu_backward(&cache.inputs[i], &mut d);
            }
        }
        d
    }

    fn check_enc(&self, enc: &[impl Sized], batch: usize) -> Result<(), ModelError> {
        check("target encoding", batch * self.cfg.enc_width, enc.len())
    }

    /// Critic-side 50-dimensional embedding.
    pub fn forward_embed<T: Real>(&self, p: &NetParams<T>, obs: &[T], enc: &[T], batch: usize) -> Result<Vec<T>, ModelError> {
        self.check_enc(enc, batch)?;
        let t = self.trunk_forward(&p.trunk, obs, batch)?;
        Ok(self.head_forward(&self.critic_head, &p.critic_head, &t.flat, enc, batch).emb)
    }

    fn actor_from_flat<T: Real>(&self, p: &NetParams<T>, flat: &[T], enc: &[T], batch: usize) -> (HeadCache<T>, MlpCache<T>) {
        let hc = self.head_forward(&self.actor_head, &p.actor_head, flat, enc, batch);
        let a_in = concat(&hc.emb, self.cfg.embed, enc, self.cfg.enc_width, batch);
        let mut mc = self.mlp_forward(&self.actor, &p.actor, a_in, batch);
        sigmoid(&mut mc.out);
        (hc, mc)
    }

    /// Goal actions in `(0, 1)²`, sample-major `batch × 2`.
    pub fn act<T: Real>(&self, p: &NetParams<T>, obs: &[T], enc: &[T], batch: usize) -> Result<Vec<T>, ModelError> {
        self.check_enc(enc, batch)?;
        let t = self.trunk_forward(&p.trunk, obs, batch)?;
        Ok(self.actor_from_flat(p, &t.flat, enc, batch).1.out)
    }

    fn q_from_emb<T: Real>(&self, p: &NetParams<T>, emb: &[T], enc: &[T], action: &[T], batch: usize) -> (Vec<T>, MlpCache<T>, MlpCache<T>) {
        let ee = concat(emb, self.cfg.embed, enc, self.cfg.enc_width, batch);
        let q_in = concat(&ee, self.cfg.embed + self.cfg.enc_width, action, 2, batch);
        let c1 = self.mlp_forward(&self.q1, &p.q1, q_in.clone(), batch);
        let c2 = self.mlp_forward(&self.q2, &p.q2, q_in.clone(), batch);
        (q_in, c1, c2)
    }

    pub fn q_values<T: Real>(&self, p: &NetParams<T>, obs: &[T], enc: &[T], action: &[T], batch: usize) -> Result<(Vec<T>, Vec<T>), ModelError> {
        self.check_enc(enc, batch)?;
        check("action", batch * 2, action.len())?;
        let emb = self.forward_embed(p, obs, enc, batch)?;
        let (_, c1, c2) = self.q_from_emb(p, &emb, enc, action, batch);
        Ok((c1.out, c2.out))
    }

    /// Mean over the batch of `(Q₁ − y)² + (Q₂ − y)²`; gradients land in
    /// the trunk, critic head and both Q-functions.
    pub fn critic_loss<T: Real>(
        &self,
        p: &NetParams<T>,
        obs: &[T],
        enc: &[T],
        action: &[T],
        y: &[T],
        batch: usize,
        grads: Option<&mut NetParams<T>>,
    ) -> Result<T, ModelError> {
        self.check_enc(enc, batch)?;
        check("action", batch * 2, action.len())?;
        check("targets", batch, y.len())?;
        let t = self.trunk_forward(&p.trunk, obs, batch)?;
        let hc = self.head_forward(&self.critic_head, &p.critic_head, &t.flat, enc, batch);
        let (_, c1, c2) = self.q_from_emb(p, &hc.emb, enc, action, batch);
        let bn = T::of(batch as f64);
        let mut loss = T::zero();
        for i in 0..batch {
            let (e1, e2) = (c1.out[i] - y[i], c2.out[i] - y[i]);
            loss += e1 * e1 + e2 * e2;
        }
        loss = loss / bn;
        if let Some(g) = grads {
            let two = T::of(2.0);
            let d1: Vec<T> = (0..batch).map(|i| two * (c1.out[i] - y[i]) / bn).collect();
            let d2: Vec<T> = (0..batch).map(|i| two * (c2.out[i] - y[i]) / bn).collect();
            let dq1 = self.mlp_backward(&self.q1, &p.q1, Some(&mut g.q1), &c1, &d1, batch);
            let dq2 = self.mlp_backward(&self.q2, &p.q2, Some(&mut g.q2), &c2, &d2, batch);
            let width = self.cfg.embed + self.cfg.enc_width + 2;
            let mut demb = vec![T::zero(); batch * self.cfg.embed];
            for b in 0..batch {
                for j in 0..self.cfg.embed {
                    demb[b * self.cfg.embed + j] = dq1[b * width + j] + dq2[b * width + j];
                }
            }
            let dflat = self.head_backward(&self.critic_head, &p.critic_head, Some(&mut g.critic_head), &hc, &demb, batch);
            self.trunk_backward(&p.trunk, &mut g.trunk, &t, &dflat, batch);
        }
        Ok(loss)
    }

    /// `−mean Q₁(s, π(s))`. Trunk features are treated as constants and the
    /// critic is not updated, so gradients land only in the actor head and
    /// actor MLP.
    pub fn actor_loss<T: Real>(&self, p: &NetParams<T>, obs: &[T], enc: &[T], batch: usize, grads: Option<&mut NetParams<T>>) -> Result<T, ModelError> {
        self.check_enc(enc, batch)?;
        let t = self.trunk_forward(&p.trunk, obs, batch)?;
        self.actor_loss_from_flat(p, &t.flat, enc, batch, grads)
    }

    pub fn actor_loss_from_flat<T: Real>(&self, p: &NetParams<T>, flat: &[T], enc: &[T], batch: usize, grads: Option<&mut NetParams<T>>) -> Result<T, ModelError> {
        check("trunk features", batch * self.cfg.conv_flat(), flat.len())?;
        let (ah, am) = self.actor_from_flat(p, flat, enc, batch);
        let ch = self.head_forward(&self.critic_head, &p.critic_head, flat, enc, batch);
        let (_, c1, _) = self.q_from_emb(p, &ch.emb, enc, &am.out, batch);
        let bn = T::of(batch as f64);
        let loss = -c1.out.iter().copied().sum::<T>() / bn;
        if let Some(g) = grads {
            let dq = vec![-T::one() / bn; batch];
            let dq_in = self.mlp_backward(&self.q1, &p.q1, None, &c1, &dq, batch);
            let width = self.cfg.embed + self.cfg.enc_width + 2;
            let mut da: Vec<T> = (0..batch).flat_map(|b| [dq_in[b * width + width - 2], dq_in[b * width + width - 1]]).collect();
            sigmoid_backward(&am.out, &mut da);
            let da_in = self.mlp_backward(&self.actor, &p.actor, Some(&mut g.actor), &am, &da, batch);
            let (demb, _) = split(&da_in, self.cfg.embed, self.cfg.enc_width, batch);
            self.head_backward(&self.actor_head, &p.actor_head, Some(&mut g.actor_head), &ah, &demb, batch);
        }
        Ok(loss)
    }
}

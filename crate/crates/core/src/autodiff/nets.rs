use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{NodeId, ValueGraph};
use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::imagecore::{Image, LogitMap, Trimap};
use crate::losses::{MultiScaleOutputs, SSIM_WINDOW};

/// Widest feature map any stage may use.
pub const MAX_CHANNELS: usize = 32;
/// Deepest encoder–decoder supported.
pub const MAX_DEPTH: usize = 3;
/// Smallest accepted input side.
pub const MIN_INPUT_SIZE: usize = 16;

/// Shape of a toy encoder–decoder: stage `i` has `min(base · 2^i, 32)`
/// channels, `depth` pooling steps, square inputs of `input_size` pixels.
/// Blocks are conv3×3 (no bias) → instance norm → GELU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyNetConfig {
    pub base_channels: usize,
    pub depth: usize,
    pub input_size: usize,
    pub seed: u64,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        Self {
            base_channels: 8,
            depth: 3,
            input_size: 64,
            seed: 7,
        }
    }
}

impl ToyNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.base_channels == 0 || self.base_channels > MAX_CHANNELS {
            return bad(format!("base_channels must be in 1..={MAX_CHANNELS}, got {}", self.base_channels));
        }
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return bad(format!("depth must be in 1..={MAX_DEPTH}, got {}", self.depth));
        }
        if self.input_size < MIN_INPUT_SIZE || !self.input_size.is_multiple_of(1 << self.depth) {
            return bad(format!(
                "input_size must be at least {MIN_INPUT_SIZE} and divisible by 2^depth = {}, got {}",
                1 << self.depth,
                self.input_size
            ));
        }
        Ok(())
    }

    /// Channel count of stage `i` (`0..=depth`).
    pub fn channels(&self, i: usize) -> usize {
        (self.base_channels << i).min(MAX_CHANNELS)
    }

    /// Decoder levels whose maps are at least as large as the SSIM window,
    /// coarsest first.
    fn supervised_levels(&self) -> Vec<usize> {
        (0..self.depth).rev().filter(|&i| self.input_size >> i >= SSIM_WINDOW).collect()
    }
}

/// Which of the two toy networks a [`ToyNet`] is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetKind {
    /// RGB in; main map plus auxiliary local/global/token maps out.
    Base,
    /// RGB + trimap/255 in; one map out.
    Refiner,
}

impl NetKind {
    pub fn in_channels(self) -> usize {
        match self {
            NetKind::Base => 3,
            NetKind::Refiner => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
struct Head {
    w: ParamId,
    b: ParamId,
    level: usize,
}

/// Graph handles of one forward pass. `local[0]` is the main prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutputs {
    pub main: NodeId,
    pub local: Vec<NodeId>,
    pub global: Vec<NodeId>,
    pub token: Vec<NodeId>,
}

impl NetOutputs {
    /// Every output node with its list position, local first.
    pub fn all(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.local.iter().chain(&self.global).chain(&self.token).copied()
    }
}

/// A toy base or refiner network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet<T = f32> {
    pub kind: NetKind,
    pub config: ToyNetConfig,
    pub params: ParamStore<T>,
    enc: Vec<Block>,
    mid: Block,
    dec: Vec<Block>,
    main: Head,
    local: Vec<Head>,
    global: Vec<Head>,
    token: Vec<Head>,
}

fn block<T: Scalar>(p: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Block {
    Block {
        w: p.add_kaiming(format!("{name}.conv.w"), vec![cout, cin, 3, 3], cin * 9, rng),
        gamma: p.add_filled(format!("{name}.norm.g"), vec![cout], 1.0),
        beta: p.add_filled(format!("{name}.norm.b"), vec![cout], 0.0),
    }
}

fn head<T: Scalar>(p: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, cin: usize, level: usize) -> Head {
    Head {
        // Unit gain: heads feed a sigmoid, not another GELU.
        w: {
            let id = p.add_kaiming(format!("{name}.w"), vec![1, cin, 1, 1], cin, rng);
            let t = p.value_mut(id);
            t.data.iter_mut().for_each(|v| *v = *v * T::from_f64(std::f64::consts::FRAC_1_SQRT_2));
            id
        },
        b: p.add_filled(format!("{name}.b"), vec![1], 0.0),
        level,
    }
}

/// Base network: encoder–decoder over RGB emitting the main map and
/// 6 local / 5 global / 4 token maps at the decoder scales.
pub fn build_toy_base<T: Scalar>(cfg: ToyNetConfig) -> Result<ToyNet<T>> {
    ToyNet::build(NetKind::Base, cfg)
}

/// Refiner network: same topology over image ⊕ trimap/255, one output.
pub fn build_toy_refiner<T: Scalar>(cfg: ToyNetConfig) -> Result<ToyNet<T>> {
    ToyNet::build(NetKind::Refiner, cfg)
}

impl<T: Scalar> ToyNet<T> {
    pub fn build(kind: NetKind, cfg: ToyNetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = ParamStore::new();
        let mut enc = Vec::with_capacity(cfg.depth);
        let mut cin = kind.in_channels();
        for i in 0..cfg.depth {
            enc.push(block(&mut p, &mut rng, &format!("enc{i}"), cin, cfg.channels(i)));
            cin = cfg.channels(i);
        }
        let mid = block(&mut p, &mut rng, "mid", cin, cfg.channels(cfg.depth));
        // Built deepest first, matching the order they run in.
        let mut dec = Vec::with_capacity(cfg.depth);
        for i in (0..cfg.depth).rev() {
            let cin = cfg.channels(i + 1) + cfg.channels(i);
            dec.push(block(&mut p, &mut rng, &format!("dec{i}"), cin, cfg.channels(i)));
        }
        let main = head(&mut p, &mut rng, "head.main", cfg.channels(0), 0);
        let (mut local, mut global, mut token) = (Vec::new(), Vec::new(), Vec::new());
        if kind == NetKind::Base {
            let levels = cfg.supervised_levels();
            let mut make = |list: &str, n: usize| -> Vec<Head> {
                (0..n)
                    .map(|j| {
                        let level = levels[j % levels.len()];
                        head(&mut p, &mut rng, &format!("head.{list}{j}"), cfg.channels(level), level)
                    })
                    .collect()
            };
            local = make("local", MultiScaleOutputs::DEFAULT_LOCAL - 1);
            global = make("global", MultiScaleOutputs::DEFAULT_GLOBAL);
            token = make("token", MultiScaleOutputs::DEFAULT_TOKEN);
        }
        Ok(Self {
            kind,
            config: cfg,
            params: p,
            enc,
            mid,
            dec,
            main,
            local,
            global,
            token,
        })
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Scalar>(&self) -> ToyNet<U> {
        ToyNet {
            kind: self.kind,
            config: self.config,
            params: self.params.cast(),
            enc: self.enc.clone(),
            mid: self.mid.clone(),
            dec: self.dec.clone(),
            main: self.main.clone(),
            local: self.local.clone(),
            global: self.global.clone(),
            token: self.token.clone(),
        }
    }

    fn run_block(&self, g: &mut ValueGraph<T>, x: NodeId, b: &Block) -> Result<NodeId> {
        let p = &self.params;
        let (w, gamma, beta) = (g.param(p, b.w), g.param(p, b.gamma), g.param(p, b.beta));
        // A conv bias would be cancelled by the normalization's mean removal.
        let zero = g.input(Tensor::zeros(vec![p.value(b.w).shape[0]]));
        let y = g.conv2d(x, w, zero)?;
        let y = g.instance_norm(y, gamma, beta)?;
        g.gelu(y)
    }

    fn run_head(&self, g: &mut ValueGraph<T>, x: NodeId, h: &Head) -> Result<NodeId> {
        let (w, b) = (g.param(&self.params, h.w), g.param(&self.params, h.b));
        g.conv2d(x, w, b)
    }

    /// Records one forward pass of `input` (`[C, S, S]`) into `g`.
    pub fn forward(&self, g: &mut ValueGraph<T>, input: Tensor<T>) -> Result<NetOutputs> {
        let s = self.config.input_size;
        let want = [self.kind.in_channels(), s, s];
        if input.shape != want {
            return Err(Error::Graph(format!(
                "{:?} network expects input {want:?}, got {:?}",
                self.kind, input.shape
            )));
        }
        let mut x = g.input(input);
        let mut skips = Vec::with_capacity(self.config.depth);
        for b in &self.enc {
            x = self.run_block(g, x, b)?;
            skips.push(x);
            x = g.avg_pool2(x)?;
        }
        x = self.run_block(g, x, &self.mid)?;
        // levels[i] is the decoder output at scale 1/2^i.
        let mut levels = vec![x; self.config.depth];
        for (k, (b, skip)) in self.dec.iter().zip(skips.iter().rev()).enumerate() {
            let up = g.upsample2(x)?;
            let cat = g.concat(up, *skip)?;
            x = self.run_block(g, cat, b)?;
            levels[self.config.depth - 1 - k] = x;
        }
        let main = self.run_head(g, x, &self.main)?;
        let mut run = |heads: &[Head]| -> Result<Vec<NodeId>> {
            heads
                .iter()
                .map(|h| {
                    let at = levels[h.level];
                    self.run_head(g, at, h)
                })
                .collect()
        };
        let mut local = vec![main];
        local.extend(run(&self.local)?);
        let global = run(&self.global)?;
        let token = run(&self.token)?;
        Ok(NetOutputs {
            main,
            local,
            global,
            token,
        })
    }

    /// Main logits `[1, S, S]` for one input, without keeping the graph.
    pub fn predict(&self, input: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = ValueGraph::new();
        let out = self.forward(&mut g, input)?;
        Ok(g.value(out.main).clone())
    }
}

/// Planar `[3, H, W]` tensor from an image.
pub fn image_tensor<T: Scalar>(img: &Image) -> Tensor<T> {
    let (h, w) = img.dims();
    Tensor::from_f32(vec![3, h, w], &img.to_planar())
}

/// `[4, H, W]` refiner input: the image followed by `trimap / 255`.
pub fn refiner_input<T: Scalar>(img: &Image, trimap: &Trimap) -> Result<Tensor<T>> {
    if img.dims() != trimap.dims() {
        return Err(Error::ShapeMismatch {
            expected: img.dims(),
            got: trimap.dims(),
        });
    }
    let (h, w) = img.dims();
    let mut planar = img.to_planar();
    planar.extend(trimap.data().iter().map(|&v| v as f32 / 255.0));
    Ok(Tensor::from_f32(vec![4, h, w], &planar))
}

/// Logit map from a single-channel `[1, H, W]` tensor.
pub fn to_logit_map<T: Scalar>(t: &Tensor<T>) -> Result<LogitMap> {
    match t.shape[..] {
        [1, h, w] => LogitMap::new(h, w, t.to_f32()),
        _ => Err(Error::Graph(format!("expected a [1, H, W] map, got {:?}", t.shape))),
    }
}

//! Desk-scale training of the toy base and refiner on synthetic scenes.
//!
//! The base learns with the multi-scale combined loss over its main, local,
//! global and token maps; the refiner then learns the structure loss on its
//! single output, fed with image ⊕ trimap where the trimap comes from the
//! trained base. Per-sample gradients are computed independently and summed
//! in sample order, so a run is bit-for-bit reproducible for a given
//! configuration whatever the thread count.

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    build_toy_base, build_toy_refiner, image_tensor, refiner_input, to_logit_map, Adam, AdamConfig, Checkpoint,
    ParamStore, Tensor, ToyNet, ToyNetConfig, ValueGraph,
};
use crate::datasets::{generate_synthetic, SynthSpec};
use crate::error::{Error, Result};
use crate::imagecore::{sigmoid_map, BinaryMask, Image, Trimap};
use crate::losses::{combined_loss, structure_loss, LossWeights, MultiScaleOutputs};
use crate::par::map_ordered;
use crate::trimap::{generate_trimap, ThresholdPair};

/// Everything that determines a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub net: ToyNetConfig,
    pub data: SynthSpec,
    /// Optimizer updates for the base.
    pub steps: u64,
    /// Optimizer updates for the refiner.
    pub refiner_steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub refiner_lr: f64,
    /// Horizontally flip every other pass over the training set.
    pub flip: bool,
    /// Thresholds for the trimaps the refiner trains on.
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            net: ToyNetConfig::default(),
            data: SynthSpec::default(),
            steps: 200,
            refiner_steps: 100,
            batch: 4,
            lr: 5e-3,
            refiner_lr: 5e-3,
            flip: true,
            t_low: ThresholdPair::DEFAULT_LOW,
            t_high: ThresholdPair::DEFAULT_HIGH,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.data.validate()?;
        ThresholdPair::new(self.t_low, self.t_high)?;
        if self.data.size != self.net.input_size {
            return Err(Error::InvalidConfig(format!(
                "synthetic size {} must equal the network input size {}",
                self.data.size, self.net.input_size
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be ≥ 1".into()));
        }
        for (name, lr) in [("lr", self.lr), ("refiner_lr", self.refiner_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Which network a curve row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Base,
    Refiner,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Base => "base",
            Stage::Refiner => "refiner",
        }
    }
}

/// One optimizer update: the batch-mean loss at the parameters before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub stage: Stage,
    /// 1-based index of the update within its stage.
    pub step: u64,
    pub loss: f64,
}

/// Mean loss over the whole training set before and after a stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub initial: f64,
    pub last: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub base: StageSummary,
    pub refiner: StageSummary,
}

/// Saved training progress beyond the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Progress {
    config: TrainConfig,
    base_step: u64,
    refiner_step: u64,
    base_initial: Option<f64>,
    refiner_initial: Option<f64>,
}

/// Training inputs for one orientation of one scene.
struct Sample {
    image: Image,
    gt: BinaryMask,
    input: Tensor<f32>,
}

pub struct Trainer {
    config: TrainConfig,
    samples: Vec<Sample>,
    base: ToyNet<f32>,
    base_adam: Adam,
    refiner: ToyNet<f32>,
    refiner_adam: Adam,
    progress: Progress,
    /// Refiner inputs, built from the base once its stage is complete.
    refiner_inputs: Option<Vec<Tensor<f32>>>,
}

const BASE_PREFIX: &str = "base/";
const REFINER_PREFIX: &str = "refiner/";

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut samples = Vec::new();
        for (image, gt) in generate_synthetic(&config.data)? {
            let input = image_tensor(&image);
            samples.push(Sample { image, gt, input });
        }
        if config.flip {
            let flipped: Vec<Sample> = samples
                .iter()
                .map(|s| {
                    let image = s.image.flip_horizontal();
                    Sample {
                        input: image_tensor(&image),
                        gt: s.gt.flip_horizontal(),
                        image,
                    }
                })
                .collect();
            samples.extend(flipped);
        }
        let base = build_toy_base(config.net)?;
        // Distinct initialization from the base even with equal seeds.
        let refiner = build_toy_refiner(ToyNetConfig {
            seed: config.net.seed.wrapping_add(1),
            ..config.net
        })?;
        Ok(Self {
            base_adam: Adam::new(AdamConfig::with_lr(config.lr), &base.params),
            refiner_adam: Adam::new(AdamConfig::with_lr(config.refiner_lr), &refiner.params),
            base,
            refiner,
            samples,
            progress: Progress {
                config,
                base_step: 0,
                refiner_step: 0,
                base_initial: None,
                refiner_initial: None,
            },
            config,
            refiner_inputs: None,
        })
    }

    /// Restores a run saved with [`checkpoint`](Self::checkpoint). `config`
    /// may raise the step counts; everything else must match the saved run.
    /// If the base still has steps to go, the refiner restarts from scratch
    /// since it depends on the final base.
    pub fn resume(config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let saved: Progress = serde_json::from_value(ck.meta["progress"].clone())
            .map_err(|e| Error::InvalidConfig(format!("checkpoint has no training progress: {e}")))?;
        let comparable = |c: TrainConfig| TrainConfig {
            steps: 0,
            refiner_steps: 0,
            ..c
        };
        if comparable(saved.config) != comparable(config) {
            return Err(Error::InvalidConfig(
                "checkpoint was produced with a different configuration (only step counts may change)".into(),
            ));
        }
        let mut t = Self::new(config)?;
        ck.load_params(BASE_PREFIX, &mut t.base.params)?;
        ck.load_adam(BASE_PREFIX, &mut t.base_adam, &t.base.params)?;
        t.progress.base_step = saved.base_step;
        t.progress.base_initial = saved.base_initial;
        if saved.base_step >= config.steps {
            ck.load_params(REFINER_PREFIX, &mut t.refiner.params)?;
            ck.load_adam(REFINER_PREFIX, &mut t.refiner_adam, &t.refiner.params)?;
            t.progress.refiner_step = saved.refiner_step;
            t.progress.refiner_initial = saved.refiner_initial;
        }
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn base(&self) -> &ToyNet<f32> {
        &self.base
    }

    pub fn refiner(&self) -> &ToyNet<f32> {
        &self.refiner
    }

    /// Completed `(base, refiner)` updates.
    pub fn steps_done(&self) -> (u64, u64) {
        (self.progress.base_step, self.progress.refiner_step)
    }

    /// Weights, optimizer state and progress.
    pub fn checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "format": "cgm-toy",
            "progress": self.progress,
        });
        let mut ck = Checkpoint::new(meta, self.progress.base_step + self.progress.refiner_step);
        ck.push_params(BASE_PREFIX, &self.base.params);
        ck.push_adam(BASE_PREFIX, &self.base_adam, &self.base.params);
        ck.push_params(REFINER_PREFIX, &self.refiner.params);
        ck.push_adam(REFINER_PREFIX, &self.refiner_adam, &self.refiner.params);
        ck
    }

    /// Number of distinct training samples (flips included).
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Mean combined loss of the current base over every training sample.
    pub fn base_dataset_loss(&self) -> Result<f64> {
        let idx: Vec<usize> = (0..self.samples.len()).collect();
        let losses = map_ordered(&idx, |&i| base_loss(&self.base, &self.samples[i]).map(|(l, _)| l));
        mean(losses)
    }

    /// Mean structure loss of the current refiner over every training sample.
    pub fn refiner_dataset_loss(&mut self) -> Result<f64> {
        self.ensure_refiner_inputs()?;
        let inputs = self.refiner_inputs.as_ref().expect("built above");
        let idx: Vec<usize> = (0..self.samples.len()).collect();
        let losses = map_ordered(&idx, |&i| {
            refiner_loss(&self.refiner, inputs[i].clone(), &self.samples[i].gt).map(|(l, _)| l)
        });
        mean(losses)
    }

    fn ensure_refiner_inputs(&mut self) -> Result<()> {
        if self.refiner_inputs.is_none() {
            let th = ThresholdPair::new(self.config.t_low, self.config.t_high)?;
            let idx: Vec<usize> = (0..self.samples.len()).collect();
            let inputs = map_ordered(&idx, |&i| -> Result<Tensor<f32>> {
                let s = &self.samples[i];
                let logits = to_logit_map(&self.base.predict(s.input.clone())?)?;
                refiner_input(&s.image, &generate_trimap(&logits, &th))
            });
            self.refiner_inputs = Some(inputs.into_iter().collect::<Result<_>>()?);
        }
        Ok(())
    }

    /// Indices of the samples in batch `step` (0-based): a fixed cyclic
    /// walk through the original scenes, flipped on odd passes.
    fn batch_indices(&self, step: u64) -> Vec<usize> {
        let scenes = self.config.data.count;
        (0..self.config.batch)
            .map(|k| {
                let j = step as usize * self.config.batch + k;
                let (pass, scene) = (j / scenes, j % scenes);
                if self.config.flip && pass % 2 == 1 {
                    scenes + scene
                } else {
                    scene
                }
            })
            .collect()
    }

    /// Trains whatever remains of both stages, reporting every update to
    /// `on_row`. On failure the trainer keeps the last good state, so
    /// [`checkpoint`](Self::checkpoint) still saves a usable run.
    pub fn run(&mut self, mut on_row: impl FnMut(&CurveRow)) -> Result<TrainSummary> {
        if self.progress.base_initial.is_none() {
            self.progress.base_initial = Some(self.base_dataset_loss()?);
        }
        while self.progress.base_step < self.config.steps {
            let batch = self.batch_indices(self.progress.base_step);
            let results = map_ordered(&batch, |&i| base_loss(&self.base, &self.samples[i]));
            let loss = apply(results, &mut self.base.params, &mut self.base_adam, "base", self.progress.base_step)?;
            self.progress.base_step += 1;
            on_row(&CurveRow {
                stage: Stage::Base,
                step: self.progress.base_step,
                loss,
            });
        }
        let base_last = self.base_dataset_loss()?;

        if self.progress.refiner_initial.is_none() {
            self.progress.refiner_initial = Some(self.refiner_dataset_loss()?);
        }
        self.ensure_refiner_inputs()?;
        while self.progress.refiner_step < self.config.refiner_steps {
            let batch = self.batch_indices(self.progress.refiner_step);
            let inputs = self.refiner_inputs.as_ref().expect("built above");
            let results = map_ordered(&batch, |&i| refiner_loss(&self.refiner, inputs[i].clone(), &self.samples[i].gt));
            let loss = apply(
                results,
                &mut self.refiner.params,
                &mut self.refiner_adam,
                "refiner",
                self.progress.refiner_step,
            )?;
            self.progress.refiner_step += 1;
            on_row(&CurveRow {
                stage: Stage::Refiner,
                step: self.progress.refiner_step,
                loss,
            });
        }
        let refiner_last = self.refiner_dataset_loss()?;
        Ok(TrainSummary {
            base: StageSummary {
                initial: self.progress.base_initial.expect("set above"),
                last: base_last,
            },
            refiner: StageSummary {
                initial: self.progress.refiner_initial.expect("set above"),
                last: refiner_last,
            },
        })
    }
}

fn mean(values: Vec<Result<f64>>) -> Result<f64> {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v?;
    }
    Ok(sum / n)
}

/// Sums per-sample gradients in order, averages, and takes one Adam step.
/// Returns the batch-mean loss. Nothing changes if any sample failed.
fn apply(
    results: Vec<Result<(f64, ParamStore<f32>)>>,
    params: &mut ParamStore<f32>,
    adam: &mut Adam,
    what: &str,
    step: u64,
) -> Result<f64> {
    let n = results.len();
    let mut acc = params.clone();
    acc.zero_grad();
    let mut loss = 0.0;
    for r in results {
        let (l, grads) = r.map_err(|e| match e {
            e if e.is_numeric() => Error::Diverged {
                what: format!("{what} forward/loss ({e})"),
                step,
            },
            e => e,
        })?;
        loss += l;
        for id in grads.ids() {
            acc.add_grad(id, grads.grad(id))?;
        }
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            what: format!("{what} loss"),
            step,
        });
    }
    acc.scale_grads(1.0 / n as f64);
    adam.step(&mut acc)?;
    *params = acc;
    params.zero_grad();
    Ok(loss)
}

fn grads_of(g: &ValueGraph<f32>, params: &ParamStore<f32>) -> Result<ParamStore<f32>> {
    let mut store = params.clone();
    store.zero_grad();
    g.accumulate_param_grads(&mut store)?;
    Ok(store)
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn base_loss(net: &ToyNet<f32>, s: &Sample) -> Result<(f64, ParamStore<f32>)> {
    let mut g = ValueGraph::new();
    let out = net.forward(&mut g, s.input.clone())?;
    let maps = |ids: &[crate::autodiff::NodeId]| -> Result<Vec<_>> { ids.iter().map(|&id| to_logit_map(g.value(id))).collect() };
    let ms = MultiScaleOutputs::from_logits(maps(&out.local)?, maps(&out.global)?, maps(&out.token)?, &s.gt)?;
    let loss = combined_loss(&ms)?;
    let grads: Vec<Vec<f32>> = loss
        .local_grads
        .iter()
        .chain(&loss.global_grads)
        .chain(&loss.token_grads)
        .map(|gm| to_f32(&gm.data))
        .collect();
    let seeds: Vec<_> = out.all().zip(grads.iter().map(Vec::as_slice)).collect();
    g.backward(&seeds)?;
    Ok((loss.total, grads_of(&g, &net.params)?))
}

fn refiner_loss(net: &ToyNet<f32>, input: Tensor<f32>, gt: &BinaryMask) -> Result<(f64, ParamStore<f32>)> {
    let mut g = ValueGraph::new();
    let out = net.forward(&mut g, input)?;
    let logits = to_logit_map(g.value(out.main))?;
    let b = structure_loss(&logits, gt, &LossWeights::default())?;
    g.backward(&[(out.main, &to_f32(&b.grad.data))])?;
    Ok((b.total, grads_of(&g, &net.params)?))
}

/// The configuration and both networks stored in a training checkpoint,
/// without rebuilding the training set.
pub fn load_networks(ck: &Checkpoint) -> Result<(TrainConfig, ToyNet<f32>, ToyNet<f32>)> {
    let saved: Progress = serde_json::from_value(ck.meta["progress"].clone())
        .map_err(|e| Error::InvalidConfig(format!("checkpoint has no training progress: {e}")))?;
    let config = saved.config;
    let mut base = build_toy_base(config.net)?;
    let mut refiner = build_toy_refiner(ToyNetConfig {
        seed: config.net.seed.wrapping_add(1),
        ..config.net
    })?;
    ck.load_params(BASE_PREFIX, &mut base.params)?;
    ck.load_params(REFINER_PREFIX, &mut refiner.params)?;
    Ok((config, base, refiner))
}

/// Main-map probabilities of a base network for one image.
pub fn predict_probability(net: &ToyNet<f32>, img: &Image) -> Result<crate::imagecore::ProbabilityMap> {
    Ok(sigmoid_map(&to_logit_map(&net.predict(image_tensor(img))?)?))
}

/// Refined probabilities from a refiner network for an image and trimap.
pub fn refine_probability(net: &ToyNet<f32>, img: &Image, trimap: &Trimap) -> Result<crate::imagecore::ProbabilityMap> {
    Ok(sigmoid_map(&to_logit_map(&net.predict(refiner_input(img, trimap)?)?)?))
}

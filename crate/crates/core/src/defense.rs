//! The masking defense and its training loops.
//!
//! Four trainings live here: the plain depth network N, its adversarially
//! trained twin N_adv, the clean saliency predictor G, and the robust
//! predictor G_adv (trained on a mix of clean and perturbed inputs while N
//! stays frozen). Evaluation wires up the six attack/defense configurations.
//!
//! Randomness protocol per run: the run generator is seeded from the config;
//! `split("shuffle")` drives the per-epoch sample order and `split("branch")`
//! the adversarial branch. Each iteration draws p first, then - only when
//! p > 0.5 - epsilon and the iteration count T, in that order. Runs are
//! bitwise reproducible.

use std::fmt;
use std::str::FromStr;

use crate::attacks::{attack_plain, AttackConfig};
use crate::data::SampleRecord;
use crate::error::{Error, Result};
use crate::losses::{difference_loss, mask_sparsity, LossBreakdown};
use crate::scalar::Scalar;
use crate::metrics::{mean_metrics, per_image, EvalReport};
use crate::networks::{bind_net, net_forward, build_network, NetworkSpec, ParameterStore, Role};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::tensor::{check_same_shape, Tape, Tensor};

/// Training hyperparameters. Defaults follow the experiment settings: Adam at
/// lr 1e-4 with betas (0.9, 0.999) and weight decay 1e-4, batch size 1, the
/// adversarial branch taken with probability 0.5 with epsilon drawn from
/// (0.01, 0.3) and T = floor(Uniform(1,10)).
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: u32,
    /// Iterations per epoch; `None` means one pass over the training set.
    pub iters_per_epoch: Option<u32>,
    /// Sparsity weight for saliency training.
    pub lambda: f64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub adv_prob: f64,
    pub eps_range: (f64, f64),
    pub iter_range: (f64, f64),
    pub seed: u64,
    pub batch_size: u32,
    /// Channel widths of networks built by the trainers.
    pub widths: Vec<usize>,
    /// Ramp the sparsity weight linearly from 0 to `lambda` over this many
    /// initial iterations. Without it the constant L1 pressure on the mask
    /// head can crush every mask to zero before the accuracy term has formed
    /// any spatial selectivity; all-zero masks are a dead critical point
    /// (black input, dead relus) that training cannot leave.
    pub lambda_warmup_iters: Option<u64>,
    /// When set, the sparsity weight is controlled online to hold the mean
    /// mask value at this target: lambda rises while masks are denser than
    /// the target and falls otherwise (starting from zero, so no separate
    /// warm-up is needed). The viable fixed-lambda window between "mask
    /// everything" and total collapse is narrow and shifts with the data;
    /// the controller finds it instead of requiring per-dataset tuning.
    /// `lambda` is ignored in this mode.
    pub sparsity_target: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            iters_per_epoch: None,
            lambda: 1.0,
            lr: 1e-4,
            betas: (0.9, 0.999),
            weight_decay: 1e-4,
            adv_prob: 0.5,
            eps_range: (0.01, 0.3),
            iter_range: (1.0, 10.0),
            seed: 0,
            batch_size: 1,
            widths: vec![12, 24, 48],
            lambda_warmup_iters: None,
            sparsity_target: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::arg("train-config", "epochs must be positive"));
        }
        if !(0.0..=1.0).contains(&self.adv_prob) {
            return Err(Error::arg("train-config", format!("adv_prob {} outside [0,1]", self.adv_prob)));
        }
        let (lo, hi) = self.eps_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::arg("train-config", format!("eps range ({lo},{hi}) invalid")));
        }
        if self.iter_range.0 < 1.0 || self.iter_range.1 < self.iter_range.0 {
            return Err(Error::arg("train-config", format!("iteration range {:?} invalid", self.iter_range)));
        }
        if self.lr <= 0.0 {
            return Err(Error::arg("train-config", "learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("train-config", "batch size must be positive"));
        }
        Ok(())
    }
}

/// Per-run training record: epoch-mean losses plus an audit of how many
/// iterations took the adversarial branch.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub epoch_losses: Vec<LossBreakdown>,
    pub adv_iterations: u64,
    pub total_iterations: u64,
}

impl TrainLog {
    pub fn epoch_totals(&self) -> Vec<f64> {
        self.epoch_losses.iter().map(|b| b.total).collect()
    }
}

/// The six evaluation dataflows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigurationId {
    /// N(x*): the undefended network under attack.
    A,
    /// N(x): clean baseline.
    B,
    /// N_adv(x*): adversarially trained depth network.
    C,
    /// N(x* (x) G(x*)): naive masking, mask predicted from the attacked image.
    D,
    /// N(x* (x) G(x)): oracle masking, mask predicted from the clean image.
    E,
    /// N(x* (x) G_adv(x*)): robust masking.
    F,
}

impl ConfigurationId {
    pub const ALL: [ConfigurationId; 6] = [
        ConfigurationId::A,
        ConfigurationId::B,
        ConfigurationId::C,
        ConfigurationId::D,
        ConfigurationId::E,
        ConfigurationId::F,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigurationId::A => "A",
            ConfigurationId::B => "B",
            ConfigurationId::C => "C",
            ConfigurationId::D => "D",
            ConfigurationId::E => "E",
            ConfigurationId::F => "F",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ConfigurationId::A => "N(x*)",
            ConfigurationId::B => "N(x)",
            ConfigurationId::C => "N_adv(x*)",
            ConfigurationId::D => "N(x* . G(x*))",
            ConfigurationId::E => "N(x* . G(x))",
            ConfigurationId::F => "N(x* . G_adv(x*))",
        }
    }
}

impl fmt::Display for ConfigurationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigurationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<ConfigurationId> {
        match s {
            "A" | "a" => Ok(ConfigurationId::A),
            "B" | "b" => Ok(ConfigurationId::B),
            "C" | "c" => Ok(ConfigurationId::C),
            "D" | "d" => Ok(ConfigurationId::D),
            "E" | "e" => Ok(ConfigurationId::E),
            "F" | "f" => Ok(ConfigurationId::F),
            other => Err(Error::arg(
                "configuration",
                format!("unknown configuration `{other}` (expected A..F)"),
            )),
        }
    }
}

/// Multiply each RGB channel by a single-channel mask in [0,1].
pub fn apply_mask(x: &Tensor<f32>, m: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [c, h, w] = x.shape()[..] else {
        return Err(Error::shape("apply_mask", format!("image must be [C,H,W], got {:?}", x.shape())));
    };
    if m.shape() != [1, h, w] {
        return Err(Error::shape(
            "apply_mask",
            format!("mask must be [1,{h},{w}], got {:?}", m.shape()),
        ));
    }
    if let Some((i, &v)) = m.data().iter().enumerate().find(|(_, &v)| !(0.0..=1.0).contains(&v)) {
        return Err(Error::domain(
            "apply_mask",
            format!("mask value {v} at index {i} outside [0,1]"),
        ));
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(c * plane);
    for ci in 0..c {
        let xs = &x.data()[ci * plane..(ci + 1) * plane];
        for (&xv, &mv) in xs.iter().zip(m.data()) {
            out.push(xv * mv);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

fn dims_of(data: &[SampleRecord]) -> Result<(usize, usize)> {
    let first = data.first().ok_or_else(|| Error::arg("train", "dataset is empty"))?;
    Ok(first.image_dims())
}

fn epoch_plan(n: usize, cfg: &TrainConfig) -> usize {
    cfg.iters_per_epoch.map(|j| j as usize).unwrap_or(n).max(1)
}

/// Draw the adversarial branch for one iteration: p always, then epsilon and
/// T only when the branch is taken. With the default adv_prob of 0.5 the
/// branch condition is exactly p > 0.5; T = floor(Uniform(1,10)) takes values
/// in {1,...,9}.
fn draw_branch(rng: &mut Rng, cfg: &TrainConfig) -> Option<AttackConfig> {
    let p = rng.next_f64();
    if p > 1.0 - cfg.adv_prob {
        let eps = rng.uniform(cfg.eps_range.0, cfg.eps_range.1);
        let t = (rng.uniform(cfg.iter_range.0, cfg.iter_range.1).floor() as u32).max(1);
        Some(AttackConfig::new(eps, t).expect("sampled attack parameters are valid"))
    } else {
        None
    }
}

struct EpochAccumulator {
    depth: f64,
    gradient: f64,
    normal: f64,
    total: f64,
    sparsity: f64,
    has_sparsity: bool,
    count: u64,
    lambda_sum: f64,
}

impl EpochAccumulator {
    fn new(_lambda: f64) -> Self {
        EpochAccumulator {
            depth: 0.0,
            gradient: 0.0,
            normal: 0.0,
            total: 0.0,
            sparsity: 0.0,
            has_sparsity: false,
            count: 0,
            lambda_sum: 0.0,
        }
    }

    fn push(&mut self, b: &LossBreakdown) {
        self.depth += b.depth;
        self.gradient += b.gradient;
        self.normal += b.normal;
        self.total += b.total;
        if let Some(s) = b.sparsity {
            self.sparsity += s;
            self.has_sparsity = true;
        }
        self.lambda_sum += b.lambda;
        self.count += 1;
    }

    fn mean(&self) -> LossBreakdown {
        let n = self.count.max(1) as f64;
        LossBreakdown {
            depth: self.depth / n,
            gradient: self.gradient / n,
            normal: self.normal / n,
            total: self.total / n,
            sparsity: self.has_sparsity.then_some(self.sparsity / n),
            lambda: self.lambda_sum / n,
        }
    }
}

fn train_depth_impl(
    data: &[SampleRecord],
    cfg: &TrainConfig,
    adversarial: bool,
    mut on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    cfg.validate()?;
    let (h, w) = dims_of(data)?;
    let spec = NetworkSpec::depth(h, w, cfg.widths.clone())?;
    let mut store = build_network::<f32>(&spec, cfg.seed)?;
    let mut adam = Adam::new(&store, cfg.lr, cfg.betas, cfg.weight_decay);

    let run = Rng::new(cfg.seed);
    let mut shuffle_rng = run.split("shuffle");
    let mut branch_rng = run.split("branch");

    let mut log = TrainLog::default();
    let per_epoch = epoch_plan(data.len(), cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut acc = EpochAccumulator::new(0.0);
        let mut it = 0usize;
        while it < per_epoch {
            let batch = (cfg.batch_size as usize).min(per_epoch - it);
            let mut grads: Option<Vec<Vec<f32>>> = None;
            for bi in 0..batch {
                let rec = &data[order[(it + bi) % data.len()]];
                let input = if adversarial {
                    match draw_branch(&mut branch_rng, cfg) {
                        Some(attack) => {
                            log.adv_iterations += 1;
                            attack_plain(&store, &rec.image, &rec.depth, &attack)?.x_star
                        }
                        None => rec.image.clone(),
                    }
                } else {
                    rec.image.clone()
                };

                let mut tape = Tape::new();
                let net = bind_net(&mut tape, &store, true)?;
                let xv = tape.constant(&input);
                let y = net_forward(&mut tape, &net, xv)?;
                let ybar = tape.constant(&rec.depth);
                let terms = difference_loss(&mut tape, y, ybar)?;
                let loss_val = tape.item(terms.total)?.to_f64();
                if !loss_val.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("depth training loss at epoch {epoch}, iteration {}", it + bi + 1),
                    });
                }
                acc.push(&LossBreakdown {
                    depth: tape.item(terms.depth)?.to_f64(),
                    gradient: tape.item(terms.gradient)?.to_f64(),
                    normal: tape.item(terms.normal)?.to_f64(),
                    total: loss_val,
                    sparsity: None,
                    lambda: 0.0,
                });
                tape.backward(terms.total)?;
                accumulate_param_grads(&tape, &net, &store, &mut grads, batch, epoch, it + bi)?;
            }
            adam.step(&mut store, &grads.expect("batch is nonempty"))?;
            log.total_iterations += batch as u64;
            it += batch;
        }
        store.set_epoch(epoch);
        let mean = acc.mean();
        on_epoch(epoch, mean.total);
        log.epoch_losses.push(mean);
    }
    Ok((store, log))
}

fn accumulate_param_grads(
    tape: &Tape<f32>,
    net: &crate::networks::BoundNet,
    store: &ParameterStore<f32>,
    grads: &mut Option<Vec<Vec<f32>>>,
    batch: usize,
    epoch: u32,
    iteration: usize,
) -> Result<()> {
    let vars = net.param_vars();
    let scale = 1.0 / batch as f32;
    match grads {
        None => {
            let mut out = Vec::with_capacity(vars.len());
            for (pi, &var) in vars.iter().enumerate() {
                let g: Vec<f32> = match tape.grad_data(var) {
                    Some(g) => g.iter().map(|&v| v * scale).collect(),
                    None => vec![0.0; store.entries().nth(pi).expect("aligned").1.numel()],
                };
                for (i, &v) in g.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            context: format!(
                                "gradient of parameter {pi} element {i} at epoch {epoch}, iteration {}",
                                iteration + 1
                            ),
                        });
                    }
                }
                out.push(g);
            }
            *grads = Some(out);
        }
        Some(acc) => {
            for (pi, &var) in vars.iter().enumerate() {
                if let Some(g) = tape.grad_data(var) {
                    for (i, (av, &gv)) in acc[pi].iter_mut().zip(g).enumerate() {
                        if !gv.is_finite() {
                            return Err(Error::NonFinite {
                                context: format!(
                                    "gradient of parameter {pi} element {i} at epoch {epoch}, iteration {}",
                                    iteration + 1
                                ),
                            });
                        }
                        *av += gv * scale;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Train the plain depth estimator on clean images.
pub fn train_depth(
    data: &[SampleRecord],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    train_depth_impl(data, cfg, false, on_epoch)
}

/// Train the depth estimator with the clean/adversarial input mix (the
/// N_adv baseline); attacks inside the loop target the network being trained.
pub fn train_depth_adv(
    data: &[SampleRecord],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    train_depth_impl(data, cfg, true, on_epoch)
}

fn train_saliency_impl(
    n_store: &ParameterStore<f32>,
    data: &[SampleRecord],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    cfg.validate()?;
    if n_store.spec().role() != Role::Depth {
        return Err(Error::arg("train-saliency", "frozen network must be a depth network"));
    }
    let (h, w) = dims_of(data)?;
    let spec = NetworkSpec::saliency(h, w, cfg.widths.clone())?;
    let mut g_store = build_network::<f32>(&spec, cfg.seed)?;
    let mut adam = Adam::new(&g_store, cfg.lr, cfg.betas, cfg.weight_decay);

    let run = Rng::new(cfg.seed);
    let mut shuffle_rng = run.split("shuffle");
    let mut branch_rng = run.split("branch");

    let mut log = TrainLog::default();
    let per_epoch = epoch_plan(data.len(), cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    // Controller state for sparsity targeting; unused in fixed-lambda mode.
    let mut controlled_lambda = 0.0f64;
    const CONTROLLER_GAIN: f64 = 0.03;
    const CONTROLLER_MAX: f64 = 20.0;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut acc = EpochAccumulator::new(cfg.lambda);
        let mut it = 0usize;
        while it < per_epoch {
            let batch = (cfg.batch_size as usize).min(per_epoch - it);
            let mut grads: Option<Vec<Vec<f32>>> = None;
            for bi in 0..batch {
                let rec = &data[order[(it + bi) % data.len()]];
                // Inner attacks always target the frozen N with the L1
                // objective, per the training algorithm.
                let input = match draw_branch(&mut branch_rng, cfg) {
                    Some(attack) => {
                        log.adv_iterations += 1;
                        attack_plain(n_store, &rec.image, &rec.depth, &attack)?.x_star
                    }
                    None => rec.image.clone(),
                };

                let effective_lambda = if cfg.sparsity_target.is_some() {
                    controlled_lambda
                } else {
                    match cfg.lambda_warmup_iters {
                        Some(w) if w > 0 && log.total_iterations + (bi as u64) < w => {
                            cfg.lambda * (log.total_iterations + bi as u64 + 1) as f64 / w as f64
                        }
                        _ => cfg.lambda,
                    }
                };

                let mut tape = Tape::new();
                let g_net = bind_net(&mut tape, &g_store, true)?;
                let xv = tape.constant(&input);
                let mask = net_forward(&mut tape, &g_net, xv)?;
                let masked = tape.mask_mul(xv, mask)?;
                // N is bound as constants: its tensors are not registered
                // with the optimizer, so updating it is impossible.
                let n_net = bind_net(&mut tape, n_store, false)?;
                let y = net_forward(&mut tape, &n_net, masked)?;
                let ybar = tape.constant(&rec.depth);
                let terms = difference_loss(&mut tape, y, ybar)?;
                let spars = mask_sparsity(&mut tape, mask)?;
                let weighted = tape.scalar_mul(spars, effective_lambda);
                let loss = tape.add(terms.total, weighted)?;
                let loss_val = tape.item(loss)?.to_f64();
                if !loss_val.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("saliency training loss at epoch {epoch}, iteration {}", it + bi + 1),
                    });
                }
                let mask_mean = tape.item(spars)?.to_f64();
                if let Some(target) = cfg.sparsity_target {
                    controlled_lambda = (controlled_lambda
                        + CONTROLLER_GAIN * (mask_mean - target))
                        .clamp(0.0, CONTROLLER_MAX);
                }
                acc.push(&LossBreakdown {
                    depth: tape.item(terms.depth)?.to_f64(),
                    gradient: tape.item(terms.gradient)?.to_f64(),
                    normal: tape.item(terms.normal)?.to_f64(),
                    total: loss_val,
                    sparsity: Some(mask_mean),
                    lambda: effective_lambda,
                });
                tape.backward(loss)?;
                accumulate_param_grads(&tape, &g_net, &g_store, &mut grads, batch, epoch, it + bi)?;
            }
            adam.step(&mut g_store, &grads.expect("batch is nonempty"))?;
            log.total_iterations += batch as u64;
            it += batch;
        }
        g_store.set_epoch(epoch);
        let mean = acc.mean();
        on_epoch(epoch, mean.total);
        log.epoch_losses.push(mean);
    }
    Ok((g_store, log))
}

/// Train the clean saliency predictor: no adversarial branch.
pub fn train_saliency_clean(
    n_store: &ParameterStore<f32>,
    data: &[SampleRecord],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    let mut cfg = cfg.clone();
    cfg.adv_prob = 0.0;
    train_saliency_impl(n_store, data, &cfg, on_epoch)
}

/// Train the robust saliency predictor on the clean/adversarial mix while N
/// stays frozen.
pub fn train_saliency_adv(
    n_store: &ParameterStore<f32>,
    data: &[SampleRecord],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(u32, f64),
) -> Result<(ParameterStore<f32>, TrainLog)> {
    train_saliency_impl(n_store, data, cfg, on_epoch)
}

/// Checkpoints available to the evaluator.
#[derive(Clone, Copy)]
pub struct ConfigStores<'a> {
    pub n: &'a ParameterStore<f32>,
    pub n_adv: Option<&'a ParameterStore<f32>>,
    pub g: Option<&'a ParameterStore<f32>>,
    pub g_adv: Option<&'a ParameterStore<f32>>,
}

impl<'a> ConfigStores<'a> {
    pub fn new(n: &'a ParameterStore<f32>) -> ConfigStores<'a> {
        ConfigStores {
            n,
            n_adv: None,
            g: None,
            g_adv: None,
        }
    }

    fn require(
        &self,
        id: ConfigurationId,
    ) -> Result<(
        &'a ParameterStore<f32>,
        Option<&'a ParameterStore<f32>>,
    )> {
        match id {
            ConfigurationId::A | ConfigurationId::B => Ok((self.n, None)),
            ConfigurationId::C => self
                .n_adv
                .map(|s| (s, None))
                .ok_or(Error::MissingCheckpoint { role: "n_adv" }),
            ConfigurationId::D | ConfigurationId::E => self
                .g
                .map(|g| (self.n, Some(g)))
                .ok_or(Error::MissingCheckpoint { role: "g" }),
            ConfigurationId::F => self
                .g_adv
                .map(|g| (self.n, Some(g)))
                .ok_or(Error::MissingCheckpoint { role: "g_adv" }),
        }
    }
}

/// Run one configuration's dataflow for a single sample.
pub fn predict_configuration(
    id: ConfigurationId,
    stores: &ConfigStores,
    x_clean: &Tensor<f32>,
    x_star: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let (depth_net, saliency) = stores.require(id)?;
    let depth_of = |input: &Tensor<f32>| crate::networks::forward_depth(depth_net, input);
    match id {
        ConfigurationId::A => depth_of(x_star),
        ConfigurationId::B => depth_of(x_clean),
        ConfigurationId::C => depth_of(x_star),
        ConfigurationId::D => {
            let mask = crate::networks::forward_saliency(saliency.expect("required"), x_star)?;
            depth_of(&apply_mask(x_star, &mask)?)
        }
        ConfigurationId::E => {
            let mask = crate::networks::forward_saliency(saliency.expect("required"), x_clean)?;
            depth_of(&apply_mask(x_star, &mask)?)
        }
        ConfigurationId::F => {
            let mask = crate::networks::forward_saliency(saliency.expect("required"), x_star)?;
            depth_of(&apply_mask(x_star, &mask)?)
        }
    }
}

/// Evaluate one configuration over a test split.
///
/// Adversarial images always target the plain N. They are taken from
/// `adv_data` when supplied (one record per clean record, in order) and
/// generated on the fly otherwise; with eps = 0 the clean images are used
/// directly.
pub fn evaluate_configuration(
    id: ConfigurationId,
    stores: &ConfigStores,
    data: &[SampleRecord],
    adv_data: Option<&[SampleRecord]>,
    attack_cfg: &AttackConfig,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::arg("evaluate", "empty test split"));
    }
    stores.require(id)?;
    if let Some(adv) = adv_data {
        if adv.len() != data.len() {
            return Err(Error::arg(
                "evaluate",
                format!("{} adversarial records for {} clean records", adv.len(), data.len()),
            ));
        }
    }

    let per = crate::parallel::try_map_ordered(
        &(0..data.len()).collect::<Vec<_>>(),
        |&i| -> Result<crate::metrics::ImageMetrics> {
            let rec = &data[i];
            let x_star: Tensor<f32> = if attack_cfg.eps == 0.0 {
                rec.image.clone()
            } else if let Some(adv) = adv_data {
                check_same_shape("evaluate", adv[i].image.shape(), rec.image.shape())?;
                adv[i].image.clone()
            } else {
                attack_plain(stores.n, &rec.image, &rec.depth, attack_cfg)?.x_star
            };
            let pred = predict_configuration(id, stores, &rec.image, &x_star)?;
            per_image(&pred, &rec.depth)
        },
    )?;

    let means = mean_metrics(&per);
    Ok(EvalReport::new(
        id.as_str(),
        attack_cfg.describe(),
        attack_cfg.eps,
        if attack_cfg.eps == 0.0 { 0 } else { attack_cfg.iters },
        means,
        data.len(),
    ))
}

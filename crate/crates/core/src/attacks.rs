//! Gradient-sign attacks: single-step FGSM and its iterated form, against
//! either the plain depth network or the masked composite pipeline.
//!
//! Each iteration takes one sign step of size alpha along the input gradient
//! of the chosen objective (gradient ascent: error against ground truth is
//! maximized) and re-projects into the epsilon band intersected with [0,1].

use crate::error::{Error, Result};
use crate::losses::{attack_objective, LossKind};
use crate::networks::{bind_net, net_forward, ParameterStore, Role};
use crate::scalar::Scalar;
use crate::tensor::{check_same_shape, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackTarget {
    /// Perturb against the depth network alone.
    PlainN,
    /// Perturb against N(x (x) G(x)), gradients flowing through both nets.
    CompositeC,
}

impl AttackTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackTarget::PlainN => "plain",
            AttackTarget::CompositeC => "composite",
        }
    }
}

/// Attack parameters. `alpha` defaults to eps/iters so every iteration moves;
/// `paper_alpha` switches to one 8-bit level (1/255) per step.
#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub eps: f64,
    pub iters: u32,
    pub alpha: f64,
    pub objective: LossKind,
    pub target: AttackTarget,
    /// Reserved for stochastic tie-breaking; attacks are fully deterministic.
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(eps: f64, iters: u32) -> Result<AttackConfig> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::arg("attack-config", format!("eps {eps} outside [0,1]")));
        }
        if iters < 1 {
            return Err(Error::arg("attack-config", "iters must be at least 1"));
        }
        Ok(AttackConfig {
            eps,
            iters,
            alpha: eps / iters as f64,
            objective: LossKind::L1,
            target: AttackTarget::PlainN,
            seed: 0,
        })
    }

    /// One 8-bit level per step, the literal reading of a unit step size on
    /// 0..255 pixels.
    pub fn with_paper_alpha(mut self) -> AttackConfig {
        self.alpha = 1.0 / 255.0;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<AttackConfig> {
        if alpha <= 0.0 {
            return Err(Error::arg("attack-config", format!("alpha {alpha} must be positive")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_objective(mut self, objective: LossKind) -> AttackConfig {
        self.objective = objective;
        self
    }

    pub fn with_target(mut self, target: AttackTarget) -> AttackConfig {
        self.target = target;
        self
    }

    /// Attack descriptor used in report rows, e.g. `ifgsm-l1`.
    pub fn describe(&self) -> String {
        if self.eps == 0.0 {
            "none".to_string()
        } else if self.iters == 1 {
            format!("fgsm-{}", self.objective)
        } else {
            format!("ifgsm-{}", self.objective)
        }
    }
}

/// Outcome of one attack on one image.
#[derive(Clone, Debug)]
pub struct AttackResult<S: Scalar> {
    pub x_star: Tensor<S>,
    pub linf: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations_run: u32,
}

/// Clamp `x_t` into the eps-band around `x` intersected with [0,1].
pub fn clip_eps<S: Scalar>(x_t: &Tensor<S>, x: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
    check_same_shape("clip_eps", x_t.shape(), x.shape())?;
    let e = S::from_f64(eps);
    let data = x_t
        .data()
        .iter()
        .zip(x.data())
        .map(|(&t, &o)| {
            let lo = (o - e).maxv(S::ZERO);
            let hi = (o + e).minv(S::ONE);
            t.maxv(lo).minv(hi)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Iterated gradient-sign attack against an arbitrary differentiable model.
///
/// The closure builds the model's prediction on the given tape from the
/// registered input; the objective is then built against `ybar` and
/// maximized. Deterministic: identical inputs give bitwise identical output.
pub fn ifgsm<S, F>(model: F, x: &Tensor<S>, ybar: &Tensor<S>, cfg: &AttackConfig) -> Result<AttackResult<S>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, Var) -> Result<Var>,
{
    if x.data().iter().any(|&v| v < S::ZERO || v > S::ONE) {
        return Err(Error::domain("ifgsm", "input image outside [0,1]"));
    }
    let mut x_star = x.clone();
    let mut objective_before = 0.0;
    for t in 1..=cfg.iters {
        let mut tape = Tape::new();
        let xs = tape.param(&x_star);
        let y = model(&mut tape, xs)?;
        let obj = attack_objective(&mut tape, cfg.objective, y, ybar)?;
        if t == 1 {
            objective_before = tape.item(obj)?.to_f64();
        }
        tape.backward(obj)?;
        let grad = tape
            .grad_tensor(xs)
            .expect("input is a tracked parameter");
        if let Err(e) = grad.ensure_finite("input gradient") {
            return Err(Error::NonFinite {
                context: format!("ifgsm iteration {t}: {e}"),
            });
        }
        let step = grad.sign();
        let alpha = S::from_f64(cfg.alpha);
        let moved = Tensor::new(
            x_star.shape().to_vec(),
            x_star
                .data()
                .iter()
                .zip(step.data())
                .map(|(&v, &s)| v + alpha * s)
                .collect(),
        )?;
        x_star = clip_eps(&moved, x, cfg.eps)?;
    }

    let mut tape = Tape::new();
    let xs = tape.constant(&x_star);
    let y = model(&mut tape, xs)?;
    let obj = attack_objective(&mut tape, cfg.objective, y, ybar)?;
    let objective_after = tape.item(obj)?.to_f64();

    let linf = x_star.max_abs_diff(x);
    Ok(AttackResult {
        x_star,
        linf,
        objective_before,
        objective_after,
        iterations_run: cfg.iters,
    })
}

/// Single-step FGSM: IFGSM with one iteration and alpha = eps.
pub fn fgsm<S, F>(model: F, x: &Tensor<S>, ybar: &Tensor<S>, eps: f64, objective: LossKind) -> Result<AttackResult<S>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, Var) -> Result<Var>,
{
    let mut cfg = AttackConfig::new(eps, 1)?.with_objective(objective);
    cfg.alpha = eps;
    ifgsm(model, x, ybar, &cfg)
}

/// Attack the plain depth network N.
pub fn attack_plain<S: Scalar>(
    n: &ParameterStore<S>,
    x: &Tensor<S>,
    ybar: &Tensor<S>,
    cfg: &AttackConfig,
) -> Result<AttackResult<S>> {
    if n.spec().role() != Role::Depth {
        return Err(Error::arg("attack", "target store is not a depth network"));
    }
    ifgsm(
        |tape, xv| {
            let net = bind_net(tape, n, false)?;
            net_forward(tape, &net, xv)
        },
        x,
        ybar,
        cfg,
    )
}

/// Attack the composite C(x) = N(x (x) G(x)); gradients flow through both
/// networks and the mask multiplication.
pub fn attack_composite<S: Scalar>(
    n: &ParameterStore<S>,
    g: &ParameterStore<S>,
    x: &Tensor<S>,
    ybar: &Tensor<S>,
    cfg: &AttackConfig,
) -> Result<AttackResult<S>> {
    if cfg.target != AttackTarget::CompositeC {
        return Err(Error::arg(
            "attack",
            "attack_composite requires cfg.target = composite",
        ));
    }
    if n.spec().role() != Role::Depth || g.spec().role() != Role::Saliency {
        return Err(Error::arg("attack", "need a depth N and a saliency G"));
    }
    ifgsm(
        |tape, xv| {
            let gnet = bind_net(tape, g, false)?;
            let mask = net_forward(tape, &gnet, xv)?;
            let masked = tape.mask_mul(xv, mask)?;
            let nnet = bind_net(tape, n, false)?;
            net_forward(tape, &nnet, masked)
        },
        x,
        ybar,
        cfg,
    )
}

/// Perturb every record of a dataset, in parallel, preserving order and
/// ground truths. The target is chosen by `cfg.target`; composite attacks
/// need the saliency store.
pub fn attack_dataset(
    n: &ParameterStore<f32>,
    g: Option<&ParameterStore<f32>>,
    data: &[crate::data::SampleRecord],
    cfg: &AttackConfig,
) -> Result<Vec<crate::data::SampleRecord>> {
    if cfg.target == AttackTarget::CompositeC && g.is_none() {
        return Err(Error::MissingCheckpoint { role: "g" });
    }
    crate::parallel::try_map_ordered(data, |rec| {
        let result = match cfg.target {
            AttackTarget::PlainN => attack_plain(n, &rec.image, &rec.depth, cfg)?,
            AttackTarget::CompositeC => {
                attack_composite(n, g.expect("checked above"), &rec.image, &rec.depth, cfg)?
            }
        };
        Ok(crate::data::SampleRecord {
            image: result.x_star,
            depth: rec.depth.clone(),
            scene_seed: rec.scene_seed,
        })
    })
}

/// Canonical provenance block recorded next to adversarial datasets.
pub fn provenance_string(cfg: &AttackConfig) -> String {
    format!(
        "target={}\nloss={}\neps={:.6}\niters={}\nalpha={:.6}\nseed={}\n",
        cfg.target.as_str(),
        cfg.objective,
        cfg.eps,
        cfg.iters,
        cfg.alpha,
        cfg.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{build_network, NetworkSpec};
    use crate::rng::Rng;

    fn toy_depth() -> ParameterStore<f32> {
        build_network(&NetworkSpec::depth(32, 32, vec![4, 6]).unwrap(), 3).unwrap()
    }

    fn image(seed: u64) -> Tensor<f32> {
        let mut rng = Rng::new(seed);
        Tensor::from_fn(vec![3, 32, 32], |_| rng.uniform(0.05, 0.95) as f32)
    }

    fn truth(seed: u64) -> Tensor<f32> {
        let mut rng = Rng::new(seed);
        Tensor::from_fn(vec![1, 16, 16], |_| rng.uniform(0.5, 9.0) as f32)
    }

    #[test]
    fn clip_eps_examples() {
        let x = Tensor::new(vec![2], vec![0.5f32, 0.05]).unwrap();
        let same = clip_eps(&x, &x, 0.1).unwrap();
        assert_eq!(same.data(), x.data());

        let x_t = Tensor::new(vec![2], vec![0.9f32, -0.2]).unwrap();
        let clipped = clip_eps(&x_t, &x, 0.1).unwrap();
        assert!((clipped.data()[0] - 0.6).abs() < 1e-7); // band clamp
        assert_eq!(clipped.data()[1], 0.0); // image range dominates

        let wrong = Tensor::zeros(vec![3]);
        assert!(clip_eps(&wrong, &x, 0.1).is_err());
    }

    #[test]
    fn zero_eps_is_bitwise_identity() {
        let n = toy_depth();
        let x = image(1);
        let ybar = truth(2);
        for iters in [1u32, 4] {
            let cfg = AttackConfig::new(0.0, iters).unwrap();
            let r = attack_plain(&n, &x, &ybar, &cfg).unwrap();
            assert_eq!(r.x_star.data(), x.data());
            assert_eq!(r.linf, 0.0);
        }
    }

    #[test]
    fn single_step_ifgsm_equals_fgsm_bitwise() {
        let n = toy_depth();
        let x = image(5);
        let ybar = truth(6);
        let mut cfg = AttackConfig::new(0.05, 1).unwrap();
        cfg.alpha = 0.05;
        let a = attack_plain(&n, &x, &ybar, &cfg).unwrap();
        let b = fgsm(
            |tape, xv| {
                let net = bind_net(tape, &n, false)?;
                net_forward(tape, &net, xv)
            },
            &x,
            &ybar,
            0.05,
            LossKind::L1,
        )
        .unwrap();
        assert_eq!(a.x_star.data(), b.x_star.data());
    }

    #[test]
    fn fgsm_saturates_the_band_where_gradient_is_nonzero() {
        let n = toy_depth();
        let x = image(7);
        let ybar = truth(8);
        let eps = 0.03;
        let r = fgsm(
            |tape, xv| {
                let net = bind_net(tape, &n, false)?;
                net_forward(tape, &net, xv)
            },
            &x,
            &ybar,
            eps,
            LossKind::L1,
        )
        .unwrap();
        // Every pixel moved by exactly eps, 0, or hit the [0,1] wall.
        let mut full_steps = 0usize;
        for (&a, &b) in r.x_star.data().iter().zip(x.data()) {
            let d = (a - b).abs();
            let at_wall = a == 0.0 || a == 1.0;
            assert!(
                (d - eps as f32).abs() < 1e-6 || d == 0.0 || at_wall,
                "pixel moved by {d}"
            );
            if (d - eps as f32).abs() < 1e-6 {
                full_steps += 1;
            }
        }
        assert!(full_steps > r.x_star.numel() / 2, "gradient mostly zero?");
    }

    #[test]
    fn linear_model_closed_form() {
        // model(x) = sum(w (x) x) as a scalar prediction: one step of L1
        // ascent against ybar = 0 moves every pixel by alpha * sign(w_i),
        // up to range clamps.
        let mut rng = Rng::new(11);
        let w = Tensor::from_fn(vec![1, 4, 4], |_| {
            let v: f64 = rng.normal();
            (v.signum() * (v.abs() + 0.1)) as f32
        });
        let x = Tensor::from_fn(vec![1, 4, 4], |_| rng.uniform(0.3, 0.7) as f32);
        let ybar = Tensor::scalar(0.0f32);
        let cfg = AttackConfig::new(0.08, 1).unwrap().with_alpha(0.08).unwrap();
        let w2 = w.clone();
        let r = ifgsm(
            move |tape, xv| {
                let wv = tape.constant(&w2);
                let prod = tape.mul(xv, wv)?;
                Ok(tape.sum(prod))
            },
            &x,
            &ybar,
            &cfg,
        )
        .unwrap();
        // With y = sum(w.x) and ybar = 0, the objective is |y|, whose input
        // gradient is sign(y) * w; one ascent step moves pixel i by
        // alpha * sign(y) * sign(w_i).
        let y0: f32 = x.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum();
        for ((&xs, &x0), &wi) in r.x_star.data().iter().zip(x.data()).zip(w.data()) {
            let expect = (x0 + 0.08 * y0.signum() * wi.signum()).clamp(0.0, 1.0);
            assert!((xs - expect).abs() < 1e-6, "{xs} vs {expect}");
        }
    }

    #[test]
    fn linf_and_range_invariants_hold() {
        let n = toy_depth();
        let mut rng = Rng::new(13);
        for trial in 0..10 {
            let x = image(100 + trial);
            let ybar = truth(200 + trial);
            let eps = rng.uniform(0.0, 0.3);
            let iters = 1 + rng.below(6) as u32;
            let cfg = AttackConfig::new(eps, iters).unwrap();
            let r = attack_plain(&n, &x, &ybar, &cfg).unwrap();
            assert!(r.linf <= eps + 1e-6, "linf {} eps {eps}", r.linf);
            assert!(r.x_star.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn attack_is_deterministic() {
        let n = toy_depth();
        let x = image(42);
        let ybar = truth(43);
        let cfg = AttackConfig::new(0.1, 5).unwrap();
        let a = attack_plain(&n, &x, &ybar, &cfg).unwrap();
        let b = attack_plain(&n, &x, &ybar, &cfg).unwrap();
        assert_eq!(a.x_star.data(), b.x_star.data());
        assert_eq!(a.objective_after, b.objective_after);
    }

    #[test]
    fn composite_attack_invariants() {
        let n = toy_depth();
        let g = build_network::<f32>(&NetworkSpec::saliency(32, 32, vec![4, 6]).unwrap(), 9).unwrap();
        let x = image(3);
        let ybar = truth(4);
        let cfg = AttackConfig::new(0.05, 3)
            .unwrap()
            .with_target(AttackTarget::CompositeC);
        let r = attack_composite(&n, &g, &x, &ybar, &cfg).unwrap();
        assert!(r.linf <= 0.05 + 1e-6);
        assert!(r.x_star.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        let zero = AttackConfig::new(0.0, 3).unwrap().with_target(AttackTarget::CompositeC);
        let rz = attack_composite(&n, &g, &x, &ybar, &zero).unwrap();
        assert_eq!(rz.x_star.data(), x.data());

        let wrong_target = AttackConfig::new(0.05, 3).unwrap();
        assert!(attack_composite(&n, &g, &x, &ybar, &wrong_target).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::new(-0.1, 5).is_err());
        assert!(AttackConfig::new(1.5, 5).is_err());
        assert!(AttackConfig::new(0.1, 0).is_err());
        let cfg = AttackConfig::new(0.2, 4).unwrap();
        assert!((cfg.alpha - 0.05).abs() < 1e-12);
        assert!((AttackConfig::new(0.2, 4).unwrap().with_paper_alpha().alpha - 1.0 / 255.0).abs() < 1e-12);
    }
}

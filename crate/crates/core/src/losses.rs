//! Scalar objectives: the depth-map difference loss and its three terms,
//! the mask sparsity penalty, and the attack objectives.
//!
//! The difference loss follows the shifted-log form F(e) = ln(e + 0.5), so a
//! perfect prediction sits at the floor ln(0.5) per term, not at zero. Losses
//! are ordinal quantities here; nothing downstream assumes nonnegativity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::networks::DEPTH_FLOOR;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// Objectives available for adversarial example generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    L2,
    Rel,
    Log10,
    Dif,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::L1,
        LossKind::L2,
        LossKind::Rel,
        LossKind::Log10,
        LossKind::Dif,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
            LossKind::Rel => "rel",
            LossKind::Log10 => "log10",
            LossKind::Dif => "ldif",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<LossKind> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            "rel" => Ok(LossKind::Rel),
            "log10" => Ok(LossKind::Log10),
            "ldif" => Ok(LossKind::Dif),
            other => Err(Error::arg(
                "loss-kind",
                format!("unknown loss `{other}` (expected l1|l2|rel|log10|ldif)"),
            )),
        }
    }
}

/// Tape handles for the difference loss and its terms.
pub struct LossTerms {
    pub depth: Var,
    pub gradient: Var,
    pub normal: Var,
    pub total: Var,
}

/// Evaluated loss values for reporting.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub depth: f64,
    pub gradient: f64,
    pub normal: f64,
    pub total: f64,
    pub sparsity: Option<f64>,
    pub lambda: f64,
}

/// F(e) = ln(e + 0.5); `e` must be elementwise non-negative.
pub fn shifted_ln<S: Scalar>(tape: &mut Tape<S>, e: Var) -> Result<Var> {
    if let Some((i, &v)) = tape
        .data(e)
        .iter()
        .enumerate()
        .find(|(_, &v)| v < S::ZERO)
    {
        return Err(Error::domain(
            "shifted_ln",
            format!("negative value {v} at index {i}"),
        ));
    }
    let shifted = tape.add_scalar(e, 0.5);
    tape.ln(shifted)
}

/// Mean shifted-log of the absolute depth error.
pub fn depth_loss<S: Scalar>(tape: &mut Tape<S>, y: Var, ybar: Var) -> Result<Var> {
    let diff = tape.sub(ybar, y)?;
    let e = tape.abs(diff);
    let f = shifted_ln(tape, e)?;
    Ok(tape.mean(f))
}

/// Mean shifted-log of the absolute spatial differences of the error map.
///
/// Forward differences with the last row/column defined as zero. The
/// differences are passed through |.| before F so ln stays in domain.
pub fn grad_loss<S: Scalar>(tape: &mut Tape<S>, y: Var, ybar: Var) -> Result<Var> {
    let diff = tape.sub(ybar, y)?;
    let e = tape.abs(diff);
    let du = tape.diff_u(e)?;
    let dv = tape.diff_v(e)?;
    let au = tape.abs(du);
    let av = tape.abs(dv);
    let fu = shifted_ln(tape, au)?;
    let fv = shifted_ln(tape, av)?;
    let mu = tape.mean(fu);
    let mv = tape.mean(fv);
    tape.add(mu, mv)
}

/// Mean angular disagreement of surface normals, (1/n) sum (1 - cos theta).
///
/// Per-pixel normals are (-du, -dv, 1) normalized, from forward differences
/// with clamped edges (so the last row/column differences are zero).
pub fn normal_loss<S: Scalar>(tape: &mut Tape<S>, y: Var, ybar: Var) -> Result<Var> {
    let shape = tape.shape(y);
    if shape.len() != 3 || shape[1] < 2 || shape[2] < 2 {
        return Err(Error::shape(
            "normal_loss",
            format!("need [C,H,W] with H,W >= 2, got {shape:?}"),
        ));
    }
    let du_y = tape.diff_u(y)?;
    let dv_y = tape.diff_v(y)?;
    let du_b = tape.diff_u(ybar)?;
    let dv_b = tape.diff_v(ybar)?;

    let len = |tape: &mut Tape<S>, du: Var, dv: Var| -> Result<Var> {
        let uu = tape.mul(du, du)?;
        let vv = tape.mul(dv, dv)?;
        let s = tape.add(uu, vv)?;
        let s1 = tape.add_scalar(s, 1.0);
        tape.sqrt(s1)
    };
    let len_y = len(tape, du_y, dv_y)?;
    let len_b = len(tape, du_b, dv_b)?;

    // The sign flips of (-du, -dv) cancel inside the dot product.
    let m1 = tape.mul(du_y, du_b)?;
    let m2 = tape.mul(dv_y, dv_b)?;
    let dot = tape.add(m1, m2)?;
    let dot1 = tape.add_scalar(dot, 1.0);
    let denom = tape.mul(len_y, len_b)?;
    let cos = tape.div(dot1, denom)?;
    let neg_cos = tape.neg(cos);
    let one_minus = tape.add_scalar(neg_cos, 1.0);
    Ok(tape.mean(one_minus))
}

/// The difference loss: depth + gradient + normal terms, with handles to all
/// three retained for reporting.
pub fn difference_loss<S: Scalar>(tape: &mut Tape<S>, y: Var, ybar: Var) -> Result<LossTerms> {
    let depth = depth_loss(tape, y, ybar)?;
    let gradient = grad_loss(tape, y, ybar)?;
    let normal = normal_loss(tape, y, ybar)?;
    let dg = tape.add(depth, gradient)?;
    let total = tape.add(dg, normal)?;
    Ok(LossTerms {
        depth,
        gradient,
        normal,
        total,
    })
}

/// Mean mask value, the (1/n)||m||_1 sparsity penalty. The mask must lie in
/// [0,1] elementwise.
pub fn mask_sparsity<S: Scalar>(tape: &mut Tape<S>, m: Var) -> Result<Var> {
    if let Some((i, &v)) = tape
        .data(m)
        .iter()
        .enumerate()
        .find(|(_, &v)| v < S::ZERO || v > S::ONE)
    {
        return Err(Error::domain(
            "sparsity",
            format!("mask value {v} at index {i} outside [0,1]"),
        ));
    }
    Ok(tape.mean(m))
}

/// Build the chosen attack objective against a fixed ground truth. The result
/// is differentiable w.r.t. `y`; depths are clamped at the 0.01 m floor before
/// the REL/LOG10 ratios.
pub fn attack_objective<S: Scalar>(
    tape: &mut Tape<S>,
    kind: LossKind,
    y: Var,
    ybar: &Tensor<S>,
) -> Result<Var> {
    if tape.shape(y) != ybar.shape() {
        return Err(Error::shape(
            "attack_objective",
            format!("{:?} vs {:?}", tape.shape(y), ybar.shape()),
        ));
    }
    match kind {
        LossKind::L1 => {
            let yb = tape.constant(ybar);
            let d = tape.sub(yb, y)?;
            let a = tape.abs(d);
            Ok(tape.mean(a))
        }
        LossKind::L2 => {
            let yb = tape.constant(ybar);
            let d = tape.sub(yb, y)?;
            let sq = tape.mul(d, d)?;
            Ok(tape.mean(sq))
        }
        LossKind::Rel => {
            let ybc = clamp_floor(ybar);
            let recip = Tensor::new(
                ybc.shape().to_vec(),
                ybc.data().iter().map(|&v| S::ONE / v).collect(),
            )?;
            let ybv = tape.constant(&ybc);
            let rv = tape.constant(&recip);
            let yc = tape.clamp(y, DEPTH_FLOOR, f64::INFINITY)?;
            let d = tape.sub(ybv, yc)?;
            let a = tape.abs(d);
            let ratio = tape.mul(a, rv)?;
            Ok(tape.mean(ratio))
        }
        LossKind::Log10 => {
            let ln10_inv = 1.0 / std::f64::consts::LN_10;
            let ybc = clamp_floor(ybar);
            let log_ybar = Tensor::new(
                ybc.shape().to_vec(),
                ybc.data()
                    .iter()
                    .map(|&v| S::from_f64(v.to_f64().ln() * ln10_inv))
                    .collect(),
            )?;
            let lv = tape.constant(&log_ybar);
            let yc = tape.clamp(y, DEPTH_FLOOR, f64::INFINITY)?;
            let ln_y = tape.ln(yc)?;
            let log_y = tape.scalar_mul(ln_y, ln10_inv);
            let d = tape.sub(lv, log_y)?;
            let a = tape.abs(d);
            Ok(tape.mean(a))
        }
        LossKind::Dif => {
            let yb = tape.constant(ybar);
            Ok(difference_loss(tape, y, yb)?.total)
        }
    }
}

fn clamp_floor<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let floor = S::from_f64(DEPTH_FLOOR);
    Tensor::new(
        t.shape().to_vec(),
        t.data().iter().map(|&v| v.maxv(floor)).collect(),
    )
    .expect("shape preserved")
}

/// Evaluate the difference loss of a prediction without keeping a tape.
pub fn eval_difference_loss<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let yv = tape.constant(y);
    let bv = tape.constant(ybar);
    let terms = difference_loss(&mut tape, yv, bv)?;
    Ok(LossBreakdown {
        depth: tape.item(terms.depth)?.to_f64(),
        gradient: tape.item(terms.gradient)?.to_f64(),
        normal: tape.item(terms.normal)?.to_f64(),
        total: tape.item(terms.total)?.to_f64(),
        sparsity: None,
        lambda: 0.0,
    })
}

/// Evaluate one attack objective without keeping a tape.
pub fn eval_objective<S: Scalar>(kind: LossKind, y: &Tensor<S>, ybar: &Tensor<S>) -> Result<f64> {
    let mut tape = Tape::new();
    let yv = tape.constant(y);
    let obj = attack_objective(&mut tape, kind, yv, ybar)?;
    Ok(tape.item(obj)?.to_f64())
}

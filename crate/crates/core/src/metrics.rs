//! Dense-prediction evaluation: RMSE, REL, log10 error, and the delta
//! threshold accuracies, aggregated per image and then averaged over a
//! dataset in fixed sample order.

use crate::data::SampleRecord;
use crate::error::{Error, Result};
use crate::networks::DEPTH_FLOOR;
use crate::scalar::Scalar;
use crate::tensor::{check_same_shape, Tensor};

/// Per-image metric values.
#[derive(Clone, Copy, Debug, Default)]
pub struct ImageMetrics {
    pub rmse: f64,
    pub rel: f64,
    pub log10: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// One row of the evaluation table: a configuration crossed with an attack.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub config: String,
    pub attack: String,
    pub eps: f64,
    pub iters: u32,
    pub rmse: f64,
    pub rel: f64,
    pub log10: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub n_samples: usize,
}

/// Root mean squared error of one image pair.
pub fn rmse<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>) -> Result<f64> {
    check_same_shape("rmse", y.shape(), ybar.shape())?;
    let n = y.numel() as f64;
    let mut acc = 0.0;
    for (&yv, &bv) in y.data().iter().zip(ybar.data()) {
        let d = bv.to_f64() - yv.to_f64();
        acc += d * d;
    }
    Ok((acc / n).sqrt())
}

/// Mean absolute relative error, depths clamped at the 0.01 m floor.
pub fn rel<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>) -> Result<f64> {
    check_same_shape("rel", y.shape(), ybar.shape())?;
    let n = y.numel() as f64;
    let mut acc = 0.0;
    for (&yv, &bv) in y.data().iter().zip(ybar.data()) {
        let yc = yv.to_f64().max(DEPTH_FLOOR);
        let bc = bv.to_f64().max(DEPTH_FLOOR);
        acc += (bc - yc).abs() / bc;
    }
    Ok(acc / n)
}

/// Mean absolute log10 error, depths clamped at the floor.
pub fn log10_err<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>) -> Result<f64> {
    check_same_shape("log10", y.shape(), ybar.shape())?;
    let n = y.numel() as f64;
    let mut acc = 0.0;
    for (&yv, &bv) in y.data().iter().zip(ybar.data()) {
        let yc = yv.to_f64().max(DEPTH_FLOOR);
        let bc = bv.to_f64().max(DEPTH_FLOOR);
        acc += (bc.log10() - yc.log10()).abs();
    }
    Ok(acc / n)
}

/// Fraction of pixels with max(y/ybar, ybar/y) < 1.25^k, for k in {1,2,3}.
pub fn delta<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>, k: u32) -> Result<f64> {
    check_same_shape("delta", y.shape(), ybar.shape())?;
    if !(1..=3).contains(&k) {
        return Err(Error::arg("delta", format!("k must be 1..=3, got {k}")));
    }
    let threshold = 1.25f64.powi(k as i32);
    let n = y.numel() as f64;
    let mut hits = 0usize;
    for (&yv, &bv) in y.data().iter().zip(ybar.data()) {
        let yc = yv.to_f64().max(DEPTH_FLOOR);
        let bc = bv.to_f64().max(DEPTH_FLOOR);
        if (yc / bc).max(bc / yc) < threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / n)
}

/// All per-image metrics at once.
pub fn per_image<S: Scalar>(y: &Tensor<S>, ybar: &Tensor<S>) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        rmse: rmse(y, ybar)?,
        rel: rel(y, ybar)?,
        log10: log10_err(y, ybar)?,
        d1: delta(y, ybar, 1)?,
        d2: delta(y, ybar, 2)?,
        d3: delta(y, ybar, 3)?,
    })
}

/// Average per-image metrics over a dataset, in sample order. The prediction
/// closure maps a record to a depth map matching the record's ground truth.
pub fn evaluate_dataset<F>(predict: F, data: &[SampleRecord]) -> Result<ImageMetrics>
where
    F: Fn(&SampleRecord) -> Result<Tensor<f32>> + Sync,
{
    if data.is_empty() {
        return Err(Error::arg("evaluate_dataset", "empty split"));
    }
    let per: Vec<ImageMetrics> = crate::parallel::try_map_ordered(data, |record| {
        let pred = predict(record)?;
        per_image(&pred, &record.depth)
    })?;
    Ok(mean_metrics(&per))
}

/// Sequential mean of per-image metrics, in index order.
pub fn mean_metrics(per: &[ImageMetrics]) -> ImageMetrics {
    let n = per.len() as f64;
    let mut acc = ImageMetrics::default();
    for m in per {
        acc.rmse += m.rmse;
        acc.rel += m.rel;
        acc.log10 += m.log10;
        acc.d1 += m.d1;
        acc.d2 += m.d2;
        acc.d3 += m.d3;
    }
    ImageMetrics {
        rmse: acc.rmse / n,
        rel: acc.rel / n,
        log10: acc.log10 / n,
        d1: acc.d1 / n,
        d2: acc.d2 / n,
        d3: acc.d3 / n,
    }
}

impl EvalReport {
    pub fn new(
        config: impl Into<String>,
        attack: impl Into<String>,
        eps: f64,
        iters: u32,
        metrics: ImageMetrics,
        n_samples: usize,
    ) -> EvalReport {
        EvalReport {
            config: config.into(),
            attack: attack.into(),
            eps,
            iters,
            rmse: metrics.rmse,
            rel: metrics.rel,
            log10: metrics.log10,
            d1: metrics.d1,
            d2: metrics.d2,
            d3: metrics.d3,
            n_samples,
        }
    }
}

/// Fixed CSV header for evaluation tables.
pub const CSV_HEADER: &str = "config,attack,eps,iters,rmse,rel,log10,d1,d2,d3,n";

/// One CSV row with bit-stable 6-decimal formatting.
pub fn csv_row(r: &EvalReport) -> String {
    format!(
        "{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        r.config, r.attack, r.eps, r.iters, r.rmse, r.rel, r.log10, r.d1, r.d2, r.d3, r.n_samples
    )
}

/// Render a whole table, header included, with a trailing newline.
pub fn render_csv(rows: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

//! Dataset files (`DGD1`) and image dumps (PGM/PPM).
//!
//! DGD1 layout: magic `DGD1`, u32 record count, then per record an embedded
//! DGT1 image tensor, a DGT1 depth tensor, and a u64 scene seed; optionally a
//! length-prefixed UTF-8 provenance block (attack configuration) after the
//! last record. Round-trips are bit-exact.

use std::io::Write;
use std::path::Path;

use crate::data::SampleRecord;
use crate::error::{Error, Result};
use crate::tensor::io::{read_tensor_from, write_tensor, Counted};
use crate::tensor::Tensor;

pub(crate) const DGD1_MAGIC: &[u8; 4] = b"DGD1";

/// Serialize records plus an optional provenance block.
pub fn dataset_bytes(records: &[SampleRecord], provenance: Option<&str>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DGD1_MAGIC);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for rec in records {
        write_tensor(&rec.image, &mut out)?;
        write_tensor(&rec.depth, &mut out)?;
        out.extend_from_slice(&rec.scene_seed.to_le_bytes());
    }
    if let Some(p) = provenance {
        let bytes = p.as_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, records: &[SampleRecord], provenance: Option<&str>) -> Result<()> {
    let bytes = dataset_bytes(records, provenance)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Parse a dataset buffer; returns the records and the provenance block when
/// present.
pub fn dataset_from_bytes(bytes: &[u8]) -> Result<(Vec<SampleRecord>, Option<String>)> {
    let mut r = Counted::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact_or(&mut magic, "DGD1 magic")?;
    if &magic != DGD1_MAGIC {
        return Err(Error::format_at(format!("bad DGD1 magic {magic:02x?}"), 0));
    }
    let count = r.read_u32("record count")? as usize;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let image: Tensor<f32> = read_tensor_from(&mut r)
            .map_err(|e| wrap_record(e, i, "image"))?;
        let depth: Tensor<f32> = read_tensor_from(&mut r)
            .map_err(|e| wrap_record(e, i, "depth"))?;
        let scene_seed = r.read_u64(&format!("record {i} scene seed"))?;
        records.push(SampleRecord {
            image,
            depth,
            scene_seed,
        });
    }
    let provenance = match r.read_u32_or_eof("provenance length")? {
        None => None,
        Some(len) => {
            let mut buf = vec![0u8; len as usize];
            r.read_exact_or(&mut buf, "provenance block")?;
            Some(String::from_utf8(buf).map_err(|_| {
                Error::format_at("provenance block is not UTF-8", r.offset())
            })?)
        }
    };
    r.expect_eof("dataset")?;
    Ok((records, provenance))
}

fn wrap_record(e: Error, index: usize, which: &str) -> Error {
    match e {
        Error::Format { detail, offset } => Error::Format {
            detail: format!("record {index} {which}: {detail}"),
            offset,
        },
        other => other,
    }
}

pub fn load_dataset(path: &Path) -> Result<(Vec<SampleRecord>, Option<String>)> {
    let bytes = std::fs::read(path)?;
    dataset_from_bytes(&bytes)
}

// ---- image dumps -----------------------------------------------------------

/// Write a single-channel map as binary PGM (P5), min-max normalized to
/// 0..255. The applied range is recorded in a `<path>.range.txt` sidecar.
pub fn write_pgm(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let (h, w, plane) = match t.shape() {
        [1, h, w] => (*h, *w, t.data()),
        [h, w] => (*h, *w, t.data()),
        other => {
            return Err(Error::shape(
                "pgm",
                format!("expected [1,H,W] or [H,W], got {other:?}"),
            ))
        }
    };
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in plane {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in plane {
        let b = (((v - lo) as f64 / span) * 255.0).round().clamp(0.0, 255.0) as u8;
        out.push(b);
    }
    std::fs::write(path, out)?;
    let sidecar = format!("{}.range.txt", path.display());
    std::fs::write(sidecar, format!("min={lo:.9e}\nmax={hi:.9e}\n"))?;
    Ok(())
}

/// Write an RGB image in [0,1] as binary PPM (P6).
pub fn write_ppm(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let [c, h, w] = t.shape()[..] else {
        return Err(Error::shape("ppm", format!("expected [3,H,W], got {:?}", t.shape())));
    };
    if c != 3 {
        return Err(Error::shape("ppm", format!("expected 3 channels, got {c}")));
    }
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..plane {
        for ch in 0..3 {
            let v = t.data()[ch * plane + i].clamp(0.0, 1.0);
            out.push((v as f64 * 255.0).round() as u8);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

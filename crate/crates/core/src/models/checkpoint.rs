//! Binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "MHEC" | version u32 | strategy u8 | num_classes u64 | heads u32
//! | lengths u64 × heads | input_dim u64 | feature_dim u64 | identity u8
//! | beam_width u64 | backbone f64s | per head: weight f64s, bias f64s
//! | embeddings f64s
//! ```
//!
//! Floats are stored by bit pattern, so a round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Backbone, ModelConfig, MultiHeadModel};
use crate::codec::HeadPlan;
use crate::error::{MheError, Result};
use crate::linalg::DenseMatrix;
use crate::planner::Strategy;

const MAGIC: &[u8; 4] = b"MHEC";
const VERSION: u32 = 1;

/// Writes `model` to `writer`.
pub fn write_model(model: &MultiHeadModel, writer: &mut impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[model.strategy.tag()])?;
    put_u64(&mut w, model.num_classes)?;
    w.write_all(&(model.plan.num_heads() as u32).to_le_bytes())?;
    for &l in model.plan.lengths() {
        put_u64(&mut w, l)?;
    }
    put_u64(&mut w, model.input_dim())?;
    put_u64(&mut w, model.feature_dim())?;
    w.write_all(&[u8::from(!model.backbone.is_linear())])?;
    put_u64(&mut w, model.beam_width)?;
    if let Backbone::Linear(m) = &model.backbone {
        put_f64s(&mut w, m.as_slice())?;
    }
    for head in &model.heads {
        put_f64s(&mut w, head.weight.as_slice())?;
        put_f64s(&mut w, head.bias.as_slice())?;
    }
    for e in &model.embeddings {
        put_f64s(&mut w, e.as_slice())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a model written by [`write_model`].
pub fn read_model(reader: &mut impl Read) -> Result<MultiHeadModel> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(MheError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(MheError::Checkpoint(format!("unsupported version {version}")));
    }
    let [tag] = take::<1>(&mut r)?;
    let strategy = Strategy::from_tag(tag)
        .ok_or_else(|| MheError::Checkpoint(format!("unknown strategy tag {tag}")))?;
    let num_classes = get_usize(&mut r)?;
    let heads = u32::from_le_bytes(take(&mut r)?) as usize;
    if heads == 0 || heads > 64 {
        return Err(MheError::Checkpoint(format!("implausible head count {heads}")));
    }
    let lengths = (0..heads).map(|_| get_usize(&mut r)).collect::<Result<Vec<_>>>()?;
    let input_dim = get_usize(&mut r)?;
    let feature_dim = get_usize(&mut r)?;
    let [identity] = take::<1>(&mut r)?;
    let beam_width = get_usize(&mut r)?;

    let plan = if strategy.is_partition() {
        HeadPlan::partition(lengths)
    } else {
        HeadPlan::new(lengths)
    }
    .map_err(|e| MheError::Checkpoint(e.to_string()))?;
    let config = ModelConfig {
        strategy,
        plan,
        num_classes,
        input_dim,
        feature_dim: (identity == 0).then_some(feature_dim),
        beam_width,
    };
    let mut model = MultiHeadModel::zeros(config).map_err(|e| MheError::Checkpoint(e.to_string()))?;
    if let Backbone::Linear(m) = &mut model.backbone {
        fill(&mut r, m)?;
    }
    for head in &mut model.heads {
        fill(&mut r, &mut head.weight)?;
        fill_slice(&mut r, head.bias.as_mut_slice())?;
    }
    for e in &mut model.embeddings {
        fill(&mut r, e)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(MheError::Checkpoint("trailing bytes after the last block".into()));
    }
    Ok(model)
}

/// Saves to a file path.
pub fn save(model: &MultiHeadModel, path: &Path) -> Result<()> {
    let mut file = File::create(path)?;
    write_model(model, &mut file)
}

/// Loads from a file path.
pub fn load(path: &Path) -> Result<MultiHeadModel> {
    let mut file = File::open(path)?;
    read_model(&mut file)
}

fn put_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            MheError::Checkpoint("file is truncated".into())
        } else {
            MheError::Io(e)
        }
    })
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn get_usize(r: &mut impl Read) -> Result<usize> {
    let v = u64::from_le_bytes(take(r)?);
    usize::try_from(v).map_err(|_| MheError::Checkpoint(format!("value {v} does not fit in usize")))
}

fn fill(r: &mut impl Read, m: &mut DenseMatrix) -> Result<()> {
    fill_slice(r, m.as_mut_slice())
}

fn fill_slice(r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    for v in out {
        *v = f64::from_le_bytes(take(r)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngState;

    fn roundtrip(model: &MultiHeadModel) -> MultiHeadModel {
        let mut buf = Vec::new();
        write_model(model, &mut buf).unwrap();
        read_model(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn every_strategy_round_trips_exactly() {
        let cases = [
            (Strategy::Vanilla, HeadPlan::new(vec![6]).unwrap(), Some(3)),
            (Strategy::Mhp, HeadPlan::new(vec![3, 2]).unwrap(), None),
            (Strategy::Mhc, HeadPlan::new(vec![2, 2, 2]).unwrap(), Some(4)),
            (Strategy::Mhs, HeadPlan::partition(vec![2, 2, 2]).unwrap(), Some(4)),
        ];
        for (strategy, plan, hidden) in cases {
            let mut cfg = ModelConfig::new(strategy, plan, 6, 5).with_beam_width(3);
            cfg.feature_dim = hidden;
            let model = MultiHeadModel::new(cfg, &mut RngState::new(17)).unwrap();
            let back = roundtrip(&model);
            assert_eq!(back, model);
        }
    }

    #[test]
    fn special_values_survive() {
        let cfg = ModelConfig::new(Strategy::Mhp, HeadPlan::new(vec![2, 2]).unwrap(), 4, 2);
        let mut model = MultiHeadModel::zeros(cfg).unwrap();
        model.heads_mut()[0].weight.as_mut_slice()[0] = -0.0;
        model.heads_mut()[0].weight.as_mut_slice()[1] = f64::MIN_POSITIVE / 2.0;
        model.heads_mut()[1].bias.as_mut_slice()[0] = f64::MAX;
        let back = roundtrip(&model);
        assert_eq!(back.heads()[0].weight.as_slice()[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, model);
    }

    #[test]
    fn corrupt_input_is_reported() {
        let cfg = ModelConfig::new(Strategy::Mhp, HeadPlan::new(vec![2, 2]).unwrap(), 4, 2);
        let model = MultiHeadModel::zeros(cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert!(matches!(
            read_model(&mut &buf[..buf.len() - 1]),
            Err(MheError::Checkpoint(_))
        ));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_model(&mut extra.as_slice()), Err(MheError::Checkpoint(_))));
        let mut bad = buf;
        bad[0] = b'X';
        assert!(matches!(read_model(&mut bad.as_slice()), Err(MheError::Checkpoint(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = ModelConfig::new(Strategy::Mhc, HeadPlan::new(vec![3, 3]).unwrap(), 9, 4).with_feature_dim(2);
        let model = MultiHeadModel::new(cfg, &mut RngState::new(1)).unwrap();
        save(&model, &path).unwrap();
        assert_eq!(load(&path).unwrap(), model);
    }
}

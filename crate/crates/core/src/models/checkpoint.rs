//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"QFCK"
//! version u32
//! kind    u8      0 = hybrid, 1 = classical
//! seed    u64
//! count   u32
//! count × { name_len u32, name utf-8, ndim u32, dims u64 × ndim, values f64 × Π dims }
//! ```
//!
//! Batch-norm running statistics are stored as `<layer>.running_mean` and
//! `<layer>.running_var` records after the trainable parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Model, ModelKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"QFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Record {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn records(model: &Model) -> Vec<Record> {
    let ps = model.params();
    let mut out: Vec<Record> = ps
        .params()
        .iter()
        .map(|p| Record {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.data().to_vec(),
        })
        .collect();
    for (name, stats) in ps.stats() {
        out.push(Record {
            name: format!("{name}.running_mean"),
            shape: vec![stats.mean.len()],
            values: stats.mean.clone(),
        });
        out.push(Record {
            name: format!("{name}.running_var"),
            shape: vec![stats.var.len()],
            values: stats.var.clone(),
        });
    }
    out
}

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[match model.kind() {
        ModelKind::Hybrid => 0,
        ModelKind::Classical => 1,
    }])?;
    w.write_all(&model.seed().to_le_bytes())?;
    let recs = records(model);
    w.write_all(&(recs.len() as u32).to_le_bytes())?;
    for r in &recs {
        w.write_all(&(r.name.len() as u32).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&(r.shape.len() as u32).to_le_bytes())?;
        for &d in &r.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &r.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

/// Rebuilds the model recorded in the checkpoint at `path`.
pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = match read_array::<1>(&mut r)?[0] {
        0 => ModelKind::Hybrid,
        1 => ModelKind::Classical,
        k => return Err(Error::Checkpoint(format!("unknown model kind {k}"))),
    };
    let seed = read_u64(&mut r)?;
    let mut model = Model::new(kind, seed);
    let expected = records(&model);
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} records, the {} model has {}",
            kind.name(),
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for want in &expected {
        let len = read_u32(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(Error::Checkpoint(format!("implausible name length {len}")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("record name is not utf-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint(format!("{name}: implausible rank {ndim}")));
        }
        let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != want.name || shape != want.shape {
            return Err(Error::Checkpoint(format!(
                "structure mismatch: found {name} {shape:?}, expected {} {:?}",
                want.name, want.shape
            )));
        }
        let values = (0..want.values.len())
            .map(|_| read_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        loaded.push(values);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last record".into()));
    }

    let mut values = loaded.into_iter();
    let ps = model.params_mut();
    for p in ps.params_mut() {
        p.value.data_mut().copy_from_slice(&values.next().expect("count checked"));
    }
    for (_, stats) in ps.stats_entries_mut() {
        stats.mean = values.next().expect("count checked");
        stats.var = values.next().expect("count checked");
    }
    Ok(model)
}

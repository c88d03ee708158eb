//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "PPGM", u16 version (= 1)
//! config: u32 in_channels, depth, base_channels, down_kernel,
//!         up_kernel, window_len; f64 leaky_slope
//! meta:   u8 present; if 1: u64 epochs_run, u64 best_epoch,
//!         f64 best_val_l1, f64 final_lr, u64 seed,
//!         u32 count { u32 len, utf8 } train subjects
//! u32 tensor count, then per tensor in layout order:
//!         u32 name len, utf8 name, u8 ndim, u32 dims.., f32 data
//! ```
//!
//! Values are stored as f32; loading widens back to f64, so one
//! save/load round trip quantizes and every later one is lossless.

use super::model::{FusionModelParams, Layout, ModelConfig, TrainingMeta};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PPGM";
const VERSION: u16 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn write_u16(w: &mut impl Write, v: u16) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| bad(format!("checkpoint truncated: {e}")))?;
    Ok(buf)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    Ok(u16::from_le_bytes(read_exact::<2>(r)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(bad(format!("unreasonable string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| bad(format!("checkpoint truncated: {e}")))?;
    String::from_utf8(buf).map_err(|_| bad("checkpoint string is not utf-8"))
}

pub fn save_checkpoint(path: &Path, params: &FusionModelParams) -> Result<()> {
    let layout = params.layout();
    if params.values.len() != layout.total {
        return Err(bad(format!(
            "parameter vector length {} does not match layout total {}",
            params.values.len(),
            layout.total
        )));
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u16(&mut w, VERSION)?;

    let cfg = &params.config;
    for v in [
        cfg.in_channels,
        cfg.depth,
        cfg.base_channels,
        cfg.down_kernel,
        cfg.up_kernel,
        cfg.window_len,
    ] {
        write_u32(&mut w, v as u32)?;
    }
    write_f64(&mut w, cfg.leaky_slope)?;

    match &params.meta {
        Some(m) => {
            w.write_all(&[1])?;
            write_u64(&mut w, m.epochs_run as u64)?;
            write_u64(&mut w, m.best_epoch as u64)?;
            write_f64(&mut w, m.best_val_l1)?;
            write_f64(&mut w, m.final_lr)?;
            write_u64(&mut w, m.seed)?;
            write_u32(&mut w, m.train_subjects.len() as u32)?;
            for s in &m.train_subjects {
                write_str(&mut w, s)?;
            }
        }
        None => w.write_all(&[0])?,
    }

    write_u32(&mut w, layout.specs.len() as u32)?;
    for spec in &layout.specs {
        write_str(&mut w, &spec.name)?;
        w.write_all(&[spec.shape.len() as u8])?;
        for &d in &spec.shape {
            write_u32(&mut w, d as u32)?;
        }
        for &v in &params.values[spec.offset..spec.offset + spec.len()] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModelParams> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let magic = read_exact::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(bad("not a model checkpoint: bad magic"));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }

    let mut dims = [0u32; 6];
    for d in &mut dims {
        *d = read_u32(&mut r)?;
    }
    let leaky_slope = read_f64(&mut r)?;
    let config = ModelConfig {
        in_channels: dims[0] as usize,
        depth: dims[1] as usize,
        base_channels: dims[2] as usize,
        down_kernel: dims[3] as usize,
        up_kernel: dims[4] as usize,
        window_len: dims[5] as usize,
        leaky_slope,
    };
    config.validate()?;

    let meta = match read_exact::<1>(&mut r)?[0] {
        0 => None,
        1 => {
            let epochs_run = read_u64(&mut r)? as usize;
            let best_epoch = read_u64(&mut r)? as usize;
            let best_val_l1 = read_f64(&mut r)?;
            let final_lr = read_f64(&mut r)?;
            let seed = read_u64(&mut r)?;
            let n = read_u32(&mut r)? as usize;
            let mut train_subjects = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                train_subjects.push(read_str(&mut r)?);
            }
            Some(TrainingMeta {
                epochs_run,
                best_epoch,
                best_val_l1,
                final_lr,
                seed,
                train_subjects,
            })
        }
        flag => return Err(bad(format!("bad meta flag {flag}"))),
    };

    let layout = Layout::for_config(&config);
    let n_tensors = read_u32(&mut r)? as usize;
    if n_tensors != layout.specs.len() {
        return Err(bad(format!(
            "checkpoint has {n_tensors} tensors, layout expects {}",
            layout.specs.len()
        )));
    }
    let mut values = vec![0.0f64; layout.total];
    for spec in &layout.specs {
        let name = read_str(&mut r)?;
        if name != spec.name {
            return Err(bad(format!("tensor {name} where {} was expected", spec.name)));
        }
        let ndim = read_exact::<1>(&mut r)?[0] as usize;
        if ndim != spec.shape.len() {
            return Err(bad(format!("tensor {name} rank {ndim} != {}", spec.shape.len())));
        }
        for &expect in &spec.shape {
            let got = read_u32(&mut r)? as usize;
            if got != expect {
                return Err(bad(format!("tensor {name} dim {got} != {expect}")));
            }
        }
        for v in &mut values[spec.offset..spec.offset + spec.len()] {
            *v = f32::from_le_bytes(read_exact::<4>(&mut r)?) as f64;
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after checkpoint payload"));
    }

    Ok(FusionModelParams { config, values, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::model::init_model;
    use crate::nn::forward;

    fn tiny() -> FusionModelParams {
        let cfg = ModelConfig {
            in_channels: 3,
            depth: 2,
            base_channels: 4,
            down_kernel: 7,
            up_kernel: 5,
            window_len: 32,
            leaky_slope: 0.2,
        };
        init_model(&cfg, 77).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut params = tiny();
        params.meta = Some(TrainingMeta {
            epochs_run: 42,
            best_epoch: 17,
            best_val_l1: 0.123,
            final_lr: 0.0005,
            seed: 99,
            train_subjects: vec!["s00".into(), "s01".into()],
        });
        save_checkpoint(&path, &params).unwrap();
        let once = load_checkpoint(&path).unwrap();
        assert_eq!(once.config, params.config);
        assert_eq!(once.meta, params.meta);
        // f32 quantization happened exactly once
        for (a, b) in once.values.iter().zip(&params.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // further round trips are bit-exact
        save_checkpoint(&path, &once).unwrap();
        let twice = load_checkpoint(&path).unwrap();
        assert_eq!(twice, once);

        let input: Vec<f64> = (0..3 * 32).map(|i| (i as f64 * 0.2).sin()).collect();
        assert_eq!(forward(&once, &input).unwrap(), forward(&twice, &input).unwrap());
    }

    #[test]
    fn meta_free_checkpoint_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bare.ckpt");
        let params = tiny();
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert!(loaded.meta.is_none());
        assert_eq!(loaded.config, params.config);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();

        let bad_magic = dir.path().join("bad_magic.ckpt");
        std::fs::write(&bad_magic, b"NOPE....").unwrap();
        assert!(load_checkpoint(&bad_magic).is_err());

        let path = dir.path().join("trunc.ckpt");
        save_checkpoint(&path, &tiny()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let path2 = dir.path().join("extra.ckpt");
        save_checkpoint(&path2, &tiny()).unwrap();
        let mut bytes = std::fs::read(&path2).unwrap();
        bytes.push(0);
        std::fs::write(&path2, &bytes).unwrap();
        assert!(load_checkpoint(&path2).is_err());
    }

    #[test]
    fn version_bump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v2.ckpt");
        save_checkpoint(&path, &tiny()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 2;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, ModelConfig, ModelError, ModelState, Result};

const MAGIC: &[u8; 5] = b"SEDM1";

/// Everything needed to resume training or evaluate either network.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub student: ModelState,
    pub teacher: Option<Vec<f64>>,
    pub adam: Adam,
    pub epoch: usize,
    /// Free-form provenance (the resolved run configuration).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    n_params: usize,
    has_teacher: bool,
    adam_step: u64,
    epoch: usize,
    meta: serde_json::Value,
}

fn put(out: &mut Vec<u8>, v: &[f64]) {
    for &x in v {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

/// Layout: magic, u32 LE header length, JSON header, then float32 LE vectors
/// in order: student params, teacher params (if present), Adam m, Adam v.
pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let header = Header {
        config: ck.student.config.clone(),
        n_params: ck.student.n_params(),
        has_teacher: ck.teacher.is_some(),
        adam_step: ck.adam.step,
        epoch: ck.epoch,
        meta: ck.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 16 * header.n_params + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    put(&mut out, &ck.student.params);
    if let Some(t) = &ck.teacher {
        put(&mut out, t);
    }
    put(&mut out, &ck.adam.m);
    put(&mut out, &ck.adam.v);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| ModelError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("missing SEDM1 magic"));
    }
    let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = bytes.get(9..9 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let n = header.n_params;
    if ModelState::n_params_for(&header.config) != n {
        return Err(bad("parameter count does not match config"));
    }
    let vectors = 3 + header.has_teacher as usize;
    let data = &bytes[9 + hlen..];
    if data.len() != vectors * n * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", vectors * n * 4, data.len())));
    }
    let mut chunks = data.chunks_exact(n * 4).map(|c| {
        c.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect::<Vec<f64>>()
    });
    let params = chunks.next().unwrap_or_default();
    let teacher = if header.has_teacher { chunks.next() } else { None };
    let m = chunks.next().unwrap_or_default();
    let v = chunks.next().unwrap_or_default();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    header.config.validate()?;
    Ok(Checkpoint {
        student: ModelState { config: header.config, params },
        teacher,
        adam: Adam { m, v, step: header.adam_step },
        epoch: header.epoch,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, PoolingHead};

    #[test]
    fn round_trip_is_float32_exact() {
        let mut cfg = ModelConfig::desk(8, 3);
        cfg.channels = vec![2];
        cfg.pools = vec![(2, 2)];
        cfg.activation = Activation::Cg;
        cfg.pooling_head = PoolingHead::Mean;
        let s = ModelState::new(cfg, 4).unwrap();
        let n = s.n_params();
        let mut adam = Adam::new(n);
        adam.update(&mut s.params.clone(), &vec![0.25; n], 1e-3).unwrap();
        let ck = Checkpoint {
            teacher: Some(s.params.iter().map(|p| p * 0.5).collect()),
            student: s,
            adam,
            epoch: 7,
            meta: serde_json::json!({"seed": 3}),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        let f32s = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        assert_eq!(back.student.params, f32s(&ck.student.params));
        assert_eq!(back.teacher.unwrap(), f32s(ck.teacher.as_ref().unwrap()));
        assert_eq!(back.adam.m, f32s(&ck.adam.m));
        assert_eq!(back.adam.step, 1);
        assert_eq!(back.epoch, 7);
        assert_eq!(back.meta["seed"], 3);
        assert_eq!(&std::fs::read(&path).unwrap()[..5], b"SEDM1");
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(ModelError::Checkpoint(_))));
        let s = ModelState::new(ModelConfig::desk(8, 2), 0).unwrap();
        let ck = Checkpoint { adam: Adam::new(s.n_params()), student: s, teacher: None, epoch: 0, meta: serde_json::Value::Null };
        write_checkpoint(&path, &ck).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(ModelError::Checkpoint(_))));
    }
}

//! `DGM1` model files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "DGM1" | version u32
//! timesteps u32 | width u32 | in_channels u32 | c1 u32 | c2 u32 | k1 u32 | k2 u32
//! dense_count u32 | dense sizes u32 x count
//! dropout f64 | l2 f64 | seed u64 | learning_rate f64 | epochs u32
//! section_count u32
//! per section: name_len u16 | name | rank u32 | dims u32 x rank | values f64 x prod(dims)
//! ```
//!
//! Sections hold every learnable tensor, the batch-norm running statistics
//! and the feature normalization statistics (`norm.mean`, `norm.std`).

use std::collections::HashMap;
use std::path::Path;

use super::{ModelState, NetError, NetworkConfig, Tensor};
use crate::features::{NormalizationStats, FEATURE_DIM};

pub const MODEL_MAGIC: &[u8; 4] = b"DGM1";
pub const MODEL_VERSION: u32 = 1;

fn sections(m: &ModelState) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = m.learnable().into_iter().map(|(n, t)| (n, t.clone())).collect();
    out.push(("bn1.running_mean".into(), m.bn1.running_mean.clone()));
    out.push(("bn1.running_var".into(), m.bn1.running_var.clone()));
    out.push(("bn2.running_mean".into(), m.bn2.running_mean.clone()));
    out.push(("bn2.running_var".into(), m.bn2.running_var.clone()));
    let vec4 = |v: [f64; FEATURE_DIM]| Tensor::from_vec(&[FEATURE_DIM], v.to_vec()).expect("4 values");
    out.push(("norm.mean".into(), vec4(m.norm_stats.mean)));
    out.push(("norm.std".into(), vec4(m.norm_stats.std)));
    out
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("dimension fits u32").to_le_bytes());
}

pub fn encode_model(m: &ModelState) -> Vec<u8> {
    let c = &m.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [c.timesteps, c.width, c.in_channels, c.hidden_channels.0, c.hidden_channels.1, c.kernel_widths.0, c.kernel_widths.1] {
        put_u32(&mut buf, v);
    }
    put_u32(&mut buf, c.dense_sizes.len());
    for &s in &c.dense_sizes {
        put_u32(&mut buf, s);
    }
    buf.extend_from_slice(&c.dropout_rate.to_le_bytes());
    buf.extend_from_slice(&c.l2_lambda.to_le_bytes());
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&m.learning_rate.to_le_bytes());
    buf.extend_from_slice(&m.epochs_trained.to_le_bytes());

    let secs = sections(m);
    put_u32(&mut buf, secs.len());
    for (name, t) in &secs {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut buf, d);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            NetError::ModelFormat(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, NetError> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NetError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelState, NetError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(NetError::ModelFormat("bad magic (expected DGM1)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(NetError::ModelFormat(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let n_dense = r.usize()?;
    if n_dense > 64 {
        return Err(NetError::ModelFormat(format!("{n_dense} dense layers")));
    }
    let dense_sizes = (0..n_dense).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
    let config = NetworkConfig {
        timesteps: dims[0],
        width: dims[1],
        in_channels: dims[2],
        hidden_channels: (dims[3], dims[4]),
        kernel_widths: (dims[5], dims[6]),
        dense_sizes,
        dropout_rate: r.f64()?,
        l2_lambda: r.f64()?,
        seed: r.u64()?,
    };
    let learning_rate = r.f64()?;
    let epochs_trained = r.u32()?;
    let mut m = ModelState::zeros(config).map_err(|e| NetError::ModelFormat(e.to_string()))?;
    m.learning_rate = learning_rate;
    m.epochs_trained = epochs_trained;

    let count = r.usize()?;
    let mut found: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NetError::ModelFormat("section name is not UTF-8".into()))?
            .to_owned();
        let rank = r.usize()?;
        if rank > 8 {
            return Err(NetError::ModelFormat(format!("section {name}: rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&n| n <= bytes.len() / 8).ok_or_else(
            || NetError::ModelFormat(format!("section {name}: shape {shape:?} exceeds file size")),
        )?;
        let data = r.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if found.insert(name.clone(), Tensor::from_vec(&shape, data)?).is_some() {
            return Err(NetError::ModelFormat(format!("duplicate section {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(NetError::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let expected = sections(&m);
    if found.len() != expected.len() {
        return Err(NetError::ModelFormat(format!("{} sections, expected {}", found.len(), expected.len())));
    }
    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor, NetError> {
        let t = found.remove(name).ok_or_else(|| NetError::ModelFormat(format!("missing section {name}")))?;
        t.expect_shape(shape, name)?;
        Ok(t)
    };
    let names: Vec<(String, Vec<usize>)> = m.learnable().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    let loaded = names.iter().map(|(n, s)| take(n, s)).collect::<Result<Vec<_>, _>>()?;
    for (dst, src) in m.learnable_mut().into_iter().zip(loaded) {
        *dst = src;
    }
    let (c1, c2) = m.config.hidden_channels;
    m.bn1.running_mean = take("bn1.running_mean", &[c1])?;
    m.bn1.running_var = take("bn1.running_var", &[c1])?;
    m.bn2.running_mean = take("bn2.running_mean", &[c2])?;
    m.bn2.running_var = take("bn2.running_var", &[c2])?;
    let arr = |t: Tensor| -> [f64; FEATURE_DIM] { t.data().try_into().expect("checked shape") };
    m.norm_stats = NormalizationStats {
        mean: arr(take("norm.mean", &[FEATURE_DIM])?),
        std: arr(take("norm.std", &[FEATURE_DIM])?),
    };
    if m.norm_stats.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(NetError::ModelFormat("normalization std must be positive".into()));
    }
    Ok(m)
}

pub fn save_model(path: &Path, m: &ModelState) -> Result<(), NetError> {
    std::fs::write(path, encode_model(m)).map_err(|source| NetError::Io { path: path.to_owned(), source })
}

pub fn load_model(path: &Path) -> Result<ModelState, NetError> {
    let bytes = std::fs::read(path).map_err(|source| NetError::Io { path: path.to_owned(), source })?;
    decode_model(&bytes)
}

//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   8 bytes  "T2PCKPT\n"
//! version u32      currently 1
//! config  n_patterns u64, pattern_len u64, prior_location f64,
//!         lambda1 f64, lambda2 f64, epochs u64, learning_rate f64,
//!         batch_size u64, seed u64, kl_mode u8 (0 posterior, 1 uniform),
//!         mc_samples u64, epsilon f64
//! arrays  count u32, then per array:
//!         name_len u16, name bytes, ndim u8, dims u64 each, values f64 each
//! ```
//!
//! Arrays appear in the fixed order conv1_w, conv2_w, conv3_w, head_num_w,
//! head_num_b, head_den_w, head_den_b, bank. Reloading is bit-exact.

use std::path::Path;

use crate::binconcrete::KlMode;
use crate::error::{Error, Result};
use crate::model::{T2PConfig, T2PModel};

const MAGIC: &[u8; 8] = b"T2PCKPT\n";
const VERSION: u32 = 1;

pub fn to_bytes(model: &T2PModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let c = &model.config;
    out.extend_from_slice(&(c.n_patterns as u64).to_le_bytes());
    out.extend_from_slice(&(c.pattern_len as u64).to_le_bytes());
    out.extend_from_slice(&c.prior_location.to_le_bytes());
    out.extend_from_slice(&c.lambda1.to_le_bytes());
    out.extend_from_slice(&c.lambda2.to_le_bytes());
    out.extend_from_slice(&(c.epochs as u64).to_le_bytes());
    out.extend_from_slice(&c.learning_rate.to_le_bytes());
    out.extend_from_slice(&(c.batch_size as u64).to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.push(match c.kl_mode {
        KlMode::PosteriorSampled => 0,
        KlMode::UniformSampled => 1,
    });
    out.extend_from_slice(&(c.mc_samples as u64).to_le_bytes());
    out.extend_from_slice(&c.epsilon.to_le_bytes());

    let shapes = model.shapes();
    let arrays = model.arrays();
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for ((name, shape), values) in shapes.iter().zip(arrays.iter()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<T2PModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (this build reads {VERSION})"
        )));
    }
    let config = T2PConfig {
        n_patterns: cur.u64()? as usize,
        pattern_len: cur.u64()? as usize,
        prior_location: cur.f64()?,
        lambda1: cur.f64()?,
        lambda2: cur.f64()?,
        epochs: cur.u64()? as usize,
        learning_rate: cur.f64()?,
        batch_size: cur.u64()? as usize,
        seed: cur.u64()?,
        kl_mode: match cur.u8()? {
            0 => KlMode::PosteriorSampled,
            1 => KlMode::UniformSampled,
            other => return Err(Error::Format(format!("unknown KL mode tag {other}"))),
        },
        mc_samples: cur.u64()? as usize,
        epsilon: cur.f64()?,
    };
    config.validate().map_err(|e| Error::Format(format!("checkpoint config invalid: {e}")))?;

    let count = cur.u32()? as usize;
    let mut model = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        T2PModel::init(&config, &mut rng)?
    };
    let shapes = model.shapes();
    if count != shapes.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} arrays, expected {}",
            shapes.len()
        )));
    }
    for ((expected_name, expected_shape), target) in
        shapes.iter().zip(model.arrays_mut().into_iter())
    {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
        if name != *expected_name {
            return Err(Error::Format(format!(
                "array '{name}' out of order, expected '{expected_name}'"
            )));
        }
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u64()? as usize);
        }
        if dims != *expected_shape {
            return Err(Error::Format(format!(
                "array '{name}' has shape {dims:?}, config implies {expected_shape:?}"
            )));
        }
        let n: usize = dims.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(cur.f64()?);
        }
        *target = values;
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last array",
            bytes.len() - cur.pos
        )));
    }
    Ok(model)
}

pub fn save(model: &T2PModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<T2PModel> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "IVRGMLP\0"
//! version    u32      1
//! n_sizes    u32      then n_sizes x u32 layer sizes
//! has_m      u8       then m: f64 (always written, 0 when absent)
//! power_it   u32
//! init_seed  u64
//! per layer: weight (out*in f64, row-major), bias (out), u (out), v (in)
//! ```
//!
//! Floats are stored as raw bits, so a save/load round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Mlp, MlpConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"IVRGMLP\0";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mlp: &Mlp, mut out: W) -> Result<()> {
    let cfg = mlp.config();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(cfg.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &cfg.layer_sizes {
        out.write_all(&(s as u32).to_le_bytes())?;
    }
    out.write_all(&[cfg.lipschitz.is_some() as u8])?;
    out.write_all(&cfg.lipschitz.unwrap_or(0.0).to_le_bytes())?;
    out.write_all(&(cfg.power_iterations as u32).to_le_bytes())?;
    out.write_all(&cfg.init_seed.to_le_bytes())?;
    for layer in &mlp.layers {
        for block in [&layer.weight, &layer.bias, &layer.u, &layer.v] {
            for x in block.iter() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn save_checkpoint(mlp: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(mlp, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn fill(&mut self, v: &mut [f64]) -> Result<()> {
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(())
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Mlp> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint(
            "not a model checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let n = r.u32()? as usize;
    if n > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let layer_sizes = (0..n)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let has_m = r.bytes::<1>()?[0] != 0;
    let m = r.f64()?;
    let power_iterations = r.u32()? as usize;
    let init_seed = r.u64()?;
    let config = MlpConfig {
        layer_sizes,
        activation: Activation::ReLU,
        lipschitz: has_m.then_some(m),
        power_iterations,
        init_seed,
    };
    let mut mlp = Mlp::zeros(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    for layer in mlp.layers.iter_mut() {
        r.fill(&mut layer.weight)?;
        r.fill(&mut layer.bias)?;
        r.fill(&mut layer.u)?;
        r.fill(&mut layer.v)?;
    }
    Ok(mlp)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Mlp> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        for cfg in [
            MlpConfig::standard(3).with_seed(5),
            MlpConfig::standard(2)
                .with_seed(6)
                .with_lipschitz(0.1 + 0.2),
        ] {
            let mut mlp = Mlp::new(cfg).unwrap();
            mlp.spectral_normalize();
            let mut buf = Vec::new();
            write_checkpoint(&mlp, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back, mlp);
            let bits = |m: &Mlp| {
                m.flat_parameters()
                    .iter()
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(&back), bits(&mlp));
        }
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(read_checkpoint(&b"nonsense"[..]).is_err());
        let mlp = Mlp::new(MlpConfig::standard(2)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mlp, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_checkpoint(buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}

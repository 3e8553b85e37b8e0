//! Checkpoint files: one line of JSON header, then the parameter values as
//! little-endian `f32` in header order.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::nn::{Model, Tensor};

pub const CHECKPOINT_FORMAT: &str = "xscope-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "network", rename_all = "snake_case")]
pub enum Topology {
    Generator(GeneratorConfig),
    Discriminator(DiscriminatorConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub shape: [usize; 4],
}

/// Training state recorded alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: u64,
    pub seed: u64,
    pub val_ssim: Option<f64>,
    /// `None` also when the PSNR was infinite, which JSON cannot hold.
    pub val_psnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub topology: Topology,
    pub parameters: Vec<ParameterSpec>,
    #[serde(flatten)]
    pub meta: CheckpointMeta,
}

fn specs(model: &dyn Model<f32>) -> Vec<ParameterSpec> {
    model
        .parameters()
        .iter()
        .map(|p| {
            let s = p.value.shape();
            ParameterSpec {
                name: p.name.clone(),
                shape: [s.n, s.c, s.h, s.w],
            }
        })
        .collect()
}

fn encode(model: &dyn Model<f32>, topology: Topology, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        topology,
        parameters: specs(model),
        meta: *meta,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for p in model.parameters() {
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Writes to a temporary sibling, then renames over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_generator(model: &Generator, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(model, Topology::Generator(*model.config()), meta)?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn save_discriminator(model: &Discriminator, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(model, Topology::Discriminator(*model.config()), meta)?;
    write_atomic(path.as_ref(), &bytes)
}

struct Decoded {
    header: CheckpointHeader,
    values: Vec<Vec<f32>>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(format!("unreadable header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported format {} version {}",
            header.format, header.version
        )));
    }
    let payload = &bytes[nl + 1..];
    let declared: usize = header.parameters.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if payload.len() != declared * 4 {
        return Err(bad(format!(
            "payload holds {} bytes, header declares {} values ({} bytes)",
            payload.len(),
            declared,
            declared * 4
        )));
    }
    let mut values = Vec::with_capacity(header.parameters.len());
    let mut offset = 0;
    for p in &header.parameters {
        let len: usize = p.shape.iter().product();
        let chunk = &payload[offset * 4..(offset + len) * 4];
        let v: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("non-finite value in {}", p.name)));
        }
        values.push(v);
        offset += len;
    }
    Ok(Decoded { header, values })
}

/// Copies decoded values into `model`; the model is only modified when
/// every name and shape agrees.
fn fill(model: &mut dyn Model<f32>, decoded: Decoded) -> Result<CheckpointHeader> {
    let ours = specs(model);
    let theirs = &decoded.header.parameters;
    let mut differing: Vec<String> = Vec::new();
    for (i, spec) in ours.iter().enumerate() {
        if theirs.get(i) != Some(spec) {
            differing.push(spec.name.clone());
        }
    }
    for spec in theirs.iter().skip(ours.len()) {
        differing.push(spec.name.clone());
    }
    for (i, spec) in theirs.iter().enumerate().take(ours.len()) {
        if ours[i].name != spec.name && !differing.contains(&spec.name) {
            differing.push(spec.name.clone());
        }
    }
    if !differing.is_empty() {
        return Err(Error::TopologyMismatch(differing));
    }
    for (p, v) in model.parameters_mut().into_iter().zip(decoded.values) {
        p.value = Tensor::from_vec(p.value.shape(), v)?;
        p.zero_grad();
    }
    Ok(decoded.header)
}

pub fn load_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    Ok(decode(path.as_ref())?.header)
}

/// Loads a generator, building it from the stored topology.
pub fn load_generator(path: impl AsRef<Path>) -> Result<(Generator, CheckpointHeader)> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let Topology::Generator(cfg) = decoded.header.topology else {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "file holds a discriminator, not a generator".into(),
        });
    };
    let mut g = Generator::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    let header = fill(&mut g, decoded)?;
    Ok((g, header))
}

pub fn load_discriminator(path: impl AsRef<Path>) -> Result<(Discriminator, CheckpointHeader)> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let Topology::Discriminator(cfg) = decoded.header.topology else {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "file holds a generator, not a discriminator".into(),
        });
    };
    let mut d = Discriminator::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    let header = fill(&mut d, decoded)?;
    Ok((d, header))
}

/// Loads weights into an existing model, which must have the same
/// parameter names and shapes.
pub fn load_into(model: &mut dyn Model<f32>, path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let decoded = decode(path.as_ref())?;
    fill(model, decoded)
}

pub fn checkpoint_name(iteration: u64) -> PathBuf {
    PathBuf::from(format!("generator_{iteration:08}.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape;

    fn small_generator(seed: u64) -> Generator {
        Generator::new(GeneratorConfig::reduced(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = small_generator(4);
        let meta = CheckpointMeta {
            iteration: 1234,
            seed: 9,
            val_ssim: Some(0.5),
            val_psnr: Some(31.5),
        };
        let p = dir.path().join("g.ckpt");
        save_generator(&g, &meta, &p).unwrap();
        let (back, header) = load_generator(&p).unwrap();
        assert_eq!(header.meta.iteration, 1234);
        assert_eq!(back.checksum(), g.checksum());
        let x = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_, c, y, x| ((c + y + x) % 4) as f32 / 3.0);
        let a = g.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        let first = std::fs::read(&p).unwrap();
        let line = first.split(|&b| b == b'\n').next().unwrap();
        assert!(std::str::from_utf8(line).unwrap().contains("\"iteration\":1234"));
    }

    #[test]
    fn truncated_and_garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.ckpt");
        save_generator(&small_generator(1), &CheckpointMeta::default(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_generator(&cut), Err(Error::Checkpoint { .. })));
        std::fs::write(&cut, &bytes[..10]).unwrap();
        assert!(matches!(load_generator(&cut), Err(Error::Checkpoint { .. })));
        assert!(load_discriminator(&p).is_err());
    }

    #[test]
    fn topology_mismatch_lists_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.ckpt");
        save_generator(&small_generator(1), &CheckpointMeta::default(), &p).unwrap();
        let mut other = Generator::new(
            GeneratorConfig {
                base_width: 4,
                ..GeneratorConfig::reduced()
            },
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let before = other.checksum();
        match load_into(&mut other, &p) {
            Err(Error::TopologyMismatch(names)) => assert!(names.contains(&"down1.transition.weight".to_string())),
            other => panic!("{other:?}"),
        }
        assert_eq!(other.checksum(), before);
    }
}

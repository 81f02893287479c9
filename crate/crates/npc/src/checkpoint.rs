//! Model checkpoints: a binary `NPCM` file plus a JSON sidecar carrying the
//! same fields in readable form.
//!
//! Binary layout (little endian): magic `NPCM`, version u16, input_dim u32,
//! hidden u32, layers u32, N u32, flags u8, K u32, L u32, T u32, sigma_t f64,
//! d_scale f64, trans_norm f64, parameter count u64, then the parameters as
//! f32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use npc_core::mlp::{Architecture, MlpParams};
use npc_core::{AblationFlags, CompositionConfig, MlpModel};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NPCM";
pub const VERSION: u16 = 1;
pub const CHECKPOINT_FILE: &str = "model.npcm";
pub const SIDECAR_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagsMeta {
    pub no_gamma: bool,
    pub no_spatial: bool,
    pub no_entropy: bool,
    pub direct_mlp: bool,
    pub no_time: bool,
}

impl From<AblationFlags> for FlagsMeta {
    fn from(f: AblationFlags) -> Self {
        Self {
            no_gamma: f.no_gamma,
            no_spatial: f.no_spatial,
            no_entropy: f.no_entropy,
            direct_mlp: f.direct_mlp,
            no_time: f.no_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub base_lr: f64,
    pub images_per_step: usize,
    pub pixels_per_image: usize,
    pub seed: u64,
    pub loss_reduction: String,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u16,
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub n: usize,
    pub k: usize,
    pub freq_l: usize,
    pub frames: usize,
    pub sigma_t: f64,
    pub d_scale: f64,
    pub trans_norm: f64,
    pub param_count: usize,
    pub flags: FlagsMeta,
    /// Dataset the model was trained on; used when no `--data` is given.
    pub data_root: Option<PathBuf>,
    pub train: Option<TrainMeta>,
}

pub fn sidecar_for(model: &MlpModel, data_root: Option<PathBuf>, train: Option<TrainMeta>) -> Sidecar {
    let c = &model.config;
    Sidecar {
        format_version: VERSION,
        input_dim: c.input_dim(),
        hidden: c.hidden,
        layers: c.layers,
        n: c.n,
        k: c.k,
        freq_l: c.freq_l,
        frames: c.frames,
        sigma_t: c.sigma_t,
        d_scale: c.d_scale,
        trans_norm: c.trans_norm,
        param_count: model.params.data.len(),
        flags: c.flags.into(),
        data_root,
        train,
    }
}

pub fn encode(model: &MlpModel) -> Vec<u8> {
    let c = &model.config;
    let mut b = Vec::with_capacity(64 + 4 * model.params.data.len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.input_dim(), c.hidden, c.layers, c.n] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    b.push(c.flags.to_bits());
    for v in [c.k, c.freq_l, c.frames] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [c.sigma_t, c.d_scale, c.trans_norm] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(model.params.data.len() as u64).to_le_bytes());
    for v in &model.params.data {
        b.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format(self.path, "truncated checkpoint"))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(Error::format(path, "not a model checkpoint (bad magic)"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let (input_dim, hidden, layers, n) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let flags = AblationFlags::from_bits(r.u8()?);
    let (k, freq_l, frames) = (r.u32()?, r.u32()?, r.u32()?);
    let (sigma_t, d_scale, trans_norm) = (r.f64()?, r.f64()?, r.f64()?);
    let count = r.u64()? as usize;
    let config = CompositionConfig {
        n,
        k,
        freq_l,
        frames,
        sigma_t,
        d_scale,
        trans_norm,
        hidden,
        layers,
        flags,
    };
    if config.input_dim() != input_dim {
        return Err(Error::format(path, "input dimension disagrees with configuration"));
    }
    let arch = Architecture {
        input_dim,
        hidden,
        layers,
        n_samples: n,
    };
    if arch.validate().is_err() || arch.param_count() != count {
        return Err(Error::format(path, "parameter count disagrees with architecture"));
    }
    let payload = r.take(4 * count)?;
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let params = MlpParams::from_flat(arch, data)?;
    Ok(MlpModel::from_params(config, params)?)
}

/// Rounds every parameter through f32, matching what a saved checkpoint holds.
pub fn round_to_storage(model: &mut MlpModel) {
    for v in &mut model.params.data {
        *v = *v as f32 as f64;
    }
}

pub fn save(dir: &Path, model: &MlpModel, sidecar: &Sidecar) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(CHECKPOINT_FILE);
    fs::write(&p, encode(model)).map_err(|e| Error::io(&p, e))?;
    let s = dir.join(SIDECAR_FILE);
    let mut text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    text.push('\n');
    fs::write(&s, text).map_err(|e| Error::io(&s, e))
}

/// Loads `dir/model.npcm` (or a checkpoint file given directly) and its sidecar if present.
pub fn load(path: &Path) -> Result<(MlpModel, Option<Sidecar>)> {
    let (file, dir) = if path.is_dir() {
        (path.join(CHECKPOINT_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
    let model = decode(&file, &bytes)?;
    let sc = dir.join(SIDECAR_FILE);
    let sidecar = match fs::read_to_string(&sc) {
        Ok(t) => Some(serde_json::from_str(&t).map_err(|e| Error::format(&sc, e.to_string()))?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(&sc, e)),
    };
    Ok((model, sidecar))
}

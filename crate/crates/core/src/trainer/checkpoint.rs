//! Checkpoint container.
//!
//! ```text
//! magic      8 bytes   "OCOGANCK"
//! version    u32 LE    1
//! sections   u32 LE    count
//! section*   u32 LE name length, UTF-8 name,
//!            u64 LE payload length, payload
//! checksum   32 bytes  SHA-256 of every preceding byte
//! ```
//!
//! Tensor payload: `u8` dtype tag (0 = f32, 1 = f64), `u8` rank, one `u64`
//! per dimension, then the values little-endian. Section names are
//! `config` (TOML text), `state`, `gen/<param>`, `ema/<param>`,
//! `disc/<param>`, `adam_g/<param>` and `adam_d/<param>`.

use std::fs;
use std::path::Path;

use ocogan_autograd::{Adam, AdamSlot, DType, Element, ParamStore, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::TrainState;
use crate::config::RunConfig;
use crate::error::{Error, IoContext, Result};

pub const MAGIC: &[u8; 8] = b"OCOGANCK";
pub const VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

struct Writer {
    buf: Vec<u8>,
    count: u32,
}

impl Writer {
    fn new() -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        Writer { buf, count: 0 }
    }

    fn section(&mut self, name: &str, payload: &[u8]) {
        self.buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.buf.extend_from_slice(payload);
        self.count += 1;
    }

    fn finish(mut self) -> Vec<u8> {
        self.buf[12..16].copy_from_slice(&self.count.to_le_bytes());
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

fn tensor_payload<T: Element>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.push(T::DTYPE.tag());
    out.push(t.ndim() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        x.write_le(out);
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn tensor<T: Element>(&mut self) -> Option<std::result::Result<Tensor<T>, String>> {
        let tag = self.u8()?;
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(self.u64()?).ok()?);
        }
        if DType::from_tag(tag) != Some(T::DTYPE) {
            return Some(Err(format!("dtype tag {tag} does not match {:?}", T::DTYPE)));
        }
        let n: usize = shape.iter().product();
        let size = T::DTYPE.size();
        let raw = self.take(n.checked_mul(size)?)?;
        let data = raw.chunks_exact(size).map(T::read_le).collect();
        Some(Ok(Tensor::new(&shape, data)))
    }
}

/// Parsed, checksum-verified sections in file order.
pub struct Sections {
    pub entries: Vec<(String, Vec<u8>)>,
}

impl Sections {
    pub fn parse(bytes: &[u8], path: &Path) -> Result<Sections> {
        let bad = |detail: &str| Error::Integrity { path: path.to_path_buf(), detail: detail.to_string() };
        if bytes.len() < 16 + CHECKSUM_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic or truncated header)"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (corrupt or partially written file)"));
        }
        let mut c = Cursor { bytes: body, pos: 8 };
        let version = c.u32().ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let count = c.u32().ok_or_else(|| bad("truncated header"))?;
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let section = (|| {
                let name_len = c.u32()? as usize;
                let name = String::from_utf8(c.take(name_len)?.to_vec()).ok()?;
                let len = usize::try_from(c.u64()?).ok()?;
                Some((name, c.take(len)?.to_vec()))
            })();
            entries.push(section.ok_or_else(|| bad("truncated section"))?);
        }
        if c.pos != body.len() {
            return Err(bad("trailing bytes after the last section"));
        }
        Ok(Sections { entries })
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p.as_slice())
    }
}

fn write_store<T: Element>(w: &mut Writer, prefix: &str, store: &ParamStore<T>) {
    let mut payload = Vec::new();
    for id in store.ids() {
        payload.clear();
        tensor_payload(store.value(id), &mut payload);
        w.section(&format!("{prefix}/{}", store.name(id)), &payload);
    }
}

fn write_adam<T: Element>(w: &mut Writer, prefix: &str, store: &ParamStore<T>, opt: &Adam<T>) {
    let mut payload = Vec::new();
    for id in store.ids() {
        if let Some(slot) = opt.slot(id) {
            payload.clear();
            payload.extend_from_slice(&slot.t.to_le_bytes());
            tensor_payload(&slot.m, &mut payload);
            tensor_payload(&slot.v, &mut payload);
            w.section(&format!("{prefix}/{}", store.name(id)), &payload);
        }
    }
}

/// Serializes the full training state.
pub fn checkpoint_bytes(state: &TrainState) -> Vec<u8> {
    let mut w = Writer::new();
    w.section("config", state.config.to_toml_string().as_bytes());
    let mut meta = Vec::new();
    meta.extend_from_slice(&state.step.to_le_bytes());
    meta.extend_from_slice(&state.r1_applications.to_le_bytes());
    meta.extend_from_slice(&state.rng.get_seed());
    meta.extend_from_slice(&state.rng.get_stream().to_le_bytes());
    meta.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    w.section("state", &meta);
    write_store(&mut w, "gen", &state.gen.store);
    write_store(&mut w, "ema", &state.ema.store);
    write_store(&mut w, "disc", &state.disc.store);
    write_adam(&mut w, "adam_g", &state.gen.store, &state.opt_g);
    write_adam(&mut w, "adam_d", &state.disc.store, &state.opt_d);
    w.finish()
}

/// Writes atomically: a temporary file is renamed over `path`.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    let tmp = path.with_extension("bin.partial");
    fs::write(&tmp, checkpoint_bytes(state)).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

fn read_store<T: Element>(sections: &Sections, prefix: &str, store: &mut ParamStore<T>, path: &Path) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = format!("{prefix}/{}", store.name(id));
        let payload = sections.get(&name).ok_or_else(|| Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("missing section `{name}`"),
        })?;
        let mut c = Cursor { bytes: payload, pos: 0 };
        let t: Tensor<T> = decode_tensor(&mut c, &name, path)?;
        check_shape(&name, store.value(id).shape(), t.shape())?;
        store.set(id, t);
    }
    Ok(())
}

fn decode_tensor<T: Element>(c: &mut Cursor<'_>, name: &str, path: &Path) -> Result<Tensor<T>> {
    match c.tensor::<T>() {
        Some(Ok(t)) => Ok(t),
        Some(Err(detail)) => Err(Error::Integrity { path: path.to_path_buf(), detail: format!("`{name}`: {detail}") }),
        None => Err(Error::Integrity { path: path.to_path_buf(), detail: format!("`{name}`: malformed tensor") }),
    }
}

fn check_shape(name: &str, expected: &[usize], found: &[usize]) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { name: name.to_string(), expected: expected.to_vec(), found: found.to_vec() });
    }
    Ok(())
}

fn read_adam<T: Element>(sections: &Sections, prefix: &str, store: &ParamStore<T>, opt: &mut Adam<T>, path: &Path) -> Result<()> {
    for id in store.ids() {
        let name = format!("{prefix}/{}", store.name(id));
        let Some(payload) = sections.get(&name) else {
            opt.set_slot(id, None);
            continue;
        };
        let mut c = Cursor { bytes: payload, pos: 0 };
        let t = c.u64().ok_or_else(|| Error::Integrity { path: path.to_path_buf(), detail: format!("`{name}`: truncated") })?;
        let m: Tensor<T> = decode_tensor(&mut c, &name, path)?;
        let v: Tensor<T> = decode_tensor(&mut c, &name, path)?;
        check_shape(&name, store.value(id).shape(), m.shape())?;
        check_shape(&name, store.value(id).shape(), v.shape())?;
        opt.set_slot(id, Some(AdamSlot { m, v, t }));
    }
    Ok(())
}

fn restore(sections: &Sections, config: RunConfig, path: &Path) -> Result<TrainState> {
    let bad = |detail: &str| Error::Integrity { path: path.to_path_buf(), detail: detail.to_string() };
    let mut state = TrainState::new(config)?;
    let mut known = vec!["config".to_string(), "state".to_string()];
    for (prefix, store) in [("gen", &state.gen.store), ("ema", &state.ema.store), ("disc", &state.disc.store)] {
        known.extend(store.ids().map(|id| format!("{prefix}/{}", store.name(id))));
    }
    for (prefix, store) in [("adam_g", &state.gen.store), ("adam_d", &state.disc.store)] {
        known.extend(store.ids().map(|id| format!("{prefix}/{}", store.name(id))));
    }
    read_store(sections, "gen", &mut state.gen.store, path)?;
    read_store(sections, "ema", &mut state.ema.store, path)?;
    read_store(sections, "disc", &mut state.disc.store, path)?;
    read_adam(sections, "adam_g", &state.gen.store, &mut state.opt_g, path)?;
    read_adam(sections, "adam_d", &state.disc.store, &mut state.opt_d, path)?;
    if let Some((name, _)) = sections.entries.iter().find(|(n, _)| !known.contains(n)) {
        return Err(bad(&format!("section `{name}` has no counterpart in the model")));
    }
    let meta = sections.get("state").ok_or_else(|| bad("missing section `state`"))?;
    let mut c = Cursor { bytes: meta, pos: 0 };
    let parsed = (|| {
        let step = c.u64()?;
        let r1 = c.u64()?;
        let seed: [u8; 32] = c.take(32)?.try_into().ok()?;
        let stream = c.u64()?;
        let word_pos = u128::from_le_bytes(c.take(16)?.try_into().ok()?);
        Some((step, r1, seed, stream, word_pos))
    })();
    let (step, r1, seed, stream, word_pos) = parsed.ok_or_else(|| bad("malformed `state` section"))?;
    state.step = step;
    state.r1_applications = r1;
    state.rng = ChaCha8Rng::from_seed(seed);
    state.rng.set_stream(stream);
    state.rng.set_word_pos(word_pos);
    Ok(state)
}

fn read_sections(path: &Path) -> Result<Sections> {
    let bytes = fs::read(path).at(path)?;
    Sections::parse(&bytes, path)
}

/// Restores a training state with the configuration stored in the file.
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let sections = read_sections(path)?;
    let text = sections.get("config").ok_or_else(|| Error::Integrity {
        path: path.to_path_buf(),
        detail: "missing section `config`".into(),
    })?;
    let text = std::str::from_utf8(text).map_err(|_| Error::Integrity {
        path: path.to_path_buf(),
        detail: "config section is not UTF-8".into(),
    })?;
    let config = RunConfig::from_toml_str(text)?;
    restore(&sections, config, path)
}

/// Restores into models built from `config`; any parameter whose stored
/// shape disagrees is reported by name.
pub fn load_checkpoint_as(path: &Path, config: &RunConfig) -> Result<TrainState> {
    let sections = read_sections(path)?;
    restore(&sections, config.clone(), path)
}

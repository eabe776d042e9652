//! `VSCK` checkpoint files.
//!
//! Layout (little-endian): magic `VSCK`, version u32, entry count u32, then per
//! entry: name length u16, UTF-8 name, four u32 dims, CRC32 of the payload,
//! and `product(dims)` 4-byte words. Tensors store f32 bit patterns; metadata
//! entries store raw u32 words.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::adam::AdamState;
use super::arch::{discriminator_layers, generator_layers, DiscriminatorConfig, GeneratorConfig};
use super::pool::ImagePool;
use super::train::{CycleGan, Networks, Replica, TrainHyper, NETWORK_NAMES};
use crate::error::{Error, Result};
use crate::nncore::{parameter_layout, LayerSpec, Model, Param, Shape, Tensor};

const MAGIC: &[u8; 4] = b"VSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub hyper: TrainHyper,
    pub iteration: u64,
    pub nets: Networks,
    pub adam: Option<[AdamState; 4]>,
    pub pools: Option<[ImagePool; 2]>,
}

impl Checkpoint {
    /// Snapshot of replica 0 (all replicas are identical between steps).
    pub fn from_state(gan: &CycleGan, with_optimizer: bool) -> Self {
        let r = &gan.replicas()[0];
        Checkpoint {
            gen_cfg: gan.gen_cfg,
            disc_cfg: gan.disc_cfg,
            hyper: gan.hyper,
            iteration: gan.iteration(),
            nets: r.nets.clone(),
            adam: with_optimizer.then(|| r.adam.clone()),
            pools: with_optimizer.then(|| gan.pools().map(|p| p.clone())),
        }
    }

    /// Restores a training state, optionally with a different worker count.
    pub fn into_state(self, workers: Option<usize>) -> Result<CycleGan> {
        let mut hyper = self.hyper;
        if let Some(k) = workers {
            hyper.workers = k;
        }
        hyper.validate()?;
        let replica = match self.adam {
            Some(adam) => Replica { nets: self.nets, adam },
            None => Replica::new(self.nets),
        };
        let pools = self.pools.unwrap_or_else(|| {
            let fresh = CycleGan::new(self.gen_cfg, self.disc_cfg, hyper).expect("validated");
            fresh.pools().map(|p| p.clone())
        });
        Ok(CycleGan::from_parts(self.gen_cfg, self.disc_cfg, hyper, replica, pools, self.iteration))
    }
}

struct Entry {
    name: String,
    dims: [u32; 4],
    words: Vec<u32>,
}

impl Entry {
    fn meta(name: &str, words: Vec<u32>) -> Self {
        Entry { name: name.into(), dims: [1, 1, 1, words.len() as u32], words }
    }

    fn tensor(name: String, t: &Tensor) -> Self {
        let dims = t.shape().dims().map(|d| d as u32);
        Entry { name, dims, words: t.data().iter().map(|v| v.to_bits()).collect() }
    }

    fn to_tensor(&self) -> Result<Tensor> {
        let dims = self.dims.map(|d| d as usize);
        Tensor::new(dims, self.words.iter().map(|&w| f32::from_bits(w)).collect())
    }
}

fn u64_words(v: u64) -> [u32; 2] {
    [v as u32, (v >> 32) as u32]
}

fn words_u64(w: &[u32]) -> u64 {
    w[0] as u64 | (w[1] as u64) << 32
}

fn f64_words(v: f64) -> [u32; 2] {
    u64_words(v.to_bits())
}

fn words_f64(w: &[u32]) -> f64 {
    f64::from_bits(words_u64(w))
}

fn encode_entries(c: &Checkpoint) -> Vec<Entry> {
    let mut e = vec![
        Entry::meta(
            "meta/config",
            vec![
                c.gen_cfg.base_channels as u32,
                c.gen_cfg.n_residual_blocks as u32,
                c.disc_cfg.base_channels as u32,
                c.disc_cfg.n_layers as u32,
            ],
        ),
        Entry::meta("meta/iteration", u64_words(c.iteration).to_vec()),
    ];
    let h = &c.hyper;
    let mut hw = Vec::new();
    for v in [h.lr, h.beta1, h.beta2, h.adam_eps, h.lambda_cycle, h.lambda_identity] {
        hw.extend(f64_words(v));
    }
    hw.extend([h.batch_per_worker as u32, h.workers as u32, h.pool_capacity as u32]);
    hw.extend(u64_words(h.seed));
    e.push(Entry::meta("meta/hyper", hw));

    for (net, m) in NETWORK_NAMES.iter().zip(c.nets.models()) {
        for p in m.params() {
            e.push(Entry::tensor(format!("{net}/{}", p.name), &p.value));
        }
    }
    if let Some(adam) = &c.adam {
        for ((net, m), s) in NETWORK_NAMES.iter().zip(c.nets.models()).zip(adam) {
            e.push(Entry::meta(&format!("adam/{net}/t"), u64_words(s.t).to_vec()));
            for (i, p) in m.params().iter().enumerate() {
                e.push(Entry::tensor(format!("adam/{net}/m/{}", p.name), &s.m[i]));
                e.push(Entry::tensor(format!("adam/{net}/v/{}", p.name), &s.v[i]));
            }
        }
    }
    if let Some(pools) = &c.pools {
        for (tag, pool) in ["A", "B"].iter().zip(pools) {
            let rng = pool.rng();
            let mut w: Vec<u32> = rng.get_seed().chunks(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
            let pos = rng.get_word_pos();
            w.extend(u64_words(pos as u64));
            w.extend(u64_words((pos >> 64) as u64));
            w.extend(u64_words(rng.get_stream()));
            w.push(pool.capacity() as u32);
            w.push(pool.len() as u32);
            e.push(Entry::meta(&format!("pool/{tag}/state"), w));
            for (i, img) in pool.images().iter().enumerate() {
                e.push(Entry::tensor(format!("pool/{tag}/{i}"), img));
            }
        }
    }
    e
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let entries = encode_entries(c);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        for d in e.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let payload: Vec<u8> = e.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode_entries(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("not a VSCK checkpoint".into()))? != MAGIC {
        return Err(Error::Format("not a VSCK checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
            .to_string();
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let crc = r.u32()?;
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let n = n.and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Format(format!("entry '{name}' too large")))?;
        let payload = r.take(n)?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::Checksum(name));
        }
        let words = payload.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
        entries.push(Entry { name, dims, words });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(entries)
}

struct Entries(HashMap<String, Entry>);

impl Entries {
    fn get(&self, name: &str) -> Result<&Entry> {
        self.0.get(name).ok_or_else(|| Error::Format(format!("missing entry '{name}'")))
    }

    fn meta(&self, name: &str, len: usize) -> Result<&[u32]> {
        let e = self.get(name)?;
        if e.words.len() < len {
            return Err(Error::Format(format!("entry '{name}' has {} words, need {len}", e.words.len())));
        }
        Ok(&e.words)
    }

    fn tensor(&self, name: &str, shape: Shape) -> Result<Tensor> {
        let t = self.get(name)?.to_tensor()?;
        t.expect_shape(shape, name)?;
        Ok(t)
    }

    fn model(&self, net: &str, layers: Vec<LayerSpec>) -> Result<Model> {
        let params = parameter_layout(&layers)
            .into_iter()
            .map(|(name, shape)| Ok(Param { value: self.tensor(&format!("{net}/{name}"), shape)?, name }))
            .collect::<Result<Vec<_>>>()?;
        Model::from_params(layers, params)
    }
}

/// Parses checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let entries = Entries(decode_entries(bytes)?.into_iter().map(|e| (e.name.clone(), e)).collect());
    let cfg = entries.meta("meta/config", 4)?;
    let gen_cfg = GeneratorConfig { base_channels: cfg[0] as usize, n_residual_blocks: cfg[1] as usize };
    let disc_cfg = DiscriminatorConfig { base_channels: cfg[2] as usize, n_layers: cfg[3] as usize };
    let iteration = words_u64(entries.meta("meta/iteration", 2)?);
    let h = entries.meta("meta/hyper", 17)?;
    let hyper = TrainHyper {
        lr: words_f64(&h[0..]),
        beta1: words_f64(&h[2..]),
        beta2: words_f64(&h[4..]),
        adam_eps: words_f64(&h[6..]),
        lambda_cycle: words_f64(&h[8..]),
        lambda_identity: words_f64(&h[10..]),
        batch_per_worker: h[12] as usize,
        workers: h[13] as usize,
        pool_capacity: h[14] as usize,
        seed: words_u64(&h[15..]),
    };

    let g = generator_layers(&gen_cfg)?;
    let d = discriminator_layers(&disc_cfg)?;
    let nets = Networks {
        g_ab: entries.model("G_AB", g.clone())?,
        g_ba: entries.model("G_BA", g)?,
        d_a: entries.model("D_A", d.clone())?,
        d_b: entries.model("D_B", d)?,
    };

    let adam = if entries.0.contains_key("adam/G_AB/t") {
        let mut states = Vec::with_capacity(4);
        for (net, m) in NETWORK_NAMES.iter().zip(nets.models()) {
            let t = words_u64(entries.meta(&format!("adam/{net}/t"), 2)?);
            let mut s = AdamState { m: Vec::new(), v: Vec::new(), t };
            for p in m.params() {
                s.m.push(entries.tensor(&format!("adam/{net}/m/{}", p.name), p.value.shape())?);
                s.v.push(entries.tensor(&format!("adam/{net}/v/{}", p.name), p.value.shape())?);
            }
            states.push(s);
        }
        Some(states.try_into().expect("four networks"))
    } else {
        None
    };

    let pools = if entries.0.contains_key("pool/A/state") {
        let mut pools = Vec::with_capacity(2);
        for tag in ["A", "B"] {
            let w = entries.meta(&format!("pool/{tag}/state"), 16)?;
            let mut seed = [0u8; 32];
            for (i, word) in w[..8].iter().enumerate() {
                seed[4 * i..4 * i + 4].copy_from_slice(&word.to_le_bytes());
            }
            let pos = words_u64(&w[8..]) as u128 | (words_u64(&w[10..]) as u128) << 64;
            let mut rng = ChaCha8Rng::from_seed(seed);
            rng.set_stream(words_u64(&w[12..]));
            rng.set_word_pos(pos);
            let (capacity, len) = (w[14] as usize, w[15] as usize);
            let images = (0..len)
                .map(|i| entries.get(&format!("pool/{tag}/{i}"))?.to_tensor())
                .collect::<Result<Vec<_>>>()?;
            pools.push(ImagePool::from_parts(capacity, images, rng));
        }
        Some(pools.try_into().expect("two pools"))
    } else {
        None
    };

    Ok(Checkpoint { gen_cfg, disc_cfg, hyper, iteration, nets, adam, pools })
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(c)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

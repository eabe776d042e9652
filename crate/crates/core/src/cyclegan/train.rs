//! CycleGAN state, single-worker and synchronous multi-worker training steps.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::arch::{build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig};
use super::loss::{gan_loss_grad, l1_loss_grad};
use super::pool::{ImagePool, DEFAULT_POOL_CAPACITY};
use crate::error::{Error, Result};
use crate::nncore::{backward_with, BackwardOptions, Gradients, Model, Tape, Tensor};

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda_cycle: f64,
    pub lambda_identity: f64,
    pub batch_per_worker: usize,
    pub workers: usize,
    pub pool_capacity: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            lambda_cycle: 10.0,
            lambda_identity: 0.0,
            batch_per_worker: 1,
            workers: 2,
            pool_capacity: DEFAULT_POOL_CAPACITY,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lr", self.lr), ("adam_eps", self.adam_eps), ("lambda_cycle", self.lambda_cycle)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.lambda_identity >= 0.0 && self.lambda_identity.is_finite()) {
            return Err(Error::Config(format!("lambda_identity must be >= 0, got {}", self.lambda_identity)));
        }
        if self.batch_per_worker == 0 || self.workers == 0 {
            return Err(Error::Config("batch_per_worker and workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }
}

/// Names of the four networks, in storage order.
pub const NETWORK_NAMES: [&str; 4] = ["G_AB", "G_BA", "D_A", "D_B"];

/// The two generators and two discriminators.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    /// A → B.
    pub g_ab: Model,
    /// B → A.
    pub g_ba: Model,
    /// Scores domain-A images.
    pub d_a: Model,
    /// Scores domain-B images.
    pub d_b: Model,
}

impl Networks {
    pub fn new(gen: &GeneratorConfig, disc: &DiscriminatorConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Networks {
            g_ab: build_generator(gen, &mut rng)?,
            g_ba: build_generator(gen, &mut rng)?,
            d_a: build_discriminator(disc, &mut rng)?,
            d_b: build_discriminator(disc, &mut rng)?,
        })
    }

    pub fn models(&self) -> [&Model; 4] {
        [&self.g_ab, &self.g_ba, &self.d_a, &self.d_b]
    }

    pub fn models_mut(&mut self) -> [&mut Model; 4] {
        [&mut self.g_ab, &mut self.g_ba, &mut self.d_a, &mut self.d_b]
    }

    /// CRC32 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for m in self.models() {
            for p in m.params() {
                for v in p.value.data() {
                    h.update(&v.to_le_bytes());
                }
            }
        }
        h.finalize()
    }
}

/// Per-network parameter gradients, ordered like [`NETWORK_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads(pub [Vec<Tensor>; 4]);

impl NetGrads {
    /// Mean over workers: summed in index order, then divided by the count.
    pub fn mean(all: &[NetGrads]) -> Result<NetGrads> {
        let (first, rest) = all.split_first().ok_or(Error::Empty("gradient reduction"))?;
        let mut acc = first.clone();
        for g in rest {
            for (a, b) in acc.0.iter_mut().zip(&g.0) {
                for (x, y) in a.iter_mut().zip(b) {
                    x.add_assign(y)?;
                }
            }
        }
        let k = all.len() as f32;
        for t in acc.0.iter_mut().flatten() {
            for v in t.data_mut() {
                *v /= k;
            }
        }
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(Tensor::is_finite)
    }
}

/// Scalar losses of one training step (averaged over workers).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub g_adv_ab: f64,
    pub g_adv_ba: f64,
    pub cyc_a: f64,
    pub cyc_b: f64,
    pub d_a: f64,
    pub d_b: f64,
}

impl LossReport {
    pub const KEYS: [&'static str; 6] = ["G_adv_AB", "G_adv_BA", "cyc_A", "cyc_B", "D_A", "D_B"];

    pub fn entries(&self) -> [(&'static str, f64); 6] {
        let v = [self.g_adv_ab, self.g_adv_ba, self.cyc_a, self.cyc_b, self.d_a, self.d_b];
        std::array::from_fn(|i| (Self::KEYS[i], v[i]))
    }

    fn mean(all: &[LossReport]) -> LossReport {
        let n = all.len() as f64;
        let mut out = LossReport::default();
        for r in all {
            out.g_adv_ab += r.g_adv_ab;
            out.g_adv_ba += r.g_adv_ba;
            out.cyc_a += r.cyc_a;
            out.cyc_b += r.cyc_b;
            out.d_a += r.d_a;
            out.d_b += r.d_b;
        }
        LossReport {
            g_adv_ab: out.g_adv_ab / n,
            g_adv_ba: out.g_adv_ba / n,
            cyc_a: out.cyc_a / n,
            cyc_b: out.cyc_b / n,
            d_a: out.d_a / n,
            d_b: out.d_b / n,
        }
    }
}

/// Generator gradients and the fakes the discriminators will see.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub grad_g_ab: Vec<Tensor>,
    pub grad_g_ba: Vec<Tensor>,
    pub fake_a: Tensor,
    pub fake_b: Tensor,
    pub g_adv_ab: f64,
    pub g_adv_ba: f64,
    pub cyc_a: f64,
    pub cyc_b: f64,
    pub identity: f64,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorPass {
    pub grad_d_a: Vec<Tensor>,
    pub grad_d_b: Vec<Tensor>,
    pub d_a: f64,
    pub d_b: f64,
}

const PARAMS_ONLY: BackwardOptions = BackwardOptions { params: true, input: false };
const INPUT_ONLY: BackwardOptions = BackwardOptions { params: false, input: true };

fn zero_grads(m: &Model) -> Vec<Tensor> {
    m.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect()
}

fn accumulate(acc: &mut [Tensor], g: &Gradients<f32>) -> Result<()> {
    for (a, g) in acc.iter_mut().zip(&g.params) {
        a.add_assign(g.as_ref().expect("parameter gradient"))?;
    }
    Ok(())
}

fn input_grad(tape: &Tape<'_, f32>, seed: &Tensor) -> Result<Tensor> {
    Ok(backward_with(tape, seed, INPUT_ONLY)?.input.expect("input gradient"))
}

/// Generator losses and gradients for one worker's batch. Discriminator
/// weights are read but not differentiated.
pub fn generator_pass(nets: &Networks, a: &Tensor, b: &Tensor, hyper: &TrainHyper) -> Result<GeneratorPass> {
    a.expect_shape(b.shape(), "training batches")?;
    let mut grad_g_ab = zero_grads(&nets.g_ab);
    let mut grad_g_ba = zero_grads(&nets.g_ba);

    // A → B → A.
    let (fake_b, tape_ab) = nets.g_ab.forward_taped(a)?;
    let (pred, tape_db) = nets.d_b.forward_taped(&fake_b)?;
    let adv_ab = gan_loss_grad(&pred, true)?;
    let mut d_fake_b = input_grad(&tape_db, &adv_ab.grad)?;
    drop(tape_db);
    let (rec_a, tape_ba) = nets.g_ba.forward_taped(&fake_b)?;
    let cyc_a = l1_loss_grad(&rec_a, a, hyper.lambda_cycle)?;
    let g = backward_with(&tape_ba, &cyc_a.grad, BackwardOptions::default())?;
    drop(tape_ba);
    accumulate(&mut grad_g_ba, &g)?;
    d_fake_b.add_assign(g.input.as_ref().expect("input gradient"))?;
    accumulate(&mut grad_g_ab, &backward_with(&tape_ab, &d_fake_b, PARAMS_ONLY)?)?;
    drop(tape_ab);

    // B → A → B.
    let (fake_a, tape_ba) = nets.g_ba.forward_taped(b)?;
    let (pred, tape_da) = nets.d_a.forward_taped(&fake_a)?;
    let adv_ba = gan_loss_grad(&pred, true)?;
    let mut d_fake_a = input_grad(&tape_da, &adv_ba.grad)?;
    drop(tape_da);
    let (rec_b, tape_ab) = nets.g_ab.forward_taped(&fake_a)?;
    let cyc_b = l1_loss_grad(&rec_b, b, hyper.lambda_cycle)?;
    let g = backward_with(&tape_ab, &cyc_b.grad, BackwardOptions::default())?;
    drop(tape_ab);
    accumulate(&mut grad_g_ab, &g)?;
    d_fake_a.add_assign(g.input.as_ref().expect("input gradient"))?;
    accumulate(&mut grad_g_ba, &backward_with(&tape_ba, &d_fake_a, PARAMS_ONLY)?)?;
    drop(tape_ba);

    let mut identity = 0.0;
    if hyper.lambda_identity > 0.0 {
        let lambda = hyper.lambda_cycle * hyper.lambda_identity;
        for (g, x, acc) in [(&nets.g_ba, a, &mut grad_g_ba), (&nets.g_ab, b, &mut grad_g_ab)] {
            let (same, tape) = g.forward_taped(x)?;
            let l = l1_loss_grad(&same, x, lambda)?;
            identity += l.value;
            accumulate(acc, &backward_with(&tape, &l.grad, PARAMS_ONLY)?)?;
        }
    }

    Ok(GeneratorPass {
        grad_g_ab,
        grad_g_ba,
        fake_a,
        fake_b,
        g_adv_ab: adv_ab.value,
        g_adv_ba: adv_ba.value,
        cyc_a: cyc_a.value,
        cyc_b: cyc_b.value,
        identity,
    })
}

/// `0.5 * (gan(D(real), 1) + gan(D(fake), 0))` for both discriminators.
pub fn discriminator_pass(nets: &Networks, a: &Tensor, b: &Tensor, fake_a: &Tensor, fake_b: &Tensor) -> Result<DiscriminatorPass> {
    let one = |d: &Model, real: &Tensor, fake: &Tensor| -> Result<(Vec<Tensor>, f64)> {
        let mut grads = zero_grads(d);
        let mut loss = 0.0;
        for (x, label) in [(real, true), (fake, false)] {
            let (pred, tape) = d.forward_taped(x)?;
            let l = gan_loss_grad(&pred, label)?;
            loss += 0.5 * l.value;
            accumulate(&mut grads, &backward_with(&tape, &l.grad.scale(0.5), PARAMS_ONLY)?)?;
        }
        Ok((grads, loss))
    };
    let (grad_d_a, d_a) = one(&nets.d_a, a, fake_a)?;
    let (grad_d_b, d_b) = one(&nets.d_b, b, fake_b)?;
    Ok(DiscriminatorPass { grad_d_a, grad_d_b, d_a, d_b })
}

/// One worker's model copy with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Replica {
    pub nets: Networks,
    pub adam: [AdamState; 4],
}

impl Replica {
    pub fn new(nets: Networks) -> Self {
        let adam = nets.models().map(|m| AdamState::new(m.params()));
        Replica { nets, adam }
    }

    /// Applies one ADAM step to every network (generators first).
    pub fn apply(&mut self, grads: &NetGrads, cfg: &AdamConfig) -> Result<()> {
        for ((m, g), s) in self.nets.models_mut().into_iter().zip(&grads.0).zip(&mut self.adam) {
            adam_step(m.params_mut(), g, s, cfg)?;
        }
        Ok(())
    }
}

/// Full training state: one replica per worker, both image pools and the
/// iteration counter.
#[derive(Clone, Debug)]
pub struct CycleGan {
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub hyper: TrainHyper,
    replicas: Vec<Replica>,
    pool_a: ImagePool,
    pool_b: ImagePool,
    iteration: u64,
}

const POOL_A_STREAM: u64 = 0x706f_6f6c_5f61;
const POOL_B_STREAM: u64 = 0x706f_6f6c_5f62;

impl CycleGan {
    pub fn new(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, hyper: TrainHyper) -> Result<Self> {
        hyper.validate()?;
        let nets = Networks::new(&gen_cfg, &disc_cfg, hyper.seed)?;
        let pool_a = ImagePool::new(hyper.pool_capacity, hyper.seed ^ POOL_A_STREAM);
        let pool_b = ImagePool::new(hyper.pool_capacity, hyper.seed ^ POOL_B_STREAM);
        Ok(Self::from_parts(gen_cfg, disc_cfg, hyper, Replica::new(nets), [pool_a, pool_b], 0))
    }

    /// Assembles a state whose `hyper.workers` replicas all equal `replica`.
    pub fn from_parts(
        gen_cfg: GeneratorConfig,
        disc_cfg: DiscriminatorConfig,
        hyper: TrainHyper,
        replica: Replica,
        pools: [ImagePool; 2],
        iteration: u64,
    ) -> Self {
        let [pool_a, pool_b] = pools;
        let replicas = vec![replica; hyper.workers];
        CycleGan { gen_cfg, disc_cfg, hyper, replicas, pool_a, pool_b, iteration }
    }

    pub fn networks(&self) -> &Networks {
        &self.replicas[0].nets
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn pools(&self) -> [&ImagePool; 2] {
        [&self.pool_a, &self.pool_b]
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Single-process step on replica 0's view; the update is applied to all
    /// replicas.
    pub fn train_step(&mut self, a: &Tensor, b: &Tensor) -> Result<LossReport> {
        self.step(std::slice::from_ref(a), std::slice::from_ref(b))
    }

    /// Synchronous data-parallel step: worker `k` computes gradients on its own
    /// replica and batch concurrently; gradients are averaged in worker order
    /// and every replica applies the same ADAM update.
    pub fn sync_train_step(&mut self, batches_a: &[Tensor], batches_b: &[Tensor]) -> Result<LossReport> {
        if batches_a.len() != self.hyper.workers || batches_b.len() != self.hyper.workers {
            return Err(Error::invalid(format!(
                "sync_train_step needs {} batches per domain, got {} and {}",
                self.hyper.workers,
                batches_a.len(),
                batches_b.len()
            )));
        }
        self.step(batches_a, batches_b)
    }

    fn step(&mut self, batches_a: &[Tensor], batches_b: &[Tensor]) -> Result<LossReport> {
        let hyper = self.hyper;
        let k = batches_a.len();
        let replicas = &self.replicas[..k];

        let gen: Vec<GeneratorPass> = parallel(k, |w| generator_pass(&replicas[w].nets, &batches_a[w], &batches_b[w], &hyper))?;

        // The pools are shared, so queries happen in worker order.
        let mut pooled = Vec::with_capacity(k);
        for g in &gen {
            pooled.push((self.pool_a.query(&g.fake_a)?, self.pool_b.query(&g.fake_b)?));
        }

        let disc: Vec<DiscriminatorPass> = parallel(k, |w| {
            discriminator_pass(&replicas[w].nets, &batches_a[w], &batches_b[w], &pooled[w].0, &pooled[w].1)
        })?;

        let mut losses = Vec::with_capacity(k);
        let mut grads = Vec::with_capacity(k);
        for (g, d) in gen.into_iter().zip(disc) {
            losses.push(LossReport {
                g_adv_ab: g.g_adv_ab,
                g_adv_ba: g.g_adv_ba,
                cyc_a: g.cyc_a,
                cyc_b: g.cyc_b,
                d_a: d.d_a,
                d_b: d.d_b,
            });
            grads.push(NetGrads([g.grad_g_ab, g.grad_g_ba, d.grad_d_a, d.grad_d_b]));
        }
        let mean = NetGrads::mean(&grads)?;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training gradient"));
        }
        let cfg = hyper.adam();
        for r in &mut self.replicas {
            r.apply(&mean, &cfg)?;
        }
        self.check_replicas()?;
        self.iteration += 1;
        Ok(LossReport::mean(&losses))
    }

    /// Fails if any replica's parameters differ from replica 0's.
    pub fn check_replicas(&self) -> Result<()> {
        let expected = self.replicas[0].nets.checksum();
        for (worker, r) in self.replicas.iter().enumerate().skip(1) {
            let found = r.nets.checksum();
            if found != expected || r.nets != self.replicas[0].nets {
                return Err(Error::ReplicaDivergence { worker, found, expected });
            }
        }
        Ok(())
    }

    /// Draws this iteration's batches from `tiles_a` / `tiles_b` and runs one
    /// synchronous step.
    pub fn train_on(&mut self, tiles_a: &[Tensor], tiles_b: &[Tensor]) -> Result<LossReport> {
        let (k, bs) = (self.hyper.workers, self.hyper.batch_per_worker);
        let ia = batch_indices(self.hyper.seed, self.iteration, 0, k * bs, tiles_a.len())?;
        let ib = batch_indices(self.hyper.seed, self.iteration, 1, k * bs, tiles_b.len())?;
        let gather = |tiles: &[Tensor], idx: &[usize]| -> Result<Vec<Tensor>> {
            idx.chunks(bs)
                .map(|c| Tensor::stack(&c.iter().map(|&i| tiles[i].clone()).collect::<Vec<_>>()))
                .collect()
        };
        let a = gather(tiles_a, &ia)?;
        let b = gather(tiles_b, &ib)?;
        self.sync_train_step(&a, &b)
    }
}

/// Runs `f(0..k)` on `k` scoped threads and returns results in index order.
/// The first error by worker index wins.
fn parallel<R: Send>(k: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    if k == 1 {
        return Ok(vec![f(0)?]);
    }
    let results: Vec<Result<R>> = thread::scope(|s| {
        let handles: Vec<_> = (0..k).map(|w| s.spawn({
            let f = &f;
            move || f(w)
        })).collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });
    results.into_iter().collect()
}

/// Tile indices for one iteration. A pure function of
/// `(seed, iteration, stream)`, so resumed runs see the same data order.
/// Global slot `j` goes to worker `j / batch_per_worker`.
pub fn batch_indices(seed: u64, iteration: u64, stream: u64, count: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Empty("training tiles"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    Ok((0..count).map(|_| rng.gen_range(0..n)).collect())
}

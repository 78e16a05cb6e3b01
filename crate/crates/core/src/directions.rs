//! Conditional direction networks, their training objective, and the
//! single-vector linear baseline.
//!
//! Each direction is a two-dense-layer network with a relu in between;
//! direction `i` shifts a latent code as `F_i(z, a) = z + a * NN_i(z)`.
//! Training regresses the score of the shifted image onto
//! `score(original) + a`, while a diversity term penalizes pairwise cosine
//! similarity between the shifted codes of different directions.

use std::fmt;

use thiserror::Error as ThisError;

use crate::autodiff::{adam_step, AdamHyper, Gradients, NodeId, Parameter, Tape, Tensor};
use crate::error::{Error, Result};
use crate::generator::{Generator, StagedGenerator};
use crate::rng::{domain, RandomStream};
use crate::scorers::ScorerKind;

pub const DEFAULT_HIDDEN: usize = 64;

// ── Sampling ────────────────────────────────────────────────────────────

/// One training sample: a latent code, a class, and a requested shift.
#[derive(Debug, Clone)]
pub struct Sample {
    pub z: Tensor,
    pub y: usize,
    pub alpha: f64,
}

/// I.i.d. standard-normal entries, each redrawn until |x| <= trunc.
pub fn sample_latent(stream: &mut RandomStream, d: usize, trunc: f64) -> Tensor {
    let data: Vec<f64> = (0..d).map(|_| stream.truncated_normal(trunc)).collect();
    Tensor::vector(&data).expect("finite truncated normals")
}

/// Uniform shift request in [lo, hi).
pub fn sample_alpha(stream: &mut RandomStream, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi);
    stream.uniform(lo, hi)
}

fn draw_sample(stream: &mut RandomStream, config: &TrainConfig, gen: &Generator) -> Sample {
    let z = sample_latent(stream, gen.weights().latent_dim(), config.trunc);
    let y = stream.index(gen.weights().class_count());
    let alpha = sample_alpha(stream, config.alpha_lo, config.alpha_hi);
    Sample { z, y, alpha }
}

// ── Configuration ───────────────────────────────────────────────────────

/// Training hyperparameters. Defaults follow the experimental protocol at
/// desk scale: batch size 4, Adam at 2e-4, alpha uniform on [-0.5, 0.5],
/// latents truncated at 2, lambda 1/100.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub trunc: f64,
    pub lambda_div: f64,
    pub k: usize,
    pub hidden: usize,
    pub scorer: ScorerKind,
    /// Treat the regression target score(G(z)) + alpha as a constant.
    pub detach_base_score: bool,
    /// Penalize |cos| instead of plain cos in the diversity term.
    pub abs_cosine: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps: 20_000,
            batch_size: 4,
            lr: 2e-4,
            alpha_lo: -0.5,
            alpha_hi: 0.5,
            trunc: 2.0,
            lambda_div: 0.01,
            k: 1,
            hidden: DEFAULT_HIDDEN,
            scorer: ScorerKind::Brightness,
            detach_base_score: true,
            abs_cosine: false,
        }
    }
}

impl TrainConfig {
    /// Validate the full protocol contract. `train` itself additionally
    /// accepts `steps == 0` as an explicit no-op edge case.
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.alpha_lo.is_finite() && self.alpha_hi.is_finite())
            || self.alpha_lo >= self.alpha_hi
        {
            return Err(Error::Config("alpha range must be non-empty".into()));
        }
        if (self.alpha_lo + self.alpha_hi).abs() > 1e-12 {
            return Err(Error::Config(
                "alpha range must be symmetric about 0".into(),
            ));
        }
        if self.trunc <= 0.0 {
            return Err(Error::Config("trunc must be positive".into()));
        }
        if self.lambda_div < 0.0 {
            return Err(Error::Config("lambda_div must be >= 0".into()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("hidden width must be >= 1".into()));
        }
        Ok(())
    }
}

// ── Models ──────────────────────────────────────────────────────────────

/// One conditional direction network: delta(z) = W2 relu(W1 z + b1) + b2.
#[derive(Debug, Clone)]
pub struct DirectionNet {
    w1: Parameter, // [hidden, d]
    b1: Parameter, // [hidden]
    w2: Parameter, // [d, hidden]
    b2: Parameter, // [d]
}

/// k direction networks plus the diversity weight.
#[derive(Debug, Clone)]
pub struct DirectionBank {
    dirs: Vec<DirectionNet>,
    latent_dim: usize,
    hidden: usize,
    lambda_div: f64,
}

impl DirectionBank {
    /// Initialize k directions. The output layer (W2, b2) starts at zero so
    /// every direction is the identity map at step 0, which makes initial
    /// losses analytic; W1 is scaled-normal (std 1/sqrt(d)) to break
    /// symmetry between directions.
    ///
    /// `lambda_div` is forced to 0 when k == 1: the diversity term is
    /// undefined for a single direction.
    pub fn init(seed: u64, k: usize, latent_dim: usize, hidden: usize, lambda_div: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if latent_dim < 1 || hidden < 1 {
            return Err(Error::Config("latent_dim and hidden must be >= 1".into()));
        }
        if lambda_div < 0.0 {
            return Err(Error::Config("lambda_div must be >= 0".into()));
        }
        let mut stream = RandomStream::new(seed, domain::DIRECTION_INIT);
        let scale = 1.0 / (latent_dim as f64).sqrt();
        let dirs = (0..k)
            .map(|i| {
                let w1_data: Vec<f64> = (0..hidden * latent_dim)
                    .map(|_| stream.normal() * scale)
                    .collect();
                DirectionNet {
                    w1: Parameter::new(
                        format!("dir{i}.w1"),
                        Tensor::new(vec![hidden, latent_dim], w1_data).expect("finite init"),
                    ),
                    b1: Parameter::new(format!("dir{i}.b1"), Tensor::zeros(vec![hidden])),
                    w2: Parameter::new(
                        format!("dir{i}.w2"),
                        Tensor::zeros(vec![latent_dim, hidden]),
                    ),
                    b2: Parameter::new(format!("dir{i}.b2"), Tensor::zeros(vec![latent_dim])),
                }
            })
            .collect();
        Ok(DirectionBank {
            dirs,
            latent_dim,
            hidden,
            lambda_div: if k == 1 { 0.0 } else { lambda_div },
        })
    }

    pub fn k(&self) -> usize {
        self.dirs.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn lambda_div(&self) -> f64 {
        self.lambda_div
    }

    /// Borrow the raw parameter tensors of one direction, in
    /// (w1, b1, w2, b2) order.
    pub fn dir_tensors(&self, i: usize) -> (&Tensor, &Tensor, &Tensor, &Tensor) {
        let d = &self.dirs[i];
        (d.w1.value(), d.b1.value(), d.w2.value(), d.b2.value())
    }

    /// Rebuild a bank from raw tensors (checkpoint loading).
    pub fn from_tensors(
        latent_dim: usize,
        hidden: usize,
        lambda_div: f64,
        dirs: Vec<(Tensor, Tensor, Tensor, Tensor)>,
    ) -> Result<Self> {
        if dirs.is_empty() {
            return Err(Error::Config("bank needs at least one direction".into()));
        }
        let k = dirs.len();
        let nets = dirs
            .into_iter()
            .enumerate()
            .map(|(i, (w1, b1, w2, b2))| {
                let expect = |t: &Tensor, shape: &[usize], name: &str| -> Result<()> {
                    if t.shape() != shape {
                        return Err(Error::ShapeMismatch {
                            op: "bank tensor",
                            lhs: t.shape().to_vec(),
                            rhs: shape.to_vec(),
                        });
                    }
                    let _ = name;
                    Ok(())
                };
                expect(&w1, &[hidden, latent_dim], "w1")?;
                expect(&b1, &[hidden], "b1")?;
                expect(&w2, &[latent_dim, hidden], "w2")?;
                expect(&b2, &[latent_dim], "b2")?;
                Ok(DirectionNet {
                    w1: Parameter::new(format!("dir{i}.w1"), w1),
                    b1: Parameter::new(format!("dir{i}.b1"), b1),
                    w2: Parameter::new(format!("dir{i}.w2"), w2),
                    b2: Parameter::new(format!("dir{i}.b2"), b2),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DirectionBank {
            dirs: nets,
            latent_dim,
            hidden,
            lambda_div: if k == 1 { 0.0 } else { lambda_div },
        })
    }

    /// The conditional direction NN_i(z), off-tape.
    pub fn direction_delta(&self, i: usize, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape);
        let zn = tape.leaf(z.clone());
        let delta = staged.delta(&mut tape, i, zn)?;
        Ok(tape.value(delta).clone())
    }

    /// F_i(z, alpha) = z + alpha * NN_i(z), off-tape. At alpha == 0 the
    /// original code is returned bit-for-bit.
    pub fn apply_direction(&self, i: usize, z: &Tensor, alpha: f64) -> Result<Tensor> {
        if alpha == 0.0 {
            if i >= self.k() {
                return Err(Error::IndexOutOfRange {
                    what: "direction",
                    index: i,
                    len: self.k(),
                });
            }
            return Ok(z.clone());
        }
        let mut tape = Tape::new();
        let (staged, _) = self.stage(&mut tape);
        let zn = tape.leaf(z.clone());
        let f = staged.shifted(&mut tape, i, zn, alpha)?;
        Ok(tape.value(f).clone())
    }
}

/// The linear baseline: a single trainable vector, F(z, a) = z + a * theta.
#[derive(Debug, Clone)]
pub struct LinearDirection {
    theta: Parameter,
    latent_dim: usize,
}

impl LinearDirection {
    /// Starts at theta = 0, so F is the identity at step 0.
    pub fn init(latent_dim: usize) -> Result<Self> {
        if latent_dim < 1 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        Ok(LinearDirection {
            theta: Parameter::new("theta", Tensor::zeros(vec![latent_dim])),
            latent_dim,
        })
    }

    pub fn from_tensor(theta: Tensor) -> Result<Self> {
        if theta.shape().len() != 1 {
            return Err(Error::InvalidShape {
                op: "linear direction",
                shape: theta.shape().to_vec(),
                reason: "theta must be a vector".into(),
            });
        }
        let latent_dim = theta.numel();
        Ok(LinearDirection {
            theta: Parameter::new("theta", theta),
            latent_dim,
        })
    }

    pub fn theta(&self) -> &Tensor {
        self.theta.value()
    }

    pub fn norm(&self) -> f64 {
        self.theta.value().norm()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// A trained steering model of either flavour, as evaluation consumes it.
#[derive(Debug, Clone)]
pub enum Model {
    Bank(DirectionBank),
    Linear(LinearDirection),
}

impl Model {
    pub fn num_directions(&self) -> usize {
        match self {
            Model::Bank(b) => b.k(),
            Model::Linear(_) => 1,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Model::Bank(b) => b.latent_dim(),
            Model::Linear(l) => l.latent_dim(),
        }
    }

    /// The direction displacement for a given latent code.
    pub fn delta(&self, i: usize, z: &Tensor) -> Result<Tensor> {
        match self {
            Model::Bank(b) => b.direction_delta(i, z),
            Model::Linear(l) => {
                if i != 0 {
                    return Err(Error::IndexOutOfRange {
                        what: "direction",
                        index: i,
                        len: 1,
                    });
                }
                Ok(l.theta.value().clone())
            }
        }
    }

    /// The shifted code z + alpha * delta_i(z); exactly z at alpha == 0.
    pub fn shifted(&self, i: usize, z: &Tensor, alpha: f64) -> Result<Tensor> {
        if alpha == 0.0 {
            if i >= self.num_directions() {
                return Err(Error::IndexOutOfRange {
                    what: "direction",
                    index: i,
                    len: self.num_directions(),
                });
            }
            return Ok(z.clone());
        }
        let delta = self.delta(i, z)?;
        combine(z, &[(alpha, &delta)])
    }

    /// z + a * delta_i(z) + b * delta_j(z) for pairwise interpolation.
    pub fn shifted_pair(
        &self,
        i: usize,
        j: usize,
        z: &Tensor,
        a: f64,
        b: f64,
    ) -> Result<Tensor> {
        let di = self.delta(i, z)?;
        let dj = self.delta(j, z)?;
        combine(z, &[(a, &di), (b, &dj)])
    }
}

pub(crate) fn combine(z: &Tensor, terms: &[(f64, &Tensor)]) -> Result<Tensor> {
    let mut out = z.data().to_vec();
    for (coef, t) in terms {
        if *coef == 0.0 {
            continue;
        }
        if t.shape() != z.shape() {
            return Err(Error::ShapeMismatch {
                op: "shifted code",
                lhs: z.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        for (o, d) in out.iter_mut().zip(t.data()) {
            *o += coef * d;
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

// ── Staging on a tape ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
struct StagedDir {
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
    b2: NodeId,
    latent_dim: usize,
    hidden: usize,
}

impl StagedDir {
    fn delta(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        let zc = tape.reshape(z, vec![self.latent_dim, 1])?;
        let h = tape.matmul(self.w1, zc)?;
        let h = tape.reshape(h, vec![self.hidden])?;
        let h = tape.add(h, self.b1)?;
        let h = tape.relu(h)?;
        let hc = tape.reshape(h, vec![self.hidden, 1])?;
        let o = tape.matmul(self.w2, hc)?;
        let o = tape.reshape(o, vec![self.latent_dim])?;
        tape.add(o, self.b2)
    }
}

#[derive(Debug, Clone)]
enum StagedDelta {
    Net(StagedDir),
    Fixed(NodeId),
}

/// A model's parameters staged onto one tape.
#[derive(Debug, Clone)]
pub struct StagedModel {
    deltas: Vec<StagedDelta>,
}

impl StagedModel {
    pub fn k(&self) -> usize {
        self.deltas.len()
    }

    pub fn delta(&self, tape: &mut Tape, i: usize, z: NodeId) -> Result<NodeId> {
        match self.deltas.get(i) {
            None => Err(Error::IndexOutOfRange {
                what: "direction",
                index: i,
                len: self.deltas.len(),
            }),
            Some(StagedDelta::Net(dir)) => dir.delta(tape, z),
            Some(StagedDelta::Fixed(theta)) => Ok(*theta),
        }
    }

    /// F_i(z, alpha) on the tape; returns the z node untouched at alpha == 0.
    pub fn shifted(&self, tape: &mut Tape, i: usize, z: NodeId, alpha: f64) -> Result<NodeId> {
        if alpha == 0.0 {
            if i >= self.k() {
                return Err(Error::IndexOutOfRange {
                    what: "direction",
                    index: i,
                    len: self.k(),
                });
            }
            return Ok(z);
        }
        let delta = self.delta(tape, i, z)?;
        let a = tape.scalar(alpha)?;
        let step = tape.mul(a, delta)?;
        tape.add(z, step)
    }
}

/// Anything the training loop can optimize.
pub trait Trainable: Sized + Clone + fmt::Debug {
    fn k(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn lambda_div(&self) -> f64;
    /// Stage all parameters on the tape; the returned node ids align with
    /// `params_mut()` order so gradients can be harvested back.
    fn stage(&self, tape: &mut Tape) -> (StagedModel, Vec<NodeId>);
    fn params_mut(&mut self) -> Vec<&mut Parameter>;
}

impl Trainable for DirectionBank {
    fn k(&self) -> usize {
        self.k()
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn lambda_div(&self) -> f64 {
        self.lambda_div
    }

    fn stage(&self, tape: &mut Tape) -> (StagedModel, Vec<NodeId>) {
        let mut ids = Vec::with_capacity(self.dirs.len() * 4);
        let deltas = self
            .dirs
            .iter()
            .map(|d| {
                let staged = StagedDir {
                    w1: tape.leaf(d.w1.value().clone()),
                    b1: tape.leaf(d.b1.value().clone()),
                    w2: tape.leaf(d.w2.value().clone()),
                    b2: tape.leaf(d.b2.value().clone()),
                    latent_dim: self.latent_dim,
                    hidden: self.hidden,
                };
                ids.extend([staged.w1, staged.b1, staged.w2, staged.b2]);
                StagedDelta::Net(staged)
            })
            .collect();
        (StagedModel { deltas }, ids)
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.dirs
            .iter_mut()
            .flat_map(|d| [&mut d.w1, &mut d.b1, &mut d.w2, &mut d.b2])
            .collect()
    }
}

impl Trainable for LinearDirection {
    fn k(&self) -> usize {
        1
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn lambda_div(&self) -> f64 {
        0.0
    }

    fn stage(&self, tape: &mut Tape) -> (StagedModel, Vec<NodeId>) {
        let theta = tape.leaf(self.theta.value().clone());
        (
            StagedModel {
                deltas: vec![StagedDelta::Fixed(theta)],
            },
            vec![theta],
        )
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.theta]
    }
}

// ── Loss construction ───────────────────────────────────────────────────

struct BuiltLosses {
    total: NodeId,
    cond_sum: NodeId,
    cond_per_dir: Vec<NodeId>,
    div: Option<NodeId>,
}

/// Build the full objective on one tape, sharing the shifted codes between
/// the conditional and diversity terms.
#[allow(clippy::too_many_arguments)]
fn build_losses(
    tape: &mut Tape,
    staged: &StagedModel,
    sgen: &StagedGenerator,
    gen: &Generator,
    scorer: ScorerKind,
    batch: &[Sample],
    detach_base: bool,
    abs_cosine: bool,
    lambda_div: f64,
) -> Result<BuiltLosses> {
    if batch.is_empty() {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    let k = staged.k();
    let z_nodes: Vec<NodeId> = batch.iter().map(|s| tape.leaf(s.z.clone())).collect();

    // shifted codes [sample][direction]
    let mut shifted = Vec::with_capacity(batch.len());
    for (si, sample) in batch.iter().enumerate() {
        let mut per_dir = Vec::with_capacity(k);
        for i in 0..k {
            per_dir.push(staged.shifted(tape, i, z_nodes[si], sample.alpha)?);
        }
        shifted.push(per_dir);
    }

    // regression targets score(G(z, y)) + alpha
    let targets: Vec<NodeId> = if detach_base {
        let mut t = Vec::with_capacity(batch.len());
        for sample in batch {
            let (img, mask) = gen.generate(&sample.z, sample.y)?;
            let base = scorer.score(&img, &mask)?;
            t.push(tape.scalar(base + sample.alpha)?);
        }
        t
    } else {
        let mut t = Vec::with_capacity(batch.len());
        for (si, sample) in batch.iter().enumerate() {
            let rendered = sgen.generate(tape, z_nodes[si], sample.y)?;
            let base = scorer.score_on_tape(tape, &rendered)?;
            let a = tape.scalar(sample.alpha)?;
            t.push(tape.add(base, a)?);
        }
        t
    };

    // conditional loss per direction: mean over the batch of the squared
    // residual between the shifted image's score and the target
    let mut cond_per_dir = Vec::with_capacity(k);
    for dir in 0..k {
        let mut squares = Vec::with_capacity(batch.len());
        for (si, sample) in batch.iter().enumerate() {
            let rendered = sgen.generate(tape, shifted[si][dir], sample.y)?;
            let s_mod = scorer.score_on_tape(tape, &rendered)?;
            let resid = tape.sub(s_mod, targets[si])?;
            squares.push(tape.square(resid)?);
        }
        let stacked = tape.concat(&squares)?;
        cond_per_dir.push(tape.mean(stacked)?);
    }

    let mut cond_sum = cond_per_dir[0];
    for &c in &cond_per_dir[1..] {
        cond_sum = tape.add(cond_sum, c)?;
    }

    // diversity: mean over the batch of the ordered-pair cosine sum
    let div = if k >= 2 && lambda_div > 0.0 {
        let mut per_sample = Vec::with_capacity(batch.len());
        for row in &shifted {
            let mut pair_sum: Option<NodeId> = None;
            for i in 0..k {
                for j in 0..k {
                    if i == j {
                        continue;
                    }
                    let mut c = tape.cosine_similarity(row[i], row[j])?;
                    if abs_cosine {
                        c = tape.abs(c)?;
                    }
                    pair_sum = Some(match pair_sum {
                        None => c,
                        Some(acc) => tape.add(acc, c)?,
                    });
                }
            }
            per_sample.push(pair_sum.expect("k >= 2 yields pairs"));
        }
        let stacked = tape.concat(&per_sample)?;
        Some(tape.mean(stacked)?)
    } else {
        None
    };

    let total = match div {
        Some(d) => {
            let lam = tape.scalar(lambda_div)?;
            let weighted = tape.mul(lam, d)?;
            tape.add(cond_sum, weighted)?
        }
        None => cond_sum,
    };

    Ok(BuiltLosses {
        total,
        cond_sum,
        cond_per_dir,
        div,
    })
}

/// The conditional loss of direction `i` over a batch, off-tape.
pub fn loss_cond<M: Trainable>(
    model: &M,
    i: usize,
    batch: &[Sample],
    gen: &Generator,
    scorer: ScorerKind,
    detach_base: bool,
) -> Result<f64> {
    if i >= model.k() {
        return Err(Error::IndexOutOfRange {
            what: "direction",
            index: i,
            len: model.k(),
        });
    }
    let mut tape = Tape::new();
    let (staged, _) = model.stage(&mut tape);
    let sgen = gen.stage(&mut tape);
    let built = build_losses(
        &mut tape, &staged, &sgen, gen, scorer, batch, detach_base, false, 0.0,
    )?;
    tape.value(built.cond_per_dir[i]).as_scalar()
}

/// The diversity loss over a batch of (z, alpha) draws: the ordered-pair
/// sum of cosine similarities between shifted codes, averaged over the
/// batch. Requires k >= 2.
pub fn loss_div<M: Trainable>(
    model: &M,
    batch: &[(Tensor, f64)],
    abs_cosine: bool,
) -> Result<f64> {
    if model.k() < 2 {
        return Err(Error::Config("loss_div needs at least 2 directions".into()));
    }
    if batch.is_empty() {
        return Err(Error::Config("loss over an empty batch".into()));
    }
    let mut tape = Tape::new();
    let (staged, _) = model.stage(&mut tape);
    let k = model.k();
    let mut per_sample = Vec::with_capacity(batch.len());
    for (z, alpha) in batch {
        let zn = tape.leaf(z.clone());
        let row: Vec<NodeId> = (0..k)
            .map(|i| staged.shifted(&mut tape, i, zn, *alpha))
            .collect::<Result<_>>()?;
        let mut pair_sum: Option<NodeId> = None;
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let mut c = tape.cosine_similarity(row[i], row[j])?;
                if abs_cosine {
                    c = tape.abs(c)?;
                }
                pair_sum = Some(match pair_sum {
                    None => c,
                    Some(acc) => tape.add(acc, c)?,
                });
            }
        }
        per_sample.push(pair_sum.expect("k >= 2 yields pairs"));
    }
    let stacked = tape.concat(&per_sample)?;
    let mean = tape.mean(stacked)?;
    tape.value(mean).as_scalar()
}

// ── Training loop ───────────────────────────────────────────────────────

/// Per-run bookkeeping: histories have length `step`.
#[derive(Debug, Clone, Default)]
pub struct TrainState {
    pub step: usize,
    pub loss_cond_history: Vec<f64>,
    pub loss_div_history: Vec<f64>,
    pub loss_total_history: Vec<f64>,
    /// Final position of the training sample stream, for diagnostics.
    pub rng_word_pos: u128,
}

/// Training failed mid-run; carries the model as it stood before the
/// failing step, so the caller can checkpoint the last good state.
#[derive(Debug, ThisError)]
#[error("training aborted at step {step}: {source}")]
pub struct TrainAbort<M: fmt::Debug> {
    pub step: usize,
    pub last_good: M,
    pub state: TrainState,
    pub source: Error,
}

/// Everything that can go wrong in a training run.
#[derive(Debug, ThisError)]
pub enum TrainError<M: fmt::Debug> {
    /// The configuration was rejected before any step ran.
    #[error(transparent)]
    Config(Error),
    /// A step failed; the last good model is attached.
    #[error(transparent)]
    Aborted(Box<TrainAbort<M>>),
}

fn train_loop<M: Trainable>(
    mut model: M,
    config: &TrainConfig,
    gen: &Generator,
) -> std::result::Result<(M, TrainState), Box<TrainAbort<M>>> {
    let mut stream = RandomStream::new(config.seed, domain::TRAIN);
    let mut state = TrainState::default();
    let hyper = AdamHyper::with_lr(config.lr);
    let lambda = model.lambda_div();

    for step in 0..config.steps {
        let batch: Vec<Sample> = (0..config.batch_size)
            .map(|_| draw_sample(&mut stream, config, gen))
            .collect();
        match train_step(&mut model, &batch, config, gen, &hyper, lambda) {
            Ok((cond, div, total)) => {
                state.step += 1;
                state.loss_cond_history.push(cond);
                state.loss_div_history.push(div);
                state.loss_total_history.push(total);
            }
            Err(source) => {
                state.rng_word_pos = stream.word_pos();
                return Err(Box::new(TrainAbort {
                    step,
                    last_good: model,
                    state,
                    source,
                }));
            }
        }
    }
    state.rng_word_pos = stream.word_pos();
    Ok((model, state))
}

fn train_step<M: Trainable>(
    model: &mut M,
    batch: &[Sample],
    config: &TrainConfig,
    gen: &Generator,
    hyper: &AdamHyper,
    lambda: f64,
) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let (staged, param_ids) = model.stage(&mut tape);
    let sgen = gen.stage(&mut tape);
    let built = build_losses(
        &mut tape,
        &staged,
        &sgen,
        gen,
        config.scorer,
        batch,
        config.detach_base_score,
        config.abs_cosine,
        lambda,
    )?;
    let cond = tape.value(built.cond_sum).as_scalar()?;
    let div = match built.div {
        Some(d) => tape.value(d).as_scalar()?,
        None => 0.0,
    };
    let total = tape.value(built.total).as_scalar()?;

    let grads = tape.backward(built.total)?;
    harvest(model, &param_ids, &grads)?;
    adam_step(model.params_mut(), hyper)?;
    Ok((cond, div, total))
}

fn harvest<M: Trainable>(model: &mut M, ids: &[NodeId], grads: &Gradients) -> Result<()> {
    let params = model.params_mut();
    debug_assert_eq!(params.len(), ids.len());
    for (p, &id) in params.into_iter().zip(ids) {
        if let Some(g) = grads.wrt(id) {
            p.accumulate_grad(g)?;
        }
    }
    Ok(())
}

/// Train k conditional directions from scratch. `steps == 0` returns the
/// freshly initialized bank untouched.
pub fn train(
    config: &TrainConfig,
    gen: &Generator,
) -> std::result::Result<(DirectionBank, TrainState), TrainError<DirectionBank>> {
    let bank = DirectionBank::init(
        config.seed,
        config.k,
        gen.weights().latent_dim(),
        config.hidden,
        config.lambda_div,
    )
    .map_err(TrainError::Config)?;
    train_loop(bank, config, gen).map_err(TrainError::Aborted)
}

/// Train the single-vector linear baseline: identical loop, but
/// F(z, alpha) = z + alpha * theta with theta initialized to zero.
pub fn train_linear_baseline(
    config: &TrainConfig,
    gen: &Generator,
) -> std::result::Result<(LinearDirection, TrainState), TrainError<LinearDirection>> {
    let model =
        LinearDirection::init(gen.weights().latent_dim()).map_err(TrainError::Config)?;
    // the baseline is a single direction: no diversity term by contract
    let mut cfg = config.clone();
    cfg.k = 1;
    cfg.lambda_div = 0.0;
    train_loop(model, &cfg, gen).map_err(TrainError::Aborted)
}

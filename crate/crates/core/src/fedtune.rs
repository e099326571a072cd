//! Federated rounds: parameter and sample share exchange, the secure head
//! step, double-masked gradient upload and aggregation at the server.
//!
//! In every client session the server is party 0 and the client is party 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dealer::{Dealer, DealerError, SOFTMAX_CLIP};
use crate::nn::{self, Approx, HeadDims, SecureHead};
use crate::oracle::{Oracle, PlainHead, Rounding};
use crate::proto::{run_pair, ProtoError};
use crate::ring::{encode_fixed, RingConfig, RingError, RingTensor, RingWord, TruncMode};
use crate::runner::Backend;
use crate::shares::{split, AdditiveShare};
use crate::transport::{tcp_pair, Channel, MsgType, TransportError};

#[derive(Debug, Error)]
pub enum FedError {
    #[error(transparent)]
    Dealer(#[from] DealerError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("no mask seed for clients {0} and {1}")]
    MissingSeed(usize, usize),
    #[error("missing upload from client {0}")]
    MissingUpload(usize),
    #[error("{0}")]
    Config(String),
}

/// Public random projection followed by tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBackbone {
    pub raw_dim: usize,
    pub feat_dim: usize,
    proj: Vec<f64>,
}

impl FrozenBackbone {
    pub fn new(raw_dim: usize, feat_dim: usize, seed: u64) -> Self {
        let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0xbacb_0e00);
        let sd = 1.0 / (raw_dim as f64).sqrt();
        let proj = (0..raw_dim * feat_dim).map(|_| r.gen_range(-1.0..1.0) * sd * 3f64.sqrt()).collect();
        FrozenBackbone { raw_dim, feat_dim, proj }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        (0..self.feat_dim).map(|j| (0..self.raw_dim).map(|i| self.proj[j * self.raw_dim + i] * x[i]).sum::<f64>().tanh()).collect()
    }
}

/// Samples with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.y.iter().max().map_or(0, |m| m + 1)
    }

    /// Two classes separated by a margin along a random direction.
    pub fn synthetic(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0xda7a);
        let mut dir: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            let mut v: Vec<f64> = (0..dim).map(|_| r.gen_range(-0.5..0.5)).collect();
            let proj: f64 = v.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let target = if label == 1 { r.gen_range(0.3..1.0) } else { -r.gen_range(0.3..1.0) };
            v.iter_mut().zip(&dir).for_each(|(a, d)| *a += (target - proj) * d);
            x.push(v);
            y.push(label);
        }
        Dataset { dim, x, y }
    }

    /// Parses `f1,f2,...,label` lines; blank lines and `#` comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Dataset, FedError> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || FedError::Config(format!("dataset line {}: {line}", n + 1));
            let (label, feats) = fields.split_last().ok_or_else(bad)?;
            y.push(label.parse::<usize>().map_err(|_| bad())?);
            x.push(feats.iter().map(|f| f.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?);
        }
        let dim = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != dim) || dim == 0 {
            return Err(FedError::Config("dataset rows have differing or zero width".into()));
        }
        Ok(Dataset { dim, x, y })
    }

    /// Round-robin split into `n` client datasets.
    pub fn partition(&self, n: usize) -> Vec<Dataset> {
        (0..n)
            .map(|c| {
                let idx: Vec<usize> = (c..self.len()).step_by(n).collect();
                Dataset { dim: self.dim, x: idx.iter().map(|&i| self.x[i].clone()).collect(), y: idx.iter().map(|&i| self.y[i]).collect() }
            })
            .collect()
    }
}

/// Truncation per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncSchedule {
    Fixed(TruncMode),
    /// Local truncation before round `switch`, interactive from it on.
    Staged {
        switch: usize,
    },
}

impl TruncSchedule {
    pub fn mode(self, round: usize) -> TruncMode {
        match self {
            TruncSchedule::Fixed(m) => m,
            TruncSchedule::Staged { switch } if round < switch => TruncMode::Local,
            TruncSchedule::Staged { .. } => TruncMode::Interactive,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FedConfig {
    pub cfg: RingConfig,
    pub clients: usize,
    pub rounds: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
    pub feat_dim: usize,
    pub trunc: TruncSchedule,
    pub approx: Approx,
    pub seed: u64,
    pub backend: Backend,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            cfg: RingConfig::default(),
            clients: 2,
            rounds: 20,
            batch: 8,
            lr: 1.0,
            hidden: 8,
            feat_dim: 16,
            trunc: TruncSchedule::Fixed(TruncMode::Interactive),
            approx: Approx::default(),
            seed: 1,
            backend: Backend::Mem,
        }
    }
}

impl FedConfig {
    /// Reads `key = value` lines (clients, rounds, batch, lr, hidden, features,
    /// trunc, switch, seed, m_exp, m_recip, m_softmax); unknown keys are errors.
    pub fn parse_manifest(text: &str) -> Result<FedConfig, FedError> {
        let mut c = FedConfig::default();
        let mut trunc = "it".to_string();
        let mut switch = c.rounds / 2;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| FedError::Config(format!("manifest line: {line}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || v.parse::<usize>().map_err(|_| FedError::Config(format!("{k} = {v}")));
            match k {
                "clients" => c.clients = num()?,
                "rounds" => c.rounds = num()?,
                "batch" => c.batch = num()?,
                "hidden" => c.hidden = num()?,
                "features" => c.feat_dim = num()?,
                "switch" => switch = num()?,
                "m_exp" => c.approx.m_exp = num()?,
                "m_recip" => c.approx.m_recip = num()?,
                "m_softmax" => c.approx.m_softmax = num()?,
                "seed" => c.seed = v.parse().map_err(|_| FedError::Config(format!("{k} = {v}")))?,
                "lr" => c.lr = v.parse().map_err(|_| FedError::Config(format!("{k} = {v}")))?,
                "trunc" => trunc = v.to_string(),
                _ => return Err(FedError::Config(format!("unknown manifest key {k}"))),
            }
        }
        c.trunc = parse_schedule(&trunc, switch)?;
        Ok(c)
    }
}

pub fn parse_schedule(s: &str, switch: usize) -> Result<TruncSchedule, FedError> {
    match s {
        "staged" => Ok(TruncSchedule::Staged { switch }),
        other => other.parse::<TruncMode>().map(TruncSchedule::Fixed).map_err(FedError::Config),
    }
}

/// [[g]]_1 as uploaded to the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedGradient<W> {
    pub values: RingTensor<W>,
}

/// Pairwise seeds for all client pairs i < j.
pub fn mask_seeds<W: RingWord>(d: &mut Dealer<W>, n: usize) -> Vec<Vec<Option<[u8; 32]>>> {
    let mut s = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let seed = d.gen_mask_seed(i, j);
            s[i][j] = Some(seed);
            s[j][i] = Some(seed);
        }
    }
    s
}

fn prg_words<W: RingWord>(seed: &[u8; 32], round: usize, n: usize) -> Vec<W> {
    let mut r = ChaCha20Rng::from_seed(*seed);
    r.set_stream(round as u64);
    (0..n).map(|_| W::random(&mut r)).collect()
}

/// ⟨g⟩_1 + Σ_{j>i} PRG(s_ij, t) − Σ_{j<i} PRG(s_ji, t).
pub fn mask_upload<W: RingWord>(
    client: usize,
    grad_share: &RingTensor<W>,
    round: usize,
    seeds: &[Vec<Option<[u8; 32]>>],
) -> Result<MaskedGradient<W>, FedError> {
    let n = seeds.len();
    if n < 2 {
        return Err(FedError::Config("masking needs at least two clients".into()));
    }
    let mut v = grad_share.clone();
    for j in 0..n {
        if j == client {
            continue;
        }
        let seed = seeds[client][j].ok_or(FedError::MissingSeed(client, j))?;
        let m: Vec<W> = prg_words(&seed, round, v.len());
        for (a, b) in v.data.iter_mut().zip(m) {
            *a = if j > client { a.wrapping_add(&b) } else { a.wrapping_sub(&b) };
        }
    }
    Ok(MaskedGradient { values: v })
}

/// Signed floor division of every element by n.
pub fn ring_div<W: RingWord>(t: &RingTensor<W>, n: usize) -> RingTensor<W> {
    t.map(|w| W::from_i64(w.as_i64().div_euclid(n as i64)))
}

/// (1/N)·Σ_i (⟨g_i⟩_0 + [[g_i]]_1).
pub fn aggregate<W: RingWord>(own: &[RingTensor<W>], uploads: &[Option<MaskedGradient<W>>]) -> Result<RingTensor<W>, FedError> {
    let n = own.len();
    let mut acc = own.first().ok_or_else(|| FedError::Config("no clients".into()))?.map(|_| W::zero());
    for i in 0..n {
        let up = uploads.get(i).and_then(Option::as_ref).ok_or(FedError::MissingUpload(i))?;
        acc = acc.add(&own[i]).add(&up.values);
    }
    Ok(ring_div(&acc, n))
}

/// θ − floor(lr·g) in plaintext fixed point.
pub fn apply_update<W: RingWord>(theta: &RingTensor<W>, g: &RingTensor<W>, lr: f64, cfg: RingConfig) -> Result<RingTensor<W>, FedError> {
    let c: W = encode_fixed(lr, cfg)?;
    Ok(theta.sub(&g.map(|w| w.wrapping_mul(&c)).sar(cfg.s).with_scale(cfg.s)))
}

fn derive_seed(seed: u64, tag: &[u8], a: usize, b: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag);
    h.update((a as u64).to_le_bytes());
    h.update((b as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    ParamShare,
    SampleShare,
    Secure,
    AggUpload,
}

/// Collapses a frame type sequence into runs of step kinds.
pub fn step_kinds(types: &[MsgType]) -> Vec<Step> {
    let mut out: Vec<Step> = Vec::new();
    for t in types {
        let s = match t {
            MsgType::ParamShare => Step::ParamShare,
            MsgType::SampleShare => Step::SampleShare,
            MsgType::AggUpload => Step::AggUpload,
            _ => Step::Secure,
        };
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

/// Per-round record.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub trunc: TruncMode,
    pub accuracy: f64,
    /// Upload payload bytes per client.
    pub upload_bytes: Vec<u64>,
    /// Total payload bits of every client session.
    pub session_bits: Vec<u64>,
    /// Step kinds seen on each client session, in order.
    pub steps: Vec<Vec<Step>>,
}

impl RoundLog {
    pub fn line(&self) -> String {
        let up: Vec<String> = self.upload_bytes.iter().map(u64::to_string).collect();
        let bits: Vec<String> = self.session_bits.iter().map(u64::to_string).collect();
        format!(
            "round={} trunc={} accuracy={:.4} upload_bytes={} session_bits={}",
            self.round,
            if self.trunc == TruncMode::Local { "lt" } else { "it" },
            self.accuracy,
            up.join(","),
            bits.join(",")
        )
    }
}

#[derive(Debug, Clone)]
pub struct FedRun<W> {
    pub params: RingTensor<W>,
    pub logs: Vec<RoundLog>,
    pub final_accuracy: f64,
}

/// Encoded features and one-hot labels of rows `idx`.
fn batch_tensors<W: RingWord>(
    data: &Dataset,
    bb: &FrozenBackbone,
    idx: &[usize],
    k: usize,
    cfg: RingConfig,
) -> Result<(RingTensor<W>, RingTensor<W>), FedError> {
    let feats: Vec<f64> = idx.iter().flat_map(|&i| bb.features(&data.x[i])).collect();
    let oh: Vec<f64> = idx.iter().flat_map(|&i| (0..k).map(move |c| if c == data.y[i] { 1.0 } else { 0.0 })).collect();
    Ok((RingTensor::from_reals(&feats, &[idx.len(), bb.feat_dim], cfg)?, RingTensor::from_reals(&oh, &[idx.len(), k], cfg)?))
}

fn batch_indices(n: usize, b: usize, round: usize) -> Vec<usize> {
    (0..b).map(|j| (round * b + j) % n).collect()
}

/// Initial head parameters, uniform with fan-in scaling.
pub fn init_params<W: RingWord>(dims: HeadDims, cfg: RingConfig, seed: u64) -> Result<RingTensor<W>, FedError> {
    let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0x1417);
    let mut v = Vec::new();
    for (i, s) in nn::param_shapes(dims).iter().enumerate() {
        let n: usize = s.iter().product();
        let fan_in = if i % 2 == 0 { s[1] } else { 1 };
        let bound = if i % 2 == 0 { 1.0 / (fan_in as f64).sqrt() } else { 0.0 };
        v.extend((0..n).map(|_| if bound > 0.0 { r.gen_range(-bound..bound) } else { 0.0 }));
    }
    Ok(RingTensor::from_reals(&v, &[v.len()], cfg)?)
}

/// Train accuracy of decoded parameters with exact float activations.
pub fn accuracy<W: RingWord>(params: &RingTensor<W>, dims: HeadDims, data: &Dataset, bb: &FrozenBackbone) -> f64 {
    let p: Vec<f64> = params.to_reals();
    let (d, h, k) = (dims.d_in, dims.hidden, dims.classes);
    let (w1, rest) = p.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(k * h);
    let mut ok = 0;
    for (x, &y) in data.x.iter().zip(&data.y) {
        let f = bb.features(x);
        let a: Vec<f64> = (0..h).map(|j| ((0..d).map(|i| w1[j * d + i] * f[i]).sum::<f64>() + b1[j]).tanh()).collect();
        let z: Vec<f64> = (0..k).map(|j| (0..h).map(|i| w2[j * h + i] * a[i]).sum::<f64>() + b2[j]).collect();
        let arg = (0..k).max_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap()).unwrap_or(0);
        ok += (arg == y) as usize;
    }
    ok as f64 / data.len().max(1) as f64
}

pub fn dims_for(c: &FedConfig, classes: usize) -> HeadDims {
    HeadDims { d_in: c.feat_dim, hidden: c.hidden, classes }
}

fn channels(b: Backend) -> Result<(Channel, Channel), TransportError> {
    match b {
        Backend::Mem => Ok(Channel::mem_pair()),
        Backend::Tcp => tcp_pair(),
    }
}

struct SessionOut<W> {
    /// Server: ⟨g⟩_0; client: ⟨g⟩_1.
    grad: RingTensor<W>,
    upload: Option<MaskedGradient<W>>,
    upload_bytes: u64,
    bits: u64,
    steps: Vec<Step>,
}

/// One client session of round `t`: exchange, secure step, masked upload.
#[allow(clippy::too_many_arguments)]
fn client_session<W: RingWord>(
    c: &FedConfig,
    dims: HeadDims,
    client: usize,
    round: usize,
    theta: &RingTensor<W>,
    x: &RingTensor<W>,
    onehot: &RingTensor<W>,
    seeds: &[Vec<Option<[u8; 32]>>],
) -> Result<(SessionOut<W>, SessionOut<W>), FedError> {
    let cfg = c.cfg;
    let mode = c.trunc.mode(round);
    let mut dealer = Dealer::<W>::from_u64(derive_seed(c.seed, b"round-keys", client, round), cfg)?;
    let (q0, q1) = nn::gen_step_keys(&mut dealer, dims, x.shape[0], c.approx)?;
    let queues = [std::sync::Mutex::new(Some(q0)), std::sync::Mutex::new(Some(q1))];
    let session_seed = derive_seed(c.seed, b"session", client, round);
    let (r0, r1) = run_pair(channels(c.backend)?, cfg, mode, session_seed, |sess| -> Result<SessionOut<W>, FedError> {
        let party = sess.party;
        sess.chan.record_transcript();
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(session_seed, b"split", party as usize, 0));
        sess.chan.set_label("exchange");
        // (i) ⟨ω⟩_1 to the client, ⟨x⟩_0 and ⟨y⟩_0 to the server
        let (w_share, x_share, y_share) = if party == 0 {
            let (w0, w1) = split(theta, &mut rng);
            sess.chan.send_words(MsgType::ParamShare, &w1.values.data)?;
            let xd: Vec<W> = sess.chan.recv_words(MsgType::SampleShare, x.len())?;
            let yd: Vec<W> = sess.chan.recv_words(MsgType::SampleShare, onehot.len())?;
            let xt = RingTensor { data: xd, ..x.map(|_| W::zero()) };
            let yt = RingTensor { data: yd, ..onehot.map(|_| W::zero()) };
            (w0.values, xt, yt)
        } else {
            let wd: Vec<W> = sess.chan.recv_words(MsgType::ParamShare, theta.len())?;
            let (x0, x1) = split(x, &mut rng);
            let (y0, y1) = split(onehot, &mut rng);
            sess.chan.send_words(MsgType::SampleShare, &x0.values.data)?;
            sess.chan.send_words(MsgType::SampleShare, &y0.values.data)?;
            (RingTensor { data: wd, ..theta.clone() }, x1.values, y1.values)
        };
        // (ii)
        sess.chan.set_label("train");
        let params = nn::unflatten(&w_share, dims)?;
        let mut head = SecureHead::new(party, &params);
        let mut q = queues[party as usize].lock().expect("queue lock").take().expect("queue taken once");
        let g = nn::head_step(sess, &mut q, &mut head, &AdditiveShare::new(party, x_share), &AdditiveShare::new(party, y_share))?;
        let grad = g.flatten();
        // (iii)
        sess.chan.set_label("upload");
        let upload = if party == 1 {
            let m = mask_upload(client, &grad, round, seeds)?;
            sess.chan.send_words(MsgType::AggUpload, &m.values.data)?;
            m
        } else {
            let d: Vec<W> = sess.chan.recv_words(MsgType::AggUpload, grad.len())?;
            MaskedGradient { values: RingTensor { data: d, ..grad.clone() } }
        };
        sess.chan.set_label("");
        let rep = sess.report();
        let types = sess.chan.transcript().map(|t| t.types.clone()).unwrap_or_default();
        let up = rep.total("upload");
        Ok(SessionOut {
            grad,
            upload: Some(upload),
            upload_bytes: up.bytes_sent + up.bytes_received,
            bits: rep.total("").payload_bits(),
            steps: step_kinds(&types),
        })
    });
    Ok((r0?, r1?))
}

/// Per-client gradients and uploads of one round, as seen by the server and the clients.
pub struct RoundResult<W> {
    pub server_shares: Vec<RingTensor<W>>,
    pub client_shares: Vec<RingTensor<W>>,
    pub uploads: Vec<Option<MaskedGradient<W>>>,
    pub upload_bytes: Vec<u64>,
    pub session_bits: Vec<u64>,
    pub steps: Vec<Vec<Step>>,
}

/// Steps (i)–(iii) of round `t` for every client.
pub fn secure_round<W: RingWord>(
    c: &FedConfig,
    dims: HeadDims,
    parts: &[Dataset],
    bb: &FrozenBackbone,
    theta: &RingTensor<W>,
    round: usize,
    seeds: &[Vec<Option<[u8; 32]>>],
) -> Result<RoundResult<W>, FedError> {
    let mut res = RoundResult { server_shares: vec![], client_shares: vec![], uploads: vec![], upload_bytes: vec![], session_bits: vec![], steps: vec![] };
    for (i, part) in parts.iter().enumerate() {
        let idx = batch_indices(part.len(), c.batch, round);
        let (x, oh) = batch_tensors::<W>(part, bb, &idx, dims.classes, c.cfg)?;
        let (s, cl) = client_session(c, dims, i, round, theta, &x, &oh, seeds)?;
        res.server_shares.push(s.grad);
        res.client_shares.push(cl.grad);
        res.uploads.push(s.upload);
        res.upload_bytes.push(s.upload_bytes);
        res.session_bits.push(s.bits);
        res.steps.push(s.steps);
    }
    Ok(res)
}

/// Full secure run over `data`.
pub fn run_secure<W: RingWord>(c: &FedConfig, data: &Dataset) -> Result<FedRun<W>, FedError> {
    check(c, data)?;
    let dims = dims_for(c, data.classes());
    let bb = FrozenBackbone::new(data.dim, c.feat_dim, c.seed);
    let parts = data.partition(c.clients);
    let mut dealer = Dealer::<W>::from_u64(derive_seed(c.seed, b"mask-seeds", 0, 0), c.cfg)?;
    let seeds = mask_seeds(&mut dealer, c.clients);
    let mut theta = init_params::<W>(dims, c.cfg, c.seed)?;
    let mut logs = Vec::with_capacity(c.rounds);
    for t in 0..c.rounds {
        let r = secure_round(c, dims, &parts, &bb, &theta, t, &seeds)?;
        let g = aggregate(&r.server_shares, &r.uploads)?;
        theta = apply_update(&theta, &g, c.lr, c.cfg)?;
        logs.push(RoundLog {
            round: t + 1,
            trunc: c.trunc.mode(t),
            accuracy: accuracy(&theta, dims, data, &bb),
            upload_bytes: r.upload_bytes,
            session_bits: r.session_bits,
            steps: r.steps,
        });
    }
    let final_accuracy = accuracy(&theta, dims, data, &bb);
    Ok(FedRun { params: theta, logs, final_accuracy })
}

/// The same rounds computed in plaintext fixed point with floor truncation.
pub fn run_plain<W: RingWord>(c: &FedConfig, data: &Dataset) -> Result<FedRun<W>, FedError> {
    check(c, data)?;
    let dims = dims_for(c, data.classes());
    let bb = FrozenBackbone::new(data.dim, c.feat_dim, c.seed);
    let parts = data.partition(c.clients);
    let o = Oracle::new(c.cfg.s, Rounding::Floor);
    let mut theta = init_params::<W>(dims, c.cfg, c.seed)?;
    let mut logs = Vec::with_capacity(c.rounds);
    let to_i = |t: &RingTensor<W>| t.data.iter().map(|w| w.as_i64() as i128).collect::<Vec<_>>();
    for t in 0..c.rounds {
        let head = PlainHead::from_flat(dims.d_in, dims.hidden, dims.classes, &to_i(&theta));
        let mut acc = theta.map(|_| W::zero());
        for part in &parts {
            let idx = batch_indices(part.len(), c.batch, t);
            let (x, oh) = batch_tensors::<W>(part, &bb, &idx, dims.classes, c.cfg)?;
            let a = c.approx;
            let g = o.head_grads(&head, &to_i(&x), &to_i(&oh), idx.len(), a.m_exp, a.m_recip, a.m_softmax, SOFTMAX_CLIP);
            acc = acc.add(&RingTensor { data: g.iter().map(|&v| W::from_i64(v as i64)).collect(), ..acc.clone() });
        }
        let g = ring_div(&acc, c.clients);
        theta = apply_update(&theta, &g, c.lr, c.cfg)?;
        logs.push(RoundLog {
            round: t + 1,
            trunc: c.trunc.mode(t),
            accuracy: accuracy(&theta, dims, data, &bb),
            upload_bytes: vec![],
            session_bits: vec![],
            steps: vec![],
        });
    }
    let final_accuracy = accuracy(&theta, dims, data, &bb);
    Ok(FedRun { params: theta, logs, final_accuracy })
}

fn check(c: &FedConfig, data: &Dataset) -> Result<(), FedError> {
    if c.clients < 2 {
        return Err(FedError::Config("at least two clients are required".into()));
    }
    if c.batch == 0 || data.len() < c.clients {
        return Err(FedError::Config("empty batch or fewer samples than clients".into()));
    }
    if data.classes() < 2 {
        return Err(FedError::Config("dataset needs at least two classes".into()));
    }
    Ok(())
}

impl FedError {
    pub fn is_transport(&self) -> bool {
        match self {
            FedError::Transport(_) => true,
            FedError::Proto(p) => crate::runner::proto_transport(p),
            _ => false,
        }
    }
}

//! Offline phase: a deterministic trusted dealer issuing gate keys.

pub mod bundle;
pub mod dcf;
pub mod keys;
mod queue;

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ring::{encode_fixed, RingConfig, RingError, RingTensor, RingWord};
use crate::shares::{MaskShare, OffsetId};
use dcf::Group;
pub use keys::*;
pub use queue::{push_pair, KeyError, KeyQueue};

#[derive(Debug, Error, PartialEq)]
pub enum DealerError {
    #[error("unknown offset {0:?}")]
    UnknownOffset(OffsetId),
    #[error("offset {0:?} is already bound to another gate")]
    OffsetReuse(OffsetId),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Ring(#[from] RingError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DealerConfig {
    pub seed: [u8; 32],
    /// Seed length of the comparison keys, in bits.
    pub lambda: u32,
    pub cfg: RingConfig,
}

impl DealerConfig {
    pub fn new(seed: [u8; 32], cfg: RingConfig) -> Self {
        DealerConfig { seed, lambda: 128, cfg }
    }

    /// Expands a short seed with SHA-256.
    pub fn from_u64(seed: u64, cfg: RingConfig) -> Self {
        let h = Sha256::digest(seed.to_le_bytes());
        Self::new(h.into(), cfg)
    }
}

pub type KeyPair<K> = (K, K);

/// Default clipping range of the softmax input.
pub const SOFTMAX_CLIP: (f64, f64) = (-4.0, 12.0);

/// Issues keys in request order. Request sequences that are equal produce
/// equal keys.
pub struct Dealer<W> {
    conf: DealerConfig,
    gates: u64,
    next_id: u64,
    offsets: HashMap<OffsetId, RingTensor<W>>,
    used_in: HashSet<OffsetId>,
    used_out: HashSet<OffsetId>,
}

type T<W> = RingTensor<W>;

fn split_t<W: RingWord>(rng: &mut ChaCha20Rng, v: &T<W>) -> (T<W>, T<W>) {
    let r = RingTensor::random(&v.shape, v.cfg, rng).with_scale(v.scale);
    (v.sub(&r), r)
}

fn split_opt<W: RingWord>(rng: &mut ChaCha20Rng, v: Option<&T<W>>) -> (Option<T<W>>, Option<T<W>>) {
    match v {
        Some(v) => {
            let (a, b) = split_t(rng, v);
            (Some(a), Some(b))
        }
        None => (None, None),
    }
}

fn low_mask<W: RingWord>() -> u64 {
    if W::WIDTH == 64 {
        u64::MAX >> 1
    } else {
        (1u64 << (W::WIDTH - 1)) - 1
    }
}

/// A fixed-point value in (0, 1) drawn uniformly from the 2^s − 1 grid points.
fn unit_fixed<W: RingWord>(rng: &mut ChaCha20Rng, cfg: RingConfig) -> W {
    W::from_u64(rng.gen_range(1..(1u64 << cfg.s)))
}

impl<W: RingWord> Dealer<W> {
    pub fn new(conf: DealerConfig) -> Result<Self, DealerError> {
        conf.cfg.for_word::<W>()?;
        Ok(Dealer { conf, gates: 0, next_id: 1, offsets: HashMap::new(), used_in: HashSet::new(), used_out: HashSet::new() })
    }

    pub fn from_u64(seed: u64, cfg: RingConfig) -> Result<Self, DealerError> {
        Self::new(DealerConfig::from_u64(seed, cfg))
    }

    pub fn cfg(&self) -> RingConfig {
        self.conf.cfg
    }

    fn derive_rng(&self, tag: &[u8], n: u64, kind: u8) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.conf.seed);
        h.update(tag);
        h.update(n.to_le_bytes());
        h.update([kind]);
        ChaCha20Rng::from_seed(h.finalize().into())
    }

    fn gate_rng(&mut self, kind: GateKind) -> ChaCha20Rng {
        self.gates += 1;
        self.derive_rng(b"gate", self.gates, kind as u8)
    }

    fn register(&mut self, values: T<W>) -> OffsetId {
        let id = OffsetId(self.next_id);
        self.next_id += 1;
        self.offsets.insert(id, values);
        id
    }

    /// A new uniformly random offset.
    pub fn fresh_offset(&mut self, shape: &[usize]) -> OffsetId {
        let mut rng = self.derive_rng(b"offset", self.next_id, 0);
        let v = RingTensor::random(shape, self.conf.cfg, &mut rng);
        self.register(v)
    }

    /// An offset with given values (tests and forced examples).
    pub fn offset_from(&mut self, values: T<W>) -> OffsetId {
        self.register(values)
    }

    /// The dealer's view of an offset.
    pub fn offset_value(&self, id: OffsetId) -> Option<&T<W>> {
        self.offsets.get(&id)
    }

    /// Fresh additive shares of an offset, independent of those embedded in
    /// gate keys; parties add them to enter the masked domain.
    pub fn mask_pair(&mut self, id: OffsetId) -> Result<KeyPair<MaskShare<W>>, DealerError> {
        let v = self.offsets.get(&id).cloned().ok_or(DealerError::UnknownOffset(id))?;
        let mut rng = self.gate_rng(GateKind::Offset);
        let (a, b) = split_t(&mut rng, &v);
        Ok((MaskShare { party: 0, offset_id: id, values: a }, MaskShare { party: 1, offset_id: id, values: b }))
    }

    fn take_input(&mut self, id: OffsetId) -> Result<T<W>, DealerError> {
        let v = self.offsets.get(&id).cloned().ok_or(DealerError::UnknownOffset(id))?;
        if !self.used_in.insert(id) {
            return Err(DealerError::OffsetReuse(id));
        }
        Ok(v)
    }

    fn take_output(&mut self, id: Option<OffsetId>) -> Result<(OffsetId, Option<T<W>>), DealerError> {
        match id {
            None => Ok((OffsetId::NONE, None)),
            Some(id) => {
                let v = self.offsets.get(&id).cloned().ok_or(DealerError::UnknownOffset(id))?;
                if !self.used_out.insert(id) {
                    return Err(DealerError::OffsetReuse(id));
                }
                Ok((id, Some(v)))
            }
        }
    }

    fn enc(&self, x: f64) -> Result<W, DealerError> {
        Ok(encode_fixed(x, self.conf.cfg)?)
    }

    fn rand_t(&self, rng: &mut ChaCha20Rng, shape: &[usize]) -> T<W> {
        RingTensor::random(shape, self.conf.cfg, rng)
    }

    // ---- Beaver triples ----

    /// Random triple; shapes `(a, b)` for an elementwise product must agree, for
    /// a matrix product they are (u×v, v×w).
    pub fn gen_beaver(&mut self, a_shape: &[usize], b_shape: &[usize], shape: BeaverShape) -> Result<KeyPair<BeaverKey<W>>, DealerError> {
        let mut rng = self.gate_rng(GateKind::Beaver);
        let a = self.rand_t(&mut rng, a_shape);
        let b = self.rand_t(&mut rng, b_shape);
        beaver_pair(&mut rng, &a, &b, shape)
    }

    /// Triple with given A and B.
    pub fn gen_beaver_from(&mut self, a: &T<W>, b: &T<W>, shape: BeaverShape) -> Result<KeyPair<BeaverKey<W>>, DealerError> {
        let mut rng = self.gate_rng(GateKind::Beaver);
        beaver_pair(&mut rng, a, b, shape)
    }

    // ---- offset gates ----

    pub fn gen_mul(&mut self, in1: OffsetId, in2: OffsetId, out: Option<OffsetId>) -> Result<KeyPair<MulKey<W>>, DealerError> {
        let r1 = self.take_input(in1)?;
        let r2 = self.take_input(in2)?;
        if r1.shape != r2.shape {
            return Err(DealerError::Shape(format!("{:?} vs {:?}", r1.shape, r2.shape)));
        }
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Mul);
        Ok(mul_pair(&mut rng, &r1, &r2, r_out.as_ref(), (in1, in2, out)))
    }

    pub fn gen_square(&mut self, input: OffsetId, out: Option<OffsetId>) -> Result<KeyPair<SquareKey<W>>, DealerError> {
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Square);
        let (r0, r1) = split_t(&mut rng, &r);
        let (q0, q1) = split_t(&mut rng, &r.mul(&r));
        let (o0, o1) = split_opt(&mut rng, r_out.as_ref());
        let mk = |party, r_in, q, r_out| SquareKey { party, input, out, r_in, q, r_out };
        Ok((mk(0, r0, q0, o0), mk(1, r1, q1, o1)))
    }

    /// x^(2^m).
    pub fn gen_power(&mut self, input: OffsetId, out: Option<OffsetId>, m: usize) -> Result<KeyPair<PowerKey<W>>, DealerError> {
        if m == 0 {
            return Err(DealerError::Param("power needs m >= 1".into()));
        }
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Power);
        let (c0, c1) = chain_pair(&mut rng, &r, m, r_out.as_ref());
        Ok((PowerKey { party: 0, input, out, chain: c0 }, PowerKey { party: 1, input, out, chain: c1 }))
    }

    pub fn gen_exp(&mut self, input: OffsetId, out: Option<OffsetId>, m: usize) -> Result<KeyPair<ExpKey<W>>, DealerError> {
        if m == 0 {
            return Err(DealerError::Param("exp needs m >= 1".into()));
        }
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Exp);
        let (mut k0, mut k1) = exp_pair(&mut rng, &r, m, r_out.as_ref());
        (k0.input, k0.out, k1.input, k1.out) = (input, out, input, out);
        Ok((k0, k1))
    }

    pub fn gen_recip(&mut self, input: OffsetId, out: Option<OffsetId>, m: usize, with_init: bool, m_exp: usize) -> Result<KeyPair<RecipKey<W>>, DealerError> {
        if m == 0 || (!with_init && m_exp == 0) {
            return Err(DealerError::Param("recip needs m >= 1".into()));
        }
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Recip);
        let one = self.conf.cfg.one::<W>();
        let (mut k0, mut k1) = recip_pair(&mut rng, &r, r_out.as_ref(), m, with_init, m_exp, one);
        (k0.input, k0.out, k1.input, k1.out) = (input, out, input, out);
        Ok((k0, k1))
    }

    /// Softmax over the last axis of length `k`, clipped to `clip`.
    pub fn gen_softmax(&mut self, input: OffsetId, k: usize, m: usize, clip: (f64, f64)) -> Result<KeyPair<SoftmaxKey<W>>, DealerError> {
        if k < 2 || m == 0 {
            return Err(DealerError::Param(format!("softmax needs k >= 2 and m >= 1, got k={k} m={m}")));
        }
        let r = self.take_input(input)?;
        if r.shape.last() != Some(&k) {
            return Err(DealerError::Shape(format!("last axis of {:?} is not {k}", r.shape)));
        }
        let mut rng = self.gate_rng(GateKind::Softmax);
        let shape = r.shape.clone();
        let rd = self.rand_t(&mut rng, &shape);
        let (lo0, lo1) = relu_pair(&mut rng, &r, rd, 1);
        let rd = self.rand_t(&mut rng, &shape);
        let (hi0, hi1) = relu_pair(&mut rng, &r, rd, 1);
        let r_x = self.rand_t(&mut rng, &shape);
        let mut it0 = Vec::with_capacity(m);
        let mut it1 = Vec::with_capacity(m);
        for _ in 0..m {
            let r_y = self.rand_t(&mut rng, &shape);
            let r_t = self.rand_t(&mut rng, &shape);
            let n = OffsetId::NONE;
            let (t0, t1) = mul_pair(&mut rng, &r_x, &r_y, None, (n, n, n));
            let (q0, q1) = mul_pair(&mut rng, &r_y, &r_t, None, (n, n, n));
            it0.push(SoftmaxIter { mul_t: t0, mul_q: q0 });
            it1.push(SoftmaxIter { mul_t: t1, mul_q: q1 });
        }
        let mk = |party, relu_lo, relu_hi, iters| SoftmaxKey { party, input, k, a0: clip.0, a1: clip.1, relu_lo, relu_hi, iters };
        Ok((mk(0, lo0, hi0, it0), mk(1, lo1, hi1, it1)))
    }

    pub fn gen_sigmoid(&mut self, input: OffsetId, out: Option<OffsetId>, m_exp: usize, m_recip: usize) -> Result<KeyPair<SigmoidKey<W>>, DealerError> {
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Sigmoid);
        let one = self.conf.cfg.one::<W>();
        let (mut k0, mut k1) = sigmoid_pair(&mut rng, &r, r_out.as_ref(), m_exp, m_recip, one);
        (k0.input, k0.out, k1.input, k1.out) = (input, out, input, out);
        Ok((k0, k1))
    }

    pub fn gen_tanh(&mut self, input: OffsetId, out: Option<OffsetId>, m_exp: usize, m_recip: usize) -> Result<KeyPair<TanhKey<W>>, DealerError> {
        let r = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::Tanh);
        let one = self.conf.cfg.one::<W>();
        let (s0, s1) = sigmoid_pair(&mut rng, &r.mul_int(2), None, m_exp, m_recip, one);
        let (o0, o1) = split_opt(&mut rng, r_out.as_ref());
        Ok((TanhKey { party: 0, input, out, sig: s0, r_out: o0 }, TanhKey { party: 1, input, out, sig: s1, r_out: o1 }))
    }

    /// Static dropout with the keep mask fixed offline. `forced_r` replaces
    /// the per-element uniform draws.
    pub fn gen_dropout_static(
        &mut self,
        input: OffsetId,
        out: Option<OffsetId>,
        p: f64,
        forced_r: Option<&[f64]>,
    ) -> Result<KeyPair<DropoutStaticKey<W>>, DealerError> {
        check_p(p)?;
        let r_in = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::DropoutStatic);
        let cfg = self.conf.cfg;
        let keep = self.enc(1.0 / (1.0 - p))?;
        let p_fx = self.enc(p)?;
        let n = r_in.len();
        if forced_r.is_some_and(|f| f.len() != n) {
            return Err(DealerError::Shape("forced r length".into()));
        }
        let sigma_data: Vec<W> = (0..n)
            .map(|j| {
                let r = match forced_r {
                    Some(f) => self.enc(f[j]),
                    None => Ok(unit_fixed::<W>(&mut rng, cfg)),
                }?;
                Ok(if r.as_i64() < p_fx.as_i64() { W::zero() } else { keep })
            })
            .collect::<Result<_, DealerError>>()?;
        let sigma = RingTensor { shape: r_in.shape.clone(), data: sigma_data, cfg, scale: cfg.s };
        let r_sigma = self.rand_t(&mut rng, &r_in.shape);
        let sigma_hat = sigma.add(&r_sigma);
        let (i0, i1) = split_t(&mut rng, &r_in);
        let (s0, s1) = split_t(&mut rng, &r_sigma);
        let (q0, q1) = split_t(&mut rng, &r_in.mul(&r_sigma));
        let (o0, o1) = split_opt(&mut rng, r_out.as_ref());
        let mk = |party, r_in, r_sigma, q, r_out| DropoutStaticKey { party, input, out, p, sigma_hat: sigma_hat.clone(), r_in, r_sigma, q, r_out };
        Ok((mk(0, i0, s0, q0, o0), mk(1, i1, s1, q1, o1)))
    }

    /// Dynamic dropout: p is supplied online. `forced_r` fixes the dealer's
    /// uniform draws.
    pub fn gen_dropout_dynamic(
        &mut self,
        input: OffsetId,
        out: Option<OffsetId>,
        forced_r: Option<&[f64]>,
    ) -> Result<KeyPair<DropoutDynamicKey<W>>, DealerError> {
        let r_in = self.take_input(input)?;
        let (out, r_out) = self.take_output(out)?;
        let mut rng = self.gate_rng(GateKind::DropoutDynamic);
        let cfg = self.conf.cfg;
        let n = r_in.len();
        let r_data: Vec<W> = match forced_r {
            Some(f) if f.len() != n => return Err(DealerError::Shape("forced r length".into())),
            Some(f) => f.iter().map(|&x| self.enc(x)).collect::<Result<_, _>>()?,
            None => (0..n).map(|_| unit_fixed::<W>(&mut rng, cfg)).collect(),
        };
        let r = RingTensor { shape: r_in.shape.clone(), data: r_data, cfg, scale: cfg.s };
        let r_c = self.rand_t(&mut rng, &r_in.shape);
        let beta: Vec<W> = r_in.data.iter().flat_map(|&ri| [W::one(), ri]).collect();
        let (l0, l1) = lt_pair(&mut rng, &r_c, &beta, 2, OffsetId::NONE);
        let (i0, i1) = split_t(&mut rng, &r_in);
        let (rr0, rr1) = split_t(&mut rng, &r);
        let (o0, o1) = split_opt(&mut rng, r_out.as_ref());
        let mk = |party, r_in, r, lt, r_out| DropoutDynamicKey { party, input, out, r_in, r, lt, r_out };
        Ok((mk(0, i0, rr0, l0, o0), mk(1, i1, rr1, l1, o1)))
    }

    /// Outer product of the last axes: inputs [.., N] and [.., M], output [.., N, M].
    pub fn gen_tp(&mut self, in1: OffsetId, in2: OffsetId, out: Option<OffsetId>) -> Result<KeyPair<TpKey<W>>, DealerError> {
        let r1 = self.take_input(in1)?;
        let r2 = self.take_input(in2)?;
        let q = batched_outer(&r1, &r2).map_err(DealerError::Shape)?;
        let (out, r_out) = self.take_output(out)?;
        if let Some(ro) = &r_out {
            if ro.shape != q.shape {
                return Err(DealerError::Shape(format!("output offset {:?} vs {:?}", ro.shape, q.shape)));
            }
        }
        let mut rng = self.gate_rng(GateKind::Tp);
        let (a0, a1) = split_t(&mut rng, &r1);
        let (b0, b1) = split_t(&mut rng, &r2);
        let (q0, q1) = split_t(&mut rng, &q);
        let (o0, o1) = split_opt(&mut rng, r_out.as_ref());
        let mk = |party, r1, r2, q, r_out| TpKey { party, in1, in2, out, r1, r2, q, r_out };
        Ok((mk(0, a0, b0, q0, o0), mk(1, a1, b1, q1, o1)))
    }

    /// Shares of 1{x < 0} in fixed point.
    pub fn gen_less_than(&mut self, input: OffsetId) -> Result<KeyPair<LtKey<W>>, DealerError> {
        let r = self.take_input(input)?;
        let mut rng = self.gate_rng(GateKind::LessThan);
        let beta = vec![self.conf.cfg.one::<W>(); r.len()];
        Ok(lt_pair(&mut rng, &r, &beta, 1, input))
    }

    pub fn gen_relu(&mut self, input: OffsetId) -> Result<KeyPair<ReluKey<W>>, DealerError> {
        let r = self.take_input(input)?;
        let mut rng = self.gate_rng(GateKind::Relu);
        let r_d = self.rand_t(&mut rng, &r.shape);
        let (mut k0, mut k1) = relu_pair(&mut rng, &r, r_d, 1);
        k0.lt.input = input;
        k1.lt.input = input;
        k0.mul.in1 = input;
        k1.mul.in1 = input;
        Ok((k0, k1))
    }

    /// Comparison key for the additive-sharing baselines.
    pub fn gen_bit_lt(&mut self, shape: &[usize]) -> KeyPair<BitLtKey<W>> {
        let mut rng = self.gate_rng(GateKind::BitLessThan);
        let r = self.rand_t(&mut rng, shape);
        bit_lt_pair(&mut rng, &r)
    }

    /// Shares of a public-to-the-dealer tensor (e.g. the baseline dropout mask).
    pub fn gen_shares(&mut self, v: &T<W>) -> KeyPair<MaskShare<W>> {
        let mut rng = self.gate_rng(GateKind::Offset);
        let (a, b) = split_t(&mut rng, v);
        (MaskShare { party: 0, offset_id: OffsetId::NONE, values: a }, MaskShare { party: 1, offset_id: OffsetId::NONE, values: b })
    }

    /// Baseline dropout mask σ ∈ {0, 1/(1−p)} as additive shares.
    pub fn gen_dropout_mask(&mut self, shape: &[usize], p: f64, forced_r: Option<&[f64]>) -> Result<KeyPair<MaskShare<W>>, DealerError> {
        check_p(p)?;
        let mut rng = self.gate_rng(GateKind::DropoutStatic);
        let cfg = self.conf.cfg;
        let keep = self.enc(1.0 / (1.0 - p))?;
        let p_fx = self.enc(p)?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for j in 0..n {
            let r = match forced_r {
                Some(f) => self.enc(f[j])?,
                None => unit_fixed::<W>(&mut rng, cfg),
            };
            data.push(if r.as_i64() < p_fx.as_i64() { W::zero() } else { keep });
        }
        let sigma = RingTensor { shape: shape.to_vec(), data, cfg, scale: cfg.s };
        Ok(self.gen_shares(&sigma))
    }

    /// Shares of uniform fixed-point values in (0, 1) (baseline dynamic dropout).
    pub fn gen_unit_randoms(&mut self, shape: &[usize]) -> KeyPair<MaskShare<W>> {
        let mut rng = self.gate_rng(GateKind::DropoutDynamic);
        let cfg = self.conf.cfg;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| unit_fixed::<W>(&mut rng, cfg)).collect();
        let v = RingTensor { shape: shape.to_vec(), data, cfg, scale: cfg.s };
        self.gen_shares(&v)
    }

    /// 256-bit seed shared by one pair of clients for aggregation masks.
    pub fn gen_mask_seed(&mut self, i: usize, j: usize) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.conf.seed);
        h.update(b"pairwise-mask");
        h.update((i.min(j) as u64).to_le_bytes());
        h.update((i.max(j) as u64).to_le_bytes());
        h.finalize().into()
    }
}

fn check_p(p: f64) -> Result<(), DealerError> {
    if !(0.0..1.0).contains(&p) {
        return Err(DealerError::Param(format!("dropout probability {p} outside [0, 1)")));
    }
    Ok(())
}

fn beaver_pair<W: RingWord>(rng: &mut ChaCha20Rng, a: &T<W>, b: &T<W>, shape: BeaverShape) -> Result<KeyPair<BeaverKey<W>>, DealerError> {
    let c = match shape {
        BeaverShape::Elementwise => {
            if a.shape != b.shape {
                return Err(DealerError::Shape(format!("{:?} vs {:?}", a.shape, b.shape)));
            }
            a.mul(b)
        }
        BeaverShape::Matmul => a.matmul(b)?,
    };
    let (a0, a1) = split_t(rng, a);
    let (b0, b1) = split_t(rng, b);
    let (c0, c1) = split_t(rng, &c);
    Ok((BeaverKey { party: 0, shape, a: a0, b: b0, c: c0 }, BeaverKey { party: 1, shape, a: a1, b: b1, c: c1 }))
}

fn mul_pair<W: RingWord>(rng: &mut ChaCha20Rng, r1: &T<W>, r2: &T<W>, r_out: Option<&T<W>>, ids: (OffsetId, OffsetId, OffsetId)) -> KeyPair<MulKey<W>> {
    let (a0, a1) = split_t(rng, r1);
    let (b0, b1) = split_t(rng, r2);
    let (q0, q1) = split_t(rng, &r1.mul(r2));
    let (o0, o1) = split_opt(rng, r_out);
    let mk = |party, r1, r2, q, r_out| MulKey { party, in1: ids.0, in2: ids.1, out: ids.2, r1, r2, q, r_out };
    (mk(0, a0, b0, q0, o0), mk(1, a1, b1, q1, o1))
}

fn chain_pair<W: RingWord>(rng: &mut ChaCha20Rng, first: &T<W>, m: usize, r_out: Option<&T<W>>) -> KeyPair<SquareChain<W>> {
    let mut offsets = vec![first.clone()];
    for _ in 1..m {
        offsets.push(RingTensor::random(&first.shape, first.cfg, rng));
    }
    let mut c0 = SquareChain { offsets: Vec::new(), qs: Vec::new(), r_out: None };
    let mut c1 = c0.clone();
    for r in &offsets {
        let (a, b) = split_t(rng, r);
        let (q0, q1) = split_t(rng, &r.mul(r));
        c0.offsets.push(a);
        c1.offsets.push(b);
        c0.qs.push(q0);
        c1.qs.push(q1);
    }
    (c0.r_out, c1.r_out) = split_opt(rng, r_out);
    (c0, c1)
}

fn exp_pair<W: RingWord>(rng: &mut ChaCha20Rng, r_in: &T<W>, m: usize, r_out: Option<&T<W>>) -> KeyPair<ExpKey<W>> {
    let (i0, i1) = split_t(rng, r_in);
    let base = RingTensor::random(&r_in.shape, r_in.cfg, rng);
    let (c0, c1) = chain_pair(rng, &base, m, r_out);
    let n = OffsetId::NONE;
    (ExpKey { party: 0, input: n, out: n, r_in: i0, chain: c0 }, ExpKey { party: 1, input: n, out: n, r_in: i1, chain: c1 })
}

/// β_j·1{x_j < 0} for x̂ = x + r; `beta` is row-major count × k.
fn lt_pair<W: RingWord>(rng: &mut ChaCha20Rng, r: &T<W>, beta: &[W], k: usize, input: OffsetId) -> KeyPair<LtKey<W>> {
    let count = r.len();
    let lm = low_mask::<W>();
    let alpha: Vec<u64> = r.data.iter().map(|w| w.as_u64() & lm).collect();
    let mut payload = Vec::with_capacity(count * k);
    let mut rh_beta = Vec::with_capacity(count * k);
    for (j, w) in r.data.iter().enumerate() {
        let rh = w.msb();
        for c in 0..k {
            let b = beta[j * k + c];
            payload.push(if rh { b.wrapping_neg() } else { b }.as_u64());
            rh_beta.push(if rh { b } else { W::zero() });
        }
    }
    let (d0, d1) = dcf::gen(&alpha, &payload, k, W::WIDTH - 1, Group { bits: W::WIDTH }, rng);
    let cfg = r.cfg;
    let beta_t = RingTensor { shape: vec![count, k], data: beta.to_vec(), cfg, scale: cfg.s };
    let rh_t = RingTensor { shape: vec![count, k], data: rh_beta, cfg, scale: cfg.s };
    let (b0, b1) = split_t(rng, &beta_t);
    let (h0, h1) = split_t(rng, &rh_t);
    let (m0, m1) = split_t(rng, r);
    (LtKey { party: 0, input, k, dcf: d0, beta: b0, rh_beta: h0, mask: m0 }, LtKey { party: 1, input, k, dcf: d1, beta: b1, rh_beta: h1, mask: m1 })
}

/// ReLU keyed on input offset `r`; the (1 − d) wire uses offset `r_d`, and
/// the comparison payload is `beta` (2^s for a fixed-point bit, 1 for an integer bit).
fn relu_pair<W: RingWord>(rng: &mut ChaCha20Rng, r: &T<W>, r_d: T<W>, beta: u64) -> KeyPair<ReluKey<W>> {
    let b = vec![W::from_u64(beta); r.len()];
    let (l0, l1) = lt_pair(rng, r, &b, 1, OffsetId::NONE);
    let n = OffsetId::NONE;
    let (m0, m1) = mul_pair(rng, r, &r_d, None, (n, n, n));
    (ReluKey { party: 0, lt: l0, mul: m0 }, ReluKey { party: 1, lt: l1, mul: m1 })
}

fn recip_pair<W: RingWord>(rng: &mut ChaCha20Rng, r_in: &T<W>, r_out: Option<&T<W>>, m: usize, with_init: bool, m_exp: usize, one: W) -> KeyPair<RecipKey<W>> {
    let shape = r_in.shape.clone();
    let cfg = r_in.cfg;
    let rand = |rng: &mut ChaCha20Rng| RingTensor::<W>::random(&shape, cfg, rng);
    let n = OffsetId::NONE;
    let (lt0, lt1) = lt_pair(rng, r_in, &vec![one; r_in.len()], 1, n);
    let r_s1 = rand(rng);
    let a = rand(rng);
    let (ma0, ma1) = mul_pair(rng, r_in, &r_s1, Some(&a), (n, n, n));
    // Offset of y_0.
    let (exp, r0_pair, mut big_r) = if with_init {
        let r0 = rand(rng);
        let (p0, p1) = split_t(rng, &r0);
        ((None, None), (Some(p0), Some(p1)), r0)
    } else {
        let e_out = rand(rng);
        let (e0, e1) = exp_pair(rng, &a.mul_int(-2), m_exp, Some(&e_out));
        ((Some(e0), Some(e1)), (None, None), e_out.mul_int(3))
    };
    let mut s0 = Vec::with_capacity(m);
    let mut s1 = Vec::with_capacity(m);
    for _ in 0..m {
        let u = rand(rng);
        let mm = rand(rng);
        let (q0, q1) = split_t(rng, &big_r.mul(&big_r));
        let (u0, u1) = split_t(rng, &u);
        let (v0, v1) = split_t(rng, &a.mul(&u));
        let (m0, m1) = split_t(rng, &mm);
        s0.push(NewtonStep { q: q0, u: u0, v: v0, m: m0 });
        s1.push(NewtonStep { q: q1, u: u1, v: v1, m: m1 });
        big_r = mm.neg();
    }
    let r_s2 = rand(rng);
    let (sg0, sg1) = mul_pair(rng, &big_r, &r_s2, r_out, (n, n, n));
    (
        RecipKey { party: 0, input: n, out: n, lt: lt0, mul_abs: ma0, exp: exp.0, r0: r0_pair.0, steps: s0, mul_sign: sg0 },
        RecipKey { party: 1, input: n, out: n, lt: lt1, mul_abs: ma1, exp: exp.1, r0: r0_pair.1, steps: s1, mul_sign: sg1 },
    )
}

fn sigmoid_pair<W: RingWord>(rng: &mut ChaCha20Rng, r_in: &T<W>, r_out: Option<&T<W>>, m_exp: usize, m_recip: usize, one: W) -> KeyPair<SigmoidKey<W>> {
    let shape = r_in.shape.clone();
    let cfg = r_in.cfg;
    let rand = |rng: &mut ChaCha20Rng| RingTensor::<W>::random(&shape, cfg, rng);
    let n = OffsetId::NONE;
    let (lt0, lt1) = lt_pair(rng, r_in, &vec![one; r_in.len()], 1, n);
    let (r1, r2, r3) = (rand(rng), rand(rng), rand(rng));
    let (m10, m11) = mul_pair(rng, r_in, &r1, Some(&r2), (n, n, n));
    let (e0, e1) = exp_pair(rng, &r2.neg(), m_exp, Some(&r3));
    let (c0, c1) = recip_pair(rng, &r3, None, m_recip, true, 0, one);
    let (r4, r5, r6, r7) = (rand(rng), rand(rng), rand(rng), rand(rng));
    let (m20, m21) = mul_pair(rng, &r4, &r5, None, (n, n, n));
    let (m30, m31) = mul_pair(rng, &r6, &r7, None, (n, n, n));
    let (o0, o1) = split_opt(rng, r_out);
    (
        SigmoidKey { party: 0, input: n, out: n, lt: lt0, mul1: m10, exp: e0, recip: c0, mul2: m20, mul3: m30, r_out: o0 },
        SigmoidKey { party: 1, input: n, out: n, lt: lt1, mul1: m11, exp: e1, recip: c1, mul2: m21, mul3: m31, r_out: o1 },
    )
}

fn bit_lt_pair<W: RingWord>(rng: &mut ChaCha20Rng, r: &T<W>) -> KeyPair<BitLtKey<W>> {
    let count = r.len();
    let cfg = r.cfg;
    let lm = low_mask::<W>();
    let alpha: Vec<u64> = r.data.iter().map(|w| w.as_u64() & lm).collect();
    let (d0, d1) = dcf::gen(&alpha, &vec![1; count], 1, W::WIDTH - 1, Group { bits: 1 }, rng);
    let bits = |rng: &mut ChaCha20Rng| -> Vec<W> { (0..count).map(|_| W::from_u64(rng.gen::<u64>() & 1)).collect() };
    let rh0 = bits(rng);
    let rh1: Vec<W> = rh0.iter().zip(&r.data).map(|(&a, w)| a ^ W::from_u64(w.msb() as u64)).collect();
    let rho = bits(rng);
    let rb0 = bits(rng);
    let rb1: Vec<W> = rb0.iter().zip(&rho).map(|(&a, &b)| a ^ b).collect();
    let tensor = |data: Vec<W>| RingTensor { shape: r.shape.clone(), data, cfg, scale: 0 };
    let (ra0, ra1) = split_t(rng, &tensor(rho));
    let (mk0, mk1) = split_t(rng, r);
    (
        BitLtKey { party: 0, dcf: d0, rh: tensor(rh0), mask: mk0, rho_bool: tensor(rb0), rho_arith: ra0 },
        BitLtKey { party: 1, dcf: d1, rh: tensor(rh1), mask: mk1, rho_bool: tensor(rb1), rho_arith: ra1 },
    )
}

/// Outer product along the last axes: [.., N] × [.., M] → [.., N, M].
pub fn batched_outer<W: RingWord>(a: &T<W>, b: &T<W>) -> Result<T<W>, String> {
    let (n, m) = (*a.shape.last().unwrap_or(&0), *b.shape.last().unwrap_or(&0));
    if a.shape[..a.shape.len().saturating_sub(1)] != b.shape[..b.shape.len().saturating_sub(1)] || n == 0 || m == 0 {
        return Err(format!("outer product of {:?} and {:?}", a.shape, b.shape));
    }
    let rows = a.len() / n;
    let mut data = Vec::with_capacity(rows * n * m);
    for r in 0..rows {
        for &x in &a.data[r * n..(r + 1) * n] {
            for &y in &b.data[r * m..(r + 1) * m] {
                data.push(x.wrapping_mul(&y));
            }
        }
    }
    let mut shape = a.shape[..a.shape.len() - 1].to_vec();
    shape.extend([n, m]);
    Ok(RingTensor { shape, data, cfg: a.cfg, scale: a.scale + b.scale })
}

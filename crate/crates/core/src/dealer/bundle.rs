//! Binary key-bundle files.
//!
//! Layout (little-endian): magic `PFFT`, version u16, ring bits u8, scale u8,
//! party u8, gate count u32; per gate: kind u8, params block (u32 length
//! prefix), tensor count u16, then per tensor rank u8, u32 dims and raw words.
//! A CRC32 of everything before it closes the file. Each params block ends
//! with one scale byte per tensor.

use std::path::Path;

use thiserror::Error;

use super::dcf::{DcfBatch, Group};
use super::keys::*;
use crate::ring::{RingConfig, RingTensor, RingWord};
use crate::shares::{MaskShare, OffsetId};

pub const MAGIC: &[u8; 4] = b"PFFT";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("bundle ring ({l}, {s}) does not match the requested word type")]
    Ring { l: u8, s: u8 },
    #[error("truncated bundle")]
    Truncated,
    #[error("checksum mismatch")]
    Checksum,
    #[error("malformed gate: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle<W> {
    pub cfg: RingConfig,
    pub party: u8,
    pub keys: Vec<GateKey<W>>,
}

struct Enc<W> {
    params: Vec<u8>,
    tensors: Vec<RingTensor<W>>,
}

impl<W: RingWord> Enc<W> {
    fn u8(&mut self, v: u8) {
        self.params.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.params.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.params.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn id(&mut self, v: OffsetId) {
        self.u64(v.0);
    }
    fn t(&mut self, t: &RingTensor<W>) {
        self.tensors.push(t.clone());
    }
    fn opt(&mut self, t: &Option<RingTensor<W>>) {
        self.u8(t.is_some() as u8);
        if let Some(t) = t {
            self.t(t);
        }
    }
}

struct Dec<'a, W> {
    params: &'a [u8],
    pos: usize,
    tensors: std::vec::IntoIter<RingTensor<W>>,
    party: u8,
}

type R<T> = Result<T, BundleError>;

fn mal(s: &str) -> BundleError {
    BundleError::Malformed(s.into())
}

impl<W: RingWord> Dec<'_, W> {
    fn bytes(&mut self, n: usize) -> R<&[u8]> {
        let b = self.params.get(self.pos..self.pos + n).ok_or_else(|| mal("params too short"))?;
        self.pos += n;
        Ok(b)
    }
    fn u8(&mut self) -> R<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u32(&mut self) -> R<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> R<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> R<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn id(&mut self) -> R<OffsetId> {
        Ok(OffsetId(self.u64()?))
    }
    fn t(&mut self) -> R<RingTensor<W>> {
        self.tensors.next().ok_or_else(|| mal("missing tensor"))
    }
    fn opt(&mut self) -> R<Option<RingTensor<W>>> {
        Ok(if self.u8()? == 1 { Some(self.t()?) } else { None })
    }
}

trait Codec<W>: Sized {
    fn put(&self, e: &mut Enc<W>);
    fn get(d: &mut Dec<'_, W>) -> R<Self>;
}

impl<W: RingWord> Codec<W> for BeaverKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.u8(matches!(self.shape, BeaverShape::Matmul) as u8);
        e.t(&self.a);
        e.t(&self.b);
        e.t(&self.c);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        let shape = if d.u8()? == 1 { BeaverShape::Matmul } else { BeaverShape::Elementwise };
        Ok(BeaverKey { party: d.party, shape, a: d.t()?, b: d.t()?, c: d.t()? })
    }
}

impl<W: RingWord> Codec<W> for MulKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.in1);
        e.id(self.in2);
        e.id(self.out);
        e.t(&self.r1);
        e.t(&self.r2);
        e.t(&self.q);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(MulKey { party: d.party, in1: d.id()?, in2: d.id()?, out: d.id()?, r1: d.t()?, r2: d.t()?, q: d.t()?, r_out: d.opt()? })
    }
}

impl<W: RingWord> Codec<W> for SquareKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        e.t(&self.r_in);
        e.t(&self.q);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(SquareKey { party: d.party, input: d.id()?, out: d.id()?, r_in: d.t()?, q: d.t()?, r_out: d.opt()? })
    }
}

impl<W: RingWord> Codec<W> for SquareChain<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.u32(self.qs.len() as u32);
        for (r, q) in self.offsets.iter().zip(&self.qs) {
            e.t(r);
            e.t(q);
        }
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        let m = d.u32()?;
        let mut c = SquareChain { offsets: Vec::new(), qs: Vec::new(), r_out: None };
        for _ in 0..m {
            c.offsets.push(d.t()?);
            c.qs.push(d.t()?);
        }
        c.r_out = d.opt()?;
        Ok(c)
    }
}

impl<W: RingWord> Codec<W> for PowerKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        self.chain.put(e);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(PowerKey { party: d.party, input: d.id()?, out: d.id()?, chain: SquareChain::get(d)? })
    }
}

impl<W: RingWord> Codec<W> for ExpKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        e.t(&self.r_in);
        self.chain.put(e);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(ExpKey { party: d.party, input: d.id()?, out: d.id()?, r_in: d.t()?, chain: SquareChain::get(d)? })
    }
}

impl<W: RingWord> Codec<W> for DcfBatch {
    fn put(&self, e: &mut Enc<W>) {
        let cfg = RingConfig { l: W::WIDTH, s: 0 };
        let (c, n, k) = (self.count(), self.n_bits as usize, self.k);
        e.u32(self.n_bits);
        e.u32(k as u32);
        e.u8(self.group.bits as u8);
        e.u32(c as u32);
        let per = (128 / W::WIDTH) as usize;
        let seeds = |v: &[u128], rows: Vec<usize>| {
            let mut data = Vec::with_capacity(v.len() * per);
            for &s in v {
                for i in 0..per {
                    data.push(W::from_u64((s >> (i as u32 * W::WIDTH)) as u64));
                }
            }
            let mut shape = rows;
            shape.push(per);
            RingTensor { shape, data, cfg, scale: 0 }
        };
        let words = |v: &[u64], shape: Vec<usize>| RingTensor { shape, data: v.iter().map(|&x| W::from_u64(x)).collect(), cfg, scale: 0 };
        e.t(&seeds(&self.seeds, vec![c]));
        e.t(&seeds(&self.cw_s, vec![c, n]));
        e.t(&words(&self.cw_v, vec![c, n, k]));
        let cw_t: Vec<u64> = self.cw_t.iter().map(|&t| t as u64).collect();
        e.t(&words(&cw_t, vec![c, n]));
        e.t(&words(&self.last, vec![c, k]));
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        let n_bits = d.u32()?;
        let k = d.u32()? as usize;
        let bits = d.u8()? as u32;
        let count = d.u32()? as usize;
        let per = (128 / W::WIDTH) as usize;
        let seeds = |t: RingTensor<W>| -> Vec<u128> {
            t.data.chunks(per).map(|c| c.iter().enumerate().fold(0u128, |a, (i, w)| a | ((w.as_u64() as u128) << (i as u32 * W::WIDTH)))).collect()
        };
        let words = |t: RingTensor<W>| -> Vec<u64> { t.data.iter().map(|w| w.as_u64()).collect() };
        let b = DcfBatch {
            n_bits,
            k,
            group: Group { bits },
            seeds: seeds(d.t()?),
            cw_s: seeds(d.t()?),
            cw_v: words(d.t()?),
            cw_t: words(d.t()?).into_iter().map(|t| t as u8).collect(),
            last: words(d.t()?),
        };
        let n = n_bits as usize;
        if b.seeds.len() != count || b.cw_s.len() != count * n || b.cw_v.len() != count * n * k || b.last.len() != count * k {
            return Err(mal("dcf sizes"));
        }
        Ok(b)
    }
}

impl<W: RingWord> Codec<W> for LtKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.u32(self.k as u32);
        Codec::<W>::put(&self.dcf, e);
        e.t(&self.beta);
        e.t(&self.rh_beta);
        e.t(&self.mask);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(LtKey { party: d.party, input: d.id()?, k: d.u32()? as usize, dcf: <DcfBatch as Codec<W>>::get(d)?, beta: d.t()?, rh_beta: d.t()?, mask: d.t()? })
    }
}

impl<W: RingWord> Codec<W> for BitLtKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        Codec::<W>::put(&self.dcf, e);
        e.t(&self.rh);
        e.t(&self.mask);
        e.t(&self.rho_bool);
        e.t(&self.rho_arith);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(BitLtKey { party: d.party, dcf: <DcfBatch as Codec<W>>::get(d)?, rh: d.t()?, mask: d.t()?, rho_bool: d.t()?, rho_arith: d.t()? })
    }
}

impl<W: RingWord> Codec<W> for ReluKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        self.lt.put(e);
        self.mul.put(e);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(ReluKey { party: d.party, lt: LtKey::get(d)?, mul: MulKey::get(d)? })
    }
}

impl<W: RingWord> Codec<W> for RecipKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        self.lt.put(e);
        self.mul_abs.put(e);
        e.u8(self.exp.is_some() as u8);
        if let Some(x) = &self.exp {
            x.put(e);
        }
        e.opt(&self.r0);
        e.u32(self.steps.len() as u32);
        for s in &self.steps {
            e.t(&s.q);
            e.t(&s.u);
            e.t(&s.v);
            e.t(&s.m);
        }
        self.mul_sign.put(e);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        let input = d.id()?;
        let out = d.id()?;
        let lt = LtKey::get(d)?;
        let mul_abs = MulKey::get(d)?;
        let exp = if d.u8()? == 1 { Some(ExpKey::get(d)?) } else { None };
        let r0 = d.opt()?;
        let m = d.u32()?;
        let steps = (0..m).map(|_| Ok(NewtonStep { q: d.t()?, u: d.t()?, v: d.t()?, m: d.t()? })).collect::<R<Vec<_>>>()?;
        let mul_sign = MulKey::get(d)?;
        Ok(RecipKey { party: d.party, input, out, lt, mul_abs, exp, r0, steps, mul_sign })
    }
}

impl<W: RingWord> Codec<W> for SoftmaxKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.u32(self.k as u32);
        e.f64(self.a0);
        e.f64(self.a1);
        self.relu_lo.put(e);
        self.relu_hi.put(e);
        e.u32(self.iters.len() as u32);
        for it in &self.iters {
            it.mul_t.put(e);
            it.mul_q.put(e);
        }
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        let input = d.id()?;
        let k = d.u32()? as usize;
        let a0 = d.f64()?;
        let a1 = d.f64()?;
        let relu_lo = ReluKey::get(d)?;
        let relu_hi = ReluKey::get(d)?;
        let m = d.u32()?;
        let iters = (0..m).map(|_| Ok(SoftmaxIter { mul_t: MulKey::get(d)?, mul_q: MulKey::get(d)? })).collect::<R<Vec<_>>>()?;
        Ok(SoftmaxKey { party: d.party, input, k, a0, a1, relu_lo, relu_hi, iters })
    }
}

impl<W: RingWord> Codec<W> for SigmoidKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        self.lt.put(e);
        self.mul1.put(e);
        self.exp.put(e);
        self.recip.put(e);
        self.mul2.put(e);
        self.mul3.put(e);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(SigmoidKey {
            party: d.party,
            input: d.id()?,
            out: d.id()?,
            lt: LtKey::get(d)?,
            mul1: MulKey::get(d)?,
            exp: ExpKey::get(d)?,
            recip: RecipKey::get(d)?,
            mul2: MulKey::get(d)?,
            mul3: MulKey::get(d)?,
            r_out: d.opt()?,
        })
    }
}

impl<W: RingWord> Codec<W> for TanhKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        self.sig.put(e);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(TanhKey { party: d.party, input: d.id()?, out: d.id()?, sig: SigmoidKey::get(d)?, r_out: d.opt()? })
    }
}

impl<W: RingWord> Codec<W> for DropoutStaticKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        e.f64(self.p);
        e.t(&self.sigma_hat);
        e.t(&self.r_in);
        e.t(&self.r_sigma);
        e.t(&self.q);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(DropoutStaticKey {
            party: d.party,
            input: d.id()?,
            out: d.id()?,
            p: d.f64()?,
            sigma_hat: d.t()?,
            r_in: d.t()?,
            r_sigma: d.t()?,
            q: d.t()?,
            r_out: d.opt()?,
        })
    }
}

impl<W: RingWord> Codec<W> for DropoutDynamicKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.input);
        e.id(self.out);
        e.t(&self.r_in);
        e.t(&self.r);
        self.lt.put(e);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(DropoutDynamicKey { party: d.party, input: d.id()?, out: d.id()?, r_in: d.t()?, r: d.t()?, lt: LtKey::get(d)?, r_out: d.opt()? })
    }
}

impl<W: RingWord> Codec<W> for TpKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.in1);
        e.id(self.in2);
        e.id(self.out);
        e.t(&self.r1);
        e.t(&self.r2);
        e.t(&self.q);
        e.opt(&self.r_out);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(TpKey { party: d.party, in1: d.id()?, in2: d.id()?, out: d.id()?, r1: d.t()?, r2: d.t()?, q: d.t()?, r_out: d.opt()? })
    }
}

impl<W: RingWord> Codec<W> for MaskShare<W> {
    fn put(&self, e: &mut Enc<W>) {
        e.id(self.offset_id);
        e.t(&self.values);
    }
    fn get(d: &mut Dec<'_, W>) -> R<Self> {
        Ok(MaskShare { party: d.party, offset_id: d.id()?, values: d.t()? })
    }
}

impl<W: RingWord> Codec<W> for GateKey<W> {
    fn put(&self, e: &mut Enc<W>) {
        match self {
            GateKey::Beaver(k) => k.put(e),
            GateKey::Mul(k) => k.put(e),
            GateKey::Square(k) => k.put(e),
            GateKey::Power(k) => k.put(e),
            GateKey::Exp(k) => k.put(e),
            GateKey::Recip(k) => k.put(e),
            GateKey::Softmax(k) => k.put(e),
            GateKey::Sigmoid(k) => k.put(e),
            GateKey::DropoutStatic(k) => k.put(e),
            GateKey::DropoutDynamic(k) => k.put(e),
            GateKey::Tp(k) => k.put(e),
            GateKey::LessThan(k) => k.put(e),
            GateKey::Offset(k) => k.put(e),
            GateKey::Tanh(k) => k.put(e),
            GateKey::Relu(k) => k.put(e),
            GateKey::BitLessThan(k) => k.put(e),
        }
    }
    fn get(_: &mut Dec<'_, W>) -> R<Self> {
        unreachable!("gate keys are decoded through decode_gate")
    }
}

fn decode_gate<W: RingWord>(kind: GateKind, d: &mut Dec<'_, W>) -> R<GateKey<W>> {
    Ok(match kind {
        GateKind::Beaver => BeaverKey::get(d)?.into(),
        GateKind::Mul => MulKey::get(d)?.into(),
        GateKind::Square => SquareKey::get(d)?.into(),
        GateKind::Power => PowerKey::get(d)?.into(),
        GateKind::Exp => ExpKey::get(d)?.into(),
        GateKind::Recip => RecipKey::get(d)?.into(),
        GateKind::Softmax => SoftmaxKey::get(d)?.into(),
        GateKind::Sigmoid => SigmoidKey::get(d)?.into(),
        GateKind::DropoutStatic => DropoutStaticKey::get(d)?.into(),
        GateKind::DropoutDynamic => DropoutDynamicKey::get(d)?.into(),
        GateKind::Tp => TpKey::get(d)?.into(),
        GateKind::LessThan => LtKey::get(d)?.into(),
        GateKind::Offset => MaskShare::get(d)?.into(),
        GateKind::Tanh => TanhKey::get(d)?.into(),
        GateKind::Relu => ReluKey::get(d)?.into(),
        GateKind::BitLessThan => BitLtKey::get(d)?.into(),
    })
}

/// Serializes one party's keys.
pub fn to_bytes<W: RingWord>(b: &Bundle<W>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(b.cfg.l as u8);
    out.push(b.cfg.s as u8);
    out.push(b.party);
    out.extend_from_slice(&(b.keys.len() as u32).to_le_bytes());
    for k in &b.keys {
        let mut e = Enc { params: Vec::new(), tensors: Vec::new() };
        k.put(&mut e);
        for t in &e.tensors {
            e.params.push(t.scale as u8);
        }
        out.push(k.kind() as u8);
        out.extend_from_slice(&(e.params.len() as u32).to_le_bytes());
        out.extend_from_slice(&e.params);
        out.extend_from_slice(&(e.tensors.len() as u16).to_le_bytes());
        for t in &e.tensors {
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &w in &t.data {
                w.put_le(&mut out);
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> R<&'a [u8]> {
        let b = self.buf.get(self.pos..self.pos + n).ok_or(BundleError::Truncated)?;
        self.pos += n;
        Ok(b)
    }
    fn u8(&mut self) -> R<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> R<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> R<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn from_bytes<W: RingWord>(buf: &[u8]) -> R<Bundle<W>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(BundleError::Magic);
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(BundleError::Version(version));
    }
    let (l, s, party) = (c.u8()?, c.u8()?, c.u8()?);
    if l as u32 != W::WIDTH || s == 0 || s >= l {
        return Err(BundleError::Ring { l, s });
    }
    if buf.len() < c.pos + 8 {
        return Err(BundleError::Truncated);
    }
    let body_len = buf.len() - 4;
    let crc = u32::from_le_bytes(buf[body_len..].try_into().unwrap());
    if crc32fast::hash(&buf[..body_len]) != crc {
        return Err(BundleError::Checksum);
    }
    let mut c = Cursor { buf: &buf[..body_len], pos: c.pos };
    let cfg = RingConfig { l: l as u32, s: s as u32 };
    let count = c.u32()?;
    let mut keys = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let kind = GateKind::from_u8(c.u8()?).ok_or_else(|| mal("unknown gate kind"))?;
        let plen = c.u32()? as usize;
        let params = c.take(plen)?;
        let nt = c.u16()? as usize;
        if nt > plen {
            return Err(mal("scale table"));
        }
        let (params, scales) = params.split_at(plen - nt);
        let mut tensors = Vec::with_capacity(nt);
        for &scale in scales {
            let rank = c.u8()? as usize;
            let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<R<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = c.take(n.checked_mul(W::BYTES).ok_or(BundleError::Truncated)?)?;
            let data = raw.chunks(W::BYTES).map(W::get_le).collect();
            tensors.push(RingTensor { shape, data, cfg, scale: scale as u32 });
        }
        let mut d = Dec { params, pos: 0, tensors: tensors.into_iter(), party };
        let key = decode_gate(kind, &mut d)?;
        if d.pos != params.len() || d.tensors.next().is_some() {
            return Err(mal("trailing gate data"));
        }
        keys.push(key);
    }
    if c.pos != body_len {
        return Err(mal("trailing bytes"));
    }
    Ok(Bundle { cfg, party, keys })
}

pub fn write_bundle<W: RingWord>(b: &Bundle<W>, path: impl AsRef<Path>) -> R<()> {
    std::fs::write(path, to_bytes(b))?;
    Ok(())
}

pub fn read_bundle<W: RingWord>(path: impl AsRef<Path>) -> R<Bundle<W>> {
    from_bytes(&std::fs::read(path)?)
}

/// Number of ring words one key stores in its payload tensors.
pub fn payload_words<W: RingWord>(k: &GateKey<W>) -> usize {
    let mut e = Enc { params: Vec::new(), tensors: Vec::new() };
    k.put(&mut e);
    e.tensors.iter().map(|t| t.len()).sum()
}

/// Number of payload tensors with their shapes, in file order.
pub fn payload_shapes<W: RingWord>(k: &GateKey<W>) -> Vec<Vec<usize>> {
    let mut e = Enc { params: Vec::new(), tensors: Vec::new() };
    k.put(&mut e);
    e.tensors.iter().map(|t| t.shape.clone()).collect()
}

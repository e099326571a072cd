//! Additive-sharing baselines: Beaver products on exchanged differences and
//! a bit comparison with a boolean-to-arithmetic conversion.
//!
//! Comparisons inside recip, sigmoid and softmax run under the `cmp` label
//! segment so that their traffic can be separated from the formula counts.

use crate::dealer::{dcf, BeaverKey, BeaverShape, BitLtKey, Dealer, DealerError, KeyQueue, SOFTMAX_CLIP};
use crate::ring::{encode_fixed, RingTensor, RingWord};
use crate::shares::{AdditiveShare, MaskShare};
use crate::transport::MsgType;

use super::{ProtoError, Session};

type T<W> = RingTensor<W>;
type Sh<W> = AdditiveShare<W>;
type Res<X> = Result<X, ProtoError>;

/// Label segment for comparison traffic inside the baseline approximations.
pub const CMP: &str = "cmp";

fn enc<W: RingWord>(sess: &Session, x: f64) -> Res<W> {
    Ok(encode_fixed(x, sess.cfg)?)
}

fn check_beaver<W: RingWord>(sess: &Session, k: &BeaverKey<W>, shape: BeaverShape) -> Res<()> {
    sess.check_party(k.party)?;
    if k.shape != shape {
        return Err(ProtoError::Param(format!("expected a {shape:?} triple")));
    }
    Ok(())
}

/// Opens E = x − a and F = y − b in one frame.
fn open_ef<W: RingWord>(sess: &mut Session, x: &T<W>, y: &T<W>, k: &BeaverKey<W>) -> Res<(T<W>, T<W>)> {
    if x.shape != k.a.shape || y.shape != k.b.shape {
        return Err(ProtoError::Shape(format!("triple {:?}·{:?} for {:?}·{:?}", k.a.shape, k.b.shape, x.shape, y.shape)));
    }
    let e = x.sub(&k.a);
    let f = y.sub(&k.b);
    let mut payload = e.data.clone();
    payload.extend_from_slice(&f.data);
    let peer: Vec<W> = sess.chan.exchange_words(MsgType::BeaverEf, &payload)?;
    let (pe, pf) = peer.split_at(e.len());
    let add = |t: &T<W>, p: &[W]| T { data: t.data.iter().zip(p).map(|(a, b)| a.wrapping_add(b)).collect(), ..t.clone() };
    Ok((add(&e, pe), add(&f, pf)))
}

/// Elementwise product without truncation (scales add).
pub fn ass_mul_untrunc<W: RingWord>(sess: &mut Session, x: &Sh<W>, y: &Sh<W>, k: &BeaverKey<W>) -> Res<Sh<W>> {
    check_beaver(sess, k, BeaverShape::Elementwise)?;
    let (e, f) = open_ef(sess, &x.values, &y.values, k)?;
    let mut z = k.c.add(&e.mul(&k.b)).add(&k.a.mul(&f));
    if sess.party == 1 {
        z = z.add(&e.mul(&f));
    }
    z.scale = x.values.scale + y.values.scale;
    Ok(Sh::new(sess.party, z))
}

pub fn ass_mul<W: RingWord>(sess: &mut Session, x: &Sh<W>, y: &Sh<W>, k: &BeaverKey<W>) -> Res<Sh<W>> {
    let z = ass_mul_untrunc(sess, x, y, k)?;
    sess.trunc(&z)
}

pub fn ass_matmul<W: RingWord>(sess: &mut Session, x: &Sh<W>, y: &Sh<W>, k: &BeaverKey<W>) -> Res<Sh<W>> {
    check_beaver(sess, k, BeaverShape::Matmul)?;
    let (e, f) = open_ef(sess, &x.values, &y.values, k)?;
    let mm = |a: &T<W>, b: &T<W>| a.matmul(b).map_err(ProtoError::from);
    let mut z = k.c.add(&mm(&e, &k.b)?).add(&mm(&k.a, &f)?);
    if sess.party == 1 {
        z = z.add(&mm(&e, &f)?);
    }
    z.scale = x.values.scale + y.values.scale;
    sess.trunc(&Sh::new(sess.party, z))
}

/// Shares of the integer bit 1{x < 0}.
pub fn baseline_lt<W: RingWord>(sess: &mut Session, x: &Sh<W>, k: &BitLtKey<W>) -> Res<Sh<W>> {
    sess.check_party(k.party)?;
    if x.values.shape != k.mask.shape {
        return Err(ProtoError::Shape(format!("comparison key {:?} for {:?}", k.mask.shape, x.values.shape)));
    }
    let party = sess.party;
    let mut xh = x.values.add(&k.mask);
    let peer: Vec<W> = sess.chan.exchange_words(MsgType::Open, &xh.data)?;
    for (a, b) in xh.data.iter_mut().zip(peer) {
        *a = a.wrapping_add(&b);
    }
    let lm = if W::WIDTH == 64 { u64::MAX >> 1 } else { (1u64 << (W::WIDTH - 1)) - 1 };
    let lows: Vec<u64> = xh.data.iter().map(|w| w.as_u64() & lm).collect();
    let c = dcf::eval(party, &k.dcf, &lows);
    // e = d ⊕ ρ, sent as whole words
    let e_share: Vec<W> = xh
        .data
        .iter()
        .zip(&c)
        .zip(k.rh.data.iter().zip(&k.rho_bool.data))
        .map(|((w, &c), (&rh, &rb))| {
            let xh_bit = if party == 0 && w.msb() { 1 } else { 0 };
            W::from_u64((c ^ rh.as_u64() ^ rb.as_u64() ^ xh_bit) & 1)
        })
        .collect();
    let peer: Vec<W> = sess.chan.exchange_words(MsgType::Open, &e_share)?;
    let b = W::from_u64(party as u64);
    let data = e_share
        .iter()
        .zip(peer)
        .zip(&k.rho_arith.data)
        .map(|((&a, p), &ra)| {
            let e = W::from_u64((a.as_u64() ^ p.as_u64()) & 1);
            let one_minus_2e = W::one().wrapping_sub(&e.wrapping_add(&e));
            b.wrapping_mul(&e).wrapping_add(&one_minus_2e.wrapping_mul(&ra))
        })
        .collect();
    Ok(Sh::new(party, T { shape: x.values.shape.clone(), data, cfg: sess.cfg, scale: 0 }))
}

/// Integer bit shares to fixed point times `c` (a public word scaled by 2^s).
fn bit_times<W: RingWord>(d: &Sh<W>, c: W, scale: u32) -> Sh<W> {
    let mut v = d.values.map(|w| w.wrapping_mul(&c));
    v.scale = scale;
    Sh::new(d.party, v)
}

pub fn baseline_square<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>) -> Res<Sh<W>> {
    let k = q.pop_beaver()?;
    ass_mul(sess, x, x, &k)
}

/// x^(2^m) by m Beaver squarings.
pub fn baseline_power<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, m: usize) -> Res<Sh<W>> {
    let mut y = x.clone();
    for _ in 0..m {
        y = baseline_square(sess, q, &y)?;
    }
    Ok(y)
}

pub fn baseline_exp<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, m: usize) -> Res<Sh<W>> {
    let s = sess.cfg.s;
    let base = sess.trunc_to(x, m as u32, s)?.add_public_word(sess.cfg.one());
    baseline_power(sess, q, &base, m)
}

/// 1/x with Newton iterations; `y0 = None` takes the exp-based initial value.
pub fn baseline_recip<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, m: usize, y0: Option<f64>, m_exp: usize) -> Res<Sh<W>> {
    let cfg = sess.cfg;
    let one: W = cfg.one();
    let d = sess.scoped(CMP, |sess| {
        let k = q.pop_bit_lt()?;
        baseline_lt(sess, x, &k)
    })?;
    let sign = bit_times(&d, one.wrapping_neg().wrapping_add(&one.wrapping_neg()), cfg.s).add_public_word(one);
    let k = q.pop_beaver()?;
    let abs = ass_mul(sess, x, &sign, &k)?;
    let mut y = match y0 {
        Some(v) => Sh::public(sess.party, &T::filled(&x.values.shape, enc(sess, v)?, cfg)),
        None => {
            let w = abs.mul_int(-2).add_public_word(one);
            let e = baseline_exp(sess, q, &w, m_exp)?;
            e.mul_int(3).add_public_word(enc(sess, 0.003)?)
        }
    };
    for _ in 0..m {
        let k = q.pop_beaver()?;
        let y2 = ass_mul(sess, &y, &y, &k)?;
        let k = q.pop_beaver()?;
        let xy2 = ass_mul(sess, &abs, &y2, &k)?;
        y = y.mul_int(2).sub(&xy2);
    }
    let k = q.pop_beaver()?;
    ass_mul(sess, &y, &sign, &k)
}

pub fn baseline_sigmoid<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, m_exp: usize, m_recip: usize) -> Res<Sh<W>> {
    let cfg = sess.cfg;
    let one: W = cfg.one();
    let d = sess.scoped(CMP, |sess| {
        let k = q.pop_bit_lt()?;
        baseline_lt(sess, x, &k)
    })?;
    let p = bit_times(&d, one, cfg.s);
    let sign = p.mul_int(-2).add_public_word(one);
    let k = q.pop_beaver()?;
    let abs = ass_mul(sess, x, &sign, &k)?;
    let e = baseline_exp(sess, q, &abs.neg(), m_exp)?;
    let t = baseline_recip(sess, q, &e.add_public_word(one), m_recip, Some(super::SIGMOID_RECIP_INIT), 0)?;
    let k = q.pop_beaver()?;
    let a = ass_mul_untrunc(sess, &t, &p.neg().add_public_word(one), &k)?;
    let k = q.pop_beaver()?;
    let b = ass_mul_untrunc(sess, &t.neg().add_public_word(one), &p, &k)?;
    sess.trunc(&a.add(&b))
}

pub fn baseline_tanh<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, m_exp: usize, m_recip: usize) -> Res<Sh<W>> {
    let one: W = sess.cfg.one();
    let s = baseline_sigmoid(sess, q, &x.mul_int(2), m_exp, m_recip)?;
    Ok(s.mul_int(2).add_public_word(one.wrapping_neg()))
}

/// Softmax over the last axis of length `k`.
pub fn baseline_softmax<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, k: usize, m: usize) -> Res<Sh<W>> {
    if x.values.shape.last() != Some(&k) {
        return Err(ProtoError::Shape(format!("softmax over {:?} with k={k}", x.values.shape)));
    }
    let cfg = sess.cfg;
    let (a0, a1) = SOFTMAX_CLIP;
    let inv_m: W = enc(sess, 1.0 / m as f64)?;
    let mut relu = |sess: &mut Session, a: f64| -> Res<Sh<W>> {
        let z = x.add_public_word(enc::<W>(sess, a)?.wrapping_neg());
        let d = sess.scoped(CMP, |sess| {
            let kk = q.pop_bit_lt()?;
            baseline_lt(sess, &z, &kk)
        })?;
        let c = bit_times(&d, inv_m.wrapping_neg(), cfg.s).add_public_word(inv_m);
        let kk = q.pop_beaver()?;
        ass_mul(sess, &z, &c, &kk)
    };
    let lo = relu(sess, a0)?;
    let hi = relu(sess, a1)?;
    let xp = lo.sub(&hi).add_public_word(enc(sess, a0 / m as f64)?);
    let mut y = Sh::public(sess.party, &T::filled(&x.values.shape, enc(sess, 1.0 / k as f64)?, cfg));
    for _ in 0..m {
        let kk = q.pop_beaver()?;
        let t = ass_mul(sess, &xp, &y, &kk)?;
        let st = Sh::new(sess.party, t.values.sum_last().repeat_last(k));
        let kk = q.pop_beaver()?;
        let qq = ass_mul(sess, &y, &st, &kk)?;
        y = y.add(&t).sub(&qq);
    }
    Ok(y)
}

fn broadcast<W: RingWord>(v: &T<W>, rows: bool, other: usize) -> T<W> {
    let n = *v.shape.last().unwrap_or(&0);
    let lead = &v.shape[..v.shape.len().saturating_sub(1)];
    let batches = if n == 0 { 0 } else { v.len() / n };
    let mut data = Vec::with_capacity(batches * n * other);
    for b in 0..batches {
        let row = &v.data[b * n..(b + 1) * n];
        if rows {
            for &a in row {
                data.extend(std::iter::repeat(a).take(other));
            }
        } else {
            for _ in 0..other {
                data.extend_from_slice(row);
            }
        }
    }
    let mut shape = lead.to_vec();
    if rows {
        shape.extend([n, other]);
    } else {
        shape.extend([other, n]);
    }
    T { shape, data, cfg: v.cfg, scale: v.scale }
}

/// Outer product of the last axes by broadcasting and an elementwise product.
pub fn baseline_tp<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, v: &Sh<W>, w: &Sh<W>) -> Res<Sh<W>> {
    let (n, m) = (*v.values.shape.last().unwrap_or(&0), *w.values.shape.last().unwrap_or(&0));
    let bv = Sh::new(v.party, broadcast(&v.values, true, m));
    let bw = Sh::new(w.party, broadcast(&w.values, false, n));
    if bv.values.shape != bw.values.shape {
        return Err(ProtoError::Shape(format!("outer product of {:?} and {:?}", v.values.shape, w.values.shape)));
    }
    let k = q.pop_beaver()?;
    ass_mul(sess, &bv, &bw, &k)
}

fn pop_shares<W: RingWord>(sess: &Session, q: &mut KeyQueue<W>) -> Res<MaskShare<W>> {
    let s = q.pop_offset()?;
    sess.check_party(s.party)?;
    Ok(s)
}

/// Dropout with a dealer-shared keep mask.
pub fn baseline_dropout_static<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>) -> Res<Sh<W>> {
    let sigma = pop_shares(sess, q)?;
    let k = q.pop_beaver()?;
    ass_mul(sess, x, &Sh::new(sess.party, sigma.values), &k)
}

/// Dropout with p supplied online: compare shared uniforms against p.
pub fn baseline_dropout_dynamic<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, p: f64) -> Res<Sh<W>> {
    if !(0.0..1.0).contains(&p) {
        return Err(ProtoError::Param(format!("dropout probability {p} outside [0, 1)")));
    }
    let cfg = sess.cfg;
    let r = pop_shares(sess, q)?;
    let c = Sh::new(sess.party, r.values).add_public_word(enc::<W>(sess, p)?.wrapping_neg());
    let k = q.pop_bit_lt()?;
    let d = baseline_lt(sess, &c, &k)?;
    let keep: W = enc(sess, 1.0 / (1.0 - p))?;
    let sigma = bit_times(&d, keep.wrapping_neg(), cfg.s).add_public_word(keep);
    let k = q.pop_beaver()?;
    ass_mul(sess, x, &sigma, &k)
}

/// Baseline operation with the parameters its keys depend on.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineOp {
    Mul,
    Square,
    Power {
        m: usize,
    },
    Exp {
        m: usize,
    },
    Recip {
        m: usize,
        with_init: bool,
        m_exp: usize,
    },
    Sigmoid {
        m_exp: usize,
        m_recip: usize,
    },
    Tanh {
        m_exp: usize,
        m_recip: usize,
    },
    Softmax {
        k: usize,
        m: usize,
    },
    /// Input shapes [.., N] and [.., M].
    Tp {
        m: usize,
    },
    DropoutStatic {
        p: f64,
    },
    DropoutDynamic,
}

type Qs<W> = (KeyQueue<W>, KeyQueue<W>);

fn push_beaver<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize]) -> Result<(), DealerError> {
    let kp = d.gen_beaver(shape, shape, BeaverShape::Elementwise)?;
    crate::dealer::push_pair(qs, kp);
    Ok(())
}

fn push_bit_lt<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize]) {
    let kp = d.gen_bit_lt(shape);
    crate::dealer::push_pair(qs, kp);
}

fn push_recip<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize], m: usize, with_init: bool, m_exp: usize) -> Result<(), DealerError> {
    push_bit_lt(d, qs, shape);
    push_beaver(d, qs, shape)?;
    if !with_init {
        for _ in 0..m_exp {
            push_beaver(d, qs, shape)?;
        }
    }
    for _ in 0..2 * m + 1 {
        push_beaver(d, qs, shape)?;
    }
    Ok(())
}

fn push_sigmoid<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize], m_exp: usize, m_recip: usize) -> Result<(), DealerError> {
    push_bit_lt(d, qs, shape);
    for _ in 0..1 + m_exp {
        push_beaver(d, qs, shape)?;
    }
    push_recip(d, qs, shape, m_recip, true, 0)?;
    push_beaver(d, qs, shape)?;
    push_beaver(d, qs, shape)
}

/// Keys for one baseline operation on inputs of `shape`, in evaluation order.
/// `forced_r` fixes the dropout draws.
pub fn baseline_keys<W: RingWord>(d: &mut Dealer<W>, op: &BaselineOp, shape: &[usize], forced_r: Option<&[f64]>) -> Result<Qs<W>, DealerError> {
    let mut qs = (KeyQueue::new(), KeyQueue::new());
    match *op {
        BaselineOp::Mul | BaselineOp::Square => push_beaver(d, &mut qs, shape)?,
        BaselineOp::Power { m } | BaselineOp::Exp { m } => {
            for _ in 0..m {
                push_beaver(d, &mut qs, shape)?;
            }
        }
        BaselineOp::Recip { m, with_init, m_exp } => push_recip(d, &mut qs, shape, m, with_init, m_exp)?,
        BaselineOp::Sigmoid { m_exp, m_recip } | BaselineOp::Tanh { m_exp, m_recip } => push_sigmoid(d, &mut qs, shape, m_exp, m_recip)?,
        BaselineOp::Softmax { m, .. } => {
            for _ in 0..2 {
                push_bit_lt(d, &mut qs, shape);
                push_beaver(d, &mut qs, shape)?;
            }
            for _ in 0..2 * m {
                push_beaver(d, &mut qs, shape)?;
            }
        }
        BaselineOp::Tp { m } => {
            let mut s = shape.to_vec();
            s.push(m);
            push_beaver(d, &mut qs, &s)?;
        }
        BaselineOp::DropoutStatic { p } => {
            let kp = d.gen_dropout_mask(shape, p, forced_r)?;
            crate::dealer::push_pair(&mut qs, kp);
            push_beaver(d, &mut qs, shape)?;
        }
        BaselineOp::DropoutDynamic => {
            let kp = match forced_r {
                Some(f) => {
                    let cfg = d.cfg();
                    let v = T::from_reals(f, shape, cfg)?;
                    d.gen_shares(&v)
                }
                None => d.gen_unit_randoms(shape),
            };
            crate::dealer::push_pair(&mut qs, kp);
            push_bit_lt(d, &mut qs, shape);
            push_beaver(d, &mut qs, shape)?;
        }
    }
    Ok(qs)
}

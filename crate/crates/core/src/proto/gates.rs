//! Offset-function gates. Each gate opens its masked inputs (once per wire),
//! evaluates locally on the public values and the key, and truncates.

use crate::dealer::batched_outer;
use crate::dealer::dcf;
use crate::dealer::keys::*;
use crate::ring::{encode_fixed, RingTensor, RingWord};
use crate::shares::{AdditiveShare, MaskedWire, OffsetId};

use super::{ProtoError, Session};

type T<W> = RingTensor<W>;
type Res<X> = Result<X, ProtoError>;

/// Initial value of the reciprocal inside the sigmoid.
pub const SIGMOID_RECIP_INIT: f64 = 0.75;

fn enc<W: RingWord>(sess: &Session, x: f64) -> Res<W> {
    Ok(encode_fixed(x, sess.cfg)?)
}

fn share<W: RingWord>(sess: &Session, values: T<W>) -> AdditiveShare<W> {
    AdditiveShare::new(sess.party, values)
}

/// Output wire of a gate: the truncated share plus the output offset share.
fn finish<W: RingWord>(t: AdditiveShare<W>, r_out: Option<&T<W>>, out: OffsetId) -> MaskedWire<W> {
    let values = match r_out {
        Some(r) => t.values.add(r),
        None => t.values,
    };
    MaskedWire::from_shares(t.party, values, if r_out.is_some() { out } else { OffsetId::NONE })
}

/// b·x̂ŷ − x̂·r2 − ŷ·r1 + q at scale 2s, for public x̂, ŷ.
pub fn mul_local<W: RingWord>(party: u8, xh: &T<W>, yh: &T<W>, r1: &T<W>, r2: &T<W>, q: &T<W>) -> T<W> {
    let b = W::from_u64(party as u64);
    let data = xh
        .data
        .iter()
        .zip(&yh.data)
        .zip(r1.data.iter().zip(&r2.data))
        .zip(&q.data)
        .map(|(((&x, &y), (&a, &c)), &q)| {
            b.wrapping_mul(&x).wrapping_mul(&y).wrapping_sub(&x.wrapping_mul(&c)).wrapping_sub(&y.wrapping_mul(&a)).wrapping_add(&q)
        })
        .collect();
    RingTensor { shape: xh.shape.clone(), data, cfg: xh.cfg, scale: xh.scale + yh.scale }
}

/// b·x̂² − 2r·x̂ + q at scale 2s.
pub fn square_local<W: RingWord>(party: u8, xh: &T<W>, r: &T<W>, q: &T<W>) -> T<W> {
    mul_local(party, xh, xh, r, r, q)
}

/// b·(x̂ ⊗ ŷ) − x̂ ⊗ r2 − r1 ⊗ ŷ + q along the last axes.
pub fn tp_local<W: RingWord>(party: u8, xh: &T<W>, yh: &T<W>, r1: &T<W>, r2: &T<W>, q: &T<W>) -> Res<T<W>> {
    let o = |a: &T<W>, b: &T<W>| batched_outer(a, b).map_err(ProtoError::Shape);
    let xy = o(xh, yh)?;
    let mut z = q.sub(&o(xh, r2)?).sub(&o(r1, yh)?);
    if party == 1 {
        z = z.add(&xy);
    }
    z.scale = xy.scale;
    Ok(z)
}

fn check_shape<W: RingWord>(a: &T<W>, b: &T<W>, what: &str) -> Res<()> {
    if a.shape != b.shape {
        return Err(ProtoError::Shape(format!("{what}: {:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

pub fn eval_mul<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, y: &mut MaskedWire<W>, key: MulKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.in1)?;
    y.check(key.in2)?;
    check_shape(&x.values, &key.r1, "mul input 1")?;
    check_shape(&y.values, &key.r2, "mul input 2")?;
    mul_core(sess, x, y, &key)
}

fn mul_core<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, y: &mut MaskedWire<W>, key: &MulKey<W>) -> Res<MaskedWire<W>> {
    sess.open_all(&mut [&mut *x, &mut *y])?;
    let z = mul_local(sess.party, x.hat(), y.hat(), &key.r1, &key.r2, &key.q);
    let t = sess.trunc(&share(sess, z))?;
    Ok(finish(t, key.r_out.as_ref(), key.out))
}

pub fn eval_square<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: SquareKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.r_in, "square input")?;
    sess.open(x)?;
    let z = square_local(sess.party, x.hat(), &key.r_in, &key.q);
    let t = sess.trunc(&share(sess, z))?;
    Ok(finish(t, key.r_out.as_ref(), key.out))
}

fn chain_core<W: RingWord>(sess: &mut Session, mut w: MaskedWire<W>, chain: &SquareChain<W>, out: OffsetId) -> Res<MaskedWire<W>> {
    let m = chain.len();
    for i in 0..m {
        sess.open(&mut w)?;
        let z = square_local(sess.party, w.hat(), &chain.offsets[i], &chain.qs[i]);
        let t = sess.trunc(&share(sess, z))?;
        w = if i + 1 < m { finish(t, Some(&chain.offsets[i + 1]), OffsetId::NONE) } else { finish(t, chain.r_out.as_ref(), out) };
    }
    Ok(w)
}

/// x^(2^m) by m squarings.
pub fn eval_power<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: PowerKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.chain.offsets[0], "power input")?;
    sess.open(x)?;
    chain_core(sess, x.clone(), &key.chain, key.out)
}

/// (1 + x/2^m)^(2^m), without opening x̂.
pub fn eval_exp<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: ExpKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.r_in, "exp input")?;
    exp_core(sess, x, &key)
}

fn exp_core<W: RingWord>(sess: &mut Session, x: &MaskedWire<W>, key: &ExpKey<W>) -> Res<MaskedWire<W>> {
    let s = sess.cfg.s;
    let xs = share(sess, x.hat_share().sub(&key.r_in));
    let t = sess.trunc_to(&xs, key.m() as u32, s)?;
    let base = t.add_public_word(sess.cfg.one()).values.add(&key.chain.offsets[0]);
    chain_core(sess, MaskedWire::from_shares(sess.party, base, OffsetId::NONE), &key.chain, key.out)
}

/// β·1{x < 0} from a public x̂, `k` payload words per element.
pub fn lt_local<W: RingWord>(party: u8, key: &LtKey<W>, xh: &[W]) -> Vec<W> {
    let lm = if W::WIDTH == 64 { u64::MAX >> 1 } else { (1u64 << (W::WIDTH - 1)) - 1 };
    let lows: Vec<u64> = xh.iter().map(|w| w.as_u64() & lm).collect();
    let d = dcf::eval(party, &key.dcf, &lows);
    let k = key.k;
    let mut out = Vec::with_capacity(xh.len() * k);
    for (j, w) in xh.iter().enumerate() {
        for c in 0..k {
            let i = j * k + c;
            let inner = key.rh_beta.data[i].wrapping_add(&W::from_u64(d[i]));
            out.push(if w.msb() { key.beta.data[i].wrapping_sub(&inner) } else { inner });
        }
    }
    out
}

/// Shares of 1{x < 0} in fixed point.
pub fn eval_less_than<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: LtKey<W>) -> Res<AdditiveShare<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    if key.k != 1 || key.dcf.count() != x.len() {
        return Err(ProtoError::Shape("less-than key size".into()));
    }
    sess.open(x)?;
    let data = lt_local(sess.party, &key, &x.hat().data);
    Ok(share(sess, RingTensor { shape: x.values.shape.clone(), data, cfg: sess.cfg, scale: sess.cfg.s }))
}

/// c·max(z, 0) from a public ẑ carrying the key's input offset.
fn relu_core<W: RingWord>(sess: &mut Session, zh: &T<W>, key: &ReluKey<W>, c: W) -> Res<AdditiveShare<W>> {
    let d = lt_local(sess.party, &key.lt, &zh.data);
    let one_minus: Vec<W> = d.iter().map(|&d| sess.public_word(W::one()).wrapping_sub(&d).wrapping_mul(&c)).collect();
    let o = RingTensor { shape: zh.shape.clone(), data: one_minus, cfg: sess.cfg, scale: sess.cfg.s }.add(&key.mul.r2);
    let mut ow = MaskedWire::from_shares(sess.party, o, OffsetId::NONE);
    sess.open(&mut ow)?;
    let z = mul_local(sess.party, zh, ow.hat(), &key.mul.r1, &key.mul.r2, &key.mul.q);
    sess.trunc(&share(sess, z))
}

/// max(x, 0) as additive shares.
pub fn eval_relu<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: ReluKey<W>) -> Res<AdditiveShare<W>> {
    sess.check_party(key.party)?;
    x.check(key.lt.input)?;
    check_shape(&x.values, &key.mul.r1, "relu input")?;
    sess.open(x)?;
    let one = sess.cfg.one();
    relu_core(sess, x.hat(), &key, one)
}

/// 1/x by Newton iteration; `y0` is required when the key has no exp subkey.
pub fn eval_recip<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: RecipKey<W>, y0: Option<f64>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.mul_abs.r1, "recip input")?;
    recip_core(sess, x, &key, y0)
}

fn recip_core<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: &RecipKey<W>, y0: Option<f64>) -> Res<MaskedWire<W>> {
    let (party, cfg) = (sess.party, sess.cfg);
    let one: W = cfg.one();
    sess.open(x)?;
    let xh = x.hat().clone();
    let p = RingTensor { shape: xh.shape.clone(), data: lt_local(party, &key.lt, &xh.data), cfg, scale: cfg.s };
    // s = 1 − 2p
    let sign = p.mul_int(-2).add_word(sess.public_word(one));
    let mut sw = MaskedWire::from_shares(party, sign.add(&key.mul_abs.r2), OffsetId::NONE);
    sess.open(&mut sw)?;
    let z = mul_local(party, &xh, sw.hat(), &key.mul_abs.r1, &key.mul_abs.r2, &key.mul_abs.q);
    let t = sess.trunc(&share(sess, z))?;
    let a = key.mul_abs.r_out.as_ref().ok_or_else(|| ProtoError::Param("recip key lacks |x| offset".into()))?;
    let mut absw = finish(t, Some(a), OffsetId::NONE);
    sess.open(&mut absw)?;
    let ah = absw.hat().clone();

    let (mut yh, mut big_r) = match (&key.exp, &key.r0, y0) {
        (Some(ek), _, None) => {
            // 1 − 2|x|, public with offset −2a
            let w = ah.mul_int(-2).add_word(one);
            let ww = MaskedWire { party, values: w, offset_id: OffsetId::NONE, opened: true };
            let e = exp_core(sess, &ww, ek)?;
            let c = enc::<W>(sess, 0.003)?;
            let r_e = ek.chain.r_out.as_ref().ok_or_else(|| ProtoError::Param("recip exp key lacks output offset".into()))?;
            (e.values.mul_int(3).add_word(sess.public_word(c)), r_e.mul_int(3))
        }
        (None, Some(r0), Some(y0)) => {
            let c = enc::<W>(sess, y0)?;
            (r0.add_word(sess.public_word(c)), r0.clone())
        }
        (None, _, None) => return Err(ProtoError::Param("recip key was generated for a caller-supplied initial value".into())),
        _ => return Err(ProtoError::Param("recip key carries its own initial value".into())),
    };
    for st in &key.steps {
        let mut tw = MaskedWire::from_shares(party, yh, OffsetId::NONE);
        sess.open(&mut tw)?;
        let th = tw.hat().clone();
        let sq = sess.trunc(&share(sess, square_local(party, &th, &big_r, &st.q)))?;
        let mut uw = finish(sq, Some(&st.u), OffsetId::NONE);
        sess.open(&mut uw)?;
        let prod = mul_local(party, &ah, uw.hat(), a, &st.u, &st.v);
        let mo = sess.trunc(&share(sess, prod))?.values.add(&st.m);
        // 2y − x·y², offset −m
        yh = sess.public(&th).sub(&big_r).mul_int(2).sub(&mo);
        big_r = st.m.neg();
    }
    let mut yw = MaskedWire::from_shares(party, yh, OffsetId::NONE);
    let mut s2 = MaskedWire::from_shares(party, sign.add(&key.mul_sign.r2), OffsetId::NONE);
    mul_core(sess, &mut yw, &mut s2, &MulKey { out: key.out, ..key.mul_sign.clone() })
}

pub fn eval_sigmoid<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: SigmoidKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.mul1.r1, "sigmoid input")?;
    sigmoid_core(sess, x, &key)
}

fn sigmoid_core<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: &SigmoidKey<W>) -> Res<MaskedWire<W>> {
    let (party, cfg) = (sess.party, sess.cfg);
    let one: W = cfg.one();
    sess.open(x)?;
    let xh = x.hat().clone();
    let p = RingTensor { shape: xh.shape.clone(), data: lt_local(party, &key.lt, &xh.data), cfg, scale: cfg.s };
    let sign = p.mul_int(-2).add_word(sess.public_word(one));
    let mut sw = MaskedWire::from_shares(party, sign.add(&key.mul1.r2), OffsetId::NONE);
    sess.open(&mut sw)?;
    let z = mul_local(party, &xh, sw.hat(), &key.mul1.r1, &key.mul1.r2, &key.mul1.q);
    let abs_hat = sess.trunc(&share(sess, z))?.values.add(key.mul1.r_out.as_ref().expect("sigmoid |x| offset"));
    // e^(−|x|) on the negated wire, then 1 + e^(−|x|)
    let negw = MaskedWire::from_shares(party, abs_hat.neg(), OffsetId::NONE);
    let e = exp_core(sess, &negw, &key.exp)?;
    let mut den = MaskedWire::from_shares(party, e.values.add_word(sess.public_word(one)), OffsetId::NONE);
    let t = recip_core(sess, &mut den, &key.recip, Some(SIGMOID_RECIP_INIT))?.values;
    let pub_one = RingTensor::filled(&t.shape, sess.public_word(one), cfg);
    let mut w2 = MaskedWire::from_shares(party, t.add(&key.mul2.r1), OffsetId::NONE);
    let mut w5 = MaskedWire::from_shares(party, pub_one.sub(&p).add(&key.mul2.r2), OffsetId::NONE);
    let mut w6 = MaskedWire::from_shares(party, pub_one.sub(&t).add(&key.mul3.r1), OffsetId::NONE);
    let mut w7 = MaskedWire::from_shares(party, p.add(&key.mul3.r2), OffsetId::NONE);
    sess.open_all(&mut [&mut w2, &mut w5, &mut w6, &mut w7])?;
    let z2 = mul_local(party, w2.hat(), w5.hat(), &key.mul2.r1, &key.mul2.r2, &key.mul2.q);
    let z3 = mul_local(party, w6.hat(), w7.hat(), &key.mul3.r1, &key.mul3.r2, &key.mul3.q);
    let tr = sess.trunc(&share(sess, z2.add(&z3)))?;
    Ok(finish(tr, key.r_out.as_ref(), key.out))
}

/// 2σ(2x) − 1.
pub fn eval_tanh<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: TanhKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.sig.mul1.r1, "tanh input")?;
    let mut x2 = MaskedWire { party: x.party, values: x.values.mul_int(2), offset_id: OffsetId::NONE, opened: x.opened };
    let sig = sigmoid_core(sess, &mut x2, &key.sig)?;
    let one: W = sess.cfg.one();
    let y = AdditiveShare::new(sess.party, sig.values.mul_int(2)).add_public_word(one.wrapping_neg());
    Ok(finish(y, key.r_out.as_ref(), key.out))
}

pub fn eval_dropout_static<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: DropoutStaticKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.r_in, "dropout input")?;
    sess.open(x)?;
    let z = mul_local(sess.party, x.hat(), &key.sigma_hat, &key.r_in, &key.r_sigma, &key.q);
    let t = sess.trunc(&share(sess, z))?;
    Ok(finish(t, key.r_out.as_ref(), key.out))
}

pub fn eval_dropout_dynamic<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: DropoutDynamicKey<W>, p: f64) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    check_shape(&x.values, &key.r_in, "dropout input")?;
    if !(0.0..1.0).contains(&p) {
        return Err(ProtoError::Param(format!("dropout probability {p} outside [0, 1)")));
    }
    let party = sess.party;
    let pw: W = enc(sess, p)?;
    // c = r − p, masked with the comparison offset
    let c = key.r.add_word(sess.public_word(pw).wrapping_neg()).add(&key.lt.mask);
    let mut cw = MaskedWire::from_shares(party, c, OffsetId::NONE);
    sess.open_all(&mut [&mut *x, &mut cw])?;
    let xh = x.hat();
    let dd = lt_local(party, &key.lt, &cw.hat().data);
    let b = W::from_u64(party as u64);
    let data: Vec<W> = xh
        .data
        .iter()
        .zip(&key.r_in.data)
        .enumerate()
        .map(|(j, (&xh, &ri))| b.wrapping_mul(&xh).wrapping_sub(&ri).wrapping_sub(&xh.wrapping_mul(&dd[2 * j])).wrapping_add(&dd[2 * j + 1]))
        .collect();
    let kept = RingTensor { shape: xh.shape.clone(), data, cfg: sess.cfg, scale: sess.cfg.s };
    let scale: W = enc(sess, 1.0 / (1.0 - p))?;
    let z = share(sess, kept).mul_public_word(scale, sess.cfg.s);
    let t = sess.trunc(&z)?;
    Ok(finish(t, key.r_out.as_ref(), key.out))
}

/// Outer product along the last axes.
pub fn eval_tp<W: RingWord>(sess: &mut Session, v: &mut MaskedWire<W>, w: &mut MaskedWire<W>, key: TpKey<W>) -> Res<MaskedWire<W>> {
    sess.check_party(key.party)?;
    v.check(key.in1)?;
    w.check(key.in2)?;
    check_shape(&v.values, &key.r1, "tp input 1")?;
    check_shape(&w.values, &key.r2, "tp input 2")?;
    sess.open_all(&mut [&mut *v, &mut *w])?;
    let z = tp_local(sess.party, v.hat(), w.hat(), &key.r1, &key.r2, &key.q)?;
    let t = sess.trunc(&share(sess, z))?;
    Ok(finish(t, key.r_out.as_ref(), key.out))
}

/// Softmax over the last axis; additive output shares.
pub fn eval_softmax<W: RingWord>(sess: &mut Session, x: &mut MaskedWire<W>, key: SoftmaxKey<W>) -> Res<AdditiveShare<W>> {
    sess.check_party(key.party)?;
    x.check(key.input)?;
    if x.values.shape.last() != Some(&key.k) {
        return Err(ProtoError::Shape(format!("softmax over {:?} with k={}", x.values.shape, key.k)));
    }
    check_shape(&x.values, &key.relu_lo.mul.r1, "softmax input")?;
    let (party, cfg) = (sess.party, sess.cfg);
    let m = key.m();
    sess.open(x)?;
    let xh = x.hat().clone();
    let inv_m: W = enc(sess, 1.0 / m as f64)?;
    // x' = (a0 + ReLU(x − a0) − ReLU(x − a1)) / m
    let a0: W = enc(sess, key.a0)?;
    let a1: W = enc(sess, key.a1)?;
    let lo = relu_core(sess, &xh.add_word(a0.wrapping_neg()), &key.relu_lo, inv_m)?;
    let hi = relu_core(sess, &xh.add_word(a1.wrapping_neg()), &key.relu_hi, inv_m)?;
    let a0m: W = enc(sess, key.a0 / m as f64)?;
    let xp = lo.sub(&hi).add_public_word(a0m);
    let first = key.iters.first().ok_or_else(|| ProtoError::Param("softmax key without iterations".into()))?;
    let mut xpw = MaskedWire::from_shares(party, xp.values.add(&first.mul_t.r1), OffsetId::NONE);
    sess.open(&mut xpw)?;
    let inv_k: W = enc(sess, 1.0 / key.k as f64)?;
    let mut y = AdditiveShare::new(party, RingTensor::filled(&xh.shape, sess.public_word(inv_k), cfg));
    for it in &key.iters {
        let mut yw = MaskedWire::from_shares(party, y.values.add(&it.mul_t.r2), OffsetId::NONE);
        sess.open(&mut yw)?;
        let t = sess.trunc(&share(sess, mul_local(party, xpw.hat(), yw.hat(), &it.mul_t.r1, &it.mul_t.r2, &it.mul_t.q)))?;
        let st = t.values.sum_last().repeat_last(key.k);
        let mut sw = MaskedWire::from_shares(party, st.add(&it.mul_q.r2), OffsetId::NONE);
        sess.open(&mut sw)?;
        let q = sess.trunc(&share(sess, mul_local(party, yw.hat(), sw.hat(), &it.mul_q.r1, &it.mul_q.r2, &it.mul_q.q)))?;
        y = y.add(&t).sub(&q);
    }
    Ok(y)
}

//! Secure layers for the trainable head: linear → tanh → linear → softmax-CE.
//!
//! Every function pops its keys from a [`KeyQueue`] in evaluation order; the
//! `gen_*` functions push the matching keys in the same order.

use crate::dealer::{push_pair, BeaverShape, Dealer, DealerError, KeyQueue};
use crate::proto::{self, ProtoError, Session};
use crate::ring::{encode_fixed, RingTensor, RingWord};
use crate::shares::{to_masked, AdditiveShare};

type Sh<W> = AdditiveShare<W>;
type Res<X> = Result<X, ProtoError>;
type Qs<W> = (KeyQueue<W>, KeyQueue<W>);

/// Iteration counts of the nonlinear gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Approx {
    pub m_exp: usize,
    pub m_recip: usize,
    pub m_softmax: usize,
}

impl Default for Approx {
    fn default() -> Self {
        Approx { m_exp: 8, m_recip: 3, m_softmax: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadDims {
    pub d_in: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// One line of a head definition file.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Linear { ins: usize, outs: usize },
    Tanh,
    Dropout(f64),
    Softmax,
}

/// Parses `linear in out`, `tanh`, `dropout p` and `softmax` lines.
pub fn parse_head(text: &str) -> Result<Vec<LayerSpec>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || format!("head line {}: {line}", n + 1);
        let num = |i: usize| f.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad);
        out.push(match (f[0], f.len()) {
            ("linear", 3) => LayerSpec::Linear { ins: num(1)?, outs: num(2)? },
            ("tanh", 1) => LayerSpec::Tanh,
            ("softmax", 1) => LayerSpec::Softmax,
            ("dropout", 2) => LayerSpec::Dropout(f[1].parse().ok().filter(|p: &f64| (0.0..1.0).contains(p)).ok_or_else(bad)?),
            _ => return Err(bad()),
        });
    }
    Ok(out)
}

/// Dimensions of a trainable head: linear, tanh, linear, softmax. A dropout
/// line with p = 0 is the identity and may appear anywhere.
pub fn head_dims(layers: &[LayerSpec]) -> Result<HeadDims, String> {
    let core: Vec<&LayerSpec> = layers.iter().filter(|l| **l != LayerSpec::Dropout(0.0)).collect();
    match core.as_slice() {
        [LayerSpec::Linear { ins, outs: h }, LayerSpec::Tanh, LayerSpec::Linear { ins: h2, outs: k }, LayerSpec::Softmax] if h == h2 => {
            Ok(HeadDims { d_in: *ins, hidden: *h, classes: *k })
        }
        _ => Err("the training head must be linear d h, tanh, linear h k, softmax (dropout only with p = 0)".into()),
    }
}

/// Weights (out×in) and bias (out) as additive shares.
#[derive(Debug, Clone)]
pub struct SecureLinear<W> {
    pub w: Sh<W>,
    pub bias: Sh<W>,
    cached_input: Option<Sh<W>>,
}

#[derive(Debug, Clone)]
pub struct GradientSet<W> {
    pub dw: Sh<W>,
    pub dbias: Sh<W>,
}

impl<W: RingWord> SecureLinear<W> {
    pub fn new(w: Sh<W>, bias: Sh<W>) -> Self {
        SecureLinear { w, bias, cached_input: None }
    }

    pub fn out_dim(&self) -> usize {
        self.w.values.shape[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.values.shape[1]
    }
}

fn add_rows<W: RingWord>(x: &Sh<W>, b: &Sh<W>) -> Sh<W> {
    let c = b.values.len();
    let mut v = x.values.clone();
    for (i, d) in v.data.iter_mut().enumerate() {
        *d = d.wrapping_add(&b.values.data[i % c]);
    }
    Sh::new(x.party, v)
}

fn scale_by<W: RingWord>(sess: &mut Session, x: &Sh<W>, c: f64) -> Res<Sh<W>> {
    let w: W = encode_fixed(c, sess.cfg)?;
    let s = sess.cfg.s;
    sess.trunc(&x.mul_public_word(w, s))
}

/// x·Wᵀ + bias; caches x.
pub fn linear_forward<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, layer: &mut SecureLinear<W>, x: &Sh<W>) -> Res<Sh<W>> {
    if x.values.shape.len() != 2 || x.values.shape[1] != layer.in_dim() {
        return Err(ProtoError::Shape(format!("linear {}→{} on {:?}", layer.in_dim(), layer.out_dim(), x.values.shape)));
    }
    let k = q.pop_beaver()?;
    let wt = Sh::new(layer.w.party, layer.w.values.transpose());
    let z = proto::ass_matmul(sess, x, &wt, &k)?;
    layer.cached_input = Some(x.clone());
    Ok(add_rows(&z, &layer.bias))
}

pub fn gen_linear_forward<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, batch: usize, d_in: usize, d_out: usize) -> Result<(), DealerError> {
    push_pair(qs, d.gen_beaver(&[batch, d_in], &[d_in, d_out], BeaverShape::Matmul)?);
    Ok(())
}

/// Batch-mean dW from per-row outer products, batch-mean dbias, and dY·W when `need_dx`.
pub fn linear_backward<W: RingWord>(
    sess: &mut Session,
    q: &mut KeyQueue<W>,
    layer: &mut SecureLinear<W>,
    dy: &Sh<W>,
    need_dx: bool,
) -> Res<(GradientSet<W>, Option<Sh<W>>)> {
    let x = layer.cached_input.take().ok_or_else(|| ProtoError::Param("backward without a cached forward".into()))?;
    let (b, o, i) = (x.values.shape[0], layer.out_dim(), layer.in_dim());
    if dy.values.shape != [b, o] {
        return Err(ProtoError::Shape(format!("upstream gradient {:?}, expected [{b}, {o}]", dy.values.shape)));
    }
    let m_dy = q.pop_offset()?;
    let m_x = q.pop_offset()?;
    let k = q.pop_tp()?;
    let mut wd = to_masked(dy, &m_dy, k.in1)?;
    let mut wx = to_masked(&x, &m_x, k.in2)?;
    let outer = proto::eval_tp(sess, &mut wd, &mut wx, k)?.values;
    let sum = outer.reshape(&[b, o * i])?.sum_rows().reshape(&[o, i])?;
    let inv_b = 1.0 / b as f64;
    let dw = scale_by(sess, &Sh::new(sess.party, sum), inv_b)?;
    let dbias = scale_by(sess, &Sh::new(sess.party, dy.values.sum_rows()), inv_b)?;
    let dx = if need_dx {
        let k = q.pop_beaver()?;
        Some(proto::ass_matmul(sess, dy, &layer.w, &k)?)
    } else {
        None
    };
    Ok((GradientSet { dw, dbias }, dx))
}

pub fn gen_linear_backward<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, batch: usize, d_in: usize, d_out: usize, need_dx: bool) -> Result<(), DealerError> {
    let i1 = d.fresh_offset(&[batch, d_out]);
    let i2 = d.fresh_offset(&[batch, d_in]);
    let tp = d.gen_tp(i1, i2, None)?;
    push_pair(qs, d.mask_pair(i1)?);
    push_pair(qs, d.mask_pair(i2)?);
    push_pair(qs, tp);
    if need_dx {
        push_pair(qs, d.gen_beaver(&[batch, d_out], &[d_out, d_in], BeaverShape::Matmul)?);
    }
    Ok(())
}

pub fn tanh_forward<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, z: &Sh<W>) -> Res<Sh<W>> {
    let m = q.pop_offset()?;
    let k = q.pop_tanh()?;
    let mut w = to_masked(z, &m, k.input)?;
    let y = proto::eval_tanh(sess, &mut w, k)?;
    Ok(Sh::new(y.party, y.values))
}

pub fn gen_tanh_forward<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize], a: Approx) -> Result<(), DealerError> {
    let id = d.fresh_offset(shape);
    let k = d.gen_tanh(id, None, a.m_exp, a.m_recip)?;
    push_pair(qs, d.mask_pair(id)?);
    push_pair(qs, k);
    Ok(())
}

/// dY·(1 − y²) for y = tanh(z).
pub fn tanh_backward<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, y: &Sh<W>, dy: &Sh<W>) -> Res<Sh<W>> {
    let m = q.pop_offset()?;
    let k = q.pop_square()?;
    let mut w = to_masked(y, &m, k.input)?;
    let sq = proto::eval_square(sess, &mut w, k)?;
    let one: W = sess.cfg.one();
    let om = Sh::new(sess.party, sq.values).neg().add_public_word(one);
    let m1 = q.pop_offset()?;
    let m2 = q.pop_offset()?;
    let k = q.pop_mul()?;
    let mut a = to_masked(dy, &m1, k.in1)?;
    let mut b = to_masked(&om, &m2, k.in2)?;
    let r = proto::eval_mul(sess, &mut a, &mut b, k)?;
    Ok(Sh::new(r.party, r.values))
}

pub fn gen_tanh_backward<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize]) -> Result<(), DealerError> {
    let id = d.fresh_offset(shape);
    let k = d.gen_square(id, None)?;
    push_pair(qs, d.mask_pair(id)?);
    push_pair(qs, k);
    let i1 = d.fresh_offset(shape);
    let i2 = d.fresh_offset(shape);
    let k = d.gen_mul(i1, i2, None)?;
    push_pair(qs, d.mask_pair(i1)?);
    push_pair(qs, d.mask_pair(i2)?);
    push_pair(qs, k);
    Ok(())
}

/// softmax(logits) − onehot, row-wise.
pub fn softmax_ce_grad<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, logits: &Sh<W>, onehot: &Sh<W>) -> Res<Sh<W>> {
    if logits.values.shape != onehot.values.shape {
        return Err(ProtoError::Shape(format!("logits {:?} vs labels {:?}", logits.values.shape, onehot.values.shape)));
    }
    let m = q.pop_offset()?;
    let k = q.pop_softmax()?;
    let mut w = to_masked(logits, &m, k.input)?;
    let p = proto::eval_softmax(sess, &mut w, k)?;
    Ok(p.sub(onehot))
}

pub fn gen_softmax_ce_grad<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize], a: Approx) -> Result<(), DealerError> {
    let id = d.fresh_offset(shape);
    let k = d.gen_softmax(id, *shape.last().unwrap_or(&0), a.m_softmax, crate::dealer::SOFTMAX_CLIP)?;
    push_pair(qs, d.mask_pair(id)?);
    push_pair(qs, k);
    Ok(())
}

/// Inverted dropout with p supplied online; p = 0 is the identity and uses no key.
pub fn dropout_forward<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, x: &Sh<W>, p: f64) -> Res<Sh<W>> {
    if p == 0.0 {
        return Ok(x.clone());
    }
    let m = q.pop_offset()?;
    let k = q.pop_dropout_dynamic()?;
    let mut w = to_masked(x, &m, k.input)?;
    let y = proto::eval_dropout_dynamic(sess, &mut w, k, p)?;
    Ok(Sh::new(y.party, y.values))
}

pub fn gen_dropout_forward<W: RingWord>(d: &mut Dealer<W>, qs: &mut Qs<W>, shape: &[usize]) -> Result<(), DealerError> {
    let id = d.fresh_offset(shape);
    let k = d.gen_dropout_dynamic(id, None, None)?;
    push_pair(qs, d.mask_pair(id)?);
    push_pair(qs, k);
    Ok(())
}

/// params − lr·grad with one truncation.
pub fn sgd_step<W: RingWord>(sess: &mut Session, params: &Sh<W>, grad: &Sh<W>, lr: f64) -> Res<Sh<W>> {
    Ok(params.sub(&scale_by(sess, grad, lr)?))
}

/// The trainable head.
#[derive(Debug, Clone)]
pub struct SecureHead<W> {
    pub l1: SecureLinear<W>,
    pub l2: SecureLinear<W>,
}

#[derive(Debug, Clone)]
pub struct HeadGrads<W> {
    pub l1: GradientSet<W>,
    pub l2: GradientSet<W>,
}

impl<W: RingWord> HeadGrads<W> {
    /// dW1 ‖ db1 ‖ dW2 ‖ db2 as one flat tensor.
    pub fn flatten(&self) -> RingTensor<W> {
        flatten(&[&self.l1.dw, &self.l1.dbias, &self.l2.dw, &self.l2.dbias])
    }
}

impl<W: RingWord> SecureHead<W> {
    pub fn new(party: u8, params: &[RingTensor<W>; 4]) -> Self {
        let sh = |t: &RingTensor<W>| Sh::new(party, t.clone());
        SecureHead { l1: SecureLinear::new(sh(&params[0]), sh(&params[1])), l2: SecureLinear::new(sh(&params[2]), sh(&params[3])) }
    }

    pub fn flatten(&self) -> RingTensor<W> {
        flatten(&[&self.l1.w, &self.l1.bias, &self.l2.w, &self.l2.bias])
    }
}

fn flatten<W: RingWord>(parts: &[&Sh<W>]) -> RingTensor<W> {
    let first = &parts[0].values;
    let data: Vec<W> = parts.iter().flat_map(|p| p.values.data.iter().copied()).collect();
    RingTensor { shape: vec![data.len()], data, cfg: first.cfg, scale: first.scale }
}

/// Shapes of W1, b1, W2, b2.
pub fn param_shapes(d: HeadDims) -> [Vec<usize>; 4] {
    [vec![d.hidden, d.d_in], vec![d.hidden], vec![d.classes, d.hidden], vec![d.classes]]
}

/// Splits a flat parameter or gradient vector into the four head tensors.
pub fn unflatten<W: RingWord>(flat: &RingTensor<W>, d: HeadDims) -> Result<[RingTensor<W>; 4], crate::ring::RingError> {
    let shapes = param_shapes(d);
    let mut at = 0;
    let mut out = Vec::with_capacity(4);
    for s in &shapes {
        let n: usize = s.iter().product();
        let data = flat.data.get(at..at + n).ok_or(crate::ring::RingError::Length { len: flat.len(), shape: s.clone() })?.to_vec();
        out.push(RingTensor { shape: s.clone(), data, cfg: flat.cfg, scale: flat.scale });
        at += n;
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone(), out[3].clone()])
}

/// Forward and backward on one batch; returns the batch-mean gradients.
pub fn head_step<W: RingWord>(sess: &mut Session, q: &mut KeyQueue<W>, head: &mut SecureHead<W>, x: &Sh<W>, onehot: &Sh<W>) -> Res<HeadGrads<W>> {
    let z1 = linear_forward(sess, q, &mut head.l1, x)?;
    let a = tanh_forward(sess, q, &z1)?;
    let z2 = linear_forward(sess, q, &mut head.l2, &a)?;
    let g2 = softmax_ce_grad(sess, q, &z2, onehot)?;
    let (gs2, ga) = linear_backward(sess, q, &mut head.l2, &g2, true)?;
    let ga = ga.expect("requested dX");
    let dz1 = tanh_backward(sess, q, &a, &ga)?;
    let (gs1, _) = linear_backward(sess, q, &mut head.l1, &dz1, false)?;
    Ok(HeadGrads { l1: gs1, l2: gs2 })
}

/// Keys for one [`head_step`] on a batch of `batch` rows.
pub fn gen_step_keys<W: RingWord>(d: &mut Dealer<W>, dims: HeadDims, batch: usize, a: Approx) -> Result<Qs<W>, DealerError> {
    let mut qs = (KeyQueue::new(), KeyQueue::new());
    gen_linear_forward(d, &mut qs, batch, dims.d_in, dims.hidden)?;
    gen_tanh_forward(d, &mut qs, &[batch, dims.hidden], a)?;
    gen_linear_forward(d, &mut qs, batch, dims.hidden, dims.classes)?;
    gen_softmax_ce_grad(d, &mut qs, &[batch, dims.classes], a)?;
    gen_linear_backward(d, &mut qs, batch, dims.hidden, dims.classes, true)?;
    gen_tanh_backward(d, &mut qs, &[batch, dims.hidden])?;
    gen_linear_backward(d, &mut qs, batch, dims.d_in, dims.hidden, false)?;
    Ok(qs)
}

//! Single-operation runs: deal keys, split inputs, evaluate both parties and
//! restore the output. Shared by the benches, the tests and the CLI.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::dealer::bundle::Bundle;
use crate::dealer::{Dealer, DealerError, GateKey, KeyQueue, SOFTMAX_CLIP};
use crate::oracle::{Iv, Oracle, Rounding};
use crate::proto::cost::{self, Cost};
use crate::proto::{self, BaselineOp, ProtoError, Session};
use crate::ring::{RingConfig, RingError, RingTensor, RingWord, TruncMode};
use crate::shares::{restore, split, to_masked, AdditiveShare, MaskShare, MaskedWire, ShareError};
use crate::transport::{tcp_pair, Channel, CommReport, MsgType, Transcript, TransportError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Dealer(#[from] DealerError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{0}")]
    Input(String),
}

/// An operation with its approximation parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Mul,
    Square,
    Power {
        m: usize,
    },
    Exp {
        m: usize,
    },
    /// `init = Some(y0)` starts Newton at a constant.
    Recip {
        m: usize,
        init: Option<f64>,
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
        m: usize,
    },
    /// Outer product of the last axes of x and y.
    Tp,
    DropoutStatic {
        p: f64,
    },
    DropoutDynamic {
        p: f64,
    },
    LessThan,
    Relu,
}

pub const DEFAULT_M_EXP: usize = 8;
pub const DEFAULT_M_RECIP: usize = 3;
pub const DEFAULT_M_SOFTMAX: usize = 8;

impl Op {
    /// Parses an operation name with the given iteration counts; 0 selects the default.
    pub fn parse(name: &str, m: usize, m_recip: usize, p: f64) -> Option<Op> {
        let or = |v: usize, d: usize| if v == 0 { d } else { v };
        Some(match name {
            "mul" => Op::Mul,
            "square" => Op::Square,
            "power" => Op::Power { m: or(m, 3) },
            "exp" => Op::Exp { m: or(m, DEFAULT_M_EXP) },
            "recip" => Op::Recip { m: or(m_recip, DEFAULT_M_RECIP), init: None, m_exp: or(m, DEFAULT_M_EXP) },
            "recip-init" => Op::Recip { m: or(m_recip, DEFAULT_M_RECIP), init: Some(1.0), m_exp: 0 },
            "sigmoid" => Op::Sigmoid { m_exp: or(m, DEFAULT_M_EXP), m_recip: or(m_recip, DEFAULT_M_RECIP) },
            "tanh" => Op::Tanh { m_exp: or(m, DEFAULT_M_EXP), m_recip: or(m_recip, DEFAULT_M_RECIP) },
            "softmax" => Op::Softmax { m: or(m, DEFAULT_M_SOFTMAX) },
            "tp" => Op::Tp,
            "dropout" | "dropout-static" => Op::DropoutStatic { p },
            "dropout-dynamic" => Op::DropoutDynamic { p },
            "lt" => Op::LessThan,
            "relu" => Op::Relu,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Mul => "mul",
            Op::Square => "square",
            Op::Power { .. } => "power",
            Op::Exp { .. } => "exp",
            Op::Recip { init: None, .. } => "recip",
            Op::Recip { .. } => "recip-init",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Tanh { .. } => "tanh",
            Op::Softmax { .. } => "softmax",
            Op::Tp => "tp",
            Op::DropoutStatic { .. } => "dropout-static",
            Op::DropoutDynamic { .. } => "dropout-dynamic",
            Op::LessThan => "lt",
            Op::Relu => "relu",
        }
    }

    pub fn binary(&self) -> bool {
        matches!(self, Op::Mul | Op::Tp)
    }

    /// Formula cost of one evaluation on `shape` (the per-element cost times
    /// the element count; the whole product for TP).
    pub fn cost(&self, baseline: bool, x_shape: &[usize], y_shape: &[usize]) -> Option<Cost> {
        use cost::{baseline as b, ours as o};
        let n: usize = x_shape.iter().product();
        let per = match (self, baseline) {
            (Op::Mul, false) => o::mul(),
            (Op::Mul, true) => b::mul(),
            (Op::Square, false) => o::square(),
            (Op::Square, true) => b::square(),
            (Op::Power { m }, false) => o::power(*m),
            (Op::Power { m }, true) => b::power(*m),
            (Op::Exp { m }, false) => o::exp(*m),
            (Op::Exp { m }, true) => b::exp(*m),
            (Op::Recip { m, init, m_exp }, false) => o::recip(*m, init.is_some(), *m_exp),
            (Op::Recip { m, init, m_exp }, true) => b::recip(*m, init.is_some(), *m_exp),
            (Op::Sigmoid { m_exp, m_recip }, false) => o::sigmoid(*m_exp, *m_recip),
            (Op::Sigmoid { m_exp, m_recip }, true) => b::sigmoid(*m_exp, *m_recip),
            (Op::Tanh { m_exp, m_recip }, false) => o::tanh(*m_exp, *m_recip),
            (Op::Tanh { m_exp, m_recip }, true) => b::tanh(*m_exp, *m_recip),
            (Op::Softmax { m }, false) => o::softmax(*m),
            (Op::Softmax { m }, true) => b::softmax(*m),
            (Op::Tp, _) => {
                let nn = *x_shape.last()?;
                let mm = *y_shape.last()?;
                let batches = (n / nn) as u64;
                let c = if baseline { b::tp(nn, mm) } else { o::tp(nn, mm) };
                return Some(c.times(batches));
            }
            (Op::DropoutStatic { .. }, false) => o::dropout_static(),
            (Op::DropoutStatic { .. }, true) => b::dropout_static(),
            (Op::DropoutDynamic { .. }, false) => o::dropout_dynamic(),
            (Op::DropoutDynamic { .. }, true) => b::dropout_dynamic(),
            (Op::LessThan, false) => o::less_than(),
            (Op::Relu, false) => o::relu(),
            (Op::LessThan | Op::Relu, true) => return None,
        };
        Some(per.times(n as u64))
    }

    fn baseline_op(&self, y_shape: &[usize]) -> Option<BaselineOp> {
        Some(match *self {
            Op::Mul => BaselineOp::Mul,
            Op::Square => BaselineOp::Square,
            Op::Power { m } => BaselineOp::Power { m },
            Op::Exp { m } => BaselineOp::Exp { m },
            Op::Recip { m, init, m_exp } => BaselineOp::Recip { m, with_init: init.is_some(), m_exp },
            Op::Sigmoid { m_exp, m_recip } => BaselineOp::Sigmoid { m_exp, m_recip },
            Op::Tanh { m_exp, m_recip } => BaselineOp::Tanh { m_exp, m_recip },
            Op::Softmax { m } => BaselineOp::Softmax { k: 0, m },
            Op::Tp => BaselineOp::Tp { m: *y_shape.last()? },
            Op::DropoutStatic { p } => BaselineOp::DropoutStatic { p },
            Op::DropoutDynamic { .. } => BaselineOp::DropoutDynamic,
            Op::LessThan | Op::Relu => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Mem,
    Tcp,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mem" => Ok(Backend::Mem),
            "tcp" => Ok(Backend::Tcp),
            _ => Err(format!("unknown backend {s}")),
        }
    }
}

/// Settings shared by every run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cfg: RingConfig,
    pub trunc: TruncMode,
    pub seed: u64,
    pub backend: Backend,
    pub baseline: bool,
    pub record: bool,
    /// Fixed dealer draws for dropout.
    pub forced_r: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(cfg: RingConfig, trunc: TruncMode, seed: u64) -> Self {
        RunConfig { cfg, trunc, seed, backend: Backend::Mem, baseline: false, record: false, forced_r: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<W> {
    /// Restored output.
    pub output: RingTensor<W>,
    /// Party 0's meter (both directions, so it covers both parties).
    pub report: CommReport,
    pub transcripts: Option<(Transcript, Transcript)>,
}

impl<W: RingWord> RunOutput<W> {
    /// Payload bits under the operation label, without the baseline comparison segment.
    pub fn formula_bits(&self, op: &Op) -> u64 {
        self.report.total_excluding(op.name(), proto::CMP).payload_bits()
    }

    pub fn total_bits(&self, op: &Op) -> u64 {
        self.report.total(op.name()).payload_bits()
    }

    pub fn reals(&self) -> Vec<f64> {
        self.output.to_reals()
    }
}

enum Keys<W> {
    Gate(GateKey<W>, MaskShare<W>, Option<MaskShare<W>>),
    Baseline(KeyQueue<W>),
}

fn channels(b: Backend) -> Result<(Channel, Channel), TransportError> {
    match b {
        Backend::Mem => Ok(Channel::mem_pair()),
        Backend::Tcp => tcp_pair(),
    }
}

/// Deals the keys for `op` on inputs of the given shapes.
fn deal<W: RingWord>(op: &Op, rc: &RunConfig, xs: &[usize], ys: &[usize]) -> Result<(Keys<W>, Keys<W>), RunError> {
    let mut d = Dealer::<W>::from_u64(rc.seed, rc.cfg)?;
    if rc.baseline {
        let mut bop = op.baseline_op(ys).ok_or_else(|| RunError::Input(format!("{} has no baseline", op.name())))?;
        if let BaselineOp::Softmax { k, .. } = &mut bop {
            *k = *xs.last().unwrap_or(&0);
        }
        let (q0, q1) = proto::baseline_keys(&mut d, &bop, xs, rc.forced_r.as_deref())?;
        return Ok((Keys::Baseline(q0), Keys::Baseline(q1)));
    }
    let ix = d.fresh_offset(xs);
    let forced = rc.forced_r.as_deref();
    let (k0, k1): (GateKey<W>, GateKey<W>) = match *op {
        Op::Mul | Op::Tp => {
            let iy = d.fresh_offset(ys);
            let (my0, my1) = d.mask_pair(iy)?;
            let (mx0, mx1) = d.mask_pair(ix)?;
            let (a, b): (GateKey<W>, GateKey<W>) = if *op == Op::Mul {
                let p = d.gen_mul(ix, iy, None)?;
                (p.0.into(), p.1.into())
            } else {
                let p = d.gen_tp(ix, iy, None)?;
                (p.0.into(), p.1.into())
            };
            return Ok((Keys::Gate(a, mx0, Some(my0)), Keys::Gate(b, mx1, Some(my1))));
        }
        Op::Square => pair(d.gen_square(ix, None)?),
        Op::Power { m } => pair(d.gen_power(ix, None, m)?),
        Op::Exp { m } => pair(d.gen_exp(ix, None, m)?),
        Op::Recip { m, init, m_exp } => pair(d.gen_recip(ix, None, m, init.is_some(), m_exp)?),
        Op::Sigmoid { m_exp, m_recip } => pair(d.gen_sigmoid(ix, None, m_exp, m_recip)?),
        Op::Tanh { m_exp, m_recip } => pair(d.gen_tanh(ix, None, m_exp, m_recip)?),
        Op::Softmax { m } => pair(d.gen_softmax(ix, *xs.last().unwrap_or(&0), m, SOFTMAX_CLIP)?),
        Op::DropoutStatic { p } => pair(d.gen_dropout_static(ix, None, p, forced)?),
        Op::DropoutDynamic { .. } => pair(d.gen_dropout_dynamic(ix, None, forced)?),
        Op::LessThan => pair(d.gen_less_than(ix)?),
        Op::Relu => pair(d.gen_relu(ix)?),
    };
    let (m0, m1) = d.mask_pair(ix)?;
    Ok((Keys::Gate(k0, m0, None), Keys::Gate(k1, m1, None)))
}

fn pair<W, K: Into<GateKey<W>>>(p: (K, K)) -> (GateKey<W>, GateKey<W>) {
    (p.0.into(), p.1.into())
}

fn eval_gate<W: RingWord>(
    sess: &mut Session,
    op: &Op,
    key: GateKey<W>,
    x: &mut MaskedWire<W>,
    y: Option<&mut MaskedWire<W>>,
) -> Result<AdditiveShare<W>, ProtoError> {
    let wrong = || ProtoError::Param("key does not match the operation".into());
    let w = match (op, key) {
        (Op::Mul, GateKey::Mul(k)) => proto::eval_mul(sess, x, y.ok_or_else(wrong)?, k)?,
        (Op::Tp, GateKey::Tp(k)) => proto::eval_tp(sess, x, y.ok_or_else(wrong)?, k)?,
        (Op::Square, GateKey::Square(k)) => proto::eval_square(sess, x, k)?,
        (Op::Power { .. }, GateKey::Power(k)) => proto::eval_power(sess, x, k)?,
        (Op::Exp { .. }, GateKey::Exp(k)) => proto::eval_exp(sess, x, k)?,
        (Op::Recip { init, .. }, GateKey::Recip(k)) => proto::eval_recip(sess, x, k, *init)?,
        (Op::Sigmoid { .. }, GateKey::Sigmoid(k)) => proto::eval_sigmoid(sess, x, k)?,
        (Op::Tanh { .. }, GateKey::Tanh(k)) => proto::eval_tanh(sess, x, k)?,
        (Op::DropoutStatic { .. }, GateKey::DropoutStatic(k)) => proto::eval_dropout_static(sess, x, k)?,
        (Op::DropoutDynamic { p }, GateKey::DropoutDynamic(k)) => proto::eval_dropout_dynamic(sess, x, k, *p)?,
        (Op::Softmax { .. }, GateKey::Softmax(k)) => return proto::eval_softmax(sess, x, k),
        (Op::LessThan, GateKey::LessThan(k)) => return proto::eval_less_than(sess, x, k),
        (Op::Relu, GateKey::Relu(k)) => return proto::eval_relu(sess, x, k),
        _ => return Err(wrong()),
    };
    Ok(AdditiveShare::new(w.party, w.values))
}

fn eval_baseline<W: RingWord>(
    sess: &mut Session,
    op: &Op,
    q: &mut KeyQueue<W>,
    x: &AdditiveShare<W>,
    y: Option<&AdditiveShare<W>>,
) -> Result<AdditiveShare<W>, ProtoError> {
    let missing = || ProtoError::Param("second input missing".into());
    match *op {
        Op::Mul => {
            let k = q.pop_beaver()?;
            proto::ass_mul(sess, x, y.ok_or_else(missing)?, &k)
        }
        Op::Tp => proto::baseline_tp(sess, q, x, y.ok_or_else(missing)?),
        Op::Square => proto::baseline_square(sess, q, x),
        Op::Power { m } => proto::baseline_power(sess, q, x, m),
        Op::Exp { m } => proto::baseline_exp(sess, q, x, m),
        Op::Recip { m, init, m_exp } => proto::baseline_recip(sess, q, x, m, init, m_exp),
        Op::Sigmoid { m_exp, m_recip } => proto::baseline_sigmoid(sess, q, x, m_exp, m_recip),
        Op::Tanh { m_exp, m_recip } => proto::baseline_tanh(sess, q, x, m_exp, m_recip),
        Op::Softmax { m } => proto::baseline_softmax(sess, q, x, *x.values.shape.last().unwrap_or(&0), m),
        Op::DropoutStatic { .. } => proto::baseline_dropout_static(sess, q, x),
        Op::DropoutDynamic { p } => proto::baseline_dropout_dynamic(sess, q, x, p),
        Op::LessThan | Op::Relu => Err(ProtoError::Param("no baseline".into())),
    }
}

/// Runs `op` on real inputs `x` (and `y` for binary operations).
pub fn run_op<W: RingWord>(op: &Op, rc: &RunConfig, x: &[f64], x_shape: &[usize], y: Option<(&[f64], &[usize])>) -> Result<RunOutput<W>, RunError> {
    let cfg = rc.cfg.for_word::<W>()?;
    let xt = RingTensor::<W>::from_reals(x, x_shape, cfg)?;
    let yt = match y {
        Some((v, s)) => Some(RingTensor::<W>::from_reals(v, s, cfg)?),
        None => None,
    };
    if op.binary() != yt.is_some() {
        return Err(RunError::Input(format!("{} takes {} inputs", op.name(), if op.binary() { 2 } else { 1 })));
    }
    run_op_ring(op, rc, &xt, yt.as_ref())
}

struct Prepared<W> {
    keys: [std::sync::Mutex<Option<Keys<W>>>; 2],
    xs: [AdditiveShare<W>; 2],
    ys: Option<[AdditiveShare<W>; 2]>,
}

fn prepare<W: RingWord>(op: &Op, rc: &RunConfig, xt: &RingTensor<W>, yt: Option<&RingTensor<W>>) -> Result<Prepared<W>, RunError> {
    let y_shape = yt.map(|t| t.shape.clone()).unwrap_or_default();
    let (k0, k1) = deal::<W>(op, rc, &xt.shape, &y_shape)?;
    let mut rng = ChaCha20Rng::seed_from_u64(rc.seed ^ 0x5eed_1a7a);
    let (x0, x1) = split(xt, &mut rng);
    let ys = yt.map(|t| split(t, &mut rng)).map(|(a, b)| [a, b]);
    Ok(Prepared { keys: [std::sync::Mutex::new(Some(k0)), std::sync::Mutex::new(Some(k1))], xs: [x0, x1], ys })
}

type PartyResult<W> = (AdditiveShare<W>, CommReport, Option<Transcript>);

fn eval_party<W: RingWord>(sess: &mut Session, op: &Op, rc: &RunConfig, p: &Prepared<W>) -> Result<PartyResult<W>, ProtoError> {
    let b = sess.party as usize;
    if rc.record {
        sess.chan.record_transcript();
    }
    let key = p.keys[b].lock().expect("key lock").take().expect("keys taken once");
    let x = &p.xs[b];
    let y = p.ys.as_ref().map(|ys| &ys[b]);
    sess.chan.set_label(op.name());
    let out = match key {
        Keys::Gate(k, mx, my) => {
            let mut wx = to_masked(x, &mx, mx.offset_id)?;
            let mut wy = match (y, my) {
                (Some(y), Some(my)) => Some(to_masked(y, &my, my.offset_id)?),
                _ => None,
            };
            eval_gate(sess, op, k, &mut wx, wy.as_mut())
        }
        Keys::Baseline(mut q) => eval_baseline(sess, op, &mut q, x, y),
    }?;
    sess.chan.set_label("");
    Ok((out, sess.report(), sess.chan.transcript().cloned()))
}

/// [`run_op`] on encoded inputs.
pub fn run_op_ring<W: RingWord>(op: &Op, rc: &RunConfig, xt: &RingTensor<W>, yt: Option<&RingTensor<W>>) -> Result<RunOutput<W>, RunError> {
    let p = prepare(op, rc, xt, yt)?;
    let chans = channels(rc.backend)?;
    let (r0, r1) = proto::run_pair(chans, rc.cfg, rc.trunc, rc.seed, |sess| eval_party(sess, op, rc, &p));
    let (o0, rep0, t0) = r0?;
    let (o1, _, t1) = r1?;
    let output = restore(&o0, &o1)?;
    let transcripts = match (t0, t1) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    Ok(RunOutput { output, report: rep0, transcripts })
}

/// One party of [`run_op_ring`] over an already connected channel. Both
/// processes deal the same keys and input shares from the shared seed and keep
/// their own half. Party 1 then sends its output share under the `restore`
/// label so party 0 can check it; party 0 gets `Some(output)`.
pub fn run_party<W: RingWord>(
    op: &Op,
    rc: &RunConfig,
    party: u8,
    chan: Channel,
    xt: &RingTensor<W>,
    yt: Option<&RingTensor<W>>,
) -> Result<(Option<RingTensor<W>>, CommReport, Option<Transcript>), RunError> {
    let p = prepare(op, rc, xt, yt)?;
    let mut sess = Session::new(party, chan, rc.cfg, rc.trunc, rc.seed);
    let (share, rep, tr) = eval_party(&mut sess, op, rc, &p)?;
    sess.chan.set_label("restore");
    let out = if party == 1 {
        sess.chan.send_words(MsgType::Control, &share.values.data)?;
        None
    } else {
        let d: Vec<W> = sess.chan.recv_words(MsgType::Control, share.values.len())?;
        let other = AdditiveShare::new(1, RingTensor { data: d, ..share.values.clone() });
        Some(restore(&share, &other)?)
    };
    Ok((out, rep, tr))
}

/// Key bundles of both parties for `op` on the given shapes, in the order the
/// evaluation consumes them: input offset share(s) first, then the gate keys.
pub fn deal_bundles<W: RingWord>(op: &Op, rc: &RunConfig, x_shape: &[usize], y_shape: &[usize]) -> Result<(Bundle<W>, Bundle<W>), RunError> {
    let cfg = rc.cfg.for_word::<W>()?;
    let (k0, k1) = deal::<W>(op, rc, x_shape, y_shape)?;
    let flat = |k: Keys<W>| -> Vec<GateKey<W>> {
        match k {
            Keys::Gate(g, mx, my) => std::iter::once(GateKey::Offset(mx)).chain(my.map(GateKey::Offset)).chain(std::iter::once(g)).collect(),
            Keys::Baseline(q) => q.into_keys(),
        }
    };
    Ok((Bundle { cfg, party: 0, keys: flat(k0) }, Bundle { cfg, party: 1, keys: flat(k1) }))
}

/// Outcome of comparing a restored output against the plaintext reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub elements: usize,
    /// Elements inside the reference interval (or within tolerance for baselines).
    pub passed: usize,
    /// Largest distance in LSBs from the floor-rounding reference.
    pub max_floor_dev: i128,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.passed == self.elements
    }
}

fn words<W: RingWord>(t: &RingTensor<W>) -> Vec<i128> {
    t.data.iter().map(|w| w.as_i64() as i128).collect()
}

/// Reference intervals for `op` computed with the given rounding.
pub fn reference<W: RingWord>(o: &Oracle, op: &Op, xt: &RingTensor<W>, yt: Option<&RingTensor<W>>, forced_r: Option<&[f64]>) -> Result<Vec<Iv>, RunError> {
    let x: Vec<Iv> = words(xt).into_iter().map(Iv::point).collect();
    let y: Vec<Iv> = yt.map(words).unwrap_or_default().into_iter().map(Iv::point).collect();
    let need_r = || forced_r.ok_or_else(|| RunError::Input("dropout reference needs fixed draws".into()));
    Ok(match *op {
        Op::Mul => x.iter().zip(&y).map(|(&a, &b)| o.mul(a, b)).collect(),
        Op::Tp => x.iter().flat_map(|&a| y.iter().map(move |&b| o.mul(a, b))).collect(),
        Op::Square => x.iter().map(|&a| o.square(a)).collect(),
        Op::Power { m } => x.iter().map(|&a| o.power(a, m)).collect(),
        Op::Exp { m } => x.iter().map(|&a| o.exp(a, m)).collect(),
        Op::Recip { m, init, m_exp } => x.iter().map(|&a| o.recip(a, m, init, m_exp)).collect(),
        Op::Sigmoid { m_exp, m_recip } => x.iter().map(|&a| o.sigmoid(a, m_exp, m_recip)).collect(),
        Op::Tanh { m_exp, m_recip } => x.iter().map(|&a| o.tanh(a, m_exp, m_recip)).collect(),
        Op::Softmax { m } => {
            let k = (*xt.shape.last().unwrap_or(&1)).max(1);
            x.chunks(k).flat_map(|row| o.softmax(row, m, SOFTMAX_CLIP)).collect()
        }
        Op::DropoutStatic { p } | Op::DropoutDynamic { p } => x.iter().zip(need_r()?).map(|(&a, &r)| o.dropout(a, r, p)).collect(),
        Op::LessThan => x.iter().map(|&a| o.lt(a).scale(o.one())).collect(),
        Op::Relu => x.iter().map(|&a| o.relu(a, o.one())).collect(),
    })
}

/// Checks a restored output. Offset-function gates must lie inside the
/// interval reference built with either rounding per truncation; baselines
/// follow a different schedule and are checked against floats within `tol`.
pub fn verify<W: RingWord>(
    op: &Op,
    rc: &RunConfig,
    xt: &RingTensor<W>,
    yt: Option<&RingTensor<W>>,
    out: &RingTensor<W>,
    tol: f64,
) -> Result<Verdict, RunError> {
    let s = rc.cfg.s;
    let got = words(out);
    let floor = reference(&Oracle::new(s, Rounding::Floor), op, xt, yt, rc.forced_r.as_deref())?;
    let max_floor_dev = got.iter().zip(&floor).map(|(g, f)| (g - f.lo).abs()).max().unwrap_or(0);
    let passed = if rc.baseline {
        let o = Oracle::new(s, Rounding::Floor);
        got.iter().zip(&floor).filter(|(g, f)| (o.dec(**g) - o.dec(f.lo)).abs() <= tol * o.dec(f.lo).abs().max(1.0)).count()
    } else {
        let either = reference(&Oracle::new(s, Rounding::Either), op, xt, yt, rc.forced_r.as_deref())?;
        got.iter().zip(&either).filter(|(g, iv)| iv.contains(**g)).count()
    };
    if got.len() != floor.len() {
        return Err(RunError::Input(format!("output has {} elements, reference {}", got.len(), floor.len())));
    }
    Ok(Verdict { elements: got.len(), passed, max_floor_dev })
}

impl RunError {
    /// True when the run failed on the channel rather than on its inputs.
    pub fn is_transport(&self) -> bool {
        match self {
            RunError::Transport(_) => true,
            RunError::Proto(p) => proto_transport(p),
            RunError::Share(ShareError::Transport(_)) => true,
            _ => false,
        }
    }
}

pub(crate) fn proto_transport(p: &ProtoError) -> bool {
    matches!(p, ProtoError::Transport(_) | ProtoError::Share(ShareError::Transport(_)))
}

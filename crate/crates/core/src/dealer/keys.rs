//! Per-gate correlated randomness held by one party.

use crate::dealer::dcf::DcfBatch;
use crate::ring::{RingTensor, RingWord};
use crate::shares::{MaskShare, OffsetId};

/// Gate kind tag used in key bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GateKind {
    Beaver = 0,
    Mul = 1,
    Square = 2,
    Power = 3,
    Exp = 4,
    Recip = 5,
    Softmax = 6,
    Sigmoid = 7,
    DropoutStatic = 8,
    DropoutDynamic = 9,
    Tp = 10,
    LessThan = 11,
    Offset = 12,
    Tanh = 13,
    Relu = 14,
    BitLessThan = 15,
}

impl GateKind {
    pub fn from_u8(v: u8) -> Option<GateKind> {
        use GateKind::*;
        [Beaver, Mul, Square, Power, Exp, Recip, Softmax, Sigmoid, DropoutStatic, DropoutDynamic, Tp, LessThan, Offset, Tanh, Relu, BitLessThan]
            .into_iter()
            .find(|k| *k as u8 == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeaverShape {
    Elementwise,
    Matmul,
}

/// Shares of (A, B, C) with C = A·B (elementwise or matrix product).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaverKey<W> {
    pub party: u8,
    pub shape: BeaverShape,
    pub a: RingTensor<W>,
    pub b: RingTensor<W>,
    pub c: RingTensor<W>,
}

/// r_in1 ‖ r_in2 ‖ q ‖ r_out with q = r_in1·r_in2 elementwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulKey<W> {
    pub party: u8,
    pub in1: OffsetId,
    pub in2: OffsetId,
    pub out: OffsetId,
    pub r1: RingTensor<W>,
    pub r2: RingTensor<W>,
    pub q: RingTensor<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// r_in ‖ q ‖ r_out with q = r_in².
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub r_in: RingTensor<W>,
    pub q: RingTensor<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// m chained squares: segment i has input offset `offsets[i]` and
/// `qs[i] = offsets[i]²`; its output offset is `offsets[i + 1]`, or `r_out`
/// for the last one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareChain<W> {
    pub offsets: Vec<RingTensor<W>>,
    pub qs: Vec<RingTensor<W>>,
    pub r_out: Option<RingTensor<W>>,
}

impl<W: RingWord> SquareChain<W> {
    pub fn len(&self) -> usize {
        self.qs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qs.is_empty()
    }
}

/// x^(2^m) by repeated squaring; `chain.offsets[0]` is the input offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub chain: SquareChain<W>,
}

/// (1 + x/2^m)^(2^m). `chain.offsets[0]` is r^(1), the offset of the base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub r_in: RingTensor<W>,
    pub chain: SquareChain<W>,
}

impl<W> ExpKey<W> {
    pub fn m(&self) -> usize {
        self.chain.qs.len()
    }
}

/// One Newton step y ← y(2 − x·y): a square keyed on the offset of y
/// (derived by the caller), then a product with the public |x|̂.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewtonStep<W> {
    /// Square correlation for the offset of the incoming y.
    pub q: RingTensor<W>,
    /// Offset of y² (square output, second input of the product).
    pub u: RingTensor<W>,
    /// u · a, where a is the offset of |x|.
    pub v: RingTensor<W>,
    /// Output offset of the product; the next y carries −m.
    pub m: RingTensor<W>,
}

/// 1/x via sign extraction, Newton iterations on |x| and a final sign product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub lt: LtKey<W>,
    /// x · (1 − 2p) with output offset a.
    pub mul_abs: MulKey<W>,
    /// Initial guess 3e^(1−2|x|) + 0.003 keyed on offset −2a.
    pub exp: Option<ExpKey<W>>,
    /// Offset of y_0 when the initial value is supplied by the caller.
    pub r0: Option<RingTensor<W>>,
    pub steps: Vec<NewtonStep<W>>,
    /// y_m · (1 − 2p); input 1 offset equals the offset of y_m.
    pub mul_sign: MulKey<W>,
}

impl<W> RecipKey<W> {
    pub fn m(&self) -> usize {
        self.steps.len()
    }
}

/// Shares of β·1{x < 0} for x̂ = x + r on l-bit words, via a DCF on the low
/// l−1 bits. `beta` and `rh_beta` hold shares of β and of msb(r)·β.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LtKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub k: usize,
    pub dcf: DcfBatch,
    pub beta: RingTensor<W>,
    pub rh_beta: RingTensor<W>,
    /// Shares of the mask r, for gates that mask their own comparison input.
    pub mask: RingTensor<W>,
}

/// Comparison with a one-bit output group, converted to arithmetic shares
/// with a shared random bit. Used by the additive-sharing baselines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLtKey<W> {
    pub party: u8,
    pub dcf: DcfBatch,
    /// XOR shares of msb(r).
    pub rh: RingTensor<W>,
    pub mask: RingTensor<W>,
    /// XOR and arithmetic shares of the same random bit.
    pub rho_bool: RingTensor<W>,
    pub rho_arith: RingTensor<W>,
}

/// c·max(x, 0) = x·c(1 − 1{x<0}); the comparison yields an integer bit and
/// the (1 − d) wire is opened before the product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReluKey<W> {
    pub party: u8,
    pub lt: LtKey<W>,
    pub mul: MulKey<W>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoftmaxIter<W> {
    /// t = x'·y
    pub mul_t: MulKey<W>,
    /// q = y·Σt
    pub mul_q: MulKey<W>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub k: usize,
    pub a0: f64,
    pub a1: f64,
    /// ReLU(x − a0)·(1/m), keyed on the input offset.
    pub relu_lo: ReluKey<W>,
    /// ReLU(x − a1)·(1/m), keyed on the input offset.
    pub relu_hi: ReluKey<W>,
    pub iters: Vec<SoftmaxIter<W>>,
}

impl<W> SoftmaxKey<W> {
    pub fn m(&self) -> usize {
        self.iters.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmoidKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub lt: LtKey<W>,
    /// x·(1 − 2p) = |x|, input 2 offset r^(1), output offset r^(2).
    pub mul1: MulKey<W>,
    /// e^(−|x|) keyed on −r^(2), output offset r^(3).
    pub exp: ExpKey<W>,
    /// 1/(1 + e^(−|x|)) keyed on r^(3), no output offset.
    pub recip: RecipKey<W>,
    /// t·(1 − p) with offsets r^(4), r^(5).
    pub mul2: MulKey<W>,
    /// (1 − t)·p with offsets r^(6), r^(7).
    pub mul3: MulKey<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// 2σ(2x) − 1: a sigmoid keyed on offset 2·r_in without output offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TanhKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub sig: SigmoidKey<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// σ̂ = σ + r^σ is public to both parties; the product with x̂ needs no
/// opening of σ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutStaticKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub p: f64,
    pub sigma_hat: RingTensor<W>,
    pub r_in: RingTensor<W>,
    pub r_sigma: RingTensor<W>,
    pub q: RingTensor<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// Shares of a random r ∈ (0,1) per element; the comparison r < p runs online
/// with a DCF whose payload is (1, r_in).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutDynamicKey<W> {
    pub party: u8,
    pub input: OffsetId,
    pub out: OffsetId,
    pub r_in: RingTensor<W>,
    pub r: RingTensor<W>,
    pub lt: LtKey<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// q = r_in1 ⊗ r_in2 for vectors of length N and M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpKey<W> {
    pub party: u8,
    pub in1: OffsetId,
    pub in2: OffsetId,
    pub out: OffsetId,
    pub r1: RingTensor<W>,
    pub r2: RingTensor<W>,
    pub q: RingTensor<W>,
    pub r_out: Option<RingTensor<W>>,
}

/// Any key that can live in a bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum GateKey<W> {
    Beaver(BeaverKey<W>),
    Mul(MulKey<W>),
    Square(SquareKey<W>),
    Power(PowerKey<W>),
    Exp(ExpKey<W>),
    Recip(RecipKey<W>),
    Softmax(SoftmaxKey<W>),
    Sigmoid(SigmoidKey<W>),
    DropoutStatic(DropoutStaticKey<W>),
    DropoutDynamic(DropoutDynamicKey<W>),
    Tp(TpKey<W>),
    LessThan(LtKey<W>),
    Offset(MaskShare<W>),
    Tanh(TanhKey<W>),
    Relu(ReluKey<W>),
    BitLessThan(BitLtKey<W>),
}

impl<W: RingWord> GateKey<W> {
    pub fn kind(&self) -> GateKind {
        match self {
            GateKey::Beaver(_) => GateKind::Beaver,
            GateKey::Mul(_) => GateKind::Mul,
            GateKey::Square(_) => GateKind::Square,
            GateKey::Power(_) => GateKind::Power,
            GateKey::Exp(_) => GateKind::Exp,
            GateKey::Recip(_) => GateKind::Recip,
            GateKey::Softmax(_) => GateKind::Softmax,
            GateKey::Sigmoid(_) => GateKind::Sigmoid,
            GateKey::DropoutStatic(_) => GateKind::DropoutStatic,
            GateKey::DropoutDynamic(_) => GateKind::DropoutDynamic,
            GateKey::Tp(_) => GateKind::Tp,
            GateKey::LessThan(_) => GateKind::LessThan,
            GateKey::Offset(_) => GateKind::Offset,
            GateKey::Tanh(_) => GateKind::Tanh,
            GateKey::Relu(_) => GateKind::Relu,
            GateKey::BitLessThan(_) => GateKind::BitLessThan,
        }
    }

    pub fn party(&self) -> u8 {
        match self {
            GateKey::Beaver(k) => k.party,
            GateKey::Mul(k) => k.party,
            GateKey::Square(k) => k.party,
            GateKey::Power(k) => k.party,
            GateKey::Exp(k) => k.party,
            GateKey::Recip(k) => k.party,
            GateKey::Softmax(k) => k.party,
            GateKey::Sigmoid(k) => k.party,
            GateKey::DropoutStatic(k) => k.party,
            GateKey::DropoutDynamic(k) => k.party,
            GateKey::Tp(k) => k.party,
            GateKey::LessThan(k) => k.party,
            GateKey::Offset(k) => k.party,
            GateKey::Tanh(k) => k.party,
            GateKey::Relu(k) => k.party,
            GateKey::BitLessThan(k) => k.party,
        }
    }
}

macro_rules! into_gate_key {
    ($($t:ident => $v:ident),* $(,)?) => {
        $(impl<W> From<$t<W>> for GateKey<W> {
            fn from(k: $t<W>) -> Self {
                GateKey::$v(k)
            }
        })*
    };
}

into_gate_key!(
    BeaverKey => Beaver,
    MulKey => Mul,
    SquareKey => Square,
    PowerKey => Power,
    ExpKey => Exp,
    RecipKey => Recip,
    SoftmaxKey => Softmax,
    SigmoidKey => Sigmoid,
    DropoutStaticKey => DropoutStatic,
    DropoutDynamicKey => DropoutDynamic,
    TpKey => Tp,
    LtKey => LessThan,
    MaskShare => Offset,
    TanhKey => Tanh,
    ReluKey => Relu,
    BitLtKey => BitLessThan,
);

//! Fixed-point encoding over Z_{2^l} and the two truncation procedures.

use std::fmt::Debug;
use std::hash::Hash;

use num_traits::{Float, PrimInt, Unsigned, WrappingAdd, WrappingMul, WrappingNeg, WrappingSub};
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::shares::AdditiveShare;
use crate::transport::{Channel, MsgType, TransportError};

#[derive(Debug, Error, PartialEq)]
pub enum RingError {
    #[error("value {0} is outside the representable range")]
    Range(f64),
    #[error("invalid ring configuration l={l} s={s}")]
    Config { l: u32, s: u32 },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    Length { len: usize, shape: Vec<usize> },
}

/// Unsigned machine word used as a ring element. The ring is Z_{2^WIDTH}.
pub trait RingWord: PrimInt + Unsigned + WrappingAdd + WrappingSub + WrappingMul + WrappingNeg + Hash + Debug + Default + Send + Sync + 'static {
    const WIDTH: u32;
    const BYTES: usize;

    /// Keeps the low WIDTH bits.
    fn from_u64(v: u64) -> Self;
    fn as_u64(self) -> u64;
    /// Two's-complement reading, sign-extended to 64 bits.
    fn as_i64(self) -> i64;
    fn from_i64(v: i64) -> Self {
        Self::from_u64(v as u64)
    }
    /// Arithmetic (sign-extending) right shift.
    fn sar(self, bits: u32) -> Self {
        Self::from_i64(self.as_i64() >> bits)
    }
    fn msb(self) -> bool {
        (self >> (Self::WIDTH as usize - 1)) == Self::one()
    }
    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self::from_u64(rng.next_u64())
    }
    fn put_le(self, out: &mut Vec<u8>);
    fn get_le(bytes: &[u8]) -> Self;
}

macro_rules! ring_word {
    ($t:ty, $signed:ty) => {
        impl RingWord for $t {
            const WIDTH: u32 = <$t>::BITS;
            const BYTES: usize = std::mem::size_of::<$t>();
            fn from_u64(v: u64) -> Self {
                v as $t
            }
            fn as_u64(self) -> u64 {
                self as u64
            }
            fn as_i64(self) -> i64 {
                self as $signed as i64
            }
            fn put_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn get_le(bytes: &[u8]) -> Self {
                let mut b = [0u8; std::mem::size_of::<$t>()];
                b.copy_from_slice(&bytes[..std::mem::size_of::<$t>()]);
                <$t>::from_le_bytes(b)
            }
        }
    };
}

ring_word!(u32, i32);
ring_word!(u64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RingConfig {
    pub l: u32,
    pub s: u32,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig { l: 64, s: 16 }
    }
}

impl RingConfig {
    pub fn new(l: u32, s: u32) -> Result<Self, RingError> {
        if s == 0 || s >= l || l > 64 {
            return Err(RingError::Config { l, s });
        }
        Ok(RingConfig { l, s })
    }

    /// Checks that the config matches the word width of `W`.
    pub fn for_word<W: RingWord>(self) -> Result<Self, RingError> {
        if self.l != W::WIDTH {
            return Err(RingError::Config { l: self.l, s: self.s });
        }
        Ok(self)
    }

    pub fn one<W: RingWord>(&self) -> W {
        W::one() << self.s as usize
    }
}

/// floor(x * 2^s) mod 2^l.
pub fn encode_fixed<W: RingWord, F: Float>(x: F, cfg: RingConfig) -> Result<W, RingError> {
    let xf = x.to_f64().unwrap_or(f64::NAN);
    let bound = 2f64.powi((cfg.l - cfg.s - 1) as i32);
    if !xf.is_finite() || xf.abs() >= bound {
        return Err(RingError::Range(xf));
    }
    let v = (xf * 2f64.powi(cfg.s as i32)).floor();
    Ok(W::from_i64(v as i64))
}

pub fn decode_fixed<W: RingWord, F: Float>(w: W, cfg: RingConfig) -> F {
    decode_at(w, cfg.s)
}

/// Decodes a word carrying `scale` fractional bits.
pub fn decode_at<W: RingWord, F: Float>(w: W, scale: u32) -> F {
    let v = w.as_i64() as f64 / 2f64.powi(scale as i32);
    F::from(v).unwrap_or_else(F::nan)
}

/// Shaped, row-major array of ring words with its current fixed-point scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RingTensor<W> {
    pub shape: Vec<usize>,
    pub data: Vec<W>,
    pub cfg: RingConfig,
    pub scale: u32,
}

impl<W: RingWord> RingTensor<W> {
    pub fn new(shape: Vec<usize>, data: Vec<W>, cfg: RingConfig) -> Result<Self, RingError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(RingError::Length { len: data.len(), shape });
        }
        Ok(RingTensor { shape, data, cfg, scale: cfg.s })
    }

    pub fn zeros(shape: &[usize], cfg: RingConfig) -> Self {
        let n = shape.iter().product();
        RingTensor { shape: shape.to_vec(), data: vec![W::zero(); n], cfg, scale: cfg.s }
    }

    pub fn filled(shape: &[usize], v: W, cfg: RingConfig) -> Self {
        let mut t = Self::zeros(shape, cfg);
        t.data.iter_mut().for_each(|d| *d = v);
        t
    }

    pub fn random<R: RngCore + ?Sized>(shape: &[usize], cfg: RingConfig, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| W::random(rng)).collect();
        RingTensor { shape: shape.to_vec(), data, cfg, scale: cfg.s }
    }

    pub fn from_reals<F: Float>(xs: &[F], shape: &[usize], cfg: RingConfig) -> Result<Self, RingError> {
        let data = xs.iter().map(|&x| encode_fixed(x, cfg)).collect::<Result<Vec<W>, _>>()?;
        Self::new(shape.to_vec(), data, cfg)
    }

    pub fn to_reals<F: Float>(&self) -> Vec<F> {
        self.data.iter().map(|&w| decode_at(w, self.scale)).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn with_scale(mut self, scale: u32) -> Self {
        self.scale = scale;
        self
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, RingError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(RingError::Shape(self.shape, shape.to_vec()));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn check_shape(&self, o: &Self) -> Result<(), RingError> {
        if self.shape != o.shape {
            return Err(RingError::Shape(self.shape.clone(), o.shape.clone()));
        }
        Ok(())
    }

    fn zip(&self, o: &Self, f: impl Fn(W, W) -> W) -> Self {
        assert_eq!(self.shape, o.shape, "ring tensor shape mismatch");
        let data = self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect();
        RingTensor { shape: self.shape.clone(), data, cfg: self.cfg, scale: self.scale }
    }

    pub fn map(&self, f: impl Fn(W) -> W) -> Self {
        let data = self.data.iter().map(|&a| f(a)).collect();
        RingTensor { shape: self.shape.clone(), data, cfg: self.cfg, scale: self.scale }
    }

    pub fn try_add(&self, o: &Self) -> Result<Self, RingError> {
        self.check_shape(o)?;
        Ok(self.add(o))
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.wrapping_add(&b))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.wrapping_sub(&b))
    }

    pub fn neg(&self) -> Self {
        self.map(|a| a.wrapping_neg())
    }

    /// Elementwise product; scales add.
    pub fn mul(&self, o: &Self) -> Self {
        let mut t = self.zip(o, |a, b| a.wrapping_mul(&b));
        t.scale = self.scale + o.scale;
        t
    }

    /// Multiplies by an integer constant (scale unchanged).
    pub fn mul_int(&self, c: i64) -> Self {
        let c = W::from_i64(c);
        self.map(|a| a.wrapping_mul(&c))
    }

    /// Adds the same word to every element.
    pub fn add_word(&self, c: W) -> Self {
        self.map(|a| a.wrapping_add(&c))
    }

    pub fn sar(&self, bits: u32) -> Self {
        let mut t = self.map(|a| a.sar(bits));
        t.scale = self.scale.saturating_sub(bits);
        t
    }

    /// Matrix product of (u×v)·(v×w) with wrapping arithmetic.
    pub fn matmul(&self, o: &Self) -> Result<Self, RingError> {
        if self.shape.len() != 2 || o.shape.len() != 2 || self.shape[1] != o.shape[0] {
            return Err(RingError::Shape(self.shape.clone(), o.shape.clone()));
        }
        let (u, v, w) = (self.shape[0], self.shape[1], o.shape[1]);
        let mut data = vec![W::zero(); u * w];
        for i in 0..u {
            for k in 0..v {
                let a = self.data[i * v + k];
                if a == W::zero() {
                    continue;
                }
                let row = &o.data[k * w..(k + 1) * w];
                let out = &mut data[i * w..(i + 1) * w];
                for (d, &b) in out.iter_mut().zip(row) {
                    *d = d.wrapping_add(&a.wrapping_mul(&b));
                }
            }
        }
        Ok(RingTensor { shape: vec![u, w], data, cfg: self.cfg, scale: self.scale + o.scale })
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.shape.len(), 2, "transpose needs a matrix");
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![W::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        RingTensor { shape: vec![c, r], data, cfg: self.cfg, scale: self.scale }
    }

    /// Outer product of two flat vectors (N)⊗(M) -> N×M.
    pub fn outer(&self, o: &Self) -> Self {
        let (n, m) = (self.len(), o.len());
        let mut data = Vec::with_capacity(n * m);
        for &a in &self.data {
            for &b in &o.data {
                data.push(a.wrapping_mul(&b));
            }
        }
        RingTensor { shape: vec![n, m], data, cfg: self.cfg, scale: self.scale + o.scale }
    }

    /// Sums along the last axis, keeping it with length 1.
    pub fn sum_last(&self) -> Self {
        let k = *self.shape.last().expect("non-scalar tensor");
        let rows = self.len() / k.max(1);
        let data = (0..rows).map(|r| self.data[r * k..(r + 1) * k].iter().fold(W::zero(), |a, &b| a.wrapping_add(&b))).collect();
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = 1;
        RingTensor { shape, data, cfg: self.cfg, scale: self.scale }
    }

    /// Broadcasts a tensor whose last axis is 1 along a last axis of length k.
    pub fn repeat_last(&self, k: usize) -> Self {
        let mut data = Vec::with_capacity(self.len() * k);
        for &a in &self.data {
            data.extend(std::iter::repeat(a).take(k));
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = k;
        RingTensor { shape, data, cfg: self.cfg, scale: self.scale }
    }

    /// Sums the rows of a matrix into a vector.
    pub fn sum_rows(&self) -> Self {
        assert_eq!(self.shape.len(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![W::zero(); c];
        for i in 0..r {
            for j in 0..c {
                data[j] = data[j].wrapping_add(&self.data[i * c + j]);
            }
        }
        RingTensor { shape: vec![c], data, cfg: self.cfg, scale: self.scale }
    }

    pub fn row(&self, i: usize) -> Self {
        let c = self.len() / self.shape[0];
        RingTensor { shape: self.shape[1..].to_vec(), data: self.data[i * c..(i + 1) * c].to_vec(), cfg: self.cfg, scale: self.scale }
    }

    pub fn stack(rows: &[Self]) -> Self {
        let first = &rows[0];
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(&first.shape);
        let data = rows.iter().flat_map(|r| r.data.iter().copied()).collect();
        RingTensor { shape, data, cfg: first.cfg, scale: first.scale }
    }
}

/// Word that party `party` contributes for a public constant: only party 1 adds it.
pub fn pub_term<W: RingWord>(party: u8, c: W) -> W {
    if party == 1 {
        c
    } else {
        W::zero()
    }
}

/// Local truncation: party 0 shifts its share, party 1 shifts the negation of
/// its share, so both errors stay within one LSB unless the shares wrap.
pub fn trunc_local<W: RingWord>(share: &AdditiveShare<W>, bits: u32) -> AdditiveShare<W> {
    let values = if share.party == 0 { share.values.sar(bits) } else { share.values.neg().sar(bits).neg() };
    AdditiveShare { party: share.party, values }
}

/// Interactive truncation with one ring word per element, sent by party 1.
///
/// Party 1 masks its share with a uniform value from [0, 2^(l-1)) and sends it.
/// Party 0 adds a 2^(l-2) bias so the masked integer never wraps, and the two
/// local shifts then cancel to floor(x / 2^bits) plus a carry in {0, 1}.
/// Inputs must satisfy |x| < 2^(l-2).
pub fn trunc_interactive<W: RingWord, R: Rng + ?Sized>(
    share: &AdditiveShare<W>,
    bits: u32,
    chan: &mut Channel,
    rng: &mut R,
) -> Result<AdditiveShare<W>, TransportError> {
    let bias = W::one() << (W::WIDTH as usize - 2);
    let half_mask = (W::one() << (W::WIDTH as usize - 1)) - W::one();
    let t = &share.values;
    let data = if share.party == 1 {
        let rho: Vec<W> = (0..t.len()).map(|_| W::random(rng) & half_mask).collect();
        let z: Vec<W> = t.data.iter().zip(&rho).map(|(a, r)| a.wrapping_add(r)).collect();
        chan.send_words(MsgType::Trunc, &z)?;
        rho.iter().map(|r| (*r >> bits as usize).wrapping_neg()).collect()
    } else {
        let z: Vec<W> = chan.recv_words(MsgType::Trunc, t.len())?;
        let b = bias >> bits as usize;
        t.data.iter().zip(&z).map(|(a, z)| (a.wrapping_add(z).wrapping_add(&bias) >> bits as usize).wrapping_sub(&b)).collect()
    };
    let mut values = RingTensor { shape: t.shape.clone(), data, cfg: t.cfg, scale: t.scale };
    values.scale = t.scale.saturating_sub(bits);
    Ok(AdditiveShare { party: share.party, values })
}

/// Selects local or interactive truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruncMode {
    Local,
    Interactive,
}

impl std::str::FromStr for TruncMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lt" | "LT" => Ok(TruncMode::Local),
            "it" | "IT" => Ok(TruncMode::Interactive),
            _ => Err(format!("unknown truncation mode {s}")),
        }
    }
}

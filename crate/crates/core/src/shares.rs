//! Additive shares, offset-masked wires and the conversions between them.

use rand::RngCore;
use thiserror::Error;

use crate::ring::{pub_term, RingError, RingTensor, RingWord};
use crate::transport::{Channel, MsgType, TransportError};

#[derive(Debug, Error)]
pub enum ShareError {
    #[error("both shares belong to party {0}")]
    PartyMismatch(u8),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("offset mismatch: wire carries {got:?}, key expects {expected:?}")]
    OffsetMismatch { expected: OffsetId, got: OffsetId },
    #[error("wire was produced with a non-empty output offset {0:?}")]
    OutputOffsetPresent(OffsetId),
    #[error("wire is already opened")]
    AlreadyOpened,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Identifies a dealer-generated offset. Id 0 means "no offset".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct OffsetId(pub u64);

impl OffsetId {
    pub const NONE: OffsetId = OffsetId(0);

    pub fn is_none(self) -> bool {
        self.0 == 0
    }
}

/// One party's additive share of a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditiveShare<W> {
    pub party: u8,
    pub values: RingTensor<W>,
}

impl<W: RingWord> AdditiveShare<W> {
    pub fn new(party: u8, values: RingTensor<W>) -> Self {
        AdditiveShare { party, values }
    }

    /// This party's share of a public tensor (party 1 holds it, party 0 holds zero).
    pub fn public(party: u8, t: &RingTensor<W>) -> Self {
        AdditiveShare { party, values: t.map(|w| pub_term(party, w)) }
    }

    pub fn zeros(party: u8, shape: &[usize], cfg: crate::ring::RingConfig) -> Self {
        AdditiveShare { party, values: RingTensor::zeros(shape, cfg) }
    }

    pub fn add(&self, o: &Self) -> Self {
        AdditiveShare { party: self.party, values: self.values.add(&o.values) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        AdditiveShare { party: self.party, values: self.values.sub(&o.values) }
    }

    pub fn neg(&self) -> Self {
        AdditiveShare { party: self.party, values: self.values.neg() }
    }

    pub fn mul_int(&self, c: i64) -> Self {
        AdditiveShare { party: self.party, values: self.values.mul_int(c) }
    }

    /// Adds a public constant to the shared value.
    pub fn add_public(&self, t: &RingTensor<W>) -> Self {
        self.add(&AdditiveShare::public(self.party, t))
    }

    pub fn add_public_word(&self, c: W) -> Self {
        AdditiveShare { party: self.party, values: self.values.add_word(pub_term(self.party, c)) }
    }

    /// Multiplies by a public tensor elementwise (scales add).
    pub fn mul_public(&self, t: &RingTensor<W>) -> Self {
        AdditiveShare { party: self.party, values: self.values.mul(t) }
    }

    pub fn mul_public_word(&self, c: W, c_scale: u32) -> Self {
        let mut v = self.values.map(|a| a.wrapping_mul(&c));
        v.scale = self.values.scale + c_scale;
        AdditiveShare { party: self.party, values: v }
    }

    pub fn shape(&self) -> &[usize] {
        &self.values.shape
    }
}

/// Splits `x` with share 1 drawn uniformly from `rng`.
pub fn split<W: RingWord, R: RngCore + ?Sized>(x: &RingTensor<W>, rng: &mut R) -> (AdditiveShare<W>, AdditiveShare<W>) {
    let r = RingTensor::random(&x.shape, x.cfg, rng).with_scale(x.scale);
    split_with(x, &r)
}

/// Splits `x` with a given share 1.
pub fn split_with<W: RingWord>(x: &RingTensor<W>, r: &RingTensor<W>) -> (AdditiveShare<W>, AdditiveShare<W>) {
    let s0 = x.sub(r);
    (AdditiveShare { party: 0, values: s0 }, AdditiveShare { party: 1, values: r.clone().with_scale(x.scale) })
}

pub fn restore<W: RingWord>(a: &AdditiveShare<W>, b: &AdditiveShare<W>) -> Result<RingTensor<W>, ShareError> {
    if a.party == b.party {
        return Err(ShareError::PartyMismatch(a.party));
    }
    Ok(a.values.try_add(&b.values)?)
}

/// Dealer-issued share of an offset r, used to move an additive share onto a wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskShare<W> {
    pub party: u8,
    pub offset_id: OffsetId,
    pub values: RingTensor<W>,
}

impl<W: RingWord> MaskShare<W> {
    /// The empty offset: the wire carries the value itself.
    pub fn empty(party: u8, shape: &[usize], cfg: crate::ring::RingConfig) -> Self {
        MaskShare { party, offset_id: OffsetId::NONE, values: RingTensor::zeros(shape, cfg) }
    }
}

/// A wire of an offset-function gate: shares of x̂ = x + r, or the opened x̂.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedWire<W> {
    pub party: u8,
    pub values: RingTensor<W>,
    pub offset_id: OffsetId,
    pub opened: bool,
}

impl<W: RingWord> MaskedWire<W> {
    /// Unopened wire from shares of x + r.
    pub fn from_shares(party: u8, values: RingTensor<W>, offset_id: OffsetId) -> Self {
        MaskedWire { party, values, offset_id, opened: false }
    }

    /// This party's additive share of x̂, whether or not the wire is open.
    pub fn hat_share(&self) -> RingTensor<W> {
        if self.opened {
            self.values.map(|w| pub_term(self.party, w))
        } else {
            self.values.clone()
        }
    }

    /// The public x̂. Panics if the wire is still shared.
    pub fn hat(&self) -> &RingTensor<W> {
        assert!(self.opened, "wire not opened");
        &self.values
    }

    pub fn check(&self, expected: OffsetId) -> Result<(), ShareError> {
        if self.offset_id != expected {
            return Err(ShareError::OffsetMismatch { expected, got: self.offset_id });
        }
        Ok(())
    }

    /// Opens the wire in place; a second call is free.
    pub fn open(&mut self, chan: &mut Channel) -> Result<(), ShareError> {
        if self.opened {
            return Ok(());
        }
        let peer: Vec<W> = chan.exchange_words(MsgType::Open, &self.values.data)?;
        for (d, p) in self.values.data.iter_mut().zip(peer) {
            *d = d.wrapping_add(&p);
        }
        self.opened = true;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// ⟨x̂⟩ = ⟨x⟩ + ⟨r⟩, without communication.
pub fn to_masked<W: RingWord>(x: &AdditiveShare<W>, mask: &MaskShare<W>, expected: OffsetId) -> Result<MaskedWire<W>, ShareError> {
    if mask.offset_id != expected {
        return Err(ShareError::OffsetMismatch { expected, got: mask.offset_id });
    }
    if x.party != mask.party {
        return Err(ShareError::PartyMismatch(x.party));
    }
    let values = x.values.try_add(&mask.values)?.with_scale(x.values.scale);
    Ok(MaskedWire { party: x.party, values, offset_id: mask.offset_id, opened: false })
}

/// Opens a wire, consuming and returning it.
pub fn open_masked<W: RingWord>(mut w: MaskedWire<W>, chan: &mut Channel) -> Result<MaskedWire<W>, ShareError> {
    w.open(chan)?;
    Ok(w)
}

/// Reads the output of a gate keyed without an output offset as an additive share.
pub fn drop_output_offset<W: RingWord>(w: MaskedWire<W>) -> Result<AdditiveShare<W>, ShareError> {
    if !w.offset_id.is_none() {
        return Err(ShareError::OutputOffsetPresent(w.offset_id));
    }
    if w.opened {
        return Err(ShareError::AlreadyOpened);
    }
    Ok(AdditiveShare { party: w.party, values: w.values })
}

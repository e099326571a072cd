//! Online phase: gate evaluation by one party against its peer.

pub mod baseline;
pub mod cost;
pub mod gates;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::dealer::KeyError;
use crate::ring::{pub_term, trunc_interactive, trunc_local, RingConfig, RingError, RingTensor, RingWord, TruncMode};
use crate::shares::{AdditiveShare, MaskedWire, ShareError};
use crate::transport::{Channel, CommReport, MsgType, TransportError};

pub use baseline::*;
pub use gates::*;

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("key belongs to party {got}, session is party {expected}")]
    Party { expected: u8, got: u8 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// One party's end of a protocol run.
pub struct Session {
    pub party: u8,
    pub chan: Channel,
    pub trunc: TruncMode,
    pub cfg: RingConfig,
    rng: ChaCha20Rng,
}

impl Session {
    /// `seed` drives the party's own randomness (the interactive truncation mask).
    pub fn new(party: u8, chan: Channel, cfg: RingConfig, trunc: TruncMode, seed: u64) -> Self {
        let rng = ChaCha20Rng::seed_from_u64(seed ^ ((party as u64 + 1) << 56));
        Session { party, chan, trunc, cfg, rng }
    }

    /// Runs `f` with `seg` appended to the meter label.
    pub fn scoped<R>(&mut self, seg: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        let prev = self.chan.push_label(seg);
        let r = f(self);
        self.chan.set_label(prev);
        r
    }

    pub fn report(&self) -> CommReport {
        self.chan.report()
    }

    pub fn check_party(&self, got: u8) -> Result<(), ProtoError> {
        if got != self.party {
            return Err(ProtoError::Party { expected: self.party, got });
        }
        Ok(())
    }

    /// Truncates by `bits` with the session's mode; the scale tag becomes `scale`.
    pub fn trunc_to<W: RingWord>(&mut self, x: &AdditiveShare<W>, bits: u32, scale: u32) -> Result<AdditiveShare<W>, ProtoError> {
        let mut t = match self.trunc {
            TruncMode::Local => trunc_local(x, bits),
            TruncMode::Interactive => trunc_interactive(x, bits, &mut self.chan, &mut self.rng)?,
        };
        t.values.scale = scale;
        Ok(t)
    }

    /// Rescales a product at scale 2s back to s.
    pub fn trunc<W: RingWord>(&mut self, x: &AdditiveShare<W>) -> Result<AdditiveShare<W>, ProtoError> {
        let s = self.cfg.s;
        self.trunc_to(x, s, s)
    }

    pub fn open<W: RingWord>(&mut self, w: &mut MaskedWire<W>) -> Result<(), ProtoError> {
        w.open(&mut self.chan)?;
        Ok(())
    }

    /// Opens several wires with a single exchange; opened wires are skipped.
    pub fn open_all<W: RingWord>(&mut self, ws: &mut [&mut MaskedWire<W>]) -> Result<(), ProtoError> {
        let mut payload = Vec::new();
        for w in ws.iter().filter(|w| !w.opened) {
            payload.extend_from_slice(&w.values.data);
        }
        if payload.is_empty() {
            return Ok(());
        }
        let peer: Vec<W> = self.chan.exchange_words(MsgType::Open, &payload)?;
        let mut at = 0;
        for w in ws.iter_mut().filter(|w| !w.opened) {
            for d in w.values.data.iter_mut() {
                *d = d.wrapping_add(&peer[at]);
                at += 1;
            }
            w.opened = true;
        }
        Ok(())
    }

    /// This party's share of a public tensor.
    pub fn public<W: RingWord>(&self, t: &RingTensor<W>) -> RingTensor<W> {
        t.map(|w| pub_term(self.party, w))
    }

    pub fn public_word<W: RingWord>(&self, w: W) -> W {
        pub_term(self.party, w)
    }
}

/// Runs the two parties on two threads over the given channel pair.
pub fn run_pair<R: Send>(chans: (Channel, Channel), cfg: RingConfig, trunc: TruncMode, seed: u64, f: impl Fn(&mut Session) -> R + Sync) -> (R, R) {
    let (c0, c1) = chans;
    std::thread::scope(|sc| {
        let f = &f;
        let h0 = sc.spawn(move || f(&mut Session::new(0, c0, cfg, trunc, seed)));
        let h1 = sc.spawn(move || f(&mut Session::new(1, c1, cfg, trunc, seed)));
        (h0.join().expect("party 0 panicked"), h1.join().expect("party 1 panicked"))
    })
}

/// [`run_pair`] over an in-memory channel.
pub fn run_mem<R: Send>(cfg: RingConfig, trunc: TruncMode, seed: u64, f: impl Fn(&mut Session) -> R + Sync) -> (R, R) {
    run_pair(Channel::mem_pair(), cfg, trunc, seed, f)
}

//! Two-party fine-tuning with offset-function gates over Z_{2^l}.

pub mod dealer;
pub mod fedtune;
pub mod nn;
pub mod oracle;
pub mod proto;
pub mod ring;
pub mod runner;
pub mod shares;
pub mod transport;

pub use ring::{RingConfig, RingTensor, RingWord, TruncMode};
pub use shares::{AdditiveShare, MaskShare, MaskedWire, OffsetId};

pub type Ring64 = u64;
pub type Ring32 = u32;
pub type Tensor64 = RingTensor<u64>;
pub type Tensor32 = RingTensor<u32>;
pub type Share64 = AdditiveShare<u64>;
pub type Share32 = AdditiveShare<u32>;

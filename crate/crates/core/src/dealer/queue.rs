use std::collections::VecDeque;

use thiserror::Error;

use super::keys::*;
use crate::shares::MaskShare;

#[derive(Debug, Error, PartialEq)]
pub enum KeyError {
    #[error("key queue exhausted, expected {0:?}")]
    Exhausted(GateKind),
    #[error("next key is {got:?}, expected {expected:?}")]
    WrongKind { expected: GateKind, got: GateKind },
}

/// Keys for one party, consumed in the order the protocol evaluates gates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyQueue<W> {
    keys: VecDeque<GateKey<W>>,
}

macro_rules! pop_fn {
    ($name:ident, $variant:ident, $ty:ident) => {
        pub fn $name(&mut self) -> Result<$ty<W>, KeyError> {
            match self.keys.pop_front() {
                Some(GateKey::$variant(k)) => Ok(k),
                Some(other) => {
                    let got = other.kind();
                    self.keys.push_front(other);
                    Err(KeyError::WrongKind { expected: GateKind::$variant, got })
                }
                None => Err(KeyError::Exhausted(GateKind::$variant)),
            }
        }
    };
}

impl<W: crate::ring::RingWord> KeyQueue<W> {
    pub fn new() -> Self {
        KeyQueue { keys: VecDeque::new() }
    }

    pub fn from_keys(keys: Vec<GateKey<W>>) -> Self {
        KeyQueue { keys: keys.into() }
    }

    pub fn push(&mut self, k: impl Into<GateKey<W>>) {
        self.keys.push_back(k.into());
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn into_keys(self) -> Vec<GateKey<W>> {
        self.keys.into()
    }

    pub fn keys(&self) -> impl Iterator<Item = &GateKey<W>> {
        self.keys.iter()
    }

    pop_fn!(pop_beaver, Beaver, BeaverKey);
    pop_fn!(pop_mul, Mul, MulKey);
    pop_fn!(pop_square, Square, SquareKey);
    pop_fn!(pop_power, Power, PowerKey);
    pop_fn!(pop_exp, Exp, ExpKey);
    pop_fn!(pop_recip, Recip, RecipKey);
    pop_fn!(pop_softmax, Softmax, SoftmaxKey);
    pop_fn!(pop_sigmoid, Sigmoid, SigmoidKey);
    pop_fn!(pop_dropout_static, DropoutStatic, DropoutStaticKey);
    pop_fn!(pop_dropout_dynamic, DropoutDynamic, DropoutDynamicKey);
    pop_fn!(pop_tp, Tp, TpKey);
    pop_fn!(pop_less_than, LessThan, LtKey);
    pop_fn!(pop_offset, Offset, MaskShare);
    pop_fn!(pop_tanh, Tanh, TanhKey);
    pop_fn!(pop_relu, Relu, ReluKey);
    pop_fn!(pop_bit_lt, BitLessThan, BitLtKey);
}

/// Pushes the two halves of a key pair onto the two parties' queues.
pub fn push_pair<W: crate::ring::RingWord, K: Into<GateKey<W>>>(qs: &mut (KeyQueue<W>, KeyQueue<W>), pair: (K, K)) {
    qs.0.push(pair.0);
    qs.1.push(pair.1);
}

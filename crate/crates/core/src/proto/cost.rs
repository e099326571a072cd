//! Per-element payload formulas, counted in ring words summed over both parties.

use crate::ring::TruncMode;

/// Words opened plus words spent on interactive truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cost {
    pub open: u64,
    pub trunc: u64,
}

impl Cost {
    const fn new(open: u64, trunc: u64) -> Self {
        Cost { open, trunc }
    }

    pub fn bits(self, l: u32, mode: TruncMode) -> u64 {
        let t = match mode {
            TruncMode::Interactive => self.trunc,
            TruncMode::Local => 0,
        };
        (self.open + t) * l as u64
    }

    pub fn plus(self, o: Cost) -> Cost {
        Cost::new(self.open + o.open, self.trunc + o.trunc)
    }

    pub fn times(self, k: u64) -> Cost {
        Cost::new(self.open * k, self.trunc * k)
    }
}

pub mod ours {
    use super::Cost;

    pub fn mul() -> Cost {
        Cost::new(4, 1)
    }

    pub fn square() -> Cost {
        Cost::new(2, 1)
    }

    pub fn power(m: usize) -> Cost {
        square().times(m as u64)
    }

    pub fn exp(m: usize) -> Cost {
        Cost::new(0, 1).plus(power(m))
    }

    pub fn less_than() -> Cost {
        Cost::new(2, 0)
    }

    pub fn relu() -> Cost {
        Cost::new(4, 1)
    }

    /// `m_exp` is ignored when the initial value is supplied.
    pub fn recip(m: usize, with_init: bool, m_exp: usize) -> Cost {
        let base = Cost::new(10, 2).plus(Cost::new(4, 2).times(m as u64));
        if with_init {
            base
        } else {
            base.plus(exp(m_exp))
        }
    }

    pub fn sigmoid(m_exp: usize, m_recip: usize) -> Cost {
        Cost::new(12, 2).plus(exp(m_exp)).plus(recip(m_recip, true, 0))
    }

    pub fn tanh(m_exp: usize, m_recip: usize) -> Cost {
        sigmoid(m_exp, m_recip)
    }

    pub fn softmax(m: usize) -> Cost {
        Cost::new(8, 2).plus(Cost::new(4, 2).times(m as u64))
    }

    pub fn dropout_static() -> Cost {
        Cost::new(2, 1)
    }

    pub fn dropout_dynamic() -> Cost {
        Cost::new(4, 1)
    }

    /// Whole outer product of an N-vector and an M-vector.
    pub fn tp(n: usize, m: usize) -> Cost {
        Cost::new(2 * (n + m) as u64, (n * m) as u64)
    }
}

/// Additive-sharing baselines, excluding the comparison traffic under `cmp`.
pub mod baseline {
    use super::Cost;

    pub fn mul() -> Cost {
        Cost::new(4, 1)
    }

    pub fn square() -> Cost {
        mul()
    }

    pub fn power(m: usize) -> Cost {
        mul().times(m as u64)
    }

    pub fn exp(m: usize) -> Cost {
        Cost::new(0, 1).plus(power(m))
    }

    /// Bit comparison: opening plus the converted bit.
    pub fn less_than() -> Cost {
        Cost::new(4, 0)
    }

    pub fn recip(m: usize, with_init: bool, m_exp: usize) -> Cost {
        let base = mul().times(2 + 2 * m as u64);
        if with_init {
            base
        } else {
            base.plus(exp(m_exp))
        }
    }

    pub fn sigmoid(m_exp: usize, m_recip: usize) -> Cost {
        mul().plus(exp(m_exp)).plus(recip(m_recip, true, 0)).plus(Cost::new(8, 1))
    }

    pub fn tanh(m_exp: usize, m_recip: usize) -> Cost {
        sigmoid(m_exp, m_recip)
    }

    pub fn softmax(m: usize) -> Cost {
        mul().times(2 + 2 * m as u64)
    }

    pub fn dropout_static() -> Cost {
        mul()
    }

    pub fn dropout_dynamic() -> Cost {
        less_than().plus(mul())
    }

    pub fn tp(n: usize, m: usize) -> Cost {
        mul().times((n * m) as u64)
    }

    /// Comparisons run under `cmp` per element.
    pub fn cmp_count(op: &str) -> u64 {
        match op {
            "recip" => 1,
            "sigmoid" | "tanh" | "softmax" => 2,
            _ => 0,
        }
    }
}

//! Plaintext fixed-point reference with the same approximation and
//! truncation schedule as the secure gates, on unbounded integers.
//!
//! Values are intervals of integers at scale s. With `Rounding::Floor` every
//! truncation floors and intervals stay points. With `Rounding::Either` a
//! truncation may also round up by one, which covers both truncation modes.

use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Floor,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Iv {
    pub lo: i128,
    pub hi: i128,
}

impl Iv {
    pub fn point(v: i128) -> Iv {
        Iv { lo: v, hi: v }
    }

    pub fn contains(self, v: i128) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn add(self, o: Iv) -> Iv {
        Iv { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    pub fn sub(self, o: Iv) -> Iv {
        Iv { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }

    pub fn neg(self) -> Iv {
        Iv { lo: -self.hi, hi: -self.lo }
    }

    pub fn scale(self, c: i128) -> Iv {
        let (a, b) = (self.lo * c, self.hi * c);
        Iv { lo: a.min(b), hi: a.max(b) }
    }

    pub fn mul(self, o: Iv) -> Iv {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Iv { lo: *c.iter().min().unwrap(), hi: *c.iter().max().unwrap() }
    }

    pub fn square(self) -> Iv {
        if self.lo <= 0 && self.hi >= 0 {
            Iv { lo: 0, hi: (self.lo * self.lo).max(self.hi * self.hi) }
        } else {
            self.mul(self)
        }
    }

    pub fn union(self, o: Iv) -> Iv {
        Iv { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn width(self) -> i128 {
        self.hi - self.lo
    }
}

/// Reference evaluator at scale `s`.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub s: u32,
    pub rounding: Rounding,
}

impl Oracle {
    pub fn new(s: u32, rounding: Rounding) -> Self {
        Oracle { s, rounding }
    }

    pub fn one(&self) -> i128 {
        1i128 << self.s
    }

    /// floor(x·2^s).
    pub fn enc<F: Float>(&self, x: F) -> i128 {
        let v = x.to_f64().unwrap() * (self.one() as f64);
        v.floor() as i128
    }

    pub fn dec(&self, v: i128) -> f64 {
        v as f64 / self.one() as f64
    }

    pub fn c(&self, x: f64) -> Iv {
        Iv::point(self.enc(x))
    }

    pub fn trunc_by(&self, v: Iv, bits: u32) -> Iv {
        let lo = v.lo >> bits;
        let hi = v.hi >> bits;
        match self.rounding {
            Rounding::Floor => Iv { lo, hi },
            Rounding::Either => Iv { lo, hi: hi + 1 },
        }
    }

    pub fn trunc(&self, v: Iv) -> Iv {
        self.trunc_by(v, self.s)
    }

    pub fn mul(&self, x: Iv, y: Iv) -> Iv {
        self.trunc(x.mul(y))
    }

    pub fn square(&self, x: Iv) -> Iv {
        self.trunc(x.square())
    }

    /// 1{x < 0} as an integer; both outcomes when the sign is uncertain.
    pub fn lt(&self, x: Iv) -> Iv {
        if x.hi < 0 {
            Iv::point(1)
        } else if x.lo >= 0 {
            Iv::point(0)
        } else {
            Iv { lo: 0, hi: 1 }
        }
    }

    pub fn power(&self, x: Iv, m: usize) -> Iv {
        (0..m).fold(x, |y, _| self.square(y))
    }

    pub fn exp(&self, x: Iv, m: usize) -> Iv {
        let base = self.trunc_by(x, m as u32).add(Iv::point(self.one()));
        self.power(base, m)
    }

    /// Newton reciprocal; `y0 = None` uses 3e^(1−2|x|) + 0.003.
    pub fn recip(&self, x: Iv, m: usize, y0: Option<f64>, m_exp: usize) -> Iv {
        let one = Iv::point(self.one());
        let sign = one.sub(self.lt(x).scale(2 * self.one()));
        let abs = self.mul(x, sign);
        let mut y = match y0 {
            Some(v) => self.c(v),
            None => {
                let e = self.exp(one.sub(abs.scale(2)), m_exp);
                e.scale(3).add(self.c(0.003))
            }
        };
        for _ in 0..m {
            let sq = self.square(y);
            let xy2 = self.mul(abs, sq);
            y = y.scale(2).sub(xy2);
        }
        self.mul(y, sign)
    }

    pub fn sigmoid(&self, x: Iv, m_exp: usize, m_recip: usize) -> Iv {
        let one = Iv::point(self.one());
        let p = self.lt(x).scale(self.one());
        let sign = one.sub(p.scale(2));
        let abs = self.mul(x, sign);
        let e = self.exp(abs.neg(), m_exp);
        let t = self.recip(one.add(e), m_recip, Some(0.75), 0);
        self.trunc(t.mul(one.sub(p)).add(one.sub(t).mul(p)))
    }

    pub fn tanh(&self, x: Iv, m_exp: usize, m_recip: usize) -> Iv {
        self.sigmoid(x.scale(2), m_exp, m_recip).scale(2).sub(Iv::point(self.one()))
    }

    /// c·max(z, 0) for public c.
    pub fn relu(&self, z: Iv, c: i128) -> Iv {
        let keep = Iv::point(1).sub(self.lt(z)).scale(c);
        self.mul(z, keep)
    }

    /// Softmax of one row with clipping to `clip` and `m` iterations.
    pub fn softmax(&self, x: &[Iv], m: usize, clip: (f64, f64)) -> Vec<Iv> {
        let k = x.len();
        let c = self.enc(1.0 / m as f64);
        let xp: Vec<Iv> = x
            .iter()
            .map(|&v| {
                let lo = self.relu(v.sub(self.c(clip.0)), c);
                let hi = self.relu(v.sub(self.c(clip.1)), c);
                self.c(clip.0 / m as f64).add(lo).sub(hi)
            })
            .collect();
        let mut y = vec![self.c(1.0 / k as f64); k];
        for _ in 0..m {
            let t: Vec<Iv> = xp.iter().zip(&y).map(|(&a, &b)| self.mul(a, b)).collect();
            let st = t.iter().fold(Iv::point(0), |a, &b| a.add(b));
            y = y.iter().zip(&t).map(|(&yy, &tt)| yy.add(tt).sub(self.mul(yy, st))).collect();
        }
        y
    }

    /// Dropout with uniform draw `r`: dropped when r < p.
    pub fn dropout(&self, x: Iv, r: f64, p: f64) -> Iv {
        if self.enc(r) < self.enc(p) {
            self.trunc(x.scale(0))
        } else {
            self.trunc(x.scale(self.enc(1.0 / (1.0 - p))))
        }
    }
}

/// Sum of the absolute relative errors divided by the count; denominators
/// below `floor` are clamped.
pub fn mean_rel_err(got: &[f64], want: &[f64], floor: f64) -> f64 {
    let n = got.len().max(1) as f64;
    got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(floor)).sum::<f64>() / n
}

/// Fixed-point head parameters: W1 (h×d), b1, W2 (k×h), b2, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainHead {
    pub d_in: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<i128>,
    pub b1: Vec<i128>,
    pub w2: Vec<i128>,
    pub b2: Vec<i128>,
}

impl PlainHead {
    /// W1 ‖ b1 ‖ W2 ‖ b2.
    pub fn flatten(&self) -> Vec<i128> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn from_flat(d_in: usize, hidden: usize, classes: usize, v: &[i128]) -> PlainHead {
        let (a, rest) = v.split_at(hidden * d_in);
        let (b, rest) = rest.split_at(hidden);
        let (c, d) = rest.split_at(classes * hidden);
        PlainHead { d_in, hidden, classes, w1: a.to_vec(), b1: b.to_vec(), w2: c.to_vec(), b2: d.to_vec() }
    }
}

impl Oracle {
    fn pt(&self, v: Iv) -> i128 {
        v.lo
    }

    /// Row-major x (b×n) times Wᵀ (W is m×n), one truncation per output, plus bias.
    fn linear(&self, x: &[i128], b: usize, w: &[i128], bias: &[i128], m: usize) -> Vec<i128> {
        let n = x.len() / b;
        let mut out = Vec::with_capacity(b * m);
        for r in 0..b {
            for j in 0..m {
                let acc: i128 = (0..n).map(|k| x[r * n + k] * w[j * n + k]).sum();
                out.push(self.pt(self.trunc(Iv::point(acc))) + bias[j]);
            }
        }
        out
    }

    fn mean_scale(&self, v: i128, b: usize) -> i128 {
        self.pt(self.trunc(Iv::point(v * self.enc(1.0 / b as f64))))
    }

    /// Batch-mean of per-row outer products dy_r ⊗ x_r, each product truncated.
    fn outer_mean(&self, dy: &[i128], x: &[i128], b: usize) -> Vec<i128> {
        let (o, i) = (dy.len() / b, x.len() / b);
        let mut acc = vec![0i128; o * i];
        for r in 0..b {
            for p in 0..o {
                for q in 0..i {
                    acc[p * i + q] += self.pt(self.trunc(Iv::point(dy[r * o + p] * x[r * i + q])));
                }
            }
        }
        acc.into_iter().map(|v| self.mean_scale(v, b)).collect()
    }

    fn row_mean(&self, dy: &[i128], b: usize) -> Vec<i128> {
        let o = dy.len() / b;
        (0..o).map(|p| self.mean_scale((0..b).map(|r| dy[r * o + p]).sum(), b)).collect()
    }

    /// Logits of the head on a batch of fixed-point feature rows.
    pub fn head_logits(&self, h: &PlainHead, x: &[i128], b: usize, m_exp: usize, m_recip: usize) -> Vec<i128> {
        let z1 = self.linear(x, b, &h.w1, &h.b1, h.hidden);
        let a: Vec<i128> = z1.iter().map(|&z| self.pt(self.tanh(Iv::point(z), m_exp, m_recip))).collect();
        self.linear(&a, b, &h.w2, &h.b2, h.classes)
    }

    /// Batch-mean gradients (same layout as [`PlainHead::flatten`]) with the
    /// schedule of the secure head step.
    pub fn head_grads(
        &self,
        h: &PlainHead,
        x: &[i128],
        onehot: &[i128],
        b: usize,
        m_exp: usize,
        m_recip: usize,
        m_softmax: usize,
        clip: (f64, f64),
    ) -> Vec<i128> {
        let z1 = self.linear(x, b, &h.w1, &h.b1, h.hidden);
        let a: Vec<i128> = z1.iter().map(|&z| self.pt(self.tanh(Iv::point(z), m_exp, m_recip))).collect();
        let z2 = self.linear(&a, b, &h.w2, &h.b2, h.classes);
        let k = h.classes;
        let mut g2 = Vec::with_capacity(b * k);
        for r in 0..b {
            let row: Vec<Iv> = z2[r * k..(r + 1) * k].iter().map(|&v| Iv::point(v)).collect();
            for (j, p) in self.softmax(&row, m_softmax, clip).into_iter().enumerate() {
                g2.push(self.pt(p) - onehot[r * k + j]);
            }
        }
        let dw2 = self.outer_mean(&g2, &a, b);
        let db2 = self.row_mean(&g2, b);
        // ga = g2 · W2
        let hd = h.hidden;
        let mut ga = Vec::with_capacity(b * hd);
        for r in 0..b {
            for j in 0..hd {
                let acc: i128 = (0..k).map(|c| g2[r * k + c] * h.w2[c * hd + j]).sum();
                ga.push(self.pt(self.trunc(Iv::point(acc))));
            }
        }
        let dz1: Vec<i128> = ga
            .iter()
            .zip(&a)
            .map(|(&g, &y)| {
                let om = self.one() - self.pt(self.square(Iv::point(y)));
                self.pt(self.mul(Iv::point(g), Iv::point(om)))
            })
            .collect();
        let dw1 = self.outer_mean(&dz1, x, b);
        let db1 = self.row_mean(&dz1, b);
        [dw1, db1, dw2, db2].concat()
    }
}

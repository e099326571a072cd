//! Distributed comparison function: keys (k_0, k_1) whose evaluations at a
//! public n-bit x sum to β·1{x < α}, built from a fixed-key AES seed expander
//! over 128-bit seeds.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use rand::RngCore;
use std::sync::OnceLock;

const FIXED_KEY: [u8; 16] = *b"dcf-seed-expand!";

fn cipher() -> &'static Aes128 {
    static C: OnceLock<Aes128> = OnceLock::new();
    C.get_or_init(|| Aes128::new(GenericArray::from_slice(&FIXED_KEY)))
}

type Block = GenericArray<u8, aes::cipher::consts::U16>;

/// Reused buffers for seed expansion.
#[derive(Default)]
struct Scratch {
    blocks: Vec<Block>,
    out: Vec<u128>,
}

impl Scratch {
    /// out_j = AES(s ^ (j << 64)) ^ s ^ (j << 64) for j in `first..first + n`.
    fn expand(&mut self, seed: u128, first: u64, n: usize) {
        self.blocks.clear();
        self.blocks.extend((0..n as u64).map(|j| Block::from((seed ^ (((first + j) as u128) << 64)).to_le_bytes())));
        cipher().encrypt_blocks(&mut self.blocks);
        self.out.clear();
        self.out.extend(self.blocks.iter().enumerate().map(|(j, b)| u128::from_le_bytes((*b).into()) ^ seed ^ (((first + j as u64) as u128) << 64)));
    }

    /// Word i of the payload starting at block `at`.
    fn word(&self, at: usize, i: usize) -> u64 {
        (self.out[at + i / 2] >> (64 * (i % 2))) as u64
    }

    /// Seeds, control bits and the value block offsets of both children.
    fn prg(&mut self, seed: u128, k: usize) -> Expanded {
        let nv = k.div_ceil(2);
        self.expand(seed, 0, 2 + 2 * nv);
        let b = &self.out;
        Expanded { s: [b[0] & !1, b[1] & !1], t: [(b[0] & 1) as u8, (b[1] & 1) as u8], v: [2, 2 + nv] }
    }

    fn convert(&mut self, seed: u128, k: usize) {
        self.expand(seed, 1 << 20, k.div_ceil(2));
    }
}

struct Expanded {
    s: [u128; 2],
    t: [u8; 2],
    v: [usize; 2],
}

/// Arithmetic in Z_{2^bits} on u64 words.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Group {
    pub bits: u32,
}

impl Group {
    pub fn mask(self) -> u64 {
        if self.bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }
    pub fn add(self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask()
    }
    pub fn sub(self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask()
    }
    pub fn neg(self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask()
    }
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask()
    }
    /// (−1)^t · a
    pub fn sign(self, t: u8, a: u64) -> u64 {
        if t & 1 == 1 {
            self.neg(a)
        } else {
            a & self.mask()
        }
    }
}

/// A batch of DCF keys for one party, one key per element, over a common
/// domain width and payload length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcfBatch {
    pub n_bits: u32,
    pub k: usize,
    pub group: Group,
    pub seeds: Vec<u128>,
    /// `count * n_bits` seed corrections.
    pub cw_s: Vec<u128>,
    /// `count * n_bits * k` value corrections.
    pub cw_v: Vec<u64>,
    /// `count * n_bits` control-bit corrections, bit 0 left, bit 1 right.
    pub cw_t: Vec<u8>,
    /// `count * k` output corrections.
    pub last: Vec<u64>,
}

impl DcfBatch {
    pub fn count(&self) -> usize {
        self.seeds.len()
    }
}

fn bit(x: u64, n: u32, i: u32) -> u8 {
    ((x >> (n - 1 - i)) & 1) as u8
}

/// Keys for β_j · 1{x < α_j}, with `alpha[j]` an `n_bits`-bit value and
/// `beta[j*k..(j+1)*k]` the payload of element j.
pub fn gen<R: RngCore + ?Sized>(alpha: &[u64], beta: &[u64], k: usize, n_bits: u32, group: Group, rng: &mut R) -> (DcfBatch, DcfBatch) {
    let count = alpha.len();
    assert_eq!(beta.len(), count * k);
    let n = n_bits as usize;
    let mk = || DcfBatch {
        n_bits,
        k,
        group,
        seeds: Vec::with_capacity(count),
        cw_s: Vec::with_capacity(count * n),
        cw_v: Vec::with_capacity(count * n * k),
        cw_t: Vec::with_capacity(count * n),
        last: Vec::with_capacity(count * k),
    };
    let (mut k0, mut k1) = (mk(), mk());
    let g = group;
    let mut sc = [Scratch::default(), Scratch::default()];
    for j in 0..count {
        let a = alpha[j];
        let b = &beta[j * k..(j + 1) * k];
        let mut s = [rand_seed(rng), rand_seed(rng)];
        let mut t = [0u8, 1u8];
        k0.seeds.push(s[0]);
        k1.seeds.push(s[1]);
        let mut va = vec![0u64; k];
        let mut cws_v = Vec::with_capacity(n * k);
        for i in 0..n_bits {
            let e = [sc[0].prg(s[0], k), sc[1].prg(s[1], k)];
            let ai = bit(a, n_bits, i) as usize;
            let (keep, lose) = (ai, 1 - ai);
            let s_cw = e[0].s[lose] ^ e[1].s[lose];
            for c in 0..k {
                let w = |p: usize, side: usize| sc[p].word(e[p].v[side], c);
                let mut v = g.sub(g.sub(w(1, lose), w(0, lose)), va[c]);
                v = g.sign(t[1], v);
                if lose == 0 {
                    v = g.add(v, g.sign(t[1], b[c]));
                }
                cws_v.push(v);
                va[c] = g.add(g.add(g.sub(va[c], w(1, keep)), w(0, keep)), g.sign(t[1], v));
            }
            let t_cw_l = e[0].t[0] ^ e[1].t[0] ^ ai as u8 ^ 1;
            let t_cw_r = e[0].t[1] ^ e[1].t[1] ^ ai as u8;
            let t_cw = [t_cw_l, t_cw_r];
            for p in 0..2 {
                let ns = e[p].s[keep] ^ if t[p] == 1 { s_cw } else { 0 };
                let nt = e[p].t[keep] ^ (t[p] & t_cw[keep]);
                s[p] = ns;
                t[p] = nt;
            }
            k0.cw_s.push(s_cw);
            k0.cw_t.push(t_cw_l | (t_cw_r << 1));
        }
        k1.cw_s.extend_from_slice(&k0.cw_s[j * n..(j + 1) * n]);
        k1.cw_t.extend_from_slice(&k0.cw_t[j * n..(j + 1) * n]);
        k0.cw_v.extend_from_slice(&cws_v);
        k1.cw_v.extend_from_slice(&cws_v);
        sc[0].convert(s[0], k);
        sc[1].convert(s[1], k);
        for c in 0..k {
            let v = g.sign(t[1], g.sub(g.sub(sc[1].word(0, c), sc[0].word(0, c)), va[c]));
            k0.last.push(v);
            k1.last.push(v);
        }
    }
    (k0, k1)
}

fn rand_seed<R: RngCore + ?Sized>(rng: &mut R) -> u128 {
    ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128
}

/// Party `party`'s output shares for public inputs `xs` (one per key), `k` words each.
pub fn eval(party: u8, key: &DcfBatch, xs: &[u64]) -> Vec<u64> {
    assert_eq!(xs.len(), key.count());
    let (n, k, g) = (key.n_bits as usize, key.k, key.group);
    let mut out = Vec::with_capacity(xs.len() * k);
    let mut sc = Scratch::default();
    for (j, &x) in xs.iter().enumerate() {
        let mut s = key.seeds[j];
        let mut t = party & 1;
        let at = out.len();
        out.resize(at + k, 0);
        let v = &mut out[at..];
        for i in 0..n {
            let e = sc.prg(s, k);
            let s_cw = key.cw_s[j * n + i];
            let tc = key.cw_t[j * n + i];
            let v_cw = &key.cw_v[(j * n + i) * k..(j * n + i + 1) * k];
            let xi = bit(x, key.n_bits, i as u32) as usize;
            let mut ns = e.s[xi];
            let mut nt = e.t[xi];
            if t == 1 {
                ns ^= s_cw;
                nt ^= (tc >> xi) & 1;
            }
            for c in 0..k {
                let mut add = sc.word(e.v[xi], c);
                if t == 1 {
                    add = g.add(add, v_cw[c]);
                }
                v[c] = g.add(v[c], g.sign(party, add));
            }
            s = ns;
            t = nt;
        }
        sc.convert(s, k);
        for c in 0..k {
            let mut add = sc.word(0, c);
            if t == 1 {
                add = g.add(add, key.last[j * k + c]);
            }
            v[c] = g.add(v[c], g.sign(party, add));
        }
    }
    out
}

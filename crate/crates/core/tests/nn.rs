use priv_ft_core::dealer::Dealer;
use priv_ft_core::nn::{self, Approx, HeadDims, SecureHead};
use priv_ft_core::oracle::{Oracle, PlainHead, Rounding};
use priv_ft_core::proto::run_mem;
use priv_ft_core::ring::decode_fixed;
use priv_ft_core::shares::{restore, split};
use priv_ft_core::{RingConfig, RingTensor, TruncMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type T = RingTensor<u64>;

struct Case {
    dims: HeadDims,
    params: [T; 4],
    x: T,
    onehot: T,
    xf: Vec<f64>,
    labels: Vec<usize>,
}

fn case(seed: u64, b: usize) -> Case {
    let cfg = RingConfig::default();
    let dims = HeadDims { d_in: 6, hidden: 4, classes: 2 };
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let mut gen = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| r.gen_range(-s..s)).collect() };
    let shapes = nn::param_shapes(dims);
    let scales = [0.8, 0.3, 0.8, 0.3];
    let params: Vec<T> = shapes.iter().zip(scales).map(|(s, sc)| T::from_reals(&gen(s.iter().product(), sc), s, cfg).unwrap()).collect();
    let xf = gen(b * dims.d_in, 1.0);
    let x = T::from_reals(&xf, &[b, dims.d_in], cfg).unwrap();
    let labels: Vec<usize> = (0..b).map(|i| (seed as usize + i) % 2).collect();
    let oh: Vec<f64> = labels.iter().flat_map(|&l| (0..2).map(move |c| if c == l { 1.0 } else { 0.0 })).collect();
    let onehot = T::from_reals(&oh, &[b, 2], cfg).unwrap();
    Case { dims, params: [params[0].clone(), params[1].clone(), params[2].clone(), params[3].clone()], x, onehot, xf, labels }
}

fn secure_grads(c: &Case, trunc: TruncMode, a: Approx, seed: u64) -> T {
    let cfg = RingConfig::default();
    let b = c.x.shape[0];
    let mut d = Dealer::<u64>::from_u64(seed, cfg).unwrap();
    let (q0, q1) = nn::gen_step_keys(&mut d, c.dims, b, a).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
    let ps: Vec<_> = c.params.iter().map(|p| split(p, &mut rng)).collect();
    let xs = split(&c.x, &mut rng);
    let ys = split(&c.onehot, &mut rng);
    let qs = [std::sync::Mutex::new(Some(q0)), std::sync::Mutex::new(Some(q1))];
    let (g0, g1) = run_mem(cfg, trunc, seed, |sess| {
        let p = sess.party;
        let pick = |s: &(priv_ft_core::Share64, priv_ft_core::Share64)| if p == 0 { s.0.clone() } else { s.1.clone() };
        let params = [pick(&ps[0]).values, pick(&ps[1]).values, pick(&ps[2]).values, pick(&ps[3]).values];
        let mut head = SecureHead::new(p, &params);
        let mut q = qs[p as usize].lock().unwrap().take().unwrap();
        let g = nn::head_step(sess, &mut q, &mut head, &pick(&xs), &pick(&ys)).unwrap();
        assert!(q.is_empty());
        priv_ft_core::AdditiveShare::new(p, g.flatten())
    });
    restore(&g0, &g1).unwrap()
}

fn plain_head(c: &Case) -> PlainHead {
    let i = |t: &T| t.data.iter().map(|&w| w as i64 as i128).collect::<Vec<_>>();
    PlainHead { d_in: 6, hidden: 4, classes: 2, w1: i(&c.params[0]), b1: i(&c.params[1]), w2: i(&c.params[2]), b2: i(&c.params[3]) }
}

fn float_loss(theta: &[f64], c: &Case) -> f64 {
    let (d, h, k) = (c.dims.d_in, c.dims.hidden, c.dims.classes);
    let (w1, rest) = theta.split_at(h * d);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(k * h);
    let b = c.labels.len();
    let mut loss = 0.0;
    for r in 0..b {
        let x = &c.xf[r * d..(r + 1) * d];
        let a: Vec<f64> = (0..h).map(|j| ((0..d).map(|i| w1[j * d + i] * x[i]).sum::<f64>() + b1[j]).tanh()).collect();
        let z: Vec<f64> = (0..k).map(|j| (0..h).map(|i| w2[j * h + i] * a[i]).sum::<f64>() + b2[j]).collect();
        let mx = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - z[c.labels[r]];
    }
    loss / b as f64
}

fn decoded(c: &Case) -> Vec<f64> {
    c.params.iter().flat_map(|t| t.to_reals::<f64>()).collect()
}

#[test]
fn head_gradients_match_fixed_point_oracle() {
    let a = Approx::default();
    let o = Oracle::new(16, Rounding::Floor);
    for seed in 0..3 {
        let c = case(seed, 4);
        let want = o.head_grads(
            &plain_head(&c),
            &c.x.data.iter().map(|&w| w as i64 as i128).collect::<Vec<_>>(),
            &c.onehot.data.iter().map(|&w| w as i64 as i128).collect::<Vec<_>>(),
            4,
            a.m_exp,
            a.m_recip,
            a.m_softmax,
            (-4.0, 12.0),
        );
        let got = secure_grads(&c, TruncMode::Interactive, a, seed);
        let maxd = got.data.iter().zip(&want).map(|(&g, &w)| (g as i64 as i128 - w).abs()).max().unwrap();
        println!("seed {seed} max lsb dev {maxd}");
        assert!(maxd <= 64, "{maxd}");
    }
}

#[test]
fn head_gradients_match_finite_differences() {
    let a = Approx::default();
    for seed in 10..15 {
        let c = case(seed, 4);
        let got: Vec<f64> =
            secure_grads(&c, TruncMode::Interactive, a, seed).data.iter().map(|&w| decode_fixed::<u64, f64>(w, RingConfig::default())).collect();
        let theta = decoded(&c);
        let eps = 1e-4;
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut p = theta.clone();
                p[i] += eps;
                let up = float_loss(&p, &c);
                p[i] -= 2.0 * eps;
                (up - float_loss(&p, &c)) / (2.0 * eps)
            })
            .collect();
        let num: f64 = got.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        println!("seed {seed} rel {:.5}", num / den);
        assert!(num / den < 1e-2, "{}", num / den);
    }
}

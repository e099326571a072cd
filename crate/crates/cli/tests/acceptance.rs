//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::time::Instant;

use priv_ft_core::dealer::bundle::to_bytes;
use priv_ft_core::dealer::Dealer;
use priv_ft_core::fedtune::{self, aggregate, mask_seeds, mask_upload, ring_div, Dataset, FedConfig, TruncSchedule};
use priv_ft_core::nn::{self, Approx, HeadDims, SecureHead};
use priv_ft_core::oracle::mean_rel_err;
use priv_ft_core::proto::{self, run_mem};
use priv_ft_core::runner::{self, deal_bundles, run_op, run_op_ring, Backend, Op, RunConfig};
use priv_ft_core::shares::{restore, split};
use priv_ft_core::{AdditiveShare, RingConfig, RingTensor, TruncMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const L: u64 = 64;
/// Ratio tolerance.
const RATIO_TOL: f64 = 0.01;
/// Minimum reduction across the op suite.
const MIN_MAX_REDUCTION: f64 = 0.70;
const ERR_SAMPLES: usize = 100_000;
const EXP_ERR_MAX: f64 = 0.01;
const SIGMOID_ERR_MAX: f64 = 0.01;
const TANH_ERR_MAX: f64 = 0.02;
/// A sweep step may rise only while the error stays within this factor of the resolution floor.
const PLATEAU_FACTOR: f64 = 2.0;
const ERR_RUNTIME_S: f64 = 60.0;
const ORACLE_SAMPLES: usize = 10_000;
const GRAD_REL_TOL: f64 = 1e-2;
const GRAD_POINTS: u64 = 5;
const CHI2_P_MIN: f64 = 0.01;
const MIN_TRAIN_ACC: f64 = 0.95;
const PLAIN_GAP_POINTS: f64 = 2.0;
const STAGED_GAP_POINTS: f64 = 1.0;
const FINETUNE_RUNTIME_S: f64 = 300.0;
const VIEW_SAMPLES: usize = 100_000;

type T = RingTensor<u64>;

fn cfg() -> RingConfig {
    RingConfig::default()
}

fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Payload bits of `op` on `n` inputs in [lo, hi).
fn bits(op: &Op, baseline: bool, n: usize, y: Option<usize>) -> u64 {
    let mut rc = RunConfig::new(cfg(), TruncMode::Interactive, 11);
    rc.baseline = baseline;
    rc.forced_r = Some(uniform(n, 0.0, 1.0, 12));
    let (lo, hi) = match op {
        Op::Recip { .. } => (0.5, 1.5),
        _ => (0.0, 1.0),
    };
    let x = uniform(n, lo, hi, 13);
    let yv = y.map(|m| uniform(m, lo, hi, 14));
    let out = match (&yv, y) {
        (Some(v), Some(m)) => run_op::<u64>(op, &rc, &x, &[n], Some((v, &[m]))),
        _ => run_op::<u64>(op, &rc, &x, &[n], None),
    }
    .expect("run");
    out.formula_bits(op)
}

fn criterion_1() -> Outcome {
    let n = 64;
    let per = |op: Op, baseline: bool| bits(&op, baseline, n, None) / n as u64;
    let mut checks: Vec<(String, u64, u64)> = vec![
        ("square".into(), per(Op::Square, false), 192),
        ("exp m=8".into(), per(Op::Exp { m: 8 }, false), 1600),
        ("recip init m=3".into(), per(Op::Recip { m: 3, init: Some(1.0), m_exp: 0 }, false), 1920),
        ("dropout static".into(), per(Op::DropoutStatic { p: 0.5 }, false), 192),
        ("dropout dynamic".into(), per(Op::DropoutDynamic { p: 0.5 }, false), 320),
        ("tp 32x32".into(), bits(&Op::Tp, false, 32, Some(32)), 73_728),
        ("baseline exp m=8".into(), per(Op::Exp { m: 8 }, true), 2624),
        ("baseline tp 32x32".into(), bits(&Op::Tp, true, 32, Some(32)), 327_680),
        ("baseline dropout static".into(), per(Op::DropoutStatic { p: 0.5 }, true), 320),
        ("baseline dropout dynamic".into(), per(Op::DropoutDynamic { p: 0.5 }, true), 576),
    ];
    for m in 1..=4 {
        checks.push((format!("power m={m}"), per(Op::Power { m }, false), 192 * m as u64));
    }
    let bad: Vec<String> = checks.iter().filter(|(_, g, w)| g != w).map(|(k, g, w)| format!("{k}: {g} != {w}")).collect();
    let detail = checks.iter().map(|(k, g, _)| format!("{k}={g}")).collect::<Vec<_>>().join(" ");
    outcome(bad.is_empty(), if bad.is_empty() { detail } else { bad.join("; ") })
}

fn criterion_2() -> Outcome {
    let n = 64;
    let ratio = |op: Op, y: Option<usize>, n: usize| bits(&op, false, n, y) as f64 / bits(&op, true, n, y) as f64;
    let exp = ratio(Op::Exp { m: 8 }, None, n);
    let tp = ratio(Op::Tp, Some(32), 32);
    let drop = ratio(Op::DropoutStatic { p: 0.5 }, None, n);
    let dyn_drop = ratio(Op::DropoutDynamic { p: 0.5 }, None, n);
    let mul = ratio(Op::Mul, Some(n), n);
    let tp64 = ratio(Op::Tp, Some(64), 64);
    let suite = [exp, tp, drop, dyn_drop, mul, tp64];
    let max_red = suite.iter().map(|r| 1.0 - r).fold(f64::MIN, f64::max);
    let pass = (exp - 0.61).abs() <= RATIO_TOL && (tp - 0.225).abs() <= RATIO_TOL && (drop - 0.60).abs() <= RATIO_TOL && max_red >= MIN_MAX_REDUCTION;
    outcome(
        pass,
        format!("exp={exp:.4} tp={tp:.4} dropout_static={drop:.4} dropout_dynamic={dyn_drop:.4} mul={mul:.4} tp64={tp64:.4} max_reduction={max_red:.4}"),
    )
}

/// Mean relative error of the secure `op` against `f`, and the resolution floor:
/// the error an exact evaluation on the encoded input would already carry
/// plus one output LSB.
fn mean_err(op: &Op, x: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let rc = RunConfig::new(cfg(), TruncMode::Interactive, 31);
    let got = run_op::<u64>(op, &rc, x, &[x.len()], None).expect("run").reals();
    let want: Vec<f64> = x.iter().map(|&v| f(v)).collect();
    let lsb = 2f64.powi(-(cfg().s as i32));
    // inputs below one LSB encode to zero and have no finite floor
    let terms: Vec<f64> =
        x.iter().zip(&want).filter(|(&v, _)| v >= lsb).map(|(&v, &w)| ((f((v / lsb).floor() * lsb) - w).abs() + lsb) / w.abs().max(1e-12)).collect();
    let floor = terms.iter().sum::<f64>() / terms.len() as f64;
    (mean_rel_err(&got, &want, 1e-12), floor)
}

/// Indices where the sweep rises while above the plateau band.
fn rises(errs: &[(f64, f64)]) -> Vec<usize> {
    (1..errs.len()).filter(|&i| errs[i].0 > errs[i - 1].0 && errs[i].0 > PLATEAU_FACTOR * errs[i].1).collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let x: Vec<f64> = uniform(ERR_SAMPLES, 0.0, 1.0, 30).into_iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    let exp: Vec<(f64, f64)> = (1..=8).map(|m| mean_err(&Op::Exp { m }, &x, f64::exp)).collect();
    let recip: Vec<(f64, f64)> = (1..=15).map(|m| mean_err(&Op::Recip { m, init: None, m_exp: 8 }, &x, |v| 1.0 / v)).collect();
    let sig = mean_err(&Op::Sigmoid { m_exp: 8, m_recip: 3 }, &x, |v| 1.0 / (1.0 + (-v).exp())).0;
    let tanh = mean_err(&Op::Tanh { m_exp: 8, m_recip: 3 }, &x, f64::tanh).0;
    let secs = start.elapsed().as_secs_f64();
    let (er, rr) = (rises(&exp), rises(&recip));
    let mut fails = Vec::new();
    if exp[7].0 >= EXP_ERR_MAX {
        fails.push(format!("exp m=8 error {:.5}", exp[7].0));
    }
    if sig >= SIGMOID_ERR_MAX {
        fails.push(format!("sigmoid error {sig:.5}"));
    }
    if tanh >= TANH_ERR_MAX {
        fails.push(format!("tanh error {tanh:.5} >= {TANH_ERR_MAX}"));
    }
    if !er.is_empty() {
        fails.push(format!("exp error rises at m={:?}", er.iter().map(|i| i + 1).collect::<Vec<_>>()));
    }
    if !rr.is_empty() {
        fails.push(format!("recip error rises at m_recip={:?}", rr.iter().map(|i| i + 1).collect::<Vec<_>>()));
    }
    if secs >= ERR_RUNTIME_S {
        fails.push(format!("runtime {secs:.1}s"));
    }
    let sweep = |v: &[(f64, f64)]| v.iter().map(|e| format!("{:.3e}", e.0)).collect::<Vec<_>>().join(",");
    let detail = format!(
        "exp_m8={:.5} sigmoid={sig:.5} tanh={tanh:.5} exp_sweep=[{}] recip_sweep=[{}] recip_floor={:.3e} runtime={secs:.1}s{}",
        exp[7].0,
        sweep(&exp),
        sweep(&recip),
        recip[14].1,
        if fails.is_empty() { String::new() } else { format!(" failures: {}", fails.join("; ")) }
    );
    outcome(fails.is_empty(), detail)
}

/// Sum of both parties' pre-truncation values equals the exact product.
fn pre_trunc_exact(seed: u64) -> bool {
    let c = cfg();
    let n = ORACLE_SAMPLES;
    let enc = |v: &[f64], shape: &[usize]| T::from_reals(v, shape, c).unwrap();
    let x = enc(&uniform(n, -4.0, 4.0, seed), &[n]);
    let y = enc(&uniform(n, -4.0, 4.0, seed + 1), &[n]);
    let mut d = Dealer::<u64>::from_u64(seed, c).unwrap();
    let hat = |d: &Dealer<u64>, id, v: &T| v.add(d.offset_value(id).unwrap());
    let exact = |a: &T, b: &T| a.data.iter().zip(&b.data).map(|(p, q)| p.wrapping_mul(*q)).collect::<Vec<u64>>();

    let (ix, iy) = (d.fresh_offset(&[n]), d.fresh_offset(&[n]));
    let (xh, yh) = (hat(&d, ix, &x), hat(&d, iy, &y));
    let (k0, k1) = d.gen_mul(ix, iy, None).unwrap();
    let z = proto::mul_local(0, &xh, &yh, &k0.r1, &k0.r2, &k0.q).add(&proto::mul_local(1, &xh, &yh, &k1.r1, &k1.r2, &k1.q));
    let mul_ok = z.data == exact(&x, &y);

    let is = d.fresh_offset(&[n]);
    let sh = hat(&d, is, &x);
    let (s0, s1) = d.gen_square(is, None).unwrap();
    let z = proto::square_local(0, &sh, &s0.r_in, &s0.q).add(&proto::square_local(1, &sh, &s1.r_in, &s1.q));
    let sq_ok = z.data == exact(&x, &x);

    let (a, b) = (enc(&uniform(64, -4.0, 4.0, seed + 2), &[64]), enc(&uniform(48, -4.0, 4.0, seed + 3), &[48]));
    let (ia, ib) = (d.fresh_offset(&[64]), d.fresh_offset(&[48]));
    let (ah, bh) = (hat(&d, ia, &a), hat(&d, ib, &b));
    let (t0, t1) = d.gen_tp(ia, ib, None).unwrap();
    let z = proto::tp_local(0, &ah, &bh, &t0.r1, &t0.r2, &t0.q).unwrap().add(&proto::tp_local(1, &ah, &bh, &t1.r1, &t1.r2, &t1.q).unwrap());
    let want: Vec<u64> = a.data.iter().flat_map(|p| b.data.iter().map(move |q| p.wrapping_mul(*q))).collect();
    mul_ok && sq_ok && z.data == want
}

fn criterion_4() -> Outcome {
    let n = ORACLE_SAMPLES;
    let ops: Vec<(Op, f64, f64)> = vec![
        (Op::Mul, -4.0, 4.0),
        (Op::Square, -4.0, 4.0),
        (Op::Power { m: 3 }, -1.0, 1.0),
        (Op::Exp { m: 8 }, -4.0, 2.0),
        (Op::Recip { m: 3, init: None, m_exp: 8 }, 0.05, 2.0),
        (Op::Recip { m: 6, init: Some(1.0), m_exp: 0 }, 0.5, 1.5),
        (Op::Sigmoid { m_exp: 8, m_recip: 3 }, -6.0, 6.0),
        (Op::Tanh { m_exp: 8, m_recip: 3 }, -3.0, 3.0),
        (Op::Softmax { m: 16 }, -4.0, 4.0),
        (Op::Tp, -2.0, 2.0),
        (Op::DropoutStatic { p: 0.3 }, -4.0, 4.0),
        (Op::DropoutDynamic { p: 0.3 }, -4.0, 4.0),
        (Op::LessThan, -4.0, 4.0),
        (Op::Relu, -4.0, 4.0),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for trunc in [TruncMode::Interactive, TruncMode::Local] {
        for (i, (op, lo, hi)) in ops.iter().enumerate() {
            let mut rc = RunConfig::new(cfg(), trunc, 40 + i as u64);
            rc.forced_r = Some(uniform(n, 0.0, 1.0, 400 + i as u64));
            let (xs, ys): (Vec<usize>, Option<Vec<usize>>) = match op {
                Op::Softmax { .. } => (vec![n / 4, 4], None),
                Op::Tp => (vec![100], Some(vec![100])),
                Op::Mul => (vec![n], Some(vec![n])),
                _ => (vec![n], None),
            };
            let xt = T::from_reals(&uniform(xs.iter().product(), *lo, *hi, 500 + i as u64), &xs, cfg()).unwrap();
            let yt = ys.as_ref().map(|s| T::from_reals(&uniform(s.iter().product(), *lo, *hi, 600 + i as u64), s, cfg()).unwrap());
            let out = run_op_ring(op, &rc, &xt, yt.as_ref()).expect("run");
            let v = runner::verify(op, &rc, &xt, yt.as_ref(), &out.output, 0.0).expect("verify");
            let k = op.cost(false, &xs, ys.as_deref().unwrap_or(&[])).map_or(0, |c| c.trunc);
            pass &= v.ok();
            if trunc == TruncMode::Interactive {
                parts.push(format!("{}:{}/{} dev={} k={}", op.name(), v.passed, v.elements, v.max_floor_dev, k));
            } else if !v.ok() {
                parts.push(format!("{}(lt):{}/{}", op.name(), v.passed, v.elements));
            }
        }
    }
    let exact = pre_trunc_exact(77);
    pass &= exact;
    outcome(pass, format!("pre_trunc_exact={exact} {}", parts.join(" ")))
}

struct HeadCase {
    dims: HeadDims,
    params: [T; 4],
    x: T,
    onehot: T,
    xf: Vec<f64>,
    labels: Vec<usize>,
}

fn head_case(seed: u64, b: usize) -> HeadCase {
    let dims = HeadDims { d_in: 6, hidden: 4, classes: 2 };
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let mut gen = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| r.gen_range(-s..s)).collect() };
    let shapes = nn::param_shapes(dims);
    let p: Vec<T> = shapes.iter().zip([0.8, 0.3, 0.8, 0.3]).map(|(s, sc)| T::from_reals(&gen(s.iter().product(), sc), s, cfg()).unwrap()).collect();
    let xf = gen(b * dims.d_in, 1.0);
    let x = T::from_reals(&xf, &[b, dims.d_in], cfg()).unwrap();
    let labels: Vec<usize> = (0..b).map(|i| (seed as usize + i) % 2).collect();
    let oh: Vec<f64> = labels.iter().flat_map(|&l| (0..2).map(move |c| if c == l { 1.0 } else { 0.0 })).collect();
    let onehot = T::from_reals(&oh, &[b, 2], cfg()).unwrap();
    HeadCase { dims, params: [p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone()], x, onehot, xf, labels }
}

fn secure_grads(c: &HeadCase, seed: u64) -> Vec<f64> {
    let a = Approx::default();
    let mut d = Dealer::<u64>::from_u64(seed, cfg()).unwrap();
    let (q0, q1) = nn::gen_step_keys(&mut d, c.dims, c.x.shape[0], a).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed + 1);
    let ps: Vec<_> = c.params.iter().map(|p| split(p, &mut rng)).collect();
    let xs = split(&c.x, &mut rng);
    let ys = split(&c.onehot, &mut rng);
    let qs = [std::sync::Mutex::new(Some(q0)), std::sync::Mutex::new(Some(q1))];
    let (g0, g1) = run_mem(cfg(), TruncMode::Interactive, seed, |sess| {
        let p = sess.party;
        let pick = |s: &(AdditiveShare<u64>, AdditiveShare<u64>)| if p == 0 { s.0.clone() } else { s.1.clone() };
        let params = [pick(&ps[0]).values, pick(&ps[1]).values, pick(&ps[2]).values, pick(&ps[3]).values];
        let mut head = SecureHead::new(p, &params);
        let mut q = qs[p as usize].lock().unwrap().take().unwrap();
        let g = nn::head_step(sess, &mut q, &mut head, &pick(&xs), &pick(&ys)).unwrap();
        AdditiveShare::new(p, g.flatten())
    });
    restore(&g0, &g1).unwrap().to_reals()
}

fn float_loss(theta: &[f64], c: &HeadCase) -> f64 {
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
        loss += mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - z[c.labels[r]];
    }
    loss / b as f64
}

fn criterion_5() -> Outcome {
    let mut rels = Vec::new();
    for seed in 0..GRAD_POINTS {
        let c = head_case(100 + seed, 4);
        let got = secure_grads(&c, 100 + seed);
        let theta: Vec<f64> = c.params.iter().flat_map(|t| t.to_reals::<f64>()).collect();
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
        let num = got.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
        let den = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        rels.push(num / den);
    }
    let worst = rels.iter().cloned().fold(0.0, f64::max);
    outcome(worst < GRAD_REL_TOL, format!("points={GRAD_POINTS} rel_errors={:?} worst={worst:.5}", rels.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>()))
}

fn chi2_top8(words: impl Iterator<Item = u64>) -> f64 {
    let mut counts = [0u64; 256];
    let mut n = 0u64;
    for w in words {
        counts[(w >> 56) as usize] += 1;
        n += 1;
    }
    let e = n as f64 / 256.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new(255.0).unwrap().cdf(stat)
}

fn criterion_6() -> Outcome {
    let data = Dataset::synthetic(60, 8, 6);
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [2usize, 3, 5] {
        let c = FedConfig { clients: n, rounds: 1, ..FedConfig::default() };
        let dims = fedtune::dims_for(&c, data.classes());
        let bb = fedtune::FrozenBackbone::new(data.dim, c.feat_dim, c.seed);
        let theta = fedtune::init_params::<u64>(dims, c.cfg, c.seed).unwrap();
        let mut d = Dealer::<u64>::from_u64(60 + n as u64, c.cfg).unwrap();
        let seeds = mask_seeds(&mut d, n);
        let r = fedtune::secure_round(&c, dims, &data.partition(n), &bb, &theta, 0, &seeds).unwrap();
        let mut sum = theta.map(|_| 0);
        for (s0, s1) in r.server_shares.iter().zip(&r.client_shares) {
            sum = sum.add(&s0.add(s1));
        }
        let exact = aggregate(&r.server_shares, &r.uploads).unwrap() == ring_div(&sum, n);
        let differs = r.uploads.iter().zip(&r.client_shares).all(|(u, s)| u.as_ref().unwrap().values.data.iter().zip(&s.data).all(|(a, b)| a != b));
        pass &= exact && differs;
        parts.push(format!("N={n}:exact={exact},differs={differs}"));
    }
    // a fixed, structured client share masked under fresh seeds
    let share = T::from_reals(&(0..154).map(|i| (i as f64 - 77.0) / 50.0).collect::<Vec<_>>(), &[154], cfg()).unwrap();
    let mut ups = Vec::new();
    for s in 0..200u64 {
        let mut d = Dealer::<u64>::from_u64(9000 + s, cfg()).unwrap();
        let seeds = mask_seeds(&mut d, 3);
        for i in 0..3 {
            ups.extend(mask_upload(i, &share, s as usize, &seeds).unwrap().values.data);
        }
    }
    let p = chi2_top8(ups.iter().copied());
    pass &= p > CHI2_P_MIN;
    outcome(pass, format!("{} upload_chi2_p={p:.4} samples={}", parts.join(" "), ups.len()))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let data = Dataset::synthetic(128, 10, 7);
    let base = FedConfig { clients: 2, rounds: 20, ..FedConfig::default() };
    let mut parts = Vec::new();
    let mut pass = true;
    let mut it_acc = 0.0;
    for (name, t) in [("it", TruncSchedule::Fixed(TruncMode::Interactive)), ("lt", TruncSchedule::Fixed(TruncMode::Local))] {
        let c = FedConfig { trunc: t, ..base.clone() };
        let s = fedtune::run_secure::<u64>(&c, &data).unwrap().final_accuracy;
        let p = fedtune::run_plain::<u64>(&c, &data).unwrap().final_accuracy;
        if name == "it" {
            it_acc = s;
        }
        let gap = (s - p).abs() * 100.0;
        pass &= s >= MIN_TRAIN_ACC && gap <= PLAIN_GAP_POINTS;
        parts.push(format!("{name}:secure={s:.4},plain={p:.4},gap={gap:.2}"));
    }
    let c = FedConfig { trunc: TruncSchedule::Staged { switch: 10 }, ..base };
    let staged = fedtune::run_secure::<u64>(&c, &data).unwrap().final_accuracy;
    let gap = (staged - it_acc).abs() * 100.0;
    pass &= gap <= STAGED_GAP_POINTS;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < FINETUNE_RUNTIME_S;
    outcome(pass, format!("{} staged={staged:.4},gap_to_it={gap:.2} runtime={secs:.1}s", parts.join(" ")))
}

/// (type, payload) frames of a raw transcript.
fn frames(bytes: &[u8]) -> Vec<(u8, &[u8])> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 9 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        out.push((bytes[i + 4], &bytes[i + 9..i + 9 + len]));
        i += 9 + len;
    }
    out
}

fn words(p: &[u8]) -> impl Iterator<Item = u64> + '_ {
    p.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()))
}

fn criterion_8() -> Outcome {
    let per = 10_000;
    let (mut share0, mut share1, mut opened, mut masked_trunc, mut inputs) = (vec![], vec![], vec![], vec![], vec![]);
    for s in 0..(VIEW_SAMPLES / per) as u64 {
        let mut rc = RunConfig::new(cfg(), TruncMode::Interactive, 800 + s);
        rc.record = true;
        let x = vec![0.25; per];
        let out = run_op::<u64>(&Op::Square, &rc, &x, &[per], None).unwrap();
        let (t0, t1) = out.transcripts.unwrap();
        let (f0, f1) = (frames(&t0.sent), frames(&t1.sent));
        let a: Vec<u64> = words(f0[0].1).collect();
        let b: Vec<u64> = words(f1[0].1).collect();
        opened.extend(a.iter().zip(&b).map(|(p, q)| p.wrapping_add(*q)));
        share0.extend(a);
        share1.extend(b);
        masked_trunc.extend(words(f1[1].1));
        let xt = T::from_reals(&x, &[per], cfg()).unwrap();
        inputs.extend(split(&xt, &mut ChaCha20Rng::seed_from_u64(900 + s)).1.values.data);
    }
    let ps = [
        ("opened", chi2_top8(opened.iter().copied())),
        ("share0", chi2_top8(share0.iter().copied())),
        ("share1", chi2_top8(share1.iter().copied())),
        ("trunc_msg", chi2_top8(masked_trunc.iter().copied())),
        ("input_share", chi2_top8(inputs.iter().copied())),
    ];
    let pass = ps.iter().all(|(_, p)| *p > CHI2_P_MIN) && opened.len() >= VIEW_SAMPLES;
    outcome(pass, format!("samples={} {}", opened.len(), ps.iter().map(|(k, p)| format!("{k}_p={p:.4}")).collect::<Vec<_>>().join(" ")))
}

fn criterion_9() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    let rc = RunConfig::new(cfg(), TruncMode::Interactive, 7);
    for op in [Op::Exp { m: 8 }, Op::Softmax { m: 16 }, Op::Sigmoid { m_exp: 8, m_recip: 3 }] {
        let xs = if matches!(op, Op::Softmax { .. }) { vec![50, 4] } else { vec![200] };
        let a = deal_bundles::<u64>(&op, &rc, &xs, &[]).unwrap();
        let b = deal_bundles::<u64>(&op, &rc, &xs, &[]).unwrap();
        let same = to_bytes(&a.0) == to_bytes(&b.0) && to_bytes(&a.1) == to_bytes(&b.1);
        pass &= same;
        parts.push(format!("bundle_{}={same}", op.name()));
    }
    let cases: Vec<(Op, bool)> = vec![
        (Op::Exp { m: 8 }, false),
        (Op::Sigmoid { m_exp: 8, m_recip: 3 }, false),
        (Op::Softmax { m: 8 }, false),
        (Op::Exp { m: 8 }, true),
        (Op::Recip { m: 3, init: None, m_exp: 8 }, true),
    ];
    for (op, baseline) in cases {
        let x = uniform(120, 0.1, 1.0, 90);
        let shape = if matches!(op, Op::Softmax { .. }) { vec![30, 4] } else { vec![120] };
        let run = |backend| {
            let mut rc = RunConfig::new(cfg(), TruncMode::Interactive, 91);
            rc.backend = backend;
            rc.baseline = baseline;
            rc.record = true;
            run_op::<u64>(&op, &rc, &x, &shape, None).unwrap()
        };
        let (m, t) = (run(Backend::Mem), run(Backend::Tcp));
        let same = m.transcripts == t.transcripts && m.transcripts.is_some() && m.output == t.output;
        pass &= same;
        parts.push(format!("transcript_{}{}={same}", if baseline { "baseline_" } else { "" }, op.name()));
    }
    let data = Dataset::synthetic(32, 6, 9);
    let fc = FedConfig { rounds: 3, ..FedConfig::default() };
    let fm = fedtune::run_secure::<u64>(&fc, &data).unwrap().params;
    let ft = fedtune::run_secure::<u64>(&FedConfig { backend: Backend::Tcp, ..fc }, &data).unwrap().params;
    pass &= fm == ft;
    parts.push(format!("finetune_mem_tcp={}", fm == ft));
    outcome(pass, parts.join(" "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("communication formulas", criterion_1),
        ("overhead ratios", criterion_2),
        ("approximation accuracy", criterion_3),
        ("oracle equivalence", criterion_4),
        ("gradient correctness", criterion_5),
        ("aggregation and masking", criterion_6),
        ("end-to-end fine-tuning", criterion_7),
        ("view uniformity", criterion_8),
        ("determinism", criterion_9),
    ];
    let _ = L;
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        println!("criterion {} {} [{name}] {} ({:.1}s)", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}

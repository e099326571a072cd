use priv_ft_core::ring::{decode_fixed, encode_fixed, trunc_interactive, trunc_local, RingError, RingWord};
use priv_ft_core::shares::split;
use priv_ft_core::transport::Channel;
use priv_ft_core::{AdditiveShare, RingConfig, RingTensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn c64() -> RingConfig {
    RingConfig::default()
}

fn c32() -> RingConfig {
    RingConfig::new(32, 8).unwrap()
}

fn lsb(c: RingConfig) -> f64 {
    2f64.powi(-(c.s as i32))
}

#[test]
fn encoding_floors() {
    let c = c64();
    assert_eq!(encode_fixed::<u64, f64>(1.0, c).unwrap(), 1 << 16);
    assert_eq!(encode_fixed::<u64, f64>(-1.0, c).unwrap(), (-(1i64 << 16)) as u64);
    assert_eq!(encode_fixed::<u64, f64>(1.5 * lsb(c), c).unwrap(), 1);
    assert_eq!(encode_fixed::<u64, f64>(-0.5 * lsb(c), c).unwrap(), u64::MAX);
    assert_eq!(decode_fixed::<u64, f64>(encode_fixed::<u64, f64>(-2.25, c).unwrap(), c), -2.25);
}

#[test]
fn encoding_rejects_out_of_range() {
    let c = c32();
    assert!(matches!(encode_fixed::<u32, f64>(2f64.powi(23), c), Err(RingError::Range(_))));
    assert!(matches!(encode_fixed::<u32, f64>(f64::NAN, c), Err(RingError::Range(_))));
    assert!(encode_fixed::<u32, f64>(-(2f64.powi(23)), c).is_err());
    assert!(encode_fixed::<u32, f64>(2f64.powi(23) - 1.0, c).is_ok());
}

#[test]
fn config_validation() {
    assert!(RingConfig::new(64, 0).is_err());
    assert!(RingConfig::new(32, 32).is_err());
    assert!(RingConfig::new(65, 16).is_err());
    assert!(c64().for_word::<u32>().is_err());
    assert!(c32().for_word::<u32>().is_ok());
}

#[test]
fn tensor_shapes() {
    let c = c64();
    let a = RingTensor::<u64>::from_reals(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3], c).unwrap();
    let b = RingTensor::<u64>::from_reals(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[3, 2], c).unwrap();
    let m = a.matmul(&b).unwrap().sar(c.s);
    assert_eq!(m.shape, vec![2, 2]);
    assert_eq!(m.to_reals::<f64>(), vec![4.0, 5.0, 10.0, 11.0]);
    assert_eq!(a.transpose().shape, vec![3, 2]);
    assert_eq!(a.sum_last().to_reals::<f64>(), vec![6.0, 15.0]);
    assert!(a.try_add(&b).is_err());
    assert!(RingTensor::<u64>::new(vec![2, 2], vec![0; 3], c).is_err());
}

/// Outputs of both truncations on shares of `x`, computed over an in-memory link.
fn truncs<W: RingWord>(x: &RingTensor<W>, bits: u32, seed: u64) -> (RingTensor<W>, RingTensor<W>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (s0, s1) = split(x, &mut rng);
    let local = trunc_local(&s0, bits).values.add(&trunc_local(&s1, bits).values);
    let (mut a, mut b) = Channel::mem_pair();
    let h = std::thread::spawn(move || {
        let mut r = ChaCha20Rng::seed_from_u64(seed + 1);
        trunc_interactive(&s1, bits, &mut b, &mut r).unwrap()
    });
    let mut r = ChaCha20Rng::seed_from_u64(seed + 2);
    let t0: AdditiveShare<W> = trunc_interactive(&s0, bits, &mut a, &mut r).unwrap();
    let t1 = h.join().unwrap();
    (local, t0.values.add(&t1.values))
}

proptest! {
    #[test]
    fn decode_inverts_encode_within_one_lsb(x in -1.0e6f64..1.0e6) {
        let c = c64();
        let d: f64 = decode_fixed(encode_fixed::<u64, f64>(x, c).unwrap(), c);
        prop_assert!(d <= x && x - d < lsb(c));
    }

    #[test]
    fn decode_inverts_encode_u32(x in -1.0e4f64..1.0e4) {
        let c = c32();
        let d: f64 = decode_fixed(encode_fixed::<u32, f64>(x, c).unwrap(), c);
        prop_assert!(d <= x && x - d < lsb(c));
    }

    #[test]
    fn ring_ops_match_wrapping_integers(a in any::<u64>(), b in any::<u64>()) {
        let c = c64();
        let ta = RingTensor::<u64>::new(vec![1], vec![a], c).unwrap();
        let tb = RingTensor::<u64>::new(vec![1], vec![b], c).unwrap();
        prop_assert_eq!(ta.add(&tb).data[0], a.wrapping_add(b));
        prop_assert_eq!(ta.sub(&tb).data[0], a.wrapping_sub(b));
        prop_assert_eq!(ta.mul(&tb).data[0], a.wrapping_mul(b));
        prop_assert_eq!(ta.add(&tb).sub(&tb), ta.clone());
        prop_assert_eq!(ta.neg().add(&ta).data[0], 0);
    }

    #[test]
    fn ring_ops_u32(a in any::<u32>(), b in any::<u32>()) {
        let c = RingConfig::new(32, 8).unwrap();
        let ta = RingTensor::<u32>::new(vec![1], vec![a], c).unwrap();
        let tb = RingTensor::<u32>::new(vec![1], vec![b], c).unwrap();
        prop_assert_eq!(ta.mul(&tb).data[0], a.wrapping_mul(b));
        prop_assert_eq!(ta.add(&tb).data[0], a.wrapping_add(b));
    }

    #[test]
    fn sar_is_signed_floor_division(v in any::<i64>(), bits in 1u32..40) {
        prop_assert_eq!((v as u64).sar(bits) as i64, v.div_euclid(1i64 << bits));
    }

    #[test]
    fn interactive_truncation_is_floor_plus_carry(v in -(1i64 << 60)..(1i64 << 60), seed in any::<u64>()) {
        let x = RingTensor::<u64>::new(vec![1], vec![v as u64], c64()).unwrap();
        let (_, it) = truncs(&x, 16, seed);
        let d = (it.data[0] as i64).wrapping_sub(v >> 16);
        prop_assert!(d == 0 || d == 1, "delta {}", d);
    }

    #[test]
    fn local_truncation_within_one_lsb(v in -(1i64 << 40)..(1i64 << 40), seed in any::<u64>()) {
        // wrap probability is about 2^-23 at this range
        let x = RingTensor::<u64>::new(vec![1], vec![v as u64], c64()).unwrap();
        let (lt, _) = truncs(&x, 16, seed);
        let d = (lt.data[0] as i64).wrapping_sub(v >> 16);
        prop_assert!(d.abs() <= 1, "delta {}", d);
    }

    #[test]
    fn interactive_truncation_u32(v in -(1i32 << 28)..(1i32 << 28), seed in any::<u64>()) {
        let x = RingTensor::<u32>::new(vec![1], vec![v as u32], c32()).unwrap();
        let (_, it) = truncs(&x, 8, seed);
        let d = (it.data[0] as i32).wrapping_sub(v >> 8);
        prop_assert!(d == 0 || d == 1);
    }
}

use priv_ft_core::dealer::Dealer;
use priv_ft_core::shares::{drop_output_offset, restore, split, to_masked, MaskedWire, OffsetId, ShareError};
use priv_ft_core::transport::Channel;
use priv_ft_core::{AdditiveShare, RingConfig, RingTensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type T = RingTensor<u64>;

fn cfg() -> RingConfig {
    RingConfig::default()
}

proptest! {
    #[test]
    fn restore_inverts_split(xs in prop::collection::vec(-1.0e5f64..1.0e5, 1..64), seed in any::<u64>()) {
        let x = T::from_reals(&xs, &[xs.len()], cfg()).unwrap();
        let (a, b) = split(&x, &mut ChaCha20Rng::seed_from_u64(seed));
        prop_assert_eq!(&restore(&a, &b).unwrap(), &x);
        prop_assert_eq!(&restore(&b, &a).unwrap(), &x);
    }

    #[test]
    fn linear_ops_commute_with_restore(a in -1.0e3f64..1.0e3, b in -1.0e3f64..1.0e3, c in -50i64..50, seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (ta, tb) = (T::from_reals(&[a], &[1], cfg()).unwrap(), T::from_reals(&[b], &[1], cfg()).unwrap());
        let (a0, a1) = split(&ta, &mut rng);
        let (b0, b1) = split(&tb, &mut rng);
        prop_assert_eq!(restore(&a0.add(&b0), &a1.add(&b1)).unwrap(), ta.add(&tb));
        prop_assert_eq!(restore(&a0.sub(&b0), &a1.sub(&b1)).unwrap(), ta.sub(&tb));
        prop_assert_eq!(restore(&a0.mul_int(c), &a1.mul_int(c)).unwrap(), ta.mul_int(c));
        prop_assert_eq!(restore(&a0.add_public(&tb), &a1.add_public(&tb)).unwrap(), ta.add(&tb));
    }
}

#[test]
fn restore_needs_both_parties() {
    let x = T::from_reals(&[1.0], &[1], cfg()).unwrap();
    let (a, _) = split(&x, &mut ChaCha20Rng::seed_from_u64(1));
    assert!(matches!(restore(&a, &a), Err(ShareError::PartyMismatch(0))));
}

#[test]
fn share_one_is_independent_of_the_value() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let zero = T::zeros(&[4096], cfg());
    let big = T::from_reals(&vec![1000.0; 4096], &[4096], cfg()).unwrap();
    let (_, s1) = split(&zero, &mut rng.clone());
    let (_, t1) = split(&big, &mut rng);
    assert_eq!(s1.values.data, t1.values.data);
    let ones: u32 = s1.values.data.iter().map(|w| w.count_ones()).sum();
    let frac = ones as f64 / (64.0 * 4096.0);
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
}

#[test]
fn masked_wire_opens_to_value_plus_offset() {
    let c = cfg();
    let mut d = Dealer::<u64>::from_u64(3, c).unwrap();
    let id = d.fresh_offset(&[8]);
    let r = d.offset_value(id).unwrap().clone();
    let (m0, m1) = d.mask_pair(id).unwrap();
    let x = T::from_reals(&[0.5, -1.0, 2.0, 3.0, -4.0, 5.5, 0.0, 1.0], &[8], c).unwrap();
    let (x0, x1) = split(&x, &mut ChaCha20Rng::seed_from_u64(4));
    let w0 = to_masked(&x0, &m0, id).unwrap();
    let w1 = to_masked(&x1, &m1, id).unwrap();
    assert!(to_masked(&x0, &m1, id).is_err());
    assert!(matches!(to_masked(&x0, &m0, OffsetId(id.0 + 1)), Err(ShareError::OffsetMismatch { .. })));
    let (mut a, mut b) = Channel::mem_pair();
    let h = std::thread::spawn(move || {
        let mut w = w1;
        w.open(&mut b).unwrap();
        w.open(&mut b).unwrap();
        (w, b.report().total("").payload_bits())
    });
    let mut w = w0;
    w.open(&mut a).unwrap();
    let (w1, bits1) = h.join().unwrap();
    assert_eq!(w.hat(), &x.add(&r));
    assert_eq!(w.hat(), w1.hat());
    assert_eq!(w.hat_share().add(&w1.hat_share()), x.add(&r));
    // a second open is free
    assert_eq!(bits1, 2 * 64 * 8);
}

#[test]
fn output_offset_must_be_empty_to_drop() {
    let c = cfg();
    let v = T::zeros(&[2], c);
    let w = MaskedWire::from_shares(0, v.clone(), OffsetId(7));
    assert!(matches!(drop_output_offset(w), Err(ShareError::OutputOffsetPresent(_))));
    let mut w = MaskedWire::from_shares(0, v.clone(), OffsetId::NONE);
    w.opened = true;
    assert!(matches!(drop_output_offset(w), Err(ShareError::AlreadyOpened)));
    let s: AdditiveShare<u64> = drop_output_offset(MaskedWire::from_shares(1, v.clone(), OffsetId::NONE)).unwrap();
    assert_eq!(s.values, v);
}

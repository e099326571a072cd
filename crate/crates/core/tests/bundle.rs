use priv_ft_core::dealer::bundle::{from_bytes, payload_words, read_bundle, to_bytes, write_bundle, BundleError};
use priv_ft_core::runner::{deal_bundles, Op, RunConfig};
use priv_ft_core::{RingConfig, TruncMode};

fn rc(seed: u64) -> RunConfig {
    RunConfig::new(RingConfig::default(), TruncMode::Interactive, seed)
}

#[test]
fn bundles_round_trip_for_every_op() {
    let ops = [
        (Op::Mul, vec![16], vec![16]),
        (Op::Square, vec![16], vec![]),
        (Op::Power { m: 3 }, vec![16], vec![]),
        (Op::Exp { m: 8 }, vec![16], vec![]),
        (Op::Recip { m: 3, init: None, m_exp: 8 }, vec![16], vec![]),
        (Op::Recip { m: 3, init: Some(0.75), m_exp: 0 }, vec![16], vec![]),
        (Op::Sigmoid { m_exp: 8, m_recip: 3 }, vec![16], vec![]),
        (Op::Tanh { m_exp: 8, m_recip: 3 }, vec![16], vec![]),
        (Op::Softmax { m: 4 }, vec![4, 4], vec![]),
        (Op::Tp, vec![4], vec![5]),
        (Op::DropoutStatic { p: 0.5 }, vec![16], vec![]),
        (Op::DropoutDynamic { p: 0.5 }, vec![16], vec![]),
        (Op::LessThan, vec![16], vec![]),
        (Op::Relu, vec![16], vec![]),
    ];
    for (op, xs, ys) in ops {
        for baseline in [false, true] {
            if baseline && matches!(op, Op::LessThan | Op::Relu) {
                continue;
            }
            let mut r = rc(9);
            r.baseline = baseline;
            r.forced_r = Some(vec![0.25; 16]);
            let (b0, b1) = deal_bundles::<u64>(&op, &r, &xs, &ys).unwrap();
            assert_eq!((b0.party, b1.party), (0, 1));
            for b in [b0, b1] {
                let bytes = to_bytes(&b);
                assert_eq!(from_bytes::<u64>(&bytes).unwrap(), b, "{}", op.name());
            }
        }
    }
}

#[test]
fn bundles_are_deterministic_per_seed() {
    let op = Op::Exp { m: 8 };
    let a = deal_bundles::<u64>(&op, &rc(7), &[100], &[]).unwrap();
    let b = deal_bundles::<u64>(&op, &rc(7), &[100], &[]).unwrap();
    let c = deal_bundles::<u64>(&op, &rc(8), &[100], &[]).unwrap();
    assert_eq!(to_bytes(&a.0), to_bytes(&b.0));
    assert_eq!(to_bytes(&a.1), to_bytes(&b.1));
    assert_ne!(to_bytes(&a.0), to_bytes(&c.0));
}

#[test]
fn exp_bundle_layout() {
    let (b0, b1) = deal_bundles::<u64>(&Op::Exp { m: 8 }, &rc(7), &[1000], &[]).unwrap();
    assert_eq!(b0.keys.len(), b1.keys.len());
    assert_eq!(b0.keys.len(), 2);
    assert_eq!(payload_words(&b0.keys[1]), payload_words(&b1.keys[1]));
    // input offset share, then one word per stored correlation per element
    assert_eq!(payload_words(&b0.keys[0]), 1000);
    assert_eq!(payload_words(&b0.keys[1]) % 1000, 0);
}

#[test]
fn corrupt_bundles_are_rejected() {
    let (b0, _) = deal_bundles::<u64>(&Op::Square, &rc(1), &[8], &[]).unwrap();
    let bytes = to_bytes(&b0);
    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    assert!(matches!(from_bytes::<u64>(&flipped), Err(BundleError::Checksum)));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(from_bytes::<u64>(&magic), Err(BundleError::Magic)));
    assert!(matches!(from_bytes::<u32>(&bytes), Err(BundleError::Ring { l: 64, .. })));
    assert!(from_bytes::<u64>(&bytes[..bytes.len() - 9]).is_err());
    assert!(matches!(from_bytes::<u64>(&bytes[..6]), Err(BundleError::Truncated)));
}

#[test]
fn bundles_survive_the_filesystem() {
    let dir = tempfile::tempdir().unwrap();
    let (b0, b1) = deal_bundles::<u64>(&Op::Sigmoid { m_exp: 8, m_recip: 3 }, &rc(2), &[32], &[]).unwrap();
    write_bundle(&b0, dir.path().join("p0")).unwrap();
    write_bundle(&b1, dir.path().join("p1")).unwrap();
    assert_eq!(read_bundle::<u64>(dir.path().join("p0")).unwrap(), b0);
    assert_eq!(read_bundle::<u64>(dir.path().join("p1")).unwrap(), b1);
}

#[test]
fn u32_bundles() {
    let mut r = rc(3);
    r.cfg = RingConfig::new(32, 8).unwrap();
    let (b0, _) = deal_bundles::<u32>(&Op::Exp { m: 4 }, &r, &[10], &[]).unwrap();
    assert_eq!(from_bytes::<u32>(&to_bytes(&b0)).unwrap(), b0);
}

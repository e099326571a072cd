use priv_ft_core::dealer::Dealer;
use priv_ft_core::fedtune::*;
use priv_ft_core::shares::split;
use priv_ft_core::{RingConfig, RingTensor, TruncMode};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn masked_round(n: usize, len: usize, seed: u64) -> (Vec<RingTensor<u64>>, Vec<RingTensor<u64>>, Vec<Option<MaskedGradient<u64>>>) {
    let cfg = RingConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut d = Dealer::<u64>::from_u64(seed, cfg).unwrap();
    let seeds = mask_seeds(&mut d, n);
    let grads: Vec<_> = (0..n).map(|_| RingTensor::random(&[len], cfg, &mut rng)).collect();
    let mut own = Vec::new();
    let mut ups = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let (a, b) = split(g, &mut rng);
        ups.push(Some(mask_upload(i, &b.values, 3, &seeds).unwrap()));
        own.push(a.values);
    }
    (grads, own, ups)
}

#[test]
fn aggregate_is_exact_mean() {
    for n in [2, 3, 5] {
        let (grads, own, ups) = masked_round(n, 500, n as u64);
        let mut sum = grads[0].map(|_| 0);
        grads.iter().for_each(|g| sum = sum.add(g));
        assert_eq!(aggregate(&own, &ups).unwrap(), ring_div(&sum, n));
    }
}

#[test]
fn masks_cancel_only_in_the_sum() {
    let cfg = RingConfig::default();
    let mut d = Dealer::<u64>::from_u64(9, cfg).unwrap();
    let seeds = mask_seeds(&mut d, 3);
    let z = RingTensor::<u64>::zeros(&[64], cfg);
    let ups: Vec<_> = (0..3).map(|i| mask_upload(i, &z, 0, &seeds).unwrap().values).collect();
    assert!(ups.iter().all(|u| u.data.iter().all(|&w| w != 0)));
    assert!(ups[0].add(&ups[1]).add(&ups[2]).data.iter().all(|&w| w == 0));
    let next = mask_upload(0, &z, 1, &seeds).unwrap().values;
    assert_ne!(next, ups[0]);
}

#[test]
fn single_client_is_rejected() {
    let cfg = RingConfig::default();
    let mut d = Dealer::<u64>::from_u64(1, cfg).unwrap();
    let seeds = mask_seeds(&mut d, 1);
    assert!(mask_upload(0, &RingTensor::<u64>::zeros(&[4], cfg), 0, &seeds).is_err());
    let c = FedConfig { clients: 1, ..FedConfig::default() };
    assert!(run_secure::<u64>(&c, &Dataset::synthetic(16, 4, 1)).is_err());
}

#[test]
fn missing_upload_is_an_error() {
    let (_, own, mut ups) = masked_round(3, 8, 4);
    ups[1] = None;
    assert!(matches!(aggregate(&own, &ups), Err(FedError::MissingUpload(1))));
}

#[test]
fn update_floors_learning_rate_product() {
    let cfg = RingConfig::default();
    let theta = RingTensor::<u64>::from_reals(&[1.0, -0.5], &[2], cfg).unwrap();
    let g = RingTensor::<u64>::from_reals(&[0.5, -0.25], &[2], cfg).unwrap();
    let got: Vec<f64> = apply_update(&theta, &g, 0.5, cfg).unwrap().to_reals();
    assert_eq!(got, vec![0.75, -0.375]);
}

#[test]
fn rounds_follow_step_order_with_constant_upload() {
    let data = Dataset::synthetic(32, 6, 2);
    let c = FedConfig { rounds: 4, trunc: TruncSchedule::Staged { switch: 2 }, ..FedConfig::default() };
    let run = run_secure::<u64>(&c, &data).unwrap();
    let order = vec![Step::ParamShare, Step::SampleShare, Step::Secure, Step::AggUpload];
    for log in &run.logs {
        assert!(log.steps.iter().all(|s| *s == order), "{:?}", log.steps);
        assert_eq!(log.upload_bytes, run.logs[0].upload_bytes);
    }
    let modes: Vec<_> = run.logs.iter().map(|l| l.trunc).collect();
    assert_eq!(modes, vec![TruncMode::Local, TruncMode::Local, TruncMode::Interactive, TruncMode::Interactive]);
    assert!(run.logs[0].session_bits[0] < run.logs[3].session_bits[0]);
}

#[test]
fn runs_are_deterministic() {
    let data = Dataset::synthetic(32, 6, 5);
    let c = FedConfig { rounds: 3, ..FedConfig::default() };
    assert_eq!(run_secure::<u64>(&c, &data).unwrap().params, run_secure::<u64>(&c, &data).unwrap().params);
}

#[test]
fn manifest_and_dataset_parsing() {
    let c = FedConfig::parse_manifest("clients = 3\nrounds=5 # short\nlr = 0.25\ntrunc = staged\nswitch = 2\n").unwrap();
    assert_eq!((c.clients, c.rounds, c.lr), (3, 5, 0.25));
    assert_eq!(c.trunc, TruncSchedule::Staged { switch: 2 });
    assert!(FedConfig::parse_manifest("colour = red").is_err());
    let d = Dataset::parse_csv("# x0,x1,y\n0.5,1.0,1\n-0.5,0.25,0\n").unwrap();
    assert_eq!(d.dim, 2);
    assert_eq!(d.y, vec![1, 0]);
    assert!(Dataset::parse_csv("1.0,2.0,1\n3.0,0\n").is_err());
}

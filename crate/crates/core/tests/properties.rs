use adalezo::bandit::{multinomial_counts, sampling_probs};
use adalezo::estimator::ipw_weight;
use adalezo::param_store::perturb_layers;
use adalezo::validate::{bias_bound, check_variance, second_moment_multiplier, variance_formula};
use adalezo::{BanditConfig, Exec, LayeredParams, NoiseStream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bandit() -> impl Strategy<Value = BanditConfig> {
    (0.01f64..=1.0, 0.05f64..5.0, 0.0f64..=1.0, 0.01f64..=1.0, 1.0f64..20.0).prop_map(|(rho, tau, gamma, alpha, clip)| {
        BanditConfig {
            rho,
            tau,
            gamma,
            alpha,
            clip,
        }
    })
}

fn distribution(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 1..=max_len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn policy_is_a_floored_distribution(cfg in bandit(), q in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = sampling_probs(&q, &cfg).unwrap();
        let l = q.len() as f64;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for &x in &p {
            prop_assert!(x >= cfg.gamma / l);
            prop_assert!(x <= 1.0);
        }
    }

    #[test]
    fn policy_is_monotone_in_value(cfg in bandit(), q in prop::collection::vec(0.0f64..10.0, 2..20)) {
        let p = sampling_probs(&q, &cfg).unwrap();
        for i in 0..q.len() {
            for j in 0..q.len() {
                if q[i] > q[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn draws_sum_to_k(p in distribution(20), k in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = multinomial_counts(&p, k, &mut rng);
        prop_assert_eq!(d.counts.iter().sum::<u32>() as usize, k);
        prop_assert_eq!(d.counts.len(), p.len());
        let nonzero: Vec<usize> = (0..p.len()).filter(|&l| d.counts[l] > 0).collect();
        prop_assert_eq!(d.active, nonzero);
    }

    #[test]
    fn weight_is_clipped_ipw(k in 1usize..50, p in 1e-6f64..=1.0, clip in 1.0f64..100.0) {
        let w = ipw_weight(k, p, clip).unwrap();
        prop_assert!(w <= clip);
        prop_assert!(w > 0.0);
        if 1.0 / (k as f64 * p) <= clip {
            prop_assert_eq!(w, 1.0 / (k as f64 * p));
        }
    }

    #[test]
    fn multiplier_is_capped(p in 1e-9f64..=1.0, k in 1usize..64, clip in 1.0f64..64.0) {
        prop_assert!(second_moment_multiplier(p, k, clip) <= (clip + 1.0) * (1.0 + 1e-12));
    }

    #[test]
    fn variance_nonnegative_and_zero_for_one_arm(v in prop::collection::vec(0.0f64..10.0, 1..12), k in 1usize..8) {
        let l = v.len();
        let p = vec![1.0 / l as f64; l];
        prop_assert!(variance_formula(&v, &p, k) >= 0.0);
        prop_assert_eq!(variance_formula(&v[..1], &[1.0], k), 0.0);
    }

    #[test]
    fn bias_bound_vanishes_without_clipping(p in distribution(12), k in 1usize..6, g in 0.1f64..10.0) {
        let clip = 2.0 / (k as f64 * p.iter().copied().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(bias_bound(&p, k, clip, g), 0.0);
        prop_assert!(bias_bound(&p, k, 1.0, g) >= 0.0);
    }

    #[test]
    fn restore_cycle(sizes in prop::collection::vec(1usize..40, 1..6), mu in 1e-6f64..1.0, seed: u64, mask: u8) {
        let orig = LayeredParams::gaussian(&sizes, 3.0, NoiseStream::new(seed)).unwrap();
        let active: Vec<usize> = (0..sizes.len()).filter(|l| mask >> l & 1 == 1).collect();
        let stream = NoiseStream::new(seed ^ 0x5555);
        let mut p = orig.clone();
        perturb_layers(&mut p, &active, mu, stream);
        perturb_layers(&mut p, &active, -2.0 * mu, stream);
        perturb_layers(&mut p, &active, mu, stream);
        for (l, &n) in sizes.iter().enumerate() {
            if active.contains(&l) {
                let z = stream.gaussian_noise(l, n);
                for ((a, b), zi) in p.layer(l).iter().zip(orig.layer(l)).zip(z) {
                    prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * (b.abs() + mu * zi.abs()));
                }
            } else {
                prop_assert_eq!(p.layer(l), orig.layer(l));
            }
        }
    }

    #[test]
    fn partition_round_trip(sizes in prop::collection::vec(1usize..30, 1..8), seed: u64) {
        let p = LayeredParams::gaussian(&sizes, 1.0, NoiseStream::new(seed)).unwrap();
        let flat = p.as_flat().to_vec();
        let q = LayeredParams::partition(flat.clone(), &sizes).unwrap();
        prop_assert_eq!(q.layer_sizes(), sizes);
        prop_assert_eq!(q.into_flat(), flat);
    }

    #[test]
    fn snapshot_round_trip(sizes in prop::collection::vec(1usize..30, 1..8), seed: u64) {
        let p = LayeredParams::gaussian(&sizes, 1.0, NoiseStream::new(seed)).unwrap();
        let mut buf = Vec::new();
        p.write_snapshot(&mut buf).unwrap();
        let q = LayeredParams::read_snapshot(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(p, q);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monte_carlo_is_independent_of_exec_mode(p in distribution(6), k in 1usize..4, seed: u64) {
        let v: Vec<f64> = (0..p.len()).map(|i| 1.0 + i as f64).collect();
        let a = check_variance(&v, &p, k, 20_000, seed, Exec::Sequential).unwrap();
        let b = check_variance(&v, &p, k, 20_000, seed, Exec::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }
}

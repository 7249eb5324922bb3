use statrs::distribution::{ChiSquared, ContinuousCDF};
use timewarp::phold::{exp_sample, uniform_sample};
use timewarp::EntityId;

const DRAWS: u64 = 1_000_000;

fn draw_coords(i: u64) -> (EntityId, u64) {
    (EntityId((i % 1500) as u32), i / 1500)
}

#[test]
fn exponential_mean_within_one_percent() {
    for seed in [1u64, 7, 0xdead_beef] {
        let sum: f64 = (0..DRAWS)
            .map(|i| {
                let (e, c) = draw_coords(i);
                exp_sample(seed, e, c, 5.0)
            })
            .sum();
        let mean = sum / DRAWS as f64;
        assert!((mean - 5.0).abs() < 0.05, "seed {seed}: mean {mean}");
    }
}

#[test]
fn exponential_tail_matches_survival_function() {
    // P(X > 5) = e^-1 for mean 5
    let above = (0..DRAWS)
        .filter(|&i| {
            let (e, c) = draw_coords(i);
            exp_sample(3, e, c, 5.0) > 5.0
        })
        .count();
    let p = above as f64 / DRAWS as f64;
    assert!((p - (-1.0f64).exp()).abs() < 0.003, "tail fraction {p}");
}

fn chi_square(counts: &[u64], total: u64) -> f64 {
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

#[test]
fn uniform_targets_pass_chi_square() {
    let bins = 256u32;
    let critical = ChiSquared::new(f64::from(bins - 1))
        .unwrap()
        .inverse_cdf(0.999);
    for seed in [1u64, 99] {
        let mut counts = vec![0u64; bins as usize];
        for i in 0..DRAWS {
            let (e, c) = draw_coords(i);
            counts[uniform_sample(seed, e, c, bins, false).index()] += 1;
        }
        let stat = chi_square(&counts, DRAWS);
        assert!(stat < critical, "seed {seed}: chi2 {stat} >= {critical}");
    }
}

#[test]
fn exclude_self_never_targets_sender_and_stays_uniform() {
    let bins = 16u32;
    let sender = EntityId(5);
    let mut counts = vec![0u64; bins as usize];
    for c in 0..200_000u64 {
        counts[uniform_sample(11, sender, c, bins, true).index()] += 1;
    }
    assert_eq!(counts[5], 0);
    counts.remove(5);
    let critical = ChiSquared::new(f64::from(bins - 2))
        .unwrap()
        .inverse_cdf(0.999);
    assert!(chi_square(&counts, 200_000) < critical);
}

mod common;

use common::{least_squares, squared_loss};
use fedring_core::data::{make_users, write_shards, HeterogeneityProfile, UserData};
use fedring_core::model::DatasetShard;

fn pooled_train(users: &[UserData]) -> DatasetShard {
    let parts: Vec<&DatasetShard> = users.iter().map(|u| &u.train).collect();
    DatasetShard::concat("all", &parts).unwrap()
}

#[test]
fn iid_users_share_one_optimum() {
    let profile = HeterogeneityProfile::regression(3, 10_000, 5, 0.0);
    let users = make_users(&profile, 4).unwrap();
    let w = least_squares(&pooled_train(&users));
    let losses: Vec<f64> = users.iter().map(|u| squared_loss(&w, &u.test)).collect();
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    for l in &losses {
        assert!((l / mean - 1.0).abs() <= 0.10, "{losses:?}");
    }
}

/// Own-user and cross-user test losses of a least-squares fit to each user.
fn fit_and_transfer(users: &[UserData]) -> Vec<(f64, f64)> {
    let mut pairs = Vec::new();
    for (a, ua) in users.iter().enumerate() {
        let w = least_squares(&ua.train);
        let own = squared_loss(&w, &ua.test);
        for (b, ub) in users.iter().enumerate() {
            if a != b {
                pairs.push((own, squared_loss(&w, &ub.test)));
            }
        }
    }
    pairs
}

#[test]
fn shifted_users_do_not_transfer() {
    let profile = HeterogeneityProfile::regression(3, 500, 10, 5.0);
    for seed in 0..5 {
        let users = make_users(&profile, seed).unwrap();
        for (own, transfer) in fit_and_transfer(&users) {
            assert!(
                transfer >= 2.0 * own,
                "seed {seed}: own {own}, transfer {transfer}"
            );
        }
    }
}

#[test]
fn transfer_gap_grows_with_shift() {
    for seed in 0..5 {
        let gaps: Vec<f64> = [0.5, 2.0, 5.0]
            .iter()
            .map(|&shift| {
                let users =
                    make_users(&HeterogeneityProfile::regression(3, 400, 8, shift), seed).unwrap();
                let pairs = fit_and_transfer(&users);
                pairs.iter().map(|(own, t)| t - own).sum::<f64>() / pairs.len() as f64
            })
            .collect();
        assert!(
            gaps.windows(2).all(|w| w[0] < w[1]),
            "seed {seed}: {gaps:?}"
        );
    }
}

#[test]
fn shard_sizes_follow_the_profile() {
    let mut profile = HeterogeneityProfile::classification(3, 1, 8, 2, 1.0);
    profile.samples_per_user = vec![174, 68, 150];
    let users = make_users(&profile, 0).unwrap();
    let sizes: Vec<usize> = users.iter().map(|u| u.train.len() + u.test.len()).collect();
    assert_eq!(sizes, vec![174, 68, 150]);
}

fn csv_bytes(profile: &HeterogeneityProfile, seed: u64) -> Vec<u8> {
    let users = make_users(profile, seed).unwrap();
    let shards: Vec<&DatasetShard> = users.iter().flat_map(|u| [&u.train, &u.test]).collect();
    let mut out = Vec::new();
    write_shards(&mut out, &shards).unwrap();
    out
}

#[test]
fn same_profile_and_seed_give_identical_bytes() {
    for profile in [
        HeterogeneityProfile::regression(3, 50, 4, 2.0),
        HeterogeneityProfile::classification(4, 30, 6, 3, 5.0),
    ] {
        assert_eq!(csv_bytes(&profile, 8), csv_bytes(&profile, 8));
        assert_ne!(csv_bytes(&profile, 8), csv_bytes(&profile, 9));
    }
}

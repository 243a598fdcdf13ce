use gatar::agent::observe;
use gatar::featurize::build_feature_map;
use gatar::oracle::expert_greedy;
use gatar::pipeline::{generate_dataset, read_dataset, train, write_dataset, DatasetConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn overfits_a_ten_sample_sliver() {
    let data = generate_dataset(&DatasetConfig { maps: 2, samples_per_map: 5, ..Default::default() }, 4).unwrap();
    let cfg = TrainConfig { max_epochs: 500, patience: None, val_fraction: 0.0, ..Default::default() };
    let out = train(&data.samples, &cfg).unwrap();
    let last = out.curve.last().unwrap();
    assert!(last.train_loss < 1e-3, "final train loss {}", last.train_loss);
    assert!(out.best_val_dist50 < out.initial_val_dist50);
}

#[test]
fn stored_labels_match_recomputed_expert() {
    let cfg = DatasetConfig { maps: 5, samples_per_map: 4, ..Default::default() };
    let data = generate_dataset(&cfg, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    write_dataset(&path, &data).unwrap();
    let again = dir.path().join("again.bin");
    write_dataset(&again, &generate_dataset(&cfg, 11).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let back = read_dataset(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let s = &back.samples[rng.random_range(0..back.samples.len())];
        let obs: Vec<_> = s.agents.iter().map(|a| observe(&s.world, a)).collect();
        assert_eq!(expert_greedy(&s.agents, &obs).unwrap().targets, s.labels);
        for ((a, o), f) in s.agents.iter().zip(&obs).zip(&s.features) {
            assert_eq!(&build_feature_map(o, a, cfg.sigma), f);
            assert!(f.product_identity_holds());
        }
    }
}

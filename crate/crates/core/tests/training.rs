use sbd_core::boundary::Connectivity;
use sbd_core::dataset::ground_truth;
use sbd_core::net::train::{greedy_update_set, multiscale_update_set, scale_update_set};
use sbd_core::net::{
    loss, predict, predict_scale, train_greedy_phase, train_stage_multiscale, train_stage_scale, Architecture,
    LossSelector, ModelParams, ParamGroup, Sample, TrainConfig,
};
use sbd_core::synth::{synth_scene, SynthSpec};

fn scenes(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let (image, labels) = synth_scene(&SynthSpec::small(size, seed + i as u64)).unwrap();
            Sample {
                image,
                gt: ground_truth(&labels, Connectivity::Four),
            }
        })
        .collect()
}

fn tiny() -> (Architecture, TrainConfig) {
    let arch = Architecture {
        widths: vec![4, 6, 8],
        convs_per_stage: 1,
        ..Architecture::default()
    };
    let cfg = TrainConfig {
        greedy_iterations: 3,
        scale_iterations: 3,
        multiscale_iterations: 3,
        batch_size: 2,
        learning_rate: 1.0,
        ..TrainConfig::default()
    };
    (arch, cfg)
}

fn checksums(m: &ModelParams) -> Vec<(ParamGroup, u64)> {
    m.all_groups().into_iter().map(|g| (g, m.checksum(g))).collect()
}

/// Groups whose values changed between two checksum snapshots.
fn changed(before: &[(ParamGroup, u64)], after: &[(ParamGroup, u64)]) -> Vec<ParamGroup> {
    before.iter().zip(after).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0).collect()
}

#[test]
fn each_stage_touches_exactly_its_update_set() {
    let (arch, cfg) = tiny();
    let data = scenes(4, 16, 1);
    let mut m = ModelParams::init(&arch, 3).unwrap();
    for k in 0..m.stages() {
        let before = checksums(&m);
        train_greedy_phase(&mut m, &data, &cfg, k).unwrap();
        let set = greedy_update_set(&m, k);
        assert_eq!(changed(&before, &checksums(&m)), set.iter().copied().collect::<Vec<_>>(), "phase {k}");
        assert!(set.contains(&ParamGroup::Trunk(k)) && set.contains(&ParamGroup::Feat { scale: 0, stage: k }));
    }

    let before = checksums(&m);
    train_stage_scale(&mut m, &data, &cfg).unwrap();
    let moved = changed(&before, &checksums(&m));
    let allowed = scale_update_set(&m);
    assert!(moved.iter().all(|g| allowed.contains(g)), "{moved:?}");
    assert!(!moved.contains(&ParamGroup::ScaleWeights));

    let trunk = m.trunk_checksum();
    let before = checksums(&m);
    train_stage_multiscale(&mut m, &data, &cfg).unwrap();
    assert_eq!(m.trunk_checksum(), trunk);
    let moved = changed(&before, &checksums(&m));
    let allowed = multiscale_update_set(&m);
    assert!(moved.iter().all(|g| allowed.contains(g)), "{moved:?}");
    assert!(moved.contains(&ParamGroup::ScaleWeights));
}

#[test]
fn zero_iterations_leave_the_model_unchanged() {
    let (arch, cfg) = tiny();
    let cfg = TrainConfig {
        greedy_iterations: 0,
        scale_iterations: 0,
        ..cfg
    };
    let data = scenes(2, 16, 5);
    let mut m = ModelParams::init(&arch, 3).unwrap();
    let before = m.clone();
    train_greedy_phase(&mut m, &data, &cfg, 1).unwrap();
    train_stage_scale(&mut m, &data, &cfg).unwrap();
    assert_eq!(m, before);
}

#[test]
fn single_stage_model_reduces_to_plain_sgd() {
    let arch = Architecture {
        widths: vec![4],
        scales: vec![1.0],
        ..Architecture::default()
    };
    let cfg = TrainConfig {
        scales: vec![1.0],
        greedy_iterations: 20,
        learning_rate: 1.0,
        ..TrainConfig::default()
    };
    let data = scenes(5, 16, 9);
    let mut m = ModelParams::init(&arch, 4).unwrap();
    let log = train_greedy_phase(&mut m, &data, &cfg, 0).unwrap();
    assert_eq!(log.losses.len(), 20);
    assert!(train_greedy_phase(&mut m, &data, &cfg, 1).is_err());
}

#[test]
fn single_scale_copy_reproduces_the_scale_one_branch() {
    let (arch, cfg) = tiny();
    let data = scenes(3, 16, 2);
    let mut m = ModelParams::init(&arch, 6).unwrap();
    for k in 0..m.stages() {
        train_greedy_phase(&mut m, &data, &cfg, k).unwrap();
    }
    train_stage_scale(&mut m, &data, &cfg).unwrap();
    let single = m.single_scale();
    for s in &data {
        let a = predict(&single, &s.image).unwrap();
        let b = predict_scale(&m, &s.image, 0).unwrap();
        assert!(a.confidence().iter().zip(b.confidence()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn training_is_deterministic() {
    let (arch, cfg) = tiny();
    let data = scenes(4, 16, 8);
    let run = || {
        let mut m = ModelParams::init(&arch, 1).unwrap();
        let mut losses = Vec::new();
        for k in 0..m.stages() {
            losses.extend(train_greedy_phase(&mut m, &data, &cfg, k).unwrap().losses);
        }
        losses.extend(train_stage_scale(&mut m, &data, &cfg).unwrap().losses);
        losses.extend(train_stage_multiscale(&mut m, &data, &cfg).unwrap().losses);
        (sbd_core::net::checkpoint::encode(&m), losses)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

// Calibrated threshold: see the greedy-decrease entry in the project notes.
#[test]
fn greedy_side_losses_fall_by_a_fifth_on_a_fixed_batch() {
    let data = scenes(10, 32, 100);
    let cfg = TrainConfig {
        batch_size: 10,
        greedy_iterations: 200,
        learning_rate: 3.0,
        ..TrainConfig::default()
    };
    let mut m = ModelParams::init(&Architecture::default(), 7).unwrap();
    for k in 0..m.stages() {
        let sel = LossSelector::SideOutput(k);
        let before = loss(&m, &data, sel, cfg.beta).unwrap();
        train_greedy_phase(&mut m, &data, &cfg, k).unwrap();
        let after = loss(&m, &data, sel, cfg.beta).unwrap();
        let drop = 1.0 - after / before;
        println!("side loss {}: {before:.3} -> {after:.3} ({:.1}% lower)", k + 1, 100.0 * drop);
        assert!(drop >= 0.2, "phase {k}: only {:.1}%", 100.0 * drop);
    }
}

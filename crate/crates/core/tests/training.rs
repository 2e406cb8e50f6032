use hoi_core::loss::{total_loss, wce_backward, wce_forward};
use hoi_core::model::{init, load_checkpoint, load_checkpoint_for, save_checkpoint, AdamConfig, AdamState, Checkpoint, Network};
use hoi_core::pipeline::{arranged_examples, generate_split, train, DataConfig, RunConfig, Split};
use hoi_core::supervision::{build_input, example_supervision, MaskMode};
use hoi_core::Error;

fn small() -> RunConfig {
    let mut cfg = RunConfig {
        data: DataConfig {
            train_scenes: 10,
            test_scenes: 2,
        },
        ..RunConfig::default()
    };
    cfg.train.epochs = 2;
    cfg.resolved().unwrap()
}

#[test]
fn one_small_adam_step_lowers_the_example_loss() {
    let cfg = small();
    let ds = generate_split(&cfg.synth, &cfg.data, Split::Train).unwrap();
    let net = Network::new(cfg.model.clone()).unwrap();
    let shape = net.grid_shape();
    let mut checked = 0;
    for (pos, example) in arranged_examples(&cfg, &ds).into_iter().take(10) {
        let scene = &ds.scenes[pos];
        let input = build_input(&scene.image, &example.actor_box, cfg.ablation.mask_mode);
        let (sa, so) = example_supervision(&example, &scene.annotation, &shape, &cfg.supervision()).unwrap();
        let eps = cfg.loss.eps;
        let loss = |params: &hoi_core::model::Parameters| {
            let (a, o, _) = net.forward(params, &input).unwrap();
            total_loss(
                wce_forward(&a, &sa.target, &sa.hanning, &sa.scale, eps).unwrap(),
                wce_forward(&o, &so.target, &so.hanning, &so.scale, eps).unwrap(),
                &cfg.loss,
            )
        };
        let mut params = init(&cfg.model).unwrap();
        let before = loss(&params);
        let (a, o, cache) = net.forward(&params, &input).unwrap();
        let ga = wce_backward(&a, &sa.target, &sa.hanning, &sa.scale, eps).unwrap();
        let go = wce_backward(&o, &so.target, &so.hanning, &so.scale, eps).unwrap();
        let grads = net.backward(&params, &cache, &ga, &go).unwrap();
        let mut adam = AdamState::new(AdamConfig { lr: 1e-4, ..AdamConfig::default() }, &params);
        adam.step(&mut params, &grads).unwrap();
        let after = loss(&params);
        assert!(after < before, "example {checked}: {before} -> {after}");
        checked += 1;
    }
    assert_eq!(checked, 10);
}

#[test]
fn checkpoint_files_round_trip_and_resume_identically() {
    let cfg = small();
    let ds = generate_split(&cfg.synth, &cfg.data, Split::Train).unwrap();
    let outcome = train(&cfg, &ds, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &outcome.checkpoint).unwrap();
    let back: Checkpoint = load_checkpoint(&path).unwrap();
    assert_eq!(back, outcome.checkpoint);
    assert_eq!(back.adam.as_ref().unwrap().step as usize, outcome.epochs.iter().map(|e| e.examples).sum::<usize>());

    let mut rgb = cfg.clone();
    rgb.ablation.mask_mode = MaskMode::Rgb;
    let rgb = rgb.resolved().unwrap();
    assert!(matches!(load_checkpoint_for(&path, &rgb.model), Err(Error::ConfigMismatch)));
    assert!(matches!(load_checkpoint(&dir.path().join("absent.ckpt")), Err(Error::MissingArtifact(_))));
}

#[test]
fn training_rejects_a_dataset_from_another_config() {
    let cfg = small();
    let ds = generate_split(&cfg.synth, &cfg.data, Split::Train).unwrap();
    let other = cfg.clone().with_seed(4).resolved().unwrap();
    assert!(matches!(train(&other, &ds, |_| {}), Err(Error::DatasetMismatch(_))));
}

#[test]
fn loss_falls_over_epochs_on_a_small_benchmark() {
    let mut cfg = small();
    cfg.data.train_scenes = 20;
    cfg.train.epochs = 3;
    let ds = generate_split(&cfg.synth, &cfg.data, Split::Train).unwrap();
    let epochs = train(&cfg, &ds, |_| {}).unwrap().epochs;
    assert!(epochs.windows(2).all(|w| w[1].mean_loss < w[0].mean_loss), "{epochs:?}");
}

use geoembed::mesh::{shapes, TriangleMesh};
use geoembed::nn::ParamSet;
use geoembed::oracle::{sample_pairs, GeodesicSampleSet, GraphOracle, SteinerOracle};
use geoembed::train::{
    finetune, pair_loss_and_gradient, sample_set_mre, train, train_step, Batch, TrainConfig,
    TrainOutputs, TrainState, TrainingMesh,
};
use geoembed::Error;

fn labelled(mesh: TriangleMesh, sources: usize, seed: u64) -> (TriangleMesh, GeodesicSampleSet) {
    let oracle = GraphOracle::new(&mesh);
    let set = sample_pairs(&mesh, sources, 20, &oracle, seed).unwrap().set;
    (mesh, set)
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        steps_per_epoch: Some(2),
        batch_meshes: 2,
        pairs_per_mesh: 64,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    }
}

fn corpus() -> Vec<(TriangleMesh, GeodesicSampleSet)> {
    vec![
        labelled(shapes::icosphere(1), 10, 1),
        labelled(shapes::bumpy_sphere(1, 0.1, 3.0), 10, 2),
    ]
}

#[test]
fn zero_epochs_returns_the_initial_state() {
    let config = TrainConfig {
        epochs: 0,
        ..small_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let outputs = TrainOutputs {
        log_path: Some(dir.path().join("log.jsonl")),
        checkpoint_dir: Some(dir.path().to_path_buf()),
    };
    let run = train(corpus(), &config, &outputs).unwrap();
    assert_eq!(run.state.step(), 0);
    assert!(run.steps.is_empty());
    let fresh = TrainState::new(config.net.clone(), config.seed, config.weight_decay).unwrap();
    assert_eq!(run.state.model, fresh.model);
    let saved = TrainState::load(dir.path().join("last.gckp")).unwrap();
    assert_eq!(saved.to_bytes(), fresh.to_bytes());
}

#[test]
fn same_seed_gives_the_same_loss_curve() {
    let config = small_config();
    let a = train(corpus(), &config, &TrainOutputs::default()).unwrap();
    let b = train(corpus(), &config, &TrainOutputs::default()).unwrap();
    assert_eq!(a.steps.len(), 4);
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert!((x.loss - y.loss).abs() <= 1e-3 * x.loss.abs().max(1e-12));
    }
    assert!(a.steps.windows(2).all(|w| w[1].lr < w[0].lr));
    assert_eq!(a.state.step(), 4);
}

#[test]
fn small_step_decreases_the_batch_loss() {
    let config = small_config();
    let meshes: Vec<TrainingMesh> = corpus()
        .into_iter()
        .map(|(m, s)| TrainingMesh::new(m, s, &config.net).unwrap())
        .collect();
    let mut state = TrainState::new(config.net.clone(), 5, 0.0).unwrap();
    let batch = Batch::sample(&[0, 1], &meshes, 2, 64, &mut state.rng);
    let before = train_step(&mut state.clone(), &meshes, &batch, 0.0, 0.001).unwrap();
    train_step(&mut state, &meshes, &batch, 1e-5, 0.001).unwrap();
    let after = train_step(&mut state.clone(), &meshes, &batch, 0.0, 0.001).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn log_and_checkpoints_are_written() {
    let config = TrainConfig {
        validation_fraction: 0.5,
        ..small_config()
    };
    let dir = tempfile::tempdir().unwrap();
    let outputs = TrainOutputs {
        log_path: Some(dir.path().join("log.jsonl")),
        checkpoint_dir: Some(dir.path().join("ckpt")),
    };
    let run = train(corpus(), &config, &outputs).unwrap();
    assert_eq!(run.validation.len(), 1);
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let steps = lines.iter().filter(|v| v["record"] == "step").count();
    assert_eq!(steps, run.steps.len());
    for v in lines.iter().filter(|v| v["record"] == "step") {
        for field in ["step", "lr", "loss", "wall_seconds"] {
            assert!(v[field].is_number(), "missing {field}");
        }
    }
    assert!(lines.iter().any(|v| v["record"] == "epoch" && v["val_mre"].is_number()));
    assert!(dir.path().join("ckpt/best.gckp").exists());
    let last = TrainState::load(dir.path().join("ckpt/last.gckp")).unwrap();
    assert_eq!(last.to_bytes(), run.state.to_bytes());
}

#[test]
fn finetune_contracts() {
    let config = small_config();
    let (mesh, samples) = labelled(shapes::icosphere(1), 10, 3);
    let mut state = TrainState::new(config.net.clone(), 0, config.weight_decay).unwrap();
    let before = state.to_bytes();
    assert!(finetune(&mut state, &mesh, &samples, 0, &config).unwrap().is_empty());
    assert_eq!(state.to_bytes(), before);

    let other = shapes::icosphere(2);
    assert!(matches!(
        finetune(&mut state, &other, &samples, 3, &config),
        Err(Error::StaleChecksum { .. })
    ));

    let records = finetune(&mut state, &mesh, &samples, 3, &config).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(state.step(), 3);
}

#[test]
fn mismatched_sample_set_is_rejected() {
    let (_, samples) = labelled(shapes::icosphere(1), 5, 0);
    let err = train(vec![(shapes::icosphere(2), samples)], &small_config(), &TrainOutputs::default());
    assert!(matches!(err, Err(Error::StaleChecksum { .. })));
}

#[test]
fn euclidean_decoder_trains_end_to_end() {
    let mut config = small_config();
    config.net.decoder = geoembed::nn::DecoderKind::Euclidean;
    let run = train(corpus(), &config, &TrainOutputs::default()).unwrap();
    assert!(run.steps.iter().all(|s| s.loss.is_finite()));
    assert!(run.state.model.dist.is_none());
}

#[test]
fn euclidean_gradient_matches_differences() {
    // For the Euclidean decoder the loss gradient in an embedding row is
    // sign(d - gt) / (N (gt + eps)) * (e_i - e_j) / d, checked here against
    // a finite difference of the loss.
    let mut config = small_config();
    config.net.decoder = geoembed::nn::DecoderKind::Euclidean;
    let model = geoembed::nn::Model::<f32>::new(config.net.clone(), 0).unwrap();
    let emb = ndarray::Array2::from_shape_fn((3, 256), |(r, c)| ((r * 7 + c * 3) % 11) as f32 * 0.01);
    let pairs = [(0u32, 1u32), (1, 2)];
    let targets = [0.05f32, 0.3];
    let mut grad = model.zeros_like();
    let (loss, d_emb) = pair_loss_and_gradient(&model, &emb, &pairs, &targets, 0.001, &mut grad).unwrap();
    assert_eq!(grad.parameter_count(), model.parameter_count());
    let h = 1e-3f32;
    for (r, c) in [(0, 0), (1, 5), (2, 200)] {
        let mut plus = emb.clone();
        plus[[r, c]] += h;
        let mut minus = emb.clone();
        minus[[r, c]] -= h;
        let lp = pair_loss_and_gradient(&model, &plus, &pairs, &targets, 0.001, &mut model.zeros_like()).unwrap().0;
        let lm = pair_loss_and_gradient(&model, &minus, &pairs, &targets, 0.001, &mut model.zeros_like()).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h as f64);
        assert!((numeric - d_emb[[r, c]] as f64).abs() < 1e-2 * numeric.abs().max(1e-3), "{numeric} vs {}", d_emb[[r, c]]);
    }
    assert!(loss > 0.0);
}

#[test]
#[ignore]
fn time_one_step_on_level_three_sphere() {
    let mesh = shapes::icosphere(3);
    let oracle = SteinerOracle::new(&mesh, 3);
    let samples = sample_pairs(&mesh, 40, 500, &oracle, 0).unwrap().set;
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let config = TrainConfig {
        epochs: 1,
        steps_per_epoch: Some(env("STEPS", 5.0) as usize),
        learning_rate: env("LR", 0.0025),
        batch_meshes: 1,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let run = train(vec![(mesh.clone(), samples.clone())], &config, &TrainOutputs::default()).unwrap();
    eprintln!("{} steps: {:?}", run.steps.len(), t.elapsed());
    for r in run.steps.iter().step_by(50) {
        eprintln!("{} {:.4}", r.step, r.loss);
    }
    eprintln!("mre {}", sample_set_mre(&run.state.model, &mesh, &samples, 0.001).unwrap());
}

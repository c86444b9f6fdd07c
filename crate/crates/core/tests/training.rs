use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavediff::network::{DagConfig, DagNetwork, Label};
use wavediff::nn::Module;
use wavediff::training::{
    fit, load_checkpoint, save_checkpoint, train_step, Batch, BatchSource, LossLog, TrainConfig,
    TrainState,
};
use wavediff::Result;

fn one_batch() -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = Array2::from_shape_fn((4, 64), |(r, n)| {
        let f = if r % 2 == 0 { 0.3 } else { 1.7 };
        0.8 * (f * n as f64).sin() + 0.05 * rng.random_range(-1.0..1.0)
    });
    Batch::new(
        w,
        vec![
            Label::Class(0),
            Label::Class(1),
            Label::Class(0),
            Label::Class(1),
        ],
    )
    .unwrap()
}

#[test]
fn overfitting_one_batch_lowers_the_moving_average() {
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        seed: 4,
        ..TrainConfig::default()
    };
    let net = DagNetwork::new(DagConfig::miniature(2), 1).unwrap();
    let mut state = TrainState::new(net, &cfg);
    let batch = one_batch();
    let losses: Vec<f64> = (0..1000)
        .map(|_| train_step(&mut state, &batch, &cfg).unwrap())
        .collect();
    let windows: Vec<f64> = losses
        .chunks(250)
        .map(|w| w.iter().sum::<f64>() / 250.0)
        .collect();
    for pair in windows.windows(2) {
        assert!(pair[1] < pair[0], "window means {windows:?}");
    }
    assert_eq!(state.step, 1000);
}

struct Repeat(Batch);

impl BatchSource for Repeat {
    fn next_batch(&mut self, _: usize, _: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
        let _: u32 = rng.random();
        Ok(self.0.clone())
    }
}

#[test]
fn resuming_from_a_checkpoint_continues_the_same_curve() {
    let cfg = TrainConfig {
        max_steps: 20,
        log_every: 1,
        validate_every: 0,
        learning_rate: 1e-3,
        seed: 9,
        ..TrainConfig::default()
    };
    let fresh = || TrainState::new(DagNetwork::new(DagConfig::miniature(2), 2).unwrap(), &cfg);
    let run = |state: &mut TrainState, cfg: &TrainConfig| -> Vec<String> {
        let mut log = LossLog::appending(Vec::new());
        fit(state, &mut Repeat(one_batch()), None, cfg, &mut log, None).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        text.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };

    let mut straight = fresh();
    let full = run(&mut straight, &cfg);
    assert_eq!(full.len(), 20);

    let half = TrainConfig {
        max_steps: 10,
        ..cfg.clone()
    };
    let mut first = fresh();
    let mut curve = run(&mut first, &half);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    save_checkpoint(&first, &path).unwrap();
    let mut resumed = load_checkpoint(&path).unwrap();
    curve.extend(run(&mut resumed, &cfg));
    assert_eq!(curve, full);
    for ((name, a), (_, b)) in straight
        .network
        .named_params()
        .into_iter()
        .zip(resumed.network.named_params())
    {
        assert_eq!(a.value, b.value, "{name}");
    }
}

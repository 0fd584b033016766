//! End-to-end checks on the paper-size dataset.

use qmbrl::baseline::{train_mlp, Mlp, MlpConfig, MLP_LAYERS};
use qmbrl::cartpole::{CartPole, CartPoleState};
use qmbrl::dataset::{generate, Split, SplitDataset, SplitSizes};
use qmbrl::optim::{Adam, AdamConfig};
use qmbrl::policy::{fitness, fitness_start_states, RolloutConfig, VqcPolicy};
use qmbrl::surrogate::{train, SurrogateModel, TrainConfig};
use qmbrl::vqc::{build_model_template, build_policy_template, ParamVector, VqcConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset() -> SplitDataset {
    let data = generate(&CartPole::default(), 0, 10_000).unwrap();
    SplitDataset::from_generated(data, SplitSizes::default(), 0).unwrap()
}

fn mean_abs_delta_error(model: &SurrogateModel, ds: &SplitDataset) -> [f64; 4] {
    let test: Vec<_> = ds.indices().test.iter().map(|&i| ds.records()[i]).collect();
    let mut err = [0.0; 4];
    for r in &test {
        let pred = model.predict(&r.state, r.action).to_array();
        let next = r.next_state.to_array();
        for d in 0..4 {
            err[d] += (pred[d] - next[d]).abs() / test.len() as f64;
        }
    }
    err
}

#[test]
fn surrogate_beats_untrained_model() {
    let ds = dataset();
    let template = build_model_template(VqcConfig::model()).unwrap();
    let untrained = SurrogateModel::random(template.clone(), ds.scaler().clone(), 1).unwrap();
    let trained = train(&ds, template, &TrainConfig { seed: 1, ..TrainConfig::default() }).unwrap();
    let before = untrained.evaluate_split(&ds, Split::Val).unwrap();
    let after = trained.evaluate_split(&ds, Split::Val).unwrap();
    assert!(after * 2.0 <= before, "val loss {after} vs untrained {before}");
    assert_eq!(trained.history().len(), 20);
    assert!(trained.history().iter().all(|r| after <= r.val_loss));

    let e_trained = mean_abs_delta_error(&trained, &ds);
    let e_untrained = mean_abs_delta_error(&untrained, &ds);
    for d in 0..4 {
        assert!(e_trained[d] < e_untrained[d], "dim {d}: {} vs {}", e_trained[d], e_untrained[d]);
    }

    // fitness on the trained model is bounded and reproducible
    let policy_t = build_policy_template(VqcConfig::policy()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy =
        VqcPolicy::new(policy_t, ParamVector::random_uniform(180, &mut rng), trained.scaler().state).unwrap();
    let rollout = RolloutConfig::new(50, fitness_start_states(10, 3)).unwrap();
    let f = fitness(&trained, &policy, &rollout);
    assert!((0.0..=50.0).contains(&f));
    assert_eq!(f.to_bits(), fitness(&trained, &policy, &rollout).to_bits());
}

#[test]
fn mlp_beats_untrained_network() {
    let ds = dataset();
    let train_s = ds.samples(Split::Train);
    let val = ds.samples(Split::Val);
    let untrained = Mlp::init(&MLP_LAYERS, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let trained = train_mlp(train_s, val, &MlpConfig { epochs: 20, seed: 2, ..MlpConfig::default() }).unwrap();
    assert!(trained.mlp.evaluate_loss(val).unwrap() < untrained.evaluate_loss(val).unwrap());
}

#[test]
fn zero_network_on_zero_targets_stays_put() {
    let samples: Vec<_> = dataset().samples(Split::Train)[..64]
        .iter()
        .map(|s| qmbrl::dataset::Sample { input: s.input, target: [0.0; 4] })
        .collect();
    let mut mlp = Mlp::zeros(&MLP_LAYERS).unwrap();
    assert_eq!(mlp.evaluate_loss(&samples).unwrap(), 0.0);
    let mut adam = Adam::new(AdamConfig::default(), mlp.num_params());
    let (_, grad) = mlp.mse_gradient(&samples[0].input, &samples[0].target).unwrap();
    adam.step(mlp.params_mut(), &grad).unwrap();
    assert!(mlp.params().iter().all(|p| *p == 0.0));
    assert_eq!(mlp.evaluate_loss(&samples).unwrap(), 0.0);
}

#[test]
fn no_change_record_scales_to_image_of_zero() {
    let ds = dataset();
    let s = CartPoleState::new(0.01, 0.0, -0.02, 0.1);
    let t = ds.scaler().scale_target(&[0.0; 4]);
    let back = ds.scaler().unscale_target(&t);
    for d in 0..4 {
        assert!(back[d].abs() < 1e-12);
        assert!((-0.5..=0.5).contains(&t[d]));
    }
    let u = ds.scaler().scale_state(&s);
    let r = ds.scaler().unscale_state(&u);
    for (a, b) in r.to_array().iter().zip(s.to_array()) {
        assert!((a - b).abs() < 1e-12);
    }
}

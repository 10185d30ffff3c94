//! Training loop, splitting, augmentation, evaluation and checkpoint behaviour.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sursmr_core::autograd::Graph;
use sursmr_core::io::checkpoint::{self, CheckpointMeta};
use sursmr_core::model::layers::Linear;
use sursmr_core::model::*;
use sursmr_core::tensor::Tensor;
use sursmr_core::train::gradcheck::{check_objective, Objective};
use sursmr_core::train::*;
use sursmr_core::{Error, Exec};

fn fixture(ladders: usize, rungs: usize) -> Dataset {
    let spec = SyntheticSpec {
        ladders,
        rungs,
        ..Default::default()
    };
    let d = SyntheticData::generate(&spec, Exec::Sequential).unwrap();
    d.dataset(&d.ground_truth().unwrap(), &ModelConfig::tiny().backbone, Exec::Sequential)
        .unwrap()
}

fn quick(steps: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        max_steps: steps,
        ..Default::default()
    }
}

#[test]
fn zero_steps_return_the_initialization() {
    let data = fixture(2, 3);
    let net = Network::new(ModelConfig::tiny(), 4).unwrap();
    let out = fit(&net, &data, Some(&data), &quick(0), Exec::Sequential).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.best.tensors(), net.store().tensors());
    assert_eq!(out.last.tensors(), net.store().tensors());
    assert_eq!(out.evals.len(), 1);
}

#[test]
fn first_logged_loss_matches_offline_recompute() {
    let data = fixture(2, 3);
    let net = Network::new(ModelConfig::tiny(), 1).unwrap();
    let cfg = TrainConfig {
        batch_size: data.len(),
        hflip: false,
        vflip: false,
        ..quick(1)
    };
    let out = fit(&net, &data, None, &cfg, Exec::Sequential).unwrap();
    let items: Vec<(Prediction, Target)> = data
        .samples()
        .iter()
        .map(|s| (net.predict(&s.original, &s.compressed).unwrap(), s.target))
        .collect();
    let offline = batch_loss(&items, &cfg.loss).unwrap();
    assert!((out.losses[0].loss - offline).abs() < 1e-12);
}

#[test]
fn masked_smr_term_contributes_no_gradient() {
    let data = fixture(1, 2);
    let net = Network::new(ModelConfig::tiny(), 2).unwrap();
    let s = &data.samples()[0];
    let weights = LossWeights {
        smr_mask: false,
        ..Default::default()
    };
    let a = Target { sur: Some(0.3), smr: Some(0.0) };
    let b = Target { sur: Some(0.3), smr: Some(1.0) };
    let none = Target { sur: Some(0.3), smr: None };
    let (_, _, ga) = net.loss_and_grads(&s.original, &s.compressed, &a, &weights).unwrap();
    let (_, _, gb) = net.loss_and_grads(&s.original, &s.compressed, &b, &weights).unwrap();
    let (_, _, gn) = net.loss_and_grads(&s.original, &s.compressed, &none, &weights).unwrap();
    assert_eq!(ga.0, gb.0);
    assert_eq!(ga.0, gn.0);
    // The SMR output column of the last layer receives nothing.
    let store = net.store();
    let w = ga.get(store.id("head.fc3.weight").unwrap());
    let (rows, _) = w.dims2();
    assert!((0..rows).all(|r| w.at2(r, 1) == 0.0));
    assert_eq!(ga.get(store.id("head.fc3.bias").unwrap()).data[1], 0.0);

    let relabelled = data.relabel(
        &data
            .samples()
            .iter()
            .map(|s| ((s.ladder_id.clone(), s.rung_index), Target { sur: s.target.sur, smr: None }))
            .collect(),
    );
    let cfg = TrainConfig { loss: weights, ..quick(2) };
    fit(&net, &relabelled, None, &cfg, Exec::Sequential).unwrap();
}

#[test]
fn both_masks_off_is_rejected_before_training() {
    let data = fixture(1, 2);
    let net = Network::new(ModelConfig::tiny(), 0).unwrap();
    let cfg = TrainConfig {
        loss: LossWeights {
            sur_mask: false,
            smr_mask: false,
            ..Default::default()
        },
        ..quick(5)
    };
    assert!(matches!(fit(&net, &data, None, &cfg, Exec::Sequential), Err(Error::InvalidConfig(_))));
}

#[test]
fn checkpoint_round_trip_then_training_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(2, 3);
    let net = Network::new(ModelConfig::tiny(), 6).unwrap();
    let path = dir.path().join("ckpt.json");
    let meta = CheckpointMeta {
        step: 0,
        seed: 6,
        phase: "init".into(),
    };
    checkpoint::save(&path, &net, &meta).unwrap();
    let (loaded, back) = checkpoint::load(&path).unwrap();
    assert_eq!(back, meta);
    assert_eq!(loaded.config(), net.config());
    for (a, b) in loaded.store().tensors().iter().zip(net.store().tensors()) {
        let bits = |t: &Tensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    let x = fit(&net, &data, None, &quick(2), Exec::Sequential).unwrap();
    let y = fit(&loaded, &data, None, &quick(2), Exec::Sequential).unwrap();
    assert_eq!(x.last.tensors(), y.last.tensors());

    std::fs::write(&path, &std::fs::read_to_string(&path).unwrap()[..200]).unwrap();
    assert!(checkpoint::load(&path).unwrap_err().to_string().contains("corrupt checkpoint"));
}

#[test]
fn worker_count_does_not_change_training() {
    let data = fixture(2, 3);
    let net = Network::new(ModelConfig::tiny(), 3).unwrap();
    let a = fit(&net, &data, Some(&data), &quick(3), Exec::Sequential).unwrap();
    let b = fit(&net, &data, Some(&data), &quick(3), Exec::Parallel).unwrap();
    assert_eq!(a.last.tensors(), b.last.tensors());
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.evals, b.evals);
}

#[test]
fn evaluate_hand_cases() {
    assert!((mae(&[(0.8, 1.0), (0.2, 0.0)]).unwrap() - 0.2).abs() < 1e-15);
    assert_eq!(mae(&[(0.5, 0.0), (0.5, 1.0), (0.5, 0.0), (0.5, 1.0)]).unwrap(), 0.5);
    assert_eq!(mae(&[(0.3, 0.3)]).unwrap(), 0.0);
    assert!(matches!(mae(&[]), Err(Error::EmptySplit(_))));
}

#[test]
fn gradcheck_flags_a_corrupted_gradient() {
    let mut rng = seeded(5);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, &mut Init { rng: &mut rng }, "lin", 3, 2, true);
    let x = Tensor::new(vec![2, 3], (0..6).map(|i| i as f64 * 0.3 - 0.7).collect());
    // Quadratic in the parameters of an affine map: sum((xW + b)^2).
    let obj = Objective {
        store,
        eval: Box::new(move |g: &mut Graph| {
            let xi = g.input(x.clone());
            let y = lin.forward(g, xi);
            let sq = g.mul(y, y);
            Ok(g.sum(sq))
        }),
    };
    let cfg = GradcheckConfig::default();
    let clean = check_objective("affine", &obj, &cfg, None).unwrap();
    assert!(clean.passed && clean.max_rel_error < 1e-6, "{clean:?}");
    let broken = check_objective(
        "affine",
        &obj,
        &cfg,
        Some(&|g: &mut sursmr_core::autograd::Grads| g.0[0].data[1] += 0.05),
    )
    .unwrap();
    assert!(!broken.passed);
    assert_eq!(broken.worst, "lin.weight[1]");
}

#[test]
fn ablation_rows_share_the_seed_and_rerun_identically() {
    let data = fixture(3, 2);
    let ds = [DatasetSplits {
        name: "fixture".into(),
        train: &data,
        val: None,
        test: &data,
    }];
    let cfg = quick(1);
    let variants = [Variant::Full, Variant::NoDfrl];
    let a = run_ablation_matrix(&variants, &ds, &ModelConfig::tiny(), &cfg, Exec::Sequential).unwrap();
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|r| r.seed == cfg.seed && r.error.is_none()));
    let b = run_ablation_matrix(&variants, &ds, &ModelConfig::tiny(), &cfg, Exec::Sequential).unwrap();
    assert_eq!(a, b);
    assert!(run_ablation_matrix(&[], &ds, &ModelConfig::tiny(), &cfg, Exec::Sequential).is_err());
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ladder{i:04}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_deterministic_partition(n in 10usize..400, seed in any::<u64>()) {
        let all = ids(n);
        let spec = SplitSpec { seed, ..Default::default() };
        let s = split_dataset(&all, &spec).unwrap();
        let again = split_dataset(&all, &spec).unwrap();
        prop_assert_eq!(&s, &again);
        let (val, test) = ((n as f64 * 0.1 + 1e-9).floor() as usize, (n as f64 * 0.2 + 1e-9).floor() as usize);
        prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (n - val - test, val, test));
        let mut union: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        union.sort();
        prop_assert_eq!(union, all);
    }

    #[test]
    fn flips_commute_with_differences(seed in any::<u64>(), h in any::<bool>(), v in any::<bool>()) {
        let mut rng = seeded(seed);
        let shape = [3, rng.random_range(1..9), rng.random_range(1..9)];
        let a = rand_tensor(&mut rng, &shape);
        let b = rand_tensor(&mut rng, &shape);
        let draw = FlipDraw { horizontal: h, vertical: v };
        let (fa, fb) = augment(&a, &b, draw);
        let lhs = diff_features(&FeaturePyramid(vec![fa]), &FeaturePyramid(vec![fb])).unwrap();
        let raw = diff_features(&FeaturePyramid(vec![a]), &FeaturePyramid(vec![b])).unwrap();
        prop_assert_eq!(&lhs[0], &draw.apply(&raw[0]));
    }

    #[test]
    fn mae_ignores_item_order(seed in any::<u64>(), n in 1usize..300) {
        let mut rng = seeded(seed);
        let mut pairs: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let a = mae(&pairs).unwrap();
        rand::seq::SliceRandom::shuffle(pairs.as_mut_slice(), &mut rng);
        prop_assert!((a - mae(&pairs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_zero_iff_exact(p in 0.0f64..1.0, q in 0.0f64..1.0, s in 0.0f64..1.0, m in 0.0f64..1.0) {
        let w = LossWeights::default();
        let l = joint_loss(&Prediction { sur: p, smr: q }, &Target { sur: Some(s), smr: Some(m) }, &w).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, p == s && q == m);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run alone with `cargo test -p sursmr-core --test acceptance`;
//! pass criterion numbers as arguments to run a subset.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sursmr_core::autograd::Graph;
use sursmr_core::commands::{self, DataArgs, Phase};
use sursmr_core::io::RunConfig;
use sursmr_core::labelgen::*;
use sursmr_core::model::dfrl::DfrlStage;
use sursmr_core::model::mixer::Mixer;
use sursmr_core::model::*;
use sursmr_core::quality::*;
use sursmr_core::tensor::Tensor;
use sursmr_core::train::*;
use sursmr_core::Exec;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = seeded(1);
    let mut rungs = 0;
    for case in 0..1000 {
        let set = random_record_set(&mut rng, 50, 10);
        let oracle = brute_force_counts(&set.records);
        let kind = match set.kind {
            SubjectKind::Human => RatioKind::Sur,
            SubjectKind::Machine => RatioKind::Smr,
        };
        for l in &set.ladders {
            let curve = ratio_curve(l, &set.records, kind).map_err(err)?;
            for (rung, count) in &curve.values {
                let (sat, total) = oracle[&(l.ladder_id.clone(), *rung)];
                ensure((count.satisfied, count.total) == (sat, total), || {
                    format!("case {case} {}#{rung}: {count:?} vs {sat}/{total}", l.ladder_id)
                })?;
                ensure(count.ratio() == sat as f64 / total as f64, || format!("case {case}: ratio"))?;
                rungs += 1;
            }
        }
    }
    within(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 record sets, {rungs} rungs match brute-force counts"))
}

fn labels(scores: &RandomScores, l: &QualityLadder) -> Result<Vec<f64>, String> {
    let mut t = ScoreTable::default();
    for (i, (s, p)) in scores.scores.iter().zip(&scores.polarities).enumerate() {
        for (k, v) in s.iter().enumerate() {
            t.insert(&l.ladder_id, k as u32 + 1, &format!("m{i}"), *v, *p).map_err(err)?;
        }
    }
    proxy_sur(&t, &t.scorers(), l, &LabelGenConfig::default()).map_err(err)
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = seeded(2);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.random_range(1..=6);
        let k = rng.random_range(2..=12);
        let l = ladder("L", k as u32);
        let s = random_scores(&mut rng, n, k, false);
        let base = labels(&s, &l)?;
        ensure(base.iter().all(|v| (0.0..=1.0).contains(v)), || format!("case {case}: label outside [0, 1]"))?;
        for (a, b) in base.iter().zip(proxy_oracle(&s, 1e-9)) {
            worst = worst.max((a - b).abs());
        }

        let which = rng.random_range(0..n);
        let (a, b) = (rng.random_range(0.01..100.0), rng.random_range(-50.0..50.0));
        let mut m = RandomScores {
            polarities: s.polarities.clone(),
            scores: s.scores.clone(),
        };
        m.scores[which].iter_mut().for_each(|v| *v = a * *v + b);
        for (x, y) in base.iter().zip(labels(&m, &l)?) {
            worst = worst.max((x - y).abs());
        }

        let raw = &s.scores[0];
        let lhs = normalize_over_ladder(&canonicalize_polarity(raw, Polarity::LowerBetter), 1e-9).map_err(err)?;
        let rhs = normalize_over_ladder(raw, 1e-9).map_err(err)?;
        for (x, y) in lhs.iter().zip(rhs) {
            worst = worst.max((x - (1.0 - y)).abs());
        }

        let mono = random_scores(&mut rng, n, k, true);
        let out = labels(&mono, &l)?;
        ensure(out.windows(2).all(|w| w[1] <= w[0]), || format!("case {case}: monotone scorers, labels rise"))?;
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    within(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 tables: affine/duality/oracle max deviation {worst:e}, ranges and monotonicity hold"))
}

fn criterion_3() -> Outcome {
    let s = RandomScores {
        polarities: vec![Polarity::HigherBetter; 2],
        scores: vec![vec![0.9, 0.6, 0.3], vec![0.5, 0.4, 0.1]],
    };
    let got = labels(&s, &ladder("L", 3))?;
    ensure(got == [1.0, 0.625, 0.0], || format!("got {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn criterion_4() -> Outcome {
    // DFRL with its default (zero) final convolution.
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut store = ParamStore::new();
    let stage = DfrlStage::new(&mut store, &mut Init { rng: &mut rng }, "d", 4, 3);
    let x = rand_tensor(&mut rng, &[4, 6, 5]);
    let mut g = Graph::new(&store);
    let v = g.input(x.clone());
    let out = stage.forward(&mut g, v);
    ensure(g.value(out) == &x, || "DFRL zero-init is not the identity".into())?;

    let mut store = ParamStore::new();
    let mixer = Mixer::new(&mut store, &mut Init { rng: &mut rng }, &MixerConfig::default(), 4, 6, 1e-5);
    randomize(&mut store, &mut rng, 1.0);
    for b in &mixer.blocks {
        for id in [
            b.token_mlp.fc2.weight,
            b.token_mlp.fc2.bias.unwrap(),
            b.channel_mlp.fc2.weight,
            b.channel_mlp.fc2.bias.unwrap(),
        ] {
            store.tensor_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut g = Graph::new(&store);
    let xi = g.input(rand_tensor(&mut rng, &[4, 6]));
    let out = mixer.forward(&mut g, xi);
    ensure(g.value(out).data == store.tensor(mixer.reg_token).data, || "mixer identity broken".into())?;

    let (store, m) = build_mhaap(3, 2, 4, 2, 41);
    let token = rand_tensor(&mut rng, &[1, 4]);
    let (pooled, attn) = run_mhaap(&store, &m, &token);
    ensure(attn.iter().all(|a| a.data.iter().all(|&w| w == 1.0)), || "single-token weights != 1".into())?;
    let p = |id| store.tensor(id);
    let f = layer_norm(token.row(0), p(m.norm.gamma), p(m.norm.beta), m.norm.eps);
    let v = affine(&f, p(m.value.weight), p(m.value.bias.unwrap()));
    let expected = affine(&v, p(m.pool.weight), p(m.pool.bias.unwrap()));
    let single = (0..3)
        .flat_map(|q| (0..2).map(move |j| (q, j)))
        .map(|(q, j)| (pooled.at2(q, j) - expected[j]).abs())
        .fold(0.0, f64::max);
    ensure(single < 1e-7, || format!("single token deviation {single:e}"))?;

    let mut perm: f64 = 0.0;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
        let heads = [1, 2, 4][i as usize % 3];
        let (store, m) = build_mhaap(3, heads, 8, 4, i);
        let n = rng.random_range(1..16);
        let tokens = rand_tensor(&mut rng, &[n, 8]);
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let permuted = Tensor::new(vec![n, 8], order.iter().flat_map(|&r| tokens.row(r).to_vec()).collect());
        perm = perm.max(run_mhaap(&store, &m, &tokens).0.max_abs_diff(&run_mhaap(&store, &m, &permuted).0));
    }
    ensure(perm < 1e-5, || format!("permutation deviation {perm:e}"))?;
    Ok(format!(
        "DFRL and mixer identities exact; single token {single:e}; 100 permutations max {perm:e}"
    ))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let report = gradient_check_suite(&GradModule::ALL, &GradcheckConfig::default()).map_err(err)?;
    let worst = report
        .modules
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .ok_or("no modules checked")?;
    ensure(report.passed && worst.max_rel_error < 1e-4, || {
        format!("{} max rel error {:e} at {}", worst.module, worst.max_rel_error, worst.worst)
    })?;
    within(t.elapsed(), Duration::from_secs(120))?;
    let coords: usize = report.modules.iter().map(|m| m.coords_checked).sum();
    Ok(format!(
        "{} modules, {coords} coordinates, worst {:e} ({})",
        report.modules.len(),
        worst.max_rel_error,
        worst.module
    ))
}

/// 8 ladders x 6 rungs; SMR from the simulated machine population, SUR from
/// single-scorer (PSNR) proxy labels.
fn overfit_fixture() -> Result<Dataset, String> {
    let d = SyntheticData::generate(&SyntheticSpec::default(), Exec::Sequential).map_err(err)?;
    let labels = d.proxy_targets(&[BuiltinScorer::Psnr]).map_err(err)?;
    d.dataset(&labels, &ModelConfig::tiny().backbone, Exec::Sequential).map_err(err)
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let data = overfit_fixture()?;
    let net = Network::new(ModelConfig::tiny(), 0).map_err(err)?;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 16,
        max_steps: 500,
        lr_schedule: LrSchedule::Cosine,
        ..Default::default()
    };
    let out = fit(&net, &data, None, &cfg, Exec::Sequential).map_err(err)?;
    let trained = Network::with_params(net.config().clone(), out.last).map_err(err)?;
    let m = evaluate(&trained, &data, Exec::Sequential).map_err(err)?;
    let combined = m.combined(true, true);
    let detail = format!(
        "{} steps, train MAE sur {:.4} + smr {:.4} = {combined:.4}",
        out.steps,
        m.mae_sur.unwrap_or(f64::NAN),
        m.mae_smr.unwrap_or(f64::NAN)
    );
    ensure(combined < 0.05, || detail.clone())?;
    within(t.elapsed(), Duration::from_secs(600))?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_7() -> Outcome {
    let cfg = ModelConfig::tiny();
    let eval = SyntheticData::generate(
        &SyntheticSpec {
            ladders: 64,
            flip_rate: 0.05,
            ..Default::default()
        },
        Exec::Parallel,
    )
    .map_err(err)?;
    let gt = eval
        .dataset(&eval.ground_truth().map_err(err)?, &cfg.backbone, Exec::Parallel)
        .map_err(err)?;
    // A separate corpus with proxy SUR labels stands in for the pre-training set.
    let corpus = SyntheticData::generate(
        &SyntheticSpec {
            ladders: 128,
            flip_rate: 0.05,
            seed: 1000,
            ..Default::default()
        },
        Exec::Parallel,
    )
    .map_err(err)?;
    let proxy = corpus
        .dataset(
            &corpus.proxy_targets(&[BuiltinScorer::Psnr, BuiltinScorer::Ssim]).map_err(err)?,
            &cfg.backbone,
            Exec::Parallel,
        )
        .map_err(err)?;
    let psplit = split_dataset(&proxy.ladder_ids(), &SplitSpec::default()).map_err(err)?;
    let (ptrain, pval) = (proxy.subset(&psplit.train), proxy.subset(&psplit.val));

    let (mut scratch, mut finetuned) = (Vec::new(), Vec::new());
    for seed in 0..3u64 {
        let split = split_dataset(&gt.ladder_ids(), &SplitSpec { seed, ..Default::default() }).map_err(err)?;
        let (train, val) = (gt.subset(&split.train), gt.subset(&split.val));
        let tc = TrainConfig {
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            batch_size: 8,
            max_steps: 300,
            patience: 0,
            seed,
            ..Default::default()
        };
        let fresh = Network::new(cfg.clone(), seed).map_err(err)?;
        let s = fit(&fresh, &train, Some(&val), &tc, Exec::Parallel).map_err(err)?;
        scratch.push(s.best_val.ok_or("no validation score")?);

        let ptc = TrainConfig { max_steps: 500, ..tc.clone() };
        let pre = fit(&fresh, &ptrain, Some(&pval), &ptc, Exec::Parallel).map_err(err)?;
        let pre_net = Network::with_params(cfg.clone(), pre.best).map_err(err)?;
        let mut warm = Network::new(cfg.clone(), seed).map_err(err)?;
        warm_start(&mut warm, &pre_net).map_err(err)?;
        let f = fit(&warm, &train, Some(&val), &tc, Exec::Parallel).map_err(err)?;
        finetuned.push(f.best_val.ok_or("no validation score")?);
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/");
    let (ms, mf) = (median(scratch.clone()), median(finetuned.clone()));
    let detail = format!(
        "val MAE_sur+MAE_smr median finetuned {mf:.4} vs scratch {ms:.4} (seeds {} vs {})",
        fmt(&finetuned),
        fmt(&scratch)
    );
    ensure(mf <= ms, || detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let data = overfit_fixture()?;
    let splits = [DatasetSplits {
        name: "overfit".into(),
        train: &data,
        val: None,
        test: &data,
    }];
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        max_steps: 3,
        ..Default::default()
    };
    let rows = run_ablation_matrix(&Variant::ABLATIONS, &splits, &ModelConfig::tiny(), &cfg, Exec::Parallel).map_err(err)?;
    ensure(rows.len() == 6, || format!("{} rows", rows.len()))?;
    if let Some(r) = rows.iter().find(|r| r.error.is_some() || r.mae_sur.is_none()) {
        return Err(format!("{} failed: {:?}", r.variant, r.error));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut net = Network::new(ModelConfig::tiny().with_variant(Variant::NoDfrl), 8).map_err(err)?;
    randomize(net.store_mut(), &mut rng, 0.3);
    for _ in 0..4 {
        let (a, b) = (rand_tensor(&mut rng, &[3, 64, 64]), rand_tensor(&mut rng, &[3, 64, 64]));
        let d = net.diff_features(&a, &b).map_err(err)?;
        ensure(d.refined == d.raw, || "no_dfrl refined diffs differ from raw".into())?;
    }
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.3}", r.variant, r.mae_sur.unwrap_or(f64::NAN) + r.mae_smr.unwrap_or(f64::NAN)))
        .collect();
    Ok(format!("6 variants ran [{}]; no_dfrl refined == raw on 4 probes", summary.join(", ")))
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn pipeline_outputs(dir: &Path, cfg: &RunConfig, data: &DataArgs) -> Result<Vec<(String, Vec<u8>)>, String> {
    let run = dir.join("run");
    let _ = std::fs::remove_dir_all(&run);
    commands::train(Phase::Pretrain, data, None, cfg, None, &run, Exec::Sequential).map_err(err)?;
    let preds = run.join("predictions.csv");
    commands::predict(&run.join("checkpoint.json"), &data.manifest, None, &preds, Exec::Sequential).map_err(err)?;
    ["checkpoint.json", "report.json", "predictions.csv"]
        .iter()
        .map(|f| Ok((f.to_string(), read(&run.join(f))?)))
        .collect()
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let spec = SyntheticSpec {
        ladders: 10,
        rungs: 3,
        ..Default::default()
    };
    commands::synth(&spec, &dir.join("data"), Exec::Sequential).map_err(err)?;
    let manifest = dir.join("data/manifest.json");
    for (src, kind, out) in [("human.csv", RatioKind::Sur, "sur.csv"), ("machine.csv", RatioKind::Smr, "smr.csv")] {
        commands::aggregate(&dir.join("data").join(src), &manifest, kind, &dir.join(out)).map_err(err)?;
    }
    let data = DataArgs {
        manifest,
        sur: Some(dir.join("sur.csv")),
        smr: Some(dir.join("smr.csv")),
        split: None,
    };
    let mut cfg = RunConfig {
        model: ModelConfig::tiny(),
        ..Default::default()
    };
    cfg.train.max_steps = 4;
    cfg.train.batch_size = 4;
    cfg.train.seed = 9;
    cfg.train.workers = 0;
    let first = pipeline_outputs(dir, &cfg, &data)?;
    let second = pipeline_outputs(dir, &cfg, &data)?;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure(a == b, || format!("{name} differs between reruns"))?;
    }
    let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
    Ok(format!("pretrain + predict rerun: checkpoint, report, predictions identical ({bytes} bytes)"))
}

fn criterion_10() -> Outcome {
    let w = LossWeights::default();
    let loss = |p: (f64, f64), t: Target, w: &LossWeights| {
        joint_loss(&Prediction { sur: p.0, smr: p.1 }, &t, w).map_err(err)
    };
    let exact = loss((0.3, 0.8), Target { sur: Some(0.3), smr: Some(0.8) }, &w)?;
    ensure(exact == 0.0, || format!("pred = target gives {exact}"))?;
    let both = loss((0.5, 0.5), Target { sur: Some(1.0), smr: Some(0.0) }, &w)?;
    ensure(both == 0.5, || format!("unmasked case gives {both}"))?;
    let masked_w = LossWeights { smr_mask: false, ..w };
    let masked = loss((0.3, 0.9), Target { sur: Some(0.7), smr: None }, &masked_w)?;
    // |0.3 - 0.7| is not exactly 0.4 in binary; the result must be the
    // correctly rounded evaluation of 0.5 * |0.3 - 0.7|.
    let reference = 0.5 * (0.7f64 - 0.3).abs();
    ensure(masked == reference && (masked - 0.2).abs() <= f64::EPSILON, || {
        format!("masked case gives {masked:?}")
    })?;
    Ok(format!("0 / 0.5 / {masked:?}"))
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n}: {status} — {detail} ({:.1?})", t.elapsed());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

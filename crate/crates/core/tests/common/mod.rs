//! Test-side oracles shared by the integration tests and the acceptance
//! harness. None of these call into the code they check.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sursmr_core::autograd::Graph;
use sursmr_core::labelgen::Polarity;
use sursmr_core::model::mhaap::Mhaap;
use sursmr_core::model::*;
use sursmr_core::quality::{QualityLadder, Rung, SatisfactionRecord, SubjectKind};
use sursmr_core::tensor::Tensor;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng, scale: f64) {
    for t in store.tensors_mut() {
        for v in &mut t.data {
            *v = rng.random_range(-scale..scale);
        }
    }
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// `x W + b` with `W` stored `[in, out]`.
pub fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (fan_in, fan_out) = w.dims2();
    assert_eq!(x.len(), fan_in);
    (0..fan_out)
        .map(|o| b.data[o] + (0..fan_in).map(|i| x[i] * w.at2(i, o)).sum::<f64>())
        .collect()
}

pub fn layer_norm(x: &[f64], gamma: &Tensor, beta: &Tensor, eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) * inv * gamma.data[i] + beta.data[i])
        .collect()
}

pub fn build_mhaap(queries: usize, heads: usize, channels: usize, out: usize, seed: u64) -> (ParamStore, Mhaap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let config = MhaapConfig {
        target_spatial: None,
        queries,
        heads,
        out_channels: out,
    };
    let m = Mhaap::new(&mut store, &mut Init { rng: &mut rng }, &config, channels, (1, 1), 1e-5).unwrap();
    randomize(&mut store, &mut rng, 1.0);
    (store, m)
}

pub fn run_mhaap(store: &ParamStore, m: &Mhaap, tokens: &Tensor) -> (Tensor, Vec<Tensor>) {
    let mut g = Graph::new(store);
    let x = g.input(tokens.clone());
    let out = m.forward_tokens(&mut g, x);
    let attn = out.attention.iter().map(|&a| g.value(a).clone()).collect();
    (g.value(out.pooled).clone(), attn)
}

/// Explicit loops over every query/token pair.
pub fn brute_force_mhaap(store: &ParamStore, m: &Mhaap, tokens: &Tensor) -> Vec<Vec<f64>> {
    let (n, c) = tokens.dims2();
    let p = |id| store.tensor(id);
    let normed: Vec<Vec<f64>> = (0..n)
        .map(|i| layer_norm(tokens.row(i), p(m.norm.gamma), p(m.norm.beta), m.norm.eps))
        .collect();
    let keys: Vec<Vec<f64>> = normed
        .iter()
        .map(|f| affine(f, p(m.key.weight), p(m.key.bias.unwrap())))
        .collect();
    let values: Vec<Vec<f64>> = normed
        .iter()
        .map(|f| affine(f, p(m.value.weight), p(m.value.bias.unwrap())))
        .collect();
    let q = p(m.query);
    let d = c / m.heads;
    let scale = ((c / m.heads) as f64).sqrt();
    let (y, _) = q.dims2();
    (0..y)
        .map(|qi| {
            let mut attended = vec![0.0; c];
            for h in 0..m.heads {
                let cols = h * d..(h + 1) * d;
                let logits: Vec<f64> = (0..n)
                    .map(|t| cols.clone().map(|j| q.at2(qi, j) * keys[t][j]).sum::<f64>() / scale)
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for t in 0..n {
                    for j in cols.clone() {
                        attended[j] += exps[t] / z * values[t][j];
                    }
                }
            }
            affine(&attended, p(m.pool.weight), p(m.pool.bias.unwrap()))
        })
        .collect()
}


pub fn ladder(id: &str, k: u32) -> QualityLadder {
    let rungs = (1..=k)
        .map(|i| Rung {
            rung_index: i,
            q_param: i as i64,
            image_ref: format!("{id}_r{i}.png"),
        })
        .collect();
    QualityLadder::new(id, format!("{id}.png"), "test", rungs).unwrap()
}

/// A random complete panel: every subject rates every rung of every ladder.
/// Returned in a shuffled order.
pub struct RecordSet {
    pub ladders: Vec<QualityLadder>,
    pub kind: SubjectKind,
    pub records: Vec<SatisfactionRecord>,
}

pub fn random_record_set(rng: &mut ChaCha8Rng, max_population: usize, max_rungs: u32) -> RecordSet {
    let kind = if rng.random_bool(0.5) { SubjectKind::Human } else { SubjectKind::Machine };
    let n_ladders = rng.random_range(1..=3);
    let mut ladders = Vec::new();
    let mut records = Vec::new();
    for l in 0..n_ladders {
        let id = format!("L{l}");
        let k = rng.random_range(1..=max_rungs);
        let population = rng.random_range(1..=max_population);
        let p_sat = rng.random_range(0.0..=1.0);
        for s in 0..population {
            for r in 1..=k {
                records.push(SatisfactionRecord {
                    ladder_id: id.clone(),
                    rung_index: r,
                    subject_id: format!("s{s}"),
                    subject_kind: kind,
                    satisfied: rng.random_bool(p_sat),
                });
            }
        }
        ladders.push(ladder(&id, k));
    }
    rand::seq::SliceRandom::shuffle(records.as_mut_slice(), rng);
    RecordSet { ladders, kind, records }
}

/// `(satisfied, total)` per `(ladder, rung)` by direct counting.
pub fn brute_force_counts(records: &[SatisfactionRecord]) -> BTreeMap<(String, u32), (usize, usize)> {
    let mut out: BTreeMap<(String, u32), (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = out.entry((r.ladder_id.clone(), r.rung_index)).or_default();
        if r.satisfied {
            e.0 += 1;
        }
        e.1 += 1;
    }
    out
}

/// Raw scores per scorer for one ladder, with polarities.
pub struct RandomScores {
    pub polarities: Vec<Polarity>,
    /// `scores[i][k]`: scorer `i`, rung `k + 1`.
    pub scores: Vec<Vec<f64>>,
}

/// `n` scorers over `k` rungs; each scorer's range is at least 0.05 so the
/// ladder is non-degenerate.
pub fn random_scores(rng: &mut ChaCha8Rng, n: usize, k: usize, monotone: bool) -> RandomScores {
    let polarities: Vec<Polarity> = (0..n)
        .map(|_| if rng.random_bool(0.5) { Polarity::HigherBetter } else { Polarity::LowerBetter })
        .collect();
    let scores = polarities
        .iter()
        .map(|p| {
            let mut s: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            if k > 1 {
                s[0] = -5.5;
                s[k - 1] = 5.5;
            }
            if monotone {
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if *p == Polarity::HigherBetter {
                    s.reverse();
                }
            }
            s
        })
        .collect();
    RandomScores { polarities, scores }
}

/// Eq.-(3)-style proxy label by direct evaluation: reverse lower-is-better
/// scores, min-max over the ladder (constant ladders give 1), average.
pub fn proxy_oracle(scores: &RandomScores, eps_deg: f64) -> Vec<f64> {
    let k = scores.scores[0].len();
    let mut acc = vec![0.0; k];
    for (s, p) in scores.scores.iter().zip(&scores.polarities) {
        let canon: Vec<f64> = match p {
            Polarity::HigherBetter => s.clone(),
            Polarity::LowerBetter => s.iter().map(|v| 1.0 - v).collect(),
        };
        let lo = canon.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = canon.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, v) in acc.iter_mut().zip(&canon) {
            *a += if hi - lo < eps_deg { 1.0 } else { (v - lo) / (hi - lo) };
        }
    }
    acc.iter().map(|a| a / scores.scores.len() as f64).collect()
}

/// Closed-form SSIM of two constant images: the contrast/structure term is
/// `C2 / C2`, leaving the luminance term.
pub fn ssim_constant_pair(mu_x: f64, mu_y: f64) -> f64 {
    let c1 = (0.01f64 * 255.0).powi(2);
    (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Central finite-difference verification of analytic parameter gradients.
//!
//! Relative error per coordinate is `|a - f| / max(|a|, |f|, floor)` where
//! `a` is analytic, `f` the central difference and `floor` keeps coordinates
//! with near-zero gradient from amplifying rounding noise.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Grads, Graph, Var};
use crate::error::{Error, Result};
use crate::model::config::{BackboneConfig, MhaapConfig, MixerConfig, ModelConfig, TransformerConfig, Variant};
use crate::model::dfrl::DfrlStage;
use crate::model::fusion::{MlpFusion, TransformerFusion};
use crate::model::head::Head;
use crate::model::loss::{joint_loss_var, LossWeights, Target};
use crate::model::mhaap::{GapPool, Mhaap};
use crate::model::mixer::Mixer;
use crate::model::{Init, Network, ParamStore};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradModule {
    Dfrl,
    Mhaap,
    Mixer,
    Head,
    Loss,
    Backbone,
    GapPool,
    TransformerFusion,
    MlpFusion,
    Network,
}

impl GradModule {
    pub const ALL: [GradModule; 10] = [
        GradModule::Dfrl,
        GradModule::Mhaap,
        GradModule::Mixer,
        GradModule::Head,
        GradModule::Loss,
        GradModule::Backbone,
        GradModule::GapPool,
        GradModule::TransformerFusion,
        GradModule::MlpFusion,
        GradModule::Network,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradModule::Dfrl => "dfrl",
            GradModule::Mhaap => "mhaap",
            GradModule::Mixer => "mixer",
            GradModule::Head => "head",
            GradModule::Loss => "loss",
            GradModule::Backbone => "backbone",
            GradModule::GapPool => "gap_pool",
            GradModule::TransformerFusion => "transformer_fusion",
            GradModule::MlpFusion => "mlp_fusion",
            GradModule::Network => "network",
        }
    }
}

impl fmt::Display for GradModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GradModule::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gradcheck module {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Coordinates checked per parameter tensor; 0 checks all of them.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            max_coords: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub module: String,
    pub params: usize,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub modules: Vec<ModuleReport>,
    pub passed: bool,
}

pub type ObjectiveFn<'a> = Box<dyn Fn(&mut Graph) -> Result<Var> + 'a>;

/// A module instance reduced to a scalar objective of its parameters.
pub struct Objective<'a> {
    pub store: ParamStore,
    pub eval: ObjectiveFn<'a>,
}

/// Compares analytic and central-difference gradients of `obj`. `tamper`
/// may perturb the analytic gradients (used as a negative control).
pub fn check_objective(name: &str, obj: &Objective<'_>, cfg: &GradcheckConfig, tamper: Option<&dyn Fn(&mut Grads)>) -> Result<ModuleReport> {
    let value = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let out = (obj.eval)(&mut g)?;
        Ok(g.value(out).data[0])
    };
    let mut analytic = {
        let mut g = Graph::new(&obj.store);
        let out = (obj.eval)(&mut g)?;
        g.backward(out)
    };
    if let Some(t) = tamper {
        t(&mut analytic);
    }
    let mut rng = seed::rng(cfg.seed, &[seed::hash_str(name)]);
    let mut probe = obj.store.clone();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (pi, t) in obj.store.tensors().iter().enumerate() {
        let n = t.numel();
        let coords: Vec<usize> = if cfg.max_coords == 0 || cfg.max_coords >= n {
            (0..n).collect()
        } else {
            (0..cfg.max_coords).map(|_| rng.random_range(0..n)).collect()
        };
        for e in coords {
            let orig = t.data[e];
            probe.tensors_mut()[pi].data[e] = orig + cfg.step;
            let plus = value(&probe)?;
            probe.tensors_mut()[pi].data[e] = orig - cfg.step;
            let minus = value(&probe)?;
            probe.tensors_mut()[pi].data[e] = orig;
            let fd = (plus - minus) / (2.0 * cfg.step);
            let an = analytic.0[pi].data[e];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(cfg.floor);
            checked += 1;
            if rel.is_nan() || rel > worst.0 {
                worst = (rel, format!("{}[{e}]", obj.store.names()[pi]));
            }
        }
    }
    Ok(ModuleReport {
        module: name.to_string(),
        params: obj.store.len(),
        coords_checked: checked,
        max_rel_error: worst.0,
        worst: worst.1,
        passed: worst.0 < cfg.tolerance,
    })
}

fn random(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

/// Contracts any node to a scalar with fixed, non-uniform weights.
pub fn probe(g: &mut Graph, x: Var) -> Var {
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect());
    let wv = g.input(w);
    let m = g.mul(x, wv);
    g.sum(m)
}

/// Randomizes every parameter so zero-initialized layers are exercised too.
fn jitter(store: &mut ParamStore, rng: &mut impl Rng) {
    for t in store.tensors_mut() {
        for v in &mut t.data {
            *v += rng.random_range(-0.3..0.3);
        }
    }
}

/// Micro network (all layer widths at most 8 except derived concatenations).
pub fn micro_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        backbone: BackboneConfig {
            stage_channels: [2, 2, 4, 4],
            stage_depths: [1, 1, 1, 1],
            input_size: (32, 32),
            head_dim: 2,
            mlp_ratio: 2,
            conv_expansion: 2,
            dw_kernel: 3,
            ..BackboneConfig::default()
        },
        mhaap: MhaapConfig {
            target_spatial: None,
            queries: 2,
            heads: 2,
            out_channels: 4,
        },
        mixer: MixerConfig {
            layers: 2,
            token_hidden: Some(6),
            channel_hidden: Some(8),
        },
        transformer: TransformerConfig {
            layers: 1,
            heads: 2,
            mlp_ratio: 2,
        },
        norm_eps: 1e-5,
    }
}

/// Builds the objective for one module at tiny dimensions.
pub fn module_objective(module: GradModule, seed_value: u64) -> Result<Objective<'static>> {
    let mut rng = seed::rng(seed_value, &[seed::hash_str(module.name())]);
    let mut init_rng = seed::rng(seed_value, &[seed::hash_str("init"), seed::hash_str(module.name())]);
    let mut init = Init { rng: &mut init_rng };
    let mut store = ParamStore::new();
    let eps = 1e-5;
    let obj = match module {
        GradModule::Dfrl => {
            let stage = DfrlStage::new(&mut store, &mut init, "dfrl", 3, 3);
            let x = random(&mut rng, &[3, 4, 4], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let y = stage.forward(g, xv);
                    Ok(probe(g, y))
                }),
            }
        }
        GradModule::Mhaap => {
            let cfg = MhaapConfig {
                target_spatial: Some((2, 2)),
                queries: 2,
                heads: 2,
                out_channels: 3,
            };
            let m = Mhaap::new(&mut store, &mut init, &cfg, 6, (2, 2), eps)?;
            let maps = [random(&mut rng, &[2, 4, 4], 1.0), random(&mut rng, &[4, 2, 2], 1.0)];
            Objective {
                store,
                eval: Box::new(move |g| {
                    let vars: Vec<Var> = maps.iter().map(|t| g.input(t.clone())).collect();
                    let out = m.forward(g, &vars);
                    Ok(probe(g, out.pooled))
                }),
            }
        }
        GradModule::GapPool => {
            let cfg = MhaapConfig {
                target_spatial: Some((2, 2)),
                queries: 2,
                heads: 1,
                out_channels: 3,
            };
            let m = GapPool::new(&mut store, &mut init, &cfg, 6, (2, 2));
            let maps = [random(&mut rng, &[2, 4, 4], 1.0), random(&mut rng, &[4, 2, 2], 1.0)];
            Objective {
                store,
                eval: Box::new(move |g| {
                    let vars: Vec<Var> = maps.iter().map(|t| g.input(t.clone())).collect();
                    let out = m.forward(g, &vars);
                    Ok(probe(g, out))
                }),
            }
        }
        GradModule::Mixer => {
            let cfg = MixerConfig {
                layers: 2,
                token_hidden: None,
                channel_hidden: None,
            };
            let m = Mixer::new(&mut store, &mut init, &cfg, 2, 4, eps);
            let x = random(&mut rng, &[2, 4], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let y = m.forward(g, xv);
                    Ok(probe(g, y))
                }),
            }
        }
        GradModule::TransformerFusion => {
            let cfg = TransformerConfig {
                layers: 1,
                heads: 2,
                mlp_ratio: 2,
            };
            let m = TransformerFusion::new(&mut store, &mut init, &cfg, 4, eps);
            let x = random(&mut rng, &[2, 4], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let y = m.forward(g, xv);
                    Ok(probe(g, y))
                }),
            }
        }
        GradModule::MlpFusion => {
            let m = MlpFusion::new(&mut store, &mut init, 2, 4);
            let x = random(&mut rng, &[2, 4], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let y = m.forward(g, xv);
                    Ok(probe(g, y))
                }),
            }
        }
        GradModule::Head => {
            let h = Head::new(&mut store, &mut init, 8);
            let x = random(&mut rng, &[1, 8], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let y = h.forward(g, xv);
                    Ok(probe(g, y))
                }),
            }
        }
        GradModule::Loss => {
            // Prediction as a free [1, 2] leaf kept away from the targets' kinks.
            let id = store.add("pred", Tensor::new(vec![1, 2], vec![0.3, 0.8]));
            let target = Target {
                sur: Some(0.6),
                smr: Some(0.1),
            };
            let weights = LossWeights {
                alpha: 0.7,
                beta: 0.4,
                ..Default::default()
            };
            Objective {
                store,
                eval: Box::new(move |g| {
                    let p = g.param(id);
                    joint_loss_var(g, p, &target, &weights)
                }),
            }
        }
        GradModule::Backbone => {
            let cfg = micro_config(Variant::Full);
            let bb = crate::model::backbone::Backbone::new(&mut store, &mut init, &cfg.backbone, eps);
            let x = random(&mut rng, &[3, 32, 32], 1.0);
            Objective {
                store,
                eval: Box::new(move |g| {
                    let xv = g.input(x.clone());
                    let maps = bb.forward(g, xv);
                    let parts: Vec<Var> = maps
                        .iter()
                        .map(|&m| {
                            let t = g.to_tokens(m);
                            let (r, c) = g.value(t).dims2();
                            g.reshape(t, &[1, r * c])
                        })
                        .collect();
                    let cat = g.concat_cols(&parts);
                    Ok(probe(g, cat))
                }),
            }
        }
        GradModule::Network => {
            let net = Network::new(micro_config(Variant::Full), seed_value)?;
            let a = random(&mut rng, &[3, 32, 32], 1.0);
            let b = random(&mut rng, &[3, 32, 32], 1.0);
            let target = Target {
                sur: Some(0.9),
                smr: Some(0.05),
            };
            let store = net.store().clone();
            Objective {
                store,
                eval: Box::new(move |g| {
                    let trace = net.trace(g, &a, &b)?;
                    joint_loss_var(g, trace.output, &target, &LossWeights::default())
                }),
            }
        }
    };
    let mut obj = obj;
    if !matches!(module, GradModule::Loss) {
        jitter(&mut obj.store, &mut rng);
    }
    Ok(obj)
}

pub fn gradient_check_suite(modules: &[GradModule], cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if modules.is_empty() {
        return Err(Error::InvalidArgument("no modules selected".into()));
    }
    if !(cfg.step > 0.0 && cfg.tolerance > 0.0 && cfg.floor > 0.0) {
        return Err(Error::InvalidConfig("step, tolerance and floor must be positive".into()));
    }
    let reports = modules
        .iter()
        .map(|&m| check_objective(m.name(), &module_objective(m, cfg.seed)?, cfg, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        config: cfg.clone(),
        passed: reports.iter().all(|r| r.passed),
        modules: reports,
    })
}

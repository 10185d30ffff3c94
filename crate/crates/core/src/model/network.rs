//! End-to-end SUR/SMR predictor: a shared (Siamese) backbone extracts
//! multi-scale features from the original and the compressed image, their
//! per-stage differences are refined, aggregated by attention pooling, fused
//! with a regression token and regressed to two ratios.

use super::backbone::Backbone;
use super::config::{ModelConfig, Variant};
use super::dfrl::Dfrl;
use super::fusion::{MlpFusion, TransformerFusion};
use super::head::Head;
use super::layers::Linear;
use super::loss::{joint_loss_var, LossWeights, Prediction, Target};
use super::mhaap::{GapPool, Mhaap};
use super::mixer::Mixer;
use super::params::{Init, ParamStore};
use crate::autograd::{Grads, Graph, Var};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Per-stage `[c_l, H_l, W_l]` maps for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid(pub Vec<Tensor>);

/// Raw differences `F0 - Fq` and their refined counterparts (equal to the raw
/// ones for variants without refinement).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffFeatures {
    pub raw: Vec<Tensor>,
    pub refined: Vec<Tensor>,
}

/// Element-wise `f0 - fq` per stage.
pub fn diff_features(f0: &FeaturePyramid, fq: &FeaturePyramid) -> Result<Vec<Tensor>> {
    if f0.0.len() != fq.0.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} stages vs {} stages",
            f0.0.len(),
            fq.0.len()
        )));
    }
    f0.0
        .iter()
        .zip(&fq.0)
        .enumerate()
        .map(|(l, (a, b))| {
            if a.shape != b.shape {
                return Err(Error::DimensionMismatch(format!(
                    "stage {l}: {:?} vs {:?}",
                    a.shape, b.shape
                )));
            }
            let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
            Ok(Tensor::new(a.shape.clone(), data))
        })
        .collect()
}

#[derive(Debug, Clone)]
enum Aggregator {
    Mhaap(Mhaap),
    Gap(GapPool),
    Pooled(Linear),
}

#[derive(Debug, Clone)]
enum Fusion {
    Mixer(Mixer),
    Transformer(TransformerFusion),
    Mlp(MlpFusion),
    Identity,
}

/// Graph nodes of one forward pass.
pub struct Trace {
    pub f0: Vec<Var>,
    pub fq: Vec<Var>,
    pub diffs: Vec<Var>,
    pub refined: Vec<Var>,
    /// `[Y, Z]` pooled representation (absent for the pooled-difference variant).
    pub pooled: Option<Var>,
    /// Per-head attention maps when attention pooling is used.
    pub attention: Vec<Var>,
    /// `[1, Z]` fused token.
    pub fused: Var,
    /// `[1, 2]` sigmoid outputs `(sur, smr)`.
    pub output: Var,
}

#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    store: ParamStore,
    backbone: Backbone,
    dfrl: Option<Dfrl>,
    aggregator: Aggregator,
    fusion: Fusion,
    head: Head,
}

impl Network {
    /// Builds and initializes a network; identical `(config, seed)` pairs give
    /// bit-identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed, &[seed::hash_str("init")]);
        let mut init = Init { rng: &mut rng };
        let mut store = ParamStore::new();
        let eps = config.norm_eps;
        let bb = &config.backbone;
        let backbone = Backbone::new(&mut store, &mut init, bb, eps);
        let dfrl = config
            .variant
            .uses_dfrl()
            .then(|| Dfrl::new(&mut store, &mut init, &bb.stage_channels));
        let c = config.concat_channels();
        let z = config.mhaap.out_channels;
        let target = config.mhaap_target();
        let aggregator = match config.variant {
            Variant::PooledDiff => Aggregator::Pooled(Linear::new(&mut store, &mut init, "pooled.proj", c, z, true)),
            Variant::NoMhaap => Aggregator::Gap(GapPool::new(&mut store, &mut init, &config.mhaap, c, target)),
            _ => Aggregator::Mhaap(Mhaap::new(&mut store, &mut init, &config.mhaap, c, target, eps)?),
        };
        let fusion = match config.variant {
            Variant::PooledDiff => Fusion::Identity,
            Variant::TransformerFusion => {
                Fusion::Transformer(TransformerFusion::new(&mut store, &mut init, &config.transformer, z, eps))
            }
            Variant::MlpFusion => Fusion::Mlp(MlpFusion::new(&mut store, &mut init, config.mhaap.queries, z)),
            _ => Fusion::Mixer(Mixer::new(&mut store, &mut init, &config.mixer, config.mhaap.queries, z, eps)),
        };
        let head = Head::new(&mut store, &mut init, z);
        Ok(Network {
            config,
            store,
            backbone,
            dfrl,
            aggregator,
            fusion,
            head,
        })
    }

    /// Rebuilds the architecture for `config` and installs `store`, which must
    /// hold exactly the same parameter names and shapes.
    pub fn with_params(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let mut net = Network::new(config, 0)?;
        if net.store.names() != store.names() {
            return Err(Error::ConfigMismatch("parameter names differ from the architecture".into()));
        }
        for ((name, a), b) in net.store.names().iter().zip(net.store.tensors()).zip(store.tensors()) {
            if a.shape != b.shape {
                return Err(Error::ConfigMismatch(format!(
                    "{name}: shape {:?} vs expected {:?}",
                    b.shape, a.shape
                )));
            }
        }
        net.store = store;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (h, w) = self.config.backbone.input_size;
        if image.shape != [3, h, w] {
            return Err(Error::DimensionMismatch(format!(
                "image tensor {:?}, network expects [3, {h}, {w}]",
                image.shape
            )));
        }
        if !image.is_finite() {
            return Err(Error::InvalidArgument("image tensor has non-finite values".into()));
        }
        Ok(())
    }

    /// Records a full forward pass on `g`.
    pub fn trace(&self, g: &mut Graph, original: &Tensor, compressed: &Tensor) -> Result<Trace> {
        self.check_input(original)?;
        self.check_input(compressed)?;
        let x0 = g.input(original.clone());
        let xq = g.input(compressed.clone());
        let f0 = self.backbone.forward(g, x0);
        let fq = self.backbone.forward(g, xq);
        let diffs: Vec<Var> = f0.iter().zip(&fq).map(|(&a, &b)| g.sub(a, b)).collect();
        let refined = match &self.dfrl {
            Some(d) => d.forward(g, &diffs),
            None => diffs.clone(),
        };
        let mut attention = Vec::new();
        let pooled = match &self.aggregator {
            Aggregator::Pooled(proj) => {
                let means: Vec<Var> = refined
                    .iter()
                    .map(|&m| {
                        // Signed differences largely cancel under spatial
                        // averaging, so the magnitude is pooled.
                        let a = g.abs(m);
                        let t = g.to_tokens(a);
                        g.mean_rows(t)
                    })
                    .collect();
                let cat = g.concat_cols(&means);
                let fused = proj.forward(g, cat);
                let output = self.head.forward(g, fused);
                return Ok(Trace {
                    f0,
                    fq,
                    diffs,
                    refined,
                    pooled: None,
                    attention,
                    fused,
                    output,
                });
            }
            Aggregator::Gap(gap) => gap.forward(g, &refined),
            Aggregator::Mhaap(m) => {
                let maps: Vec<Var> = if self.config.variant == Variant::AllFeatures {
                    (0..4).flat_map(|l| [f0[l], fq[l], refined[l]]).collect()
                } else {
                    refined.clone()
                };
                let out = m.forward(g, &maps);
                attention = out.attention;
                out.pooled
            }
        };
        let fused = match &self.fusion {
            Fusion::Mixer(m) => m.forward(g, pooled),
            Fusion::Transformer(t) => t.forward(g, pooled),
            Fusion::Mlp(m) => m.forward(g, pooled),
            Fusion::Identity => pooled,
        };
        let output = self.head.forward(g, fused);
        Ok(Trace {
            f0,
            fq,
            diffs,
            refined,
            pooled: Some(pooled),
            attention,
            fused,
            output,
        })
    }

    pub fn predict(&self, original: &Tensor, compressed: &Tensor) -> Result<Prediction> {
        let mut g = Graph::new(&self.store);
        let trace = self.trace(&mut g, original, compressed)?;
        let out = g.value(trace.output);
        Ok(Prediction {
            sur: out.data[0],
            smr: out.data[1],
        })
    }

    /// Loss value, prediction and parameter gradients for one rung.
    pub fn loss_and_grads(
        &self,
        original: &Tensor,
        compressed: &Tensor,
        target: &Target,
        weights: &LossWeights,
    ) -> Result<(f64, Prediction, Grads)> {
        let mut g = Graph::new(&self.store);
        let trace = self.trace(&mut g, original, compressed)?;
        let loss = joint_loss_var(&mut g, trace.output, target, weights)?;
        let out = g.value(trace.output);
        let pred = Prediction {
            sur: out.data[0],
            smr: out.data[1],
        };
        let value = g.value(loss).data[0];
        Ok((value, pred, g.backward(loss)))
    }

    pub fn extract_features(&self, image: &Tensor) -> Result<FeaturePyramid> {
        self.check_input(image)?;
        let mut g = Graph::new(&self.store);
        let x = g.input(image.clone());
        let maps = self.backbone.forward(&mut g, x);
        Ok(FeaturePyramid(maps.iter().map(|&m| g.value(m).clone()).collect()))
    }

    pub fn diff_features(&self, original: &Tensor, compressed: &Tensor) -> Result<DiffFeatures> {
        let mut g = Graph::new(&self.store);
        let trace = self.trace(&mut g, original, compressed)?;
        let grab = |vars: &[Var]| vars.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>();
        Ok(DiffFeatures {
            raw: grab(&trace.diffs),
            refined: grab(&trace.refined),
        })
    }
}

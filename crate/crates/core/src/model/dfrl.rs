//! Residual refinement of per-stage difference features:
//! `F* = F + Conv3(GELU(Conv2(GELU(Conv1(F)))))`, channel and spatial
//! preserving. `Conv3` starts at zero so the block starts as the identity.

use super::layers::Conv2d;
use super::params::{Init, ParamStore};
use crate::autograd::{Graph, Var};

#[derive(Debug, Clone)]
pub struct DfrlStage {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
}

impl DfrlStage {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize, kernel: usize) -> Self {
        let pad = kernel / 2;
        DfrlStage {
            conv1: Conv2d::new(store, init, &format!("{name}.conv1"), channels, channels, kernel, 1, pad, 1),
            conv2: Conv2d::new(store, init, &format!("{name}.conv2"), channels, channels, kernel, 1, pad, 1),
            conv3: Conv2d::zeroed(store, &format!("{name}.conv3"), channels, channels, kernel, pad),
        }
    }

    pub fn forward(&self, g: &mut Graph, diff: Var) -> Var {
        let h = self.conv1.forward(g, diff);
        let h = g.gelu(h);
        let h = self.conv2.forward(g, h);
        let h = g.gelu(h);
        let r = self.conv3.forward(g, h);
        g.add(diff, r)
    }
}

#[derive(Debug, Clone)]
pub struct Dfrl {
    pub stages: Vec<DfrlStage>,
}

impl Dfrl {
    pub fn new(store: &mut ParamStore, init: &mut Init, channels: &[usize]) -> Self {
        Dfrl {
            stages: channels
                .iter()
                .enumerate()
                .map(|(l, &c)| DfrlStage::new(store, init, &format!("dfrl.stage{l}"), c, 3))
                .collect(),
        }
    }

    pub fn forward(&self, g: &mut Graph, diffs: &[Var]) -> Vec<Var> {
        self.stages.iter().zip(diffs).map(|(s, &d)| s.forward(g, d)).collect()
    }
}

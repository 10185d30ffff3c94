use super::layers::Linear;
use super::params::{Init, ParamStore};
use crate::autograd::{Graph, Var};

/// Three affine layers `Z -> Z/2 -> Z/4 -> 2` with GELU between and a
/// sigmoid on the output, giving `(sur, smr)` in `(0, 1)`.
#[derive(Debug, Clone)]
pub struct Head {
    pub fc1: Linear,
    pub fc2: Linear,
    pub fc3: Linear,
}

impl Head {
    pub fn new(store: &mut ParamStore, init: &mut Init, width: usize) -> Self {
        let h1 = (width / 2).max(1);
        let h2 = (width / 4).max(1);
        Head {
            fc1: Linear::new(store, init, "head.fc1", width, h1, true),
            fc2: Linear::new(store, init, "head.fc2", h1, h2, true),
            fc3: Linear::new(store, init, "head.fc3", h2, 2, true),
        }
    }

    /// `[1, Z]` token to a `[1, 2]` prediction.
    pub fn forward(&self, g: &mut Graph, token: Var) -> Var {
        let h = self.fc1.forward(g, token);
        let h = g.gelu(h);
        let h = self.fc2.forward(g, h);
        let h = g.gelu(h);
        let o = self.fc3.forward(g, h);
        g.sigmoid(o)
    }
}

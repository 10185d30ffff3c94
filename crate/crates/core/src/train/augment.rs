//! Paired flip augmentation: one draw is applied to both images of a pair so
//! their feature differences stay spatially aligned.

use rand::Rng;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlipDraw {
    pub horizontal: bool,
    pub vertical: bool,
}

impl FlipDraw {
    /// Independent fair coins for each axis, gated by the enable flags.
    pub fn sample<R: Rng>(rng: &mut R, hflip: bool, vflip: bool) -> Self {
        let h = rng.random::<bool>();
        let v = rng.random::<bool>();
        FlipDraw {
            horizontal: hflip && h,
            vertical: vflip && v,
        }
    }

    /// Applies the draw to a `[C, H, W]` tensor.
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        if self.horizontal {
            out = out.flip_horizontal();
        }
        if self.vertical {
            out = out.flip_vertical();
        }
        out
    }
}

pub fn augment(original: &Tensor, compressed: &Tensor, draw: FlipDraw) -> (Tensor, Tensor) {
    (draw.apply(original), draw.apply(compressed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp() -> Tensor {
        Tensor::new(vec![2, 3, 4], (0..24).map(f64::from).collect())
    }

    #[test]
    fn identity_and_involution() {
        let x = ramp();
        assert_eq!(FlipDraw::default().apply(&x), x);
        let h = FlipDraw {
            horizontal: true,
            vertical: false,
        };
        assert_ne!(h.apply(&x), x);
        assert_eq!(h.apply(&h.apply(&x)), x);
        let hv = FlipDraw {
            horizontal: true,
            vertical: true,
        };
        assert_eq!(hv.apply(&hv.apply(&x)), x);
    }

    #[test]
    fn disabled_axes_never_flip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(FlipDraw::sample(&mut rng, false, false), FlipDraw::default());
        }
    }
}

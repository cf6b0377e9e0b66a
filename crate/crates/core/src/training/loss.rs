use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::data::Skeleton;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-joint weights of the reconstruction loss, mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    lambda: Vec<f64>,
}

impl LossWeights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidArgument(
                "loss weights must be a nonempty list of positive finite values".into(),
            ));
        }
        Ok(LossWeights { lambda })
    }

    pub fn uniform(joints: usize) -> Result<Self> {
        Self::new(vec![1.0; joints])
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn joints(&self) -> usize {
        self.lambda.len()
    }

    /// Weights laid out as a `[J, 1]` column, broadcastable over `[.., J, 3]`.
    pub fn column(&self) -> Tensor {
        Tensor::from_parts(vec![self.lambda.len(), 1], self.lambda.clone())
    }
}

/// `1 + depth / max_depth` per joint, rescaled to mean 1.
///
/// A [`Skeleton`] is validated acyclic on construction, so depth is always
/// defined here.
pub fn structure_weights(skeleton: &Skeleton) -> LossWeights {
    let depths: Vec<usize> = (0..skeleton.joints()).map(|j| skeleton.depth(j)).collect();
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let raw: Vec<f64> = depths
        .iter()
        .map(|&d| {
            if max_depth == 0 {
                1.0
            } else {
                1.0 + d as f64 / max_depth as f64
            }
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    LossWeights {
        lambda: raw.iter().map(|l| l / mean).collect(),
    }
}

fn check_pair(a: &[usize], b: &[usize], joints: usize) -> Result<()> {
    if a != b || a.len() != 3 || a[1] != joints || a[2] != 3 {
        return Err(Error::shape("recon_loss", a, b));
    }
    Ok(())
}

/// Weighted L1 reconstruction loss over history and future, divided by `J`.
pub fn recon_loss<'t>(
    x_hat: Var<'t>,
    y_hat0: Var<'t>,
    x: Var<'t>,
    y0: Var<'t>,
    weights: &LossWeights,
) -> Result<Var<'t>> {
    let j = weights.joints();
    check_pair(&x_hat.shape(), &x.shape(), j)?;
    check_pair(&y_hat0.shape(), &y0.shape(), j)?;
    let lam = x.tape().constant(weights.column());
    let hist = x.sub(x_hat)?.abs()?.mul(lam)?.sum()?;
    let fut = y0.sub(y_hat0)?.abs()?.mul(lam)?.sum()?;
    hist.add(fut)?.scale(1.0 / j as f64)
}

/// Value-only counterpart of [`recon_loss`].
pub fn recon_loss_value(
    x_hat: &Tensor,
    y_hat0: &Tensor,
    x: &Tensor,
    y0: &Tensor,
    weights: &LossWeights,
) -> Result<f64> {
    let j = weights.joints();
    check_pair(x_hat.shape(), x.shape(), j)?;
    check_pair(y_hat0.shape(), y0.shape(), j)?;
    let mut total = 0.0;
    for (a, b) in [(x_hat, x), (y_hat0, y0)] {
        for (i, (p, q)) in a.data().iter().zip(b.data()).enumerate() {
            total += weights.lambda[(i / 3) % j] * (p - q).abs();
        }
    }
    Ok(total / j as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn single_joint_is_one() {
        let w = structure_weights(&Skeleton::new(vec![None]).unwrap());
        assert_eq!(w.lambda(), &[1.0]);
    }

    #[test]
    fn chain_weights() {
        let w = structure_weights(&Skeleton::new(vec![None, Some(0), Some(1)]).unwrap());
        let raw = [1.0, 1.5, 2.0];
        for (l, r) in w.lambda().iter().zip(raw) {
            assert!((l - r / 1.5).abs() < 1e-15);
        }
        let mean: f64 = w.lambda().iter().sum::<f64>() / 3.0;
        assert!((mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn leaves_outweigh_root() {
        let s = Skeleton::branched(6).unwrap();
        let w = structure_weights(&s);
        for j in 0..6 {
            if s.is_leaf(j) {
                assert!(w.lambda()[j] > w.lambda()[0]);
            }
        }
    }

    fn zeros(frames: usize, joints: usize) -> Tensor {
        Tensor::zeros(&[frames, joints, 3])
    }

    #[test]
    fn hand_evaluated_loss() {
        let w = LossWeights::uniform(1).unwrap();
        let y = Tensor::ones(&[1, 1, 3]);
        assert_eq!(recon_loss_value(&zeros(1, 1), &y, &zeros(1, 1), &zeros(1, 1), &w).unwrap(), 3.0);
        assert_eq!(recon_loss_value(&zeros(1, 1), &y, &zeros(1, 1), &y, &w).unwrap(), 0.0);
        let w2 = LossWeights::new(vec![2.0]).unwrap();
        assert_eq!(recon_loss_value(&zeros(1, 1), &y, &zeros(1, 1), &zeros(1, 1), &w2).unwrap(), 6.0);
    }

    #[test]
    fn tape_matches_value() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = structure_weights(&Skeleton::branched(6).unwrap());
        let t: Vec<Tensor> = [4, 5, 4, 5].iter().map(|&f| Tensor::randn(&[f, 6, 3], &mut rng)).collect();
        let tape = Tape::new();
        let v: Vec<_> = t.iter().map(|x| tape.constant(x.clone())).collect();
        let a = recon_loss(v[0], v[1], v[2], v[3], &w).unwrap().value().item();
        let b = recon_loss_value(&t[0], &t[1], &t[2], &t[3], &w).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = LossWeights::uniform(2).unwrap();
        assert!(recon_loss_value(&zeros(2, 2), &zeros(3, 2), &zeros(2, 2), &zeros(4, 2), &w).is_err());
        assert!(recon_loss_value(&zeros(2, 3), &zeros(3, 3), &zeros(2, 3), &zeros(3, 3), &w).is_err());
    }
}

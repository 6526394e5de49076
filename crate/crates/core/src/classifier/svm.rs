use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::geometry::SegmentKind;
use crate::num::Scalar;
use crate::rng::seeded_rng;

use super::FeatureLayout;

/// Linear scorer `w·x + b` over proposal features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    /// Kinds the feature layout was built from, in enumeration order.
    pub kinds: Vec<SegmentKind>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(&self.kinds)
    }

    pub fn score(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).fold(self.bias, |acc, (w, v)| acc + *w * *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    /// Regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Reweight the hinge loss so both classes carry equal total weight.
    pub class_balanced: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 200,
            seed: 0,
            class_balanced: false,
        }
    }
}

/// Trains a linear SVM by stochastic subgradient descent on the regularized
/// hinge loss (step `1 / (lambda t)`, Pegasos-style).
///
/// The bias is learned as the weight of a constant feature. Each epoch visits
/// the samples in a seeded random order; the result depends only on the
/// inputs and `params.seed`.
pub fn train_linear<T: Scalar>(
    layout: &FeatureLayout,
    features: &[Vec<T>],
    labels: &[bool],
    params: &SvmParams,
) -> Result<LinearModel<T>> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    let dim = layout.dim();
    if let Some(bad) = features.iter().find(|x| x.len() != dim) {
        return Err(Error::invalid(format!(
            "feature vector of length {} for a {dim}-dimensional layout",
            bad.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(format!(
            "linear SVM needs both classes (got {n_pos} positive, {n_neg} negative)"
        )));
    }
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(Error::invalid("SVM lambda must be positive"));
    }

    let n = labels.len() as f64;
    let (cw_pos, cw_neg) = if params.class_balanced {
        (n / (2.0 * n_pos as f64), n / (2.0 * n_neg as f64))
    } else {
        (1.0, 1.0)
    };

    // w is kept as scale * v so the shrink step is O(1)
    let lambda = params.lambda;
    let mut v = vec![0.0f64; dim + 1];
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut rng = seeded_rng(&[params.seed, 0x5F3]);
    let mut t = 0u64;
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|x| x.iter().map(|v| v.as_f64()).chain(std::iter::once(1.0)).collect())
        .collect();

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &xs[i];
            let y = if labels[i] { 1.0 } else { -1.0 };
            let margin = y * scale * dot(&v, x);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                scale = 1.0;
                v.iter_mut().for_each(|c| *c = 0.0);
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let c = if labels[i] { cw_pos } else { cw_neg };
                let step = eta * y * c / scale;
                for (vj, xj) in v.iter_mut().zip(x) {
                    *vj += step * xj;
                }
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|c| *c *= scale);
                scale = 1.0;
            }
        }
    }

    let w: Vec<T> = v.iter().map(|c| T::lit(c * scale)).collect();
    Ok(LinearModel {
        weights: w[..dim].to_vec(),
        bias: w[dim],
        kinds: layout.kinds().to_vec(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

//! Smooth data-fit terms `f(X)` over a sampled index set.
//!
//! The one-bit losses are negative log-likelihoods of the sign observation
//! model `P(y = +1) = φ(X_ij)`. Every per-draw term is written in a log-domain
//! form that neither overflows nor takes the logarithm of zero.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::observations::ObservationSet;

/// Noise law behind the one-bit observations; `φ` is the CDF of `-E_ij`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    Logistic,
    /// Laplace noise with scale `b > 0`.
    Laplace {
        b: f64,
    },
}

impl Noise {
    pub fn laplace(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::param("b", format!("Laplace scale must be > 0, got {b}")));
        }
        Ok(Noise::Laplace { b })
    }

    /// `φ(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Noise::Logistic => sigmoid(x),
            Noise::Laplace { b } => {
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            }
        }
    }

    /// The customary Lipschitz modulus of the gradient of the negative
    /// log-likelihood: `1` (logistic) or `2/b²` (Laplace). It is valid when no
    /// index is drawn more often than `1 / per_draw_curvature()` times.
    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            Noise::Logistic => 1.0,
            Noise::Laplace { b } => 2.0 / (b * b),
        }
    }

    /// Supremum of the second derivative of one draw's term: `¼` or `2/b²`.
    pub fn per_draw_curvature(&self) -> f64 {
        match *self {
            Noise::Logistic => 0.25,
            Noise::Laplace { b } => 2.0 / (b * b),
        }
    }

    /// `(-ln P(y | x), d/dx of it)` for one draw.
    fn term(&self, y: i8, x: f64) -> (f64, f64) {
        match *self {
            Noise::Logistic => {
                if y > 0 {
                    (softplus(-x), -sigmoid(-x))
                } else {
                    (softplus(x), sigmoid(x))
                }
            }
            Noise::Laplace { b } => {
                // Reflect so that only the y = +1 case is needed:
                // -ln(1 - φ(x)) = -ln φ(-x) by symmetry of the Laplace law.
                let (z, sign) = if y > 0 { (x, 1.0) } else { (-x, -1.0) };
                let (value, slope) = if z < 0.0 {
                    (std::f64::consts::LN_2 - z / b, -1.0 / b)
                } else {
                    let e = (-z / b).exp();
                    (-(-0.5 * e).ln_1p(), -e / (b * (2.0 - e)))
                };
                (value, sign * slope)
            }
        }
    }
}

/// Which smooth loss.
#[derive(Clone, Debug, PartialEq)]
pub enum LossKind {
    OneBit(Noise),
    /// `½ Σ_t (X_{i_t j_t} − M_{i_t j_t})²`.
    MaskedQuadratic(DMatrix<f64>),
}

/// A smooth loss bound to its observations. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SmoothLoss {
    kind: LossKind,
    obs: ObservationSet,
    lipschitz: f64,
}

impl SmoothLoss {
    pub fn new(kind: LossKind, obs: ObservationSet) -> Result<Self> {
        let lipschitz = match &kind {
            LossKind::OneBit(noise) => {
                if let Noise::Laplace { b } = noise {
                    Noise::laplace(*b)?;
                }
                // Repeated draws of one index add their curvatures.
                let repeated = noise.per_draw_curvature() * obs.max_multiplicity() as f64;
                noise.lipschitz_constant().max(repeated)
            }
            LossKind::MaskedQuadratic(target) => {
                if target.shape() != (obs.nrows(), obs.ncols()) {
                    return Err(Error::Dimension(format!(
                        "target is {:?} but observations index a {}x{} matrix",
                        target.shape(),
                        obs.nrows(),
                        obs.ncols()
                    )));
                }
                obs.max_multiplicity().max(1) as f64
            }
        };
        Ok(Self { kind, obs, lipschitz })
    }

    pub fn logistic(obs: ObservationSet) -> Self {
        Self::new(LossKind::OneBit(Noise::Logistic), obs).expect("logistic loss has no parameters")
    }

    pub fn laplace(obs: ObservationSet, b: f64) -> Result<Self> {
        Self::new(LossKind::OneBit(Noise::laplace(b)?), obs)
    }

    pub fn masked_quadratic(obs: ObservationSet, target: DMatrix<f64>) -> Result<Self> {
        Self::new(LossKind::MaskedQuadratic(target), obs)
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.obs.nrows(), self.obs.ncols())
    }

    /// `L_f`, accounting for repeated draws: the one-bit constant is raised to
    /// `curvature · max multiplicity` when that is larger, and the masked
    /// quadratic uses the largest repeat count of a sampled index.
    pub fn lipschitz_constant(&self) -> f64 {
        self.lipschitz
    }

    fn term(&self, t: usize, x: f64) -> (f64, f64) {
        let e = self.obs.entries()[t];
        match &self.kind {
            LossKind::OneBit(noise) => noise.term(e.y, x),
            LossKind::MaskedQuadratic(target) => {
                let d = x - target[(e.i, e.j)];
                (0.5 * d * d, d)
            }
        }
    }

    /// `f` given `X` at the sampled indices (draw order).
    pub fn value_at(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.obs.len());
        values.iter().enumerate().map(|(t, &x)| self.term(t, x).0).sum()
    }

    /// `f` and the per-draw gradient weights; `∇f(X)` is their scatter.
    pub fn value_and_weights_at(&self, values: &[f64]) -> (f64, Vec<f64>) {
        debug_assert_eq!(values.len(), self.obs.len());
        let mut total = 0.0;
        let weights = values
            .iter()
            .enumerate()
            .map(|(t, &x)| {
                let (v, g) = self.term(t, x);
                total += v;
                g
            })
            .collect();
        (total, weights)
    }

    pub fn value(&self, x: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(x)?;
        Ok(self.value_at(&self.obs.gather(x)))
    }

    /// Dense `∇f(X)`; zero off the sampled indices.
    pub fn gradient(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(x)?;
        let (_, w) = self.value_and_weights_at(&self.obs.gather(x));
        Ok(self.obs.scatter(&w))
    }

    fn check_shape(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "loss expects a {:?} matrix, got {:?}",
                self.shape(),
                x.shape()
            )));
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

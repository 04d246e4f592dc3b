//! Nesterov-momentum stochastic gradient descent.
//!
//! The update rule is the Sutskever-style formulation
//!
//! ```text
//! v ← μ·v − lr·∇f(θ + μ·v)
//! θ ← θ + v
//! ```
//!
//! implemented with the standard parameter-shift trick so the gradient is
//! evaluated exactly once per step: [`NesterovSgd::lookahead`] moves the
//! stored parameters to the lookahead point `θ + μ·v`, the caller computes
//! gradients there, and [`NesterovSgd::step`] applies `θ' = θshifted − lr·g`
//! together with the velocity update — which is algebraically identical to
//! the rule above, and leaves the stored parameters at the true `θ` of the
//! next iterate. Checkpoints must therefore be taken between steps, never
//! between a `lookahead` and its `step`.

use crate::error::{NumError, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Optimizer state: one velocity tensor per parameter plus the fixed
/// hyperparameters.
pub struct NesterovSgd<S: Scalar> {
    lr: S,
    momentum: S,
    velocity: Vec<Tensor<S>>,
    shifted: bool,
}

impl<S: Scalar> NesterovSgd<S> {
    /// Fresh optimizer with zero velocity.
    ///
    /// `lr = 0` is accepted as a degenerate no-op configuration (useful for
    /// ablation runs); negative rates and `momentum` outside `[0, 1)` are
    /// rejected.
    pub fn new(lr: f64, momentum: f64, param_shapes: &[Vec<usize>]) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(NumError::Invalid {
                op: "nesterov",
                detail: format!("learning rate must be ≥ 0, got {}", lr),
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NumError::Invalid {
                op: "nesterov",
                detail: format!("momentum must lie in [0,1), got {}", momentum),
            });
        }
        Ok(NesterovSgd {
            lr: S::from_f64(lr),
            momentum: S::from_f64(momentum),
            velocity: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            shifted: false,
        })
    }

    /// Rebuild an optimizer from checkpointed velocity tensors.
    pub fn with_velocity(lr: f64, momentum: f64, velocity: Vec<Tensor<S>>) -> Result<Self> {
        let shapes: Vec<Vec<usize>> = velocity.iter().map(|v| v.shape().to_vec()).collect();
        let mut opt = Self::new(lr, momentum, &shapes)?;
        opt.velocity = velocity;
        Ok(opt)
    }

    pub fn lr(&self) -> f64 {
        self.lr.as_f64()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum.as_f64()
    }

    pub fn velocity(&self) -> &[Tensor<S>] {
        &self.velocity
    }

    /// Shift parameters to the lookahead point `θ + μ·v`. Gradients must be
    /// computed at this point before calling [`NesterovSgd::step`].
    pub fn lookahead(&mut self, params: &mut [Tensor<S>]) -> Result<()> {
        if self.shifted {
            return Err(NumError::Invalid {
                op: "nesterov",
                detail: "lookahead called twice without an intervening step".into(),
            });
        }
        self.check_shapes(params)?;
        for (p, v) in params.iter_mut().zip(&self.velocity) {
            kernels::axpy(self.momentum, v.data(), p.data_mut());
        }
        self.shifted = true;
        Ok(())
    }

    /// Apply one update with gradients evaluated at the lookahead point.
    /// Afterwards `params` holds the true next iterate.
    pub fn step(&mut self, params: &mut [Tensor<S>], grads: &[Tensor<S>]) -> Result<()> {
        if !self.shifted {
            return Err(NumError::Invalid {
                op: "nesterov",
                detail: "step requires a preceding lookahead".into(),
            });
        }
        self.check_shapes(params)?;
        if params.len() != grads.len() {
            return Err(NumError::ShapeMismatch {
                op: "nesterov",
                detail: format!("{} params vs {} grads", params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "nesterov",
                    detail: format!(
                        "param {} has shape {:?} but gradient {:?}",
                        i,
                        p.shape(),
                        g.shape()
                    ),
                });
            }
            if !g.all_finite() {
                return Err(NumError::NonFinite { op: "nesterov" });
            }
        }
        let neg_lr = -self.lr;
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            // v ← μ·v − lr·g
            kernels::scale_assign(self.momentum, v.data_mut());
            kernels::axpy(neg_lr, g.data(), v.data_mut());
            // θshifted − lr·g  ==  θ + v  for the freshly updated v
            kernels::axpy(neg_lr, g.data(), p.data_mut());
        }
        self.shifted = false;
        Ok(())
    }

    /// Undo a pending lookahead without stepping (used when a batch is
    /// abandoned, e.g. after a non-finite loss).
    pub fn cancel_lookahead(&mut self, params: &mut [Tensor<S>]) -> Result<()> {
        if !self.shifted {
            return Ok(());
        }
        self.check_shapes(params)?;
        for (p, v) in params.iter_mut().zip(&self.velocity) {
            kernels::axpy(-self.momentum, v.data(), p.data_mut());
        }
        self.shifted = false;
        Ok(())
    }

    fn check_shapes(&self, params: &[Tensor<S>]) -> Result<()> {
        if params.len() != self.velocity.len() {
            return Err(NumError::ShapeMismatch {
                op: "nesterov",
                detail: format!(
                    "{} params vs {} velocity tensors",
                    params.len(),
                    self.velocity.len()
                ),
            });
        }
        for (i, (p, v)) in params.iter().zip(&self.velocity).enumerate() {
            if p.shape() != v.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "nesterov",
                    detail: format!(
                        "param {} has shape {:?} but velocity {:?}",
                        i,
                        p.shape(),
                        v.shape()
                    ),
                });
            }
        }
        Ok(())
    }
}

//! Central finite-difference gradient checking.
//!
//! This module is test support: it never touches [`crate::graph`]'s
//! backward machinery, so it can serve as an independent oracle for it. The
//! caller supplies a loss closure that re-runs the full forward computation
//! from a parameter vector; `central_diff` perturbs one coordinate at a
//! time with `(f(θ+h) − f(θ−h)) / 2h`.
//!
//! Meaningful only in `f64`: the default step `1e-5` leaves ~1e-10 of
//! roundoff+truncation error, which comfortably clears the 1e-5 relative
//! tolerance used across the workspace.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative-error floor: gradients smaller than this in magnitude are
/// compared in absolute terms (scaled by the floor) so finite-difference
/// roundoff on near-zero entries does not masquerade as disagreement.
pub const REL_FLOOR: f64 = 1e-3;

/// Worst disagreement found by [`compare`].
#[derive(Debug, Clone)]
pub struct Mismatch {
    /// Index of the offending parameter tensor.
    pub param: usize,
    /// Flat element offset within that tensor.
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Central finite differences of `loss` at `params`, one tensor of partial
/// derivatives per parameter tensor. `loss` must be a pure function of the
/// parameter values (fix all RNG and data beforehand).
pub fn central_diff<S, F>(mut loss: F, params: &[Tensor<S>], step: f64) -> Vec<Tensor<S>>
where
    S: Scalar,
    F: FnMut(&[Tensor<S>]) -> S,
{
    let h = S::from_f64(step);
    let two_h = S::from_f64(2.0 * step);
    let mut work: Vec<Tensor<S>> = params.to_vec();
    let mut grads: Vec<Tensor<S>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    for pi in 0..params.len() {
        for i in 0..params[pi].len() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + h;
            let up = loss(&work);
            work[pi].data_mut()[i] = orig - h;
            let down = loss(&work);
            work[pi].data_mut()[i] = orig;
            grads[pi].data_mut()[i] = (up - down) / two_h;
        }
    }
    grads
}

/// Relative error with an absolute floor (see [`REL_FLOOR`]).
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compare analytic gradients against finite-difference gradients; returns
/// the worst mismatch, or `None` when every entry agrees within `tol`.
pub fn compare<S: Scalar>(
    analytic: &[Tensor<S>],
    numeric: &[Tensor<S>],
    tol: f64,
) -> Option<Mismatch> {
    assert_eq!(analytic.len(), numeric.len(), "gradient list lengths differ");
    let mut worst: Option<Mismatch> = None;
    for (pi, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert_eq!(
            a.shape(),
            n.shape(),
            "gradient shapes differ for parameter {}",
            pi
        );
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let e = rel_err(av.as_f64(), nv.as_f64());
            if e >= tol && worst.as_ref().map_or(true, |w| e > w.rel_err) {
                worst = Some(Mismatch {
                    param: pi,
                    offset: i,
                    analytic: av.as_f64(),
                    numeric: nv.as_f64(),
                    rel_err: e,
                });
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_gradient_of_quadratic() {
        // f(x) = Σ xᵢ² has gradient 2x.
        let p = vec![Tensor::<f64>::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap()];
        let g = central_diff(
            |ps: &[Tensor<f64>]| ps[0].data().iter().map(|x| x * x).sum(),
            &p,
            DEFAULT_STEP,
        );
        for (x, gx) in p[0].data().iter().zip(g[0].data()) {
            assert!((gx - 2.0 * x).abs() < 1e-9, "got {} for x={}", gx, x);
        }
    }

    #[test]
    fn compare_flags_disagreement() {
        let a = vec![Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]).unwrap()];
        let n = vec![Tensor::<f64>::from_vec(&[2], vec![1.0, 2.5]).unwrap()];
        let m = compare(&a, &n, 1e-5).expect("should disagree");
        assert_eq!(m.offset, 1);
        assert!(compare(&a, &a, 1e-5).is_none());
    }
}

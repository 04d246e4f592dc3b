//! Low-level numeric primitives shared by graph operations and the
//! incremental decoder: dot products, axpy updates, and numerically stable
//! softmax / cross-entropy on raw slices.
//!
//! The reduction order inside each primitive is fixed (eight-lane partial
//! sums for `dot`), which keeps results bit-identical run to run while still
//! letting the compiler vectorize the loops.

use crate::error::{NumError, Result};
use crate::scalar::Scalar;

/// Dot product with eight independent accumulators. The fixed lane layout
/// breaks the serial dependency chain (so the loop vectorizes) without
/// sacrificing determinism: the summation order depends only on the length.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len(), "dot length mismatch");
    const LANES: usize = 8;
    let mut acc = [S::zero(); LANES];
    let whole = a.len() / LANES * LANES;
    let mut i = 0;
    while i < whole {
        let pa = &a[i..i + LANES];
        let pb = &b[i..i + LANES];
        for l in 0..LANES {
            acc[l] = acc[l] + pa[l] * pb[l];
        }
        i += LANES;
    }
    let mut tail = S::zero();
    for j in whole..a.len() {
        tail = tail + a[j] * b[j];
    }
    let mut total = S::zero();
    for l in 0..LANES {
        total = total + acc[l];
    }
    total + tail
}

/// `y += alpha * x`, element-wise.
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len(), "axpy length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// `y += x`, element-wise.
#[inline]
pub fn add_assign<S: Scalar>(x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len(), "add_assign length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + xi;
    }
}

/// `y *= alpha`, element-wise.
#[inline]
pub fn scale_assign<S: Scalar>(alpha: S, y: &mut [S]) {
    for yi in y.iter_mut() {
        *yi = *yi * alpha;
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Numerically stable softmax of one row (max-subtraction). Errors on empty
/// input; never overflows for finite inputs.
pub fn softmax_row<S: Scalar>(xs: &[S]) -> Result<Vec<S>> {
    masked_softmax_row(xs, None)
}

/// Softmax restricted to positions where `allowed` is true; excluded
/// positions get exactly zero. `allowed = None` means all positions count.
/// Errors if no position is allowed.
pub fn masked_softmax_row<S: Scalar>(xs: &[S], allowed: Option<&[bool]>) -> Result<Vec<S>> {
    if let Some(mask) = allowed {
        debug_assert_eq!(mask.len(), xs.len(), "mask length mismatch");
    }
    let live = |j: usize| allowed.map_or(true, |m| m[j]);
    let mut max: Option<S> = None;
    for (j, &x) in xs.iter().enumerate() {
        if live(j) && max.map_or(true, |m| x > m) {
            max = Some(x);
        }
    }
    let Some(max) = max else {
        return Err(NumError::Invalid {
            op: "softmax_row",
            detail: "no unmasked positions".into(),
        });
    };
    let mut out = vec![S::zero(); xs.len()];
    let mut sum = S::zero();
    for (j, &x) in xs.iter().enumerate() {
        if live(j) {
            let e = (x - max).exp();
            out[j] = e;
            sum = sum + e;
        }
    }
    let inv = S::one() / sum;
    for o in out.iter_mut() {
        *o = *o * inv;
    }
    Ok(out)
}

/// `log(sum(exp(xs)))` with max-subtraction.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    debug_assert!(!xs.is_empty());
    let max = xs.iter().cloned().fold(xs[0], S::max);
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Cross-entropy of a logit row against a target index:
/// `−log(softmax(logits)[target])`. Always ≥ 0.
pub fn cross_entropy<S: Scalar>(logits: &[S], target: usize) -> Result<S> {
    if target >= logits.len() {
        return Err(NumError::Invalid {
            op: "cross_entropy",
            detail: format!("target {} out of range for {} logits", target, logits.len()),
        });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Log-probabilities of one logit row (log-softmax), computed in `f64` for
/// use as decoding scores.
pub fn log_softmax_f64<S: Scalar>(logits: &[S]) -> Vec<f64> {
    let xs: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
    let lse = log_sum_exp(&xs);
    xs.iter().map(|x| x - lse).collect()
}

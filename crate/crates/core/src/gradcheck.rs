//! Central-difference verification of analytic gradients.
//!
//! The checker re-evaluates a loss closure at `x ± h` for every coordinate
//! of every parameter tensor and compares the resulting slope against the
//! analytic gradient supplied by the caller. It is the arbiter used by the
//! layer and pipeline tests; production code never calls it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor for the relative-error denominator; keeps near-zero gradient
/// pairs from exploding the ratio. Central differences at h = 1e-4 on a
/// unit-scale loss carry rounding noise of roughly 1e-12 to 1e-11, so a
/// gradient below this floor cannot be resolved relatively; it is instead
/// held to an absolute agreement of tol * floor, still orders of
/// magnitude tighter than the noise a genuine gradient bug would cause.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Number of coordinates checked.
    pub checked: usize,
    /// Whether `max_rel_err <= tol`.
    pub pass: bool,
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// `f` must be a pure function of the parameter list. `analytic[i]` holds
/// the gradient for `params[i]` and must match its shape. Relative error
/// per coordinate is `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
///
/// Returns a numerical error naming the offending coordinate if either
/// side fails to be finite.
pub fn grad_check<F>(
    mut f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if !(h > 0.0) || !(tol > 0.0) {
        return Err(Error::Validation(format!(
            "grad_check requires positive h and tol, got h={h}, tol={tol}"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::Validation(format!(
            "grad_check got {} parameter tensors but {} gradient tensors",
            params.len(),
            analytic.len()
        )));
    }
    for (i, (p, a)) in params.iter().zip(analytic).enumerate() {
        if p.shape() != a.shape() {
            return Err(Error::Shape(format!(
                "grad_check tensor {i}: parameter shape {:?} does not match gradient shape {:?}",
                p.shape(),
                a.shape()
            )));
        }
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel_err = 0.0_f64;
    let mut checked = 0usize;

    for i in 0..params.len() {
        for j in 0..params[i].numel() {
            let original = work[i].data()[j];

            work[i].data_mut()[j] = original + h;
            let plus = f(&work)?;
            work[i].data_mut()[j] = original - h;
            let minus = f(&work)?;
            work[i].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[j];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::Numerical(format!(
                    "grad_check tensor {i} coordinate {j}: numeric={numeric}, analytic={a}"
                )));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            max_rel_err = max_rel_err.max(rel);
            checked += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        checked,
        pass: max_rel_err <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        // f(w) = Σ w², analytic gradient 2w; exact for central differences
        // up to rounding.
        let w = Tensor::from_vec(vec![0.5, -1.5, 2.0]);
        let grad = Tensor::from_vec(vec![1.0, -3.0, 4.0]);
        let report = grad_check(
            |p| Ok(p[0].data().iter().map(|&x| x * x).sum()),
            &[w],
            &[grad],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max_rel_err = {}", report.max_rel_err);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        // One coordinate inflated by 10%: the report must fail with a
        // max_rel_err close to 0.1.
        let w = Tensor::from_vec(vec![0.5, -1.5, 2.0]);
        let grad = Tensor::from_vec(vec![1.0, -3.0 * 1.1, 4.0]);
        let report = grad_check(
            |p| Ok(p[0].data().iter().map(|&x| x * x).sum()),
            &[w],
            &[grad],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(!report.pass);
        assert!(
            (report.max_rel_err - 0.1 / 1.1).abs() < 1e-3,
            "max_rel_err = {}",
            report.max_rel_err
        );
    }

    #[test]
    fn non_finite_slope_is_a_numerical_error() {
        // ln(x) probed at 0 leaves its domain on the minus side.
        let w = Tensor::from_vec(vec![0.0]);
        let grad = Tensor::from_vec(vec![0.0]);
        let err = grad_check(|p| Ok(p[0].data()[0].ln()), &[w], &[grad], 1e-4, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("coordinate 0"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let w = Tensor::from_vec(vec![1.0, 2.0]);
        let grad = Tensor::from_vec(vec![1.0]);
        assert!(grad_check(|_| Ok(0.0), &[w], &[grad], 1e-4, 1e-6).is_err());
    }

    #[test]
    fn multiple_tensors_are_all_visited() {
        let a = Tensor::from_vec(vec![1.0, 2.0]);
        let b = Tensor::from_vec(vec![3.0]);
        // f = sum(a) + 2·b, gradients are ones and [2].
        let ga = Tensor::from_vec(vec![1.0, 1.0]);
        let gb = Tensor::from_vec(vec![2.0]);
        let report = grad_check(
            |p| Ok(p[0].data().iter().sum::<f64>() + 2.0 * p[1].data()[0]),
            &[a, b],
            &[ga, gb],
            1e-4,
            1e-6,
        )
        .unwrap();
        assert!(report.pass);
        assert_eq!(report.checked, 3);
    }
}

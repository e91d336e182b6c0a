//! Central-finite-difference gradient verification.

/// Compare an analytic gradient against central finite differences over all
/// components of `theta`. Returns the worst relative error
/// `|g_analytic - g_fd| / max(1e-8, |g_fd|)`.
///
/// `f` must be deterministic: any stochastic inputs have to be frozen by the
/// caller before checking.
pub fn finite_diff_check<F>(f: F, theta: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let indices: Vec<usize> = (0..theta.len()).collect();
    finite_diff_check_subset(f, theta, analytic, h, &indices)
}

/// Same as [`finite_diff_check`] but restricted to the given components.
pub fn finite_diff_check_subset<F>(
    mut f: F,
    theta: &[f64],
    analytic: &[f64],
    h: f64,
    indices: &[usize],
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(theta.len(), analytic.len());
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &i in indices {
        let original = probe[i];
        probe[i] = original + h;
        let plus = f(&probe);
        probe[i] = original - h;
        let minus = f(&probe);
        probe[i] = original;
        let fd = (plus - minus) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / f64::max(1e-8, fd.abs());
        if err > worst {
            worst = err;
        }
    }
    worst
}

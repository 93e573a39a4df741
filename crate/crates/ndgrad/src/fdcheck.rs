//! Central finite-difference gradient oracle.
//!
//! Test support: approximates d(loss)/d(input) using only forward
//! evaluations, independent of the recorded backward pass it is used to
//! check. Always run at f64; finite differences are unreliable at f32.

/// Central difference gradient of `f` at `x` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Relative L2 error between an analytic gradient and the oracle.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&a, &b) in analytic.iter().zip(numeric) {
        diff += (a - b) * (a - b);
        na += a * a;
        nb += b * b;
    }
    let denom = (na.sqrt() + nb.sqrt()).max(1e-12);
    diff.sqrt() / denom
}

/// Assert the analytic gradient matches central differences of `f` at `x`.
pub fn assert_grad_close<F: FnMut(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
    what: &str,
) {
    let numeric = central_diff(f, x, h);
    let err = rel_error(analytic, &numeric);
    assert!(
        err < tol,
        "{what}: gradient mismatch, relative error {err:.3e} >= {tol:.0e}\n analytic[..4]={:?}\n numeric[..4]={:?}",
        &analytic[..analytic.len().min(4)],
        &numeric[..numeric.len().min(4)],
    );
}

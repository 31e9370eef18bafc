//! Fixed-step classical Runge-Kutta integration for small state vectors.

/// One classical 4th-order Runge-Kutta step of `dx/dt = f(t, x)` from `t`
/// to `t + dt`.
#[inline]
pub fn rk4_step<const N: usize, F>(x: &[f64; N], t: f64, dt: f64, f: F) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let half = 0.5 * dt;
    let k1 = f(t, x);
    let k2 = f(t + half, &axpy(x, half, &k1));
    let k3 = f(t + half, &axpy(x, half, &k2));
    let k4 = f(t + dt, &axpy(x, dt, &k3));

    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}

//! One-dimensional golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimize a unimodal `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// Returns the best point seen and its value. The bracket endpoints are never
/// evaluated, so callers should pass the coarse-grid optimum separately when it
/// may sit on an edge.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fd < fc { (d, fd) } else { (c, fc) };
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Maximize a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_min(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// Coordinate-wise golden-section descent starting from `x0`.
///
/// Each sweep searches each coordinate over `[x_i - radius, x_i + radius]`; the
/// radius shrinks by half after every sweep that fails to improve by more than
/// `1e-12`. Stops when the radius drops below `tol`. A move is only accepted when
/// it strictly lowers the objective, so the result never exceeds `f(x0)`.
pub fn coordinate_descent<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    radius: f64,
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut r = radius;
    let mut sweeps = 0;
    while r > tol && sweeps < 200 {
        sweeps += 1;
        let start = fx;
        for i in 0..x.len() {
            let mut trial = x.clone();
            let centre = x[i];
            let (xi, fi) = golden_min(
                |v| {
                    trial[i] = v;
                    f(&trial)
                },
                centre - r,
                centre + r,
                tol,
            );
            if fi < fx {
                x[i] = xi;
                fx = fi;
            }
        }
        if start - fx <= 1e-12 {
            r *= 0.5;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, v) = golden_min(|x| (x - 1.3).powi(2) + 2.0, -4.0, 5.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-8);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn maximizes_cosine() {
        let (x, v) = golden_max(f64::cos, -1.0, 2.0, 1e-10);
        assert!(x.abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn descent_never_worsens() {
        let f = |p: &[f64]| (p[0] - 0.2).powi(2) + 3.0 * (p[1] + 0.7).powi(2) + p[0] * p[1];
        let x0 = [0.0, 0.0];
        let (x, v) = coordinate_descent(f, &x0, 0.5, 1e-9);
        assert!(v <= f(&x0));
        // analytic minimum of the quadratic
        assert!((x[0] - 0.6).abs() < 1e-6);
        assert!((x[1] + 0.8).abs() < 1e-6);
    }
}

//! Shape-preserving piecewise-cubic interpolation (Fritsch–Carlson).
//!
//! Monotone data produce a monotone interpolant with no overshoot between
//! knots, which keeps interpolated reluctance curves free of spurious force
//! extrema. The derivative of the interpolant is available in closed form.

use crate::error::{Error, Result};

/// Monotone cubic Hermite spline.
#[derive(Clone, Debug)]
pub struct PchipSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Knot derivatives.
    ms: Vec<f64>,
}

impl PchipSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidParam(format!(
                "spline needs matching columns, got {} x vs {} y",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidParam(
                "spline needs at least two knots".into(),
            ));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParam(format!(
                    "spline abscissae must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("spline knots must be finite".into()));
        }

        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();

        let mut ms = vec![0.0; n];
        if n == 2 {
            ms[0] = d[0];
            ms[1] = d[0];
        } else {
            ms[0] = endpoint_slope(h[0], h[1], d[0], d[1]);
            ms[n - 1] = endpoint_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
            for k in 1..n - 1 {
                if d[k - 1] * d[k] <= 0.0 {
                    ms[k] = 0.0;
                } else {
                    // Weighted harmonic mean of adjacent secants.
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    ms[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
                }
            }
        }

        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ms,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().expect("nonempty knots")
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.clamp(1, self.xs.len() - 1) - 1,
        }
    }

    /// Interpolated value; linear continuation beyond the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.x_min() {
            return self.ys[0] + self.ms[0] * (x - self.xs[0]);
        }
        if x >= self.x_max() {
            let n = self.xs.len() - 1;
            return self.ys[n] + self.ms[n] * (x - self.xs[n]);
        }
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.ms[k] + h01 * self.ys[k + 1] + h11 * h * self.ms[k + 1]
    }

    /// Derivative of the interpolant; constant beyond the knot range.
    pub fn deriv(&self, x: f64) -> f64 {
        if x <= self.x_min() {
            return self.ms[0];
        }
        if x >= self.x_max() {
            return *self.ms.last().expect("nonempty knots");
        }
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let dh00 = (6.0 * t2 - 6.0 * t) / h;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = (-6.0 * t2 + 6.0 * t) / h;
        let dh11 = 3.0 * t2 - 2.0 * t;
        dh00 * self.ys[k] + dh10 * self.ms[k] + dh01 * self.ys[k + 1] + dh11 * self.ms[k + 1]
    }
}

/// Three-point one-sided endpoint slope with the standard PCHIP limiters.
fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_knots_exactly() {
        let xs = [0.0, 0.3, 1.0, 2.5, 4.0];
        let ys = [1.0, 2.0, 2.2, 5.0, 9.1];
        let s = PchipSpline::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(ys.iter()) {
            assert!((s.eval(*x) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_data_reproduced_exactly() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 7.0 * x).collect();
        let s = PchipSpline::new(&xs, &ys).unwrap();
        for i in 0..200 {
            let x = -0.1 + i as f64 * 0.01;
            assert!((s.eval(x) - (3.0 + 7.0 * x)).abs() < 1e-12);
            assert!((s.deriv(x) - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_data_stay_monotone() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.0, 0.1, 0.11, 2.0, 2.01, 5.0];
        let s = PchipSpline::new(&xs, &ys).unwrap();
        let mut prev = s.eval(0.0);
        for i in 1..=500 {
            let x = i as f64 * 0.01;
            let v = s.eval(x);
            assert!(v >= prev - 1e-12, "not monotone at x={x}");
            assert!(s.deriv(x) >= -1e-12);
            prev = v;
        }
        // No new extrema: values stay inside neighboring knot ranges.
        for k in 0..xs.len() - 1 {
            for j in 0..50 {
                let x = xs[k] + (xs[k + 1] - xs[k]) * j as f64 / 50.0;
                let v = s.eval(x);
                assert!(v >= ys[k] - 1e-12 && v <= ys[k + 1] + 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin() + 2.0 * x).collect();
        let s = PchipSpline::new(&xs, &ys).unwrap();
        for i in 1..280 {
            let x = 0.005 + i as f64 * 0.01;
            let eps = 1e-6;
            let fd = (s.eval(x + eps) - s.eval(x - eps)) / (2.0 * eps);
            assert!((s.deriv(x) - fd).abs() < 1e-6, "at x={x}");
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(PchipSpline::new(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(PchipSpline::new(&[0.0], &[1.0]).is_err());
        assert!(PchipSpline::new(&[0.0, 1.0], &[1.0, f64::NAN]).is_err());
        assert!(PchipSpline::new(&[0.0, 1.0], &[1.0]).is_err());
    }
}

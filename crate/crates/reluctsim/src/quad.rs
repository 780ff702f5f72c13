//! Adaptive Gauss–Kronrod quadrature (7–15 point rule).
//!
//! Globally adaptive scheme: the interval with the largest error estimate is
//! bisected until the summed error estimate meets the requested tolerance.

use crate::error::{Error, Result};

/// Kronrod abscissae for the 15-point rule (positive half, includes 0).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Gauss weights for the embedded 7-point rule.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod weights for the 15-point rule.
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Result of one 15-point Kronrod evaluation of a subinterval.
#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let f_center = f(center);
    let mut res_gauss = f_center * WG[3];
    let mut res_kronrod = f_center * WGK[7];
    let mut res_abs = res_kronrod.abs();

    let mut fv = [0.0_f64; 14];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = f1;
        fv[j + 7] = f2;
        res_kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[j + 7] - mean).abs());
    }

    let raw_err = ((res_kronrod - res_gauss) * half).abs();
    res_asc *= half.abs();
    res_abs *= half.abs();

    // QUADPACK error rescaling: sharpen the raw estimate, floor at roundoff.
    let mut err = raw_err;
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }

    Panel {
        a,
        b,
        value: res_kronrod * half,
        err,
    }
}

/// Outcome of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Integrate `f` over `[a, b]` to the requested relative/absolute tolerance.
///
/// `a > b` integrates with reversed sign. Fails with
/// [`Error::QuadratureNonConvergence`] if the tolerance cannot be met within
/// `max_panels` subintervals.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    // Common case: one panel already meets the tolerance.
    let first = qk15(&f, lo, hi);
    if first.err <= abs_tol.max(rel_tol * first.value.abs()) {
        return Ok(Quadrature {
            value: sign * first.value,
            abs_error: first.err,
            evaluations: 15,
        });
    }

    let mut panels: Vec<Panel> = vec![first];
    let mut evals = 15;

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(Quadrature {
                value: sign * total,
                abs_error: err,
                evaluations: evals,
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                a,
                b,
                err,
                tol: target,
                evals,
            });
        }
        // Split the worst panel.
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("nonempty panel list");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval at roundoff resolution; accept what we have.
            panels.push(p);
            let total: f64 = panels.iter().map(|q| q.value).sum();
            let err: f64 = panels.iter().map(|q| q.err).sum();
            return Ok(Quadrature {
                value: sign * total,
                abs_error: err,
                evaluations: evals,
            });
        }
        panels.push(qk15(&f, p.a, mid));
        panels.push(qk15(&f, mid, p.b));
        evals += 30;
    }
}

/// Convenience wrapper with the crate-wide default tolerances (1e-9 relative,
/// 1e-15 absolute).
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Quadrature> {
    integrate(f, a, b, 1e-9, 1e-15, 4096)
}

/// Adaptive integration seeded with interior break points (known kinks or
/// transition layers of the integrand). Requires `a < b`; knots outside
/// `(a, b)` are ignored.
pub fn integrate_with_knots<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    knots: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = knots
        .iter()
        .copied()
        .filter(|k| *k > lo && *k < hi && k.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut panels = Vec::with_capacity(cuts.len() + 1);
    let mut evals = 0;
    let mut left = lo;
    for cut in cuts.into_iter().chain(std::iter::once(hi)) {
        panels.push(qk15(&f, left, cut));
        evals += 15;
        left = cut;
    }

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let target = abs_tol.max(rel_tol * total.abs());
        if err <= target {
            return Ok(Quadrature {
                value: sign * total,
                abs_error: err,
                evaluations: evals,
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                a,
                b,
                err,
                tol: target,
                evals,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("nonempty panel list");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            panels.push(p);
            let total: f64 = panels.iter().map(|q| q.value).sum();
            let err: f64 = panels.iter().map(|q| q.err).sum();
            return Ok(Quadrature {
                value: sign * total,
                abs_error: err,
                evaluations: evals,
            });
        }
        panels.push(qk15(&f, p.a, mid));
        panels.push(qk15(&f, mid, p.b));
        evals += 30;
    }
}

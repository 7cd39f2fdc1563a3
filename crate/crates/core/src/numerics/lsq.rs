//! Linear and nonlinear least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub params: Vec<f64>,
    /// Parameter covariance, scaled by the residual variance.
    pub covariance: DMatrix<f64>,
    pub residual_rms: f64,
    pub sum_sq: f64,
    pub dof: usize,
}

/// Ordinary least squares for `y ≈ X p`; rows of `design` are observations.
pub fn linear_least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    let (n, k) = design.shape();
    if n < k {
        return Err(Error::Fit(format!("{n} observations for {k} parameters")));
    }
    // Column scaling keeps the normal matrix well conditioned.
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = design.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut a = design.clone();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let yv = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(Error::Fit(format!(
            "ill-conditioned design matrix (singular values {smax:.3e} .. {smin:.3e})"
        )));
    }
    let scaled = svd.solve(&yv, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    let resid = &yv - &a * &scaled;
    let sum_sq = resid.norm_squared();
    let dof = n - k;
    let s2 = if dof > 0 { sum_sq / dof as f64 } else { 0.0 };
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix".into()))?;
    let mut cov = inv * s2;
    for i in 0..k {
        for j in 0..k {
            cov[(i, j)] /= scales[i] * scales[j];
        }
    }
    let params = (0..k).map(|j| scaled[j] / scales[j]).collect();
    Ok(LinearFit {
        params,
        covariance: cov,
        residual_rms: (sum_sq / n as f64).sqrt(),
        sum_sq,
        dof,
    })
}

/// Result of a weighted straight-line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
}

/// Weighted least-squares line with weights 1/σ²; standard errors from the
/// inverse weighted normal matrix.
pub fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(Error::Fit("length mismatch".into()));
    }
    if x.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", x.len())));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Weighting(format!(
            "uncertainties must be positive and finite, got {s}"
        )));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-300) {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2: f64 = (0..x.len())
        .map(|i| ((y[i] - intercept - slope * x[i]) / sigma[i]).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        slope_se: (sw / det).sqrt(),
        intercept_se: (sxx / det).sqrt(),
        chi2,
        reduced_chi2: chi2 / (x.len() - 2) as f64,
    })
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative step for the forward-difference Jacobian.
    pub fd_rel_step: f64,
    pub tol: f64,
    /// Per-parameter lower bounds (projected).
    pub lower: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// (JᵀJ)⁻¹ for the weighted residuals.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub iterations: usize,
}

/// Levenberg-Marquardt on weighted residuals `r(p)`.
pub fn levenberg_marquardt<F>(mut residuals: F, p0: &[f64], opts: &LmOptions) -> Result<LmFit>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let k = p0.len();
    let project = |p: &mut [f64]| {
        for (v, lo) in p.iter_mut().zip(&opts.lower) {
            if *v < *lo {
                *v = *lo;
            }
        }
    };
    let mut p = p0.to_vec();
    project(&mut p);
    let mut r = residuals(&p)?;
    let mut chi2: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut iterations = 0;

    let jacobian = |p: &[f64], r0: &[f64], f: &mut F| -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(r0.len(), k);
        for c in 0..k {
            let h = opts.fd_rel_step * p[c].abs().max(1e-8);
            let mut pp = p.to_vec();
            // step away from a lower bound
            let sign = if opts.lower.get(c).is_some_and(|lo| p[c] - h < *lo) {
                1.0
            } else {
                -1.0
            };
            pp[c] += sign * h;
            let rp = f(&pp)?;
            for i in 0..r0.len() {
                j[(i, c)] = (rp[i] - r0[i]) / (sign * h);
            }
        }
        Ok(j)
    };

    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let j = jacobian(&p, &r, &mut residuals)?;
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut pn: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut pn);
            let rn = residuals(&pn)?;
            let c2: f64 = rn.iter().map(|v| v * v).sum();
            if c2.is_finite() && c2 <= chi2 {
                let rel_change = (chi2 - c2) / chi2.max(1e-300);
                let step_small = pn
                    .iter()
                    .zip(&p)
                    .all(|(a, b)| (a - b).abs() <= opts.tol * b.abs().max(1e-12));
                p = pn;
                r = rn;
                chi2 = c2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel_change < opts.tol * opts.tol || step_small || chi2 < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved || converged {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "Levenberg-Marquardt did not converge in {iterations} iterations (chi2 = {chi2:.4e})"
        )));
    }
    let j = jacobian(&p, &r, &mut residuals)?;
    let jtj = j.transpose() * &j;
    let covariance = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit(format!("singular Jacobian at solution (chi2 = {chi2:.4e})")))?;
    Ok(LmFit {
        params: p,
        covariance,
        chi2,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_design_recovers_coefficients() {
        let xs: Vec<f64> = (-10..=10).map(|i| i as f64).collect();
        let design = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(j as i32));
        let y: Vec<f64> = xs.iter().map(|x| 1.5 - 0.5 * x + 0.25 * x * x).collect();
        let fit = linear_least_squares(&design, &y).unwrap();
        assert!((fit.params[0] - 1.5).abs() < 1e-12);
        assert!((fit.params[1] + 0.5).abs() < 1e-12);
        assert!((fit.params[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weighted_line_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = weighted_line(&x, &y, &[1.0, 2.0, 1.0, 0.5]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.chi2 < 1e-20);
    }

    #[test]
    fn weighted_line_rejects_bad_sigma() {
        let r = weighted_line(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]);
        assert!(matches!(r, Err(Error::Weighting(_))));
    }

    #[test]
    fn lm_fits_exponential() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let opts = LmOptions {
            max_iter: 200,
            fd_rel_step: 1e-7,
            tol: 1e-10,
            lower: vec![f64::NEG_INFINITY; 2],
        };
        let fit = levenberg_marquardt(
            |p| Ok(t.iter().zip(&y).map(|(t, y)| y - p[0] * (-p[1] * t).exp()).collect()),
            &[1.0, 0.5],
            &opts,
        )
        .unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-7 && (fit.params[1] - 1.3).abs() < 1e-7);
    }
}

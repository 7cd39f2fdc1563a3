use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Central-difference step for numerical gradients.
    pub fd_step: f64,
    /// Convergence threshold on the gradient 2-norm.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            fd_step: 0.1,
            grad_tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

pub fn numerical_gradient<F>(f: &mut F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with central-difference gradients and a backtracking Armijo line search.
pub fn minimize_bfgs<F>(mut f: F, x0: &[f64], opts: &MinimizeOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)?;
    let mut g = numerical_gradient(&mut f, &x, opts.fd_step)?;
    // inverse Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut scaled = false;
    let mut trace = Vec::new();

    for iter in 0..opts.max_iter {
        let gn = norm(&g);
        if trace.len() < 64 {
            trace.push(format!("iter {iter}: f = {fx:.12e}, |g| = {gn:.3e}"));
        }
        if gn < opts.grad_tol {
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm: gn,
                iterations: iter,
            });
        }
        let mut d = matvec(&hinv, &g);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            hinv = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = f(&xn)?;
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            return Err(Error::Optimization {
                iterations: iter,
                reason: format!("line search failed at |g| = {gn:.3e}"),
                trace,
            });
        };
        let gnew = numerical_gradient(&mut f, &xn, opts.fd_step)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if !scaled {
                let yy = dot(&y, &y);
                let gamma = sy / yy;
                hinv = identity(n);
                hinv.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        x = xn;
        fx = fnew;
        g = gnew;
    }
    Err(Error::Optimization {
        iterations: opts.max_iter,
        reason: format!("gradient norm {:.3e} above tolerance {:.3e}", norm(&g), opts.grad_tol),
        trace,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = matvec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Golden-section minimization on [a, b].
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let opts = MinimizeOptions {
            fd_step: 1e-6,
            grad_tol: 1e-7,
            max_iter: 500,
        };
        let m = minimize_bfgs(f, &[-1.2, 1.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn exhausted_iterations_report_trace() {
        let f = |x: &[f64]| Ok(x[0].exp());
        let opts = MinimizeOptions {
            fd_step: 1e-4,
            grad_tol: 1e-12,
            max_iter: 5,
        };
        match minimize_bfgs(f, &[0.0], &opts) {
            Err(Error::Optimization { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected optimization error, got {other:?}"),
        }
    }

    #[test]
    fn golden_section_parabola() {
        let (x, _) = golden_section(|x| Ok((x - 0.3).powi(2)), -1.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
    }
}

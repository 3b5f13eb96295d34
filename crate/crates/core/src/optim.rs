//! Small unconstrained minimizers: Nelder–Mead simplex search and a BFGS
//! refinement driven by central-difference gradients.
//!
//! Objectives may return `f64::INFINITY` (or NaN) to reject a point; both
//! methods treat such points as worse than any finite value.

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Spread of objective values across the simplex, relative to `1 + |f|`.
    pub f_tol: f64,
    /// Largest vertex distance from the best vertex.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iterations: 2000, f_tol: 1e-10, x_tol: 1e-8 }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one initial step per coordinate");
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        // Stable sort keeps the ordering deterministic on ties.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let spread = if worst.is_finite() { (worst - best).abs() } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + best.abs()) && size <= opts.x_tol.max(1e-3 * opts.f_tol.sqrt()) {
            converged = true;
            break;
        }
        if size <= opts.x_tol && spread.is_finite() {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
        };

        let reflected = along(-1.0);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = along(-2.0);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = along(-0.5);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(0.5);
            let fc = eval(&c);
            (c, fc)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // Shrink toward the best vertex.
        let best_vertex = simplex[0].clone();
        for i in 1..=n {
            let shrunk: Vec<f64> = best_vertex.iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }

    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is never empty");
    Minimum {
        x: simplex[best_idx].clone(),
        f: values[best_idx],
        iterations,
        evaluations,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Converged when the sup-norm of the gradient is below `g_tol * (1 + |f|)`.
    pub g_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iterations: 200, g_tol: 1e-8 }
    }
}

/// Central-difference gradient with steps scaled to each coordinate.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Option<Vec<f64>> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = sanitize(f(&probe));
        probe[i] = x[i] - h;
        let down = sanitize(f(&probe));
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return None;
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Some(grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Quasi-Newton refinement with an Armijo backtracking line search, using
/// finite-difference gradients.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    bfgs_with_gradient(&f, |x| central_gradient(&f, x), x0, opts)
}

/// BFGS with a caller-supplied gradient. `grad` returns `None` where the
/// objective is not finite.
pub fn bfgs_with_gradient<F, G>(f: F, grad: G, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut evaluations = 2;
    let mut x = x0.to_vec();
    let mut fx = sanitize(f(&x));
    let mut inv_h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    let Some(mut g) = (if fx.is_finite() { grad(&x) } else { None }) else {
        return Minimum { x, f: fx, iterations: 0, evaluations, converged: false };
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut stalls = 0;
    while iterations < opts.max_iterations {
        let g_norm = sup_norm(&g);
        if g_norm <= opts.g_tol * (1.0 + fx.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut dir: Vec<f64> = inv_h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // Not a descent direction: reset the curvature model.
            for (i, row) in inv_h.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j { 1.0 } else { 0.0 };
                }
            }
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = sanitize(f(&trial));
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No further decrease is representable; the point is as good as
            // the gradient can resolve.
            converged = g_norm <= opts.g_tol.sqrt() * (1.0 + fx.abs());
            break;
        };
        evaluations += 1;
        let Some(g_new) = grad(&x_new) else {
            x = x_new;
            fx = f_new;
            break;
        };

        let improvement = fx - f_new;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let hy: Vec<f64> = inv_h.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    inv_h[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;

        if improvement <= 1e-14 * (1.0 + fx.abs()) {
            stalls += 1;
            if stalls >= 3 {
                converged = sup_norm(&g) <= opts.g_tol.sqrt() * (1.0 + fx.abs());
                break;
            }
        } else {
            stalls = 0;
        }
    }

    Minimum { x, f: fx, iterations, evaluations, converged }
}

/// Damped Newton steps from a point already near a minimum, with the
/// Hessian taken as the symmetrized finite difference of `grad`. Returns
/// the input unchanged if no step improves on it.
pub fn newton_polish<F, G>(f: F, grad: G, x0: &[f64], max_steps: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = sanitize(f(&x));
    if !fx.is_finite() {
        return (x, fx);
    }
    for _ in 0..max_steps {
        let Some(g) = grad(&x) else { break };
        let mut hess = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut probe = x.clone();
        let mut ok = true;
        for i in 0..n {
            let h = 1e-5 * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = grad(&probe);
            probe[i] = x[i] - h;
            let down = grad(&probe);
            probe[i] = x[i];
            match (up, down) {
                (Some(u), Some(d)) => {
                    for j in 0..n {
                        hess[(i, j)] = (u[j] - d[j]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let gv = nalgebra::DVector::from_column_slice(&g);
        let scale = (0..n).fold(0.0_f64, |m, i| m.max(hess[(i, i)].abs())).max(1e-300);
        let mut damping = 0.0;
        let mut moved = false;
        for _ in 0..12 {
            let shifted = &hess + nalgebra::DMatrix::<f64>::identity(n, n) * (damping * scale);
            if let Some(chol) = shifted.cholesky() {
                let step = chol.solve(&(-&gv));
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
                let ft = sanitize(f(&trial));
                // Near the optimum the objective is flat to rounding, so a
                // smaller gradient also counts as progress.
                let slack = 8.0 * f64::EPSILON * (1.0 + fx.abs());
                let better = ft.is_finite()
                    && (ft < fx - slack
                        || (ft <= fx + slack && grad(&trial).is_some_and(|gt| sup_norm(&gt) < sup_norm(&g))));
                if better {
                    let tiny = sup_norm(step.as_slice()) <= 1e-13 * (1.0 + sup_norm(&x));
                    x = trial;
                    fx = ft;
                    moved = !tiny;
                    break;
                }
            }
            damping = if damping == 0.0 { 1e-8 } else { damping * 100.0 };
        }
        if !moved {
            break;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let opts = NelderMeadOptions { max_iterations: 5000, f_tol: 1e-14, x_tol: 1e-10 };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn bfgs_polishes_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], &BfgsOptions { max_iterations: 500, g_tol: 1e-9 });
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn infinite_region_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 1.0).powi(2) };
        let m = nelder_mead(f, &[2.0], &[1.0], &NelderMeadOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        let m = bfgs(f, &[0.8], &BfgsOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn newton_polish_lands_on_the_exact_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(4) + (x[1] + 2.0).powi(2);
        let g = |x: &[f64]| Some(vec![2.0 * (x[0] - 1.0), 40.0 * (x[1] + 2.0).powi(3) + 2.0 * (x[1] + 2.0)]);
        let (x, _) = newton_polish(f, g, &[0.9, -1.9], 50);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-9, "{x:?}");
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| 3.0 * (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2) + 0.5 * x[0] * x[1];
        let m = bfgs(f, &[0.0, 0.0], &BfgsOptions::default());
        assert!(m.converged);
        // Stationary point of the bowl solved by hand.
        let det = 6.0 * 2.0 - 0.25;
        let x0 = (12.0 * 2.0 - 0.5 * -2.0) / det;
        let x1 = (6.0 * -2.0 - 0.5 * 12.0) / det;
        assert!((m.x[0] - x0).abs() < 1e-6 && (m.x[1] - x1).abs() < 1e-6, "{:?} vs {x0} {x1}", m.x);
    }
}

//! Small dense nonlinear-programming engine.
//!
//! Minimizes `f(x)` subject to `h(x) = 0` and `g(x) ≥ 0` with a
//! Powell–Hestenes–Rockafellar augmented Lagrangian. Each subproblem is solved
//! by a trust-region Newton method using the exact Hessian; the trust-region
//! step comes from a full eigendecomposition, which is cheap at the sizes
//! used here (tens of variables).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Twice-differentiable program with equalities listed before inequalities.
pub trait Nlp {
    fn dim(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;

    fn num_constraints(&self) -> usize {
        self.num_eq() + self.num_ineq()
    }

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Equalities first, then inequalities in the form `g(x) ≥ 0`.
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    /// Adds the constraint Jacobian (rows follow [`Nlp::constraints`]) into a
    /// zeroed matrix.
    fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>);
    /// Adds `w_f ∇²f + Σ w_c[j] ∇²c_j` into `out`.
    fn hessian(&self, x: &[f64], w_f: f64, w_c: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct AlmSettings {
    /// Target constraint violation.
    pub feas_tol: f64,
    /// Target infinity norm of the Lagrangian gradient.
    pub stat_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub mu0: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    pub initial_radius: f64,
}

impl Default for AlmSettings {
    fn default() -> Self {
        Self {
            feas_tol: 1e-10,
            stat_tol: 1e-8,
            max_outer: 60,
            max_inner: 300,
            mu0: 10.0,
            mu_growth: 10.0,
            mu_max: 1e12,
            initial_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlmResult {
    pub x: Vec<f64>,
    /// Multipliers; inequality entries are non-negative.
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// `‖∇f − Jᵀλ‖∞`.
    pub stationarity: f64,
    /// `max_j |min(g_j, λ_j)|` over inequalities.
    pub complementarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Set when a non-finite value appeared during the solve.
    pub numerical_failure: bool,
}

struct Workspace {
    c: Vec<f64>,
    jac: DMatrix<f64>,
    grad_f: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            c: vec![0.0; m],
            jac: DMatrix::zeros(m, n),
            grad_f: vec![0.0; n],
        }
    }
}

/// Shifted multipliers `λ̃`; the merit gradient is `∇f − Jᵀλ̃`.
fn shifted(lambda: &[f64], c: &[f64], mu: f64, n_eq: usize) -> Vec<f64> {
    lambda
        .iter()
        .zip(c)
        .enumerate()
        .map(|(j, (&l, &cj))| {
            let s = l - mu * cj;
            if j < n_eq {
                s
            } else {
                s.max(0.0)
            }
        })
        .collect()
}

fn merit_value<P: Nlp + ?Sized>(p: &P, x: &[f64], lambda: &[f64], mu: f64, c: &mut [f64]) -> f64 {
    let n_eq = p.num_eq();
    p.constraints(x, c);
    let mut v = p.objective(x);
    for (j, (&l, &cj)) in lambda.iter().zip(c.iter()).enumerate() {
        if j < n_eq || l - mu * cj > 0.0 {
            v += -l * cj + 0.5 * mu * cj * cj;
        } else {
            v += -0.5 * l * l / mu;
        }
    }
    v
}

fn max_violation(c: &[f64], n_eq: usize) -> f64 {
    c.iter()
        .enumerate()
        .map(|(j, &cj)| if j < n_eq { cj.abs() } else { (-cj).max(0.0) })
        .fold(0.0, f64::max)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Computes `∇f − Jᵀw` into `out`.
fn lagrangian_gradient(ws: &Workspace, w: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&ws.grad_f);
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= wj * ws.jac[(j, i)];
            }
        }
    }
}

fn evaluate_first_order<P: Nlp + ?Sized>(p: &P, x: &[f64], ws: &mut Workspace) {
    p.constraints(x, &mut ws.c);
    p.gradient(x, &mut ws.grad_f);
    ws.jac.fill(0.0);
    p.jacobian(x, &mut ws.jac);
}

/// Solves `min gᵀs + ½sᵀBs` subject to `‖s‖ ≤ Δ`, including the hard case.
pub fn trust_region_step(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> DVector<f64> {
    let n = g.len();
    let eig = SymmetricEigen::new(b.clone());
    let lam = &eig.eigenvalues;
    let q = &eig.eigenvectors;
    let gt = q.transpose() * g;
    let scale = lam.iter().fold(1.0_f64, |m, l| m.max(l.abs()));
    let tiny = 1e-13 * scale;
    let (imin, lmin) = lam
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });

    let step = |sigma: f64| -> (DVector<f64>, f64) {
        let mut coef = DVector::zeros(n);
        for i in 0..n {
            let d = lam[i] + sigma;
            if d > tiny {
                coef[i] = -gt[i] / d;
            }
        }
        let norm = coef.norm();
        (q * coef, norm)
    };
    // Components that would blow up at the smallest admissible shift.
    let sigma_lo = (-lmin).max(0.0);
    let singular_pull = (0..n)
        .filter(|&i| lam[i] + sigma_lo <= tiny)
        .map(|i| gt[i].abs())
        .fold(0.0, f64::max);
    let gnorm = g.norm();

    if singular_pull <= 1e-14 * gnorm.max(1e-300) {
        let (s, norm) = step(sigma_lo);
        if norm <= delta {
            if lmin >= -tiny {
                return s;
            }
            // Hard case: move along the leftmost eigenvector to the boundary.
            let tau = (delta * delta - norm * norm).max(0.0).sqrt();
            return s + q.column(imin) * tau;
        }
    }

    let mut lo = sigma_lo;
    let mut hi = sigma_lo + gnorm / delta + scale;
    for _ in 0..200 {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let (_, norm) = step(mid);
        if norm > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    step(hi).0
}

struct Inner {
    iterations: usize,
    radius: f64,
    failed: bool,
}

/// Trust-region Newton on the augmented Lagrangian for fixed `λ`, `μ`.
fn minimize_merit<P: Nlp + ?Sized>(
    p: &P,
    x: &mut Vec<f64>,
    lambda: &[f64],
    mu: f64,
    tol: f64,
    max_iter: usize,
    mut radius: f64,
    ws: &mut Workspace,
) -> Inner {
    let n = p.dim();
    let n_eq = p.num_eq();
    let m = p.num_constraints();
    let mut c_trial = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    let mut value = merit_value(p, x, lambda, mu, &mut c_trial);
    if !value.is_finite() {
        return Inner { iterations: 0, radius, failed: true };
    }
    let mut iterations = 0;
    let mut fresh = true;
    while iterations < max_iter {
        if fresh {
            evaluate_first_order(p, x, ws);
            let w = shifted(lambda, &ws.c, mu, n_eq);
            lagrangian_gradient(ws, &w, &mut grad);
            if inf_norm(&grad) <= tol {
                break;
            }
            hess.fill(0.0);
            let neg_w: Vec<f64> = w.iter().map(|v| -v).collect();
            p.hessian(x, 1.0, &neg_w, &mut hess);
            for j in 0..m {
                if j < n_eq || lambda[j] - mu * ws.c[j] > 0.0 {
                    let row = ws.jac.row(j);
                    hess.ger(mu, &row.transpose(), &row.transpose(), 1.0);
                }
            }
            if hess.iter().any(|v| !v.is_finite()) {
                return Inner { iterations, radius, failed: true };
            }
        }
        iterations += 1;
        let g = DVector::from_column_slice(&grad);
        let s = trust_region_step(&hess, &g, radius);
        let snorm = s.norm();
        let pred = -(g.dot(&s) + 0.5 * s.dot(&(&hess * &s)));
        let trial: Vec<f64> = x.iter().zip(s.iter()).map(|(a, b)| a + b).collect();
        let trial_value = merit_value(p, &trial, lambda, mu, &mut c_trial);
        let actual = value - trial_value;
        // Near a minimizer the reduction is lost in rounding; trust the model.
        let noise = 1e-13 * value.abs().max(1.0);
        let rho = if pred > 0.0 && pred < noise && actual > -noise {
            1.0
        } else if pred > 0.0 {
            actual / pred
        } else {
            -1.0
        };
        if !trial_value.is_finite() || rho < 0.25 {
            radius = 0.25 * snorm.max(radius * 1e-3);
        } else if rho > 0.75 && snorm >= 0.99 * radius {
            radius = (2.0 * radius).min(1e3);
        }
        if trial_value.is_finite() && (rho > 1e-4 || (pred <= 0.0 && actual > 0.0)) {
            *x = trial;
            value = trial_value;
            fresh = true;
        } else {
            fresh = false;
        }
        if radius < 1e-15 || (pred <= 1e-300 && actual <= 0.0 && !fresh) {
            break;
        }
    }
    Inner {
        iterations,
        radius,
        failed: false,
    }
}

/// Augmented-Lagrangian solve starting from `x0`.
pub fn solve<P: Nlp + ?Sized>(p: &P, x0: &[f64], settings: &AlmSettings) -> AlmResult {
    let n = p.dim();
    let n_eq = p.num_eq();
    let m = p.num_constraints();
    let mut ws = Workspace::new(n, m);
    let mut x = x0.to_vec();
    let mut lambda = vec![0.0; m];
    let mut mu = settings.mu0;
    let mut omega = 1.0 / mu;
    let mut eta = 1.0 / mu.powf(0.1);
    let mut radius = settings.initial_radius;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;
    let mut failed = false;
    let mut grad = vec![0.0; n];

    while outer < settings.max_outer {
        outer += 1;
        let tol = omega.max(0.1 * settings.stat_tol);
        let inner = minimize_merit(p, &mut x, &lambda, mu, tol, settings.max_inner, radius, &mut ws);
        inner_total += inner.iterations;
        if inner.failed {
            failed = true;
            break;
        }
        radius = inner.radius.max(1e-3).min(settings.initial_radius * 4.0);
        evaluate_first_order(p, &x, &mut ws);
        // Violation measured against the multiplier-shifted bound.
        let v = ws
            .c
            .iter()
            .enumerate()
            .map(|(j, &cj)| {
                if j < n_eq {
                    cj.abs()
                } else {
                    cj.min(lambda[j] / mu).abs()
                }
            })
            .fold(0.0, f64::max);
        if v <= eta.max(settings.feas_tol) {
            lambda = shifted(&lambda, &ws.c, mu, n_eq);
            lagrangian_gradient(&ws, &lambda, &mut grad);
            let stat = inf_norm(&grad);
            let viol = max_violation(&ws.c, n_eq);
            let comp = complementarity(&ws.c, &lambda, n_eq);
            if viol <= settings.feas_tol && stat <= settings.stat_tol && comp <= settings.feas_tol.max(1e-9) {
                converged = true;
                break;
            }
            eta = (eta / mu.powf(0.9)).max(0.1 * settings.feas_tol);
            omega = (omega / mu).max(0.1 * settings.stat_tol);
        } else if mu < settings.mu_max {
            mu *= settings.mu_growth;
            eta = 1.0 / mu.powf(0.1);
            omega = 1.0 / mu;
        } else {
            break;
        }
    }

    if !failed {
        project_onto_active_set(p, &mut x, &lambda, &mut ws);
    }
    let objective = p.objective(&x);
    evaluate_first_order(p, &x, &mut ws);
    lagrangian_gradient(&ws, &lambda, &mut grad);
    let numerical_failure = failed
        || !objective.is_finite()
        || ws.c.iter().any(|v| !v.is_finite())
        || grad.iter().any(|v| !v.is_finite());
    AlmResult {
        objective,
        max_violation: max_violation(&ws.c, n_eq),
        stationarity: inf_norm(&grad),
        complementarity: complementarity(&ws.c, &lambda, n_eq),
        lambda,
        x,
        outer_iterations: outer,
        inner_iterations: inner_total,
        converged,
        numerical_failure,
    }
}

fn complementarity(c: &[f64], lambda: &[f64], n_eq: usize) -> f64 {
    (n_eq..c.len())
        .map(|j| c[j].min(lambda[j]).abs())
        .fold(0.0, f64::max)
}

/// Gauss–Newton cleanup: drives equalities and nearly active inequalities to
/// zero with minimum-norm steps. Keeps the result only if violation drops.
fn project_onto_active_set<P: Nlp + ?Sized>(p: &P, x: &mut Vec<f64>, lambda: &[f64], ws: &mut Workspace) {
    let n = p.dim();
    let n_eq = p.num_eq();
    evaluate_first_order(p, x, ws);
    let start_viol = max_violation(&ws.c, n_eq);
    if start_viol == 0.0 {
        return;
    }
    let active: Vec<usize> = (0..ws.c.len())
        .filter(|&j| j < n_eq || ws.c[j] < 1e-7 || lambda[j] > 0.0)
        .collect();
    let mut best = x.clone();
    let mut best_viol = start_viol;
    let mut cur = x.clone();
    for _ in 0..6 {
        let mut a = DMatrix::zeros(active.len(), n);
        let mut r = DVector::zeros(active.len());
        for (row, &j) in active.iter().enumerate() {
            a.row_mut(row).copy_from(&ws.jac.row(j));
            r[row] = ws.c[j];
        }
        let svd = a.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1e-300);
        let Ok(dx) = svd.solve(&r, tol) else { break };
        for i in 0..n {
            cur[i] -= dx[i];
        }
        evaluate_first_order(p, &cur, ws);
        let viol = max_violation(&ws.c, n_eq);
        if !viol.is_finite() {
            break;
        }
        if viol < best_viol {
            best_viol = viol;
            best.copy_from_slice(&cur);
        }
        if viol <= 1e-15 {
            break;
        }
    }
    *x = best;
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x−2)² + (y−1)²  s.t.  x² ≤ y,  x + y = 2 (optimum at (1, 1)).
    struct Toy;

    impl Nlp for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn num_eq(&self) -> usize {
            1
        }
        fn num_ineq(&self) -> usize {
            1
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2)
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            out[0] = 2.0 * (x[0] - 2.0);
            out[1] = 2.0 * (x[1] - 1.0);
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] + x[1] - 2.0;
            out[1] = x[1] - x[0] * x[0];
        }
        fn jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] += 1.0;
            out[(0, 1)] += 1.0;
            out[(1, 0)] += -2.0 * x[0];
            out[(1, 1)] += 1.0;
        }
        fn hessian(&self, _x: &[f64], w_f: f64, w_c: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] += 2.0 * w_f - 2.0 * w_c[1];
            out[(1, 1)] += 2.0 * w_f;
        }
    }

    #[test]
    fn solves_toy_problem() {
        let r = solve(&Toy, &[-3.0, 4.0], &AlmSettings::default());
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!(r.max_violation < 1e-10);
        assert!(r.lambda[1] > 0.0);
    }

    #[test]
    fn trust_region_interior_newton_step() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let g = DVector::from_vec(vec![2.0, 4.0]);
        let s = trust_region_step(&b, &g, 10.0);
        assert!((s[0] + 1.0).abs() < 1e-12 && (s[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn trust_region_boundary_step() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0]));
        let g = DVector::from_vec(vec![3.0, 4.0]);
        let s = trust_region_step(&b, &g, 1.0);
        assert!((s.norm() - 1.0).abs() < 1e-10);
        assert!((s[0] + 0.6).abs() < 1e-8 && (s[1] + 0.8).abs() < 1e-8);
    }

    #[test]
    fn trust_region_hard_case() {
        // Gradient orthogonal to the negative-curvature direction.
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let g = DVector::from_vec(vec![0.0, 1.0]);
        let s = trust_region_step(&b, &g, 2.0);
        assert!((s.norm() - 2.0).abs() < 1e-10);
        assert!(s[0].abs() > 1.0);
        let model = g.dot(&s) + 0.5 * s.dot(&(&b * &s));
        // Moving only along the positive-curvature axis would give −0.25.
        assert!(model < -0.25);
    }

    #[test]
    fn trust_region_indefinite_boundary() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = DVector::from_vec(vec![1.0, 0.5]);
        let s = trust_region_step(&b, &g, 1.5);
        assert!((s.norm() - 1.5).abs() < 1e-9);
        let model = |s: &DVector<f64>| g.dot(s) + 0.5 * s.dot(&(&b * s));
        // Compare against a fine sweep of the boundary circle.
        let best = (0..20000)
            .map(|k| {
                let th = k as f64 * std::f64::consts::TAU / 20000.0;
                model(&DVector::from_vec(vec![1.5 * th.cos(), 1.5 * th.sin()]))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(model(&s) <= best + 1e-6);
    }
}

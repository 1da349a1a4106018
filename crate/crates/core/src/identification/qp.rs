//! Dense convex QP `min ½xᵀPx + qᵀx  s.t.  l ≤ Ax ≤ u` by operator splitting
//! (ADMM in the OSQP form) with Ruiz equilibration, adaptive step and an
//! active-set polish of the final iterate.
//!
//! Multiplier sign convention: `y_i > 0` at an active upper bound, `y_i < 0`
//! at an active lower bound, stationarity `Px + q + Aᵀy = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub check_interval: usize,
    pub polish: bool,
    pub scaling_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            max_iter: 200_000,
            check_interval: 25,
            polish: true,
            scaling_iters: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Solved,
    /// Solved and refined on the identified active set.
    Polished,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl QpSolution {
    pub fn converged(&self) -> bool {
        self.status != QpStatus::MaxIterations
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

impl QpProblem {
    /// Unscaled primal and dual residuals (∞-norm).
    pub fn residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
        let ax = &self.a * x;
        let mut prim: f64 = 0.0;
        for i in 0..ax.len() {
            prim = prim.max(self.l[i] - ax[i]).max(ax[i] - self.u[i]);
        }
        let dual = &self.p * x + &self.q + self.a.transpose() * y;
        (prim.max(0.0), inf_norm(&dual))
    }

    fn n(&self) -> usize {
        self.p.nrows()
    }

    fn m(&self) -> usize {
        self.a.nrows()
    }
}

struct Scaled {
    prob: QpProblem,
    d: DVector<f64>,
    e: DVector<f64>,
    c: f64,
}

fn ruiz(prob: &QpProblem, iters: usize) -> Scaled {
    let (n, m) = (prob.n(), prob.m());
    let mut p = prob.p.clone();
    let mut q = prob.q.clone();
    let mut a = prob.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut c = 1.0;
    let clip = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let mut dd = DVector::zeros(n);
        for j in 0..n {
            let col = p.column(j).amax().max(a.column(j).amax());
            dd[j] = 1.0 / clip(col).sqrt();
        }
        let mut de = DVector::zeros(m);
        for i in 0..m {
            de[i] = 1.0 / clip(a.row(i).amax()).sqrt();
        }
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                a[(i, j)] *= de[i] * dd[j];
            }
            q[j] *= dd[j];
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
        // Cost scaling.
        let mean_col = (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n.max(1) as f64;
        let gamma = 1.0 / clip(mean_col.max(q.amax()));
        p *= gamma;
        q *= gamma;
        c *= gamma;
    }
    let l = prob.l.component_mul(&e);
    let u = prob.u.component_mul(&e);
    Scaled {
        prob: QpProblem { p, q, a, l, u },
        d,
        e,
        c,
    }
}

fn factor(p: &DMatrix<f64>, a: &DMatrix<f64>, sigma: f64, rho: &DVector<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = p.nrows();
    let mut k = p + DMatrix::identity(n, n) * sigma;
    let ar = DMatrix::from_fn(a.nrows(), n, |i, j| a[(i, j)] * rho[i]);
    k += a.transpose() * ar;
    k.cholesky()
}

fn rho_vector(prob: &QpProblem, rho: f64) -> DVector<f64> {
    DVector::from_fn(prob.m(), |i, _| {
        let (l, u) = (prob.l[i], prob.u[i]);
        if l == f64::NEG_INFINITY && u == f64::INFINITY {
            1e-6
        } else if (u - l).abs() < 1e-12 {
            rho * 1e3
        } else {
            rho
        }
    })
}

/// Solves the QP. Returns the last iterate with `MaxIterations` status when
/// the tolerances were not met.
pub fn solve_qp(prob: &QpProblem, settings: &QpSettings) -> QpSolution {
    let (n, m) = (prob.n(), prob.m());
    let sc = ruiz(prob, settings.scaling_iters);
    let s = &sc.prob;
    let mut rho = settings.rho;
    let mut rv = rho_vector(s, rho);
    let mut chol = factor(&s.p, &s.a, settings.sigma, &rv).expect("P + σI + ρAᵀA is positive definite");
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let at = s.a.transpose();
    let unscale = |x: &DVector<f64>, y: &DVector<f64>| (x.component_mul(&sc.d), y.component_mul(&sc.e) / sc.c);
    let mut last_polish = usize::MAX;
    let alpha = settings.alpha;
    let mut iter = 0;
    while iter < settings.max_iter {
        iter += 1;
        let rhs = &x * settings.sigma - &s.q + &at * (rv.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &s.a * &xt;
        let x_new = &xt * alpha + &x * (1.0 - alpha);
        let z_relax = &zt * alpha + &z * (1.0 - alpha);
        let mut z_new = &z_relax + y.component_div(&rv);
        for i in 0..m {
            z_new[i] = z_new[i].clamp(s.l[i], s.u[i]);
        }
        y += rv.component_mul(&(z_relax - &z_new));
        x = x_new;
        z = z_new;

        if iter % settings.check_interval != 0 && iter != settings.max_iter {
            continue;
        }
        let (xu, yu) = unscale(&x, &y);
        let ax = &prob.a * &xu;
        let zu = z.component_div(&sc.e);
        let r_prim = inf_norm(&(&ax - &zu));
        let px = &prob.p * &xu;
        let aty = prob.a.transpose() * &yu;
        let r_dual = inf_norm(&(&px + &prob.q + &aty));
        let eps_prim = settings.eps_abs + settings.eps_rel * inf_norm(&ax).max(inf_norm(&zu));
        let eps_dual = settings.eps_abs + settings.eps_rel * inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&prob.q));
        if r_prim <= eps_prim && r_dual <= eps_dual {
            let mut sol = QpSolution {
                x: xu,
                y: yu,
                status: QpStatus::Solved,
                iterations: iter,
                primal_residual: r_prim,
                dual_residual: r_dual,
            };
            if settings.polish {
                if let Some(p) = polish(prob, &sol, settings) {
                    sol = p;
                }
            }
            return sol;
        }
        // Try an early polish once the iterate is moderately accurate.
        let moderate = r_prim <= 1e4 * eps_prim.max(1e-7) && r_dual <= 1e4 * eps_dual.max(1e-7);
        if settings.polish && moderate && (last_polish == usize::MAX || iter >= last_polish + 20 * settings.check_interval) {
            last_polish = iter;
            let trial = QpSolution {
                x: xu.clone(),
                y: yu.clone(),
                status: QpStatus::Solved,
                iterations: iter,
                primal_residual: r_prim,
                dual_residual: r_dual,
            };
            if let Some(p) = polish(prob, &trial, settings) {
                return p;
            }
        }
        // Adaptive step.
        let sx = &s.a * &x;
        let prim_s = inf_norm(&(&sx - &z)) / inf_norm(&sx).max(inf_norm(&z)).max(1e-30);
        let dual_s = inf_norm(&(&s.p * &x + &s.q + &at * &y))
            / inf_norm(&(&s.p * &x)).max(inf_norm(&(&at * &y))).max(inf_norm(&s.q)).max(1e-30);
        let ratio = (prim_s / dual_s.max(1e-30)).sqrt();
        let new_rho = (rho * ratio).clamp(1e-6, 1e6);
        if !(0.2..=5.0).contains(&(new_rho / rho)) {
            rho = new_rho;
            rv = rho_vector(s, rho);
            if let Some(c) = factor(&s.p, &s.a, settings.sigma, &rv) {
                chol = c;
            }
        }
    }
    let (xu, yu) = unscale(&x, &y);
    let (r_prim, r_dual) = prob.residuals(&xu, &yu);
    QpSolution {
        x: xu,
        y: yu,
        status: QpStatus::MaxIterations,
        iterations: iter,
        primal_residual: r_prim,
        dual_residual: r_dual,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Lower,
    Upper,
}

/// Solves the equality-constrained KKT system on an active set.
fn kkt_solve(prob: &QpProblem, active: &[(usize, Bound)]) -> Option<(DVector<f64>, DVector<f64>)> {
    let (n, k) = (prob.n(), active.len());
    let params = 1e-11 * prob.p.amax().max(1.0);
    let build = |reg: f64| {
        let mut kk = DMatrix::zeros(n + k, n + k);
        kk.view_mut((0, 0), (n, n)).copy_from(&prob.p);
        for i in 0..n {
            kk[(i, i)] += reg;
        }
        for (r, &(row, _)) in active.iter().enumerate() {
            for j in 0..n {
                kk[(n + r, j)] = prob.a[(row, j)];
                kk[(j, n + r)] = prob.a[(row, j)];
            }
            kk[(n + r, n + r)] = -reg;
        }
        kk
    };
    let exact = build(0.0);
    let reg = build(params);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, &(row, b)) in active.iter().enumerate() {
        rhs[n + r] = if b == Bound::Lower { prob.l[row] } else { prob.u[row] };
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let res = &rhs - &exact * &sol;
        let corr = lu.solve(&res)?;
        sol += corr;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(prob.m());
    for (r, &(row, _)) in active.iter().enumerate() {
        y[row] = sol[n + r];
    }
    Some((x, y))
}

/// Primal-dual active-set refinement seeded from an ADMM iterate.
fn polish(prob: &QpProblem, sol: &QpSolution, settings: &QpSettings) -> Option<QpSolution> {
    let m = prob.m();
    let ax = &prob.a * &sol.x;
    let scale_row = |i: usize| 1.0 + prob.a.row(i).amax() * inf_norm(&sol.x);
    let mut active: Vec<(usize, Bound)> = Vec::new();
    for i in 0..m {
        let tol = 1e-7 * scale_row(i);
        if sol.y[i] < 0.0 || (prob.l[i].is_finite() && ax[i] - prob.l[i] < tol && sol.y[i] <= 0.0) {
            if prob.l[i].is_finite() {
                active.push((i, Bound::Lower));
            }
        } else if (sol.y[i] > 0.0 || (prob.u[i].is_finite() && prob.u[i] - ax[i] < tol)) && prob.u[i].is_finite() {
            active.push((i, Bound::Upper));
        }
    }
    // Keep only bounds whose multiplier is clearly nonzero or that are tight.
    for _round in 0..50 {
        let (x, y) = kkt_solve(prob, &active)?;
        let ax = &prob.a * &x;
        let y_scale = inf_norm(&y).max(inf_norm(&prob.q)).max(1e-300);
        let mut changed = false;
        // Drop wrong-sign multipliers.
        let before = active.len();
        active.retain(|&(i, b)| match b {
            Bound::Lower => y[i] <= 1e-12 * y_scale,
            Bound::Upper => y[i] >= -1e-12 * y_scale,
        });
        changed |= active.len() != before;
        // Add violated constraints.
        for i in 0..m {
            if active.iter().any(|&(r, _)| r == i) {
                continue;
            }
            let tol = 1e-12 * scale_row(i);
            if ax[i] < prob.l[i] - tol {
                active.push((i, Bound::Lower));
                changed = true;
            } else if ax[i] > prob.u[i] + tol {
                active.push((i, Bound::Upper));
                changed = true;
            }
        }
        if !changed {
            let (r_prim, r_dual) = prob.residuals(&x, &y);
            let scale = inf_norm(&prob.q).max(inf_norm(&(&prob.p * &x))).max(1.0);
            if r_dual <= 1e-9 * scale + settings.eps_abs {
                return Some(QpSolution {
                    x,
                    y,
                    status: QpStatus::Polished,
                    iterations: sol.iterations,
                    primal_residual: r_prim,
                    dual_residual: r_dual,
                });
            }
            return None;
        }
        active.sort_by_key(|&(i, _)| i);
    }
    None
}

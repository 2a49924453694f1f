use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::polish::polish;
use super::sparse::Csr;
use super::{QpProblem, QpSettings, QpSolution, QpStatus};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;

/// Ruiz-equilibrated copy of a problem: `P̄ = c·DPD`, `q̄ = c·Dq`,
/// `Ā = EAD`, bounds `E·l`, `E·u`.
pub(crate) struct Scaled {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: Csr,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub c: f64,
}

fn clamp_norm(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

impl Scaled {
    fn new(prob: &QpProblem, iters: usize) -> Self {
        let (n, m) = (prob.n(), prob.m());
        let mut p = prob.p().clone();
        let mut q = prob.q().clone();
        let mut a = Csr::from_dense(prob.a());
        let mut d = DVector::from_element(n, 1.0);
        let mut e = DVector::from_element(m, 1.0);
        let mut c = 1.0;
        for _ in 0..iters {
            let acol = a.col_amax();
            let dt = DVector::from_fn(n, |j, _| {
                let pc = p.column(j).amax();
                1.0 / clamp_norm(pc.max(acol[j])).sqrt()
            });
            let et = DVector::from_fn(m, |i, _| 1.0 / clamp_norm(a.row_amax(i)).sqrt());
            for j in 0..n {
                for i in 0..n {
                    p[(i, j)] *= dt[i] * dt[j];
                }
            }
            q.component_mul_assign(&dt);
            a.scale(&et, &dt);
            d.component_mul_assign(&dt);
            e.component_mul_assign(&et);

            let mean_col = if n > 0 {
                (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
            } else {
                1.0
            };
            let gamma = 1.0 / clamp_norm(mean_col.max(q.amax()));
            p *= gamma;
            q *= gamma;
            c *= gamma;
        }
        let l = prob.lower().component_mul(&e);
        let u = prob.upper().component_mul(&e);
        Self { p, q, a, l, u, d, e, c }
    }

    fn rho_vector(&self, rho: f64) -> DVector<f64> {
        DVector::from_fn(self.l.len(), |i, _| {
            let (l, u) = (self.l[i], self.u[i]);
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                RHO_MIN
            } else if (u - l).abs() < 1e-12 * (1.0 + u.abs()) {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            }
        })
    }

    fn factor(&self, sigma: f64, rho: &DVector<f64>) -> Cholesky<f64, Dyn> {
        let mut shift = sigma;
        loop {
            let mut k = self.p.clone();
            for i in 0..k.nrows() {
                k[(i, i)] += shift;
            }
            self.a.add_weighted_gram(rho, &mut k);
            if let Some(ch) = Cholesky::new(k) {
                return ch;
            }
            // Only reachable for (numerically) nonconvex P.
            shift *= 1e3;
            assert!(shift < 1e12, "QP Hessian is not positive semidefinite");
        }
    }

    fn project(&self, v: &mut DVector<f64>) {
        for i in 0..v.len() {
            v[i] = v[i].clamp(self.l[i], self.u[i]);
        }
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_tol: f64,
    dual_tol: f64,
    prim_rel: f64,
    dual_rel: f64,
}

fn residuals(s: &Scaled, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, eps_abs: f64, eps_rel: f64) -> Residuals {
    let ax = s.a.mul(x);
    let mut prim = 0.0f64;
    let mut ax_norm = 0.0f64;
    let mut z_norm = 0.0f64;
    for i in 0..ax.len() {
        let inv = 1.0 / s.e[i];
        prim = prim.max(((ax[i] - z[i]) * inv).abs());
        ax_norm = ax_norm.max((ax[i] * inv).abs());
        z_norm = z_norm.max((z[i] * inv).abs());
    }
    let px = &s.p * x;
    let aty = s.a.tr_mul(y);
    let unscale = |v: &DVector<f64>| {
        v.iter()
            .zip(s.d.iter())
            .fold(0.0f64, |m, (a, d)| m.max((a / (d * s.c)).abs()))
    };
    let dual = unscale(&(&px + &s.q + &aty));
    let px_n = unscale(&px);
    let aty_n = unscale(&aty);
    let q_n = unscale(&s.q);
    let prim_scale = ax_norm.max(z_norm);
    let dual_scale = px_n.max(aty_n).max(q_n);
    Residuals {
        prim,
        dual,
        prim_tol: eps_abs + eps_rel * prim_scale,
        dual_tol: eps_abs + eps_rel * dual_scale,
        prim_rel: prim / prim_scale.max(1e-30),
        dual_rel: dual / dual_scale.max(1e-30),
    }
}

fn primal_infeasibility(s: &Scaled, dy: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let v = dy.component_mul(&s.e);
    let norm = v.amax();
    if norm < 1e-30 {
        return None;
    }
    let at = s.a.tr_mul(dy).component_div(&s.d);
    if at.amax() > eps * norm {
        return None;
    }
    let mut support = 0.0;
    for i in 0..v.len() {
        // Recover unscaled bounds.
        let (l, u) = (s.l[i] / s.e[i], s.u[i] / s.e[i]);
        if v[i] > 0.0 {
            support += u * v[i];
        } else if v[i] < 0.0 {
            support += l * v[i];
        }
    }
    if support < -eps * norm {
        Some(v / norm)
    } else {
        None
    }
}

fn dual_infeasibility(s: &Scaled, dx: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let w = dx.component_mul(&s.d);
    let norm = w.amax();
    if norm < 1e-30 {
        return None;
    }
    let pw = (&s.p * dx).component_div(&s.d) / s.c;
    if pw.amax() > eps * norm {
        return None;
    }
    if s.q.dot(dx) / s.c >= -eps * norm {
        return None;
    }
    let aw = s.a.mul(dx);
    for i in 0..aw.len() {
        let v = aw[i] / s.e[i];
        if s.u[i].is_finite() && v > eps * norm {
            return None;
        }
        if s.l[i].is_finite() && v < -eps * norm {
            return None;
        }
    }
    Some(w / norm)
}

/// Solves a convex QP by ADMM operator splitting on the Ruiz-scaled problem,
/// followed by an active-set polish step.
///
/// `warm_start` gives an initial `(x, y)` in the original coordinates.
pub fn solve(problem: &QpProblem, settings: &QpSettings, warm_start: Option<(&DVector<f64>, &DVector<f64>)>) -> QpSolution {
    let (n, m) = (problem.n(), problem.m());
    let s = Scaled::new(problem, settings.scaling_iters);
    let mut rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
    let mut rho_vec = s.rho_vector(rho);
    let mut kkt = s.factor(settings.sigma, &rho_vec);

    let (mut x, mut y) = match warm_start {
        Some((x0, y0)) if x0.len() == n && y0.len() == m => (
            x0.component_div(&s.d),
            y0.component_div(&s.e) * s.c,
        ),
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = s.a.mul(&x);
    s.project(&mut z);

    let alpha = settings.alpha;
    let mut eps_abs = settings.eps_abs;
    let mut eps_rel = settings.eps_rel;
    let mut polish_attempts = 0;
    let mut iter = 0;

    let finish = |x: &DVector<f64>, y: &DVector<f64>, status, iterations, polished, rho, certificate| {
        let xu = x.component_mul(&s.d);
        let yu = y.component_mul(&s.e) / s.c;
        let (prim_res, dual_res) = problem.kkt_residuals(&xu, &yu);
        QpSolution {
            x: xu,
            y: yu,
            status,
            prim_res,
            dual_res,
            iterations,
            polished,
            rho,
            certificate,
        }
    };

    while iter < settings.max_iter {
        iter += 1;
        let x_prev = x.clone();
        let y_prev = y.clone();

        let rhs = &x * settings.sigma - &s.q + s.a.tr_mul(&(rho_vec.component_mul(&z) - &y));
        let x_tilde = kkt.solve(&rhs);
        let z_tilde = s.a.mul(&x_tilde);
        x = &x_tilde * alpha + &x_prev * (1.0 - alpha);
        let z_relax = &z_tilde * alpha + &z * (1.0 - alpha);
        let mut z_next = &z_relax + y.component_div(&rho_vec);
        s.project(&mut z_next);
        y += rho_vec.component_mul(&(&z_relax - &z_next));
        z = z_next;

        let check = iter == 1 || iter % settings.check_interval.max(1) == 0 || iter == settings.max_iter;
        if !check {
            continue;
        }
        let res = residuals(&s, &x, &z, &y, eps_abs, eps_rel);
        if res.prim <= res.prim_tol && res.dual <= res.dual_tol {
            if settings.polish {
                if let Some((xp, yp)) = polish(&s, &z, &y, settings.polish_delta, settings.polish_refine_iters) {
                    let candidate = finish(&xp, &yp, QpStatus::Solved, iter, true, rho, None);
                    let tol = unscaled_tolerances(problem, &candidate.x, &candidate.y, settings);
                    if candidate.prim_res <= tol.0 && candidate.dual_res <= tol.1 {
                        return candidate;
                    }
                }
                polish_attempts += 1;
                if polish_attempts < 3 {
                    eps_abs *= 0.1;
                    eps_rel *= 0.1;
                    continue;
                }
            }
            return finish(&x, &y, QpStatus::Solved, iter, false, rho, None);
        }
        if m > 0 {
            if let Some(cert) = primal_infeasibility(&s, &(&y - &y_prev), settings.eps_prim_inf) {
                return finish(&x, &y, QpStatus::PrimalInfeasible, iter, false, rho, Some(cert));
            }
        }
        if let Some(cert) = dual_infeasibility(&s, &(&x - &x_prev), settings.eps_dual_inf) {
            return finish(&x, &y, QpStatus::DualInfeasible, iter, false, rho, Some(cert));
        }
        if settings.adaptive_rho && m > 0 && iter % settings.adaptive_rho_interval.max(1) == 0 {
            let tol = settings.adaptive_rho_tolerance;
            let ratio = res.prim_rel / res.dual_rel.max(1e-30);
            let new_rho = if ratio > tol {
                (rho * 10.0).min(RHO_MAX)
            } else if ratio < 1.0 / tol {
                (rho / 10.0).max(RHO_MIN)
            } else {
                rho
            };
            if new_rho != rho {
                rho = new_rho;
                rho_vec = s.rho_vector(rho);
                kkt = s.factor(settings.sigma, &rho_vec);
            }
        }
    }
    finish(&x, &y, QpStatus::MaxIter, iter, false, rho, None)
}

/// Termination thresholds evaluated on the original data at `(x, y)`.
fn unscaled_tolerances(problem: &QpProblem, x: &DVector<f64>, y: &DVector<f64>, settings: &QpSettings) -> (f64, f64) {
    let ax = problem.a() * x;
    let px = problem.p() * x;
    let aty = problem.a().tr_mul(y);
    let prim_scale = ax.amax();
    let dual_scale = px.amax().max(aty.amax()).max(problem.q().amax());
    (
        settings.eps_abs + settings.eps_rel * prim_scale,
        settings.eps_abs + settings.eps_rel * dual_scale,
    )
}

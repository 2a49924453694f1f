//! Independent oracles shared by the integration tests. Apart from
//! [`one_shot_optimum`], which reuses the QP solver on a differently posed
//! problem, nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use obilc::costspec::QuadraticCost;
use obilc::qp::{solve, QpProblem, QpSettings, RowBlock, SplitQp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// `MMᵀ + 0.1·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random feasible two-sided rows around a random point. About one row in
/// six is an equality, one in six is one-sided.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let a = random_matrix(rng, m, n);
    let x0 = random_vector(rng, n);
    let ax = &a * &x0;
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::zeros(m);
    for i in 0..m {
        let kind = rng.random_range(0..6);
        let lo = ax[i] - rng.random_range(0.0..0.5);
        let hi = ax[i] + rng.random_range(0.0..0.5);
        match kind {
            0 => {
                lower[i] = ax[i];
                upper[i] = ax[i];
            }
            1 => {
                lower[i] = f64::NEG_INFINITY;
                upper[i] = hi;
            }
            _ => {
                lower[i] = lo;
                upper[i] = hi;
            }
        }
    }
    (a, lower, upper)
}

/// Brute-force QP solution for strictly convex `P`: try every assignment of
/// rows to {inactive, at lower, at upper} with at most `n` active rows, solve
/// the equality-constrained KKT system, and keep the primal-feasible,
/// dual-feasible point with the smallest objective.
pub fn enumerate_qp(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = q.len();
    let m = a.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut state = vec![0u8; m];
    loop {
        let active: Vec<usize> = (0..m).filter(|&i| state[i] != 0).collect();
        let allowed = active.iter().all(|&i| match state[i] {
            1 => lower[i].is_finite(),
            2 => upper[i].is_finite() && lower[i] != upper[i],
            _ => true,
        });
        if allowed && active.len() <= n {
            let k = active.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(p);
            for (r, &i) in active.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = a[(i, j)];
                    kkt[(j, n + r)] = a[(i, j)];
                }
                rhs[n + r] = if state[i] == 1 { lower[i] } else { upper[i] };
            }
            rhs.rows_mut(0, n).copy_from(&(-q));
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let x = sol.rows(0, n).into_owned();
                let ax = a * &x;
                let primal_ok = (0..m).all(|i| ax[i] >= lower[i] - 1e-9 && ax[i] <= upper[i] + 1e-9);
                let dual_ok = active.iter().enumerate().all(|(r, &i)| {
                    let y = sol[n + r];
                    lower[i] == upper[i] || if state[i] == 1 { y <= 1e-9 } else { y >= -1e-9 }
                });
                if primal_ok && dual_ok {
                    let obj = 0.5 * x.dot(&(p * &x)) + q.dot(&x);
                    if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                        best = Some((obj, x));
                    }
                }
            }
        }
        // next assignment in base 3
        let mut i = 0;
        loop {
            if i == m {
                return best.map(|(_, x)| x);
            }
            state[i] += 1;
            if state[i] == 3 {
                state[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// Central-difference Jacobian of a vector function.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..x.len())
        .map(|j| {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Direct solution of `min J(u, Gu)` subject to the input rows on `u` and the
/// output rows on `Gu`, with the output eliminated by hand. Returns the
/// optimal input and cost.
pub fn one_shot_optimum(cost: &QuadraticCost, rows_u: &RowBlock, rows_p: &RowBlock, g: &DMatrix<f64>) -> (DVector<f64>, f64) {
    assert!(cost.s.amax() == 0.0, "oracle assumes no cross term");
    let p = &cost.r + g.transpose() * &cost.q * g;
    let p = (&p + p.transpose()) * 0.5;
    let q = -(&cost.r * &cost.u_ref) - g.transpose() * (&cost.q * &cost.p_ref) + &cost.gu + g.transpose() * &cost.gp;
    let (mu, mp) = (rows_u.rows(), rows_p.rows());
    let n = q.len();
    let mut a = DMatrix::zeros(mu + mp, n);
    a.view_mut((0, 0), (mu, n)).copy_from(&rows_u.matrix);
    a.view_mut((mu, 0), (mp, n)).copy_from(&(&rows_p.matrix * g));
    let lower = DVector::from_iterator(mu + mp, rows_u.lower.iter().chain(rows_p.lower.iter()).copied());
    let upper = DVector::from_iterator(mu + mp, rows_u.upper.iter().chain(rows_p.upper.iter()).copied());
    let problem = QpProblem::new(p, q, a, lower, upper).unwrap();
    let settings = QpSettings {
        eps_abs: 1e-9,
        eps_rel: 1e-9,
        max_iter: 200_000,
        ..QpSettings::default()
    };
    let sol = solve(&problem, &settings, None);
    assert!(sol.is_solved(), "one-shot oracle did not converge: {:?}", sol.status);
    let j = cost.value(&sol.x, &(g * &sol.x)).unwrap();
    (sol.x, j)
}

/// Random strictly convex split subproblem whose rows admit `Δu = 0`.
pub fn random_split(r: &mut ChaCha8Rng, nu: usize, np: usize) -> SplitQp {
    let rr = random_spd(r, nu);
    let qq = random_spd(r, np);
    let s = random_matrix(r, nu, np) * 0.05;
    let f = random_matrix(r, np, nu);
    let mu = nu;
    let au = random_matrix(r, mu, nu);
    let ap = DMatrix::identity(np, np);
    // Keep Δu = 0 strictly feasible for the input rows and the output rows at Δu = 0.
    let res = random_vector(r, np) * 0.2;
    let rows_u = RowBlock::new(
        au,
        DVector::from_fn(mu, |_, _| -r.random_range(0.05..0.5)),
        DVector::from_fn(mu, |_, _| r.random_range(0.05..0.5)),
    )
    .unwrap();
    let rows_p = RowBlock::new(
        ap,
        DVector::from_fn(np, |i, _| res[i] - r.random_range(0.05..0.5)),
        DVector::from_fn(np, |i, _| res[i] + r.random_range(0.05..0.5)),
    )
    .unwrap();
    // Keep the joint Hessian positive definite.
    let rr = rr + DMatrix::identity(nu, nu);
    let qq = qq + DMatrix::identity(np, np);
    SplitQp {
        r: rr,
        s,
        q: qq,
        grad_u: random_vector(r, nu) * 3.0,
        grad_p: random_vector(r, np) * 3.0,
        jacobian: f,
        residual: res,
        rows_u,
        rows_p,
    }
}

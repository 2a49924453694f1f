use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::admm::Scaled;

enum Factor {
    /// Schur complement route for positive definite `P̄ + δI`.
    Schur {
        k: Cholesky<f64, Dyn>,
        w: DMatrix<f64>,
        s: Cholesky<f64, Dyn>,
        a: DMatrix<f64>,
    },
    Full {
        lu: LU<f64, Dyn, Dyn>,
        n: usize,
    },
}

impl Factor {
    fn new(p: &DMatrix<f64>, a: &DMatrix<f64>, delta: f64) -> Option<Self> {
        let n = p.nrows();
        let m = a.nrows();
        let mut k = p.clone();
        for i in 0..n {
            k[(i, i)] += delta;
        }
        if let Some(kc) = Cholesky::new(k.clone()) {
            let w = kc.solve(&a.transpose());
            let mut s = a * &w;
            for i in 0..m {
                s[(i, i)] += delta;
            }
            if let Some(sc) = Cholesky::new(s) {
                return Some(Factor::Schur {
                    k: kc,
                    w,
                    s: sc,
                    a: a.clone(),
                });
            }
        }
        let mut full = DMatrix::zeros(n + m, n + m);
        full.view_mut((0, 0), (n, n)).copy_from(&k);
        full.view_mut((n, 0), (m, n)).copy_from(a);
        full.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        for i in 0..m {
            full[(n + i, n + i)] = -delta;
        }
        let lu = full.lu();
        if lu.is_invertible() {
            Some(Factor::Full { lu, n })
        } else {
            None
        }
    }

    /// Solves `[[P̄ + δI, Aᵀ], [A, −δI]] [dx; dy] = [r1; r2]`.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            Factor::Schur { k, w, s, a } => {
                let kr1 = k.solve(r1);
                let dy = s.solve(&(a * &kr1 - r2));
                let dx = kr1 - w * &dy;
                Some((dx, dy))
            }
            Factor::Full { lu, n } => {
                let mut rhs = DVector::zeros(n + r2.len());
                rhs.rows_mut(0, *n).copy_from(r1);
                rhs.rows_mut(*n, r2.len()).copy_from(r2);
                let sol = lu.solve(&rhs)?;
                Some((sol.rows(0, *n).into_owned(), sol.rows(*n, r2.len()).into_owned()))
            }
        }
    }
}

/// Guesses the active set from an ADMM iterate and solves the resulting
/// equality-constrained QP, with iterative refinement against the
/// unregularized KKT system. Works in scaled coordinates.
pub(crate) fn polish(
    s: &Scaled,
    z: &DVector<f64>,
    y: &DVector<f64>,
    delta: f64,
    refine_iters: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = z.len();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    // -1: lower only, 1: upper only, 0: both (equality)
    let mut sides = Vec::new();
    for i in 0..m {
        let eq = s.l[i] == s.u[i];
        let low = eq || z[i] - s.l[i] < -y[i];
        let up = eq || s.u[i] - z[i] < y[i];
        if low || up {
            rows.push(i);
            if low && up {
                targets.push(s.l[i]);
                sides.push(0);
            } else if low {
                targets.push(s.l[i]);
                sides.push(-1);
            } else {
                targets.push(s.u[i]);
                sides.push(1);
            }
        }
    }
    let a_act = s.a.dense_rows(&rows);
    let b = DVector::from_vec(targets);
    let factor = Factor::new(&s.p, &a_act, delta)?;

    let neg_q = -&s.q;
    let (mut xp, mut yp) = factor.solve(&neg_q, &b)?;
    for _ in 0..refine_iters {
        let r1 = &neg_q - &s.p * &xp - a_act.tr_mul(&yp);
        let r2 = &b - &a_act * &xp;
        let (dx, dy) = factor.solve(&r1, &r2)?;
        xp += dx;
        yp += dy;
    }
    if xp.iter().chain(yp.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let mut y_full = DVector::zeros(m);
    for ((&i, &side), &v) in rows.iter().zip(&sides).zip(yp.iter()) {
        y_full[i] = match side {
            -1 => v.min(0.0),
            1 => v.max(0.0),
            _ => v,
        };
    }
    Some((xp, y_full))
}

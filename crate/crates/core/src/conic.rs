//! Small dense nonnegative least squares in normal-equation form.
//!
//! Used only by the selection fallback, where the number of unknowns is at
//! most the target rank. Lawson-Hanson active set on `min 1/2 h'Gh - b'h`,
//! `h >= 0`.

use nalgebra::{DMatrix, DVector};

pub(crate) fn nnls_gram(g: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = b.len();
    let mut h = DVector::zeros(k);
    let mut passive = vec![false; k];
    let scale = g.diagonal().iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale * (1.0 + b.amax());
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = b - g * &h;
        let entering = (0..k)
            .filter(|&i| !passive[i])
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        match entering {
            Some(t) if w[t] > tol => passive[t] = true,
            _ => break,
        }

        for _ in 0..max_outer {
            let s = solve_passive(g, b, &passive);
            let infeasible: Vec<usize> = (0..k).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if infeasible.is_empty() {
                h = s;
                break;
            }
            let alpha = infeasible
                .iter()
                .map(|&i| h[i] / (h[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            h += (&s - &h) * alpha;
            for i in 0..k {
                if passive[i] && h[i] <= 1e-15 * (1.0 + h.amax()) {
                    passive[i] = false;
                    h[i] = 0.0;
                }
            }
        }
    }
    h
}

fn solve_passive(g: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let sub = g.select_rows(&idx).select_columns(&idx);
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| b[i]));
    let sol = sub
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| sub.clone().lu().solve(&rhs))
        .unwrap_or_else(|| sub.pseudo_inverse(1e-14).map(|p| p * &rhs).unwrap_or_else(|_| DVector::zeros(idx.len())));
    let mut s = DVector::zeros(passive.len());
    for (a, &i) in idx.iter().enumerate() {
        s[i] = sol[a];
    }
    s
}

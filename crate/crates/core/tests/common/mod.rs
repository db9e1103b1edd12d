//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ospde::ipde::{DiscreteGenerator, SpaceTimeField};

/// Exact solution of `du/dt + A u + g(x) (a + b t) = 0`, `u_T = phi`, for the matrix `A`,
/// in the eigenbasis of `A`:
/// `u_t = e^{tau A} phi + int_0^tau e^{r A} g (a + b (t + r)) dr`, `tau = T - t`.
pub fn linear_oracle(
    gen: &DiscreteGenerator,
    phi: &[f64],
    g: &[f64],
    a: f64,
    b: f64,
    times: &[f64],
) -> Vec<Vec<f64>> {
    let eig = SymmetricEigen::new(gen.matrix().clone());
    let v = &eig.eigenvectors;
    let cp = v.tr_mul(&DVector::from_column_slice(phi));
    let cg = v.tr_mul(&DVector::from_column_slice(g));
    let horizon = *times.last().unwrap();
    times
        .iter()
        .map(|&t| {
            let tau = horizon - t;
            let c = DVector::from_fn(phi.len(), |m, _| {
                let l = eig.eigenvalues[m];
                let e = (l * tau).exp();
                // int_0^tau e^{l r} dr and int_0^tau r e^{l r} dr
                let (i0, i1) = if (l * tau).abs() < 1e-6 {
                    (
                        tau + l * tau * tau / 2.0,
                        tau * tau / 2.0 + l * tau.powi(3) / 3.0,
                    )
                } else {
                    let i0 = (e - 1.0) / l;
                    (i0, (tau * e - i0) / l)
                };
                e * cp[m] + cg[m] * ((a + b * t) * i0 + b * i1)
            });
            (v * c).as_slice().to_vec()
        })
        .collect()
}

/// Fully implicit obstacle scheme solved by projected successive over-relaxation:
/// at each step find `u >= v_i` with `(I - dt A) u >= u_{i+1}` and complementarity.
pub fn psor_obstacle(
    gen: &DiscreteGenerator,
    terminal: &[f64],
    obstacle: &SpaceTimeField,
) -> SpaceTimeField {
    let times = obstacle.times().clone();
    let n = terminal.len();
    let mut out = SpaceTimeField::zeros(gen.grid(), times.clone());
    out.slice_mut(times.len() - 1).copy_from_slice(terminal);
    let omega = 1.5;
    for i in (0..times.len() - 1).rev() {
        let dt = times[i + 1] - times[i];
        let m: DMatrix<f64> = DMatrix::identity(n, n) - gen.matrix() * dt;
        let b = out.slice(i + 1).to_vec();
        let v = obstacle.slice(i).to_vec();
        let mut u: Vec<f64> = b.iter().zip(&v).map(|(x, y)| x.max(*y)).collect();
        for _ in 0..10_000 {
            let mut change: f64 = 0.0;
            for j in 0..n {
                let row = m.row(j);
                let r: f64 = b[j] - (0..n).map(|k| row[k] * u[k]).sum::<f64>();
                let new = (u[j] + omega * r / m[(j, j)]).max(v[j]);
                change = change.max((new - u[j]).abs());
                u[j] = new;
            }
            if change < 1e-13 {
                break;
            }
        }
        out.slice_mut(i).copy_from_slice(&u);
    }
    out
}

/// `max_k ||a_k - b_k||_2 / ||b_k||_2` in the grid norm.
pub fn relative_sup_l2(a: &SpaceTimeField, b: &[Vec<f64>]) -> f64 {
    let grid = a.grid();
    b.iter()
        .enumerate()
        .map(|(k, bk)| {
            let d: Vec<f64> = a.slice(k).iter().zip(bk).map(|(x, y)| x - y).collect();
            grid.norm(&d) / grid.norm(bk)
        })
        .fold(0.0, f64::max)
}

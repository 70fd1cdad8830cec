//! Test-only helpers: an independent Riccati solver and random plants.
#![allow(dead_code)]

use hetsync::protocol::AugmentedPlant;
use hetsync::Mat;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stabilizing solution of
/// `A^T P + P A + C^T C - (D^T C + B^T P)^T (D^T D)^{-1} (D^T C + B^T P) = 0`
/// from the stable invariant subspace of the Hamiltonian, located with the
/// matrix sign function.
pub fn are_by_sign_function(plant: &AugmentedPlant<f64>) -> Mat {
    let (a, b, c, d) = (&plant.a, &plant.b, &plant.c, &plant.d);
    let n = a.nrows();
    let r_inv = (d.transpose() * d).try_inverse().expect("D^T D invertible");
    let ar = a - b * &r_inv * d.transpose() * c;
    let g = b * &r_inv * b.transpose();
    let p_out = c.nrows();
    let qr = c.transpose() * (DMatrix::identity(p_out, p_out) - d * &r_inv * d.transpose()) * c;

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ar);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&qr));
    h.view_mut((n, n), (n, n)).copy_from(&(-ar.transpose()));

    // Newton iteration Z <- (Z + Z^{-1}) / 2 with determinant scaling
    let mut z = h;
    for _ in 0..200 {
        let inv = z.clone().try_inverse().expect("Hamiltonian has no imaginary-axis eigenvalues");
        let det = z.determinant().abs();
        let mu = if det > 0.0 { det.powf(-1.0 / (2 * n) as f64) } else { 1.0 };
        let next = (&z * mu + inv / mu) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-13 * z.norm() {
            break;
        }
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-14).expect("least squares");
    (&p + p.transpose()) * 0.5
}

/// Random plant with `p >= m` outputs and a well-conditioned `D`.
pub fn random_plant(rng: &mut ChaCha8Rng, n: usize) -> AugmentedPlant<f64> {
    let m = rng.random_range(1..=2usize);
    let p = m + rng.random_range(0..=1usize);
    let mut u = |r: usize, c: usize, s: f64| Mat::from_fn(r, c, |_, _| rng.random_range(-s..=s));
    let a = u(n, n, 1.0);
    let b = u(n, m, 1.0);
    let c = u(p, n, 1.0);
    let mut d = u(p, m, 0.3);
    for i in 0..m {
        d[(i, i)] += 1.0;
    }
    AugmentedPlant::from_abcd(a, b, c, d).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Identity-weighted LQR gain from the oracle; a moderate stabilizing start.
pub fn lqr_gain(plant: &AugmentedPlant<f64>) -> Mat {
    let (n, m) = (plant.order(), plant.inputs());
    let mut c = Mat::zeros(n + m, n);
    c.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut d = Mat::zeros(n + m, m);
    d.view_mut((n, 0), (m, m)).fill_with_identity();
    let weighted = AugmentedPlant::from_abcd(plant.a.clone(), plant.b.clone(), c, d).unwrap();
    plant.b.transpose() * are_by_sign_function(&weighted)
}

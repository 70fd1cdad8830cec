//! Kleinman-type policy iteration for the output-weighted LQ problem
//!
//! ```text
//! min  int_0^inf |C X + D u|^2 dt,   X' = A X + B u,   u = -K X
//! ```
//!
//! Evaluation solves `Abar^T P + P Abar + (C - D K)^T (C - D K) = 0` with
//! `Abar = A - B K`; improvement sets `K = (D^T D)^{-1} (D^T C + B^T P)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numkernel::{ensure_shape, lyapunov_residual, min_symmetric_eigenvalue, solve_lyapunov, spectrum};
use crate::protocol::AugmentedPlant;
use crate::scalar::Real;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Allowed negative eigenvalue of `P[k] - P[k+1]`.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PiIterate<T: Real> {
    pub k: usize,
    /// Cost matrix of `k_gain`.
    pub p: DMatrix<T>,
    /// Gain evaluated at this step.
    pub k_gain: DMatrix<T>,
    /// `|K[k+1] - K[k]|_F` for the gain improved from `p`.
    pub gain_delta: T,
    pub lyap_residual: T,
    pub hurwitz: bool,
}

#[derive(Debug, Clone)]
pub struct PiTrace<T: Real> {
    pub iterates: Vec<PiIterate<T>>,
    pub converged: bool,
    pub are_residual_final: T,
    pub p_final: DMatrix<T>,
    pub k_final: DMatrix<T>,
}

impl<T: Real> PiTrace<T> {
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    /// Smallest eigenvalue of `P[k] - P[k+1]` over consecutive iterates.
    pub fn min_monotone_gap(&self) -> Result<T> {
        let mut worst = T::max_value().unwrap_or_else(T::one);
        for w in self.iterates.windows(2) {
            worst = worst.min(min_symmetric_eigenvalue(&(&w[0].p - &w[1].p))?);
        }
        Ok(worst)
    }
}

fn check_gain<T: Real>(plant: &AugmentedPlant<T>, k: &DMatrix<T>) -> Result<()> {
    ensure_shape(k, plant.inputs(), plant.order(), "policy iteration", "K")
}

fn weight<T: Real>(plant: &AugmentedPlant<T>) -> Result<nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>> {
    let r = plant.d.transpose() * &plant.d;
    let lu = r.clone().lu();
    let sv = r.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > T::tol(1e-12) * smax) {
        return Err(Error::Singular { what: "D^T D".into() });
    }
    Ok(lu)
}

/// Cost matrix `P` of the stabilizing gain `K`.
pub fn policy_evaluation<T: Real>(plant: &AugmentedPlant<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_gain(plant, k)?;
    let abar = plant.closed_loop(k);
    let spec = spectrum(&abar)?;
    if !(spec.max_real < T::zero()) {
        return Err(Error::NotHurwitz { what: "A - B K".into(), max_real: spec.max_real.as_f64() });
    }
    let ck = plant.output_map(k);
    solve_lyapunov(&abar, &(ck.transpose() * ck))
}

/// `K = (D^T D)^{-1} (D^T C + B^T P)`.
pub fn policy_improvement<T: Real>(plant: &AugmentedPlant<T>, p: &DMatrix<T>) -> Result<DMatrix<T>> {
    let nx = plant.order();
    ensure_shape(p, nx, nx, "policy improvement", "P")?;
    let rhs = plant.d.transpose() * &plant.c + plant.b.transpose() * p;
    weight(plant)?.solve(&rhs).ok_or_else(|| Error::Singular { what: "D^T D".into() })
}

/// Frobenius norm of `A^T P + P A + C^T C - (D^T C + B^T P)^T (D^T D)^{-1} (D^T C + B^T P)`.
pub fn are_residual<T: Real>(plant: &AugmentedPlant<T>, p: &DMatrix<T>) -> Result<T> {
    let nx = plant.order();
    ensure_shape(p, nx, nx, "ARE residual", "P")?;
    let s = plant.d.transpose() * &plant.c + plant.b.transpose() * p;
    let rs = weight(plant)?.solve(&s).ok_or_else(|| Error::Singular { what: "D^T D".into() })?;
    let res = plant.a.transpose() * p + p * &plant.a + plant.c.transpose() * &plant.c - s.transpose() * rs;
    Ok(res.norm())
}

/// `|(A - B K)^T P + P (A - B K) + (C - D K)^T (C - D K)|_F`.
pub fn fixed_point_residual<T: Real>(plant: &AugmentedPlant<T>, p: &DMatrix<T>, k: &DMatrix<T>) -> T {
    let ck = plant.output_map(k);
    lyapunov_residual(&plant.closed_loop(k), &(ck.transpose() * ck), p)
}

/// Alternates evaluation and improvement from the stabilizing `k0` until the
/// gain update falls below `epsilon`. The returned `p_final` is the cost of
/// `k_final`.
pub fn run_pi<T: Real>(plant: &AugmentedPlant<T>, k0: &DMatrix<T>, epsilon: T, max_iter: usize) -> Result<PiTrace<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be positive".into()));
    }
    check_gain(plant, k0)?;
    weight(plant)?;

    let r = plant.d.transpose() * &plant.d;
    let mut iterates: Vec<PiIterate<T>> = Vec::new();

    // P[k+1] = P[k] - Delta with
    //   (A - B K[k+1])^T Delta + Delta (A - B K[k+1]) = -(K[k+1] - K[k])^T R (K[k+1] - K[k]),
    // which is the cost of K[k+1] but keeps the decrement accurate relative to
    // |Delta| rather than |P|.
    let push = |iterates: &mut Vec<PiIterate<T>>, k_gain: &DMatrix<T>, p: DMatrix<T>| -> Result<DMatrix<T>> {
        let next = policy_improvement(plant, &p)?;
        let ck = plant.output_map(k_gain);
        iterates.push(PiIterate {
            k: iterates.len(),
            lyap_residual: lyapunov_residual(&plant.closed_loop(k_gain), &(ck.transpose() * ck), &p),
            gain_delta: (&next - k_gain).norm(),
            p,
            k_gain: k_gain.clone(),
            hurwitz: true,
        });
        Ok(next)
    };
    let advance = |iterates: &mut Vec<PiIterate<T>>, k_new: &DMatrix<T>| -> Result<DMatrix<T>> {
        let idx = iterates.len();
        let prev = iterates.last().expect("initial evaluation recorded");
        let dk = k_new - &prev.k_gain;
        let abar = plant.closed_loop(k_new);
        let spec = spectrum(&abar)?;
        if !(spec.max_real < T::zero()) {
            return Err(Error::NotHurwitz { what: format!("policy iterate {idx}: A - B K"), max_real: spec.max_real.as_f64() });
        }
        let delta = solve_lyapunov(&abar, &(dk.transpose() * &r * &dk))?;
        let p = &prev.p - &delta;
        let gap = min_symmetric_eigenvalue(&(&prev.p - &p))?;
        if gap < -T::lit(MONOTONE_TOL) {
            return Err(Error::Monotonicity { iterate: idx, min_eig: gap.as_f64() });
        }
        push(iterates, k_new, p)
    };

    let p0 = policy_evaluation(plant, k0)?;
    let mut k = push(&mut iterates, k0, p0)?;
    let done = |iterates: &Vec<PiIterate<T>>| iterates.last().is_some_and(|it| it.gain_delta < epsilon);
    for _ in 0..max_iter {
        if done(&iterates) {
            break;
        }
        k = advance(&mut iterates, &k)?;
    }
    let converged = done(&iterates);
    if !converged {
        return Err(Error::NoConvergence { what: "policy iteration".into(), iterations: max_iter });
    }
    // evaluate the final gain so that (p_final, k_final) is a consistent pair
    advance(&mut iterates, &k)?;
    let last = iterates.last().expect("at least one iterate");
    let p_final = last.p.clone();
    let are_residual_final = are_residual(plant, &p_final)?;
    log::debug!("policy iteration converged after {} evaluations, ARE residual {are_residual_final:e}", iterates.len());
    Ok(PiTrace { iterates, converged, are_residual_final, p_final, k_final: k })
}

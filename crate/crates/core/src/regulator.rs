//! Output-regulator equations
//!
//! ```text
//! Pi S = A Pi + B Gamma + E
//!    0 = C Pi + D Gamma - F
//! ```
//!
//! solved per agent as one Kronecker-vectorized square linear system.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkernel::{singular_values, unvec, vec_of};
use crate::plant::{AgentDynamics, LeaderModel};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct RegulatorSolution<T: Real> {
    pub pi: DMatrix<T>,
    pub gamma: DMatrix<T>,
    /// Frobenius norm of both equation residuals stacked.
    pub residual: T,
}

/// Stacked residual `|| [Pi S - A Pi - B Gamma - E ; C Pi + D Gamma - F] ||_F`.
pub fn regulator_residual<T: Real>(
    agent: &AgentDynamics<T>,
    s: &DMatrix<T>,
    pi: &DMatrix<T>,
    gamma: &DMatrix<T>,
) -> T {
    let r1 = pi * s - &agent.a * pi - &agent.b * gamma - &agent.e;
    let r2 = &agent.c * pi + &agent.d * gamma - &agent.f;
    (r1.norm_squared() + r2.norm_squared()).sqrt()
}

pub fn solve_regulator<T: Real>(agent: &AgentDynamics<T>, leader: &LeaderModel<T>) -> Result<RegulatorSolution<T>> {
    agent.check_dimensions()?;
    let (n, m, p, q) = (agent.n(), agent.m(), agent.p(), agent.q());
    if q != leader.q() {
        return Err(Error::Dimension {
            context: format!("agent `{}`", agent.name),
            matrix: "E".into(),
            expected_rows: n,
            expected_cols: leader.q(),
            got_rows: n,
            got_cols: q,
        });
    }
    if p != m {
        return Err(Error::InvalidInput(format!(
            "agent `{}`: regulator equations need as many outputs as inputs (p = {p}, m = {m})",
            agent.name
        )));
    }

    let iq = DMatrix::<T>::identity(q, q);
    let in_ = DMatrix::<T>::identity(n, n);
    let rows = q * (n + p);
    let cols = q * (n + m);
    let mut sys = DMatrix::<T>::zeros(rows, cols);
    sys.view_mut((0, 0), (q * n, q * n))
        .copy_from(&(iq.kronecker(&agent.a) - leader.s.transpose().kronecker(&in_)));
    sys.view_mut((0, q * n), (q * n, q * m)).copy_from(&iq.kronecker(&agent.b));
    sys.view_mut((q * n, 0), (q * p, q * n)).copy_from(&iq.kronecker(&agent.c));
    sys.view_mut((q * n, q * n), (q * p, q * m)).copy_from(&iq.kronecker(&agent.d));

    let mut rhs = DVector::<T>::zeros(rows);
    rhs.rows_mut(0, q * n).copy_from(&(-vec_of(&agent.e)));
    rhs.rows_mut(q * n, q * p).copy_from(&vec_of(&agent.f));

    let singular = || Error::Singular { what: format!("agent `{}`: regulator equations", agent.name) };
    let sv = singular_values(&sys)?;
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    if smax == T::zero() || smin <= T::tol(1e-12) * smax {
        return Err(singular());
    }
    let z = sys.lu().solve(&rhs).filter(|z| z.iter().all(|v| v.is_finite())).ok_or_else(singular)?;

    let pi = unvec(&z.as_slice()[..q * n], n, q);
    let gamma = unvec(&z.as_slice()[q * n..], m, q);
    let residual = regulator_residual(agent, &leader.s, &pi, &gamma);
    Ok(RegulatorSolution { pi, gamma, residual })
}

//! Distributed compensator design, the `zeta`/`varsigma` coordinate
//! transform, augmented per-agent plants and initial stabilizing gains.
//!
//! The compensator of follower `i` is
//!
//! ```text
//! xi_i' = S xi_i + alpha_i * sum_j rho_ij (xi_i - xi_j),   xi_0 = w
//! ```
//!
//! with `alpha_i d_i = -(lambda_M(S) + r)`. The local generator is
//! `zeta_i' = (S - (lambda_M + r) I) zeta_i` and the control law is
//! `u_i = -K1 x_i - K2 xi_i - K3 zeta_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkernel::{ensure_shape, is_hurwitz, spectrum, stabilize};
use crate::plant::{AgentDynamics, LeaderModel};
use crate::regulator::RegulatorSolution;
use crate::scalar::Real;
use crate::topology::{validate_topology, Topology};

/// Acceptance threshold on the defining identity of `U`.
pub const TRANSFORM_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CompensatorDesign<T: Real> {
    pub r: T,
    /// Largest real part of `sigma(S)`.
    pub lambda_m: T,
    /// Coupling gain per follower, in follower order.
    pub alphas: Vec<T>,
}

impl<T: Real> CompensatorDesign<T> {
    /// `S - (lambda_M + r) I`.
    pub fn shifted_leader(&self, s: &DMatrix<T>) -> DMatrix<T> {
        let q = s.nrows();
        s - DMatrix::identity(q, q) * (self.lambda_m + self.r)
    }

    /// `max_i |alpha_i d_i + lambda_M + r|`.
    pub fn alpha_defect(&self, topology: &Topology) -> T {
        self.alphas
            .iter()
            .enumerate()
            .map(|(k, &a)| (a * T::lit(topology.in_degree(k + 1) as f64) + self.lambda_m + self.r).abs())
            .fold(T::zero(), |x, y| x.max(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformBranch {
    /// `S` is a scalar matrix; `U = I - Nstrict / r` exactly.
    ScalarLeader,
    /// Least-squares fit of the vectorized identity.
    LeastSquares,
}

#[derive(Debug, Clone)]
pub struct TransformU<T: Real> {
    pub u: DMatrix<T>,
    /// `c_i = T_i U^{-1} 1_N`.
    pub c: Vec<T>,
    /// `h_i = T_i H U^{-1} 1_N`.
    pub h: Vec<T>,
    pub residual: T,
    pub branch: TransformBranch,
}

/// Augmented per-agent plant in the coordinates `X_i = [zeta_i; x_i - Pi_i xi_i]`.
#[derive(Debug, Clone)]
pub struct AugmentedPlant<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub phi: DMatrix<T>,
    pub psi: DMatrix<T>,
    /// Dimension of the `zeta` block.
    pub q: usize,
}

impl<T: Real> AugmentedPlant<T> {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Builds a plant directly from `(A, B, C, D)` with no `zeta` block.
    /// Used for analysis of arbitrary plants.
    pub fn from_abcd(a: DMatrix<T>, b: DMatrix<T>, c: DMatrix<T>, d: DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        let (m, p) = (b.ncols(), c.nrows());
        ensure_shape(&a, n, n, "plant", "A")?;
        ensure_shape(&b, n, m, "plant", "B")?;
        ensure_shape(&c, p, n, "plant", "C")?;
        ensure_shape(&d, p, m, "plant", "D")?;
        Ok(AugmentedPlant { a, b, c, d, phi: DMatrix::zeros(0, 0), psi: DMatrix::zeros(0, 0), q: 0 })
    }

    pub fn closed_loop(&self, k: &DMatrix<T>) -> DMatrix<T> {
        &self.a - &self.b * k
    }

    pub fn output_map(&self, k: &DMatrix<T>) -> DMatrix<T> {
        &self.c - &self.d * k
    }
}

/// Gains of `u = -K1 x - K2 xi - K3 zeta`; `K_ic = [K3, K1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T: Real> {
    pub k1: DMatrix<T>,
    pub k2: DMatrix<T>,
    pub k3: DMatrix<T>,
    pub k_ic: DMatrix<T>,
}

impl<T: Real> GainSet<T> {
    /// Completes `(K1, K3)` with `K2 = -K1 Pi - Gamma`.
    pub fn from_parts(k1: DMatrix<T>, k3: DMatrix<T>, reg: &RegulatorSolution<T>) -> Result<Self> {
        let m = k1.nrows();
        ensure_shape(&k1, m, reg.pi.nrows(), "gain set", "K1")?;
        ensure_shape(&k3, m, reg.pi.ncols(), "gain set", "K3")?;
        let k2 = -(&k1 * &reg.pi) - &reg.gamma;
        let mut k_ic = DMatrix::zeros(m, k3.ncols() + k1.ncols());
        k_ic.view_mut((0, 0), k3.shape()).copy_from(&k3);
        k_ic.view_mut((0, k3.ncols()), k1.shape()).copy_from(&k1);
        Ok(GainSet { k1, k2, k3, k_ic })
    }

    /// Splits an augmented gain `[K3, K1]` learned on the augmented plant.
    pub fn from_augmented(k_ic: &DMatrix<T>, q: usize, reg: &RegulatorSolution<T>) -> Result<Self> {
        if k_ic.ncols() < q {
            return Err(Error::InvalidInput("augmented gain narrower than the zeta block".into()));
        }
        let n = k_ic.ncols() - q;
        let k3 = k_ic.columns(0, q).into_owned();
        let k1 = k_ic.columns(q, n).into_owned();
        Self::from_parts(k1, k3, reg)
    }

    /// `|| K1 Pi + K2 + Gamma ||_F`.
    pub fn consistency_residual(&self, reg: &RegulatorSolution<T>) -> T {
        (&self.k1 * &reg.pi + &self.k2 + &reg.gamma).norm()
    }
}

/// `alpha_i = -(lambda_M(S) + r) / d_i`.
pub fn design_compensator<T: Real>(
    leader: &LeaderModel<T>,
    topology: &Topology,
    r: T,
) -> Result<CompensatorDesign<T>> {
    if !(r > T::zero()) || !r.is_finite() {
        return Err(Error::InvalidInput(format!("design constant r must be positive, got {r}")));
    }
    let lambda_m = spectrum(&leader.s)?.max_real;
    let mut alphas = Vec::with_capacity(topology.n_followers());
    for i in 1..=topology.n_followers() {
        let d = topology.in_degree(i);
        if d == 0 {
            return Err(Error::Topology(format!("follower {i} has in-degree 0")));
        }
        alphas.push(-(lambda_m + r) / T::lit(d as f64));
    }
    Ok(CompensatorDesign { r, lambda_m, alphas })
}

/// Residual `|| U (x) M - I_N (x) S - Lambda H (x) I_q ||_F`.
pub fn transform_residual<T: Real>(
    u: &DMatrix<T>,
    design: &CompensatorDesign<T>,
    topology: &Topology,
    s: &DMatrix<T>,
) -> T {
    let n = topology.n_followers();
    let q = s.nrows();
    let m = design.shifted_leader(s);
    let lambda_h = DMatrix::from_diagonal(&DVector::from_vec(design.alphas.clone())) * topology.h_matrix_as::<T>();
    let target = DMatrix::<T>::identity(n, n).kronecker(s) + lambda_h.kronecker(&DMatrix::identity(q, q));
    (u.kronecker(&m) - target).norm()
}

/// Solves `(I_N (x) M)(U (x) I_q) = I_N (x) S + Lambda H (x) I_q` for `U`.
pub fn build_transform<T: Real>(
    design: &CompensatorDesign<T>,
    topology: &Topology,
    leader: &LeaderModel<T>,
) -> Result<TransformU<T>> {
    if !validate_topology(topology).passed() {
        return Err(Error::Topology("transform requires a loop-free graph rooted at the leader".into()));
    }
    let n = topology.n_followers();
    if design.alphas.len() != n {
        return Err(Error::InvalidInput("compensator design does not match topology".into()));
    }
    let s = &leader.s;
    let q = s.nrows();
    let h = topology.h_matrix_as::<T>();
    let lambda_h = DMatrix::from_diagonal(&DVector::from_vec(design.alphas.clone())) * &h;
    let shift = design.lambda_m + design.r;

    let scalar_defect = (s - DMatrix::identity(q, q) * design.lambda_m).norm();
    let is_scalar = scalar_defect <= T::tol(1e-12) * (T::one() + s.norm());

    let (u, branch) = if is_scalar {
        let n_strict = &lambda_h + DMatrix::identity(n, n) * shift;
        (DMatrix::identity(n, n) - n_strict / design.r, TransformBranch::ScalarLeader)
    } else {
        // U (x) M is linear in U: column (a, b) of the design matrix is vec(E_ab (x) M).
        let m = design.shifted_leader(s);
        let nq = n * q;
        let mut g = DMatrix::<T>::zeros(nq * nq, n * n);
        for col in 0..n {
            for row in 0..n {
                let k = row + col * n;
                for mc in 0..q {
                    for mr in 0..q {
                        let (gr, gc) = (row * q + mr, col * q + mc);
                        g[(gr + gc * nq, k)] = m[(mr, mc)];
                    }
                }
            }
        }
        let target = DMatrix::<T>::identity(n, n).kronecker(s) + lambda_h.kronecker(&DMatrix::identity(q, q));
        let rhs = DVector::from_column_slice(target.as_slice());
        let svd = g.svd(true, true);
        let sol = svd
            .solve(&rhs, T::default_epsilon())
            .map_err(|e| Error::InvalidInput(format!("transform least squares: {e}")))?;
        (DMatrix::from_column_slice(n, n, sol.as_slice()), TransformBranch::LeastSquares)
    };

    let residual = transform_residual(&u, design, topology, s);
    if !(residual < T::lit(TRANSFORM_RTOL)) {
        return Err(Error::TransformNotRepresentable { s: format!("{:?}", s.as_slice()), residual: residual.as_f64() });
    }
    let ones = DVector::<T>::from_element(n, T::one());
    let y = u.clone().lu().solve(&ones).ok_or_else(|| Error::Singular { what: "transform U".into() })?;
    let hy = &h * &y;
    Ok(TransformU { u, c: y.iter().cloned().collect(), h: hy.iter().cloned().collect(), residual, branch })
}

/// Assembles `(A_ic, B_ic, C_ic, D_ic)` for follower `follower_index` (1-based):
///
/// ```text
/// A_ic = [[S - (lambda_M + r) I, 0], [-Phi, A]]   B_ic = [0; B]
/// C_ic = [-Psi, C]                                D_ic = D
/// Phi  = c_i E + alpha_i h_i Pi,   Psi = -c_i F
/// ```
pub fn build_augmented_plant<T: Real>(
    agent: &AgentDynamics<T>,
    leader: &LeaderModel<T>,
    reg: &RegulatorSolution<T>,
    design: &CompensatorDesign<T>,
    transform: &TransformU<T>,
    follower_index: usize,
) -> Result<AugmentedPlant<T>> {
    let (n, m, p, q) = (agent.n(), agent.m(), agent.p(), agent.q());
    let ctx = format!("agent `{}` augmented plant", agent.name);
    if follower_index == 0 || follower_index > design.alphas.len() || follower_index > transform.c.len() {
        return Err(Error::InvalidInput(format!("{ctx}: follower index {follower_index} out of range")));
    }
    ensure_shape(&leader.s, q, q, &ctx, "S")?;
    ensure_shape(&reg.pi, n, q, &ctx, "Pi")?;
    ensure_shape(&reg.gamma, m, q, &ctx, "Gamma")?;
    let k = follower_index - 1;
    let (ci, hi, alpha) = (transform.c[k], transform.h[k], design.alphas[k]);

    let phi = &agent.e * ci + &reg.pi * (alpha * hi);
    let psi = &agent.f * (-ci);

    let mut a = DMatrix::zeros(q + n, q + n);
    a.view_mut((0, 0), (q, q)).copy_from(&design.shifted_leader(&leader.s));
    a.view_mut((q, 0), (n, q)).copy_from(&(-&phi));
    a.view_mut((q, q), (n, n)).copy_from(&agent.a);
    let mut b = DMatrix::zeros(q + n, m);
    b.view_mut((q, 0), (n, m)).copy_from(&agent.b);
    let mut c = DMatrix::zeros(p, q + n);
    c.view_mut((0, 0), (p, q)).copy_from(&(-&psi));
    c.view_mut((0, q), (p, n)).copy_from(&agent.c);
    Ok(AugmentedPlant { a, b, c, d: agent.d.clone(), phi, psi, q })
}

/// Theorem-style initial gains: given (or synthesized) `K1` with `A - B K1`
/// Hurwitz, `K2 = -K1 Pi - Gamma` and `K3 = 0`.
pub fn initial_gains<T: Real>(
    agent: &AgentDynamics<T>,
    reg: &RegulatorSolution<T>,
    k1: Option<&DMatrix<T>>,
) -> Result<GainSet<T>> {
    let (n, m, q) = (agent.n(), agent.m(), agent.q());
    let k1 = match k1 {
        Some(k) => {
            ensure_shape(k, m, n, &format!("agent `{}`", agent.name), "K1")?;
            k.clone()
        }
        None => stabilize(&agent.a, &agent.b)?,
    };
    let closed = &agent.a - &agent.b * &k1;
    let spec = spectrum(&closed)?;
    if !(spec.max_real < T::zero()) {
        return Err(Error::NotHurwitz {
            what: format!("agent `{}`: A - B K1", agent.name),
            max_real: spec.max_real.as_f64(),
        });
    }
    GainSet::from_parts(k1, DMatrix::zeros(m, q), reg)
}

/// Checks `A_ic - B_ic K_ic` is Hurwitz.
pub fn verify_closed_loop<T: Real>(plant: &AugmentedPlant<T>, gains: &GainSet<T>) -> Result<bool> {
    is_hurwitz(&plant.closed_loop(&gains.k_ic), T::zero())
}

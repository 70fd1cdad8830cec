//! Leader and follower models and the standing-assumption checks.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkernel::{self, complex_rank, ensure_shape, rank, singular_values, spectrum};
use crate::scalar::Real;
use crate::topology::{validate_topology, Topology};

/// One follower:
///
/// ```text
/// x' = A x + B u + E w
/// y  = C x + D u,   y_r = F w,   e = y - y_r
/// ```
#[derive(Debug, Clone)]
pub struct AgentDynamics<T: Real> {
    pub name: String,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
}

impl<T: Real> AgentDynamics<T> {
    /// Validates shapes against `A` (n), `B` (m), `C` (p) and `E` (q).
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        e: DMatrix<T>,
        f: DMatrix<T>,
    ) -> Result<Self> {
        let agent = AgentDynamics { name: name.into(), a, b, c, d, e, f };
        agent.check_dimensions()?;
        Ok(agent)
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let ctx = format!("agent `{}`", self.name);
        let n = self.a.nrows();
        ensure_shape(&self.a, n, n, &ctx, "A")?;
        let (m, p, q) = (self.b.ncols(), self.c.nrows(), self.e.ncols());
        ensure_shape(&self.b, n, m, &ctx, "B")?;
        ensure_shape(&self.c, p, n, &ctx, "C")?;
        ensure_shape(&self.d, p, m, &ctx, "D")?;
        ensure_shape(&self.e, n, q, &ctx, "E")?;
        ensure_shape(&self.f, p, q, &ctx, "F")?;
        if n == 0 || m == 0 || p == 0 || q == 0 {
            return Err(Error::InvalidInput(format!("{ctx}: empty dimension (n={n}, m={m}, p={p}, q={q})")));
        }
        for (name, mat) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d), ("E", &self.e), ("F", &self.f)] {
            if !numkernel::all_finite(mat) {
                return Err(Error::InvalidInput(format!("{ctx}: matrix `{name}` has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn q(&self) -> usize {
        self.e.ncols()
    }
}

/// Leader (exosystem) `w' = S w`, `w(0) = w0`.
#[derive(Debug, Clone)]
pub struct LeaderModel<T: Real> {
    pub s: DMatrix<T>,
    pub w0: DVector<T>,
}

impl<T: Real> LeaderModel<T> {
    pub fn new(s: DMatrix<T>, w0: DVector<T>) -> Result<Self> {
        let q = numkernel::ensure_square(&s, "leader S")?;
        if q == 0 {
            return Err(Error::InvalidInput("leader: S must be at least 1x1".into()));
        }
        if w0.len() != q {
            return Err(Error::Dimension {
                context: "leader".into(),
                matrix: "w0".into(),
                expected_rows: q,
                expected_cols: 1,
                got_rows: w0.len(),
                got_cols: 1,
            });
        }
        if !numkernel::all_finite(&s) || w0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("leader: non-finite entries".into()));
        }
        Ok(LeaderModel { s, w0 })
    }

    pub fn q(&self) -> usize {
        self.s.nrows()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentAssumptions {
    pub name: String,
    pub observable: bool,
    pub feedthrough_invertible: bool,
    pub stabilizable: bool,
    pub rank_condition: bool,
}

impl AgentAssumptions {
    pub fn passed(&self) -> bool {
        self.observable && self.feedthrough_invertible && self.stabilizable && self.rank_condition
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub agents: Vec<AgentAssumptions>,
    pub leader_unstable_modes: bool,
    pub topology_ok: bool,
    pub diagnostics: Vec<String>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.leader_unstable_modes && self.topology_ok && self.agents.iter().all(AgentAssumptions::passed)
    }
}

/// Eigenvalues with real part above this count as non-negative.
const MARGINAL_RE: f64 = -1e-10;

pub fn is_observable<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    let p = c.nrows();
    let mut obs = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        obs.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(rank(&obs)? == n)
}

/// PBH test at every eigenvalue of `A` with non-negative real part.
pub fn is_stabilizable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<bool> {
    let n = a.nrows();
    let m = b.ncols();
    for lam in spectrum(a)?.values {
        if lam.re < T::lit(MARGINAL_RE) {
            continue;
        }
        let mut re = DMatrix::zeros(n, n + m);
        re.view_mut((0, 0), (n, n)).copy_from(&(a - DMatrix::identity(n, n) * lam.re));
        re.view_mut((0, n), (n, m)).copy_from(b);
        let mut im = DMatrix::zeros(n, n + m);
        im.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * -lam.im));
        if complex_rank(&re, &im)? < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `rank [[A - lambda I, B], [C, D]] = n + m` for every `lambda` in `sigma(S)`.
pub fn rank_condition_holds<T: Real>(agent: &AgentDynamics<T>, s: &DMatrix<T>) -> Result<bool> {
    let (n, m, p) = (agent.n(), agent.m(), agent.p());
    for lam in spectrum(s)?.values {
        let mut re = DMatrix::zeros(n + p, n + m);
        re.view_mut((0, 0), (n, n)).copy_from(&(&agent.a - DMatrix::identity(n, n) * lam.re));
        re.view_mut((0, n), (n, m)).copy_from(&agent.b);
        re.view_mut((n, 0), (p, n)).copy_from(&agent.c);
        re.view_mut((n, n), (p, m)).copy_from(&agent.d);
        let mut im = DMatrix::zeros(n + p, n + m);
        im.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * -lam.im));
        if complex_rank(&re, &im)? != n + m {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn feedthrough_invertible<T: Real>(d: &DMatrix<T>) -> Result<bool> {
    let dtd = d.transpose() * d;
    let s = singular_values(&dtd)?;
    Ok(s.last().is_some_and(|&v| v > T::lit(1e-10)))
}

/// Machine-checks observability, feedthrough invertibility, stabilizability,
/// the leader's mode condition, the regulator rank condition and the graph.
pub fn check_assumptions<T: Real>(
    agents: &[AgentDynamics<T>],
    leader: &LeaderModel<T>,
    topology: &Topology,
) -> Result<AssumptionReport> {
    if agents.len() != topology.n_followers() {
        return Err(Error::InvalidInput(format!(
            "{} agents but the topology has {} followers",
            agents.len(),
            topology.n_followers()
        )));
    }
    let q = leader.q();
    let mut diagnostics = Vec::new();
    let mut per_agent = Vec::with_capacity(agents.len());
    for agent in agents {
        agent.check_dimensions()?;
        if agent.q() != q {
            return Err(Error::Dimension {
                context: format!("agent `{}`", agent.name),
                matrix: "E".into(),
                expected_rows: agent.n(),
                expected_cols: q,
                got_rows: agent.e.nrows(),
                got_cols: agent.e.ncols(),
            });
        }
        let report = AgentAssumptions {
            name: agent.name.clone(),
            observable: is_observable(&agent.a, &agent.c)?,
            feedthrough_invertible: feedthrough_invertible(&agent.d)?,
            stabilizable: is_stabilizable(&agent.a, &agent.b)?,
            rank_condition: rank_condition_holds(agent, &leader.s)?,
        };
        for (ok, what) in [
            (report.observable, "(A, C) is not observable"),
            (report.feedthrough_invertible, "D^T D is singular"),
            (report.stabilizable, "(A, B) is not stabilizable"),
            (report.rank_condition, "regulator rank condition fails at an eigenvalue of S"),
        ] {
            if !ok {
                diagnostics.push(format!("agent `{}`: {what}", agent.name));
            }
        }
        per_agent.push(report);
    }
    let leader_unstable_modes = spectrum(&leader.s)?.min_real() >= T::lit(MARGINAL_RE);
    if !leader_unstable_modes {
        diagnostics.push("leader: S has an eigenvalue with negative real part".into());
    }
    let topo = validate_topology(topology);
    if !topo.acyclic {
        diagnostics.push("topology: contains a directed loop".into());
    }
    if !topo.rooted {
        diagnostics.push("topology: some follower is not reachable from the leader".into());
    }
    if !topo.leader_isolated {
        diagnostics.push("topology: the leader receives information".into());
    }
    Ok(AssumptionReport { agents: per_agent, leader_unstable_modes, topology_ok: topo.passed(), diagnostics })
}

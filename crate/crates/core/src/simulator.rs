//! Fixed-step RK4 simulation of the closed-loop network and of the per-agent
//! augmented systems, plus tracking and cost metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkernel::{ensure_shape, spectrum};
use crate::plant::{AgentDynamics, LeaderModel};
use crate::protocol::{AugmentedPlant, CompensatorDesign, GainSet};
use crate::scalar::Real;
use crate::topology::Topology;

/// Any state component above this aborts the run.
pub const BLOW_UP: f64 = 1e12;
/// Tracking band used by [`tracking_metrics`].
pub const SETTLE_BAND: f64 = 1e-2;

/// Number of samples on `[0, t_end]` with step `dt`, endpoints included.
pub fn sample_count(t_end: f64, dt: f64) -> usize {
    (t_end / dt + 1e-9).floor() as usize + 1
}

fn check_step(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be non-negative, got {t_end}")));
    }
    Ok(sample_count(t_end, dt))
}

/// Classical RK4 on `z' = f(z)`, calling `observe(k, z)` at every sample
/// `k = 0..samples`.
pub fn rk4<T: Real, F, O>(f: F, z0: &DVector<T>, dt: T, samples: usize, mut observe: O) -> Result<()>
where
    F: Fn(&DVector<T>) -> DVector<T>,
    O: FnMut(usize, &DVector<T>),
{
    let half = dt / T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let limit = T::lit(BLOW_UP);
    let mut z = z0.clone();
    if samples > 0 {
        observe(0, &z);
    }
    for k in 1..samples {
        let k1 = f(&z);
        let k2 = f(&(&z + &k1 * half));
        let k3 = f(&(&z + &k2 * half));
        let k4 = f(&(&z + &k3 * dt));
        z += (k1 + (k2 + k3) * T::lit(2.0) + k4) * sixth;
        if z.iter().any(|v| !(v.abs() <= limit)) {
            return Err(Error::BlowUp { t: (dt * T::lit(k as f64)).as_f64() });
        }
        observe(k, &z);
    }
    Ok(())
}

/// Everything the network simulation needs besides initial conditions.
#[derive(Debug, Clone, Copy)]
pub struct NetworkModel<'a, T: Real> {
    pub leader: &'a LeaderModel<T>,
    pub agents: &'a [AgentDynamics<T>],
    pub topology: &'a Topology,
    pub design: &'a CompensatorDesign<T>,
    pub gains: &'a [GainSet<T>],
}

#[derive(Debug, Clone)]
pub struct InitialConditions<T: Real> {
    pub w0: DVector<T>,
    pub x0: Vec<DVector<T>>,
    pub xi0: Vec<DVector<T>>,
    /// Common initial value of every `zeta_i`.
    pub zeta0: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct FollowerTrace<T: Real> {
    pub name: String,
    pub x: Vec<DVector<T>>,
    pub xi: Vec<DVector<T>>,
    pub zeta: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    pub e: Vec<DVector<T>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub leader_states: Vec<DVector<T>>,
    pub followers: Vec<FollowerTrace<T>>,
}

/// Block offsets of the stacked network state `(w, xi_1..xi_N, zeta_1..zeta_N, x_1..x_N)`.
struct Layout {
    q: usize,
    n: usize,
    x_off: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(q: usize, agents: &[usize]) -> Self {
        let n = agents.len();
        let mut x_off = Vec::with_capacity(n);
        let mut at = q * (1 + 2 * n);
        for &ni in agents {
            x_off.push(at);
            at += ni;
        }
        Layout { q, n, x_off, dim: at }
    }

    /// Offset of `xi` for network node `j` (0 is the leader, whose slot is `w`).
    fn xi(&self, j: usize) -> usize {
        j * self.q
    }

    fn zeta(&self, i: usize) -> usize {
        self.q * (1 + self.n + i)
    }
}

/// `u = -K1 x - K2 xi - K3 zeta`.
pub fn control<T: Real>(g: &GainSet<T>, x: &DVector<T>, xi: &DVector<T>, zeta: &DVector<T>) -> DVector<T> {
    -(&g.k1 * x) - &g.k2 * xi - &g.k3 * zeta
}

/// `e = C x + D u - F w`.
pub fn tracking_error<T: Real>(a: &AgentDynamics<T>, x: &DVector<T>, u: &DVector<T>, w: &DVector<T>) -> DVector<T> {
    &a.c * x + &a.d * u - &a.f * w
}

impl<'a, T: Real> NetworkModel<'a, T> {
    fn check(&self, init: &InitialConditions<T>) -> Result<Layout> {
        let n = self.topology.n_followers();
        let q = self.leader.q();
        if self.agents.len() != n || self.gains.len() != n || self.design.alphas.len() != n {
            return Err(Error::InvalidInput(format!(
                "network has {n} followers but {} agents, {} gain sets, {} coupling gains",
                self.agents.len(),
                self.gains.len(),
                self.design.alphas.len()
            )));
        }
        if init.x0.len() != n || init.xi0.len() != n {
            return Err(Error::InvalidInput(format!("initial conditions must list {n} followers")));
        }
        let col = |v: &DVector<T>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        ensure_shape(&col(&init.w0), q, 1, "initial conditions", "w0")?;
        ensure_shape(&col(&init.zeta0), q, 1, "initial conditions", "zeta0")?;
        for (i, a) in self.agents.iter().enumerate() {
            let ctx = format!("agent `{}`", a.name);
            a.check_dimensions()?;
            ensure_shape(&a.e, a.n(), q, &ctx, "E")?;
            let g = &self.gains[i];
            ensure_shape(&g.k1, a.m(), a.n(), &ctx, "K1")?;
            ensure_shape(&g.k2, a.m(), q, &ctx, "K2")?;
            ensure_shape(&g.k3, a.m(), q, &ctx, "K3")?;
            ensure_shape(&col(&init.x0[i]), a.n(), 1, &ctx, "x0")?;
            ensure_shape(&col(&init.xi0[i]), q, 1, &ctx, "xi0")?;
        }
        Ok(Layout::new(q, &self.agents.iter().map(|a| a.n()).collect::<Vec<_>>()))
    }

    /// Closed-loop matrix of the stacked state.
    fn closed_loop(&self, l: &Layout) -> DMatrix<T> {
        let q = l.q;
        let s = &self.leader.s;
        let m = self.design.shifted_leader(s);
        let adj = self.topology.adjacency();
        let mut a = DMatrix::zeros(l.dim, l.dim);
        a.view_mut((0, 0), (q, q)).copy_from(s);
        let eye = DMatrix::<T>::identity(q, q);
        for i in 0..l.n {
            let node = i + 1;
            let alpha = self.design.alphas[i];
            let xi = l.xi(node);
            // xi_i' = (S + alpha d_i I) xi_i - alpha sum_j rho_ij xi_j
            let d = T::lit(self.topology.in_degree(node) as f64);
            a.view_mut((xi, xi), (q, q)).copy_from(&(s + &eye * (alpha * d)));
            for j in 0..=l.n {
                if adj[(node, j)] != 0 {
                    let w = T::lit(adj[(node, j)] as f64);
                    let mut blk = a.view_mut((xi, l.xi(j)), (q, q));
                    blk -= &eye * (alpha * w);
                }
            }
            let z = l.zeta(i);
            a.view_mut((z, z), (q, q)).copy_from(&m);

            let ag = &self.agents[i];
            let g = &self.gains[i];
            let x = l.x_off[i];
            let n = ag.n();
            a.view_mut((x, x), (n, n)).copy_from(&(&ag.a - &ag.b * &g.k1));
            a.view_mut((x, xi), (n, q)).copy_from(&(-(&ag.b * &g.k2)));
            a.view_mut((x, z), (n, q)).copy_from(&(-(&ag.b * &g.k3)));
            a.view_mut((x, 0), (n, q)).copy_from(&ag.e);
        }
        a
    }
}

/// Integrates leader, compensators, `zeta` generators and followers together.
pub fn simulate_network<T: Real>(
    model: &NetworkModel<'_, T>,
    init: &InitialConditions<T>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<T>> {
    let samples = check_step(t_end, dt)?;
    let l = model.check(init)?;
    let a = model.closed_loop(&l);
    let q = l.q;

    let mut z0 = DVector::zeros(l.dim);
    z0.rows_mut(0, q).copy_from(&init.w0);
    for i in 0..l.n {
        z0.rows_mut(l.xi(i + 1), q).copy_from(&init.xi0[i]);
        z0.rows_mut(l.zeta(i), q).copy_from(&init.zeta0);
        z0.rows_mut(l.x_off[i], model.agents[i].n()).copy_from(&init.x0[i]);
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(samples),
        leader_states: Vec::with_capacity(samples),
        followers: model
            .agents
            .iter()
            .map(|a| FollowerTrace {
                name: a.name.clone(),
                x: Vec::with_capacity(samples),
                xi: Vec::with_capacity(samples),
                zeta: Vec::with_capacity(samples),
                u: Vec::with_capacity(samples),
                e: Vec::with_capacity(samples),
            })
            .collect(),
    };
    let dt_t = T::lit(dt);
    rk4(|z| &a * z, &z0, dt_t, samples, |k, z| {
        traj.times.push(dt_t * T::lit(k as f64));
        let w: DVector<T> = z.rows(0, q).into_owned();
        for (i, f) in traj.followers.iter_mut().enumerate() {
            let ag = &model.agents[i];
            let x: DVector<T> = z.rows(l.x_off[i], ag.n()).into_owned();
            let xi: DVector<T> = z.rows(l.xi(i + 1), q).into_owned();
            let zeta: DVector<T> = z.rows(l.zeta(i), q).into_owned();
            let u = control(&model.gains[i], &x, &xi, &zeta);
            f.e.push(tracking_error(ag, &x, &u, &w));
            f.x.push(x);
            f.xi.push(xi);
            f.zeta.push(zeta);
            f.u.push(u);
        }
        traj.leader_states.push(w);
    })?;
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct AugmentedRun<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    pub errors: Vec<DVector<T>>,
    /// `A - B K`.
    pub closed_loop: DMatrix<T>,
}

/// Integrates `X' = (A - B K) X` and records `e = (C - D K) X`.
pub fn simulate_augmented<T: Real>(
    plant: &AugmentedPlant<T>,
    k: &DMatrix<T>,
    x0: &DVector<T>,
    t_end: f64,
    dt: f64,
) -> Result<AugmentedRun<T>> {
    let samples = check_step(t_end, dt)?;
    ensure_shape(k, plant.inputs(), plant.order(), "augmented simulation", "K")?;
    if x0.len() != plant.order() {
        return Err(Error::InvalidInput(format!("X0 has length {}, expected {}", x0.len(), plant.order())));
    }
    let a = plant.closed_loop(k);
    let c = plant.output_map(k);
    let spec = spectrum(&a)?;
    if !(spec.max_real < T::zero()) {
        return Err(Error::NotHurwitz { what: "augmented A - B K".into(), max_real: spec.max_real.as_f64() });
    }
    let dt_t = T::lit(dt);
    let mut run = AugmentedRun {
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        errors: Vec::with_capacity(samples),
        closed_loop: a.clone(),
    };
    rk4(|z| &a * z, x0, dt_t, samples, |k, z| {
        run.times.push(dt_t * T::lit(k as f64));
        run.errors.push(&c * z);
        run.states.push(z.clone());
    })?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T: Real> {
    /// Trapezoid rule on `|e|^2`.
    pub j_quadrature: T,
    /// `X0^T P X0`.
    pub j_closed_form: T,
    pub tail_error: T,
    /// Set when the horizon covers fewer than five slowest time constants.
    pub warning: Option<String>,
}

impl<T: Real> CostReport<T> {
    /// `|J_quad - J_closed| <= max(1e-4, 1e-3 J_closed)`.
    pub fn agrees(&self) -> bool {
        let tol = T::lit(1e-4).max(T::lit(1e-3) * self.j_closed_form);
        (self.j_quadrature - self.j_closed_form).abs() <= tol
    }
}

fn trapezoid<T: Real>(times: &[T], values: impl Iterator<Item = T>) -> T {
    let v: Vec<T> = values.collect();
    let mut acc = T::zero();
    for k in 1..v.len() {
        acc += (times[k] - times[k - 1]) * (v[k] + v[k - 1]) / T::lit(2.0);
    }
    acc
}

/// Max `|e(t)|` over samples with `t >= 0.9 t_end`.
pub fn tail_error<T: Real>(times: &[T], errors: &[DVector<T>]) -> T {
    let Some(&t_end) = times.last() else { return T::zero() };
    let cut = t_end * T::lit(0.9);
    times
        .iter()
        .zip(errors)
        .filter(|(t, _)| **t >= cut)
        .map(|(_, e)| e.norm())
        .fold(T::zero(), |a, b| a.max(b))
}

/// First sample time after which `|e|` stays below `band`; `None` if the
/// final sample is outside the band.
pub fn settle_time<T: Real>(times: &[T], errors: &[DVector<T>], band: T) -> Option<T> {
    match errors.iter().rposition(|e| !(e.norm() < band)) {
        None => Some(times.first().copied().unwrap_or_else(T::zero)),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

pub fn evaluate_cost<T: Real>(run: &AugmentedRun<T>, p: &DMatrix<T>) -> Result<CostReport<T>> {
    let x0 = run.states.first().ok_or_else(|| Error::InvalidInput("empty augmented run".into()))?;
    let nx = x0.len();
    ensure_shape(p, nx, nx, "cost evaluation", "P")?;
    let j_closed_form = (x0.transpose() * p * x0)[(0, 0)];
    let j_quadrature = trapezoid(&run.times, run.errors.iter().map(|e| e.norm_squared()));
    let t_end = run.times.last().copied().unwrap_or_else(T::zero);
    let slowest = -spectrum(&run.closed_loop)?.max_real;
    let warning = (t_end * slowest < T::lit(5.0)).then(|| {
        format!(
            "horizon {t_end} covers fewer than five slowest time constants (1/{slowest}); the quadrature is truncated"
        )
    });
    Ok(CostReport { j_quadrature, j_closed_form, tail_error: tail_error(&run.times, &run.errors), warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingMetrics<T: Real> {
    pub name: String,
    pub tail_error: T,
    pub settle_time: Option<T>,
}

pub fn tracking_metrics<T: Real>(traj: &Trajectory<T>) -> Vec<TrackingMetrics<T>> {
    traj.followers
        .iter()
        .map(|f| TrackingMetrics {
            name: f.name.clone(),
            tail_error: tail_error(&traj.times, &f.e),
            settle_time: settle_time(&traj.times, &f.e, T::lit(SETTLE_BAND)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_iteration::policy_evaluation;
    use crate::protocol::design_compensator;
    use crate::regulator::solve_regulator;
    use crate::topology::build_topology;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar(a: f64) -> AugmentedPlant<f64> {
        AugmentedPlant::from_abcd(dmatrix![a], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn sample_grid() {
        assert_eq!(sample_count(20.0, 1e-3), 20001);
        assert_eq!(sample_count(1.0, 0.3), 4);
        assert_eq!(sample_count(0.0, 0.1), 1);
        assert!(simulate_augmented(&scalar(-1.0), &dmatrix![0.0], &dvector![1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn exponential_oracle() {
        let run = simulate_augmented(&scalar(-1.0), &dmatrix![1.0], &dvector![1.0], 1.0, 1e-3).unwrap();
        assert_relative_eq!(run.states.last().unwrap()[0], (-2.0f64).exp(), epsilon = 1e-8);
        let zero = simulate_augmented(&scalar(-1.0), &dmatrix![1.0], &dvector![0.0], 1.0, 1e-2).unwrap();
        assert!(zero.states.iter().chain(&zero.errors).all(|v| v[0] == 0.0));
    }

    #[test]
    fn richardson_ratio() {
        let plant = AugmentedPlant::from_abcd(
            dmatrix![0.0, 1.0; -4.0, -0.4],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![1.0],
        )
        .unwrap();
        let k = dmatrix![0.0, 0.0];
        let x0 = dvector![1.0, 0.0];
        let t = 2.0;
        let exact = {
            let a = plant.closed_loop(&k) * t;
            a.exp() * &x0
        };
        let err = |dt: f64| (simulate_augmented(&plant, &k, &x0, t, dt).unwrap().states.last().unwrap() - &exact).norm();
        let ratio = err(0.1) / err(0.05);
        assert!((4.0..=64.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn scalar_cost() {
        let plant = scalar(-1.0);
        let k = dmatrix![0.0];
        let p = policy_evaluation(&plant, &k).unwrap();
        let run = simulate_augmented(&plant, &k, &dvector![1.0], 20.0, 1e-3).unwrap();
        let cost = evaluate_cost(&run, &p).unwrap();
        assert_relative_eq!(cost.j_closed_form, 0.5, epsilon = 1e-12);
        assert!(cost.agrees());
        assert!(cost.warning.is_none());

        let short = simulate_augmented(&plant, &k, &dvector![1.0], 1.0, 1e-3).unwrap();
        assert!(evaluate_cost(&short, &p).unwrap().warning.is_some());

        let zero = simulate_augmented(&plant, &k, &dvector![0.0], 5.0, 1e-2).unwrap();
        let c = evaluate_cost(&zero, &p).unwrap();
        assert_eq!((c.j_quadrature, c.j_closed_form), (0.0, 0.0));
    }

    #[test]
    fn lyapunov_energy_decays() {
        let plant = AugmentedPlant::from_abcd(
            dmatrix![0.0, 1.0; -2.0, 0.5],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![1.0],
        )
        .unwrap();
        let k = dmatrix![1.0, 3.0];
        let p = policy_evaluation(&plant, &k).unwrap();
        let run = simulate_augmented(&plant, &k, &dvector![1.0, -2.0], 10.0, 1e-2).unwrap();
        let v: Vec<f64> = run.states.iter().map(|x| (x.transpose() * &p * x)[(0, 0)]).collect();
        for w in v.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn metrics_contract() {
        let times = vec![0.0, 1.0, 2.0, 3.0];
        let zeros = vec![dvector![0.0]; 4];
        assert_eq!(settle_time(&times, &zeros, 1e-2), Some(0.0));
        let late = vec![dvector![1.0], dvector![0.0], dvector![0.5], dvector![0.0]];
        assert_eq!(settle_time(&times, &late, 1e-2), Some(3.0));
        let never = vec![dvector![0.0], dvector![1.0], dvector![2.0], dvector![4.0]];
        assert_eq!(settle_time(&times, &never, 1e-2), None);
        assert_eq!(tail_error(&times, &never), 4.0);
    }

    #[test]
    fn blow_up_guard() {
        let plant = scalar(5.0);
        let r = rk4(|z: &DVector<f64>| &plant.a * z, &dvector![1.0], 0.1, 10_000, |_, _| {});
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }

    fn one_follower() -> (AgentDynamics<f64>, LeaderModel<f64>, Topology) {
        let agent =
            AgentDynamics::new("s", dmatrix![-1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0])
                .unwrap();
        let leader = LeaderModel::new(dmatrix![0.5], dvector![1.0]).unwrap();
        let topo = build_topology(1, &[(0, 1)]).unwrap();
        (agent, leader, topo)
    }

    #[test]
    fn network_equilibrium_and_identity() {
        let (agent, leader, topo) = one_follower();
        let design = design_compensator(&leader, &topo, 1.0).unwrap();
        let reg = solve_regulator(&agent, &leader).unwrap();
        let gains = vec![crate::protocol::initial_gains(&agent, &reg, Some(&dmatrix![0.5])).unwrap()];
        let agents = vec![agent];
        let model = NetworkModel { leader: &leader, agents: &agents, topology: &topo, design: &design, gains: &gains };

        let zero = InitialConditions { w0: dvector![0.0], x0: vec![dvector![0.0]], xi0: vec![dvector![0.0]], zeta0: dvector![0.0] };
        let t = simulate_network(&model, &zero, 2.0, 1e-2).unwrap();
        assert!(t.followers[0].e.iter().all(|e| e[0] == 0.0));

        let init = InitialConditions { w0: dvector![1.0], x0: vec![dvector![2.0]], xi0: vec![dvector![-1.0]], zeta0: dvector![0.3] };
        let t = simulate_network(&model, &init, 10.0, 1e-3).unwrap();
        assert_eq!(t.times.len(), 10001);
        let f = &t.followers[0];
        for k in 0..t.times.len() {
            let e = tracking_error(&agents[0], &f.x[k], &f.u[k], &t.leader_states[k]);
            assert_eq!(e, f.e[k]);
        }
        // leader is exp(0.5 t); the compensator tracks it with rate r
        assert_relative_eq!(t.leader_states.last().unwrap()[0], 5f64.exp(), max_relative = 1e-10);
        assert!((&f.xi[10000] - &t.leader_states[10000]).norm() < 1e-3);
        assert!(tracking_metrics(&t)[0].tail_error < 1e-2);
    }

    #[test]
    fn network_input_checks() {
        let (agent, leader, topo) = one_follower();
        let design = design_compensator(&leader, &topo, 1.0).unwrap();
        let agents = vec![agent];
        let model = NetworkModel { leader: &leader, agents: &agents, topology: &topo, design: &design, gains: &[] };
        let init = InitialConditions { w0: dvector![1.0], x0: vec![dvector![0.0]], xi0: vec![dvector![0.0]], zeta0: dvector![0.0] };
        assert!(simulate_network(&model, &init, 1.0, 1e-2).is_err());
    }
}

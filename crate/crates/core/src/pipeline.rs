//! Scenario-level orchestration: validate, design, learn, simulate, compare.
//!
//! Per-agent stages are independent and run on the rayon pool. Report types
//! serialize matrices as row-major nested arrays.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{check_assumptions, AssumptionReport};
use crate::policy_iteration::{run_pi, PiTrace};
use crate::protocol::{
    build_augmented_plant, build_transform, design_compensator, initial_gains, verify_closed_loop, AugmentedPlant,
    CompensatorDesign, GainSet, TransformU,
};
use crate::regulator::{solve_regulator, RegulatorSolution};
use crate::scenario::{matrix_from_rows, matrix_to_rows, Rows, Scenario};
use crate::simulator::{
    evaluate_cost, simulate_augmented, simulate_network, tracking_metrics, InitialConditions, NetworkModel, Trajectory,
};
use crate::{Mat, Vector};

#[derive(Debug, Clone)]
pub struct AgentDesign {
    pub name: String,
    pub regulator: RegulatorSolution<f64>,
    pub plant: AugmentedPlant<f64>,
    pub initial: GainSet<f64>,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub compensator: CompensatorDesign<f64>,
    pub transform: TransformU<f64>,
    pub agents: Vec<AgentDesign>,
}

#[derive(Debug, Clone)]
pub struct Learned {
    pub traces: Vec<PiTrace<f64>>,
    pub optimal: Vec<GainSet<f64>>,
}

pub fn validate(scn: &Scenario) -> Result<AssumptionReport> {
    check_assumptions(&scn.agents, &scn.leader, &scn.topology)
}

pub fn design(scn: &Scenario) -> Result<Design> {
    let compensator = design_compensator(&scn.leader, &scn.topology, scn.design.r)?;
    let transform = build_transform(&compensator, &scn.topology, &scn.leader)?;
    let agents = scn
        .agents
        .par_iter()
        .zip(scn.k1.par_iter())
        .enumerate()
        .map(|(i, (agent, k1))| {
            let regulator = solve_regulator(agent, &scn.leader).map_err(|e| e.in_agent(&agent.name, "regulator"))?;
            let plant = build_augmented_plant(agent, &scn.leader, &regulator, &compensator, &transform, i + 1)
                .map_err(|e| e.in_agent(&agent.name, "augmented plant"))?;
            let initial =
                initial_gains(agent, &regulator, k1.as_ref()).map_err(|e| e.in_agent(&agent.name, "initial gains"))?;
            if !verify_closed_loop(&plant, &initial)? {
                return Err(Error::NotHurwitz { what: "A_ic - B_ic K_ic".into(), max_real: f64::NAN }
                    .in_agent(&agent.name, "initial gains"));
            }
            Ok(AgentDesign { name: agent.name.clone(), regulator, plant, initial })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Design { compensator, transform, agents })
}

pub fn learn(scn: &Scenario, design: &Design) -> Result<Learned> {
    let results = design
        .agents
        .par_iter()
        .map(|a| {
            let trace = run_pi(&a.plant, &a.initial.k_ic, scn.design.epsilon, scn.design.max_iter)
                .map_err(|e| e.in_agent(&a.name, "policy iteration"))?;
            let gains = GainSet::from_augmented(&trace.k_final, a.plant.q, &a.regulator)
                .map_err(|e| e.in_agent(&a.name, "policy iteration"))?;
            Ok((trace, gains))
        })
        .collect::<Result<Vec<_>>>()?;
    let (traces, optimal) = results.into_iter().unzip();
    Ok(Learned { traces, optimal })
}

pub fn initial_conditions(scn: &Scenario) -> InitialConditions<f64> {
    InitialConditions { w0: scn.leader.w0.clone(), x0: scn.x0.clone(), xi0: scn.xi0.clone(), zeta0: scn.zeta0.clone() }
}

pub fn simulate(scn: &Scenario, design: &Design, gains: &[GainSet<f64>]) -> Result<Trajectory<f64>> {
    let model = NetworkModel {
        leader: &scn.leader,
        agents: &scn.agents,
        topology: &scn.topology,
        design: &design.compensator,
        gains,
    };
    simulate_network(&model, &initial_conditions(scn), scn.sim.t_end, scn.sim.dt)
}

/// `X0 = [zeta0; x0 - Pi xi0]` for follower `i` (0-based).
pub fn augmented_x0(scn: &Scenario, design: &Design, i: usize) -> Vector {
    let q = scn.leader.q();
    let xt = &scn.x0[i] - &design.agents[i].regulator.pi * &scn.xi0[i];
    let mut x = DVector::zeros(q + xt.len());
    x.rows_mut(0, q).copy_from(&scn.zeta0);
    x.rows_mut(q, xt.len()).copy_from(&xt);
    x
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub j_initial: f64,
    pub j_initial_closed_form: f64,
    pub j_optimal: f64,
    pub j_optimal_closed_form: f64,
    pub tail_initial: f64,
    pub tail_optimal: f64,
    pub settle_initial: Option<f64>,
    pub settle_optimal: Option<f64>,
    pub warnings: Vec<String>,
}

/// Augmented-model costs and network tracking metrics for both gain sets.
pub fn compare(scn: &Scenario, design: &Design, learned: &Learned) -> Result<Vec<ComparisonRow>> {
    let initial: Vec<GainSet<f64>> = design.agents.iter().map(|a| a.initial.clone()).collect();
    let (net_init, net_opt) = rayon::join(|| simulate(scn, design, &initial), || simulate(scn, design, &learned.optimal));
    let (m_init, m_opt) = (tracking_metrics(&net_init?), tracking_metrics(&net_opt?));
    design
        .agents
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let x0 = augmented_x0(scn, design, i);
            let cost = |k: &Mat, p: &Mat| {
                let run = simulate_augmented(&a.plant, k, &x0, scn.sim.t_end, scn.sim.dt)?;
                evaluate_cost(&run, p)
            };
            let p_init = crate::policy_iteration::policy_evaluation(&a.plant, &a.initial.k_ic)?;
            let ci = cost(&a.initial.k_ic, &p_init).map_err(|e| e.in_agent(&a.name, "cost"))?;
            let co = cost(&learned.traces[i].k_final, &learned.traces[i].p_final).map_err(|e| e.in_agent(&a.name, "cost"))?;
            Ok(ComparisonRow {
                name: a.name.clone(),
                j_initial: ci.j_quadrature,
                j_initial_closed_form: ci.j_closed_form,
                j_optimal: co.j_quadrature,
                j_optimal_closed_form: co.j_closed_form,
                tail_initial: m_init[i].tail_error,
                tail_optimal: m_opt[i].tail_error,
                settle_initial: m_init[i].settle_time,
                settle_optimal: m_opt[i].settle_time,
                warnings: ci.warning.into_iter().chain(co.warning).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGains {
    pub name: String,
    #[serde(rename = "K1")]
    pub k1: Rows,
    #[serde(rename = "K2")]
    pub k2: Rows,
    #[serde(rename = "K3")]
    pub k3: Rows,
}

/// Gain file shared by `design` and `learn` output and `simulate --gains-file`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    pub kind: String,
    pub agents: Vec<AgentGains>,
}

impl GainsFile {
    pub fn new(kind: &str, names: impl IntoIterator<Item = String>, gains: &[GainSet<f64>]) -> Self {
        GainsFile {
            kind: kind.into(),
            agents: names
                .into_iter()
                .zip(gains)
                .map(|(name, g)| AgentGains {
                    name,
                    k1: matrix_to_rows(&g.k1),
                    k2: matrix_to_rows(&g.k2),
                    k3: matrix_to_rows(&g.k3),
                })
                .collect(),
        }
    }

    /// Rebuilds gain sets, checking names and shapes against the scenario.
    pub fn to_gain_sets(&self, scn: &Scenario) -> Result<Vec<GainSet<f64>>> {
        if self.agents.len() != scn.agents.len() {
            return Err(Error::InvalidInput(format!(
                "gains file lists {} agents, scenario has {}",
                self.agents.len(),
                scn.agents.len()
            )));
        }
        self.agents
            .iter()
            .zip(&scn.agents)
            .map(|(g, a)| {
                if g.name != a.name {
                    return Err(Error::InvalidInput(format!("gains file agent `{}` where `{}` was expected", g.name, a.name)));
                }
                let ctx = format!("gains for agent `{}`", a.name);
                let k1 = matrix_from_rows(&g.k1, &ctx, "K1")?;
                let k2 = matrix_from_rows(&g.k2, &ctx, "K2")?;
                let k3 = matrix_from_rows(&g.k3, &ctx, "K3")?;
                let shape = |m: &Mat, r, c, name: &str| {
                    if m.shape() != (r, c) {
                        Err(Error::Dimension {
                            context: ctx.clone(),
                            matrix: name.into(),
                            expected_rows: r,
                            expected_cols: c,
                            got_rows: m.nrows(),
                            got_cols: m.ncols(),
                        })
                    } else {
                        Ok(())
                    }
                };
                shape(&k1, a.m(), a.n(), "K1")?;
                shape(&k2, a.m(), a.q(), "K2")?;
                shape(&k3, a.m(), a.q(), "K3")?;
                let mut k_ic = Mat::zeros(a.m(), a.q() + a.n());
                k_ic.view_mut((0, 0), k3.shape()).copy_from(&k3);
                k_ic.view_mut((0, a.q()), k1.shape()).copy_from(&k1);
                Ok(GainSet { k1, k2, k3, k_ic })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentDesignReport {
    pub name: String,
    #[serde(rename = "Pi")]
    pub pi: Rows,
    #[serde(rename = "Gamma")]
    pub gamma: Rows,
    pub regulator_residual: f64,
    pub alpha: f64,
    pub c: f64,
    pub h: f64,
    #[serde(rename = "A_ic")]
    pub a_ic: Rows,
    #[serde(rename = "B_ic")]
    pub b_ic: Rows,
    #[serde(rename = "C_ic")]
    pub c_ic: Rows,
    #[serde(rename = "D_ic")]
    pub d_ic: Rows,
    #[serde(rename = "K_ic")]
    pub k_ic: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub r: f64,
    pub lambda_max: f64,
    #[serde(rename = "U")]
    pub u: Rows,
    pub transform_residual: f64,
    pub agents: Vec<AgentDesignReport>,
    pub initial_gains: GainsFile,
}

impl DesignReport {
    pub fn new(d: &Design) -> Self {
        DesignReport {
            r: d.compensator.r,
            lambda_max: d.compensator.lambda_m,
            u: matrix_to_rows(&d.transform.u),
            transform_residual: d.transform.residual,
            agents: d
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| AgentDesignReport {
                    name: a.name.clone(),
                    pi: matrix_to_rows(&a.regulator.pi),
                    gamma: matrix_to_rows(&a.regulator.gamma),
                    regulator_residual: a.regulator.residual,
                    alpha: d.compensator.alphas[i],
                    c: d.transform.c[i],
                    h: d.transform.h[i],
                    a_ic: matrix_to_rows(&a.plant.a),
                    b_ic: matrix_to_rows(&a.plant.b),
                    c_ic: matrix_to_rows(&a.plant.c),
                    d_ic: matrix_to_rows(&a.plant.d),
                    k_ic: matrix_to_rows(&a.initial.k_ic),
                })
                .collect(),
            initial_gains: GainsFile::new(
                "initial",
                d.agents.iter().map(|a| a.name.clone()),
                &d.agents.iter().map(|a| a.initial.clone()).collect::<Vec<_>>(),
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateReport {
    pub k: usize,
    pub gain_delta: f64,
    pub lyap_residual: f64,
    pub hurwitz: bool,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "K")]
    pub k_gain: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentLearnReport {
    pub name: String,
    pub converged: bool,
    pub iterations: usize,
    pub are_residual: f64,
    #[serde(rename = "K_ic")]
    pub k_ic: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    pub trace: Vec<IterateReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnReport {
    pub agents: Vec<AgentLearnReport>,
    pub optimal_gains: GainsFile,
}

impl LearnReport {
    pub fn new(d: &Design, l: &Learned) -> Self {
        LearnReport {
            agents: d
                .agents
                .iter()
                .zip(&l.traces)
                .map(|(a, t)| AgentLearnReport {
                    name: a.name.clone(),
                    converged: t.converged,
                    iterations: t.iterations(),
                    are_residual: t.are_residual_final,
                    k_ic: matrix_to_rows(&t.k_final),
                    p: matrix_to_rows(&t.p_final),
                    trace: t
                        .iterates
                        .iter()
                        .map(|it| IterateReport {
                            k: it.k,
                            gain_delta: it.gain_delta,
                            lyap_residual: it.lyap_residual,
                            hurwitz: it.hurwitz,
                            p: matrix_to_rows(&it.p),
                            k_gain: matrix_to_rows(&it.k_gain),
                        })
                        .collect(),
                })
                .collect(),
            optimal_gains: GainsFile::new("optimal", d.agents.iter().map(|a| a.name.clone()), &l.optimal),
        }
    }
}

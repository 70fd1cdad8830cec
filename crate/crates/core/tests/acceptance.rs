//! Acceptance gate for the six-agent example. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use hetsync::numkernel::{is_hurwitz, stabilize};
use hetsync::pipeline::{self, augmented_x0, Design};
use hetsync::policy_iteration::{fixed_point_residual, run_pi, PiTrace};
use hetsync::protocol::{AugmentedPlant, GainSet};
use hetsync::scenario::{builtin, parse_scenario, w0_from_seed, BUILTIN_NAME};
use hetsync::simulator::{evaluate_cost, simulate_augmented};
use hetsync::{Mat, Scenario};
use nalgebra::{dvector, DMatrix};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn m(r: usize, c: usize, v: &[f64]) -> Mat {
    DMatrix::from_row_slice(r, c, v)
}

fn printed_regulator() -> Vec<(Mat, Mat)> {
    vec![
        (m(3, 2, &[0.6, 0.0, 0.025, 0.25, 0.4, 0.0]), m(2, 2, &[-0.2, 0.0, 0.0333, 0.0])),
        (m(3, 2, &[0.7273, 0.0, -0.0909, 1.0, 0.4545, 0.0]), m(2, 2, &[-0.0909, 0.0, -0.0909, 0.5])),
        (m(3, 2, &[0.9091, 0.0, -0.0134, 0.7869, 0.5455, 0.0]), m(2, 2, &[0.0909, 0.0, -0.006, 0.0164])),
        (m(3, 2, &[1.0, 0.0, 0.0, 0.7692, 0.5, 0.0]), m(2, 2, &[0.0, 0.0, 0.0, -0.4615])),
        (m(3, 2, &[1.0769, 0.0, 0.0077, 1.0, 0.4615, 0.0]), m(2, 2, &[-0.0769, 0.0, 0.0062, -0.2])),
    ]
}

fn printed_k2() -> Vec<Mat> {
    vec![
        m(2, 2, &[-3.4, 0.0, -0.0333, 0.0]),
        m(2, 2, &[-2.7273, 0.0, 0.09, -0.5]),
        m(2, 2, &[-2.9394, 0.0, 0.006, -0.0164]),
        m(2, 2, &[-2.5, 0.0, 0.0, 0.4615]),
        m(2, 2, &[-2.1692, 0.0, -0.0062, 0.2]),
    ]
}

fn printed_k_star() -> Vec<Mat> {
    vec![
        m(2, 5, &[0.369, 0.0388, 0.7187, 0.1552, 0.0404, -0.1069, 0.2801, -0.2089, 1.1204, -0.0135]),
        m(2, 5, &[0.5255, 0.7417, 0.2852, 0.1660, 0.1382, -0.1873, 2.3818, -0.0855, 0.5209, 0.2368]),
        m(2, 5, &[1.0685, 0.1592, 0.3587, 0.0628, 0.0762, -0.1668, 1.7802, -0.0551, 0.7645, -0.0159]),
        m(2, 5, &[2.2503, 0.1967, 0.3442, 0.0475, 0.1169, -0.1979, 0.9424, -0.0313, 0.4658, -0.0161]),
        m(2, 5, &[1.0057, 0.1640, 0.0875, 0.0116, 0.0697, -0.0147, 1.1484, -0.0021, 0.1485, -0.0028]),
    ]
}

fn max_abs(a: &Mat) -> f64 {
    a.amax()
}

struct Gate {
    failed: usize,
}

impl Gate {
    fn report(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Theorem-2 checks on one trace; returns a description of the first violation.
fn theorem2_violation(plant: &AugmentedPlant<f64>, trace: &PiTrace<f64>) -> Option<String> {
    for it in &trace.iterates {
        if !is_hurwitz(&plant.closed_loop(&it.k_gain), 0.0).unwrap_or(false) {
            return Some(format!("iterate {} not Hurwitz", it.k));
        }
    }
    let gap = trace.min_monotone_gap().unwrap_or(f64::NEG_INFINITY);
    if gap < -1e-9 {
        return Some(format!("monotonicity gap {gap:e}"));
    }
    let fp = fixed_point_residual(plant, &trace.p_final, &trace.k_final);
    if !(fp < 1e-8) {
        return Some(format!("fixed-point residual {fp:e}"));
    }
    None
}

fn improvement_steps(trace: &PiTrace<f64>) -> usize {
    trace.iterations() - 1
}

fn regulator_reproduction(g: &mut Gate, scn: &Scenario) {
    let start = Instant::now();
    let sols: Vec<_> = scn.agents.iter().map(|a| hetsync::regulator::solve_regulator(a, &scn.leader).unwrap()).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = sols
        .iter()
        .zip(printed_regulator())
        .map(|(s, (pi, gamma))| max_abs(&(&s.pi - pi)).max(max_abs(&(&s.gamma - gamma))))
        .fold(0.0, f64::max);
    g.report(
        "regulator reproduction",
        worst < 1e-3 && elapsed < 1.0,
        format!("max entry deviation {worst:.2e} (tol 1e-3), {elapsed:.3} s (limit 1 s)"),
    );
}

fn initial_gain_consistency(g: &mut Gate, d: &Design) {
    let worst = d
        .agents
        .iter()
        .zip(printed_k2())
        .map(|(a, k2)| max_abs(&(&a.initial.k2 - k2)))
        .fold(0.0, f64::max);
    g.report("initial-gain consistency", worst < 1e-3, format!("max K2 deviation {worst:.2e} (tol 1e-3)"));
}

fn optimal_gain_reproduction(g: &mut Gate, d: &Design) {
    let mut deviations = Vec::new();
    let mut all_close = true;
    let mut degraded_ok = true;
    let mut notes = Vec::new();
    for (a, printed) in d.agents.iter().zip(printed_k_star()) {
        let trace = match run_pi(&a.plant, &a.initial.k_ic, 1e-6, 100) {
            Ok(t) => t,
            Err(e) => {
                g.report("optimal-gain reproduction", false, format!("{}: {e}", a.name));
                return;
            }
        };
        let steps = improvement_steps(&trace);
        let dev = max_abs(&(&trace.k_final - &printed));
        deviations.push(format!("{} {dev:.3}", a.name));
        all_close &= dev < 1e-2 && steps <= 20;

        // alternative stabilizing start: K1 = 0 (A_i is Hurwitz) and a nonzero K3
        let k1_alt = stabilize(&scn_agent_a(a), &scn_agent_b(a)).unwrap();
        let alt = GainSet::from_parts(k1_alt, Mat::from_element(2, 2, 0.25), &a.regulator).unwrap();
        let trace_alt = run_pi(&a.plant, &alt.k_ic, 1e-6, 100).unwrap();
        let spread = (&trace.k_final - &trace_alt.k_final).norm();
        let violation = theorem2_violation(&a.plant, &trace).or_else(|| theorem2_violation(&a.plant, &trace_alt));
        let ok = steps <= 20 && trace.are_residual_final < 1e-8 && violation.is_none() && spread < 1e-8;
        degraded_ok &= ok;
        notes.push(format!(
            "{}: {steps} steps, ARE {:.1e}, K0 spread {spread:.1e}{}",
            a.name,
            trace.are_residual_final,
            violation.map(|v| format!(", {v}")).unwrap_or_default()
        ));
    }
    if all_close {
        g.report("optimal-gain reproduction", true, format!("max |K - K_printed| per agent: {}", deviations.join(", ")));
    } else {
        g.report(
            "optimal-gain reproduction",
            degraded_ok,
            format!(
                "printed gains not reproduced (max deviation per agent: {}); degraded check: {}",
                deviations.join(", "),
                notes.join("; ")
            ),
        );
    }
}

fn scn_agent_a(a: &pipeline::AgentDesign) -> Mat {
    let q = a.plant.q;
    let n = a.plant.order() - q;
    a.plant.a.view((q, q), (n, n)).into_owned()
}

fn scn_agent_b(a: &pipeline::AgentDesign) -> Mat {
    let q = a.plant.q;
    let n = a.plant.order() - q;
    a.plant.b.view((q, 0), (n, a.plant.inputs())).into_owned()
}

fn theorem2_suite(g: &mut Gate, d: &Design) {
    let mut checked = 0;
    let mut failures = Vec::new();
    for a in &d.agents {
        match run_pi(&a.plant, &a.initial.k_ic, 1e-6, 100) {
            Ok(t) => {
                if let Some(v) = theorem2_violation(&a.plant, &t) {
                    failures.push(format!("{}: {v}", a.name));
                }
            }
            Err(e) => failures.push(format!("{}: {e}", a.name)),
        }
        checked += 1;
    }
    let mut rng = common::rng(2024);
    for k in 0..50 {
        let n = 2 + k % 4;
        let plant = common::random_plant(&mut rng, n);
        let k0 = common::lqr_gain(&plant);
        match run_pi(&plant, &k0, 1e-6, 100) {
            Ok(t) => {
                if let Some(v) = theorem2_violation(&plant, &t) {
                    failures.push(format!("random plant {k}: {v}"));
                }
            }
            Err(e) => failures.push(format!("random plant {k}: {e}")),
        }
        checked += 1;
    }
    g.report(
        "policy-iteration property suite",
        failures.is_empty() && checked == 55,
        if failures.is_empty() {
            format!("{checked} traces: Hurwitz iterates, monotone P (tol 1e-9), fixed-point residual < 1e-8")
        } else {
            format!("{} of {checked} traces violate: {}", failures.len(), failures.join("; "))
        },
    );
}

fn oracle_equivalence(g: &mut Gate) {
    let start = Instant::now();
    let mut rng = common::rng(77);
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for k in 0..50 {
        let n = 1 + k % 4;
        let plant = common::random_plant(&mut rng, n);
        let k0 = common::lqr_gain(&plant);
        match run_pi(&plant, &k0, 1e-6, 100) {
            Ok(t) => worst = worst.max((&t.p_final - common::are_by_sign_function(&plant)).norm()),
            Err(e) => errors.push(format!("plant {k}: {e}")),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    g.report(
        "oracle equivalence",
        errors.is_empty() && worst < 1e-6 && elapsed < 10.0,
        format!("50 plants, max |P_pi - P_oracle|_F {worst:.2e} (tol 1e-6), {elapsed:.2} s (limit 10 s){}", errors.join("; ")),
    );
}

fn synchronization(g: &mut Gate, scn: &Scenario, d: &Design, optimal: &[GainSet<f64>]) {
    let initial: Vec<_> = d.agents.iter().map(|a| a.initial.clone()).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut runs = Vec::new();
    for seed in SEEDS {
        let mut s = scn.clone();
        s.reseed(seed);
        runs.push((format!("seed {seed}"), s));
    }
    let mut s = scn.clone();
    s.zeta0 = dvector![0.2, -0.1];
    runs.push(("w0 (1,-1), zeta0 (0.2,-0.1)".into(), s));
    for (label, s) in &runs {
        for (kind, gains) in [("initial", &initial), ("optimal", &optimal.to_vec())] {
            let start = Instant::now();
            let traj = pipeline::simulate(s, d, gains).unwrap();
            let elapsed = start.elapsed().as_secs_f64();
            let worst = traj
                .times
                .iter()
                .enumerate()
                .filter(|(_, &t)| t >= 15.0 - 1e-9)
                .flat_map(|(k, _)| traj.followers.iter().map(move |f| f.e[k].norm()))
                .fold(0.0, f64::max);
            let pass = worst < 1e-2 && elapsed < 30.0;
            ok &= pass;
            lines.push(format!(
                "{label} w0=({:.3},{:.3}) {kind}: {worst:.2e} in {elapsed:.2} s{}",
                s.leader.w0[0],
                s.leader.w0[1],
                if pass { "" } else { " <-" }
            ));
        }
    }
    g.report("synchronization", ok, format!("max |e_i(t)| for t >= 15 s (tol 1e-2): {}", lines.join("; ")));
}

fn optimality_ordering(g: &mut Gate, scn: &Scenario, d: &Design, learned: &pipeline::Learned) {
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, a) in d.agents.iter().enumerate() {
        let x0 = augmented_x0(scn, d, i);
        let p_init = hetsync::policy_iteration::policy_evaluation(&a.plant, &a.initial.k_ic).unwrap();
        let run_i = simulate_augmented(&a.plant, &a.initial.k_ic, &x0, scn.sim.t_end, scn.sim.dt).unwrap();
        let run_o = simulate_augmented(&a.plant, &learned.traces[i].k_final, &x0, scn.sim.t_end, scn.sim.dt).unwrap();
        let ci = evaluate_cost(&run_i, &p_init).unwrap();
        let co = evaluate_cost(&run_o, &learned.traces[i].p_final).unwrap();
        let order = co.j_closed_form <= ci.j_closed_form + 1e-9 && co.j_quadrature <= ci.j_quadrature + 1e-9;
        let agree = ci.agrees() && co.agrees();
        ok &= order && agree;
        lines.push(format!(
            "{}: J_init {:.6} (quad {:.6}), J_opt {:.3e} (quad {:.3e})",
            a.name, ci.j_closed_form, ci.j_quadrature, co.j_closed_form, co.j_quadrature
        ));
    }
    g.report("optimality ordering", ok, lines.join("; "));
}

fn compensator_convergence(g: &mut Gate, scn: &Scenario, d: &Design) {
    let initial: Vec<_> = d.agents.iter().map(|a| a.initial.clone()).collect();
    let traj = pipeline::simulate(scn, d, &initial).unwrap();
    let last = traj.times.len() - 1;
    let w = &traj.leader_states[last];
    let worst = traj.followers.iter().map(|f| (&f.xi[last] - w).norm()).fold(0.0, f64::max);
    let alphas_ok = d.compensator.alphas == vec![-2.0, -2.0, -2.0, -1.0, -2.0];
    g.report(
        "compensator convergence",
        worst < 1e-3 && alphas_ok,
        format!("max |xi_i(20) - w(20)| = {worst:.2e} (tol 1e-3), alpha = {:?}", d.compensator.alphas),
    );
}

fn main() {
    let scn = parse_scenario(builtin(BUILTIN_NAME).unwrap(), BUILTIN_NAME).unwrap();
    assert_eq!(w0_from_seed(1, 2), w0_from_seed(1, 2));
    let d = pipeline::design(&scn).unwrap();
    let learned = pipeline::learn(&scn, &d).unwrap();
    let mut g = Gate { failed: 0 };

    regulator_reproduction(&mut g, &scn);
    initial_gain_consistency(&mut g, &d);
    optimal_gain_reproduction(&mut g, &d);
    theorem2_suite(&mut g, &d);
    oracle_equivalence(&mut g);
    synchronization(&mut g, &scn, &d, &learned.optimal);
    optimality_ordering(&mut g, &scn, &d, &learned);
    compensator_convergence(&mut g, &scn, &d);

    println!("{} of 8 criteria passed", 8 - g.failed);
    if g.failed > 0 {
        std::process::exit(1);
    }
}

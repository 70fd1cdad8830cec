//! JSON scenario documents.
//!
//! Matrices are row-major nested arrays. Node `0` in `topology.edges` is the
//! leader, followers are numbered from 1 in the order of `agents`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{AgentDynamics, LeaderModel};
use crate::topology::{build_topology, Topology};
use crate::{Mat, Vector};

pub const BUILTIN_NAME: &str = "paper_six_agents";
const BUILTIN: &str = include_str!("../scenarios/paper_six_agents.json");

/// Text of a bundled scenario.
pub fn builtin(name: &str) -> Option<&'static str> {
    (name == BUILTIN_NAME).then_some(BUILTIN)
}

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderFile {
    #[serde(rename = "S")]
    pub s: Rows,
    pub w0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub name: String,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "K1", default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignParams {
    pub r: f64,
    pub epsilon: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    pub x0: Rows,
    pub xi0: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub t_end: f64,
    pub dt: f64,
}

/// On-disk form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub leader: LeaderFile,
    pub agents: Vec<AgentFile>,
    pub topology: TopologyFile,
    pub design: DesignParams,
    pub init: InitFile,
    pub sim: SimParams,
}

/// Validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub leader: LeaderModel<f64>,
    pub agents: Vec<AgentDynamics<f64>>,
    /// Per-agent initial `K1`; `None` means synthesize one.
    pub k1: Vec<Option<Mat>>,
    pub topology: Topology,
    pub design: DesignParams,
    pub x0: Vec<Vector>,
    pub xi0: Vec<Vector>,
    pub zeta0: Vector,
    /// Seed that produced `leader.w0`, when it was drawn.
    pub seed: Option<u64>,
    pub sim: SimParams,
}

/// Draws `w0` uniformly from `[-1, 1]^q`, rejecting draws with norm below 0.1.
pub fn w0_from_seed(seed: u64, q: usize) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let w = DVector::from_fn(q, |_, _| rng.random_range(-1.0..=1.0));
        if w.norm() >= 0.1 {
            return w;
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], context: &str, name: &str) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::InvalidInput(format!("{context}: matrix {name} is empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::InvalidInput(format!(
            "{context}: matrix {name} row {bad} has {} entries, expected {c}",
            rows[bad].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{context}: matrix {name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Mat) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: &[f64], context: &str, name: &str) -> Result<Vector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{context}: {name} has non-finite entries")));
    }
    Ok(DVector::from_column_slice(v))
}

fn check_len(v: &Vector, len: usize, context: &str, name: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension {
            context: context.into(),
            matrix: name.into(),
            expected_rows: len,
            expected_cols: 1,
            got_rows: v.len(),
            got_cols: 1,
        });
    }
    Ok(())
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let d = file.design;
        if !(d.r > 0.0) || !d.r.is_finite() {
            return Err(Error::InvalidInput(format!("design.r must be positive, got {}", d.r)));
        }
        if !(d.epsilon > 0.0) || !d.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("design.epsilon must be positive, got {}", d.epsilon)));
        }
        if d.max_iter == 0 {
            return Err(Error::InvalidInput("design.max_iter must be positive".into()));
        }
        let s = file.sim;
        if !(s.dt > 0.0) || !s.dt.is_finite() || !(s.t_end >= 0.0) || !s.t_end.is_finite() {
            return Err(Error::InvalidInput(format!("sim: need t_end >= 0 and dt > 0, got {} and {}", s.t_end, s.dt)));
        }

        let s_mat = matrix_from_rows(&file.leader.s, "leader", "S")?;
        let q = s_mat.nrows();
        let seed = file.init.seed;
        let w0 = match seed {
            Some(seed) => w0_from_seed(seed, q),
            None => vector(&file.leader.w0, "leader", "w0")?,
        };
        let leader = LeaderModel::new(s_mat, w0)?;

        let mut agents = Vec::with_capacity(file.agents.len());
        let mut k1 = Vec::with_capacity(file.agents.len());
        for (i, a) in file.agents.iter().enumerate() {
            if file.agents[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidInput(format!("duplicate agent name `{}`", a.name)));
            }
            let ctx = format!("agent `{}`", a.name);
            let agent = AgentDynamics::new(
                a.name.clone(),
                matrix_from_rows(&a.a, &ctx, "A")?,
                matrix_from_rows(&a.b, &ctx, "B")?,
                matrix_from_rows(&a.c, &ctx, "C")?,
                matrix_from_rows(&a.d, &ctx, "D")?,
                matrix_from_rows(&a.e, &ctx, "E")?,
                matrix_from_rows(&a.f, &ctx, "F")?,
            )?;
            if agent.q() != q {
                return Err(Error::Dimension {
                    context: ctx,
                    matrix: "E".into(),
                    expected_rows: agent.n(),
                    expected_cols: q,
                    got_rows: agent.e.nrows(),
                    got_cols: agent.e.ncols(),
                });
            }
            let k = match &a.k1 {
                Some(rows) => {
                    let k = matrix_from_rows(rows, &ctx, "K1")?;
                    if k.shape() != (agent.m(), agent.n()) {
                        return Err(Error::Dimension {
                            context: ctx,
                            matrix: "K1".into(),
                            expected_rows: agent.m(),
                            expected_cols: agent.n(),
                            got_rows: k.nrows(),
                            got_cols: k.ncols(),
                        });
                    }
                    Some(k)
                }
                None => None,
            };
            agents.push(agent);
            k1.push(k);
        }
        let edges: Vec<(usize, usize)> = file.topology.edges.iter().map(|e| (e[0], e[1])).collect();
        let topology = build_topology(agents.len(), &edges)?;

        let n = agents.len();
        if file.init.x0.len() != n || file.init.xi0.len() != n {
            return Err(Error::InvalidInput(format!(
                "init: expected {n} entries in x0 and xi0, got {} and {}",
                file.init.x0.len(),
                file.init.xi0.len()
            )));
        }
        let mut x0 = Vec::with_capacity(n);
        let mut xi0 = Vec::with_capacity(n);
        for (i, a) in agents.iter().enumerate() {
            let ctx = format!("agent `{}`", a.name);
            let x = vector(&file.init.x0[i], &ctx, "x0")?;
            check_len(&x, a.n(), &ctx, "x0")?;
            let xi = vector(&file.init.xi0[i], &ctx, "xi0")?;
            check_len(&xi, q, &ctx, "xi0")?;
            x0.push(x);
            xi0.push(xi);
        }
        let zeta0 = match &file.init.zeta0 {
            Some(z) => {
                let z = vector(z, "init", "zeta0")?;
                check_len(&z, q, "init", "zeta0")?;
                z
            }
            None => {
                log::info!("init.zeta0 not given; using zero, which switches off the transient correction terms");
                DVector::zeros(q)
            }
        };
        Ok(Scenario { leader, agents, k1, topology, design: d, x0, xi0, zeta0, seed, sim: s })
    }

    /// Replaces `w0` with a seeded draw.
    pub fn reseed(&mut self, seed: u64) {
        self.leader.w0 = w0_from_seed(seed, self.leader.q());
        self.seed = Some(seed);
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            leader: LeaderFile { s: matrix_to_rows(&self.leader.s), w0: self.leader.w0.iter().copied().collect() },
            agents: self
                .agents
                .iter()
                .zip(&self.k1)
                .map(|(a, k)| AgentFile {
                    name: a.name.clone(),
                    a: matrix_to_rows(&a.a),
                    b: matrix_to_rows(&a.b),
                    c: matrix_to_rows(&a.c),
                    d: matrix_to_rows(&a.d),
                    e: matrix_to_rows(&a.e),
                    f: matrix_to_rows(&a.f),
                    k1: k.as_ref().map(matrix_to_rows),
                })
                .collect(),
            topology: TopologyFile { edges: self.topology.edges().iter().map(|&(a, b)| [a, b]).collect() },
            design: self.design,
            init: InitFile {
                x0: self.x0.iter().map(|v| v.iter().copied().collect()).collect(),
                xi0: self.xi0.iter().map(|v| v.iter().copied().collect()).collect(),
                zeta0: Some(self.zeta0.iter().copied().collect()),
                seed: self.seed,
            },
            sim: self.sim,
        }
    }
}

/// Parses JSON text; `origin` labels error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let msg = inner.to_string();
        // name the missing field with its full path, e.g. `design.r`
        let located = match msg.strip_prefix("missing field `").and_then(|m| m.split_once('`')) {
            Some((field, rest)) if path != "." => format!("missing field `{path}.{field}`{rest}"),
            _ if path != "." => format!("{path}: {msg}"),
            _ => msg,
        };
        Error::Parse(format!("{origin}: {located}"))
    })?;
    Scenario::from_file(&file)
}

/// Loads a scenario from a path, or a bundled one by name.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(builtin) {
            return parse_scenario(text, BUILTIN_NAME);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text, &path.display().to_string())
}

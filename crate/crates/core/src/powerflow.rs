//! Branch-flow solvers for a radial chain and the loss / voltage metrics.
//!
//! Link `j` (0-based) carries `P[j] + iQ[j]` from node `j` to node `j + 1`.
//! Voltages are indexed by node, `V[0]` being the substation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::FlowError;
use crate::model::Feeder;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Slack allowed on the capability bound when validating hand-built injections.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowModel {
    Linear,
    Nonlinear,
}

impl FlowModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowModel::Linear => "linear",
            FlowModel::Nonlinear => "nonlinear",
        }
    }
}

impl std::str::FromStr for FlowModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "nonlinear" => Ok(Self::Nonlinear),
            other => Err(format!("unknown model '{other}' (expected linear|nonlinear)")),
        }
    }
}

/// Reactive generation setpoint per node, VAr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Injection {
    pub q_g: Vec<f64>,
}

impl Injection {
    pub fn zeros(n: usize) -> Self {
        Self { q_g: vec![0.0; n] }
    }

    pub fn new(q_g: Vec<f64>) -> Self {
        Self { q_g }
    }

    /// Checks length and the per-node capability bound `|q_g| <= q_max`.
    pub fn check(&self, feeder: &Feeder) -> Result<(), FlowError> {
        if self.q_g.len() != feeder.len() {
            return Err(FlowError::InjectionSize {
                expected: feeder.len(),
                got: self.q_g.len(),
            });
        }
        for (i, (&q, node)) in self.q_g.iter().zip(&feeder.nodes).enumerate() {
            let q_max = node.q_max();
            if !(q.abs() <= q_max + BOUND_SLACK * q_max.max(1.0)) {
                return Err(FlowError::InjectionBound {
                    index: i + 1,
                    q,
                    q_max,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSolution {
    /// Real power leaving node `j` toward `j + 1`, W. Length `n`.
    pub p: Vec<f64>,
    /// Reactive power on the same links, VAr.
    pub q: Vec<f64>,
    /// Node voltages, V. Length `n + 1`, `v[0] == v0`.
    pub v: Vec<f64>,
    pub model: FlowModel,
    pub iterations: usize,
    pub residual: f64,
}

impl FlowSolution {
    /// Rows of `(node_index, V, P out, Q out)`; the last node has no outgoing link.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model={}", self.model.as_str());
        let _ = writeln!(out, "# iterations={}", self.iterations);
        let _ = writeln!(out, "# residual={:e}", self.residual);
        let _ = writeln!(out, "node_index,v_volts,p_watts_outgoing,q_var_outgoing");
        for (k, v) in self.v.iter().enumerate() {
            let p = self.p.get(k).copied().unwrap_or(0.0);
            let q = self.q.get(k).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{k},{v},{p},{q}");
        }
        out
    }
}

/// Voltage at `max_k |V_k - V_0| / V_0` and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageDeviation {
    pub value: f64,
    /// Node index in `1..=n`; 0 when the feeder has no nodes.
    pub node: usize,
}

/// Net extraction per node for a given injection.
fn net_extraction(feeder: &Feeder, inj: &Injection) -> (Vec<f64>, Vec<f64>) {
    feeder
        .nodes
        .iter()
        .zip(&inj.q_g)
        .map(|(n, &q_g)| (n.net_p(), n.net_q(q_g)))
        .unzip()
}

/// Linearized branch flow: one backward pass for the flows, one forward pass
/// for the voltages.
pub fn solve_lindistflow(feeder: &Feeder, inj: &Injection) -> Result<FlowSolution, FlowError> {
    inj.check(feeder)?;
    let n = feeder.len();
    let (p_net, q_net) = net_extraction(feeder, inj);

    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let (mut acc_p, mut acc_q) = (0.0, 0.0);
    for j in (0..n).rev() {
        acc_p += p_net[j];
        acc_q += q_net[j];
        p[j] = acc_p;
        q[j] = acc_q;
    }

    let v0 = feeder.v0;
    let mut v = Vec::with_capacity(n + 1);
    v.push(v0);
    for (j, line) in feeder.lines.iter().enumerate() {
        let next = v[j] - (line.r_ohm * p[j] + line.x_ohm * q[j]) / v0;
        v.push(next);
    }

    Ok(FlowSolution {
        p,
        q,
        v,
        model: FlowModel::Linear,
        iterations: 0,
        residual: 0.0,
    })
}

/// Full branch flow by backward/forward sweep.
///
/// Starts from a flat profile with zero loss terms. Each iteration
/// accumulates flows from the far end using the previous iterate's link
/// losses `r (P^2 + Q^2) / V^2`, then propagates `V^2` forward. Stops when the
/// largest relative voltage change falls below `tol` and the flows have
/// settled to the same relative precision (scaled by the total absolute
/// nodal extraction).
pub fn solve_distflow(
    feeder: &Feeder,
    inj: &Injection,
    tol: f64,
    max_iter: usize,
) -> Result<FlowSolution, FlowError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(FlowError::InvalidTolerance(tol));
    }
    inj.check(feeder)?;
    let n = feeder.len();
    let (p_net, q_net) = net_extraction(feeder, inj);
    let v0 = feeder.v0;

    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut v = vec![v0; n + 1];
    let mut residual = f64::INFINITY;
    let flow_scale: f64 = p_net.iter().chain(&q_net).map(|x| x.abs()).sum();

    for iteration in 1..=max_iter {
        // Squared current magnitude per link from the previous iterate.
        let current_sq: Vec<f64> = (0..n).map(|j| (p[j] * p[j] + q[j] * q[j]) / (v[j] * v[j])).collect();

        let mut flow_change: f64 = 0.0;
        let (mut down_p, mut down_q) = (0.0, 0.0);
        for j in (0..n).rev() {
            let line = &feeder.lines[j];
            let next_p = down_p + p_net[j] + line.r_ohm * current_sq[j];
            let next_q = down_q + q_net[j] + line.x_ohm * current_sq[j];
            flow_change = flow_change.max((next_p - p[j]).abs() + (next_q - q[j]).abs());
            p[j] = next_p;
            q[j] = next_q;
            down_p = next_p;
            down_q = next_q;
        }

        residual = if flow_scale > 0.0 { flow_change / flow_scale } else { 0.0 };
        let mut v_sq = v0 * v0;
        for j in 0..n {
            let line = &feeder.lines[j];
            let i_sq = (p[j] * p[j] + q[j] * q[j]) / v_sq;
            v_sq += -2.0 * (line.r_ohm * p[j] + line.x_ohm * q[j])
                + (line.r_ohm * line.r_ohm + line.x_ohm * line.x_ohm) * i_sq;
            if !(v_sq > 0.0 && v_sq.is_finite()) {
                return Err(FlowError::Diverged {
                    iterations: iteration,
                    residual: f64::INFINITY,
                });
            }
            let next = v_sq.sqrt();
            residual = f64::max(residual, (next - v[j + 1]).abs() / v0);
            v[j + 1] = next;
        }

        if residual < tol {
            return Ok(FlowSolution {
                p,
                q,
                v,
                model: FlowModel::Nonlinear,
                iterations: iteration,
                residual,
            });
        }
    }

    Err(FlowError::Diverged {
        iterations: max_iter,
        residual,
    })
}

pub fn solve(feeder: &Feeder, inj: &Injection, model: FlowModel) -> Result<FlowSolution, FlowError> {
    match model {
        FlowModel::Linear => solve_lindistflow(feeder, inj),
        FlowModel::Nonlinear => solve_distflow(feeder, inj, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER),
    }
}

fn check_sizes(sol: &FlowSolution, feeder: &Feeder) -> Result<(), FlowError> {
    let n = feeder.len();
    if sol.v.len() != n + 1 || sol.p.len() != n || sol.q.len() != n {
        return Err(FlowError::SolutionSize {
            expected: n + 1,
            got: sol.v.len(),
        });
    }
    Ok(())
}

/// Ohmic losses `sum_j r_j (P_j^2 + Q_j^2) / V_0^2`, W, for either model.
pub fn losses(sol: &FlowSolution, feeder: &Feeder) -> Result<f64, FlowError> {
    check_sizes(sol, feeder)?;
    let v0_sq = feeder.v0 * feeder.v0;
    Ok(feeder
        .lines
        .iter()
        .zip(sol.p.iter().zip(&sol.q))
        .map(|(line, (p, q))| line.r_ohm * (p * p + q * q))
        .sum::<f64>()
        / v0_sq)
}

/// Largest per-unit deviation from the substation voltage over nodes `1..=n`.
pub fn max_voltage_deviation(sol: &FlowSolution) -> VoltageDeviation {
    let v0 = sol.v[0];
    sol.v
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| VoltageDeviation {
            value: ((v - v0) / v0).abs(),
            node: k,
        })
        .fold(VoltageDeviation { value: 0.0, node: 0 }, |best, d| {
            if d.value > best.value {
                d
            } else {
                best
            }
        })
}

//! Circuit data model and the seeded rural-feeder generator.
//!
//! A [`Feeder`] is a single radial chain. The substation is node 0 and is not
//! stored in `nodes`; `nodes[k - 1]` is node `k` and `lines[k - 1]` is the link
//! feeding it from node `k - 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::rng::SeededStream;

/// Deviation of a single link's r/x from the feeder ratio above which the
/// feeder is reported as non-uniform.
pub const RATIO_UNIFORMITY_TOLERANCE: f64 = 0.01;

pub const FEEDER_FORMAT_TAG: &str = "voltvar-feeder v1";
pub const FEEDER_COLUMNS: &str = "index,length_km,r_ohm,x_ohm,p_c_w,q_c_var,p_g_w,s_va";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub length_km: f64,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

impl LineSegment {
    pub fn new(length_km: f64, r_ohm: f64, x_ohm: f64) -> Self {
        Self {
            length_km,
            r_ohm,
            x_ohm,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), ModelError> {
        let bad = |reason: &str| ModelError::InvalidLine {
            index,
            reason: reason.to_string(),
        };
        if !(self.length_km > 0.0 && self.length_km.is_finite()) {
            return Err(bad("length must be positive"));
        }
        if !(self.r_ohm > 0.0 && self.r_ohm.is_finite()) {
            return Err(bad("resistance must be positive"));
        }
        if !(self.x_ohm > 0.0 && self.x_ohm.is_finite()) {
            return Err(bad("reactance must be positive"));
        }
        Ok(())
    }
}

/// Per-node consumption, PV output and inverter rating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    /// Real consumption, W.
    pub p_c: f64,
    /// Reactive consumption, VAr.
    pub q_c: f64,
    /// Real PV generation, W.
    pub p_g: f64,
    /// Inverter apparent-power capability, VA. Zero where there is no PV.
    pub s: f64,
}

impl NodeState {
    pub fn load(p_c: f64, q_c: f64) -> Self {
        Self {
            p_c,
            q_c,
            ..Self::default()
        }
    }

    pub fn with_pv(mut self, p_g: f64, s: f64) -> Self {
        self.p_g = p_g;
        self.s = s;
        self
    }

    pub fn has_pv(&self) -> bool {
        self.s > 0.0
    }

    /// Net real extraction `p_c - p_g`.
    pub fn net_p(&self) -> f64 {
        self.p_c - self.p_g
    }

    /// Net reactive extraction for a given inverter setpoint.
    pub fn net_q(&self, q_g: f64) -> f64 {
        self.q_c - q_g
    }

    /// Reactive headroom `sqrt(s^2 - p_g^2)`, clamped to zero for an
    /// overrated node.
    pub fn q_max(&self) -> f64 {
        (self.s * self.s - self.p_g * self.p_g).max(0.0).sqrt()
    }

    pub fn validate(&self, index: usize) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidNode { index, reason };
        for (name, v) in [("p_c", self.p_c), ("q_c", self.q_c), ("p_g", self.p_g)] {
            if !v.is_finite() {
                return Err(bad(format!("{name} must be finite")));
            }
            if v < 0.0 {
                return Err(bad(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.s.is_nan() || self.s < 0.0 {
            return Err(bad(format!("s must be nonnegative, got {}", self.s)));
        }
        if self.p_g > self.s {
            return Err(bad(format!(
                "p_g = {} exceeds inverter rating s = {}",
                self.p_g, self.s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seeds {
    pub topology: u64,
    pub load: u64,
}

/// Ratio of total resistance to total reactance, with the worst per-link
/// relative departure from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactanceRatio {
    pub alpha: f64,
    pub max_link_deviation: f64,
}

impl ReactanceRatio {
    pub fn is_uniform(&self) -> bool {
        self.max_link_deviation <= RATIO_UNIFORMITY_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    /// Substation phase-to-neutral voltage, V.
    pub v0: f64,
    pub nodes: Vec<NodeState>,
    pub lines: Vec<LineSegment>,
    /// Generator seeds, when the feeder came from one.
    pub seeds: Option<Seeds>,
}

impl Feeder {
    /// Builds and validates a hand-specified feeder.
    pub fn new(v0: f64, lines: Vec<LineSegment>, nodes: Vec<NodeState>) -> Result<Self, ModelError> {
        let feeder = Self {
            v0,
            nodes,
            lines,
            seeds: None,
        };
        feeder.validate()?;
        Ok(feeder)
    }

    /// Number of load nodes, excluding the substation.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(ModelError::InvalidSpec {
                field: "v0",
                reason: format!("must be positive, got {}", self.v0),
            });
        }
        if self.nodes.len() != self.lines.len() {
            return Err(ModelError::TopologyMismatch {
                nodes: self.nodes.len(),
                lines: self.lines.len(),
            });
        }
        for (i, line) in self.lines.iter().enumerate() {
            line.validate(i)?;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            node.validate(i + 1)?;
        }
        Ok(())
    }

    pub fn pv_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.has_pv()).count()
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .fold((0.0, 0.0), |(p, q), n| (p + n.p_c, q + n.q_c))
    }

    pub fn total_pv(&self) -> f64 {
        self.nodes.iter().map(|n| n.p_g).sum()
    }

    pub fn reactance_ratio(&self) -> ReactanceRatio {
        let r: f64 = self.lines.iter().map(|l| l.r_ohm).sum();
        let x: f64 = self.lines.iter().map(|l| l.x_ohm).sum();
        let alpha = r / x;
        let max_link_deviation = self
            .lines
            .iter()
            .map(|l| ((l.r_ohm / l.x_ohm) / alpha - 1.0).abs())
            .fold(0.0, f64::max);
        ReactanceRatio {
            alpha,
            max_link_deviation,
        }
    }

    /// Serializes to the versioned line-oriented feeder format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {FEEDER_FORMAT_TAG}");
        let _ = writeln!(out, "# v0_v={}", self.v0);
        match self.seeds {
            Some(s) => {
                let _ = writeln!(out, "# seeds={},{}", s.topology, s.load);
            }
            None => {
                let _ = writeln!(out, "# seeds=none");
            }
        }
        let _ = writeln!(out, "{FEEDER_COLUMNS}");
        for (i, (line, node)) in self.lines.iter().zip(&self.nodes).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                i + 1,
                line.length_km,
                line.r_ohm,
                line.x_ohm,
                node.p_c,
                node.q_c,
                node.p_g,
                node.s
            );
        }
        out
    }

    /// Parses the format written by [`Feeder::to_text`] and validates the result.
    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let parse_err = |line: usize, reason: String| ModelError::Parse { line, reason };
        let mut lines_iter = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        let (_, tag) = lines_iter
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))?;
        if tag.trim_start_matches('#').trim() != FEEDER_FORMAT_TAG {
            return Err(parse_err(1, format!("expected header '# {FEEDER_FORMAT_TAG}'")));
        }

        let mut v0 = None;
        let mut seeds = None;
        let mut saw_columns = false;
        let mut nodes = Vec::new();
        let mut segments = Vec::new();

        for (lineno, raw) in lines_iter {
            if raw.is_empty() {
                continue;
            }
            if let Some(meta) = raw.strip_prefix('#') {
                let Some((key, value)) = meta.trim().split_once('=') else {
                    continue;
                };
                match key.trim() {
                    "v0_v" => {
                        v0 = Some(value.trim().parse::<f64>().map_err(|e| {
                            parse_err(lineno, format!("v0_v: {e}"))
                        })?)
                    }
                    "seeds" => {
                        let value = value.trim();
                        if value != "none" {
                            let (t, l) = value
                                .split_once(',')
                                .ok_or_else(|| parse_err(lineno, "seeds: expected t,l".into()))?;
                            let parse = |s: &str| {
                                s.trim()
                                    .parse::<u64>()
                                    .map_err(|e| parse_err(lineno, format!("seeds: {e}")))
                            };
                            seeds = Some(Seeds {
                                topology: parse(t)?,
                                load: parse(l)?,
                            });
                        }
                    }
                    _ => {}
                }
                continue;
            }
            if !saw_columns {
                if raw != FEEDER_COLUMNS {
                    return Err(parse_err(lineno, format!("expected columns '{FEEDER_COLUMNS}'")));
                }
                saw_columns = true;
                continue;
            }
            let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(parse_err(lineno, format!("expected 8 fields, got {}", fields.len())));
            }
            let index: usize = fields[0]
                .parse()
                .map_err(|e| parse_err(lineno, format!("index: {e}")))?;
            if index != nodes.len() + 1 {
                return Err(parse_err(
                    lineno,
                    format!("expected index {}, got {index}", nodes.len() + 1),
                ));
            }
            let mut vals = [0.0; 7];
            for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .parse::<f64>()
                    .map_err(|e| parse_err(lineno, format!("'{field}': {e}")))?;
            }
            segments.push(LineSegment::new(vals[0], vals[1], vals[2]));
            nodes.push(NodeState {
                p_c: vals[3],
                q_c: vals[4],
                p_g: vals[5],
                s: vals[6],
            });
        }

        if !saw_columns {
            return Err(parse_err(0, "missing column header".into()));
        }
        let v0 = v0.ok_or_else(|| parse_err(0, "missing '# v0_v=' header".into()))?;
        let feeder = Feeder {
            v0,
            nodes,
            lines: segments,
            seeds,
        };
        feeder.validate()?;
        Ok(feeder)
    }
}

/// Parameters of a randomly generated rural feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub node_count: usize,
    pub spacing_min: f64,
    pub spacing_max: f64,
    pub r_per_km: f64,
    pub x_per_km: f64,
    pub v0: f64,
    pub p_c_max: f64,
    pub q_c_ratio_min: f64,
    pub q_c_ratio_max: f64,
    pub penetration: f64,
    pub p_g: f64,
    pub s: f64,
    pub topology_seed: u64,
    pub load_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        fn check(ok: bool, field: &'static str, reason: impl Into<String>) -> Result<(), ModelError> {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidSpec {
                    field,
                    reason: reason.into(),
                })
            }
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        check(self.node_count > 0, "node_count", "must be at least 1")?;
        check(pos(self.spacing_min), "spacing_min", "must be positive")?;
        check(pos(self.spacing_max), "spacing_max", "must be positive")?;
        check(
            self.spacing_min <= self.spacing_max,
            "spacing_min",
            "must not exceed spacing_max",
        )?;
        check(pos(self.r_per_km), "r_per_km", "must be positive")?;
        check(pos(self.x_per_km), "x_per_km", "must be positive")?;
        check(pos(self.v0), "v0", "must be positive")?;
        check(nonneg(self.p_c_max), "p_c_max", "must be nonnegative")?;
        check(nonneg(self.q_c_ratio_min), "q_c_ratio_min", "must be nonnegative")?;
        check(nonneg(self.q_c_ratio_max), "q_c_ratio_max", "must be nonnegative")?;
        check(
            self.q_c_ratio_min <= self.q_c_ratio_max,
            "q_c_ratio_min",
            "must not exceed q_c_ratio_max",
        )?;
        check(
            (0.0..=1.0).contains(&self.penetration),
            "penetration",
            format!("must lie in [0, 1], got {}", self.penetration),
        )?;
        check(nonneg(self.p_g), "p_g", "must be nonnegative")?;
        check(nonneg(self.s), "s", "must be nonnegative")?;
        check(
            self.p_g <= self.s,
            "p_g",
            format!("p_g = {} exceeds inverter rating s = {}", self.p_g, self.s),
        )?;
        Ok(())
    }

    /// Number of PV-equipped nodes, `round(penetration * node_count)`.
    pub fn pv_node_count(&self) -> usize {
        (self.penetration * self.node_count as f64).round() as usize
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            topology: self.topology_seed,
            load: self.load_seed,
        }
    }
}

/// The four prototype operating regimes (penetration, p_c_max, p_g).
const CASES: [(f64, f64, f64); 4] = [
    (0.20, 2500.0, 1000.0),
    (0.20, 1000.0, 2000.0),
    (0.50, 2500.0, 1000.0),
    (0.50, 1000.0, 2000.0),
];

/// Scenario for prototype case 1..=4 with both seeds set to 1.
pub fn case_spec(case_id: u32) -> Result<ScenarioSpec, ModelError> {
    let &(penetration, p_c_max, p_g) = case_id
        .checked_sub(1)
        .and_then(|i| CASES.get(i as usize))
        .ok_or(ModelError::UnknownCase(case_id))?;
    Ok(ScenarioSpec {
        node_count: 250,
        spacing_min: 0.2,
        spacing_max: 0.3,
        r_per_km: 0.33,
        x_per_km: 0.38,
        v0: 7200.0,
        p_c_max,
        q_c_ratio_min: 0.2,
        q_c_ratio_max: 0.3,
        penetration,
        p_g,
        s: 2200.0,
        topology_seed: 1,
        load_seed: 1,
    })
}

/// Draws line lengths from the topology stream. All node states are zero.
pub fn build_topology(spec: &ScenarioSpec) -> Result<Feeder, ModelError> {
    spec.validate()?;
    let mut rng = SeededStream::topology(spec.topology_seed);
    let lines = (0..spec.node_count)
        .map(|_| {
            let length = rng.uniform(spec.spacing_min, spec.spacing_max);
            LineSegment::new(length, spec.r_per_km * length, spec.x_per_km * length)
        })
        .collect();
    Ok(Feeder {
        v0: spec.v0,
        nodes: vec![NodeState::default(); spec.node_count],
        lines,
        seeds: Some(Seeds {
            topology: spec.topology_seed,
            load: spec.load_seed,
        }),
    })
}

/// Draws loads and places PV from the load stream. Line data is untouched.
///
/// Per node, in order: `p_c ~ U[0, p_c_max]`, then `q_c = u * p_c` with
/// `u ~ U[q_c_ratio_min, q_c_ratio_max]`. The PV set is the first
/// `pv_node_count` entries of a shuffled index list.
pub fn populate_loads_and_pv(mut feeder: Feeder, spec: &ScenarioSpec) -> Result<Feeder, ModelError> {
    spec.validate()?;
    if feeder.len() != spec.node_count {
        return Err(ModelError::InvalidSpec {
            field: "node_count",
            reason: format!("feeder has {} nodes, spec says {}", feeder.len(), spec.node_count),
        });
    }
    let mut rng = SeededStream::loads(spec.load_seed);
    for node in &mut feeder.nodes {
        let p_c = rng.uniform(0.0, spec.p_c_max);
        let ratio = rng.uniform(spec.q_c_ratio_min, spec.q_c_ratio_max);
        *node = NodeState::load(p_c, ratio * p_c);
    }
    let mut order: Vec<usize> = (0..feeder.len()).collect();
    rng.shuffle(&mut order);
    for &i in order.iter().take(spec.pv_node_count()) {
        feeder.nodes[i] = feeder.nodes[i].with_pv(spec.p_g, spec.s);
    }
    feeder.seeds = Some(spec.seeds());
    Ok(feeder)
}

/// Topology followed by loads and PV.
pub fn generate(spec: &ScenarioSpec) -> Result<Feeder, ModelError> {
    populate_loads_and_pv(build_topology(spec)?, spec)
}

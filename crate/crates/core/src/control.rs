//! Local reactive-power control laws for PV inverters.
//!
//! Every law maps a node's own measurements `(p_g, p_c, q_c, s)` to a reactive
//! setpoint `q_g` and saturates it at the inverter's remaining capability.
//! No law sees feeder-wide state or voltages.

use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::model::{Feeder, NodeState};
use crate::powerflow::Injection;

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Unity power factor, `q_g = 0`.
    None,
    Loss,
    Voltage,
    Hybrid,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Loss => "loss",
            Scheme::Voltage => "voltage",
            Scheme::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "loss" => Ok(Self::Loss),
            "voltage" => Ok(Self::Voltage),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!("unknown scheme '{other}' (expected none|loss|voltage|hybrid)")),
        }
    }
}

/// Multiplier on `p_c - p_g` in the voltage-flattening law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffMode {
    /// `1 / alpha`.
    #[default]
    PaperLiteral,
    /// `alpha`, which zeroes `r P + x Q` on every link when `r / x == alpha`.
    DropNulling,
}

impl CoeffMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoeffMode::PaperLiteral => "paper_literal",
            CoeffMode::DropNulling => "drop_nulling",
        }
    }

    pub fn multiplier(&self, alpha: f64) -> f64 {
        match self {
            CoeffMode::PaperLiteral => 1.0 / alpha,
            CoeffMode::DropNulling => alpha,
        }
    }
}

impl std::str::FromStr for CoeffMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_literal" => Ok(Self::PaperLiteral),
            "drop_nulling" => Ok(Self::DropNulling),
            other => Err(format!(
                "unknown coeff_mode '{other}' (expected paper_literal|drop_nulling)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub scheme: Scheme,
    /// Hybrid weight: 1 is pure loss control, 0 pure voltage control.
    pub k: f64,
    pub coeff_mode: CoeffMode,
    /// Feeder r/x ratio.
    pub alpha: f64,
    /// Per-unit voltage deviation limit.
    pub epsilon: f64,
}

impl ControlConfig {
    pub fn new(scheme: Scheme, k: f64, coeff_mode: CoeffMode, alpha: f64) -> Result<Self, ControlError> {
        let cfg = Self {
            scheme,
            k,
            coeff_mode,
            alpha,
            epsilon: DEFAULT_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unity power factor on every inverter.
    pub fn baseline(alpha: f64) -> Self {
        Self {
            scheme: Scheme::None,
            k: 0.0,
            coeff_mode: CoeffMode::default(),
            alpha,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn hybrid(k: f64, coeff_mode: CoeffMode, alpha: f64) -> Self {
        Self {
            scheme: Scheme::Hybrid,
            k,
            coeff_mode,
            alpha,
            epsilon: DEFAULT_EPSILON,
        }
    }

    /// Takes alpha from the feeder's total r / total x.
    pub fn for_feeder(feeder: &Feeder, scheme: Scheme, k: f64, coeff_mode: CoeffMode) -> Self {
        Self {
            scheme,
            k,
            coeff_mode,
            alpha: feeder.reactance_ratio().alpha,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ControlError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

/// What an inverter can observe at its own node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMeasurement {
    pub p_g: f64,
    pub p_c: f64,
    pub q_c: f64,
    pub s: f64,
}

impl LocalMeasurement {
    pub fn new(p_g: f64, p_c: f64, q_c: f64, s: f64) -> Result<Self, ControlError> {
        if [p_g, p_c, q_c, s].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(ControlError::InvalidMeasurement(format!(
                "fields must be nonnegative: p_g={p_g} p_c={p_c} q_c={q_c} s={s}"
            )));
        }
        if p_g > s {
            return Err(ControlError::OverRated { s, p_g });
        }
        Ok(Self { p_g, p_c, q_c, s })
    }

    /// Reads a node without validation; hand-built feeders may carry signed loads.
    pub fn at(node: &NodeState) -> Self {
        Self {
            p_g: node.p_g,
            p_c: node.p_c,
            q_c: node.q_c,
            s: node.s,
        }
    }

    pub fn q_max(&self) -> f64 {
        (self.s * self.s - self.p_g * self.p_g).max(0.0).sqrt()
    }
}

/// Remaining reactive capability `sqrt(s^2 - p_g^2)`.
pub fn reactive_capability(s: f64, p_g: f64) -> Result<f64, ControlError> {
    if p_g.is_nan() || s.is_nan() || p_g < 0.0 || s < 0.0 {
        return Err(ControlError::InvalidMeasurement(format!("s={s} p_g={p_g}")));
    }
    if p_g > s {
        return Err(ControlError::OverRated { s, p_g });
    }
    Ok((s * s - p_g * p_g).sqrt())
}

/// Saturates `q` to `[-q_max, q_max]`, keeping its sign.
pub fn constr(q: f64, q_max: f64) -> f64 {
    if q.abs() <= q_max {
        q
    } else {
        q.signum() * q_max
    }
}

/// Cancels the node's own reactive demand.
pub fn control_loss(m: &LocalMeasurement) -> f64 {
    constr(m.q_c, m.q_max())
}

/// Also supplies reactive power in proportion to the node's net real demand,
/// so that the resistive drop it causes is offset by the reactive one.
pub fn control_voltage(m: &LocalMeasurement, cfg: &ControlConfig) -> f64 {
    let c = cfg.coeff_mode.multiplier(cfg.alpha);
    constr(m.q_c + c * (m.p_c - m.p_g), m.q_max())
}

/// `constr(K * loss + (1 - K) * voltage)`, with both inner laws already saturated.
pub fn control_hybrid(m: &LocalMeasurement, cfg: &ControlConfig) -> f64 {
    let k = cfg.k;
    constr(
        k * control_loss(m) + (1.0 - k) * control_voltage(m, cfg),
        m.q_max(),
    )
}

/// Setpoint for the configured scheme.
pub fn setpoint(m: &LocalMeasurement, cfg: &ControlConfig) -> f64 {
    match cfg.scheme {
        Scheme::None => 0.0,
        Scheme::Loss => control_loss(m),
        Scheme::Voltage => control_voltage(m, cfg),
        Scheme::Hybrid => control_hybrid(m, cfg),
    }
}

/// Runs the same law at every node.
pub fn apply_control(feeder: &Feeder, cfg: &ControlConfig) -> Injection {
    Injection::new(
        feeder
            .nodes
            .iter()
            .map(|n| setpoint(&LocalMeasurement::at(n), cfg))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LineSegment, NodeState};

    const ALPHA: f64 = 0.33 / 0.38;

    fn m(p_g: f64, p_c: f64, q_c: f64, s: f64) -> LocalMeasurement {
        LocalMeasurement::new(p_g, p_c, q_c, s).unwrap()
    }

    #[test]
    fn capability() {
        let q = reactive_capability(2200.0, 2000.0).unwrap();
        assert!((q - 916.515138991168).abs() < 1e-9, "{q}");
        assert_eq!(reactive_capability(2200.0, 0.0).unwrap(), 2200.0);
        assert_eq!(reactive_capability(2200.0, 2200.0).unwrap(), 0.0);
        assert!(matches!(
            reactive_capability(2000.0, 2200.0),
            Err(ControlError::OverRated { .. })
        ));
    }

    #[test]
    fn clamp() {
        assert_eq!(constr(1.0, 2.0), 1.0);
        assert_eq!(constr(3.0, 2.0), 2.0);
        assert_eq!(constr(-3.0, 2.0), -2.0);
        assert_eq!(constr(17.0, 0.0), 0.0);
        assert_eq!(constr(-17.0, 0.0), 0.0);
    }

    #[test]
    fn loss_law() {
        assert_eq!(control_loss(&m(1000.0, 1200.0, 300.0, 2200.0)), 300.0);
        assert_eq!(control_loss(&m(0.0, 1200.0, 300.0, 0.0)), 0.0);
        let q = control_loss(&m(2000.0, 4000.0, 1000.0, 2200.0));
        assert!((q - 916.515138991168).abs() < 1e-9);
    }

    #[test]
    fn voltage_law_reverse_flow() {
        let cfg = ControlConfig::hybrid(0.0, CoeffMode::PaperLiteral, ALPHA);
        let q = control_voltage(&m(2000.0, 500.0, 125.0, 2200.0), &cfg);
        assert!((q + 916.515138991168).abs() < 1e-9, "{q}");
    }

    #[test]
    fn voltage_law_balanced_node() {
        for mode in [CoeffMode::PaperLiteral, CoeffMode::DropNulling] {
            let cfg = ControlConfig::hybrid(0.0, mode, ALPHA);
            assert_eq!(control_voltage(&m(800.0, 800.0, 0.0, 2200.0), &cfg), 0.0);
        }
    }

    #[test]
    fn drop_nulling_cancels_link_drop() {
        let (r, x) = (0.33 * 0.25, 0.38 * 0.25);
        let cfg = ControlConfig::hybrid(0.0, CoeffMode::DropNulling, r / x);
        let meas = m(300.0, 1700.0, 400.0, 1e9);
        let q_g = control_voltage(&meas, &cfg);
        let drop = r * (meas.p_c - meas.p_g) + x * (meas.q_c - q_g);
        assert!(drop.abs() < 1e-9, "{drop}");
    }

    #[test]
    fn hybrid_endpoints_and_zero_capability() {
        let meas = m(1000.0, 2000.0, 500.0, 2200.0);
        let cfg = ControlConfig::hybrid(1.0, CoeffMode::PaperLiteral, ALPHA);
        assert_eq!(control_hybrid(&meas, &cfg), control_loss(&meas));
        let cfg = cfg.with_k(0.0);
        assert_eq!(control_hybrid(&meas, &cfg), control_voltage(&meas, &cfg));
        for k in [-5.0, 0.3, 10.0] {
            let cfg = cfg.with_k(k);
            assert_eq!(control_hybrid(&m(0.0, 900.0, 200.0, 0.0), &cfg), 0.0);
        }
    }

    #[test]
    fn outer_clamp_matters_outside_unit_interval() {
        let meas = m(1000.0, 2000.0, 500.0, 2200.0);
        let cfg = ControlConfig::hybrid(10.0, CoeffMode::PaperLiteral, ALPHA);
        let q = control_hybrid(&meas, &cfg);
        assert!(q.abs() <= meas.q_max());
    }

    #[test]
    fn measurement_validation() {
        assert!(LocalMeasurement::new(3.0, 1.0, 1.0, 2.0).is_err());
        assert!(LocalMeasurement::new(1.0, -1.0, 1.0, 2.0).is_err());
        assert!(ControlConfig::new(Scheme::Hybrid, 0.5, CoeffMode::PaperLiteral, 0.0).is_err());
    }

    #[test]
    fn apply_control_baseline_and_loss_region() {
        let nodes = vec![
            NodeState::load(1000.0, 250.0).with_pv(1000.0, 2200.0),
            NodeState::load(800.0, 200.0),
            NodeState::load(1200.0, 300.0).with_pv(1000.0, 2200.0),
        ];
        let feeder = Feeder::new(7200.0, vec![LineSegment::new(0.25, 0.0825, 0.095); 3], nodes).unwrap();
        let cfg = ControlConfig::for_feeder(&feeder, Scheme::None, 0.0, CoeffMode::PaperLiteral);
        assert_eq!(apply_control(&feeder, &cfg).q_g, vec![0.0; 3]);
        let cfg = cfg.with_scheme(Scheme::Hybrid).with_k(1.0);
        assert_eq!(apply_control(&feeder, &cfg).q_g, vec![250.0, 0.0, 300.0]);
    }
}

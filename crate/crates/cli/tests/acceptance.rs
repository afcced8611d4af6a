//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line per check
//! and fails if any check fails. Run with `--nocapture` to see the lines.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use voltvar::control::{
    apply_control, constr, control_hybrid, control_loss, control_voltage, reactive_capability,
    CoeffMode, ControlConfig, LocalMeasurement, Scheme,
};
use voltvar::experiment::{
    evaluate, pareto_front, reference, run_case, sweep_k, CaseOptions, CaseRun, KGrid, SweepPoint,
};
use voltvar::model::{case_spec, generate, Feeder, ScenarioSpec};
use voltvar::powerflow::{self, solve_distflow, solve_lindistflow, FlowModel, Injection};
use voltvar::rng::SeededStream;

const N_SEEDS: usize = 20;
/// Topology and first load seed for the single-realization checks.
const GOLDEN_TOPOLOGY_SEED: u64 = 1;
const GOLDEN_LOAD_SEED: u64 = 1;

const C1_RUNTIME: Duration = Duration::from_secs(10);
const C2_RUNTIME: Duration = Duration::from_secs(60);
const C3_MIN_DV_REDUCTION: f64 = 0.005;
const C3_MAX_DV_FRACTION: f64 = 0.5;
const C5_FLAT_TOL: f64 = 1e-12;
const C5_FEEDERS: u64 = 100;
const C6_MODEL_GAP: f64 = 5e-3;
const C6_ENERGY_BALANCE: f64 = 1e-8;
const C6_TOL: f64 = 1e-10;
const C7_SAMPLES: usize = 1_000_000;

struct Report {
    criterion: &'static str,
    failures: Vec<String>,
}

impl Report {
    fn new(criterion: &'static str) -> Self {
        Self {
            criterion,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl AsRef<str>) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", self.criterion, what.as_ref());
        if !ok {
            self.failures.push(what.as_ref().to_string());
        }
    }

    fn finish(self) {
        assert!(
            self.failures.is_empty(),
            "{} failed:\n  {}",
            self.criterion,
            self.failures.join("\n  ")
        );
    }
}

fn golden_feeder(case: u32) -> Feeder {
    let spec = ScenarioSpec {
        topology_seed: GOLDEN_TOPOLOGY_SEED,
        load_seed: GOLDEN_LOAD_SEED,
        ..case_spec(case).unwrap()
    };
    generate(&spec).unwrap()
}

fn ensemble(case: u32, mode: CoeffMode) -> CaseRun {
    let opts = CaseOptions {
        n_seeds: N_SEEDS,
        grid: KGrid::default(),
        topology_seed: GOLDEN_TOPOLOGY_SEED,
        load_seed_base: GOLDEN_LOAD_SEED,
        coeff_mode: mode,
        model: FlowModel::Linear,
    };
    run_case(case, &opts).unwrap()
}

#[test]
fn c1_table_baselines() {
    let mut r = Report::new("C1 baselines");
    let start = Instant::now();
    for case in 1..=4u32 {
        let (mut l0, mut dv0) = (0.0, 0.0);
        for i in 0..N_SEEDS as u64 {
            let spec = ScenarioSpec {
                topology_seed: GOLDEN_TOPOLOGY_SEED,
                load_seed: GOLDEN_LOAD_SEED + i,
                ..case_spec(case).unwrap()
            };
            let feeder = generate(&spec).unwrap();
            let cfg = ControlConfig::for_feeder(&feeder, Scheme::None, 0.0, CoeffMode::PaperLiteral);
            let m = evaluate(&feeder, &cfg, FlowModel::Linear).unwrap();
            l0 += m.losses / N_SEEDS as f64;
            dv0 += m.delta_v / N_SEEDS as f64;
        }
        let i = (case - 1) as usize;
        let dv_check = reference::Check::relative("delta_v0", dv0, reference::DELTA_V0[i], reference::BASELINE_REL_TOL);
        let l_check = reference::Check::relative("L0_w", l0, reference::L0_W[i], reference::BASELINE_REL_TOL);
        r.check(dv_check.passed(), format!("case {case} {dv_check}"));
        r.check(l_check.passed(), format!("case {case} {l_check}"));
    }
    let elapsed = start.elapsed();
    r.check(elapsed < C1_RUNTIME, format!("runtime {elapsed:.2?} < {C1_RUNTIME:?}"));
    r.finish();
}

#[test]
fn c2_loss_minima() {
    let mut r = Report::new("C2 loss minima");
    let mut mins = [[f64::NAN; 2]; 4];
    for (m, mode) in [CoeffMode::PaperLiteral, CoeffMode::DropNulling].into_iter().enumerate() {
        let start = Instant::now();
        for case in 1..=4u32 {
            let run = ensemble(case, mode);
            mins[(case - 1) as usize][m] = run.stats.mean_curve_min_rel_losses;
            println!(
                "       case {case} {}: min mean rel_losses {:.4} at K={}",
                mode.as_str(),
                run.stats.mean_curve_min_rel_losses,
                run.stats.mean_curve_argmin_k_rel_losses
            );
        }
        let elapsed = start.elapsed();
        r.check(
            elapsed < C2_RUNTIME,
            format!("{} runtime for 4 cases x {N_SEEDS} seeds x 301 K {elapsed:.2?} < {C2_RUNTIME:?}", mode.as_str()),
        );
    }
    for case in 1..=4usize {
        let target = reference::MIN_REL_LOSSES[case - 1];
        let tol = reference::MIN_REL_LOSSES_ABS_TOL;
        let ok = mins[case - 1].iter().any(|v| (v - target).abs() <= tol);
        r.check(
            ok,
            format!(
                "case {case} min mean rel_losses paper_literal {:.4} / drop_nulling {:.4}, target {target} +/- {tol}",
                mins[case - 1][0], mins[case - 1][1]
            ),
        );
    }
    r.finish();
}

#[test]
fn c3_voltage_improvement() {
    let mut r = Report::new("C3 voltage improvement");
    for case in 1..=4u32 {
        let run = ensemble(case, CoeffMode::PaperLiteral);
        let dv0 = run.aggregate.baseline.delta_v;
        let best = run.aggregate.best_voltage().unwrap();
        if case == 1 || case == 3 {
            let reduction = dv0 - best.delta_v;
            r.check(
                reduction >= C3_MIN_DV_REDUCTION,
                format!(
                    "case {case} delta_v {dv0:.4} -> {:.4} at K={}, reduction {reduction:.4} >= {C3_MIN_DV_REDUCTION}",
                    best.delta_v, best.k
                ),
            );
        } else {
            r.check(
                best.delta_v <= C3_MAX_DV_FRACTION * dv0,
                format!(
                    "case {case} min delta_v {:.4} at K={} <= {C3_MAX_DV_FRACTION} * {dv0:.4}",
                    best.delta_v, best.k
                ),
            );
        }
    }
    r.finish();
}

#[test]
fn c4_pareto_structure() {
    let mut r = Report::new("C4 Pareto structure");
    let grid = KGrid::default();
    let step = grid.step();
    for case in 1..=4u32 {
        let feeder = golden_feeder(case);
        let cfg = ControlConfig::for_feeder(&feeder, Scheme::Hybrid, 0.0, CoeffMode::PaperLiteral);
        let sweep = sweep_k(&feeder, &grid, &cfg, FlowModel::Linear).unwrap();
        let front = sweep.pareto_points();
        let ks: Vec<f64> = front.iter().map(|p| p.k).collect();
        let span = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ks.iter().cloned().fold(f64::INFINITY, f64::min);
        let k_loss = sweep.best_losses().unwrap().k;
        let k_volt = sweep.best_voltage().unwrap().k;
        let slack = 1e-9;
        if case == 1 || case == 3 {
            r.check(
                span <= step + slack && (k_loss - k_volt).abs() <= step + slack,
                format!(
                    "case {case} single-point front: {} points spanning {span:.3}, argmin K loss {k_loss} vs delta_v {k_volt}",
                    ks.len()
                ),
            );
        } else {
            r.check(
                span > step + slack,
                format!("case {case} front spans a K range: {} points over [{}, {}]", ks.len(), k_loss.min(k_volt), k_loss.max(k_volt)),
            );
        }
    }
    r.finish();
}

#[test]
fn c5_flat_voltage_theorem() {
    let mut r = Report::new("C5 flat voltage");
    let mut picker = SeededStream::new(0x5eed, 7);
    let mut worst: f64 = 0.0;
    for i in 0..C5_FEEDERS {
        let case = 1 + picker.index(4) as u32;
        let spec = ScenarioSpec {
            topology_seed: 1000 + i,
            load_seed: 2000 + i,
            ..case_spec(case).unwrap()
        };
        let mut feeder = generate(&spec).unwrap();
        for node in &mut feeder.nodes {
            node.s = f64::INFINITY;
        }
        let cfg = ControlConfig::for_feeder(&feeder, Scheme::Voltage, 0.0, CoeffMode::DropNulling);
        let sol = solve_lindistflow(&feeder, &apply_control(&feeder, &cfg)).unwrap();
        worst = worst.max(powerflow::max_voltage_deviation(&sol).value);
    }
    r.check(
        worst < C5_FLAT_TOL,
        format!("max delta_v over {C5_FEEDERS} feeders = {worst:e} < {C5_FLAT_TOL:e}"),
    );
    r.finish();
}

#[test]
fn c6_solver_cross_validation() {
    let mut r = Report::new("C6 solver cross-validation");
    for case in 1..=4u32 {
        let feeder = golden_feeder(case);
        let inj = Injection::zeros(feeder.len());
        let lin = solve_lindistflow(&feeder, &inj).unwrap();
        let nl = solve_distflow(&feeder, &inj, C6_TOL, 100).unwrap();
        let gap = lin
            .v
            .iter()
            .zip(&nl.v)
            .map(|(a, b)| (a - b).abs() / feeder.v0)
            .fold(0.0, f64::max);
        r.check(gap < C6_MODEL_GAP, format!("case {case} max |V_lin - V_nl| / V0 = {gap:.5} < {C6_MODEL_GAP}"));

        let net: f64 = feeder.nodes.iter().map(|n| n.net_p()).sum();
        let link: f64 = (0..feeder.len())
            .map(|j| feeder.lines[j].r_ohm * (nl.p[j].powi(2) + nl.q[j].powi(2)) / nl.v[j].powi(2))
            .sum();
        let rel = (nl.p[0] - net - link).abs() / nl.p[0].abs();
        r.check(
            rel < C6_ENERGY_BALANCE,
            format!("case {case} energy balance P0 = net + losses, rel err {rel:e} < {C6_ENERGY_BALANCE:e} ({} iterations)", nl.iterations),
        );
    }
    r.finish();
}

/// Largest q with p^2 + q^2 <= s^2, by bisection.
fn capability_by_bisection(s: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, s);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p * p + mid * mid <= s * s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn brute_pareto(points: &[SweepPoint]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().any(|o| {
                o.rel_losses <= points[i].rel_losses
                    && o.delta_v <= points[i].delta_v
                    && (o.rel_losses < points[i].rel_losses || o.delta_v < points[i].delta_v)
            })
        })
        .collect()
}

#[test]
fn c7_endpoint_and_clamp_suite() {
    let mut r = Report::new("C7 endpoint/clamp");
    let mut rng = SeededStream::new(0xc7, 3);
    let (mut endpoint_bad, mut clamp_bad) = (0usize, 0usize);
    for _ in 0..C7_SAMPLES {
        let s = if rng.unit_open() < 0.2 { 0.0 } else { rng.uniform(0.0, 5000.0) };
        let p_g = rng.uniform(0.0, s);
        let p_c = rng.uniform(0.0, 5000.0);
        let q_c = rng.uniform(0.0, 0.5) * p_c;
        let k = rng.uniform(-5.0, 10.0);
        let alpha = rng.uniform(0.1, 5.0);
        let mode = if rng.unit_open() < 0.5 { CoeffMode::PaperLiteral } else { CoeffMode::DropNulling };
        let m = LocalMeasurement::new(p_g, p_c, q_c, s).unwrap();
        let cfg = ControlConfig::hybrid(k, mode, alpha);
        let q_max = m.q_max();
        if control_hybrid(&m, &cfg.with_k(1.0)) != control_loss(&m)
            || control_hybrid(&m, &cfg.with_k(0.0)) != control_voltage(&m, &cfg)
        {
            endpoint_bad += 1;
        }
        let outputs = [control_hybrid(&m, &cfg), control_loss(&m), control_voltage(&m, &cfg)];
        if outputs.iter().any(|q| q.abs() > q_max) || constr(rng.uniform(-1e4, 1e4), q_max).abs() > q_max {
            clamp_bad += 1;
        }
    }
    r.check(endpoint_bad == 0, format!("hybrid(K=1) == F_L and hybrid(K=0) == F_V on {C7_SAMPLES} samples ({endpoint_bad} mismatches)"));
    r.check(clamp_bad == 0, format!("|q_g| <= q_max on {C7_SAMPLES} samples ({clamp_bad} violations)"));

    let mut worst_cap: f64 = 0.0;
    for _ in 0..20_000 {
        let s = rng.uniform(0.0, 5000.0);
        let p = rng.uniform(0.0, s);
        let got = reactive_capability(s, p).unwrap();
        let want = capability_by_bisection(s, p);
        worst_cap = worst_cap.max((got - want).abs() / s.max(1.0));
    }
    r.check(worst_cap < 1e-9, format!("capability vs bisection, worst rel err {worst_cap:e}"));

    let mut pareto_bad = 0;
    let mut sets = 0;
    for size in 1..=20usize {
        for _ in 0..2_000 {
            let pts: Vec<SweepPoint> = (0..size)
                .map(|i| SweepPoint {
                    k: i as f64,
                    losses: 0.0,
                    rel_losses: rng.index(8) as f64 / 8.0,
                    delta_v: rng.index(8) as f64 / 100.0,
                })
                .collect();
            sets += 1;
            if pareto_front(&pts) != brute_pareto(&pts) {
                pareto_bad += 1;
            }
        }
    }
    r.check(pareto_bad == 0, format!("pareto_front vs exhaustive check on {sets} sets of size 1..=20 ({pareto_bad} mismatches)"));
    r.finish();
}

fn csv_body(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_cli(args: &[&str], dir: &Path) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_voltvar"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .unwrap();
    out.status.code().unwrap_or(-1)
}

#[test]
fn c8_determinism() {
    let mut r = Report::new("C8 determinism");
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let code = run_cli(&["case", "--case", "4", "--n-seeds", "5"], dir);
        assert!(code == 0 || code == 3, "case exit {code}");
        let code = run_cli(&["sweep", "--case", "2", "--n-seeds", "3", "--refine"], dir);
        assert_eq!(code, 0);
    }
    for file in [
        "case4_aggregate.csv",
        "sweep_seed1.csv",
        "sweep_seed2.csv",
        "sweep_seed3.csv",
        "sweep_aggregate.csv",
        "sweep_refined_aggregate.csv",
    ] {
        let same = csv_body(&a.join(file)) == csv_body(&b.join(file));
        r.check(same, format!("{file} body identical across invocations"));
    }
    let same = std::fs::read(a.join("case4_summary.toml")).unwrap() == std::fs::read(b.join("case4_summary.toml")).unwrap();
    r.check(same, "case4_summary.toml identical across invocations");
    r.finish();
}

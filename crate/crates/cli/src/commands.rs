use std::path::{Path, PathBuf};

use serde::Serialize;
use voltvar::control::apply_control;
use voltvar::experiment::{
    self, aggregate_sweeps, evaluate, refine_grid, reference, run_case, sweep_k, CaseOptions,
    FeederId, KGrid, SweepResult,
};
use voltvar::model::{self, Feeder};
use voltvar::powerflow::{self, FlowModel, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use voltvar::{ControlConfig, Scheme};

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn read_feeder(path: &Path) -> Result<Feeder, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Feeder::from_text(&text)?)
}

fn control_for(feeder: &Feeder, cfg: &RunConfig, scheme: Scheme) -> Result<ControlConfig, CliError> {
    let ratio = feeder.reactance_ratio();
    if !ratio.is_uniform() {
        eprintln!(
            "warning: link r/x ratios deviate up to {:.2}% from alpha = {:.6}",
            100.0 * ratio.max_link_deviation,
            ratio.alpha
        );
    }
    let mut control = ControlConfig::new(scheme, cfg.k.unwrap_or(1.0), cfg.coeff_mode(), ratio.alpha)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    control.epsilon = cfg.epsilon()?;
    Ok(control)
}

pub fn generate(cfg: &RunConfig, output: Option<PathBuf>) -> Result<(), CliError> {
    let spec = cfg.scenario()?;
    let feeder = model::generate(&spec)?;
    let path = output.unwrap_or_else(|| cfg.output_dir().join("feeder.txt"));
    write_file(&path, &feeder.to_text())?;
    let (p_load, q_load) = feeder.total_load();
    println!("wrote {}", path.display());
    println!("nodes={}", feeder.len());
    println!("total_load_w={p_load:.1}");
    println!("total_load_var={q_load:.1}");
    println!("total_pv_w={:.1}", feeder.total_pv());
    println!("pv_nodes={}", feeder.pv_count());
    Ok(())
}

pub fn solve(cfg: &RunConfig, feeder_path: &Path, tol: Option<f64>, max_iter: Option<usize>) -> Result<(), CliError> {
    let feeder = read_feeder(feeder_path)?;
    let control = control_for(&feeder, cfg, cfg.scheme.unwrap_or(Scheme::None))?;
    let injection = apply_control(&feeder, &control);
    let solution = match cfg.model() {
        FlowModel::Linear => powerflow::solve_lindistflow(&feeder, &injection)?,
        FlowModel::Nonlinear => powerflow::solve_distflow(
            &feeder,
            &injection,
            tol.unwrap_or(DEFAULT_TOLERANCE),
            max_iter.unwrap_or(DEFAULT_MAX_ITER),
        )?,
    };
    let losses = powerflow::losses(&solution, &feeder)?;
    let dev = powerflow::max_voltage_deviation(&solution);

    let dir = cfg.output_dir();
    let path = match cfg.format() {
        OutputFormat::Csv => {
            let path = dir.join("solution.csv");
            write_file(&path, &solution.to_csv())?;
            path
        }
        OutputFormat::Structured => {
            let path = dir.join("solution.json");
            write_file(&path, &to_json(&solution))?;
            path
        }
    };
    println!("wrote {}", path.display());
    println!("model={}", solution.model.as_str());
    if solution.model == FlowModel::Nonlinear {
        println!("iterations={}", solution.iterations);
        println!("residual={:e}", solution.residual);
    }
    println!("losses_w={losses}");
    println!("delta_v={} (node {})", dev.value, dev.node);
    println!(
        "epsilon_violation={} (epsilon={})",
        dev.value >= control.epsilon,
        control.epsilon
    );
    Ok(())
}

struct SweepTarget {
    feeder: Feeder,
    case: Option<u32>,
}

fn sweep_targets(cfg: &RunConfig, feeder_path: Option<&Path>) -> Result<Vec<SweepTarget>, CliError> {
    if let Some(path) = feeder_path {
        if cfg.n_seeds.is_some_and(|n| n > 1) {
            return Err(CliError::Validation("n_seeds > 1 needs a generated scenario, not --feeder".into()));
        }
        return Ok(vec![SweepTarget {
            feeder: read_feeder(path)?,
            case: None,
        }]);
    }
    let spec = cfg.scenario()?;
    let n_seeds = cfg.n_seeds.unwrap_or(1);
    if n_seeds == 0 {
        return Err(CliError::Validation("n_seeds must be at least 1".into()));
    }
    let topology = model::build_topology(&spec)?;
    (0..n_seeds as u64)
        .map(|i| {
            let mut s = spec.clone();
            s.load_seed = spec.load_seed + i;
            Ok(SweepTarget {
                feeder: model::populate_loads_and_pv(topology.clone(), &s)?,
                case: cfg.case,
            })
        })
        .collect()
}

fn sweep_all(targets: &[SweepTarget], grid: &KGrid, control: &ControlConfig, model: FlowModel) -> Result<Vec<SweepResult>, CliError> {
    targets
        .iter()
        .map(|t| {
            let mut r = sweep_k(&t.feeder, grid, control, model)?;
            if let Some(c) = t.case {
                r.feeder = r.feeder.with_case(c);
            }
            Ok(r)
        })
        .collect()
}

fn emit_sweep(dir: &Path, stem: &str, result: &SweepResult, format: OutputFormat) -> Result<PathBuf, CliError> {
    let (path, body) = match format {
        OutputFormat::Csv => (dir.join(format!("{stem}.csv")), result.to_csv()),
        OutputFormat::Structured => (dir.join(format!("{stem}.json")), to_json(result)),
    };
    write_file(&path, &body)?;
    Ok(path)
}

/// Writes per-seed sweeps (or a single one) and, for ensembles, their mean.
/// Returns the result that summarizes the run.
fn emit_sweeps(dir: &Path, stem: &str, results: &[SweepResult], format: OutputFormat) -> Result<SweepResult, CliError> {
    if let [single] = results {
        let path = emit_sweep(dir, stem, single, format)?;
        println!("wrote {}", path.display());
        return Ok(single.clone());
    }
    for r in results {
        let load = r.feeder.seeds.map_or(0, |s| s.load);
        let path = emit_sweep(dir, &format!("{stem}_seed{load}"), r, format)?;
        println!("wrote {}", path.display());
    }
    let id = FeederId {
        seeds: results[0].feeder.seeds,
        case: results[0].feeder.case,
    };
    let agg = aggregate_sweeps(results, id)?;
    let path = emit_sweep(dir, &format!("{stem}_aggregate"), &agg, format)?;
    println!("wrote {}", path.display());
    Ok(agg)
}

fn report_best(label: &str, result: &SweepResult) {
    println!("{label}baseline L0_w={} delta_v0={}", result.baseline.losses, result.baseline.delta_v);
    if let Some(p) = result.best_losses() {
        println!("{label}min rel_losses={} at K={}", p.rel_losses, p.k);
    }
    if let Some(p) = result.best_voltage() {
        println!("{label}min delta_v={} at K={}", p.delta_v, p.k);
    }
    let invalid = result.points.iter().filter(|e| e.point().is_none()).count();
    if invalid > 0 {
        println!("{label}invalid points={invalid}");
    }
}

pub fn sweep(cfg: &RunConfig, feeder_path: Option<&Path>, validate_nonlinear: bool) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let model = cfg.model();
    let targets = sweep_targets(cfg, feeder_path)?;
    let control = control_for(&targets[0].feeder, cfg, Scheme::Hybrid)?;
    let dir = cfg.output_dir();
    let format = cfg.format();

    let results = sweep_all(&targets, &grid, &control, model)?;
    let summary = emit_sweeps(&dir, "sweep", &results, format)?;
    report_best("", &summary);

    if cfg.refine.unwrap_or(false) {
        let fine = refine_grid(&summary, &grid)?;
        let refined = sweep_all(&targets, &fine, &control, model)?;
        let refined_summary = emit_sweeps(&dir, "sweep_refined", &refined, format)?;
        report_best("refined ", &refined_summary);
    }

    if validate_nonlinear {
        let check = |label: &str, c: &ControlConfig| -> Result<(), CliError> {
            for t in &targets {
                let lin = evaluate(&t.feeder, c, FlowModel::Linear)?;
                let nl = evaluate(&t.feeder, c, FlowModel::Nonlinear)?;
                let load = t.feeder.seeds.map_or(0, |s| s.load);
                println!(
                    "nonlinear check {label} load_seed={load}: losses {} vs {} W, delta_v {} vs {}",
                    lin.losses, nl.losses, lin.delta_v, nl.delta_v
                );
            }
            Ok(())
        };
        check("baseline", &control.with_scheme(Scheme::None))?;
        if let Some(best) = summary.best_losses() {
            check(&format!("K={}", best.k), &control.with_k(best.k))?;
        }
    }
    Ok(())
}

pub fn case(cfg: &RunConfig) -> Result<(), CliError> {
    let case_id = cfg
        .case
        .ok_or_else(|| CliError::Validation("case: missing case id (case must be 1..4)".into()))?;
    model::case_spec(case_id)?;
    let opts = CaseOptions {
        n_seeds: cfg.n_seeds()?,
        grid: cfg.grid()?,
        topology_seed: cfg.topology_seed.unwrap_or(1),
        load_seed_base: cfg.load_seed.unwrap_or(1),
        coeff_mode: cfg.coeff_mode(),
        model: cfg.model(),
    };
    let run = run_case(case_id, &opts)?;
    let dir = cfg.output_dir();
    let summary_path = match cfg.format() {
        OutputFormat::Csv => {
            let p = dir.join(format!("case{case_id}_summary.toml"));
            write_file(&p, &run.stats.to_summary())?;
            p
        }
        OutputFormat::Structured => {
            let p = dir.join(format!("case{case_id}_summary.json"));
            write_file(&p, &to_json(&run.stats))?;
            p
        }
    };
    println!("wrote {}", summary_path.display());
    let agg_path = emit_sweep(&dir, &format!("case{case_id}_aggregate"), &run.aggregate, cfg.format())?;
    println!("wrote {}", agg_path.display());

    let s = &run.stats;
    let std = |m: experiment::Moments| m.std.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "case {case_id}: n_seeds={} coeff_mode={} model={}",
        s.n_seeds,
        s.coeff_mode.as_str(),
        s.model.as_str()
    );
    println!("  L0_w        mean={:.1} std={}", s.l0_w.mean, std(s.l0_w));
    println!("  delta_v0    mean={:.4} std={}", s.delta_v0.mean, std(s.delta_v0));
    println!(
        "  mean curve  min rel_losses={:.4} at K={} ; min delta_v={:.4} at K={}",
        s.mean_curve_min_rel_losses,
        s.mean_curve_argmin_k_rel_losses,
        s.mean_curve_min_delta_v,
        s.mean_curve_argmin_k_delta_v
    );
    let checks = reference::checks(s);
    for c in &checks {
        println!("  {c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!(
            "case {case_id}: outside tolerance: {}",
            failed.join(", ")
        )))
    }
}

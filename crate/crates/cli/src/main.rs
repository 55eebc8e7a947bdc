use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use netrevive::compare::{compare_with_boundary, read_boundary_csv, SweepGrid};
use netrevive::config::RunConfig;
use netrevive::layer_model::{check_layer_consistency, empirical_layers, LayerParams};
use netrevive::network::bfs_shells;
use netrevive::reduced::{build_reduced, find_boundary, integrate_reduced, Predictor};
use netrevive::simulate::{
    export_activity_scatter, run_once, shell_average, sweep_grid, write_scatter_csv, ActivationJudge,
};
use netrevive::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "netrevive", version, about = "Predict and verify single-node revival of networked dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed (overrides `sweep.master_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the configured network and report degree statistics.
    Gen,
    /// Analytic layer parameters, side by side with measured ones.
    Layers,
    /// Reduced-model activation boundary and trajectory for the configured clamp.
    Predict,
    /// One full-network run with the configured clamp.
    Simulate,
    /// Monte Carlo activation fractions over the clamp grid.
    Sweep,
    /// Agreement between the predicted boundary and the sweep.
    Compare {
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        boundary: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::InvalidNode { .. }
        | Error::Parse { .. }
        | Error::EmptyGraph(_)
        | Error::InconsistentLayers(_)
        | Error::DimensionMismatch { .. }
        | Error::Json(_) => 2,
        Error::NonFinite { .. } | Error::Degenerate(_) | Error::IsolatedNode(_) | Error::ConnectivityRetries { .. } => 3,
        Error::Io { .. } | Error::Csv(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.sweep.master_seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;

    match cli.command {
        Command::Gen => cmd_gen(&cfg, &out),
        Command::Layers => cmd_layers(&cfg, &out),
        Command::Predict => cmd_predict(&cfg, &out),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Sweep => cmd_sweep(&cfg, &out),
        Command::Compare { sweep, boundary } => cmd_compare(
            &out,
            &sweep.unwrap_or_else(|| out.join("sweep.csv")),
            &boundary.unwrap_or_else(|| out.join("boundary.csv")),
        ),
    }
}

/// The graph `simulate` would use for the same master seed.
fn seeded_graph(cfg: &RunConfig) -> Result<std::sync::Arc<netrevive::Graph>> {
    let recipe = cfg.recipe()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sweep.master_seed);
    recipe.build(rng.next_u64())
}

fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = seeded_graph(cfg)?;
    g.save_edge_list(out.join("graph.edges"))?;
    let stats = g.degree_stats();
    write_json(
        &out.join("graph_stats.json"),
        &json!({
            "nodes": g.node_count(),
            "edges": g.edge_count(),
            "connected": g.is_connected(),
            "degree": stats,
            "master_seed": cfg.sweep.master_seed,
        }),
    )?;
    println!(
        "nodes {} edges {} mean degree {:.4} (min {}, max {}, variance {:.3}) connected {}",
        g.node_count(),
        g.edge_count(),
        stats.mean,
        stats.min,
        stats.max,
        stats.variance,
        g.is_connected()
    );
    Ok(())
}

fn relative_error(measured: f64, analytic: f64) -> f64 {
    if analytic == 0.0 {
        measured.abs()
    } else {
        (measured - analytic).abs() / analytic.abs()
    }
}

fn write_paired(path: &Path, analytic: &LayerParams, empirical: &LayerParams) -> Result<()> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record([
        "l",
        "d_analytic",
        "d_empirical",
        "d_rel_err",
        "c_in_analytic",
        "c_in_empirical",
        "c_within_analytic",
        "c_within_empirical",
        "c_out_analytic",
        "c_out_empirical",
    ])?;
    let depth = analytic.num_layers().max(empirical.num_layers());
    for l in 0..depth {
        let a = analytic.layers.get(l);
        let e = empirical.layers.get(l);
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        wr.write_record([
            (l + 1).to_string(),
            f(a.map(|r| r.d)),
            f(e.map(|r| r.d)),
            f(a.zip(e).map(|(a, e)| relative_error(e.d, a.d))),
            f(a.map(|r| r.c_in)),
            f(e.map(|r| r.c_in)),
            f(a.map(|r| r.c_within)),
            f(e.map(|r| r.c_within)),
            f(a.map(|r| r.c_out)),
            f(e.map(|r| r.c_out)),
        ])?;
    }
    wr.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_layers(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recipe = cfg.recipe()?;
    let (n, k) = recipe.nominal();
    let analytic = cfg.prediction_layers(&recipe)?;
    analytic.write_csv(create(&out.join("layers_analytic.csv"))?)?;
    let report = check_layer_consistency(&analytic, n, k);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sweep.master_seed);
    let g = recipe.build(rng.next_u64())?;
    let sources = cfg.control.selection.pick(&g, &mut rng)?;
    let shells = bfs_shells(&g, &sources)?;
    let empirical = empirical_layers(&g, &shells)?;
    empirical.write_csv(create(&out.join("layers_empirical.csv"))?)?;
    write_paired(&out.join("layers_compare.csv"), &analytic, &empirical)?;

    write_json(
        &out.join("layers_report.json"),
        &json!({
            "n": n,
            "k": k,
            "analytic_layers": analytic.num_layers(),
            "empirical_layers": empirical.num_layers(),
            "sources": sources,
            "consistency": report,
            "max_residual": report.max_residual(),
            "passes": report.passes(),
            "warnings": empirical.warnings,
        }),
    )?;
    println!(
        "analytic L = {} (consistency {}, max residual {:.3e}); empirical L = {} from sources {:?}",
        analytic.num_layers(),
        if report.passes() { "pass" } else { "FAIL" },
        report.max_residual(),
        empirical.num_layers(),
        sources
    );
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recipe = cfg.recipe()?;
    let (_, k) = recipe.nominal();
    let layers = cfg.prediction_layers(&recipe)?;
    let dt = cfg.numerics.dt;
    let duration = cfg.control.duration;
    let started = Instant::now();
    let curve = find_boundary(
        &cfg.model,
        &layers,
        cfg.sweep.u_axis.max,
        cfg.sweep.v_axis.max,
        cfg.boundary.n_rays,
        cfg.boundary.tol,
        dt,
        duration,
        k,
    )?;
    curve.write_csv(create(&out.join("boundary.csv"))?)?;

    let system = build_reduced(&cfg.model, &layers, cfg.clamp())?;
    let run = integrate_reduced(&system, dt, duration, cfg.numerics.record_stride)?;
    run.trajectory.write_csv(create(&out.join("reduced_trajectory.csv"))?)?;
    let predictor = Predictor::new(&cfg.model, &layers, dt, duration, k)?;
    let mean = system.weighted_mean(&run.final_states);
    let active = predictor.judge.is_active(mean);
    let flagged: Vec<_> = curve
        .rays
        .iter()
        .filter(|r| r.status != netrevive::reduced::RayStatus::Crossing)
        .map(|r| json!({"angle": r.angle, "status": r.status}))
        .collect();
    write_json(
        &out.join("predict.json"),
        &json!({
            "clamp": cfg.clamp(),
            "activated": active,
            "final_mean": mean,
            "high_state": predictor.judge.high,
            "threshold_u": predictor.judge.threshold(),
            "layers": layers.num_layers(),
            "boundary_points": curve.curve().len(),
            "flagged_rays": flagged,
            "wall_time": started.elapsed().as_secs_f64(),
        }),
    )?;
    println!(
        "clamp ({}, {}): predicted {} (final mean u {:.4}); boundary with {} points over {} rays",
        cfg.control.u_s,
        cfg.control.v_s,
        if active { "ACTIVATION" } else { "no activation" },
        mean.u,
        curve.curve().len(),
        curve.rays.len()
    );
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recipe = cfg.recipe()?;
    let opts = cfg.sim_options();
    let (g, ctrl, result) = run_once(
        &recipe,
        &cfg.model,
        cfg.clamp(),
        &cfg.control_template(),
        &opts,
        cfg.sweep.master_seed,
    )?;
    let shells = bfs_shells(&g, &ctrl.nodes)?;
    if let Some(traj) = &result.trajectory {
        shell_average(traj, &shells)?.write_csv(create(&out.join("trajectory.csv"))?)?;
    }
    write_scatter_csv(
        &export_activity_scatter(&result, &g, &shells),
        create(&out.join("scatter.csv"))?,
    )?;
    let judge = ActivationJudge::new(&cfg.model, g.k_avg());
    write_json(
        &out.join("simulate.json"),
        &json!({
            "summary": result.summary(&judge),
            "controlled_nodes": ctrl.nodes,
            "layers": shells.num_layers(),
        }),
    )?;
    println!(
        "controlled {:?}: mean (u, v) = ({:.4}, {:.4}) -> {} [{:.2}s]",
        ctrl.nodes,
        result.mean_activity.u,
        result.mean_activity.v,
        if result.activated { "ACTIVATED" } else { "not activated" },
        result.wall_time
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let recipe = cfg.recipe()?;
    let u_axis = cfg.sweep.u_axis.values();
    let v_axis = cfg.sweep.v_axis.values();
    let started = Instant::now();
    let step = (u_axis.len() * v_axis.len() * cfg.sweep.reps / 20).max(1);
    let progress = move |done: usize, total: usize| {
        if done.is_multiple_of(step) || done == total {
            eprintln!("  {done}/{total} runs");
        }
    };
    let result = sweep_grid(
        &recipe,
        &cfg.model,
        &u_axis,
        &v_axis,
        cfg.sweep.reps,
        &cfg.control_template(),
        &cfg.sim_options(),
        cfg.sweep.master_seed,
        Some(&progress),
    )?;
    result.write_csv(create(&out.join("sweep.csv"))?)?;
    let wall = started.elapsed().as_secs_f64();
    write_json(
        &out.join("sweep.json"),
        &json!({
            "model": cfg.model,
            "network": cfg.network,
            "reps": result.reps,
            "master_seed": result.master_seed,
            "cells": result.cells,
            "wall_time": wall,
        }),
    )?;
    let failures: usize = result.cells.iter().map(|c| c.failures).sum();
    println!(
        "{} cells x {} reps in {:.1}s; {} failed runs",
        result.cells.len(),
        result.reps,
        wall,
        failures
    );
    Ok(())
}

fn cmd_compare(out: &Path, sweep: &Path, boundary: &Path) -> Result<()> {
    let open = |p: &Path| {
        File::open(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })
    };
    let grid = SweepGrid::read_csv(open(sweep)?)?;
    let points = read_boundary_csv(open(boundary)?)?;
    let report = compare_with_boundary(&grid, &points)?;
    report.write_csv(create(&out.join("compare.csv"))?)?;
    write_json(&out.join("compare.json"), &serde_json::to_value(&report)?)?;
    match report.agreement {
        Some(a) => println!(
            "agreement {:.1}% over {} cells away from the boundary ({} near it; {} false active, {} false inactive)",
            100.0 * a,
            report.evaluated_cells,
            report.near_boundary_cells,
            report.false_active,
            report.false_inactive
        ),
        None => println!("every cell lies next to the predicted boundary; no agreement computed"),
    }
    Ok(())
}

//! Full-network integration under clamped control, activation judgment,
//! shell-averaged trajectories and seeded Monte Carlo sweeps over clamp grids.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{high_equilibrium, ModelSpec, NodeState};
use crate::error::{Error, Result};
use crate::network::{bfs_shells, generate_ba, generate_er, Graph, ShellDecomposition};
use crate::ode::{step_count, Rk4, Step};
use crate::ACTIVATION_THETA;

pub const MAX_DT: f64 = 0.05;
pub const DEFAULT_DT: f64 = 0.01;
pub const FULL_FREEZE_TOL: f64 = 1e-9;

/// Threshold rule shared by the full simulator and the reduced predictor:
/// active iff mean `u` exceeds `ACTIVATION_THETA` times the high homogeneous
/// steady state at degree `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationJudge {
    pub high: Option<NodeState>,
    pub theta: f64,
}

impl ActivationJudge {
    pub fn new(m: &ModelSpec, k: f64) -> Self {
        Self {
            high: high_equilibrium(m, k),
            theta: ACTIVATION_THETA,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        self.high.map(|h| self.theta * h.u)
    }

    pub fn is_active(&self, mean: NodeState) -> bool {
        self.threshold().is_some_and(|t| mean.u > t)
    }
}

/// Clamp held on the controlled nodes. `schedule` entries `(t, value)`
/// override `clamp` from time `t` on (piecewise constant, step-aligned).
/// An empty node set runs the system uncontrolled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub nodes: BTreeSet<usize>,
    pub clamp: NodeState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<(f64, NodeState)>,
    pub duration: f64,
    #[serde(default)]
    pub post_release_time: f64,
}

impl ControlSpec {
    pub fn fixed(nodes: impl IntoIterator<Item = usize>, clamp: NodeState, duration: f64) -> Self {
        Self {
            nodes: nodes.into_iter().collect(),
            clamp,
            schedule: Vec::new(),
            duration,
            post_release_time: 0.0,
        }
    }

    /// Free evolution for `duration`; nothing is clamped.
    pub fn none(duration: f64) -> Self {
        Self::fixed([], NodeState::ZERO, duration)
    }

    pub fn clamp_at(&self, t: f64) -> NodeState {
        self.schedule
            .iter()
            .rfind(|(start, _)| *start <= t)
            .map(|&(_, s)| s)
            .unwrap_or(self.clamp)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(&id) = self.nodes.iter().find(|&&id| id >= n) {
            return Err(Error::InvalidNode { id, n });
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "control duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.post_release_time >= 0.0 && self.post_release_time.is_finite()) {
            return Err(Error::InvalidParameter("post_release_time must be >= 0".into()));
        }
        let clamps = std::iter::once(&self.clamp).chain(self.schedule.iter().map(|(_, s)| s));
        for s in clamps {
            if !s.is_valid() {
                return Err(Error::InvalidParameter(format!("invalid clamp {s:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    /// Record every `record_stride`-th step (plus the final state); 0 = off.
    pub record_stride: usize,
    pub freeze_tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            record_stride: 0,
            freeze_tol: FULL_FREEZE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<NodeState>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub final_states: Vec<NodeState>,
    pub mean_activity: NodeState,
    pub activated: bool,
    pub trajectory: Option<Trajectory>,
    pub seed: Option<u64>,
    pub dt: f64,
    pub end_time: f64,
    /// Time at which the early-exit criterion froze the state, if it did.
    pub frozen_at: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub mean_u: f64,
    pub mean_v: f64,
    pub activated: bool,
    pub threshold_u: Option<f64>,
    pub seed: Option<u64>,
    pub dt: f64,
    pub end_time: f64,
    pub frozen_at: Option<f64>,
    pub wall_time: f64,
}

impl SimResult {
    pub fn summary(&self, judge: &ActivationJudge) -> SimSummary {
        SimSummary {
            mean_u: self.mean_activity.u,
            mean_v: self.mean_activity.v,
            activated: self.activated,
            threshold_u: judge.threshold(),
            seed: self.seed,
            dt: self.dt,
            end_time: self.end_time,
            frozen_at: self.frozen_at,
            wall_time: self.wall_time,
        }
    }
}

pub fn mean_state(states: &[NodeState]) -> NodeState {
    let n = states.len().max(1) as f64;
    let (u, v) = states.iter().fold((0.0, 0.0), |(u, v), s| (u + s.u, v + s.v));
    NodeState::new(u / n, v / n)
}

/// Initial condition of the revival protocol: everything at zero except
/// the controlled nodes, which start at the clamp.
pub fn zero_init_with_clamp(n: usize, ctrl: &ControlSpec) -> Vec<NodeState> {
    let mut init = vec![NodeState::ZERO; n];
    let c = ctrl.clamp_at(0.0);
    for &i in &ctrl.nodes {
        init[i] = c;
    }
    init
}

/// Integrates every node of `g` with the controlled nodes held at the clamp
/// for `ctrl.duration`, then (optionally) released for `post_release_time`.
pub fn integrate_full(
    g: &Graph,
    m: &ModelSpec,
    ctrl: &ControlSpec,
    init: &[NodeState],
    opts: &SimOptions,
) -> Result<SimResult> {
    let started = Instant::now();
    let n = g.node_count();
    if init.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: init.len(),
        });
    }
    if !(opts.dt > 0.0 && opts.dt <= MAX_DT) {
        return Err(Error::InvalidParameter(format!(
            "dt must lie in (0, {MAX_DT}], got {}",
            opts.dt
        )));
    }
    m.validate()?;
    ctrl.validate(n)?;
    let k_avg = g.k_avg();

    let mut controlled = vec![false; n];
    for &i in &ctrl.nodes {
        controlled[i] = true;
    }
    let mut scale = vec![1.0; n];
    for (i, s) in scale.iter_mut().enumerate() {
        match m.scale(g.degree(i), k_avg) {
            Some(v) => *s = v,
            None if controlled[i] => *s = 0.0,
            None => return Err(Error::IsolatedNode(i)),
        }
    }

    let mut x: Vec<f64> = init.iter().flat_map(|s| [s.u, s.v]).collect();
    let mut ku = vec![0.0; n];
    let mut kv = vec![0.0; n];
    let clamped = Cell::new(true);
    let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        for j in 0..n {
            ku[j] = m.kernel_u(x[2 * j + 1]);
            kv[j] = m.kernel_v(x[2 * j]);
        }
        for i in 0..n {
            if clamped.get() && controlled[i] {
                dx[2 * i] = 0.0;
                dx[2 * i + 1] = 0.0;
                continue;
            }
            let (mut su, mut sv) = (0.0, 0.0);
            for &j in g.neighbors(i) {
                su += ku[j];
                sv += kv[j];
            }
            let (du, dv) = m.derivative_from_sums(NodeState::new(x[2 * i], x[2 * i + 1]), su, sv, scale[i]);
            dx[2 * i] = du;
            dx[2 * i + 1] = dv;
        }
    };

    let mut rk = Rk4::new(2 * n);
    let record = opts.record_stride > 0;
    let mut traj = Trajectory::default();
    let snapshot = |x: &[f64]| -> Vec<NodeState> {
        x.chunks_exact(2).map(|c| NodeState::new(c[0], c[1])).collect()
    };
    let set_clamp = |x: &mut [f64], value: NodeState| {
        for &i in &ctrl.nodes {
            x[2 * i] = value.u;
            x[2 * i + 1] = value.v;
        }
    };

    let mut t = 0.0;
    let mut frozen_at = None;
    let mut active_clamp = ctrl.clamp_at(0.0);
    set_clamp(&mut x, active_clamp);
    if record {
        traj.times.push(0.0);
        traj.states.push(snapshot(&x));
    }
    let phases = [(ctrl.duration, true), (ctrl.post_release_time, false)];
    let mut global_step = 0usize;
    for (length, with_clamp) in phases {
        if length <= 0.0 {
            continue;
        }
        let steps = step_count(length, opts.dt);
        let t0 = t;
        let mut frozen = false;
        for s in 0..steps {
            let ts = t0 + s as f64 * opts.dt;
            if with_clamp {
                let c = ctrl.clamp_at(ts);
                if c != active_clamp {
                    set_clamp(&mut x, c);
                    active_clamp = c;
                    frozen = false;
                }
            }
            if !frozen {
                clamped.set(with_clamp);
                match rk.step(&mut rhs, ts, &mut x, opts.dt, opts.freeze_tol) {
                    Step::Advanced => {
                        if !x.iter().all(|v| v.is_finite()) {
                            return Err(Error::NonFinite { time: ts + opts.dt });
                        }
                    }
                    Step::Frozen => {
                        frozen = true;
                        frozen_at.get_or_insert(ts);
                        // Nothing changes until the schedule or phase does.
                        if ctrl.schedule.iter().all(|(start, _)| *start <= ts) || !with_clamp {
                            global_step += steps - s;
                            break;
                        }
                    }
                }
            }
            global_step += 1;
            if record && global_step.is_multiple_of(opts.record_stride) {
                traj.times.push(ts + opts.dt);
                traj.states.push(snapshot(&x));
            }
        }
        t = t0 + length;
    }

    let final_states = snapshot(&x);
    if record && traj.times.last() != Some(&t) {
        traj.times.push(t);
        traj.states.push(final_states.clone());
    }
    let mean_activity = mean_state(&final_states);
    let judge = ActivationJudge::new(m, k_avg);
    Ok(SimResult {
        activated: judge.is_active(mean_activity),
        mean_activity,
        final_states,
        trajectory: record.then_some(traj),
        seed: None,
        dt: opts.dt,
        end_time: t,
        frozen_at,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Judges a finished run against the high homogeneous state at degree `k`.
pub fn judge_activation(r: &SimResult, m: &ModelSpec, k: f64) -> bool {
    ActivationJudge::new(m, k).is_active(r.mean_activity)
}

/// Per-time, per-layer mean states; `layers[t][l]` for `l in 0..=L`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrajectory {
    pub times: Vec<f64>,
    pub layers: Vec<Vec<NodeState>>,
}

impl LayerTrajectory {
    pub fn last(&self) -> Option<&[NodeState]> {
        self.layers.last().map(Vec::as_slice)
    }

    /// CSV rows `t, layer, u, v`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            t: f64,
            layer: usize,
            u: f64,
            v: f64,
        }
        let mut wr = csv::Writer::from_writer(w);
        for (t, states) in self.times.iter().zip(&self.layers) {
            for (layer, s) in states.iter().enumerate() {
                wr.serialize(Row {
                    t: *t,
                    layer,
                    u: s.u,
                    v: s.v,
                })?;
            }
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn shell_average_snapshot(states: &[NodeState], shells: &ShellDecomposition) -> Vec<NodeState> {
    (0..=shells.num_layers())
        .map(|l| {
            let members = shells.members(l);
            let picked: Vec<NodeState> = members.iter().map(|&i| states[i]).collect();
            mean_state(&picked)
        })
        .collect()
}

pub fn shell_average(traj: &Trajectory, shells: &ShellDecomposition) -> Result<LayerTrajectory> {
    if let Some(first) = traj.states.first() {
        if first.len() != shells.node_count() {
            return Err(Error::DimensionMismatch {
                expected: shells.node_count(),
                actual: first.len(),
            });
        }
    }
    Ok(LayerTrajectory {
        times: traj.times.clone(),
        layers: traj
            .states
            .iter()
            .map(|s| shell_average_snapshot(s, shells))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub node: usize,
    pub degree: usize,
    pub layer: Option<usize>,
    pub u: f64,
    pub v: f64,
}

pub fn export_activity_scatter(r: &SimResult, g: &Graph, shells: &ShellDecomposition) -> Vec<ScatterRow> {
    r.final_states
        .iter()
        .enumerate()
        .map(|(node, s)| ScatterRow {
            node,
            degree: g.degree(node),
            layer: shells.layer(node),
            u: s.u,
            v: s.v,
        })
        .collect()
}

pub fn write_scatter_csv<W: Write>(rows: &[ScatterRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// How each Monte Carlo run obtains its network.
#[derive(Debug, Clone)]
pub enum NetworkRecipe {
    Er { n: usize, k: f64 },
    Ba { n: usize, m: usize },
    Fixed(Arc<Graph>),
}

impl NetworkRecipe {
    pub fn build(&self, seed: u64) -> Result<Arc<Graph>> {
        Ok(match self {
            NetworkRecipe::Er { n, k } => Arc::new(generate_er(*n, *k, seed)?),
            NetworkRecipe::Ba { n, m } => Arc::new(generate_ba(*n, *m, seed)?),
            NetworkRecipe::Fixed(g) => Arc::clone(g),
        })
    }

    /// Node count and mean degree the layer model should use.
    pub fn nominal(&self) -> (usize, f64) {
        match self {
            NetworkRecipe::Er { n, k } => (*n, *k),
            NetworkRecipe::Ba { n, m } => (*n, 2.0 * *m as f64),
            NetworkRecipe::Fixed(g) => (g.node_count(), g.k_avg()),
        }
    }
}

/// Which nodes each run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum NodeSelection {
    /// One node chosen uniformly at random.
    Random,
    /// A random node plus its nearest nodes in breadth-first order, `count` in total.
    RandomAdjacent { count: usize },
    Ids { ids: Vec<usize> },
}

impl NodeSelection {
    pub fn pick(&self, g: &Graph, rng: &mut impl Rng) -> Result<BTreeSet<usize>> {
        let n = g.node_count();
        match self {
            NodeSelection::Random => Ok(BTreeSet::from([rng.gen_range(0..n)])),
            NodeSelection::RandomAdjacent { count } => {
                let seed = rng.gen_range(0..n);
                let shells = bfs_shells(g, &BTreeSet::from([seed]))?;
                let picked: BTreeSet<usize> = (0..=shells.num_layers())
                    .flat_map(|l| shells.members(l).iter().copied())
                    .take((*count).max(1))
                    .collect();
                Ok(picked)
            }
            NodeSelection::Ids { ids } => {
                for &id in ids {
                    g.check_node(id)?;
                }
                Ok(ids.iter().copied().collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTemplate {
    pub selection: NodeSelection,
    pub duration: f64,
    #[serde(default)]
    pub post_release_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub u_s: f64,
    pub v_s: f64,
    pub activated: usize,
    pub failures: usize,
    pub fraction: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub u_axis: Vec<f64>,
    pub v_axis: Vec<f64>,
    pub reps: usize,
    pub master_seed: u64,
    /// Row-major in `(u index, v index)`.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, iu: usize, iv: usize) -> &SweepCell {
        &self.cells[iu * self.v_axis.len() + iv]
    }

    /// CSV rows `u_s, v_s, fraction, failures`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u_s", "v_s", "fraction", "failures"])?;
        for c in &self.cells {
            wr.write_record([
                c.u_s.to_string(),
                c.v_s.to_string(),
                c.fraction.to_string(),
                c.failures.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Seed of repetition `rep` in grid cell `cell`.
pub fn run_seed(master_seed: u64, cell: usize, rep: usize, reps: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((cell * reps + rep) as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RunOutcome {
    Active,
    Inactive,
    Failed,
}

/// One Monte Carlo run: fresh network and controlled set from `seed`, all
/// other nodes starting at zero.
pub fn run_once(
    recipe: &NetworkRecipe,
    m: &ModelSpec,
    clamp: NodeState,
    template: &ControlTemplate,
    opts: &SimOptions,
    seed: u64,
) -> Result<(Arc<Graph>, ControlSpec, SimResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = recipe.build(rng.next_u64())?;
    let nodes = template.selection.pick(&g, &mut rng)?;
    let ctrl = ControlSpec {
        nodes,
        clamp,
        schedule: Vec::new(),
        duration: template.duration,
        post_release_time: template.post_release_time,
    };
    let init = zero_init_with_clamp(g.node_count(), &ctrl);
    let mut r = integrate_full(&g, m, &ctrl, &init, opts)?;
    r.seed = Some(seed);
    Ok((g, ctrl, r))
}

/// Activation fraction over `reps` independent runs for every clamp on the
/// `u_axis x v_axis` grid. Runs execute on the current rayon pool; the result
/// depends only on the inputs and `master_seed`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_grid(
    recipe: &NetworkRecipe,
    m: &ModelSpec,
    u_axis: &[f64],
    v_axis: &[f64],
    reps: usize,
    template: &ControlTemplate,
    opts: &SimOptions,
    master_seed: u64,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<SweepResult> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    if u_axis.is_empty() || v_axis.is_empty() {
        return Err(Error::InvalidParameter("empty sweep axis".into()));
    }
    m.validate()?;
    let opts = SimOptions {
        record_stride: 0,
        ..*opts
    };
    let n_cells = u_axis.len() * v_axis.len();
    let total = n_cells * reps;
    let done = AtomicUsize::new(0);
    let outcomes: Vec<Result<RunOutcome>> = (0..total)
        .into_par_iter()
        .map(|task| {
            let (cell, rep) = (task / reps, task % reps);
            let clamp = NodeState::new(u_axis[cell / v_axis.len()], v_axis[cell % v_axis.len()]);
            let seed = run_seed(master_seed, cell, rep, reps);
            let outcome = match run_once(recipe, m, clamp, template, &opts, seed) {
                Ok((_, _, r)) if r.activated => Ok(RunOutcome::Active),
                Ok(_) => Ok(RunOutcome::Inactive),
                Err(Error::NonFinite { .. }) => Ok(RunOutcome::Failed),
                Err(e) => Err(e),
            };
            let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(finished, total);
            }
            outcome
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let cells = (0..n_cells)
        .map(|cell| {
            let runs = &outcomes[cell * reps..(cell + 1) * reps];
            let activated = runs.iter().filter(|o| **o == RunOutcome::Active).count();
            SweepCell {
                u_s: u_axis[cell / v_axis.len()],
                v_s: v_axis[cell % v_axis.len()],
                activated,
                failures: runs.iter().filter(|o| **o == RunOutcome::Failed).count(),
                fraction: activated as f64 / reps as f64,
                seeds: (0..reps).map(|r| run_seed(master_seed, cell, r, reps)).collect(),
            }
        })
        .collect();
    Ok(SweepResult {
        u_axis: u_axis.to_vec(),
        v_axis: v_axis.to_vec(),
        reps,
        master_seed,
        cells,
    })
}

/// `points` evenly spaced values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GeneParams;
    use crate::network::generate_er;

    fn star(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).unwrap()
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let g = generate_er(200, 6.0, 1).unwrap();
        let m = ModelSpec::gene_normalized();
        let ctrl = ControlSpec::fixed([0], NodeState::ZERO, 5.0);
        let init = vec![NodeState::ZERO; 200];
        let r = integrate_full(&g, &m, &ctrl, &init, &SimOptions::default()).unwrap();
        assert!(r.final_states.iter().all(|s| *s == NodeState::ZERO));
        assert!(!r.activated);
        assert_eq!(r.frozen_at, Some(0.0));
    }

    #[test]
    fn clamp_is_exact_in_every_sample() {
        let g = generate_er(300, 6.0, 4).unwrap();
        let m = ModelSpec::gene_normalized();
        let clamp = NodeState::new(2.0, 1.7);
        let ctrl = ControlSpec::fixed([3, 7], clamp, 3.0);
        let init = zero_init_with_clamp(300, &ctrl);
        let opts = SimOptions {
            record_stride: 7,
            ..Default::default()
        };
        let r = integrate_full(&g, &m, &ctrl, &init, &opts).unwrap();
        let traj = r.trajectory.unwrap();
        assert!(traj.times.len() > 10);
        for states in &traj.states {
            assert_eq!(states[3], clamp);
            assert_eq!(states[7], clamp);
            assert!(states.iter().all(NodeState::is_valid));
        }
        assert_eq!(*traj.times.last().unwrap(), 3.0);
    }

    #[test]
    fn schedule_switches_clamp() {
        let g = star(5);
        let m = ModelSpec::gene();
        let mut ctrl = ControlSpec::fixed([0], NodeState::new(1.0, 1.0), 2.0);
        ctrl.schedule.push((1.0, NodeState::new(3.0, 0.5)));
        let init = zero_init_with_clamp(6, &ctrl);
        let opts = SimOptions {
            record_stride: 1,
            ..Default::default()
        };
        let r = integrate_full(&g, &m, &ctrl, &init, &opts).unwrap();
        let traj = r.trajectory.unwrap();
        let at = |t: f64| {
            let i = traj.times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
            traj.states[i][0]
        };
        assert_eq!(at(0.5), NodeState::new(1.0, 1.0));
        assert_eq!(at(1.5), NodeState::new(3.0, 0.5));
    }

    #[test]
    fn release_lets_controlled_node_relax() {
        let g = star(4);
        let m = ModelSpec::GeneRegulation(GeneParams { b1: 5.0, b2: 5.0 });
        let mut ctrl = ControlSpec::fixed([0], NodeState::new(2.0, 2.0), 1.0);
        ctrl.post_release_time = 10.0;
        let init = zero_init_with_clamp(5, &ctrl);
        let r = integrate_full(&g, &m, &ctrl, &init, &SimOptions::default()).unwrap();
        assert!(r.final_states[0].u < 0.1);
        assert!((r.end_time - 11.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = star(3);
        let m = ModelSpec::gene();
        let ctrl = ControlSpec::fixed([0], NodeState::new(1.0, 1.0), 1.0);
        let init = vec![NodeState::ZERO; 4];
        let big_dt = SimOptions {
            dt: 0.1,
            ..Default::default()
        };
        assert!(integrate_full(&g, &m, &ctrl, &init, &big_dt).is_err());
        assert!(matches!(
            integrate_full(&g, &m, &ctrl, &init[..3], &SimOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = ControlSpec::fixed([9], NodeState::new(1.0, 1.0), 1.0);
        assert!(integrate_full(&g, &m, &bad, &init, &SimOptions::default()).is_err());
        let isolated = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(matches!(
            integrate_full(
                &isolated,
                &ModelSpec::gene_normalized(),
                &ctrl,
                &[NodeState::ZERO; 3],
                &SimOptions::default()
            ),
            Err(Error::IsolatedNode(2))
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let g = star(3);
        // Large clamp and negligible decay cannot blow up these bounded
        // models, so feed a non-finite initial state instead.
        let m = ModelSpec::gene();
        let ctrl = ControlSpec::fixed([0], NodeState::new(1.0, 1.0), 1.0);
        let mut init = vec![NodeState::ZERO; 4];
        init[2] = NodeState::new(f64::MAX, 0.0);
        let r = integrate_full(&g, &m, &ctrl, &init, &SimOptions::default());
        assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
    }

    #[test]
    fn judge_threshold() {
        let m = ModelSpec::gene_normalized();
        let judge = ActivationJudge::new(&m, 10.0);
        let high = judge.high.unwrap();
        assert!(judge.is_active(high));
        assert!(!judge.is_active(NodeState::ZERO));
        assert!(!judge.is_active(NodeState::new(0.49 * high.u, 0.0)));
        assert!(judge.is_active(NodeState::new(0.51 * high.u, 0.0)));
        let monostable = ModelSpec::GeneRegulation(GeneParams { b1: 50.0, b2: 50.0 });
        assert!(!ActivationJudge::new(&monostable, 10.0).is_active(NodeState::new(100.0, 100.0)));
    }

    #[test]
    fn shell_average_of_uniform_and_star() {
        let g = star(4);
        let shells = bfs_shells(&g, &BTreeSet::from([0])).unwrap();
        let x = NodeState::new(0.3, 0.9);
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![vec![x; 5]],
        };
        let lt = shell_average(&traj, &shells).unwrap();
        assert_eq!(lt.layers[0], vec![x, x]);

        let snap = vec![
            NodeState::ZERO,
            NodeState::new(1.0, 0.0),
            NodeState::new(3.0, 0.0),
            NodeState::new(5.0, 0.0),
            NodeState::new(7.0, 0.0),
        ];
        let avg = shell_average_snapshot(&snap, &shells);
        assert_eq!(avg[1], NodeState::new(4.0, 0.0));
    }

    #[test]
    fn uniform_scatter_rows() {
        let g = star(3);
        let shells = bfs_shells(&g, &BTreeSet::from([0])).unwrap();
        let x = NodeState::new(1.0, 2.0);
        let r = SimResult {
            final_states: vec![x; 4],
            mean_activity: x,
            activated: false,
            trajectory: None,
            seed: None,
            dt: 0.01,
            end_time: 0.0,
            frozen_at: None,
            wall_time: 0.0,
        };
        let rows = export_activity_scatter(&r, &g, &shells);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|row| row.u == 1.0 && row.v == 2.0));
        assert_eq!(rows[0].degree, 3);
        assert_eq!(rows[2].layer, Some(1));
        let mut buf = Vec::new();
        write_scatter_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("node,degree,layer,u,v\n"));
    }

    #[test]
    fn zero_clamp_sweep_never_activates() {
        let recipe = NetworkRecipe::Er { n: 100, k: 6.0 };
        let template = ControlTemplate {
            selection: NodeSelection::Random,
            duration: 5.0,
            post_release_time: 0.0,
        };
        let r = sweep_grid(
            &recipe,
            &ModelSpec::gene_normalized(),
            &[0.0],
            &[0.0],
            3,
            &template,
            &SimOptions::default(),
            9,
            None,
        )
        .unwrap();
        assert_eq!(r.cells[0].fraction, 0.0);
        assert_eq!(r.cells[0].failures, 0);
    }

    #[test]
    fn adjacent_selection_is_connected_block() {
        let g = generate_er(200, 6.0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picked = NodeSelection::RandomAdjacent { count: 4 }.pick(&g, &mut rng).unwrap();
        assert_eq!(picked.len(), 4);
        let sub = bfs_shells(&g, &picked).unwrap();
        assert!(sub.num_layers() > 0);
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 3.0, 11)[10], 3.0);
        assert_eq!(linspace(0.0, 3.0, 11)[1], 0.3);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }
}

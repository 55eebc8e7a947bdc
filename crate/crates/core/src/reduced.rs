//! Layer-reduced dynamics: one averaged node per shortest-path layer, driven
//! by the clamped layer 0. Used to predict activation and to trace the
//! activation boundary in the clamp plane.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelSpec, NodeState};
use crate::error::{Error, Result};
use crate::layer_model::LayerParams;
use crate::ode::{step_count, Rk4, Step};
use crate::simulate::{ActivationJudge, LayerTrajectory, MAX_DT};

pub const REDUCED_FREEZE_TOL: f64 = 1e-12;
/// Coarse samples per ray used to check for a single crossing.
pub const RAY_SCAN_POINTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub layers: LayerParams,
    pub model: ModelSpec,
    pub clamp: NodeState,
    /// States of layers `1..=L`.
    pub state: Vec<NodeState>,
}

/// Reduced system with every layer at zero and layer 0 at `clamp`.
pub fn build_reduced(m: &ModelSpec, p: &LayerParams, clamp: NodeState) -> Result<ReducedSystem> {
    m.validate()?;
    if p.layers.is_empty() {
        return Err(Error::InconsistentLayers("no layers".into()));
    }
    for r in &p.layers {
        let values = [r.d, r.e, r.f, r.g, r.c_in, r.c_within, r.c_out];
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InconsistentLayers(format!(
                "layer {} has a negative or non-finite entry",
                r.l
            )));
        }
    }
    let last = p.layers.last().unwrap();
    if last.c_out > 1e-9 {
        return Err(Error::InconsistentLayers(format!(
            "outermost layer {} has c_out = {} > 0",
            last.l, last.c_out
        )));
    }
    if !clamp.is_valid() {
        return Err(Error::InvalidParameter(format!("invalid clamp {clamp:?}")));
    }
    Ok(ReducedSystem {
        layers: p.clone(),
        model: *m,
        clamp,
        state: vec![NodeState::ZERO; p.layers.len()],
    })
}

impl ReducedSystem {
    pub fn num_layers(&self) -> usize {
        self.layers.layers.len()
    }

    /// Derivative of the flattened layer states `[u1, v1, u2, v2, ...]`.
    ///
    /// Each layer is an average node whose edges split into `c_in`, `c_within`
    /// and `c_out` towards layers l-1, l, l+1; those weights sum to the mean
    /// degree, so normalized variants reduce to unit scale.
    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        let m = &self.model;
        let n_layers = self.num_layers();
        let at = |l: usize| -> NodeState {
            if l == 0 {
                self.clamp
            } else {
                NodeState::new(x[2 * (l - 1)], x[2 * (l - 1) + 1])
            }
        };
        for (idx, rec) in self.layers.layers.iter().enumerate() {
            let l = idx + 1;
            let mut su = 0.0;
            let mut sv = 0.0;
            for (offset, w) in [(-1i64, rec.c_in), (0, rec.c_within), (1, rec.c_out)] {
                let target = l as i64 + offset;
                if w == 0.0 || target > n_layers as i64 {
                    continue;
                }
                let s = at(target as usize);
                su += w * m.kernel_u(s.v);
                sv += w * m.kernel_v(s.u);
            }
            let (du, dv) = m.derivative_from_sums(at(l), su, sv, 1.0);
            dx[2 * idx] = du;
            dx[2 * idx + 1] = dv;
        }
    }

    /// Mean over layers `1..=L` weighted by layer size.
    pub fn weighted_mean(&self, states: &[NodeState]) -> NodeState {
        let total: f64 = self.layers.layers.iter().map(|r| r.d).sum();
        let (u, v) = self
            .layers
            .layers
            .iter()
            .zip(states)
            .fold((0.0, 0.0), |(u, v), (r, s)| (u + r.d * s.u, v + r.d * s.v));
        NodeState::new(u / total, v / total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRun {
    /// Includes layer 0 (the clamp) at index 0.
    pub trajectory: LayerTrajectory,
    pub final_states: Vec<NodeState>,
    pub frozen_at: Option<f64>,
}

/// Fixed-step RK4 on the layer chain from `s.state`. Records every
/// `record_stride`-th step when non-zero; the initial and final states are
/// always recorded.
pub fn integrate_reduced(s: &ReducedSystem, dt: f64, duration: f64, record_stride: usize) -> Result<ReducedRun> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidParameter(format!("dt must lie in (0, {MAX_DT}], got {dt}")));
    }
    let mut x: Vec<f64> = s.state.iter().flat_map(|n| [n.u, n.v]).collect();
    let mut rk = Rk4::new(x.len());
    let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| s.rhs(x, dx);
    let snapshot = |x: &[f64]| -> Vec<NodeState> {
        std::iter::once(s.clamp)
            .chain(x.chunks_exact(2).map(|c| NodeState::new(c[0], c[1])))
            .collect()
    };
    let mut traj = LayerTrajectory {
        times: vec![0.0],
        layers: vec![snapshot(&x)],
    };
    let mut frozen_at = None;
    let steps = step_count(duration, dt);
    for i in 0..steps {
        let t = i as f64 * dt;
        if rk.step(&mut rhs, t, &mut x, dt, REDUCED_FREEZE_TOL) == Step::Frozen {
            frozen_at = Some(t);
            break;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { time: t + dt });
        }
        if record_stride > 0 && (i + 1) % record_stride == 0 && i + 1 < steps {
            traj.times.push(t + dt);
            traj.layers.push(snapshot(&x));
        }
    }
    let last = snapshot(&x);
    traj.times.push(duration);
    traj.layers.push(last.clone());
    Ok(ReducedRun {
        trajectory: traj,
        final_states: last[1..].to_vec(),
        frozen_at,
    })
}

/// Reusable activation predictor for one model and layer structure.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: ModelSpec,
    pub layers: LayerParams,
    pub judge: ActivationJudge,
    pub dt: f64,
    pub duration: f64,
}

impl Predictor {
    pub fn new(m: &ModelSpec, p: &LayerParams, dt: f64, duration: f64, k: f64) -> Result<Self> {
        build_reduced(m, p, NodeState::ZERO)?;
        Ok(Self {
            model: *m,
            layers: p.clone(),
            judge: ActivationJudge::new(m, k),
            dt,
            duration,
        })
    }

    /// Final layer-weighted mean state for a clamp.
    pub fn final_mean(&self, clamp: NodeState) -> Result<NodeState> {
        let s = build_reduced(&self.model, &self.layers, clamp)?;
        let run = integrate_reduced(&s, self.dt, self.duration, 0)?;
        Ok(s.weighted_mean(&run.final_states))
    }

    pub fn predict(&self, clamp: NodeState) -> Result<bool> {
        if self.judge.high.is_none() {
            return Ok(false);
        }
        Ok(self.judge.is_active(self.final_mean(clamp)?))
    }
}

pub fn predict_activation(
    m: &ModelSpec,
    p: &LayerParams,
    clamp: NodeState,
    dt: f64,
    duration: f64,
    k: f64,
) -> Result<bool> {
    Predictor::new(m, p, dt, duration, k)?.predict(clamp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayStatus {
    /// Exactly one flip along the ray.
    Crossing,
    /// Several flips; every crossing interval is reported.
    Multiple,
    /// Never activates within the scanned range.
    NoActivation,
    /// Activates already at zero clamp.
    ActiveAtOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub angle: f64,
    /// Midpoint of the final bracket; `None` for flagged rays.
    pub radius: Option<f64>,
    pub u_s: Option<f64>,
    pub v_s: Option<f64>,
    pub status: RayStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayResult {
    pub angle: f64,
    pub max_radius: f64,
    pub status: RayStatus,
    /// `(inactive side, active side)` brackets, each narrower than `tol`.
    pub crossings: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub rays: Vec<RayResult>,
    pub u_max: f64,
    pub v_max: f64,
    pub tol: f64,
}

/// Ray angles from the `u` axis to the `v` axis inclusive. Doubling the
/// number of intervals (`n -> 2n - 1` rays) keeps every previous angle.
pub fn ray_angles(n_rays: usize) -> Vec<f64> {
    (0..n_rays)
        .map(|i| FRAC_PI_2 * i as f64 / (n_rays - 1) as f64)
        .collect()
}

fn ray_extent(angle: f64, u_max: f64, v_max: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let ru = if c > 1e-12 { u_max / c } else { f64::INFINITY };
    let rv = if s > 1e-12 { v_max / s } else { f64::INFINITY };
    ru.min(rv)
}

fn on_ray(angle: f64, r: f64) -> NodeState {
    let (s, c) = angle.sin_cos();
    let u = if c > 1e-12 { r * c } else { 0.0 };
    let v = if s > 1e-12 { r * s } else { 0.0 };
    NodeState::new(u, v)
}

fn trace_ray(pred: &Predictor, angle: f64, u_max: f64, v_max: f64, tol: f64) -> Result<RayResult> {
    let max_radius = ray_extent(angle, u_max, v_max);
    let radii: Vec<f64> = (0..RAY_SCAN_POINTS)
        .map(|i| max_radius * i as f64 / (RAY_SCAN_POINTS - 1) as f64)
        .collect();
    let flags = radii
        .iter()
        .map(|&r| pred.predict(on_ray(angle, r)))
        .collect::<Result<Vec<bool>>>()?;
    let mut result = RayResult {
        angle,
        max_radius,
        status: RayStatus::Crossing,
        crossings: Vec::new(),
    };
    if flags[0] {
        result.status = RayStatus::ActiveAtOrigin;
        return Ok(result);
    }
    if !flags.iter().any(|&f| f) {
        result.status = RayStatus::NoActivation;
        return Ok(result);
    }
    for w in 0..RAY_SCAN_POINTS - 1 {
        if flags[w] == flags[w + 1] {
            continue;
        }
        let (mut lo, mut hi) = (radii[w], radii[w + 1]);
        let lo_active = flags[w];
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if pred.predict(on_ray(angle, mid))? == lo_active {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        result.crossings.push(if lo_active { (hi, lo) } else { (lo, hi) });
    }
    if result.crossings.len() > 1 {
        result.status = RayStatus::Multiple;
    }
    Ok(result)
}

/// Traces the activation frontier in `[0, u_max] x [0, v_max]` by radial
/// bisection along `n_rays` rays. Rays are evaluated in parallel.
#[allow(clippy::too_many_arguments)]
pub fn find_boundary(
    m: &ModelSpec,
    p: &LayerParams,
    u_max: f64,
    v_max: f64,
    n_rays: usize,
    tol: f64,
    dt: f64,
    duration: f64,
    k: f64,
) -> Result<BoundaryCurve> {
    if n_rays < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 rays, got {n_rays}")));
    }
    if !(tol > 0.0) || !(u_max > 0.0) || !(v_max > 0.0) {
        return Err(Error::InvalidParameter("tol and scan extents must be positive".into()));
    }
    let pred = Predictor::new(m, p, dt, duration, k)?;
    let rays = ray_angles(n_rays)
        .into_par_iter()
        .map(|a| {
            if pred.judge.high.is_none() {
                return Ok(RayResult {
                    angle: a,
                    max_radius: ray_extent(a, u_max, v_max),
                    status: RayStatus::NoActivation,
                    crossings: Vec::new(),
                });
            }
            trace_ray(&pred, a, u_max, v_max, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryCurve {
        rays,
        u_max,
        v_max,
        tol,
    })
}

impl BoundaryCurve {
    /// One row per crossing, plus one radius-less row per flagged ray.
    pub fn points(&self) -> Vec<BoundaryPoint> {
        let mut out = Vec::new();
        for ray in &self.rays {
            if ray.crossings.is_empty() {
                out.push(BoundaryPoint {
                    angle: ray.angle,
                    radius: None,
                    u_s: None,
                    v_s: None,
                    status: ray.status,
                });
            }
            for &(a, b) in &ray.crossings {
                let r = 0.5 * (a + b);
                let p = on_ray(ray.angle, r);
                out.push(BoundaryPoint {
                    angle: ray.angle,
                    radius: Some(r),
                    u_s: Some(p.u),
                    v_s: Some(p.v),
                    status: ray.status,
                });
            }
        }
        out
    }

    /// Crossing points only.
    pub fn curve(&self) -> Vec<NodeState> {
        self.points()
            .iter()
            .filter_map(|p| Some(NodeState::new(p.u_s?, p.v_s?)))
            .collect()
    }

    /// CSV rows `angle, radius, u_s, v_s, status`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in self.points() {
            wr.serialize(p)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GeneParams;
    use crate::layer_model::{analytic_layers, LayerRecord};

    fn star_layers() -> LayerParams {
        LayerParams {
            root_size: 1.0,
            layers: vec![LayerRecord {
                l: 1,
                d: 10.0,
                e: 10.0,
                f: 0.0,
                g: 0.0,
                c_in: 1.0,
                c_within: 0.0,
                c_out: 0.0,
                terminal: true,
            }],
            warnings: vec![],
        }
    }

    #[test]
    fn star_is_pure_forcing() {
        let m = ModelSpec::gene();
        let s = build_reduced(&m, &star_layers(), NodeState::new(2.0, 1.0)).unwrap();
        let mut dx = [0.0; 2];
        s.rhs(&[0.5, 0.25], &mut dx);
        assert!((dx[0] - (-1.3 * 0.5 + 0.5)).abs() < 1e-15);
        assert!((dx[1] - (-1.5 * 0.25 + 0.8)).abs() < 1e-15);
        // relaxes onto the forced fixed point h(clamp)/decay
        let run = integrate_reduced(&s, 0.01, 40.0, 0).unwrap();
        assert!((run.final_states[0].u - 0.5 / 1.3).abs() < 1e-9);
        assert!((run.final_states[0].v - 0.8 / 1.5).abs() < 1e-9);
    }

    #[test]
    fn initial_derivative_only_sees_the_clamp() {
        let p = analytic_layers(5000, 10.0, 10.0).unwrap();
        let s = build_reduced(&ModelSpec::gene_normalized(), &p, NodeState::new(2.0, 2.0)).unwrap();
        assert_eq!(s.num_layers(), 4);
        let mut dx = vec![0.0; 8];
        s.rhs(&[0.0; 8], &mut dx);
        assert!((dx[0] - 0.8).abs() < 1e-15 && (dx[1] - 0.8).abs() < 1e-15);
        assert!(dx[2..].iter().all(|&d| d == 0.0));
    }

    #[test]
    fn zero_clamp_stays_zero() {
        let p = analytic_layers(5000, 10.0, 10.0).unwrap();
        let s = build_reduced(&ModelSpec::gene_normalized(), &p, NodeState::ZERO).unwrap();
        let run = integrate_reduced(&s, 0.01, 60.0, 100).unwrap();
        for snap in &run.trajectory.layers {
            assert!(snap.iter().all(|x| *x == NodeState::ZERO));
        }
        assert_eq!(run.frozen_at, Some(0.0));
        assert!(!predict_activation(&ModelSpec::gene_normalized(), &p, NodeState::ZERO, 0.01, 60.0, 10.0).unwrap());
    }

    #[test]
    fn rejects_open_outer_layer() {
        let mut p = star_layers();
        p.layers[0].c_out = 1.0;
        assert!(matches!(
            build_reduced(&ModelSpec::gene(), &p, NodeState::ZERO),
            Err(Error::InconsistentLayers(_))
        ));
        assert!(build_reduced(&ModelSpec::gene(), &LayerParams { root_size: 1.0, layers: vec![], warnings: vec![] }, NodeState::ZERO).is_err());
    }

    #[test]
    fn no_high_state_means_empty_curve() {
        let m = ModelSpec::GeneRegulationNormalized(GeneParams { b1: 20.0, b2: 20.0 });
        let p = analytic_layers(1000, 10.0, 10.0).unwrap();
        let b = find_boundary(&m, &p, 3.0, 3.0, 5, 1e-3, 0.01, 10.0, 10.0).unwrap();
        assert!(b.curve().is_empty());
        assert!(b.rays.iter().all(|r| r.status == RayStatus::NoActivation));
        assert_eq!(b.points().len(), 5);
    }

    #[test]
    fn angles_nest_on_refinement() {
        let coarse = ray_angles(5);
        let fine = ray_angles(9);
        for (i, a) in coarse.iter().enumerate() {
            assert_eq!(*a, fine[2 * i]);
        }
        assert_eq!(coarse[0], 0.0);
        assert_eq!(*coarse.last().unwrap(), FRAC_PI_2);
    }

    #[test]
    fn axis_rays_stay_on_axes() {
        assert_eq!(on_ray(FRAC_PI_2, 2.0).u, 0.0);
        assert_eq!(on_ray(0.0, 2.0).v, 0.0);
        assert!((ray_extent(FRAC_PI_2, 3.0, 2.0) - 2.0).abs() < 1e-12);
        assert!((ray_extent(std::f64::consts::FRAC_PI_4, 3.0, 3.0) - 3.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}

//! Two-variable node dynamics with a linear self-decay and a saturating
//! coupling to neighbors:
//!
//! ```text
//! du/dt = -decay_u * u + couple_u( scale * sum_j kernel_u(v_j) )
//! dv/dt = -decay_v * v + couple_v( scale * sum_j kernel_v(u_j) )
//! ```
//!
//! `scale` is 1 for the plain variants and `k_avg / degree` for the
//! degree-normalized ones. The same split (per-neighbor kernel, aggregate
//! coupling) drives the full simulator, the layer-reduced system and the
//! mean-field equilibria.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeState {
    pub u: f64,
    pub v: f64,
}

impl NodeState {
    pub const ZERO: NodeState = NodeState { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_valid(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.u >= 0.0 && self.v >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneParams {
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
}

impl Default for GeneParams {
    fn default() -> Self {
        Self { b1: 1.3, b2: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualismParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Default for MutualismParams {
    fn default() -> Self {
        Self {
            a: 5.0,
            b: 4.0,
            c: 0.5,
            d: 3.0,
            e: 3.0,
            f: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params")]
pub enum ModelSpec {
    /// RNA/protein positive feedback with Hill-2 coupling summed over neighbors.
    GeneRegulation(GeneParams),
    /// As `GeneRegulation`, coupling scaled by `k_avg / degree`.
    GeneRegulationNormalized(GeneParams),
    /// Mutualistic benefit saturating in the aggregated squared neighbor abundance.
    Mutualism(MutualismParams),
    /// As `Mutualism`, aggregate scaled by `k_avg / degree` inside the saturation.
    MutualismNormalized(MutualismParams),
}

#[inline]
fn hill2(z: f64) -> f64 {
    let z2 = z * z;
    z2 / (1.0 + z2)
}

impl ModelSpec {
    pub fn gene_normalized() -> Self {
        ModelSpec::GeneRegulationNormalized(GeneParams::default())
    }

    pub fn gene() -> Self {
        ModelSpec::GeneRegulation(GeneParams::default())
    }

    pub fn mutualism_normalized() -> Self {
        ModelSpec::MutualismNormalized(MutualismParams::default())
    }

    pub fn mutualism() -> Self {
        ModelSpec::Mutualism(MutualismParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::GeneRegulation(_) => "GeneRegulation",
            ModelSpec::GeneRegulationNormalized(_) => "GeneRegulationNormalized",
            ModelSpec::Mutualism(_) => "Mutualism",
            ModelSpec::MutualismNormalized(_) => "MutualismNormalized",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params: Vec<(&str, f64)> = match self {
            ModelSpec::GeneRegulation(p) | ModelSpec::GeneRegulationNormalized(p) => {
                vec![("B1", p.b1), ("B2", p.b2)]
            }
            ModelSpec::Mutualism(p) | ModelSpec::MutualismNormalized(p) => vec![
                ("a", p.a),
                ("b", p.b),
                ("c", p.c),
                ("d", p.d),
                ("e", p.e),
                ("f", p.f),
            ],
        };
        for (name, value) in params {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{} parameter {name} must be positive, got {value}",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        matches!(
            self,
            ModelSpec::GeneRegulationNormalized(_) | ModelSpec::MutualismNormalized(_)
        )
    }

    /// Linear decay rates `(decay_u, decay_v)`.
    pub fn decay(&self) -> (f64, f64) {
        match self {
            ModelSpec::GeneRegulation(p) | ModelSpec::GeneRegulationNormalized(p) => (p.b1, p.b2),
            ModelSpec::Mutualism(p) | ModelSpec::MutualismNormalized(p) => (p.a, p.d),
        }
    }

    /// Contribution of a neighbor with protein/partner level `v` to the `u` equation.
    #[inline]
    pub fn kernel_u(&self, v: f64) -> f64 {
        match self {
            ModelSpec::GeneRegulation(_) | ModelSpec::GeneRegulationNormalized(_) => hill2(v),
            ModelSpec::Mutualism(_) | ModelSpec::MutualismNormalized(_) => v * v,
        }
    }

    #[inline]
    pub fn kernel_v(&self, u: f64) -> f64 {
        self.kernel_u(u)
    }

    /// Coupling term of the `u` equation for an already scaled neighbor aggregate.
    #[inline]
    pub fn couple_u(&self, s: f64) -> f64 {
        match self {
            ModelSpec::GeneRegulation(_) | ModelSpec::GeneRegulationNormalized(_) => s,
            ModelSpec::Mutualism(p) | ModelSpec::MutualismNormalized(p) => p.b * s / (1.0 + p.c * s),
        }
    }

    #[inline]
    pub fn couple_v(&self, s: f64) -> f64 {
        match self {
            ModelSpec::GeneRegulation(_) | ModelSpec::GeneRegulationNormalized(_) => s,
            ModelSpec::Mutualism(p) | ModelSpec::MutualismNormalized(p) => p.e * s / (1.0 + p.f * s),
        }
    }

    /// Factor applied to the neighbor aggregate of a node of the given degree.
    pub fn scale(&self, degree: usize, k_avg: f64) -> Option<f64> {
        if !self.is_normalized() {
            Some(1.0)
        } else if degree == 0 {
            None
        } else {
            Some(k_avg / degree as f64)
        }
    }

    /// Derivative from pre-aggregated, unscaled neighbor sums.
    #[inline]
    pub fn derivative_from_sums(&self, x: NodeState, sum_u: f64, sum_v: f64, scale: f64) -> (f64, f64) {
        let (du, dv) = self.decay();
        (
            -du * x.u + self.couple_u(scale * sum_u),
            -dv * x.v + self.couple_v(scale * sum_v),
        )
    }

    /// Upper bounds on the coupling terms for a node with effective degree
    /// `k` and unit scale; steady states satisfy `u <= bound_u / decay_u`.
    pub fn coupling_bound(&self, k: f64) -> (f64, f64) {
        match self {
            ModelSpec::GeneRegulation(_) | ModelSpec::GeneRegulationNormalized(_) => (k, k),
            ModelSpec::Mutualism(p) | ModelSpec::MutualismNormalized(p) => (p.b / p.c, p.e / p.f),
        }
    }
}

/// Time derivative of one node given its neighbors' states.
pub fn node_derivative(
    m: &ModelSpec,
    x: NodeState,
    neighbors: &[NodeState],
    degree: usize,
    k_avg: f64,
) -> Result<(f64, f64)> {
    if degree != neighbors.len() {
        return Err(Error::DimensionMismatch {
            expected: degree,
            actual: neighbors.len(),
        });
    }
    let scale = m.scale(degree, k_avg).ok_or(Error::IsolatedNode(0))?;
    let sum_u: f64 = neighbors.iter().map(|n| m.kernel_u(n.v)).sum();
    let sum_v: f64 = neighbors.iter().map(|n| m.kernel_v(n.u)).sum();
    Ok(m.derivative_from_sums(x, sum_u, sum_v, scale))
}

/// Homogeneous-state derivative: every node has effective degree `k` and all
/// neighbors share the state `x`.
pub fn mean_field_derivative(m: &ModelSpec, x: NodeState, k: f64) -> (f64, f64) {
    m.derivative_from_sums(x, k * m.kernel_u(x.v), k * m.kernel_v(x.u), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: NodeState,
    pub stable: bool,
}

pub const EQUILIBRIUM_SCAN_POINTS: usize = 10_000;
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

/// All non-negative homogeneous steady states at effective degree `k`,
/// ascending in `u`. The zero state is always first.
///
/// Eliminates `v` through its nullcline, scans the resulting 1-D map for
/// sign changes on the bounded interval, and bisects each bracket.
pub fn mean_field_equilibria(m: &ModelSpec, k: f64) -> Vec<Equilibrium> {
    let (decay_u, decay_v) = m.decay();
    let v_of_u = |u: f64| m.couple_v(k * m.kernel_v(u)) / decay_v;
    let u_of_v = |v: f64| m.couple_u(k * m.kernel_u(v)) / decay_u;
    let phi = |u: f64| u_of_v(v_of_u(u)) - u;

    let upper = m.coupling_bound(k).0 / decay_u * (1.0 + 1e-9) + 1e-12;
    let mut roots = vec![0.0];
    let mut prev_u = 0.0;
    let mut prev = phi(0.0);
    for i in 1..=EQUILIBRIUM_SCAN_POINTS {
        let u = upper * i as f64 / EQUILIBRIUM_SCAN_POINTS as f64;
        let cur = phi(u);
        if cur == 0.0 {
            roots.push(u);
        } else if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
            let (mut lo, mut hi, lo_neg) = (prev_u, u, prev < 0.0);
            while hi - lo > EQUILIBRIUM_TOL {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (phi(mid) < 0.0) == lo_neg {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_u = u;
        prev = cur;
    }
    roots
        .into_iter()
        .map(|u| {
            let state = NodeState::new(u, v_of_u(u));
            Equilibrium {
                state,
                stable: is_stable(m, state, k),
            }
        })
        .collect()
}

/// Sign test on the 2x2 homogeneous Jacobian: trace is always negative, so
/// stability reduces to a positive determinant.
fn is_stable(m: &ModelSpec, x: NodeState, k: f64) -> bool {
    let (decay_u, decay_v) = m.decay();
    let h = 1e-6;
    let dcu = |v: f64| m.couple_u(k * m.kernel_u(v));
    let dcv = |u: f64| m.couple_v(k * m.kernel_v(u));
    let slope = |f: &dyn Fn(f64) -> f64, z: f64| {
        let lo = (z - h).max(0.0);
        (f(z + h) - f(lo)) / (z + h - lo)
    };
    decay_u * decay_v - slope(&dcu, x.v) * slope(&dcv, x.u) > 0.0
}

/// Highest homogeneous steady state, if any besides zero.
pub fn high_equilibrium(m: &ModelSpec, k: f64) -> Option<NodeState> {
    mean_field_equilibria(m, k)
        .into_iter()
        .skip(1)
        .last()
        .map(|e| e.state)
}

//! Cell-level agreement between a predicted boundary and a simulated sweep.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduced::{BoundaryPoint, RayStatus};

/// Activation fractions on a rectangular clamp grid, as read back from a
/// sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub u_axis: Vec<f64>,
    pub v_axis: Vec<f64>,
    /// `fraction[iu][iv]`
    pub fraction: Vec<Vec<f64>>,
    pub failures: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    u_s: f64,
    v_s: f64,
    fraction: f64,
    failures: usize,
}

fn sorted_unique(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

impl SweepGrid {
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<Vec<SweepRow>, _>>()?;
        let u_axis = sorted_unique(rows.iter().map(|r| r.u_s).collect());
        let v_axis = sorted_unique(rows.iter().map(|r| r.v_s).collect());
        if rows.len() != u_axis.len() * v_axis.len() || rows.is_empty() {
            return Err(Error::Config(format!(
                "sweep CSV is not a full grid: {} rows for {}x{} axes",
                rows.len(),
                u_axis.len(),
                v_axis.len()
            )));
        }
        let mut fraction = vec![vec![f64::NAN; v_axis.len()]; u_axis.len()];
        let mut failures = vec![vec![0; v_axis.len()]; u_axis.len()];
        for r in rows {
            let iu = u_axis.iter().position(|&u| u == r.u_s).unwrap();
            let iv = v_axis.iter().position(|&v| v == r.v_s).unwrap();
            fraction[iu][iv] = r.fraction;
            failures[iu][iv] = r.failures;
        }
        if fraction.iter().flatten().any(|f| f.is_nan()) {
            return Err(Error::Config("sweep CSV has duplicate cells".into()));
        }
        Ok(Self {
            u_axis,
            v_axis,
            fraction,
            failures,
        })
    }

    pub fn from_result(r: &crate::simulate::SweepResult) -> Self {
        let (nu, nv) = (r.u_axis.len(), r.v_axis.len());
        let mut fraction = vec![vec![0.0; nv]; nu];
        let mut failures = vec![vec![0; nv]; nu];
        for iu in 0..nu {
            for iv in 0..nv {
                let c = r.cell(iu, iv);
                fraction[iu][iv] = c.fraction;
                failures[iu][iv] = c.failures;
            }
        }
        Self {
            u_axis: r.u_axis.clone(),
            v_axis: r.v_axis.clone(),
            fraction,
            failures,
        }
    }
}

pub fn read_boundary_csv<R: Read>(r: R) -> Result<Vec<BoundaryPoint>> {
    Ok(csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<Vec<BoundaryPoint>, _>>()?)
}

/// Activation predicate recovered from boundary rows: each ray starts
/// inactive at the origin and flips at every reported crossing radius.
/// Between rays, single-crossing radii are interpolated linearly in angle;
/// otherwise the nearer ray decides.
#[derive(Debug, Clone)]
pub struct BoundaryPredicate {
    rays: Vec<(f64, RayStatus, Vec<f64>)>,
}

impl BoundaryPredicate {
    pub fn new(points: &[BoundaryPoint]) -> Result<Self> {
        let mut rays: Vec<(f64, RayStatus, Vec<f64>)> = Vec::new();
        for p in points {
            match rays.iter_mut().find(|r| r.0 == p.angle) {
                Some(ray) => ray.2.extend(p.radius),
                None => rays.push((p.angle, p.status, p.radius.into_iter().collect())),
            }
        }
        if rays.is_empty() {
            return Err(Error::Config("boundary has no rays".into()));
        }
        rays.sort_by(|a, b| a.0.total_cmp(&b.0));
        for r in &mut rays {
            r.2.sort_by(f64::total_cmp);
        }
        Ok(Self { rays })
    }

    fn ray_active(ray: &(f64, RayStatus, Vec<f64>), r: f64) -> bool {
        match ray.1 {
            RayStatus::ActiveAtOrigin => true,
            RayStatus::NoActivation => false,
            _ => ray.2.iter().filter(|&&c| c < r).count() % 2 == 1,
        }
    }

    pub fn is_active(&self, u: f64, v: f64) -> bool {
        let angle = v.atan2(u);
        let r = u.hypot(v);
        let hi = self.rays.partition_point(|ray| ray.0 < angle);
        if hi == 0 {
            return Self::ray_active(&self.rays[0], r);
        }
        if hi == self.rays.len() {
            return Self::ray_active(self.rays.last().unwrap(), r);
        }
        let (a, b) = (&self.rays[hi - 1], &self.rays[hi]);
        let single = |x: &(f64, RayStatus, Vec<f64>)| x.1 == RayStatus::Crossing && x.2.len() == 1;
        if single(a) && single(b) {
            let w = (angle - a.0) / (b.0 - a.0);
            let radius = a.2[0] + w * (b.2[0] - a.2[0]);
            r > radius
        } else if angle - a.0 <= b.0 - angle {
            Self::ray_active(a, r)
        } else {
            Self::ray_active(b, r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareCell {
    pub u_s: f64,
    pub v_s: f64,
    pub fraction: f64,
    pub failures: usize,
    pub predicted: u8,
    pub near_boundary: u8,
    /// Empty for cells next to the boundary.
    pub agrees: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub total_cells: usize,
    pub near_boundary_cells: usize,
    pub evaluated_cells: usize,
    pub matching_cells: usize,
    /// Predicted active, majority inactive.
    pub false_active: usize,
    /// Predicted inactive, majority active.
    pub false_inactive: usize,
    /// `matching / evaluated`; `None` when every cell is next to the boundary.
    pub agreement: Option<f64>,
    #[serde(skip)]
    pub cells: Vec<CompareCell>,
}

/// Majority outcome of a cell: strictly more than half the runs activated.
pub fn majority_active(fraction: f64) -> bool {
    fraction > 0.5
}

/// Compares prediction and simulation on every cell that is farther than one
/// grid cell (Chebyshev) from a change in the predicted label.
pub fn compare(grid: &SweepGrid, predicted: impl Fn(f64, f64) -> bool) -> CompareReport {
    let (nu, nv) = (grid.u_axis.len(), grid.v_axis.len());
    let labels: Vec<Vec<bool>> = grid
        .u_axis
        .iter()
        .map(|&u| grid.v_axis.iter().map(|&v| predicted(u, v)).collect())
        .collect();
    let mut cells = Vec::with_capacity(nu * nv);
    let (mut near, mut evaluated, mut matching, mut fa, mut fi) = (0, 0, 0, 0, 0);
    for iu in 0..nu {
        for iv in 0..nv {
            let here = labels[iu][iv];
            let is_near = (iu.saturating_sub(1)..=(iu + 1).min(nu - 1)).any(|ju| {
                (iv.saturating_sub(1)..=(iv + 1).min(nv - 1)).any(|jv| labels[ju][jv] != here)
            });
            let observed = majority_active(grid.fraction[iu][iv]);
            let agrees = if is_near {
                near += 1;
                None
            } else {
                evaluated += 1;
                if observed == here {
                    matching += 1;
                } else if here {
                    fa += 1;
                } else {
                    fi += 1;
                }
                Some(u8::from(observed == here))
            };
            cells.push(CompareCell {
                u_s: grid.u_axis[iu],
                v_s: grid.v_axis[iv],
                fraction: grid.fraction[iu][iv],
                failures: grid.failures[iu][iv],
                predicted: u8::from(here),
                near_boundary: u8::from(is_near),
                agrees,
            });
        }
    }
    CompareReport {
        total_cells: nu * nv,
        near_boundary_cells: near,
        evaluated_cells: evaluated,
        matching_cells: matching,
        false_active: fa,
        false_inactive: fi,
        agreement: (evaluated > 0).then(|| matching as f64 / evaluated as f64),
        cells,
    }
}

pub fn compare_with_boundary(grid: &SweepGrid, boundary: &[BoundaryPoint]) -> Result<CompareReport> {
    let pred = BoundaryPredicate::new(boundary)?;
    Ok(compare(grid, |u, v| pred.is_active(u, v)))
}

impl CompareReport {
    /// Combined CSV `u_s, v_s, fraction, failures, predicted, near_boundary, agrees`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for c in &self.cells {
            wr.serialize(c)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::linspace;

    fn grid_from(pred: impl Fn(f64, f64) -> bool) -> SweepGrid {
        let axis = linspace(0.0, 3.0, 11);
        let fraction = axis
            .iter()
            .map(|&u| axis.iter().map(|&v| if pred(u, v) { 1.0 } else { 0.0 }).collect())
            .collect();
        SweepGrid {
            u_axis: axis.clone(),
            v_axis: axis,
            fraction,
            failures: vec![vec![0; 11]; 11],
        }
    }

    fn quarter_circle(radius: f64, n: usize) -> Vec<BoundaryPoint> {
        crate::reduced::ray_angles(n)
            .into_iter()
            .map(|a| BoundaryPoint {
                angle: a,
                radius: Some(radius),
                u_s: Some(radius * a.cos()),
                v_s: Some(radius * a.sin()),
                status: RayStatus::Crossing,
            })
            .collect()
    }

    #[test]
    fn perfect_sweep_agrees_everywhere() {
        let boundary = quarter_circle(1.55, 11);
        let pred = BoundaryPredicate::new(&boundary).unwrap();
        let grid = grid_from(|u, v| pred.is_active(u, v));
        let report = compare_with_boundary(&grid, &boundary).unwrap();
        assert_eq!(report.agreement, Some(1.0));
        assert!(report.near_boundary_cells > 0);
        assert_eq!(report.evaluated_cells + report.near_boundary_cells, 121);
    }

    #[test]
    fn inverted_sweep_disagrees() {
        let boundary = quarter_circle(1.55, 11);
        let pred = BoundaryPredicate::new(&boundary).unwrap();
        let grid = grid_from(|u, v| !pred.is_active(u, v));
        let report = compare_with_boundary(&grid, &boundary).unwrap();
        assert_eq!(report.agreement, Some(0.0));
        assert!(report.false_active > 0 && report.false_inactive > 0);
    }

    #[test]
    fn flagged_rays_predict_constant() {
        let none: Vec<BoundaryPoint> = crate::reduced::ray_angles(3)
            .into_iter()
            .map(|a| BoundaryPoint {
                angle: a,
                radius: None,
                u_s: None,
                v_s: None,
                status: RayStatus::NoActivation,
            })
            .collect();
        let pred = BoundaryPredicate::new(&none).unwrap();
        assert!(!pred.is_active(3.0, 3.0));
        let grid = grid_from(|_, _| false);
        let report = compare_with_boundary(&grid, &none).unwrap();
        assert_eq!(report.near_boundary_cells, 0);
        assert_eq!(report.agreement, Some(1.0));
    }

    #[test]
    fn majority_is_strict() {
        assert!(!majority_active(0.5));
        assert!(majority_active(0.6));
    }

    #[test]
    fn csv_round_trips_through_reader() {
        let boundary = quarter_circle(2.0, 5);
        let mut buf = Vec::new();
        {
            let mut wr = csv::Writer::from_writer(&mut buf);
            for p in &boundary {
                wr.serialize(p).unwrap();
            }
        }
        let back = read_boundary_csv(buf.as_slice()).unwrap();
        assert_eq!(back, boundary);

        let csv = "u_s,v_s,fraction,failures\n0,0,0,0\n0,1,0.5,0\n1,0,1,1\n1,1,1,0\n";
        let g = SweepGrid::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(g.u_axis, vec![0.0, 1.0]);
        assert_eq!(g.fraction[0][1], 0.5);
        assert_eq!(g.failures[1][0], 1);
        assert!(SweepGrid::read_csv("u_s,v_s,fraction,failures\n0,0,0,0\n0,1,0,0\n1,0,0,0\n".as_bytes()).is_err());
    }
}

//! Per-layer connectivity `c_{l,n}` around a controlled node: the expected
//! values from the random-graph recurrence in `(N, k)`, or direct
//! measurement on a concrete graph.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Graph, ShellDecomposition};

/// One layer of the reduced network. Quantities are real-valued expectations
/// for the analytic model and exact counts/means for measured graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub l: usize,
    /// Nodes in the layer.
    pub d: f64,
    /// Edges from layer `l-1` into layer `l`.
    pub e: f64,
    /// Nodes outside layers `0..=l`.
    pub f: f64,
    /// Layer nodes with two inbound edges.
    pub g: f64,
    pub c_in: f64,
    pub c_within: f64,
    pub c_out: f64,
    pub terminal: bool,
}

impl LayerRecord {
    pub fn degree(&self) -> f64 {
        self.c_in + self.c_within + self.c_out
    }

    /// Weight of the edge class to layer `l + offset`, `offset` in {-1, 0, 1}.
    pub fn c(&self, offset: i32) -> f64 {
        match offset {
            -1 => self.c_in,
            0 => self.c_within,
            1 => self.c_out,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Size of layer 0 (the controlled set).
    pub root_size: f64,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LayerParams {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_nodes(&self) -> f64 {
        self.root_size + self.layers.iter().map(|r| r.d).sum::<f64>()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.layers {
            wr.serialize(r)?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let layers = rd.deserialize().collect::<Result<Vec<LayerRecord>, _>>()?;
        Ok(LayerParams {
            root_size: 1.0,
            layers,
            warnings: Vec::new(),
        })
    }
}

/// Expected layer structure of a random graph with `n` nodes and mean degree
/// `k`, seen from a controlled set whose first shell holds `seed_layer_size`
/// nodes (`k` for a single controlled node).
///
/// Per layer the recurrence runs in the order e, g, d, f, c_in, c_within,
/// c_out. The first layer whose recurrence would produce a negative quantity
/// (or `d <= 0`) is instead closed as the terminal layer: it absorbs all
/// remaining nodes and has no outward edges.
pub fn analytic_layers(n: usize, k: f64, seed_layer_size: f64) -> Result<LayerParams> {
    let nf = n as f64;
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need n >= 3, got {n}")));
    }
    if !(k > 1.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("need k > 1, got {k}")));
    }
    if k >= nf - 1.0 {
        return Err(Error::InvalidParameter(format!(
            "k = {k} >= n - 1 leaves no outer layers"
        )));
    }
    let d1 = seed_layer_size;
    if !(d1 > 0.0 && d1 < nf - 1.0) {
        return Err(Error::InvalidParameter(format!(
            "first layer size {d1} outside (0, n-1)"
        )));
    }

    let f1 = nf - d1 - 1.0;
    let c_within = (k - 1.0) * (d1 - 1.0) / (f1 + d1 - 1.0);
    let mut layers = vec![LayerRecord {
        l: 1,
        d: d1,
        e: d1,
        f: f1,
        g: 0.0,
        c_in: 1.0,
        c_within,
        c_out: k - 1.0 - c_within,
        terminal: false,
    }];
    if f1 == 0.0 {
        layers[0].terminal = true;
    }

    while !layers.last().unwrap().terminal {
        let prev = *layers.last().unwrap();
        let l = prev.l + 1;
        let e = prev.c_out * prev.d;
        let g = e * e / prev.f;
        let d = e - g;
        let f = prev.f - d;
        let c_in = e / d;
        let c_within = (k - c_in) * (d - 1.0) / (f + d - 1.0);
        let c_out = k - c_in - c_within;

        let record = if d <= 0.0 || f < 0.0 || c_within < 0.0 || c_out < 0.0 || f == 0.0 {
            let c_in = prev.c_out * prev.d / prev.f;
            LayerRecord {
                l,
                d: prev.f,
                e,
                f: 0.0,
                g: 0.0,
                c_in,
                c_within: k - c_in,
                c_out: 0.0,
                terminal: true,
            }
        } else {
            LayerRecord {
                l,
                d,
                e,
                f,
                g,
                c_in,
                c_within,
                c_out,
                terminal: false,
            }
        };
        let values = [
            record.d,
            record.e,
            record.f,
            record.g,
            record.c_in,
            record.c_within,
            record.c_out,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite value at layer {l}")));
        }
        if record.c_within < 0.0 {
            return Err(Error::Degenerate(format!(
                "terminal layer {l} has more inbound edges per node than k"
            )));
        }
        layers.push(record);
    }

    Ok(LayerParams {
        root_size: 1.0,
        layers,
        warnings: Vec::new(),
    })
}

/// Layer statistics measured on a concrete graph.
pub fn empirical_layers(g: &Graph, shells: &ShellDecomposition) -> Result<LayerParams> {
    if shells.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            actual: shells.node_count(),
        });
    }
    let depth = shells.num_layers();
    let mut warnings = Vec::new();
    if depth == 0 {
        warnings.push("no nodes beyond the controlled set".to_string());
    }
    if shells.unreachable_count() > 0 {
        warnings.push(format!(
            "{} nodes unreachable from the controlled set",
            shells.unreachable_count()
        ));
    }
    let mut outside = g.node_count() - shells.members(0).len();
    let mut layers = Vec::with_capacity(depth);
    for l in 1..=depth {
        let members = shells.members(l);
        if members.is_empty() {
            warnings.push(format!("layer {l} is empty"));
            continue;
        }
        let (mut inn, mut within, mut out, mut doubles) = (0usize, 0usize, 0usize, 0usize);
        for &i in members {
            let mut from_inner = 0;
            for &j in g.neighbors(i) {
                match shells.layer(j) {
                    Some(lj) if lj + 1 == l => from_inner += 1,
                    Some(lj) if lj == l => within += 1,
                    Some(lj) if lj == l + 1 => out += 1,
                    _ => {}
                }
            }
            inn += from_inner;
            if from_inner == 2 {
                doubles += 1;
            }
        }
        outside -= members.len();
        let d = members.len() as f64;
        layers.push(LayerRecord {
            l,
            d,
            e: inn as f64,
            f: outside as f64,
            g: doubles as f64,
            c_in: inn as f64 / d,
            c_within: within as f64 / d,
            c_out: out as f64 / d,
            terminal: l == depth,
        });
    }
    Ok(LayerParams {
        root_size: shells.members(0).len() as f64,
        layers,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerResidual {
    pub l: usize,
    /// |c_in + c_within + c_out - k|
    pub degree: f64,
    /// |c_out * d - e_next|, absent for the last layer.
    pub edge_balance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub layers: Vec<LayerResidual>,
    /// |root + sum d - n|
    pub node_conservation: f64,
    pub terminal_c_out: f64,
    pub tolerance: f64,
}

impl ConsistencyReport {
    pub fn max_residual(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|r| [Some(r.degree), r.edge_balance])
            .flatten()
            .chain([self.node_conservation, self.terminal_c_out])
            .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_residual() < self.tolerance
    }
}

pub const CONSISTENCY_TOL: f64 = 1e-9;

pub fn check_layer_consistency(p: &LayerParams, n: usize, k: f64) -> ConsistencyReport {
    let layers = p
        .layers
        .iter()
        .enumerate()
        .map(|(idx, r)| LayerResidual {
            l: r.l,
            degree: (r.degree() - k).abs(),
            edge_balance: p.layers.get(idx + 1).map(|next| (r.c_out * r.d - next.e).abs()),
        })
        .collect();
    let terminal_c_out = p
        .layers
        .last()
        .map(|r| if r.terminal { r.c_out.abs() } else { 0.0 })
        .unwrap_or(0.0);
    ConsistencyReport {
        layers,
        node_conservation: (p.total_nodes() - n as f64).abs(),
        terminal_c_out,
        tolerance: CONSISTENCY_TOL,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::network::bfs_shells;

    fn src(s: usize) -> BTreeSet<usize> {
        BTreeSet::from([s])
    }

    #[test]
    fn first_layer_closed_form() {
        let p = analytic_layers(5000, 10.0, 10.0).unwrap();
        let l1 = p.layers[0];
        assert_eq!(l1.c_in, 1.0);
        assert!((l1.c_within - 81.0 / 4998.0).abs() < 1e-15);
        assert!((l1.c_out - (10.0 - 1.0 - 81.0 / 4998.0)).abs() < 1e-14);
    }

    #[test]
    fn tiny_network_terminates_at_layer_two() {
        for k in [2.0, 3.0, 5.0] {
            let n = k as usize + 2;
            let p = analytic_layers(n, k, k).unwrap();
            assert_eq!(p.num_layers(), 2, "k={k}");
            let last = p.layers[1];
            assert!(last.terminal);
            assert_eq!(last.d, 1.0);
            assert_eq!(last.c_out, 0.0);
            assert!(check_layer_consistency(&p, n, k).passes());
        }
    }

    #[test]
    fn rejects_dense_or_degenerate_input() {
        assert!(analytic_layers(10, 9.0, 9.0).is_err());
        assert!(analytic_layers(10, 1.0, 1.0).is_err());
        assert!(analytic_layers(2, 1.5, 1.5).is_err());
        assert!(analytic_layers(100, 5.0, 0.0).is_err());
    }

    #[test]
    fn star_and_triangle_measurements() {
        let star = Graph::from_edges(11, (1..=10).map(|i| (0, i))).unwrap();
        let sh = bfs_shells(&star, &src(0)).unwrap();
        let p = empirical_layers(&star, &sh).unwrap();
        assert_eq!(p.num_layers(), 1);
        let l1 = p.layers[0];
        assert_eq!((l1.d, l1.c_in, l1.c_within, l1.c_out), (10.0, 1.0, 0.0, 0.0));
        assert!(l1.terminal);

        let tri = Graph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        for s in 0..3 {
            let sh = bfs_shells(&tri, &src(s)).unwrap();
            let p = empirical_layers(&tri, &sh).unwrap();
            let l1 = p.layers[0];
            assert_eq!((l1.d, l1.c_in, l1.c_within, l1.c_out), (2.0, 1.0, 1.0, 0.0));
            let report = check_layer_consistency(&p, 3, 2.0);
            assert_eq!(report.max_residual(), 0.0);
        }
    }

    #[test]
    fn isolated_source_reports_empty() {
        let g = Graph::from_edges(3, [(1, 2)]).unwrap();
        let sh = bfs_shells(&g, &src(0)).unwrap();
        let p = empirical_layers(&g, &sh).unwrap();
        assert!(p.layers.is_empty());
        assert!(!p.warnings.is_empty());
    }

    #[test]
    fn injected_fault_detected() {
        let mut p = analytic_layers(5000, 10.0, 10.0).unwrap();
        assert!(check_layer_consistency(&p, 5000, 10.0).passes());
        p.layers[1].c_within += 0.1;
        let r = check_layer_consistency(&p, 5000, 10.0);
        assert!(!r.passes());
        assert!((r.max_residual() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let p = analytic_layers(500, 6.0, 6.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("l,d,e,f,g,c_in,c_within,c_out,terminal\n"));
        let back = LayerParams::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.layers, p.layers);
    }
}

//! Per-hour distance and travel-time graphs over the active detectors.
//!
//! Edges join consecutive active detectors on the same highway. Raw weights
//! are min-max scaled onto `[w_floor, 1]` per snapshot and modality, then
//! symmetrically normalised with self-loops for the graph convolution.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DetectorMeta, FeatureTable};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub w_floor: f64,
    /// mph substituted when the mean endpoint speed falls below it
    pub speed_floor: f64,
    pub invert_weights: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { w_floor: 0.01, speed_floor: 5.0, invert_weights: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Distance,
    TravelTime,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Distance => "distance",
            Modality::TravelTime => "travel_time",
        }
    }
}

/// Undirected edge between snapshot-local node positions `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub raw: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    /// hour index on the feature grid
    pub t: usize,
    /// detector indices, ascending (hence ordered by highway, milepost)
    pub nodes: Vec<usize>,
    pub edges_d: Vec<Edge>,
    pub edges_tt: Vec<Edge>,
    pub a_d: Tensor,
    pub a_tt: Tensor,
    pub norm_d: Tensor,
    pub norm_tt: Tensor,
    /// edges whose travel time used the speed floor
    pub speed_floor_hits: usize,
}

impl GraphSnapshot {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, detector: usize) -> Option<usize> {
        self.nodes.binary_search(&detector).ok()
    }

    pub fn normalized(&self, m: Modality) -> &Tensor {
        match m {
            Modality::Distance => &self.norm_d,
            Modality::TravelTime => &self.norm_tt,
        }
    }

    pub fn edges(&self, m: Modality) -> &[Edge] {
        match m {
            Modality::Distance => &self.edges_d,
            Modality::TravelTime => &self.edges_tt,
        }
    }
}

/// Chain edges over `metas` (already sorted by highway, milepost): each
/// detector links to the next one on the same highway. Offline detectors are
/// simply absent from `metas`, so their neighbours link directly.
///
/// Returns `(i, j, miles)` with `i < j` indexing into `metas`.
pub fn build_edges(metas: &[&DetectorMeta]) -> Vec<(usize, usize, f64)> {
    metas
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].highway == w[1].highway)
        .map(|(k, w)| (k, k + 1, (w[1].milepost - w[0].milepost).abs()))
        .collect()
}

/// Travel time in hours over `miles` at the mean of the two endpoint speeds.
/// Mean speeds below `speed_floor` (including zero) are replaced by the
/// floor, and the returned flag is set.
pub fn travel_time(miles: f64, v_i: f64, v_j: f64, speed_floor: f64) -> (f64, bool) {
    let mean = (v_i + v_j) / 2.0;
    if mean.is_finite() && mean >= speed_floor {
        (miles / mean, false)
    } else {
        (miles / speed_floor, true)
    }
}

/// Affine map of `raw` onto `[w_floor, 1]`; a degenerate range maps to 1.
pub fn scale_weights(raw: &[f64], w_floor: f64) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; raw.len()];
    }
    raw.iter().map(|&w| w_floor + (1.0 - w_floor) * (w - lo) / (hi - lo)).collect()
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn gcn_normalize(a: &Tensor) -> Tensor {
    let n = a.rows();
    let mut out = a.clone();
    for i in 0..n {
        let v = out.get(i, i) + 1.0;
        out.set(i, i, v);
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / out.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = out.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            out.set(i, j, v);
        }
    }
    out
}

fn adjacency(n: usize, edges: &[Edge]) -> Tensor {
    let mut a = Tensor::zeros(&[n, n]);
    for e in edges {
        a.set(e.i, e.j, e.scaled);
        a.set(e.j, e.i, e.scaled);
    }
    a
}

fn finish_edges(pairs: &[(usize, usize, f64)], opts: &GraphOptions) -> Vec<Edge> {
    let raw: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let mut scaled = scale_weights(&raw, opts.w_floor);
    if opts.invert_weights {
        for w in &mut scaled {
            *w = 1.0 - *w + opts.w_floor;
        }
    }
    pairs.iter().zip(scaled).map(|(&(i, j, raw), scaled)| Edge { i, j, raw, scaled }).collect()
}

/// Builds both graphs for hour `t`. `nodes` are ascending detector indices
/// into `detectors`; `speeds[k]` is the speed (mph) of `nodes[k]`.
pub fn build_snapshot(
    t: usize,
    detectors: &[DetectorMeta],
    nodes: &[usize],
    speeds: &[f64],
    opts: &GraphOptions,
) -> GraphSnapshot {
    let metas: Vec<&DetectorMeta> = nodes.iter().map(|&d| &detectors[d]).collect();
    let pairs = build_edges(&metas);
    let mut hits = 0;
    let tt_pairs: Vec<(usize, usize, f64)> = pairs
        .iter()
        .map(|&(i, j, miles)| {
            let (tt, floored) = travel_time(miles, speeds[i], speeds[j], opts.speed_floor);
            hits += floored as usize;
            (i, j, tt)
        })
        .collect();
    let edges_d = finish_edges(&pairs, opts);
    let edges_tt = finish_edges(&tt_pairs, opts);
    let n = nodes.len();
    let a_d = adjacency(n, &edges_d);
    let a_tt = adjacency(n, &edges_tt);
    GraphSnapshot {
        t,
        nodes: nodes.to_vec(),
        norm_d: gcn_normalize(&a_d),
        norm_tt: gcn_normalize(&a_tt),
        a_d,
        a_tt,
        edges_d,
        edges_tt,
        speed_floor_hits: hits,
    }
}

/// One snapshot per hour of `table`, over that hour's active detectors.
pub fn build_all_snapshots(table: &FeatureTable, opts: &GraphOptions) -> Vec<Arc<GraphSnapshot>> {
    (0..table.hours)
        .into_par_iter()
        .map(|t| {
            let nodes = table.active_nodes(t);
            let speeds: Vec<f64> = nodes.iter().map(|&d| table.speed_at(t, d)).collect();
            Arc::new(build_snapshot(t, &table.detectors, &nodes, &speeds, opts))
        })
        .collect()
}

/// Frozen distance graph over every detector, for the static baseline.
/// Keyed by detector id so it survives a checkpoint round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGraph {
    pub ids: Vec<String>,
    pub adjacency: Tensor,
}

impl StaticGraph {
    /// `detectors` must be sorted by (highway, milepost).
    pub fn build(detectors: &[DetectorMeta], opts: &GraphOptions) -> Self {
        let metas: Vec<&DetectorMeta> = detectors.iter().collect();
        let edges = finish_edges(&build_edges(&metas), opts);
        StaticGraph {
            ids: detectors.iter().map(|d| d.detector_id.clone()).collect(),
            adjacency: adjacency(detectors.len(), &edges),
        }
    }

    /// Normalised adjacency of the subgraph induced by `ids`. Ids unknown to
    /// the frozen graph become isolated nodes.
    pub fn restricted(&self, ids: &[&str]) -> Tensor {
        let pos: Vec<Option<usize>> = ids.iter().map(|id| self.ids.iter().position(|x| x == id)).collect();
        let n = ids.len();
        let mut a = Tensor::zeros(&[n, n]);
        for (r, pi) in pos.iter().enumerate() {
            for (c, pj) in pos.iter().enumerate() {
                if let (Some(i), Some(j)) = (pi, pj) {
                    a.set(r, c, self.adjacency.get(*i, *j));
                }
            }
        }
        gcn_normalize(&a)
    }
}

/// Writes `t,modality,i,j,raw_weight,scaled_weight` rows, with `i`/`j` as
/// detector ids.
pub fn write_edge_dump(
    path: &Path,
    snapshots: &[&GraphSnapshot],
    detectors: &[DetectorMeta],
) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,modality,i,j,raw_weight,scaled_weight")?;
    for s in snapshots {
        for m in [Modality::Distance, Modality::TravelTime] {
            for e in s.edges(m) {
                writeln!(
                    f,
                    "{},{},{},{},{},{}",
                    s.t,
                    m.as_str(),
                    detectors[s.nodes[e.i]].detector_id,
                    detectors[s.nodes[e.j]].detector_id,
                    e.raw,
                    e.scaled
                )?;
            }
        }
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Highway;
    use proptest::prelude::*;

    fn meta(id: &str, hw: Highway, mp: f64) -> DetectorMeta {
        DetectorMeta { detector_id: id.into(), highway: hw, milepost: mp, lanes: 2, lat: 0.0, lon: 0.0 }
    }

    #[test]
    fn chain_edges() {
        let m = [meta("a", Highway::I4, 0.0), meta("b", Highway::I4, 2.0), meta("c", Highway::I4, 5.0)];
        let refs: Vec<&DetectorMeta> = m.iter().collect();
        assert_eq!(build_edges(&refs), vec![(0, 1, 2.0), (1, 2, 3.0)]);
    }

    #[test]
    fn offline_detector_skipped_over() {
        let m = [meta("a", Highway::I4, 0.0), meta("c", Highway::I4, 5.0)];
        let refs: Vec<&DetectorMeta> = m.iter().collect();
        assert_eq!(build_edges(&refs), vec![(0, 1, 5.0)]);
        let all = [meta("a", Highway::I4, 0.0), meta("b", Highway::I4, 2.0), meta("c", Highway::I4, 5.0)];
        let s = build_snapshot(0, &all, &[0, 2], &[60.0, 60.0], &GraphOptions::default());
        assert_eq!(s.edges_d.len(), 1);
        assert_eq!(s.edges_d[0].raw, 5.0);
    }

    #[test]
    fn single_node_has_no_edges() {
        let m = [meta("a", Highway::I4, 0.0)];
        let refs: Vec<&DetectorMeta> = m.iter().collect();
        assert!(build_edges(&refs).is_empty());
        let s = build_snapshot(0, &m, &[0], &[60.0], &GraphOptions::default());
        assert_eq!(s.norm_d, Tensor::eye(1));
    }

    #[test]
    fn no_edges_across_highways() {
        let m = [meta("a", Highway::I4, 0.0), meta("b", Highway::I10, 1.0)];
        let refs: Vec<&DetectorMeta> = m.iter().collect();
        assert!(build_edges(&refs).is_empty());
    }

    #[test]
    fn travel_time_cases() {
        assert_eq!(travel_time(3.0, 60.0, 60.0, 5.0), (3.0 / 60.0, false));
        let (tt, f) = travel_time(2.0, 40.0, 60.0, 5.0);
        assert!((tt - 0.04).abs() < 1e-15);
        assert!(!f);
        assert_eq!(travel_time(2.0, 0.0, 0.0, 5.0), (0.4, true));
    }

    #[test]
    fn min_max_scaling() {
        let s = scale_weights(&[2.0, 4.0, 6.0], 0.01);
        assert!((s[0] - 0.01).abs() < 1e-15);
        assert!((s[1] - 0.505).abs() < 1e-15);
        assert!((s[2] - 1.0).abs() < 1e-15);
        assert_eq!(scale_weights(&[3.0, 3.0], 0.01), vec![1.0, 1.0]);
        assert_eq!(scale_weights(&[7.0], 0.01), vec![1.0]);
    }

    #[test]
    fn gcn_normalize_closed_forms() {
        assert_eq!(gcn_normalize(&Tensor::zeros(&[3, 3])), Tensor::eye(3));
        let a = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let n = gcn_normalize(&a);
        for v in n.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 2-regular cycle on 5 nodes and 3-regular K4, unit weights
        let mut cycle = Tensor::zeros(&[5, 5]);
        for i in 0..5 {
            cycle.set(i, (i + 1) % 5, 1.0);
            cycle.set((i + 1) % 5, i, 1.0);
        }
        let mut k4 = Tensor::filled(&[4, 4], 1.0);
        for i in 0..4 {
            k4.set(i, i, 0.0);
        }
        for g in [cycle, k4] {
            let n = gcn_normalize(&g);
            for i in 0..n.rows() {
                assert!((n.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invert_flag() {
        let m = [meta("a", Highway::I4, 0.0), meta("b", Highway::I4, 2.0), meta("c", Highway::I4, 8.0)];
        let opts = GraphOptions { invert_weights: true, ..GraphOptions::default() };
        let s = build_snapshot(0, &m, &[0, 1, 2], &[60.0; 3], &opts);
        assert!((s.edges_d[0].scaled - 1.0).abs() < 1e-15);
        assert!((s.edges_d[1].scaled - 0.01).abs() < 1e-15);
    }

    #[test]
    fn static_graph_restriction() {
        let m = [meta("a", Highway::I4, 0.0), meta("b", Highway::I4, 2.0), meta("c", Highway::I4, 5.0)];
        let g = StaticGraph::build(&m, &GraphOptions::default());
        // a and c are not adjacent in the frozen graph
        assert_eq!(g.restricted(&["a", "c"]), Tensor::eye(2));
        let ab = g.restricted(&["a", "b", "zz"]);
        // lone a–b edge is the shortest, so it sits at the weight floor
        assert!((ab.get(0, 1) - 0.01 / 1.01).abs() < 1e-15);
        assert_eq!(ab.get(2, 2), 1.0);
    }

    proptest! {
        #[test]
        fn snapshot_invariants(
            gaps in prop::collection::vec(0.1f64..10.0, 2..8),
            speeds in prop::collection::vec(0.0f64..80.0, 8),
            uniform in 5.0f64..80.0,
        ) {
            let mut mp = 0.0;
            let metas: Vec<DetectorMeta> = gaps.iter().enumerate().map(|(k, g)| {
                mp += g;
                meta(&format!("d{k}"), Highway::I75, mp)
            }).collect();
            let nodes: Vec<usize> = (0..metas.len()).collect();
            let opts = GraphOptions::default();
            let s = build_snapshot(0, &metas, &nodes, &speeds[..metas.len()], &opts);
            for m in [&s.a_d, &s.a_tt, &s.norm_d, &s.norm_tt] {
                for i in 0..m.rows() {
                    for j in 0..m.rows() {
                        prop_assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-12);
                    }
                    prop_assert!(m.row(i).iter().all(|v| v.is_finite()));
                }
            }
            for i in 0..s.a_d.rows() {
                prop_assert_eq!(s.a_d.get(i, i), 0.0);
            }
            for e in s.edges_d.iter().chain(&s.edges_tt) {
                prop_assert!(e.scaled >= opts.w_floor - 1e-15 && e.scaled <= 1.0 + 1e-15);
            }
            // scaling preserves order
            for a in &s.edges_tt {
                for b in &s.edges_tt {
                    if a.raw < b.raw {
                        prop_assert!(a.scaled <= b.scaled);
                    }
                }
            }
            // tt symmetric in endpoints
            let (x, _) = travel_time(3.0, speeds[0], speeds[1], 5.0);
            let (y, _) = travel_time(3.0, speeds[1], speeds[0], 5.0);
            prop_assert_eq!(x, y);
            // uniform speed: travel-time graph identical to distance graph after scaling
            let u = build_snapshot(0, &metas, &nodes, &vec![uniform; metas.len()], &opts);
            for (a, b) in u.edges_d.iter().zip(&u.edges_tt) {
                prop_assert!((a.raw / uniform - b.raw).abs() < 1e-12 * a.raw.max(1.0));
                prop_assert!((a.scaled - b.scaled).abs() < 1e-9);
            }
        }
    }
}

//! Generators and independent reference implementations shared by the
//! integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, SVD};
use proptest::prelude::*;
use rand::Rng;

use threatgraph::bbox::BoxGeom;
use threatgraph::graph::{Edge, FrameGraph, TemporalGraph, VertexAttributes};
use threatgraph::linalg::SquareMatrix;
use threatgraph::tracking::MaskState;
use threatgraph::{DetectionRecord, FloorPoint, FrameBundle, Pair, StreamConfig};

pub fn stream() -> StreamConfig {
    StreamConfig::default()
}

// ---- detection streams ----

fn conf() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
}

pub fn record(frame: u64) -> impl Strategy<Value = DetectionRecord> {
    (
        0..3u8,
        0.0..1920.0f64,
        0.0..1080.0f64,
        0.01..5.0f64,
        0.5..600.0f64,
        conf(),
        conf(),
        proptest::option::of(0..50u64),
    )
        .prop_map(move |(k, u, v, r, h, ca, cb, id)| {
            let g = BoxGeom::new(u, v, r, h);
            match k {
                0 => DetectionRecord::person(frame, g, ca, id),
                1 => DetectionRecord::face(frame, g, ca, cb),
                _ => DetectionRecord::handshake(frame, g, ca),
            }
        })
}

/// Bundles with distinct, increasing frames, records grouped by kind.
pub fn bundles() -> impl Strategy<Value = Vec<FrameBundle>> {
    proptest::collection::btree_set(0..500u64, 0..6)
        .prop_flat_map(|frames| {
            let per_frame: Vec<_> = frames
                .into_iter()
                .map(|f| proptest::collection::vec(record(f), 1..6).prop_map(move |recs| (f, recs)))
                .collect();
            per_frame
        })
        .prop_map(|frames| {
            frames
                .into_iter()
                .map(|(f, recs)| {
                    let mut b = FrameBundle::empty(f);
                    recs.into_iter().for_each(|r| b.push(r));
                    b
                })
                .collect()
        })
}

// ---- temporal graphs ----

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(0.1)]
}

fn frame_graph(frame: u64) -> impl Strategy<Value = FrameGraph> {
    proptest::collection::btree_map(
        0..30u64,
        (
            finite(),
            finite(),
            proptest::option::of((conf(), conf())),
            proptest::option::of(0..8usize),
        ),
        0..7,
    )
    .prop_flat_map(move |verts| {
        let ids: Vec<u64> = verts.keys().copied().collect();
        let n = ids.len();
        let edges = proptest::collection::vec((0..n.max(1), 0..n.max(1), conf()), 0..n * 2 + 1);
        (Just(verts), Just(ids), edges)
    })
    .prop_map(move |(verts, ids, raw_edges)| {
        let vertices = verts
            .into_iter()
            .map(|(id, (x, y, mask, group))| VertexAttributes {
                location: FloorPoint {
                    x,
                    y,
                    person_id: id,
                    frame,
                },
                mask: mask.map_or(MaskState::Unknown, |(c_mask, c_nomask)| MaskState::Known {
                    c_mask,
                    c_nomask,
                }),
                group_label: group,
            })
            .collect();
        let mut edges = BTreeMap::new();
        for (i, j, c) in raw_edges {
            if let Some(p) = ids.get(i).zip(ids.get(j)).and_then(|(&a, &b)| Pair::new(a, b)) {
                edges.insert(
                    p,
                    Edge {
                        present: 1,
                        confidence: c,
                    },
                );
            }
        }
        FrameGraph { frame, vertices, edges }
    })
}

pub fn temporal_graph() -> impl Strategy<Value = TemporalGraph> {
    (
        "[a-z0-9_\\- \"\\\\]{0,12}",
        prop_oneof![Just(25.0), Just(29.97), 1.0..120.0f64],
        proptest::collection::btree_set(0..1000u64, 0..5),
        proptest::collection::btree_map((0..30u64, 0..30u64), 0..2000u64, 0..4),
    )
        .prop_flat_map(|(sid, fps, frames, groups)| {
            let fgs: Vec<_> = frames.into_iter().map(frame_graph).collect();
            (Just(sid), Just(fps), fgs, Just(groups))
        })
        .prop_map(|(sid, fps, fgs, groups)| {
            let mut g = TemporalGraph::new(sid, fps);
            g.frames = fgs.into_iter().map(|f| (f.frame, f)).collect();
            g.confirmed_groups = groups
                .into_iter()
                .filter_map(|((a, b), since)| Pair::new(a, b).map(|p| (p, since)))
                .collect();
            g
        })
}

// ---- geometry oracle ----

/// Unnormalized DLT solved by SVD: the right singular vector of the 8×9
/// design matrix with the smallest singular value, scaled so h33 = 1.
pub fn dlt_svd(image: &[[f64; 2]; 4], floor: &[[f64; 2]; 4]) -> Matrix3<f64> {
    let mut a = DMatrix::<f64>::zeros(9, 9);
    for (k, (p, q)) in image.iter().zip(floor).enumerate() {
        let (x, y, u, v) = (p[0], p[1], q[0], q[1]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * k, c)] = r0[c];
            a[(2 * k + 1, c)] = r1[c];
        }
    }
    // ninth row stays zero so the SVD is square and V is complete
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t.expect("v requested");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let h = vt.row(imin);
    let m = Matrix3::from_row_slice(&h.iter().copied().collect::<Vec<_>>());
    m / m[(2, 2)]
}

pub fn apply(h: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = h * nalgebra::Vector3::new(p[0], p[1], 1.0);
    [v[0] / v[2], v[1] / v[2]]
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Random convex quads on both sides, well away from degeneracy: each
/// corner jitters inside its own quadrant of a box.
pub fn random_correspondence<R: Rng>(rng: &mut R) -> ([[f64; 2]; 4], [[f64; 2]; 4]) {
    let quad = |rng: &mut R, scale: f64| -> [[f64; 2]; 4] {
        let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        corners.map(|c| {
            [
                (c[0] * 0.6 + rng.gen_range(0.0..0.4)) * scale,
                (c[1] * 0.6 + rng.gen_range(0.0..0.4)) * scale,
            ]
        })
    };
    loop {
        let (si, sf) = (rng.gen_range(100.0..2000.0), rng.gen_range(2.0..50.0));
        let img = quad(rng, si);
        let flr = quad(rng, sf);
        let convex = |q: &[[f64; 2]; 4]| (0..4).all(|i| cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]) > 0.0);
        if convex(&img) && convex(&flr) {
            return (img, flr);
        }
    }
}

// ---- clustering oracle ----

/// Block-structured affinity: intra-block entries in [0.8, 1], inter-block
/// in [0, 0.1], unit diagonal. Returns the matrix and the block of each row.
pub fn block_affinity<R: Rng>(rng: &mut R, max_n: usize) -> (SquareMatrix, Vec<usize>) {
    let n = rng.gen_range(1..=max_n);
    let k = rng.gen_range(1..=n);
    let blocks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let mut a = SquareMatrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let v = if blocks[i] == blocks[j] {
                rng.gen_range(0.8..=1.0)
            } else {
                rng.gen_range(0.0..=0.1)
            };
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    (a, blocks)
}

/// Components of the graph with an edge wherever affinity exceeds `cut`,
/// by depth-first search.
pub fn connected_components(a: &SquareMatrix, cut: f64) -> Vec<usize> {
    let n = a.dim();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if label[j] == usize::MAX && a[(i, j)] > cut {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

/// Equal as partitions, ignoring label names.
pub fn same_partition(x: &[usize], y: &[usize]) -> bool {
    x.len() == y.len() && (0..x.len()).all(|i| (0..x.len()).all(|j| (x[i] == x[j]) == (y[i] == y[j])))
}

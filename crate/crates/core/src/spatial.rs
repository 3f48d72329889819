//! Exact k-nearest-neighbour search over reconstruction nodes.
//!
//! The tree splits on raw `(lat, lon)` degrees and stores a tight bounding
//! box per node. Pruning uses a lower bound on the distance from the query
//! to that box, computed in whichever [`CoordinateSystem`] the query asks
//! for, so one tree serves both planar and great-circle searches.

use crate::domain::{ClimatePointCloud, CoordinateSystem, QueryPoint, EARTH_RADIUS_KM};

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// A neighbour returned by [`KdIndex::knn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Split { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node {
    extent: Extent,
    kind: NodeKind,
}

/// Balanced 2-d tree over the coordinates of a point cloud.
#[derive(Debug, Clone)]
pub struct KdIndex {
    coords: Vec<[f64; 2]>,
    /// Point indices, permuted so every leaf owns a contiguous slice.
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

impl KdIndex {
    pub fn build(pc: &ClimatePointCloud) -> Self {
        Self::with_leaf_size(pc, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(pc: &ClimatePointCloud, leaf_size: usize) -> Self {
        let coords: Vec<[f64; 2]> = pc.points().iter().map(|p| [p.lat(), p.lon()]).collect();
        let mut index = Self {
            order: (0..coords.len()).collect(),
            coords,
            nodes: Vec::new(),
            leaf_size: leaf_size.max(1),
        };
        let n = index.coords.len();
        index.build_node(0, n);
        index
    }

    fn extent_of(&self, start: usize, end: usize) -> Extent {
        let mut e = Extent {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for &i in &self.order[start..end] {
            let [lat, lon] = self.coords[i];
            e.lat_min = e.lat_min.min(lat);
            e.lat_max = e.lat_max.max(lat);
            e.lon_min = e.lon_min.min(lon);
            e.lon_max = e.lon_max.max(lon);
        }
        e
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let extent = self.extent_of(start, end);
        let id = self.nodes.len();
        self.nodes.push(Node {
            extent,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= self.leaf_size {
            return id;
        }
        // Split the wider axis at the median; ties in coordinate fall back to
        // point index so construction is independent of sort stability.
        let axis = usize::from(extent.lon_max - extent.lon_min > extent.lat_max - extent.lat_min);
        let mid = start + (end - start) / 2;
        let coords = &self.coords;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Split { left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    /// The `min(k, N)` nearest nodes, sorted by distance then node index.
    pub fn knn(&self, q: QueryPoint, k: usize, cs: CoordinateSystem) -> Vec<Neighbour> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<Neighbour> = Vec::with_capacity(k + 1);
        self.search(0, [q.lat(), q.lon()], k, cs, &mut best);
        best
    }

    fn search(&self, id: usize, q: [f64; 2], k: usize, cs: CoordinateSystem, best: &mut Vec<Neighbour>) {
        match self.nodes[id].kind {
            NodeKind::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let [lat, lon] = self.coords[i];
                    offer(best, k, Neighbour { index: i, distance: cs.between(q[0], q[1], lat, lon) });
                }
            }
            NodeKind::Split { left, right } => {
                let dl = lower_bound(&self.nodes[left].extent, q, cs);
                let dr = lower_bound(&self.nodes[right].extent, q, cs);
                let (first, d_first, second, d_second) =
                    if dl <= dr { (left, dl, right, dr) } else { (right, dr, left, dl) };
                if admissible(best, k, d_first) {
                    self.search(first, q, k, cs, best);
                }
                if admissible(best, k, d_second) {
                    self.search(second, q, k, cs, best);
                }
            }
        }
    }
}

/// Equal distances are not pruned: a tied node with a lower index must win.
fn admissible(best: &[Neighbour], k: usize, bound: f64) -> bool {
    best.len() < k || bound <= best[k - 1].distance
}

fn offer(best: &mut Vec<Neighbour>, k: usize, cand: Neighbour) {
    let pos = best.partition_point(|b| {
        b.distance < cand.distance || (b.distance == cand.distance && b.index < cand.index)
    });
    if pos < k {
        best.insert(pos, cand);
        best.truncate(k);
    }
}

/// A value never larger than the distance from `q` to any point in `e`.
fn lower_bound(e: &Extent, q: [f64; 2], cs: CoordinateSystem) -> f64 {
    let dlat = (e.lat_min - q[0]).max(q[0] - e.lat_max).max(0.0);
    match cs {
        CoordinateSystem::Euclidean => {
            let dlon = (e.lon_min - q[1]).max(q[1] - e.lon_max).max(0.0);
            dlat.hypot(dlon)
        }
        CoordinateSystem::Geographic => {
            let dlon = if (e.lon_min..=e.lon_max).contains(&q[1]) {
                0.0
            } else {
                circular_gap(q[1], e.lon_min).min(circular_gap(q[1], e.lon_max))
            };
            // Haversine with each term replaced by its minimum over the box:
            // sin²(Δφ/2) ≥ sin²(Δφ_min/2), cos φ_b ≥ min over the box edges.
            let cos_q = q[0].to_radians().cos();
            let cos_box = e.lat_min.to_radians().cos().min(e.lat_max.to_radians().cos()).max(0.0);
            let h = (0.5 * dlat.to_radians()).sin().powi(2)
                + cos_q * cos_box * (0.5 * dlon.to_radians()).sin().powi(2);
            let d = 2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin();
            // Shave off rounding so the bound stays below the exact distance.
            d * (1.0 - 1e-9)
        }
    }
}

/// Angular separation of two longitudes in degrees, in `[0, 180]`.
fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

use super::{BoundaryTag, Mesh, MeshError};
use serde::Deserialize;
use smallvec::SmallVec;
use std::collections::BTreeMap;

/// What to do with negative dual interface lengths (non-Delaunay edges).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObtusePolicy {
    #[default]
    Reject,
    /// Replace the circumcentric pieces of every obtuse triangle by the
    /// Voronoi regions of its vertices clipped to the triangle, which are
    /// never negative. Edges whose circumcentric interface length would have
    /// been negative are recorded.
    Clamp,
}

/// Measure contributed by the triangles of one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPart {
    pub region: usize,
    pub measure: f64,
}

/// Circumcentric (Voronoi) control volumes of a triangulation.
///
/// Edges are stored once with `edges[e] = [i, l]`, `i < l`, in lexicographic
/// order, so `σ_il = σ_li` by construction.
#[derive(Debug, Clone)]
pub struct DualGeometry {
    pub edges: Vec<[usize; 2]>,
    pub edge_length: Vec<f64>,
    /// Total interface length `σ(∂V_i ∩ ∂V_l)` per edge.
    pub edge_sigma: Vec<f64>,
    /// `edge_sigma` split by the region of the adjacent triangles.
    pub edge_parts: Vec<SmallVec<[RegionPart; 2]>>,
    /// `|V_i|`
    pub cell_volume: Vec<f64>,
    /// `|V_i|` split by region.
    pub volume_parts: Vec<SmallVec<[RegionPart; 4]>>,
    /// Arc length of `∂V_i ∩ ∂Ω̂` per node.
    pub boundary_measure: Vec<f64>,
    /// The part of `boundary_measure` lying on Neumann edges.
    pub neumann_measure: Vec<f64>,
    /// Edge indices incident to each node, ascending.
    pub node_edges: Vec<Vec<usize>>,
    /// Edges whose circumcentric interface length was negative (clamp mode).
    pub clamped_edges: Vec<usize>,
}

fn add_part<const N: usize>(parts: &mut SmallVec<[RegionPart; N]>, region: usize, measure: f64)
where
    [RegionPart; N]: smallvec::Array<Item = RegionPart>,
{
    match parts.iter_mut().find(|p| p.region == region) {
        Some(p) => p.measure += measure,
        None => {
            parts.push(RegionPart { region, measure });
            parts.sort_by_key(|p| p.region);
        }
    }
}

/// Relative size below which a negative interface length is treated as
/// rounding noise from a right angle.
const SIGMA_NOISE: f64 = 1e-12;

/// Build the Voronoi dual of a validated mesh.
///
/// Each triangle contributes, for every edge, the signed distance from the
/// edge midpoint to its circumcenter, `h·cot(θ)/2` with `θ` the opposite
/// angle, and to each vertex the two kite halves between that vertex, the
/// adjacent edge midpoints and the circumcenter. Boundary cells end at the
/// domain boundary, so each boundary edge gives half its length to each end.
pub fn build_dual(mesh: &Mesh, policy: ObtusePolicy) -> Result<DualGeometry, MeshError> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in mesh.triangles() {
        let [a, b, c] = tri.nodes;
        for (p, q) in [(a, b), (b, c), (c, a)] {
            let key = if p < q { (p, q) } else { (q, p) };
            index.entry(key).or_insert(0);
        }
    }
    let edges: Vec<[usize; 2]> = index.keys().map(|&(a, b)| [a, b]).collect();
    for (k, v) in index.values_mut().enumerate() {
        *v = k;
    }
    let ne = edges.len();
    let dist = |a: usize, b: usize| {
        let (p, q) = (nodes[a], nodes[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    let edge_length: Vec<f64> = edges.iter().map(|&[a, b]| dist(a, b)).collect();
    let mut edge_parts: Vec<SmallVec<[RegionPart; 2]>> = vec![SmallVec::new(); ne];
    let mut volume_parts: Vec<SmallVec<[RegionPart; 4]>> = vec![SmallVec::new(); n];
    let mut triangles_on_edge = vec![0u8; ne];

    // circumcentric (signed) pieces, kept for the Delaunay test in clamp mode
    let mut signed_sigma = vec![0.0; ne];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let [a, b, c] = tri.nodes;
        // (edge endpoints, opposite vertex)
        let local = [(a, b, c), (b, c, a), (c, a, b)];
        let mut sigma_local = [0.0; 3];
        let mut obtuse = false;
        for (k, &(p, q, o)) in local.iter().enumerate() {
            let (po, qo) = (nodes[p], nodes[q]);
            let oo = nodes[o];
            let dot = (po[0] - oo[0]) * (qo[0] - oo[0]) + (po[1] - oo[1]) * (qo[1] - oo[1]);
            let h = dist(p, q);
            sigma_local[k] = h * dot / (4.0 * area);
            obtuse |= sigma_local[k] < -SIGMA_NOISE * h;
        }
        let mut vol_local = [0.0; 3];
        for (k, &(p, q, _)) in local.iter().enumerate() {
            let quarter = 0.25 * dist(p, q) * sigma_local[k];
            vol_local[k] += quarter;
            vol_local[(k + 1) % 3] += quarter;
        }
        for (k, &(p, q, _)) in local.iter().enumerate() {
            let key = if p < q { (p, q) } else { (q, p) };
            signed_sigma[index[&key]] += sigma_local[k];
        }
        if obtuse && policy == ObtusePolicy::Clamp {
            let (vol, sigma) = clipped_pieces([nodes[a], nodes[b], nodes[c]]);
            vol_local = vol;
            sigma_local = sigma;
        }
        for (k, &(p, q, _)) in local.iter().enumerate() {
            let key = if p < q { (p, q) } else { (q, p) };
            let e = index[&key];
            add_part(&mut edge_parts[e], tri.region, sigma_local[k]);
            triangles_on_edge[e] += 1;
            add_part(&mut volume_parts[p], tri.region, vol_local[k]);
        }
    }

    let mut edge_sigma = vec![0.0; ne];
    let mut clamped_edges = Vec::new();
    for e in 0..ne {
        let total: f64 = edge_parts[e].iter().map(|p| p.measure).sum();
        let h = edge_length[e];
        // a boundary edge has a single triangle; its circumcenter must not leave the domain
        let min_part = edge_parts[e].iter().map(|p| p.measure).fold(f64::INFINITY, f64::min);
        let negative = if triangles_on_edge[e] == 1 { min_part } else { total };
        if negative < -SIGMA_NOISE * h {
            // only reachable in reject mode: clipped pieces are never negative
            return Err(MeshError::NonDelaunay { a: edges[e][0], b: edges[e][1], sigma: negative });
        }
        if policy == ObtusePolicy::Clamp && signed_sigma[e] < -SIGMA_NOISE * h {
            clamped_edges.push(e);
        }
        if total < 0.0 {
            // rounding noise only
            for p in edge_parts[e].iter_mut() {
                p.measure = p.measure.max(0.0);
            }
        }
        edge_sigma[e] = edge_parts[e].iter().map(|p| p.measure).sum::<f64>().max(0.0);
    }
    if !clamped_edges.is_empty() {
        log::warn!("clipped the dual at {} non-Delaunay edges", clamped_edges.len());
    }

    let cell_volume: Vec<f64> = volume_parts.iter().map(|ps| ps.iter().map(|p| p.measure).sum()).collect();
    if let Some((node, &volume)) = cell_volume.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(MeshError::EmptyCell { node, volume });
    }

    let mut boundary_measure = vec![0.0; n];
    let mut neumann_measure = vec![0.0; n];
    for be in mesh.boundary_edges() {
        let [a, b] = be.nodes;
        let half = 0.5 * dist(a, b);
        for v in [a, b] {
            boundary_measure[v] += half;
            if be.tag == BoundaryTag::Neumann {
                neumann_measure[v] += half;
            }
        }
    }

    let mut node_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &[a, b]) in edges.iter().enumerate() {
        node_edges[a].push(e);
        node_edges[b].push(e);
    }

    Ok(DualGeometry {
        edges,
        edge_length,
        edge_sigma,
        edge_parts,
        cell_volume,
        volume_parts,
        boundary_measure,
        neumann_measure,
        node_edges,
        clamped_edges,
    })
}

type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Half-plane `{x : n·x ≤ c}`.
#[derive(Clone, Copy)]
struct HalfPlane {
    n: Point,
    c: f64,
}

impl HalfPlane {
    /// Points at least as close to `v` as to `w`.
    fn closer_to(v: Point, w: Point) -> Self {
        let n = sub(w, v);
        let mid = [0.5 * (v[0] + w[0]), 0.5 * (v[1] + w[1])];
        HalfPlane { n, c: dot(n, mid) }
    }

    fn eval(&self, x: Point) -> f64 {
        dot(self.n, x) - self.c
    }
}

fn clip(poly: &[Point], hp: HalfPlane) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (fp, fq) = (hp.eval(p), hp.eval(q));
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let s = fp / (fp - fq);
            out.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[Point]) -> f64 {
    let mut a = 0.0;
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}

/// Voronoi pieces of a triangle's vertices clipped to the triangle itself.
///
/// Returns per-vertex areas and per-local-edge interface lengths, with the
/// local edge `k` joining vertices `k` and `k+1`.
fn clipped_pieces(v: [Point; 3]) -> ([f64; 3], [f64; 3]) {
    let mut vol = [0.0; 3];
    for k in 0..3 {
        let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
        let poly = clip(&clip(&v, HalfPlane::closer_to(v[k], a)), HalfPlane::closer_to(v[k], b));
        vol[k] = polygon_area(&poly).abs();
    }
    let mut sigma = [0.0; 3];
    for k in 0..3 {
        let (p, q, o) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
        // bisector of p,q: mid + t·d
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let pq = sub(q, p);
        let d = [-pq[1], pq[0]];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut constraints = vec![HalfPlane::closer_to(p, o)];
        // triangle interior: same side of each edge as the opposite vertex
        for j in 0..3 {
            let (s, e, opp) = (v[j], v[(j + 1) % 3], v[(j + 2) % 3]);
            let se = sub(e, s);
            let mut n = [se[1], -se[0]];
            if dot(n, sub(opp, s)) > 0.0 {
                n = [-n[0], -n[1]];
            }
            constraints.push(HalfPlane { n, c: dot(n, s) });
        }
        for hp in constraints {
            let nd = dot(hp.n, d);
            let f0 = hp.eval(mid);
            if nd.abs() < 1e-300 {
                if f0 > 0.0 {
                    lo = 1.0;
                    hi = 0.0;
                }
                continue;
            }
            let t = -f0 / nd;
            if nd > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
        }
        sigma[k] = if hi > lo { (hi - lo) * dot(d, d).sqrt() } else { 0.0 };
    }
    (vol, sigma)
}

impl DualGeometry {
    pub fn node_count(&self) -> usize {
        self.cell_volume.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volume.iter().sum()
    }

    /// Edge index joining `a` and `b`, if they are neighbours.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.node_edges[a].iter().copied().find(|&e| self.edges[e] == key)
    }

    /// The node at the other end of edge `e`.
    pub fn other(&self, e: usize, node: usize) -> usize {
        let [a, b] = self.edges[e];
        if a == node {
            b
        } else {
            a
        }
    }
}

//! Triangulations and their Voronoi dual.
//!
//! A [`Mesh`] is a conforming triangulation with region tags on triangles and
//! boundary tags on boundary edges. [`DualGeometry`] holds the control-volume
//! data used by the finite-volume discretization: cell areas `|V_i|`, dual
//! interface lengths `σ_il`, edge lengths and boundary arc measures, all split
//! by material region so that interface cells can be integrated region-wise.

mod dual;
mod parse;

pub use dual::{build_dual, DualGeometry, ObtusePolicy, RegionPart};
pub use parse::load_mesh;

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("triangle {index} references node {node}, but the mesh has {count} nodes")]
    InvalidIndex { index: usize, node: usize, count: usize },
    #[error("triangle {index} is degenerate (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("boundary edge {index} ({a}, {b}) does not lie on exactly one triangle")]
    DanglingBoundaryEdge { index: usize, a: usize, b: usize },
    #[error("boundary edge ({a}, {b}) is listed more than once")]
    DuplicateBoundaryEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) lies on the boundary but carries no boundary tag")]
    UntaggedBoundary { a: usize, b: usize },
    #[error("edge ({a}, {b}) is shared by more than two triangles")]
    NonConforming { a: usize, b: usize },
    #[error("node {node} is not used by any triangle")]
    OrphanNode { node: usize },
    #[error("node {node} touches contacts {first} and {second}")]
    ConflictingContacts { node: usize, first: u32, second: u32 },
    #[error(
        "no Dirichlet contact and no boundary part with positive capacity: the electrostatic problem is singular"
    )]
    Unsolvable,
    #[error("edge ({a}, {b}) has negative dual interface length {sigma:e} (mesh is not Delaunay)")]
    NonDelaunay { a: usize, b: usize, sigma: f64 },
    #[error("node {node} has non-positive control volume {volume:e}")]
    EmptyCell { node: usize, volume: f64 },
    #[error("mesh has no triangles")]
    Empty,
}

/// Tag carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Ohmic or gate contact with Dirichlet data.
    Contact(u32),
    /// Insulating boundary: zero particle flux, Robin data for the potential.
    Neumann,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Contact(id) => write!(f, "contact:{id}"),
            BoundaryTag::Neumann => write!(f, "neumann"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    /// Counter-clockwise after validation.
    pub nodes: [usize; 3],
    /// Index into [`Mesh::region_names`].
    pub region: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// A validated conforming triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    boundary_edges: Vec<BoundaryEdge>,
    region_names: Vec<String>,
}

/// Which sides of a generated rectangle are contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContactLayout {
    pub left: Option<u32>,
    pub right: Option<u32>,
}

impl Default for ContactLayout {
    fn default() -> Self {
        Self { left: Some(0), right: Some(1) }
    }
}

pub(crate) fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Build and validate a mesh. Triangles are reoriented counter-clockwise.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<Triangle>,
        boundary_edges: Vec<BoundaryEdge>,
        region_names: Vec<String>,
    ) -> Result<Self, MeshError> {
        let mut mesh = Mesh { nodes, triangles, boundary_edges, region_names };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&mut self) -> Result<(), MeshError> {
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = self.nodes.len();
        let mut used = vec![false; n];
        for (t, tri) in self.triangles.iter_mut().enumerate() {
            for &v in &tri.nodes {
                if v >= n {
                    return Err(MeshError::InvalidIndex { index: t, node: v, count: n });
                }
                used[v] = true;
            }
            let [a, b, c] = tri.nodes.map(|v| self.nodes[v]);
            let mut area = signed_area(a, b, c);
            let scale = [(a, b), (b, c), (c, a)]
                .iter()
                .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
                .fold(0.0, f64::max);
            if !(area.abs() > 1e-14 * scale) {
                return Err(MeshError::DegenerateTriangle { index: t, area });
            }
            if area < 0.0 {
                tri.nodes.swap(1, 2);
                area = -area;
            }
            debug_assert!(area > 0.0);
        }
        if let Some(node) = used.iter().position(|u| !u) {
            return Err(MeshError::OrphanNode { node });
        }
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &self.triangles {
            let [a, b, c] = tri.nodes;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *edge_count.entry(edge_key(p, q)).or_insert(0) += 1;
            }
        }
        if let Some((&(a, b), _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::NonConforming { a, b });
        }
        let mut tagged: BTreeMap<(usize, usize), ()> = BTreeMap::new();
        for (k, e) in self.boundary_edges.iter().enumerate() {
            let [a, b] = e.nodes;
            if a >= n || b >= n || a == b {
                return Err(MeshError::DanglingBoundaryEdge { index: k, a, b });
            }
            let key = edge_key(a, b);
            if edge_count.get(&key) != Some(&1) {
                return Err(MeshError::DanglingBoundaryEdge { index: k, a, b });
            }
            if tagged.insert(key, ()).is_some() {
                return Err(MeshError::DuplicateBoundaryEdge { a: key.0, b: key.1 });
            }
        }
        if let Some((&(a, b), _)) = edge_count.iter().find(|(k, &c)| c == 1 && !tagged.contains_key(k)) {
            return Err(MeshError::UntaggedBoundary { a, b });
        }
        self.contact_of_nodes()?;
        Ok(())
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.region_names.iter().position(|r| r == name)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].nodes.map(|v| self.nodes[v]);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Contact ids present on the boundary, sorted.
    pub fn contact_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .boundary_edges
            .iter()
            .filter_map(|e| match e.tag {
                BoundaryTag::Contact(id) => Some(id),
                BoundaryTag::Neumann => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn has_neumann(&self) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == BoundaryTag::Neumann)
    }

    /// Contact id per node (`None` for nodes not on any contact).
    pub fn contact_of_nodes(&self) -> Result<Vec<Option<u32>>, MeshError> {
        let mut out: Vec<Option<u32>> = vec![None; self.nodes.len()];
        for e in &self.boundary_edges {
            if let BoundaryTag::Contact(id) = e.tag {
                for &v in &e.nodes {
                    match out[v] {
                        Some(other) if other != id => {
                            return Err(MeshError::ConflictingContacts {
                                node: v,
                                first: other.min(id),
                                second: other.max(id),
                            })
                        }
                        _ => out[v] = Some(id),
                    }
                }
            }
        }
        Ok(out)
    }

    /// The electrostatic problem needs a contact or a capacitive boundary part.
    pub fn check_solvable(&self, robin_capacity: f64) -> Result<(), MeshError> {
        let has_contact = !self.contact_ids().is_empty();
        let has_capacity = robin_capacity > 0.0 && self.has_neumann();
        if has_contact || has_capacity {
            Ok(())
        } else {
            Err(MeshError::Unsolvable)
        }
    }

    /// Reassign triangle regions from their centroids.
    pub fn retag_regions<F>(mut self, names: Vec<String>, region_of: F) -> Self
    where
        F: Fn([f64; 2]) -> usize,
    {
        for tri in &mut self.triangles {
            let [a, b, c] = tri.nodes.map(|v| self.nodes[v]);
            let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            let r = region_of(centroid);
            assert!(r < names.len(), "region index {r} out of range");
            tri.region = r;
        }
        self.region_names = names;
        self
    }

    /// Serialize in the text mesh format understood by [`load_mesh`].
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("vanroos-mesh 1\n");
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let [a, b, c] = t.nodes;
            let _ = writeln!(s, "{a} {b} {c} {}", self.region_names[t.region]);
        }
        let _ = writeln!(s, "bedges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag);
        }
        s
    }
}

/// Structured right-triangle mesh of `[0,lx]×[0,ly]` with `nx×ny` cells.
///
/// Left/right sides become contacts per `layout`, top and bottom are
/// Neumann. All triangles carry the single region `"0"`.
pub fn generate_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64, layout: ContactLayout) -> Mesh {
    assert!(nx >= 1 && ny >= 1, "need at least one cell per axis");
    assert!(lx > 0.0 && ly > 0.0, "rectangle sides must be positive");
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push(Triangle { nodes: [a, b, c], region: 0 });
            triangles.push(Triangle { nodes: [a, c, d], region: 0 });
        }
    }
    let side = |contact: Option<u32>| contact.map_or(BoundaryTag::Neumann, BoundaryTag::Contact);
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], tag: BoundaryTag::Neumann });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { nodes: [id(nx, j), id(nx, j + 1)], tag: side(layout.right) });
    }
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { nodes: [id(i + 1, ny), id(i, ny)], tag: BoundaryTag::Neumann });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { nodes: [id(0, j + 1), id(0, j)], tag: side(layout.left) });
    }
    Mesh::new(nodes, triangles, boundary_edges, vec!["0".to_string()])
        .expect("structured rectangle mesh is always valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_counts() {
        let m = generate_rect_mesh(1, 1, 1.0, 1.0, ContactLayout::default());
        assert_eq!((m.node_count(), m.triangles().len(), m.boundary_edges().len()), (4, 2, 4));
        let m = generate_rect_mesh(2, 2, 1.0, 1.0, ContactLayout::default());
        assert_eq!((m.node_count(), m.triangles().len()), (9, 8));
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(m.contact_ids(), vec![0, 1]);
    }

    #[test]
    fn orientation_is_fixed() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tris = vec![Triangle { nodes: [0, 2, 1], region: 0 }];
        let edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Contact(0) },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Neumann },
            BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Neumann },
        ];
        let m = Mesh::new(nodes, tris, edges, vec!["a".into()]).unwrap();
        assert!(m.triangle_area(0) > 0.0);
    }

    #[test]
    fn untagged_boundary_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tris = vec![Triangle { nodes: [0, 1, 2], region: 0 }];
        let edges = vec![BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Contact(0) }];
        let err = Mesh::new(nodes, tris, edges, vec!["a".into()]).unwrap_err();
        assert!(matches!(err, MeshError::UntaggedBoundary { .. }));
    }

    #[test]
    fn interior_edge_cannot_be_boundary() {
        let m = generate_rect_mesh(1, 1, 1.0, 1.0, ContactLayout::default());
        let mut edges = m.boundary_edges().to_vec();
        edges.push(BoundaryEdge { nodes: [0, 3], tag: BoundaryTag::Neumann });
        let err = Mesh::new(m.nodes().to_vec(), m.triangles().to_vec(), edges, vec!["0".into()]).unwrap_err();
        assert!(matches!(err, MeshError::DanglingBoundaryEdge { .. }), "{err}");
    }

    #[test]
    fn solvability() {
        let m = generate_rect_mesh(2, 2, 1.0, 1.0, ContactLayout { left: None, right: None });
        assert_eq!(m.check_solvable(0.0), Err(MeshError::Unsolvable));
        assert!(m.check_solvable(0.5).is_ok());
    }

    #[test]
    fn node_on_two_contacts() {
        // a single triangle whose corner node is shared by two contacts
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tris = vec![Triangle { nodes: [0, 1, 2], region: 0 }];
        let edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Contact(0) },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Neumann },
            BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Contact(1) },
        ];
        let err = Mesh::new(nodes, tris, edges, vec!["a".into()]).unwrap_err();
        assert_eq!(err, MeshError::ConflictingContacts { node: 0, first: 0, second: 1 });
    }
}

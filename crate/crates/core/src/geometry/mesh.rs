//! Triangle meshes with a bounding volume hierarchy for closest point queries.

use std::collections::HashMap;

use super::{BoundaryFrame, CpResult, Point3, AMBIGUITY_TOL};
use crate::error::{CphmError, Result};

/// Feature of a triangle that holds the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshRegion {
    Face,
    /// Edge `k` joins local vertices `k` and `(k + 1) % 3`.
    Edge(u8),
    Vertex(u8),
}

#[derive(Debug, Clone)]
struct BvhNode {
    min: Point3,
    max: Point3,
    /// Leaf: range into `order`. Interior: `start` is the left child, the
    /// right child is stored right after the left subtree.
    start: u32,
    count: u32,
    right: u32,
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Point3>,
    vertex_normals: Vec<Point3>,
    /// Edges with exactly one incident face, as (v0, v1, face).
    boundary_edges: Vec<(usize, usize, usize)>,
    boundary_loops: Vec<Vec<usize>>,
    is_boundary_edge: HashMap<(usize, usize), bool>,
    is_boundary_vertex: Vec<bool>,
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    scale: f64,
    /// Blend vertex normals barycentrically instead of using the face normal.
    pub smooth_normals: bool,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(CphmError::Geometry("mesh has no faces".into()));
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(CphmError::Geometry("mesh has non-finite vertices".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(CphmError::Geometry(format!(
                    "face {fi} references a vertex out of range"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(CphmError::Geometry(format!("face {fi} repeats a vertex")));
            }
        }

        let mut face_normals = Vec::with_capacity(faces.len());
        let mut vertex_normals = vec![Point3::zeros(); vertices.len()];
        for f in &faces {
            let [a, b, c] = f.map(|i| vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &v in f {
                vertex_normals[v] += n;
            }
            let len = n.norm();
            face_normals.push(if len > 0.0 { n / len } else { Point3::zeros() });
        }
        for n in &mut vertex_normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }

        let mut edge_faces: HashMap<(usize, usize), (usize, usize, usize, u32)> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_faces
                    .entry(edge_key(a, b))
                    .and_modify(|e| e.3 += 1)
                    .or_insert((a, b, fi, 1));
            }
        }
        let mut boundary_edges: Vec<_> = edge_faces
            .values()
            .filter(|e| e.3 == 1)
            .map(|&(a, b, f, _)| (a, b, f))
            .collect();
        boundary_edges.sort_unstable();
        let is_boundary_edge = edge_faces
            .iter()
            .map(|(&k, e)| (k, e.3 == 1))
            .collect();
        let mut is_boundary_vertex = vec![false; vertices.len()];
        for &(a, b, _) in &boundary_edges {
            is_boundary_vertex[a] = true;
            is_boundary_vertex[b] = true;
        }
        let boundary_loops = chain_loops(&boundary_edges);

        let (lo, hi) = bounds(vertices.iter());
        let scale = (hi - lo).norm().max(f64::MIN_POSITIVE);

        let mut mesh = TriangleMesh {
            vertices,
            faces,
            face_normals,
            vertex_normals,
            boundary_edges,
            boundary_loops,
            is_boundary_edge,
            is_boundary_vertex,
            nodes: Vec::new(),
            order: Vec::new(),
            scale,
            smooth_normals: false,
        };
        mesh.build_bvh();
        Ok(mesh)
    }

    /// Geodesic polyhedron obtained by subdividing an icosahedron `level`
    /// times and projecting onto the sphere.
    pub fn icosphere(center: Point3, radius: f64, level: usize) -> Result<Self> {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Point3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Point3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| {
                *mid.entry(edge_key(a, b)).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let verts = verts.into_iter().map(|v| center + v * radius).collect();
        TriangleMesh::new(verts, faces)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_open(&self) -> bool {
        !self.boundary_edges.is_empty()
    }

    /// Boundary curves as closed vertex cycles.
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    /// Number of edges with a single incident face.
    pub fn boundary_edge_count(&self) -> usize {
        self.boundary_edges.len()
    }

    /// Uniformly rescale all vertices about the origin.
    pub fn rescale(&mut self, factor: f64) {
        for v in &mut self.vertices {
            *v *= factor;
        }
        self.scale *= factor.abs();
        self.build_bvh();
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        bounds(self.vertices.iter())
    }

    pub fn triangle(&self, f: usize) -> [Point3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    fn build_bvh(&mut self) {
        let centroids: Vec<Point3> = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (a + b + c) / 3.0
            })
            .collect();
        let mut order: Vec<u32> = (0..self.faces.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * self.faces.len() / LEAF_SIZE + 1);
        self.build_node(&mut nodes, &mut order, 0, &centroids);
        self.nodes = nodes;
        self.order = order;
    }

    fn build_node(
        &self,
        nodes: &mut Vec<BvhNode>,
        order: &mut [u32],
        offset: usize,
        centroids: &[Point3],
    ) -> usize {
        let (min, max) = bounds(order.iter().flat_map(|&f| {
            let f = self.faces[f as usize];
            f.map(|v| &self.vertices[v])
        }));
        let id = nodes.len();
        nodes.push(BvhNode {
            min,
            max,
            start: offset as u32,
            count: order.len() as u32,
            right: 0,
        });
        if order.len() <= LEAF_SIZE {
            return id;
        }
        let extent = max - min;
        let axis = extent.imax();
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let (left, right) = order.split_at_mut(mid);
        let l = self.build_node(nodes, left, offset, centroids);
        let r = self.build_node(nodes, right, offset + mid, centroids);
        nodes[id].start = l as u32;
        nodes[id].count = 0;
        nodes[id].right = r as u32;
        id
    }

    /// Candidates whose squared distance is within the tie tolerance of the
    /// best one; the best comes first.
    fn nearest(&self, x: &Point3) -> Vec<(f64, Point3, usize, MeshRegion)> {
        let tie = |best: f64| best * (1.0 + 4.0 * AMBIGUITY_TOL) + (1e-15 * self.scale).powi(2);
        let mut best = f64::INFINITY;
        let mut found: Vec<(f64, Point3, usize, MeshRegion)> = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_dist2(x, &node.min, &node.max) > tie(best) {
                continue;
            }
            if node.count > 0 {
                let range = node.start as usize..(node.start + node.count) as usize;
                for &f in &self.order[range] {
                    let [a, b, c] = self.triangle(f as usize);
                    let (cp, region) = closest_on_triangle(x, &a, &b, &c);
                    let d2 = (x - cp).norm_squared();
                    if d2 <= tie(best) {
                        best = best.min(d2);
                        found.push((d2, cp, f as usize, region));
                    }
                }
            } else {
                let (l, r) = (node.start as usize, node.right as usize);
                let dl = box_dist2(x, &self.nodes[l].min, &self.nodes[l].max);
                let dr = box_dist2(x, &self.nodes[r].min, &self.nodes[r].max);
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        let limit = tie(best);
        found.retain(|c| c.0 <= limit);
        // deterministic: smallest distance, then smallest face index
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        found
    }

    pub(crate) fn distance(&self, x: &Point3) -> f64 {
        self.nearest(x).first().map_or(f64::INFINITY, |c| c.0.sqrt())
    }

    pub(crate) fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        let found = self.nearest(x);
        let (d2, cp, face, region) = found[0];
        let sep = 10.0 * f64::EPSILON * self.scale;
        // A rival closer to cp than sqrt(d2' - d2) is the same minimizer seen
        // from a neighbouring triangle.
        let distinct = |c: &(f64, Point3, usize, MeshRegion)| {
            let s2 = (c.1 - cp).norm_squared();
            s2.sqrt() > sep.max(1e-12 * self.scale) && s2 > 4.0 * (c.0 - d2)
        };
        if let Some(rival) = found[1..].iter().find(|c| distinct(c)) {
            return Err(CphmError::Ambiguous {
                point: *x,
                first: cp.into(),
                second: rival.1.into(),
            });
        }
        let f = self.faces[face];
        let on_boundary = match region {
            MeshRegion::Face => false,
            MeshRegion::Edge(k) => {
                let k = k as usize;
                self.is_boundary_edge[&edge_key(f[k], f[(k + 1) % 3])]
            }
            MeshRegion::Vertex(k) => self.is_boundary_vertex[f[k as usize]],
        };
        let normal = if self.smooth_normals {
            let [a, b, c] = self.triangle(face);
            let w = barycentric(&cp, &a, &b, &c);
            let n = self.vertex_normals[f[0]] * w[0]
                + self.vertex_normals[f[1]] * w[1]
                + self.vertex_normals[f[2]] * w[2];
            n.normalize()
        } else {
            self.face_normals[face]
        };
        if !normal.iter().all(|c| c.is_finite()) || normal.norm() < 0.5 {
            return Err(CphmError::Geometry(format!(
                "degenerate normal on face {face}"
            )));
        }
        Ok(CpResult {
            cp,
            dist: d2.sqrt(),
            on_boundary,
            normal,
        })
    }

    pub(crate) fn boundary_frame(&self, y: &Point3) -> Result<BoundaryFrame> {
        let mut best: Option<(f64, usize)> = None;
        for (i, &(a, b, _)) in self.boundary_edges.iter().enumerate() {
            let d = segment_dist(y, &self.vertices[a], &self.vertices[b]);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let Some((d, i)) = best else {
            return Err(CphmError::Geometry("mesh has no boundary".into()));
        };
        if d > 1e-9 * self.scale {
            return Err(CphmError::Geometry(format!(
                "point ({:.6}, {:.6}, {:.6}) is {d:.3e} away from the mesh boundary",
                y.x, y.y, y.z
            )));
        }
        let (a, b, face) = self.boundary_edges[i];
        let normal = self.face_normals[face];
        let mut tangent = (self.vertices[b] - self.vertices[a]).normalize();
        let mut conormal = tangent.cross(&normal);
        let [p, q, r] = self.triangle(face);
        let centroid = (p + q + r) / 3.0;
        if conormal.dot(&(centroid - y)) > 0.0 {
            tangent = -tangent;
            conormal = -conormal;
        }
        Ok(BoundaryFrame {
            tangent,
            normal,
            conormal,
        })
    }
}

fn chain_loops(edges: &[(usize, usize, usize)]) -> Vec<Vec<usize>> {
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(a, b, _) in edges {
        next.insert(a, b);
    }
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = std::collections::HashSet::new();
    let mut loops = Vec::new();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut lp = vec![s];
        seen.insert(s);
        let mut cur = s;
        while let Some(&n) = next.get(&cur) {
            if n == s || !seen.insert(n) {
                break;
            }
            lp.push(n);
            cur = n;
        }
        loops.push(lp);
    }
    loops
}

fn bounds<'a>(pts: impl Iterator<Item = &'a Point3>) -> (Point3, Point3) {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn box_dist2(x: &Point3, min: &Point3, max: &Point3) -> f64 {
    (0..3)
        .map(|k| {
            let d = (min[k] - x[k]).max(0.0).max(x[k] - max[k]);
            d * d
        })
        .sum()
}

fn segment_dist(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn barycentric(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> [f64; 3] {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}

/// Closest point on triangle `abc` by Voronoi region classification.
pub(crate) fn closest_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> (Point3, MeshRegion) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, MeshRegion::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, MeshRegion::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, MeshRegion::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, MeshRegion::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, MeshRegion::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, MeshRegion::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, MeshRegion::Face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn square() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn triangle_regions() {
        let (a, b, c) = (Point3::zeros(), Point3::x(), Point3::y());
        let (cp, r) = closest_on_triangle(&Point3::new(0.2, 0.2, 1.0), &a, &b, &c);
        assert_eq!(r, MeshRegion::Face);
        assert_abs_diff_eq!(cp, Point3::new(0.2, 0.2, 0.0), epsilon = 1e-15);
        let (cp, r) = closest_on_triangle(&Point3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert_eq!(r, MeshRegion::Vertex(0));
        assert_abs_diff_eq!(cp, a);
        let (cp, r) = closest_on_triangle(&Point3::new(0.5, -1.0, 0.3), &a, &b, &c);
        assert_eq!(r, MeshRegion::Edge(0));
        assert_abs_diff_eq!(cp, Point3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        let (cp, r) = closest_on_triangle(&Point3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert_eq!(r, MeshRegion::Edge(1));
        assert_abs_diff_eq!(cp, Point3::new(0.5, 0.5, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn ties_only_across_the_medial_axis() {
        let mut v: Vec<Point3> = square().vertices().to_vec();
        v.extend(square().vertices().iter().map(|p| p + Point3::z()));
        let slab = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3], [4, 6, 5], [4, 7, 6]]).unwrap();
        let err = slab.closest_point(&Point3::new(0.4, 0.3, 0.5)).unwrap_err();
        assert!(matches!(err, CphmError::Ambiguous { .. }), "{err}");

        let ico = TriangleMesh::icosphere(Point3::zeros(), 1.0, 3).unwrap();
        for i in 0..400 {
            let z = -1.0 + (2 * i + 1) as f64 / 400.0;
            let t = i as f64 * 2.399963229728653;
            let r = (1.0 - z * z).sqrt();
            let x = Point3::new(r * t.cos(), r * t.sin(), z) * 1.5;
            ico.closest_point(&x).unwrap();
        }
        for p in ico.vertices() {
            ico.closest_point(&(p * 1.5)).unwrap();
        }
    }

    #[test]
    fn square_boundary() {
        let m = square();
        assert!(m.is_open());
        assert_eq!(m.boundary_edge_count(), 4);
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 4);
        let c = m.closest_point(&Point3::new(0.5, -0.2, 0.1)).unwrap();
        assert!(c.on_boundary);
        assert_abs_diff_eq!(c.cp, Point3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        let c = m.closest_point(&Point3::new(0.3, 0.6, 0.1)).unwrap();
        assert!(!c.on_boundary);
        let f = m.boundary_frame(&Point3::new(0.5, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.conormal, -Point3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.tangent.cross(&f.normal), f.conormal, epsilon = 1e-15);
        assert!(m.boundary_frame(&Point3::new(0.5, 0.5, 0.0)).is_err());
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = TriangleMesh::icosphere(Point3::zeros(), 1.0, 3).unwrap();
        assert!(!m.is_open());
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..200 {
            let x = Point3::new(rnd(), rnd(), rnd()) * 1.4;
            let fast = m.distance(&x);
            let slow = (0..m.faces().len())
                .map(|f| {
                    let [a, b, c] = m.triangle(f);
                    (x - closest_on_triangle(&x, &a, &b, &c).0).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Point3::zeros(), Point3::x(), Point3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriangleMesh::new(v, vec![]).is_err());
    }
}

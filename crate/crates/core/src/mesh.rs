//! Voxel hexahedral mesh of an axis-aligned box and its boundary patches.
//!
//! Nodes and elements are numbered lexicographically with x fastest, then y,
//! then z. Local node order inside a hexahedron follows the usual trilinear
//! convention: the bottom face (z-) counter-clockwise, then the top face.

use crate::error::{Error, Result};

/// Reference coordinates of the 8 local nodes.
pub const LOCAL_NODES: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Local nodes on each local face, indexed like [`CubeFace::index`].
pub const LOCAL_FACE_NODES: [[usize; 4]; 6] = [
    [1, 2, 6, 5], // +x
    [0, 3, 7, 4], // -x
    [3, 2, 6, 7], // +y
    [0, 1, 5, 4], // -y
    [4, 5, 6, 7], // +z
    [0, 1, 2, 3], // -z
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Self::new([lo; 3], [hi; 3])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|a| !(self.max[a] > self.min[a]) || !self.min[a].is_finite() || !self.max[a].is_finite())
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| 0.5 * (self.min[a] + self.max[a]))
    }
}

/// One of the six faces of the computational cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CubeFace {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::PosX,
        CubeFace::NegX,
        CubeFace::PosY,
        CubeFace::NegY,
        CubeFace::PosZ,
        CubeFace::NegZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn is_positive(self) -> bool {
        self.index() % 2 == 0
    }

    /// The two in-plane axes, lower axis index first. Boundary faces and
    /// patches on this cube face are ordered lexicographically in these axes.
    pub fn in_plane_axes(self) -> [usize; 2] {
        match self.axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    /// Right-handed frame `(t1, t2, normal)` with outward normal.
    pub fn frame(self) -> TangentFrame {
        let e = |a: usize, s: f64| {
            let mut v = [0.0; 3];
            v[a] = s;
            v
        };
        let (t1, t2, nrm) = match self {
            CubeFace::PosX => (e(1, 1.0), e(2, 1.0), e(0, 1.0)),
            CubeFace::NegX => (e(2, 1.0), e(1, 1.0), e(0, -1.0)),
            CubeFace::PosY => (e(2, 1.0), e(0, 1.0), e(1, 1.0)),
            CubeFace::NegY => (e(0, 1.0), e(2, 1.0), e(1, -1.0)),
            CubeFace::PosZ => (e(0, 1.0), e(1, 1.0), e(2, 1.0)),
            CubeFace::NegZ => (e(1, 1.0), e(0, 1.0), e(2, -1.0)),
        };
        TangentFrame { t1, t2, normal: nrm }
    }

    pub fn name(self) -> &'static str {
        match self {
            CubeFace::PosX => "+x",
            CubeFace::NegX => "-x",
            CubeFace::PosY => "+y",
            CubeFace::NegY => "-y",
            CubeFace::PosZ => "+z",
            CubeFace::NegZ => "-z",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub t1: [f64; 3],
    pub t2: [f64; 3],
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub element: usize,
    /// Local face id, same numbering as [`CubeFace::index`].
    pub local_face: usize,
    pub face: CubeFace,
    /// Cell position within the cube face along its two in-plane axes.
    pub cell: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub bounds: Aabb,
    pub n: usize,
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
    pub boundary_faces: Vec<BoundaryFace>,
}

/// Builds the `n × n × n` voxel mesh of `bounds`.
///
/// The box must be a cube for the elements to be geometrically identical
/// cubes; non-cubic boxes are rejected as degenerate.
pub fn build_cube_mesh(bounds: Aabb, n: usize) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::TooFewElements(n));
    }
    if bounds.is_degenerate() {
        return Err(Error::DegenerateBounds);
    }
    let side = bounds.extent(0);
    if (1..3).any(|a| (bounds.extent(a) - side).abs() > 1e-12 * side) {
        return Err(Error::DegenerateBounds);
    }
    let h = side / n as f64;
    let np = n + 1;
    let mut nodes = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                nodes.push([
                    bounds.min[0] + i as f64 * h,
                    bounds.min[1] + j as f64 * h,
                    bounds.min[2] + k as f64 * h,
                ]);
            }
        }
    }
    let node = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let mut elements = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let mut conn = [0usize; 8];
                for (l, r) in LOCAL_NODES.iter().enumerate() {
                    let di = (r[0] > 0.0) as usize;
                    let dj = (r[1] > 0.0) as usize;
                    let dk = (r[2] > 0.0) as usize;
                    conn[l] = node(i + di, j + dj, k + dk);
                }
                elements.push(conn);
            }
        }
    }
    let elem = |c: [usize; 3]| c[0] + n * (c[1] + n * c[2]);
    let mut boundary_faces = Vec::with_capacity(6 * n * n);
    for face in CubeFace::ALL {
        let axis = face.axis();
        let [pa, pb] = face.in_plane_axes();
        let layer = if face.is_positive() { n - 1 } else { 0 };
        for b in 0..n {
            for a in 0..n {
                let mut c = [0usize; 3];
                c[axis] = layer;
                c[pa] = a;
                c[pb] = b;
                boundary_faces.push(BoundaryFace {
                    element: elem(c),
                    local_face: face.index(),
                    face,
                    cell: [a, b],
                });
            }
        }
    }
    Ok(Mesh {
        bounds,
        n,
        nodes,
        elements,
        boundary_faces,
    })
}

impl Mesh {
    pub fn h(&self) -> f64 {
        self.bounds.extent(0) / self.n as f64
    }

    pub fn element_volume(&self) -> f64 {
        self.h().powi(3)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn element_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n * (c[1] + self.n * c[2])
    }

    pub fn element_coords(&self, e: usize) -> [usize; 3] {
        let n = self.n;
        [e % n, (e / n) % n, e / (n * n)]
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 3] {
        let c = self.element_coords(e);
        let h = self.h();
        [0, 1, 2].map(|a| self.bounds.min[a] + (c[a] as f64 + 0.5) * h)
    }

    /// Global node ids on a boundary face, in local face order.
    pub fn face_nodes(&self, bf: &BoundaryFace) -> [usize; 4] {
        LOCAL_FACE_NODES[bf.local_face].map(|l| self.elements[bf.element][l])
    }

    /// Nodes lying on the given cube face.
    pub fn nodes_on_face(&self, face: CubeFace) -> Vec<usize> {
        let axis = face.axis();
        let target = if face.is_positive() {
            self.bounds.max[axis]
        } else {
            self.bounds.min[axis]
        };
        let tol = 1e-9 * self.h();
        (0..self.nodes.len())
            .filter(|&i| (self.nodes[i][axis] - target).abs() <= tol)
            .collect()
    }
}

/// A partition of each cube face into `m × m` patches.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patches_per_side: usize,
    pub patches: Vec<Patch>,
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub face: CubeFace,
    /// Indices into [`Mesh::boundary_faces`].
    pub faces: Vec<usize>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Splits every cube face into `m × m` patches of `(n/m)²` boundary faces.
///
/// Patch order: cube faces +x, -x, +y, -y, +z, -z; within a face,
/// lexicographic in the in-plane axes with the lower axis fastest.
pub fn build_patches(mesh: &Mesh, m: usize) -> Result<PatchSet> {
    if m == 0 || mesh.n % m != 0 {
        return Err(Error::PatchMismatch { n: mesh.n, m });
    }
    let w = mesh.n / m;
    let mut patches: Vec<Patch> = CubeFace::ALL
        .iter()
        .flat_map(|&face| {
            (0..m * m).map(move |_| Patch {
                face,
                faces: Vec::with_capacity(w * w),
            })
        })
        .collect();
    for (idx, bf) in mesh.boundary_faces.iter().enumerate() {
        let pa = bf.cell[0] / w;
        let pb = bf.cell[1] / w;
        patches[bf.face.index() * m * m + pa + m * pb].faces.push(idx);
    }
    Ok(PatchSet {
        patches_per_side: m,
        patches,
    })
}

/// Elements whose centroid lies in the closed box `region`.
pub fn voxel_box_elements(mesh: &Mesh, region: &Aabb) -> Vec<usize> {
    (0..mesh.num_elements())
        .filter(|&e| region.contains(mesh.element_centroid(e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Aabb {
        Aabb::cube(-1.0, 1.0)
    }

    #[test]
    fn counts_for_small_meshes() {
        let m = build_cube_mesh(unit(), 2).unwrap();
        assert_eq!(m.num_elements(), 8);
        assert_eq!(m.num_nodes(), 27);
        assert_eq!(m.boundary_faces.len(), 24);

        let m = build_cube_mesh(unit(), 10).unwrap();
        assert_eq!(m.num_elements(), 1000);
        assert_eq!(m.boundary_faces.len(), 600);

        let m = build_cube_mesh(Aabb::cube(0.0, 1.0), 4).unwrap();
        assert_eq!(m.h(), 0.25);
        assert!((m.element_volume() - 0.25f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_cube_mesh(unit(), 1), Err(Error::TooFewElements(1))));
        assert!(matches!(
            build_cube_mesh(Aabb::new([0.0; 3], [1.0, 0.0, 1.0]), 4),
            Err(Error::DegenerateBounds)
        ));
        assert!(matches!(
            build_cube_mesh(Aabb::new([0.0; 3], [1.0, 2.0, 1.0]), 4),
            Err(Error::DegenerateBounds)
        ));
    }

    #[test]
    fn elements_are_axis_aligned_cubes() {
        let m = build_cube_mesh(unit(), 3).unwrap();
        let h = m.h();
        for conn in &m.elements {
            let p0 = m.nodes[conn[0]];
            for (l, r) in LOCAL_NODES.iter().enumerate() {
                let p = m.nodes[conn[l]];
                for a in 0..3 {
                    let expect = p0[a] + if r[a] > 0.0 { h } else { 0.0 };
                    assert!((p[a] - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn boundary_faces_lie_on_their_cube_face() {
        let m = build_cube_mesh(unit(), 3).unwrap();
        for bf in &m.boundary_faces {
            let axis = bf.face.axis();
            let target = if bf.face.is_positive() { 1.0 } else { -1.0 };
            for nd in m.face_nodes(bf) {
                assert!((m.nodes[nd][axis] - target).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn frames_are_right_handed_orthonormal() {
        for f in CubeFace::ALL {
            let fr = f.frame();
            let c = [
                fr.t1[1] * fr.t2[2] - fr.t1[2] * fr.t2[1],
                fr.t1[2] * fr.t2[0] - fr.t1[0] * fr.t2[2],
                fr.t1[0] * fr.t2[1] - fr.t1[1] * fr.t2[0],
            ];
            assert_eq!(c, fr.normal, "{}", f.name());
            let mut out = [0.0; 3];
            out[f.axis()] = if f.is_positive() { 1.0 } else { -1.0 };
            assert_eq!(fr.normal, out);
        }
    }

    #[test]
    fn patch_counts() {
        let m = build_cube_mesh(unit(), 10).unwrap();
        let p = build_patches(&m, 10).unwrap();
        assert_eq!(p.len(), 600);
        assert!(p.patches.iter().all(|q| q.faces.len() == 1));
        let p = build_patches(&m, 5).unwrap();
        assert_eq!(p.len(), 150);
        assert!(p.patches.iter().all(|q| q.faces.len() == 4));

        let m = build_cube_mesh(unit(), 4).unwrap();
        assert!(matches!(build_patches(&m, 3), Err(Error::PatchMismatch { n: 4, m: 3 })));
    }

    #[test]
    fn patches_tile_boundary() {
        let m = build_cube_mesh(unit(), 6).unwrap();
        let p = build_patches(&m, 3).unwrap();
        let mut seen = vec![0u32; m.boundary_faces.len()];
        for q in &p.patches {
            for &f in &q.faces {
                assert_eq!(m.boundary_faces[f].face, q.face);
                seen[f] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn box_selection() {
        let m = build_cube_mesh(unit(), 4).unwrap();
        assert_eq!(voxel_box_elements(&m, &unit()).len(), 64);
        assert!(voxel_box_elements(&m, &Aabb::cube(2.0, 3.0)).is_empty());
        let oct = Aabb::new([0.0; 3], [1.0; 3]);
        assert_eq!(voxel_box_elements(&m, &oct).len(), 8);
    }

    #[test]
    fn refinement_nests_aligned_boxes() {
        let region = Aabb::new([-0.5, 0.0, -1.0], [0.5, 1.0, 0.0]);
        let coarse = build_cube_mesh(unit(), 4).unwrap();
        let fine = build_cube_mesh(unit(), 8).unwrap();
        let vc = voxel_box_elements(&coarse, &region).len() as f64 * coarse.element_volume();
        let vf = voxel_box_elements(&fine, &region).len() as f64 * fine.element_volume();
        assert!((vc - vf).abs() < 1e-12);
        assert!((vc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let a = build_cube_mesh(unit(), 5).unwrap();
        let b = build_cube_mesh(unit(), 5).unwrap();
        assert_eq!(a.elements, b.elements);
        assert_eq!(a.boundary_faces, b.boundary_faces);
        assert_eq!(
            a.nodes.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.nodes.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

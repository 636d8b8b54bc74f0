use crate::mesh::{TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn of_face(mesh: &TriMesh, f: usize) -> Self {
        let mut b = Self::empty();
        for p in mesh.face_corners(f) {
            b.grow(&p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    /// Closed-box overlap, so touching boxes count.
    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.max[a] && o.min[a] <= self.max[a])
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.min[a] && o.max[a] <= self.max[a])
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, faces: Vec<usize> },
    Inner { bounds: Aabb, left: usize, right: usize },
}

/// Bounding-volume hierarchy over face boxes, split at the median centroid
/// along the widest axis.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    boxes: Vec<Aabb>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let boxes: Vec<Aabb> = (0..mesh.face_count()).map(|f| Aabb::of_face(mesh, f)).collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut nodes = Vec::new();
        let mut ids: Vec<usize> = (0..boxes.len()).collect();
        if !ids.is_empty() {
            Self::build_node(&mut nodes, &boxes, &centers, &mut ids);
        }
        Bvh { nodes, boxes }
    }

    fn build_node(nodes: &mut Vec<Node>, boxes: &[Aabb], centers: &[Vec3], ids: &mut [usize]) -> usize {
        let bounds = ids.iter().fold(Aabb::empty(), |b, &i| b.merge(&boxes[i]));
        if ids.len() <= LEAF_SIZE {
            nodes.push(Node::Leaf {
                bounds,
                faces: ids.to_vec(),
            });
            return nodes.len() - 1;
        }
        let mut cb = Aabb::empty();
        for &i in ids.iter() {
            cb.grow(&centers[i]);
        }
        let ext = cb.max - cb.min;
        let axis = ext.imax();
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            centers[a][axis]
                .total_cmp(&centers[b][axis])
                .then(a.cmp(&b))
        });
        let slot = nodes.len();
        nodes.push(Node::Leaf {
            bounds,
            faces: Vec::new(),
        });
        let (lo, hi) = ids.split_at_mut(mid);
        let left = Self::build_node(nodes, boxes, centers, lo);
        let right = Self::build_node(nodes, boxes, centers, hi);
        nodes[slot] = Node::Inner { bounds, left, right };
        slot
    }

    fn bounds(&self, n: usize) -> &Aabb {
        match &self.nodes[n] {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }

    /// Calls `visit` with every face whose box overlaps `query`.
    pub fn query(&self, query: &Aabb, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            if !self.bounds(n).overlaps(query) {
                continue;
            }
            match &self.nodes[n] {
                Node::Leaf { faces, .. } => faces
                    .iter()
                    .filter(|&&f| self.boxes[f].overlaps(query))
                    .for_each(|&f| visit(f)),
                Node::Inner { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
    }

    /// Every face appears in exactly one leaf and child boxes nest in their
    /// parents.
    pub fn check_invariants(&self, face_count: usize) -> bool {
        let mut seen = vec![0usize; face_count];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { faces, .. } => {
                    for &f in faces {
                        if f >= face_count {
                            return false;
                        }
                        seen[f] += 1;
                    }
                }
                Node::Inner { bounds, left, right } => {
                    if *left <= i || *right <= i {
                        return false;
                    }
                    if !bounds.contains(self.bounds(*left)) || !bounds.contains(self.bounds(*right)) {
                        return false;
                    }
                }
            }
        }
        seen.iter().all(|&c| c == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn structure_invariants() {
        for mesh in [primitives::icosphere(1.0, 3), primitives::grid(7, 3, 1.0, 1.0), primitives::cube(1.0)] {
            let bvh = Bvh::build(&mesh);
            assert!(bvh.check_invariants(mesh.face_count()), "{}", mesh.name);
        }
    }

    #[test]
    fn query_matches_linear_scan() {
        let mesh = primitives::icosphere(1.0, 2);
        let bvh = Bvh::build(&mesh);
        for f in (0..mesh.face_count()).step_by(17) {
            let q = Aabb::of_face(&mesh, f);
            let mut got = Vec::new();
            bvh.query(&q, |g| got.push(g));
            got.sort_unstable();
            let expect: Vec<usize> = (0..mesh.face_count())
                .filter(|&g| Aabb::of_face(&mesh, g).overlaps(&q))
                .collect();
            assert_eq!(got, expect);
        }
    }
}

use super::{JointId, NUM_JOINTS};
use JointId::*;

/// The 14 bones of the anatomical tree.
pub const EDGES: [(JointId, JointId); 14] = [
    (Head, Neck),
    (Neck, RightShoulder),
    (Neck, LeftShoulder),
    (RightShoulder, RightElbow),
    (RightElbow, RightWrist),
    (LeftShoulder, LeftElbow),
    (LeftElbow, LeftWrist),
    (Neck, Torso),
    (Torso, RightHip),
    (Torso, LeftHip),
    (RightHip, RightKnee),
    (RightKnee, RightAnkle),
    (LeftHip, LeftKnee),
    (LeftKnee, LeftAnkle),
];

/// Joint topology plus the symmetric-normalized adjacency D^-1/2 (A + I) D^-1/2.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    pub edges: Vec<(JointId, JointId)>,
    pub adjacency: [[f64; NUM_JOINTS]; NUM_JOINTS],
}

impl SkeletonGraph {
    /// Adjacency flattened row-major as 32-bit floats.
    pub fn adjacency_f32(&self) -> Vec<f32> {
        self.adjacency.iter().flatten().map(|&v| v as f32).collect()
    }

    pub fn adjacency_flat<T: num_traits::Float>(&self) -> Vec<T> {
        self.adjacency
            .iter()
            .flatten()
            .map(|&v| T::from(v).unwrap())
            .collect()
    }

    pub fn neighbours(&self, joint: JointId) -> Vec<JointId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match () {
                _ if a == joint => Some(b),
                _ if b == joint => Some(a),
                _ => None,
            })
            .collect()
    }
}

pub fn build_adjacency() -> SkeletonGraph {
    let mut a = [[0.0f64; NUM_JOINTS]; NUM_JOINTS];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(p, q) in EDGES.iter() {
        a[p.index()][q.index()] = 1.0;
        a[q.index()][p.index()] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = a
        .iter()
        .map(|row| 1.0 / row.iter().sum::<f64>().sqrt())
        .collect();
    let mut adjacency = [[0.0f64; NUM_JOINTS]; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        for j in 0..NUM_JOINTS {
            adjacency[i][j] = inv_sqrt_deg[i] * a[i][j] * inv_sqrt_deg[j];
        }
    }
    SkeletonGraph {
        edges: EDGES.to_vec(),
        adjacency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourteen_edges_form_a_tree() {
        let g = build_adjacency();
        assert_eq!(g.edges.len(), 14);
        // connected: BFS from head reaches all 15 joints
        let mut seen = vec![JointId::Head];
        let mut i = 0;
        while i < seen.len() {
            for n in g.neighbours(seen[i]) {
                if !seen.contains(&n) {
                    seen.push(n);
                }
            }
            i += 1;
        }
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn head_row_only_touches_head_and_neck() {
        let g = build_adjacency();
        let row = g.adjacency[JointId::Head.index()];
        for (j, &v) in row.iter().enumerate() {
            let expected_nonzero = j == JointId::Head.index() || j == JointId::Neck.index();
            assert_eq!(v != 0.0, expected_nonzero, "column {j}");
        }
        // head degree 2 (self + neck), neck degree 5 (self + head, shoulders, torso)
        assert!((row[0] - 0.5).abs() < 1e-15);
        assert!((row[1] - 1.0 / (2.0f64 * 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_positive_rows_and_trace() {
        let g = build_adjacency();
        let mut trace = 0.0;
        for i in 0..NUM_JOINTS {
            trace += g.adjacency[i][i];
            assert!(g.adjacency[i].iter().sum::<f64>() > 0.0);
            for j in 0..NUM_JOINTS {
                assert_eq!(g.adjacency[i][j], g.adjacency[j][i]);
            }
        }
        assert!(trace > 0.0);
    }

    #[test]
    fn deterministic_bit_exact() {
        let a = build_adjacency();
        let b = build_adjacency();
        let bits = |g: &SkeletonGraph| -> Vec<u64> {
            g.adjacency.iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}

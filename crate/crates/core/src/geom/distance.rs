use serde::{Deserialize, Serialize};

use super::{CuboidModel, Pose};

/// Symmetry-aware average distance between two poses of the same cuboid.
///
/// Minimum over the model's symmetry group of the mean distance between the
/// surface samples placed by `p1` and by `p2 ∘ S`. Poses that make the box
/// occupy the same volume are at distance zero.
pub fn pose_distance_symmetric(model: &CuboidModel, p1: &Pose, p2: &Pose) -> f64 {
    let samples = model.samples();
    debug_assert!(samples.len() >= 8);
    let placed: Vec<_> = samples.iter().map(|s| p1.transform_point(&s.point)).collect();
    let n = samples.len() as f64;
    let mut best = f64::INFINITY;
    for sym in model.symmetry_group() {
        let other = Pose::new(p2.position, p2.orientation * sym);
        let mut sum = 0.0;
        for (s, a) in samples.iter().zip(&placed) {
            sum += (a - other.transform_point(&s.point)).norm();
            if sum / n >= best {
                break;
            }
        }
        best = best.min(sum / n);
    }
    best
}

/// Target poses the placed objects must reach, within `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrangement {
    pub targets: Vec<Pose>,
    /// Labeled arrangements fix the object-to-target assignment by index.
    pub labeled: bool,
    pub epsilon: f64,
}

impl Arrangement {
    pub fn unlabeled(targets: Vec<Pose>, epsilon: f64) -> Self {
        Self {
            targets,
            labeled: false,
            epsilon,
        }
    }

    /// Smallest planar/3D separation between two targets.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.targets.iter().enumerate() {
            for b in &self.targets[i + 1..] {
                best = best.min((a.position - b.position).norm());
            }
        }
        best
    }

    pub fn is_well_posed(&self) -> bool {
        self.epsilon > 0.0 && self.min_separation() > 2.0 * self.epsilon
    }
}

/// Goal-satisfaction predicate: every target is covered by a distinct placed
/// pose closer than `epsilon`.
pub fn satisfies_goal(arr: &Arrangement, model: &CuboidModel, placed: &[Pose]) -> bool {
    if placed.len() < arr.targets.len() {
        return false;
    }
    if arr.labeled {
        return arr
            .targets
            .iter()
            .zip(placed)
            .all(|(t, p)| pose_distance_symmetric(model, p, t) < arr.epsilon);
    }
    let adjacency: Vec<Vec<usize>> = arr
        .targets
        .iter()
        .map(|t| {
            placed
                .iter()
                .enumerate()
                .filter(|(_, p)| pose_distance_symmetric(model, p, t) < arr.epsilon)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    max_bipartite_matching(&adjacency, placed.len()) == arr.targets.len()
}

/// Size of a maximum matching between left vertices (`adjacency` rows) and
/// `n_right` right vertices, via augmenting paths.
pub fn max_bipartite_matching(adjacency: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(
        u: usize,
        adjacency: &[Vec<usize>],
        seen: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &v in &adjacency[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let free = match match_right[v] {
                None => true,
                Some(w) => augment(w, adjacency, seen, match_right),
            };
            if free {
                match_right[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut match_right = vec![None; n_right];
    let mut size = 0;
    for u in 0..adjacency.len() {
        let mut seen = vec![false; n_right];
        if augment(u, adjacency, &mut seen, &mut match_right) {
            size += 1;
        }
    }
    size
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::yaw_rotation;
    use nalgebra::Vector3;
    use std::f64::consts::PI;

    fn soap() -> CuboidModel {
        CuboidModel::new(Vector3::new(0.09, 0.06, 0.03)).unwrap()
    }

    #[test]
    fn identity_distance_is_zero() {
        let p = Pose::from_translation(0.1, 0.2, 0.3);
        assert_eq!(pose_distance_symmetric(&soap(), &p, &p), 0.0);
    }

    #[test]
    fn half_turn_about_vertical_is_free() {
        let cube = CuboidModel::new(Vector3::new(0.05, 0.05, 0.05)).unwrap();
        let p = Pose::new(Vector3::new(0.4, 0.1, 0.025), yaw_rotation(0.37));
        let q = p.rotated_in_place(&yaw_rotation(PI));
        assert!(pose_distance_symmetric(&cube, &p, &q) < 1e-12);
        assert!(pose_distance_symmetric(&soap(), &p, &q) < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let d = pose_distance_symmetric(
            &soap(),
            &Pose::identity(),
            &Pose::from_translation(0.1, 0.0, 0.0),
        );
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn counting_rules() {
        let m = soap();
        let targets: Vec<Pose> = (0..9)
            .map(|i| Pose::from_translation(0.09 * (i % 3) as f64, 0.06 * (i / 3) as f64, 0.0))
            .collect();
        let arr = Arrangement::unlabeled(targets.clone(), 0.01);
        assert!(satisfies_goal(&arr, &m, &targets));
        assert!(!satisfies_goal(&arr, &m, &targets[..8]));
        let mut swapped = targets.clone();
        swapped.swap(0, 1);
        assert!(satisfies_goal(&arr, &m, &swapped));
        let labeled = Arrangement {
            labeled: true,
            ..arr
        };
        assert!(!satisfies_goal(&labeled, &m, &swapped));
        assert!(satisfies_goal(&labeled, &m, &targets));
    }

    #[test]
    fn matching_needs_augmenting_paths() {
        // greedy on row 0 would take right vertex 0 and strand row 1
        let adj = vec![vec![0, 1], vec![0]];
        assert_eq!(max_bipartite_matching(&adj, 2), 2);
        let adj = vec![vec![0], vec![0]];
        assert_eq!(max_bipartite_matching(&adj, 2), 1);
    }
}

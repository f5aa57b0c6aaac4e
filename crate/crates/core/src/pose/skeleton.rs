use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in joint layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkeletonLayout {
    /// 13 joints, one of them on the head.
    Lcr13,
    /// 18 joints including five on the head.
    OpenPose18,
}

/// Joint names, a tree of bones, and the joints averaged to form the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub root: Vec<usize>,
}

impl Skeleton {
    pub fn new(names: Vec<String>, edges: Vec<(usize, usize)>, root: Vec<usize>) -> Result<Self> {
        let s = Skeleton { names, edges, root };
        s.validate()?;
        Ok(s)
    }

    pub fn layout(layout: SkeletonLayout) -> Self {
        let (names, edges, root): (&[&str], &[(usize, usize)], &[usize]) = match layout {
            SkeletonLayout::Lcr13 => (
                &[
                    "right_ankle",
                    "left_ankle",
                    "right_knee",
                    "left_knee",
                    "right_hip",
                    "left_hip",
                    "right_wrist",
                    "left_wrist",
                    "right_elbow",
                    "left_elbow",
                    "right_shoulder",
                    "left_shoulder",
                    "head",
                ],
                &[
                    (12, 10),
                    (12, 11),
                    (10, 8),
                    (8, 6),
                    (11, 9),
                    (9, 7),
                    (10, 4),
                    (11, 5),
                    (4, 2),
                    (2, 0),
                    (5, 3),
                    (3, 1),
                ],
                &[4, 5],
            ),
            SkeletonLayout::OpenPose18 => (
                &[
                    "nose",
                    "neck",
                    "right_shoulder",
                    "right_elbow",
                    "right_wrist",
                    "left_shoulder",
                    "left_elbow",
                    "left_wrist",
                    "right_hip",
                    "right_knee",
                    "right_ankle",
                    "left_hip",
                    "left_knee",
                    "left_ankle",
                    "right_eye",
                    "left_eye",
                    "right_ear",
                    "left_ear",
                ],
                &[
                    (1, 0),
                    (1, 2),
                    (2, 3),
                    (3, 4),
                    (1, 5),
                    (5, 6),
                    (6, 7),
                    (2, 8),
                    (8, 9),
                    (9, 10),
                    (5, 11),
                    (11, 12),
                    (12, 13),
                    (0, 14),
                    (0, 15),
                    (14, 16),
                    (15, 17),
                ],
                &[8, 11],
            ),
        };
        Skeleton {
            names: names.iter().map(|s| s.to_string()).collect(),
            edges: edges.to_vec(),
            root: root.to_vec(),
        }
    }

    /// A chain `0 - 1 - ... - (j-1)`, rooted at joint 0.
    pub fn chain(j: usize) -> Result<Self> {
        Skeleton::new(
            (0..j).map(|i| format!("j{i}")).collect(),
            (1..j).map(|i| (i - 1, i)).collect(),
            vec![0],
        )
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    /// Checks that the edges form a spanning tree.
    pub fn validate(&self) -> Result<()> {
        let j = self.names.len();
        if j == 0 {
            return Err(Error::Argument("skeleton has no joints".into()));
        }
        if self.edges.len() != j - 1 {
            return Err(Error::Argument(format!(
                "a tree over {j} joints needs {} edges, got {}",
                j - 1,
                self.edges.len()
            )));
        }
        let mut parent: Vec<usize> = (0..j).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            if a >= j || b >= j {
                return Err(Error::Argument(format!("edge ({a}, {b}) out of range")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::Argument(format!("edge ({a}, {b}) closes a cycle")));
            }
            parent[ra] = rb;
        }
        if self.root.is_empty() || self.root.iter().any(|&r| r >= j) {
            return Err(Error::Argument("invalid root joints".into()));
        }
        Ok(())
    }

    /// `A + I` as a dense row-major `J×J` matrix.
    pub fn adjacency_with_self_loops(&self) -> Vec<f64> {
        let j = self.joint_count();
        let mut a = vec![0.0; j * j];
        for i in 0..j {
            a[i * j + i] = 1.0;
        }
        for &(p, c) in &self.edges {
            a[p * j + c] = 1.0;
            a[c * j + p] = 1.0;
        }
        a
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kinematic tree. `parents[j]` is `None` for the single root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSkeleton", into = "RawSkeleton")]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSkeleton {
    parents: Vec<i64>,
    #[serde(default)]
    names: Vec<String>,
}

impl TryFrom<RawSkeleton> for Skeleton {
    type Error = Error;

    fn try_from(raw: RawSkeleton) -> Result<Self> {
        let n = raw.parents.len();
        let parents = raw
            .parents
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                if p < 0 || p as usize == j {
                    Ok(None)
                } else if (p as usize) < n {
                    Ok(Some(p as usize))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "joint {j} has parent {p} outside 0..{n}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Skeleton::with_names(parents, raw.names)
    }
}

impl From<Skeleton> for RawSkeleton {
    fn from(s: Skeleton) -> Self {
        RawSkeleton {
            parents: s
                .parents
                .iter()
                .map(|p| p.map_or(-1, |p| p as i64))
                .collect(),
            names: s.names,
        }
    }
}

impl Skeleton {
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self> {
        Self::with_names(parents, Vec::new())
    }

    pub fn with_names(parents: Vec<Option<usize>>, names: Vec<String>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidArgument("skeleton needs at least one joint".into()));
        }
        if !names.is_empty() && names.len() != parents.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} joints",
                names.len(),
                parents.len()
            )));
        }
        let roots = parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(Error::InvalidArgument(format!(
                "skeleton must have exactly one root, found {roots}"
            )));
        }
        if parents.iter().flatten().any(|&p| p >= parents.len()) {
            return Err(Error::InvalidArgument("parent index out of range".into()));
        }
        let s = Skeleton { parents, names };
        // Walking to the root from every joint must terminate.
        for j in 0..s.joints() {
            s.depth_checked(j)?;
        }
        Ok(s)
    }

    /// Root, a spine joint, then the remaining joints split over two
    /// branches hanging off the spine. `joints = 6` gives two 2-joint limbs.
    pub fn branched(joints: usize) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Config("skeleton needs at least one joint".into()));
        }
        let mut parents = vec![None];
        if joints > 1 {
            parents.push(Some(0));
        }
        let rest = joints.saturating_sub(2);
        let left = rest.div_ceil(2);
        for i in 0..left {
            parents.push(Some(if i == 0 { 1 } else { 1 + i }));
        }
        let start = 2 + left;
        for i in 0..rest - left {
            parents.push(Some(if i == 0 { 1 } else { start + i - 1 }));
        }
        Skeleton::new(parents)
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    fn depth_checked(&self, j: usize) -> Result<usize> {
        let mut depth = 0;
        let mut cur = j;
        while let Some(p) = self.parents[cur] {
            depth += 1;
            if depth > self.parents.len() {
                return Err(Error::InvalidArgument(format!(
                    "cycle in parent array reached from joint {j}"
                )));
            }
            cur = p;
        }
        Ok(depth)
    }

    /// Number of edges between `j` and the root.
    pub fn depth(&self, j: usize) -> usize {
        self.depth_checked(j).expect("validated at construction")
    }

    pub fn is_leaf(&self, j: usize) -> bool {
        !self.parents.contains(&Some(j))
    }

    /// Parent-first ordering of all joints.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.joints()).collect();
        order.sort_by_key(|&j| (self.depth(j), j));
        order
    }
}

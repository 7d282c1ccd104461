use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(start, stop, step)` segments of the default schedule, inclusive.
const DEFAULT_SEGMENTS: [(usize, usize, usize); 8] = [
    (1, 10, 1),
    (12, 30, 2),
    (35, 50, 5),
    (60, 150, 10),
    (175, 500, 25),
    (600, 2000, 100),
    (2500, 5000, 500),
    (6000, 20000, 1000),
];

/// Sweeps used by the Kaczmarz family.
pub const KACZMARZ_SWEEPS: usize = 500;

/// Iteration indices after which a solver records its iterate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CheckpointSchedule {
    indices: Vec<usize>,
}

impl CheckpointSchedule {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.first() == Some(&0) {
            return Err(Error::invalid("checkpoint indices must be positive"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("checkpoint indices must be strictly increasing"));
        }
        Ok(Self { indices })
    }

    /// 1..10, 12..30 by 2, 35..50 by 5, 60..150 by 10, 175..500 by 25,
    /// 600..2000 by 100, 2500..5000 by 500, 6000..20000 by 1000.
    pub fn standard() -> Self {
        let indices = DEFAULT_SEGMENTS
            .iter()
            .flat_map(|&(a, b, s)| (a..=b).step_by(s))
            .collect();
        Self { indices }
    }

    /// The standard schedule cut at `cap` iterations.
    pub fn standard_up_to(cap: usize) -> Self {
        Self::standard().truncated(cap)
    }

    /// The standard schedule cut at [`KACZMARZ_SWEEPS`].
    pub fn kaczmarz() -> Self {
        Self::standard_up_to(KACZMARZ_SWEEPS)
    }

    pub fn every(n: usize) -> Self {
        Self {
            indices: (1..=n).collect(),
        }
    }

    pub fn truncated(&self, cap: usize) -> Self {
        Self {
            indices: self.indices.iter().copied().filter(|&i| i <= cap).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn last(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

impl TryFrom<Vec<usize>> for CheckpointSchedule {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CheckpointSchedule> for Vec<usize> {
    fn from(s: CheckpointSchedule) -> Self {
        s.indices
    }
}

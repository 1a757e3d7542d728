//! Ground-truth boundary generation from region label maps.

mod extract;
mod stats;
mod thin;
pub mod topology;

pub use extract::extract_boundaries;
pub use stats::{boundary_pixel_fraction, category_pair_lengths, detect_junctions, PairLength, PairLengthTable};
pub use thin::{is_simple, thin};

use serde::{Deserialize, Serialize};

/// Pixel neighbourhood used when comparing labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl Connectivity {
    /// Neighbour offsets `(dx, dy)`.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// Offsets that visit each unordered neighbour pair exactly once.
    pub(crate) fn forward_offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 2] = [(1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "four" | "4" => Ok(Connectivity::Four),
            "eight" | "8" => Ok(Connectivity::Eight),
            other => Err(crate::Error::Config(format!("unknown connectivity `{other}`"))),
        }
    }
}

#[inline]
pub(crate) fn offset(x: usize, y: usize, dx: isize, dy: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x.checked_add_signed(dx)?;
    let ny = y.checked_add_signed(dy)?;
    (nx < w && ny < h).then_some((nx, ny))
}

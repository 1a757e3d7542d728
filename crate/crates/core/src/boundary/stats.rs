use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{offset, Connectivity};
use crate::{BoundaryMap, LabelMap};

/// Fraction of pixels set in the mask.
pub fn boundary_pixel_fraction(bm: &BoundaryMap) -> f64 {
    bm.count() as f64 / (bm.width() * bm.height()) as f64
}

/// Top-left `(x, y)` of every 2×2 window whose pixels carry three or more
/// distinct `(category, instance)` labels, in raster order.
pub fn detect_junctions(lm: &LabelMap) -> Vec<(usize, usize)> {
    let (w, h) = (lm.width(), lm.height());
    let mut out = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let labels = [lm.label(x, y), lm.label(x + 1, y), lm.label(x, y + 1), lm.label(x + 1, y + 1)];
            let mut distinct = 0;
            for (i, l) in labels.iter().enumerate() {
                if !labels[..i].contains(l) {
                    distinct += 1;
                }
            }
            if distinct >= 3 {
                out.push((x, y));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLength {
    pub category_a: u16,
    pub category_b: u16,
    pub length: u64,
}

/// Boundary length per unordered category pair, longest first. Entries with
/// `category_a == category_b` count instance boundaries inside one category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLengthTable {
    pub entries: Vec<PairLength>,
}

impl PairLengthTable {
    /// Sum over entries separating two different categories.
    pub fn cross_category_total(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.category_a != e.category_b)
            .map(|e| e.length)
            .sum()
    }
}

/// Counts adjacent pixel pairs that straddle a label change, grouped by
/// the unordered pair of categories involved.
pub fn category_pair_lengths(lm: &LabelMap, connectivity: Connectivity) -> PairLengthTable {
    let (w, h) = (lm.width(), lm.height());
    let mut counts: BTreeMap<(u16, u16), u64> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let (ca, ia) = lm.label(x, y);
            for &(dx, dy) in connectivity.forward_offsets() {
                let Some((nx, ny)) = offset(x, y, dx, dy, w, h) else {
                    continue;
                };
                let (cb, ib) = lm.label(nx, ny);
                if ca != cb || ia != ib {
                    *counts.entry((ca.min(cb), ca.max(cb))).or_default() += 1;
                }
            }
        }
    }
    let mut entries: Vec<PairLength> = counts
        .into_iter()
        .map(|((a, b), length)| PairLength {
            category_a: a,
            category_b: b,
            length,
        })
        .collect();
    // Stable sort keeps ascending pair order among equal lengths.
    entries.sort_by(|a, b| b.length.cmp(&a.length));
    PairLengthTable { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::extract_boundaries;

    fn halves() -> LabelMap {
        let mut lm = LabelMap::uniform(4, 4, 1, 1).unwrap();
        for y in 0..4 {
            for x in 2..4 {
                lm.set(x, y, 2, 1);
            }
        }
        lm
    }

    #[test]
    fn fraction_examples() {
        assert_eq!(boundary_pixel_fraction(&BoundaryMap::empty(4, 4).unwrap()), 0.0);
        let bm = extract_boundaries(&halves(), Connectivity::Four);
        assert_eq!(boundary_pixel_fraction(&bm), 0.5);
    }

    #[test]
    fn junction_examples() {
        assert!(detect_junctions(&LabelMap::uniform(5, 5, 1, 1).unwrap()).is_empty());
        let lm = LabelMap::new(2, 2, vec![1, 2, 3, 3], vec![1, 1, 1, 1]).unwrap();
        assert_eq!(detect_junctions(&lm), vec![(0, 0)]);
        // Two labels only is an edge, not a junction.
        assert!(detect_junctions(&halves()).is_empty());
    }

    #[test]
    fn pair_length_examples() {
        let table = category_pair_lengths(&halves(), Connectivity::Four);
        assert_eq!(
            table.entries,
            vec![PairLength {
                category_a: 1,
                category_b: 2,
                length: 4
            }]
        );
        assert!(category_pair_lengths(&LabelMap::uniform(4, 4, 3, 0).unwrap(), Connectivity::Four)
            .entries
            .is_empty());
    }

    #[test]
    fn same_category_instances_get_diagonal_entry() {
        let lm = LabelMap::new(3, 1, vec![5, 5, 2], vec![1, 2, 0]).unwrap();
        let table = category_pair_lengths(&lm, Connectivity::Four);
        assert_eq!(table.entries.len(), 2);
        assert!(table.entries.contains(&PairLength {
            category_a: 5,
            category_b: 5,
            length: 1
        }));
        assert_eq!(table.cross_category_total(), 1);
    }
}

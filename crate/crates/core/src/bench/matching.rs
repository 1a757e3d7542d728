//! Tolerance-radius correspondence between predicted and ground-truth
//! boundary pixels.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{BoundaryMap, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(pred (x, y), gt (x, y))`.
    pub matched_pairs: Vec<((usize, usize), (usize, usize))>,
    pub n_pred: usize,
    pub n_gt: usize,
}

impl MatchResult {
    pub fn matched(&self) -> usize {
        self.matched_pairs.len()
    }
}

/// Maximum-cardinality one-to-one matching between set pixels of `pred` and
/// `gt`, allowing pairs whose Euclidean distance is at most `d_max`.
pub fn correspond(pred: &BoundaryMap, gt: &BoundaryMap, d_max: f64) -> Result<MatchResult> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: pred.dims(),
        });
    }
    if !(d_max > 0.0) || !d_max.is_finite() {
        return Err(Error::InvalidValue(format!("d_max must be positive, got {d_max}")));
    }
    let (w, h) = gt.dims();
    let pred_pts = pred.points();
    let gt_pts = gt.points();

    // Index of each gt pixel, so the candidate scan is a window lookup.
    let mut gt_index = vec![u32::MAX; w * h];
    for (j, &(x, y)) in gt_pts.iter().enumerate() {
        gt_index[y * w + x] = j as u32;
    }
    let r = d_max.floor() as isize;
    let r2 = d_max * d_max;
    let adj: Vec<Vec<u32>> = pred_pts
        .iter()
        .map(|&(x, y)| {
            let mut out = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    if ((dx * dx + dy * dy) as f64) > r2 {
                        continue;
                    }
                    let (Some(nx), Some(ny)) = (x.checked_add_signed(dx), y.checked_add_signed(dy)) else {
                        continue;
                    };
                    if nx < w && ny < h {
                        let j = gt_index[ny * w + nx];
                        if j != u32::MAX {
                            out.push(j);
                        }
                    }
                }
            }
            out
        })
        .collect();

    let pairing = hopcroft_karp(&adj, gt_pts.len());
    let matched_pairs = pairing
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (pred_pts[i], gt_pts[j as usize])))
        .collect();
    Ok(MatchResult {
        matched_pairs,
        n_pred: pred_pts.len(),
        n_gt: gt_pts.len(),
    })
}

const INF: u32 = u32::MAX;

/// Returns, for every left vertex, its matched right vertex.
pub(crate) fn hopcroft_karp(adj: &[Vec<u32>], n_right: usize) -> Vec<Option<u32>> {
    let n_left = adj.len();
    let mut match_l: Vec<Option<u32>> = vec![None; n_left];
    let mut match_r: Vec<Option<u32>> = vec![None; n_right];
    let mut dist = vec![INF; n_left];
    let mut queue = VecDeque::new();

    // Greedy seed; cheap and leaves far fewer augmenting phases.
    for u in 0..n_left {
        if let Some(&v) = adj[u].iter().find(|&&v| match_r[v as usize].is_none()) {
            match_l[u] = Some(v);
            match_r[v as usize] = Some(u as u32);
        }
    }

    loop {
        queue.clear();
        for u in 0..n_left {
            if match_l[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match match_r[v as usize] {
                    None => found = true,
                    Some(w) => {
                        let w = w as usize;
                        if dist[w] == INF {
                            dist[w] = dist[u] + 1;
                            queue.push_back(w);
                        }
                    }
                }
            }
        }
        if !found {
            break;
        }
        let mut iter = vec![0usize; n_left];
        for u in 0..n_left {
            if match_l[u].is_none() {
                augment(u, adj, &mut match_l, &mut match_r, &mut dist, &mut iter);
            }
        }
    }
    match_l
}

fn augment(
    u: usize,
    adj: &[Vec<u32>],
    match_l: &mut [Option<u32>],
    match_r: &mut [Option<u32>],
    dist: &mut [u32],
    iter: &mut [usize],
) -> bool {
    while iter[u] < adj[u].len() {
        let v = adj[u][iter[u]] as usize;
        iter[u] += 1;
        let ok = match match_r[v] {
            None => true,
            Some(w) => {
                let w = w as usize;
                dist[w] == dist[u] + 1 && augment(w, adj, match_l, match_r, dist, iter)
            }
        };
        if ok {
            match_l[u] = Some(v as u32);
            match_r[v] = Some(u as u32);
            return true;
        }
    }
    dist[u] = INF;
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, pts: &[(usize, usize)]) -> BoundaryMap {
        let mut bm = BoundaryMap::empty(w, h).unwrap();
        for &(x, y) in pts {
            bm.set(x, y, true);
        }
        bm
    }

    #[test]
    fn identical_masks_match_fully() {
        let pts = [(0, 0), (3, 1), (5, 5), (7, 2), (9, 9), (1, 8), (4, 4), (6, 7), (2, 3), (8, 0)];
        let bm = mask(10, 10, &pts);
        let m = correspond(&bm, &bm, 2.0).unwrap();
        assert_eq!(m.matched(), 10);
    }

    #[test]
    fn shift_beyond_radius_matches_nothing() {
        let pts = [(0, 0), (1, 4), (2, 7), (0, 9)];
        let shifted: Vec<_> = pts.iter().map(|&(x, y)| (x + 3, y)).collect();
        let m = correspond(&mask(10, 10, &shifted), &mask(10, 10, &pts), 2.0).unwrap();
        assert_eq!(m.matched(), 0);
    }

    #[test]
    fn radius_is_inclusive() {
        let a = mask(5, 5, &[(0, 0)]);
        let b = mask(5, 5, &[(2, 0)]);
        assert_eq!(correspond(&a, &b, 2.0).unwrap().matched(), 1);
        assert_eq!(correspond(&a, &b, 1.999).unwrap().matched(), 0);
        let c = mask(5, 5, &[(1, 1)]);
        assert_eq!(correspond(&a, &c, std::f64::consts::SQRT_2).unwrap().matched(), 1);
    }

    #[test]
    fn augmenting_path_needed() {
        // Greedy would pair p0 with g0 and leave p1 unmatched.
        let pred = mask(3, 2, &[(1, 0), (0, 1)]);
        let gt = mask(3, 2, &[(0, 0), (2, 0)]);
        let m = correspond(&pred, &gt, 1.0).unwrap();
        assert_eq!(m.matched(), 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = mask(4, 4, &[]);
        let b = mask(5, 4, &[]);
        assert!(matches!(correspond(&a, &b, 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(correspond(&a, &a, 0.0).is_err());
    }
}

//! Topology-preserving thinning.
//!
//! Candidate pixels are selected with the two-subiteration Guo–Hall rules
//! evaluated on a snapshot of the mask (pixels outside the image count as
//! unset). Marked pixels are then removed one at a time in raster order, and
//! each removal is re-validated with a local simple-point test restricted to
//! the image frame. That re-validation makes the result topology-preserving
//! inside the frame: 8-connected foreground components and 4-connected
//! background components keep their counts, including components touching
//! the image border.
//!
//! Guo–Hall alone can leave isolated 2×2 blocks behind, so after it
//! converges a final sweep removes one simple pixel from every remaining
//! all-set 2×2 block. The two phases alternate until neither changes the
//! mask, which also makes `thin` idempotent.

use crate::BoundaryMap;

/// Ring order: N, NE, E, SE, S, SW, W, NW as `(dx, dy)`.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

pub fn thin(bm: &BoundaryMap) -> BoundaryMap {
    let (w, h) = bm.dims();
    let mut img = bm.mask().to_vec();
    loop {
        loop {
            let a = guo_hall_subiteration(&mut img, w, h, 0);
            let b = guo_hall_subiteration(&mut img, w, h, 1);
            if !(a || b) {
                break;
            }
        }
        if !break_blocks(&mut img, w, h) {
            break;
        }
    }
    BoundaryMap::new(w, h, img).expect("dimensions unchanged")
}

#[inline]
fn at(img: &[bool], w: usize, h: usize, x: isize, y: isize) -> Option<bool> {
    if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
        None
    } else {
        Some(img[y as usize * w + x as usize])
    }
}

/// Neighbourhood in [`RING`] order; `None` outside the frame.
#[inline]
fn ring(img: &[bool], w: usize, h: usize, x: usize, y: usize) -> [Option<bool>; 8] {
    let mut out = [None; 8];
    for (slot, &(dx, dy)) in out.iter_mut().zip(RING.iter()) {
        *slot = at(img, w, h, x as isize + dx, y as isize + dy);
    }
    out
}

fn guo_hall_subiteration(img: &mut [bool], w: usize, h: usize, parity: u8) -> bool {
    let mut marked = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if img[y * w + x] && guo_hall_deletable(&ring(img, w, h, x, y), parity) {
                marked.push((x, y));
            }
        }
    }
    let mut changed = false;
    for (x, y) in marked {
        if is_simple(img, w, h, x, y) && foreground_neighbours(img, w, h, x, y) >= 2 {
            img[y * w + x] = false;
            changed = true;
        }
    }
    changed
}

fn guo_hall_deletable(n: &[Option<bool>; 8], parity: u8) -> bool {
    let b = |i: usize| n[i].unwrap_or(false) as u8;
    // Classic labelling: p2 = N, p3 = NE, ... p9 = NW.
    let (p2, p3, p4, p5, p6, p7, p8, p9) = (b(0), b(1), b(2), b(3), b(4), b(5), b(6), b(7));
    let c = ((p2 ^ 1) & (p3 | p4)) + ((p4 ^ 1) & (p5 | p6)) + ((p6 ^ 1) & (p7 | p8)) + ((p8 ^ 1) & (p9 | p2));
    let n1 = (p9 | p2) + (p3 | p4) + (p5 | p6) + (p7 | p8);
    let n2 = (p2 | p3) + (p4 | p5) + (p6 | p7) + (p8 | p9);
    let n = n1.min(n2);
    let m = if parity == 0 {
        (p6 | p7 | (p9 ^ 1)) & p8
    } else {
        (p2 | p3 | (p5 ^ 1)) & p4
    };
    c == 1 && (2..=3).contains(&n) && m == 0
}

fn foreground_neighbours(img: &[bool], w: usize, h: usize, x: usize, y: usize) -> usize {
    ring(img, w, h, x, y).iter().filter(|v| **v == Some(true)).count()
}

/// Whether clearing the set pixel `(x, y)` preserves the number of
/// 8-connected foreground and 4-connected background components inside the
/// image frame. The test is local to the 3×3 window and conservative: it may
/// reject a pixel whose removal would be harmless through a long detour.
pub fn is_simple(img: &[bool], w: usize, h: usize, x: usize, y: usize) -> bool {
    let n = ring(img, w, h, x, y);
    let adjacent = |i: usize, j: usize, four: bool| {
        let (ax, ay) = RING[i];
        let (bx, by) = RING[j];
        let (dx, dy) = ((ax - bx).abs(), (ay - by).abs());
        if four {
            dx + dy == 1
        } else {
            dx.max(dy) == 1
        }
    };
    // Components among ring members selected by `keep`, adjacency by `four`.
    let components = |keep: &dyn Fn(usize) -> bool, four: bool| -> Vec<u16> {
        let mut comp = [u8::MAX; 8];
        let mut masks = Vec::new();
        for start in 0..8 {
            if !keep(start) || comp[start] != u8::MAX {
                continue;
            }
            let id = masks.len() as u8;
            let mut bits = 0u16;
            let mut stack = vec![start];
            comp[start] = id;
            while let Some(i) = stack.pop() {
                bits |= 1 << i;
                for j in 0..8 {
                    if keep(j) && comp[j] == u8::MAX && adjacent(i, j, four) {
                        comp[j] = id;
                        stack.push(j);
                    }
                }
            }
            masks.push(bits);
        }
        masks
    };
    let fg = components(&|i| n[i] == Some(true), false);
    if fg.len() != 1 {
        return false;
    }
    // Orthogonal positions in RING are the even indices.
    let bg = components(&|i| n[i] == Some(false), true);
    let touching = bg
        .iter()
        .filter(|bits| (0..8).step_by(2).any(|i| *bits & (1 << i) != 0))
        .count();
    touching == 1
}

fn break_blocks(img: &mut [bool], w: usize, h: usize) -> bool {
    if w < 2 || h < 2 {
        return false;
    }
    let mut changed = false;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            if !block.iter().all(|&(bx, by)| img[by * w + bx]) {
                continue;
            }
            if let Some(&(bx, by)) = block.iter().find(|&&(bx, by)| is_simple(img, w, h, bx, by)) {
                img[by * w + bx] = false;
                changed = true;
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::super::topology::{background_components, foreground_components, has_full_block};
    use super::*;

    fn from_rows(rows: &[&str]) -> BoundaryMap {
        let h = rows.len();
        let w = rows[0].len();
        let mask = rows.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        BoundaryMap::new(w, h, mask).unwrap()
    }

    fn assert_post(input: &BoundaryMap, out: &BoundaryMap) {
        assert!(out.is_subset_of(input));
        assert!(!has_full_block(out));
        assert_eq!(foreground_components(out), foreground_components(input));
        assert_eq!(background_components(out), background_components(input));
        assert_eq!(&thin(out), out, "not idempotent");
    }

    #[test]
    fn single_column_unchanged() {
        let bm = from_rows(&["..#..", "..#..", "..#..", "..#.."]);
        assert_eq!(thin(&bm), bm);
    }

    #[test]
    fn two_column_band_keeps_one_full_column() {
        let bm = from_rows(&[".##.", ".##.", ".##.", ".##."]);
        let out = thin(&bm);
        assert_post(&bm, &out);
        assert_eq!(out.count(), 4);
        let xs: Vec<usize> = out.points().iter().map(|p| p.0).collect();
        assert!(xs.iter().all(|&x| x == xs[0]));
        // Guo–Hall's first subiteration peels the west side.
        assert_eq!(xs[0], 2);
    }

    #[test]
    fn thick_ring_keeps_its_hole() {
        let bm = from_rows(&[
            "..........",
            ".########.",
            ".########.",
            ".##....##.",
            ".##....##.",
            ".##....##.",
            ".########.",
            ".########.",
            "..........",
        ]);
        let out = thin(&bm);
        assert_post(&bm, &out);
        assert_eq!(background_components(&bm), 2);
        assert!(out.count() < bm.count());
    }

    #[test]
    fn lone_block_reduces() {
        let bm = from_rows(&["....", ".##.", ".##.", "...."]);
        let out = thin(&bm);
        assert_post(&bm, &out);
        assert!(out.count() >= 1 && out.count() < 4);
    }

    #[test]
    fn border_touching_band_still_separates() {
        let bm = from_rows(&["##....", "##....", ".##...", "..##..", "...##.", "....##"]);
        let out = thin(&bm);
        assert_post(&bm, &out);
    }

    #[test]
    fn simple_point_rejects_bridge_and_interior() {
        // Middle pixel of a horizontal line is a bridge.
        let bm = from_rows(&["...", "###", "..."]);
        assert!(!is_simple(bm.mask(), 3, 3, 1, 1));
        // Interior pixel would open a hole.
        let bm = from_rows(&["###", "###", "###"]);
        assert!(!is_simple(bm.mask(), 3, 3, 1, 1));
        // Line end is simple.
        assert!(is_simple(from_rows(&["...", "##.", "..."]).mask(), 3, 3, 1, 1));
    }
}

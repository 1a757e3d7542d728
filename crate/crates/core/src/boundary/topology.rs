//! Connected-component counts used to state thinning guarantees.

use crate::BoundaryMap;

/// 8-connected components of set pixels.
pub fn foreground_components(bm: &BoundaryMap) -> usize {
    count(bm, true, &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)])
}

/// 4-connected components of unset pixels inside the frame, the outer
/// background included.
pub fn background_components(bm: &BoundaryMap) -> usize {
    count(bm, false, &[(0, -1), (-1, 0), (1, 0), (0, 1)])
}

/// Whether any 2×2 window has all four pixels set.
pub fn has_full_block(bm: &BoundaryMap) -> bool {
    let (w, h) = bm.dims();
    (0..h.saturating_sub(1)).any(|y| {
        (0..w.saturating_sub(1))
            .any(|x| bm.get(x, y) && bm.get(x + 1, y) && bm.get(x, y + 1) && bm.get(x + 1, y + 1))
    })
}

fn count(bm: &BoundaryMap, value: bool, offsets: &[(isize, isize)]) -> usize {
    let (w, h) = bm.dims();
    let mut seen = vec![false; w * h];
    let mut n = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || bm.mask()[start] != value {
            continue;
        }
        n += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            for &(dx, dy) in offsets {
                if let Some((nx, ny)) = super::offset(x, y, dx, dy, w, h) {
                    let j = ny * w + nx;
                    if !seen[j] && bm.mask()[j] == value {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    n
}

use super::{offset, Connectivity};
use crate::{BoundaryMap, LabelMap};

/// Marks every pixel that has at least one neighbour with a different
/// `(category, instance)` label. Both sides of an interface are marked, so a
/// straight interface produces a two-pixel-wide band.
pub fn extract_boundaries(lm: &LabelMap, connectivity: Connectivity) -> BoundaryMap {
    let (w, h) = (lm.width(), lm.height());
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let here = lm.label(x, y);
            for &(dx, dy) in connectivity.forward_offsets() {
                if let Some((nx, ny)) = offset(x, y, dx, dy, w, h) {
                    if lm.label(nx, ny) != here {
                        mask[y * w + x] = true;
                        mask[ny * w + nx] = true;
                    }
                }
            }
        }
    }
    BoundaryMap::new(w, h, mask).expect("dimensions come from a valid label map")
}

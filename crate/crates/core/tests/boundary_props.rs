use proptest::prelude::*;
use sbd_core::boundary::topology::{background_components, foreground_components, has_full_block};
use sbd_core::boundary::{extract_boundaries, is_simple, thin, Connectivity};
use sbd_core::{BoundaryMap, LabelMap};

/// Straight neighbour scan, written without the library's offset tables.
fn brute_force(lm: &LabelMap, eight: bool) -> Vec<bool> {
    let (w, h) = (lm.width() as i64, lm.height() as i64);
    let mut out = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let here = lm.label(x as usize, y as usize);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if (dx, dy) == (0, 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && lm.label(nx as usize, ny as usize) != here {
                        out[(y * w + x) as usize] = true;
                    }
                }
            }
        }
    }
    out
}

fn label_map() -> impl Strategy<Value = LabelMap> {
    (1usize..14, 1usize..14, 1u16..4).prop_flat_map(|(w, h, n)| {
        (
            proptest::collection::vec(0..n, w * h),
            proptest::collection::vec(0..n, w * h),
        )
            .prop_map(move |(c, i)| LabelMap::new(w, h, c, i).unwrap())
    })
}

fn mask() -> impl Strategy<Value = BoundaryMap> {
    (1usize..16, 1usize..16).prop_flat_map(|(w, h)| {
        proptest::collection::vec(proptest::bool::weighted(0.55), w * h)
            .prop_map(move |m| BoundaryMap::new(w, h, m).unwrap())
    })
}

/// Every all-set 2×2 block left in `t` consists of pixels whose removal
/// would change the topology inside the frame (e.g. a fully set image,
/// where clearing any pixel creates a new background component).
fn blocks_are_locked(t: &BoundaryMap) -> bool {
    let (w, h) = t.dims();
    (0..h.saturating_sub(1)).all(|y| {
        (0..w.saturating_sub(1)).all(|x| {
            let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            !block.iter().all(|&(bx, by)| t.get(bx, by))
                || block.iter().all(|&(bx, by)| !is_simple(t.mask(), w, h, bx, by))
        })
    })
}

proptest! {
    #[test]
    fn extraction_matches_neighbour_scan(lm in label_map()) {
        prop_assert_eq!(extract_boundaries(&lm, Connectivity::Four).mask().to_vec(), brute_force(&lm, false));
        prop_assert_eq!(extract_boundaries(&lm, Connectivity::Eight).mask().to_vec(), brute_force(&lm, true));
    }

    #[test]
    fn four_connected_band_is_inside_eight_connected_band(lm in label_map()) {
        let four = extract_boundaries(&lm, Connectivity::Four);
        prop_assert!(four.is_subset_of(&extract_boundaries(&lm, Connectivity::Eight)));
    }

    #[test]
    fn thinning_is_a_topology_preserving_idempotent_subset(bm in mask()) {
        let t = thin(&bm);
        prop_assert!(t.is_subset_of(&bm));
        prop_assert!(blocks_are_locked(&t));
        prop_assert_eq!(foreground_components(&t), foreground_components(&bm));
        prop_assert_eq!(background_components(&t), background_components(&bm));
        prop_assert_eq!(thin(&t), t);
    }

    #[test]
    fn thinned_label_boundaries_keep_topology(lm in label_map()) {
        let band = extract_boundaries(&lm, Connectivity::Four);
        let t = thin(&band);
        prop_assert!(blocks_are_locked(&t));
        prop_assert_eq!(foreground_components(&t), foreground_components(&band));
        prop_assert_eq!(background_components(&t), background_components(&band));
    }
}

#[test]
fn synthetic_scene_boundaries_have_no_full_blocks() {
    for seed in 0..20 {
        let (_, lm) = sbd_core::synth::synth_scene(&sbd_core::synth::SynthSpec {
            seed,
            ..Default::default()
        })
        .unwrap();
        assert!(!has_full_block(&thin(&extract_boundaries(&lm, Connectivity::Four))), "seed {seed}");
    }
}

#[test]
fn fully_set_image_keeps_its_topology() {
    let full = BoundaryMap::new(3, 2, vec![true; 6]).unwrap();
    let t = thin(&full);
    assert_eq!(background_components(&t), 0);
    assert!(blocks_are_locked(&t));
}

#[test]
fn single_rectangle_thins_to_a_closed_loop() {
    let mut lm = LabelMap::uniform(20, 20, 0, 0).unwrap();
    for y in 5..15 {
        for x in 4..16 {
            lm.set(x, y, 1, 1);
        }
    }
    let t = thin(&extract_boundaries(&lm, Connectivity::Four));
    assert_eq!(foreground_components(&t), 1);
    // The loop separates the inside from the outside.
    assert_eq!(background_components(&t), 2);
    for y in 0..20 {
        for x in 0..20 {
            if t.get(x, y) {
                let n = (-1..=1i64)
                    .flat_map(|dy| (-1..=1i64).map(move |dx| (dx, dy)))
                    .filter(|&(dx, dy)| (dx, dy) != (0, 0))
                    .filter(|&(dx, dy)| t.get((x as i64 + dx) as usize, (y as i64 + dy) as usize))
                    .count();
                assert!(n >= 2, "loop pixel ({x},{y}) has {n} neighbours");
            }
        }
    }
}

//! Binary erosion, dilation and opening with a square structuring element.
//!
//! The element has side `2 * radius + 1`. Windows are clipped at the image
//! border: out-of-bounds positions neither erode nor dilate.

use crate::grid::BinaryMask;

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

// One separable pass along rows (`horizontal`) or columns.
fn pass(mask: &BinaryMask, radius: usize, op: Op, horizontal: bool) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let mut out = BinaryMask::new(w, h);
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        let at = |i: usize| {
            if horizontal {
                mask.get(i, line)
            } else {
                mask.get(line, i)
            }
        };
        for i in 0..len {
            prefix[i + 1] = prefix[i] + usize::from(at(i));
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(len - 1);
            let count = prefix[hi + 1] - prefix[lo];
            let v = match op {
                Op::Erode => count == hi - lo + 1,
                Op::Dilate => count > 0,
            };
            if v {
                if horizontal {
                    out.set(i, line, true);
                } else {
                    out.set(line, i, true);
                }
            }
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    pass(&pass(mask, radius, Op::Erode, true), radius, Op::Erode, false)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    pass(&pass(mask, radius, Op::Dilate, true), radius, Op::Dilate, false)
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    // Direct window scan, independent of the separable prefix-sum route.
    fn brute(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
        let (w, h) = mask.dimensions();
        let r = radius as isize;
        BinaryMask::from_fn(w, h, |x, y| {
            let mut all = true;
            let mut any = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let v = mask.get(nx as usize, ny as usize);
                    all &= v;
                    any |= v;
                }
            }
            if erode {
                all
            } else {
                any
            }
        })
    }

    #[test]
    fn opening_removes_isolated_pixel_keeps_block() {
        let mut m = BinaryMask::new(12, 12);
        m.set(1, 1, true);
        for y in 5..10 {
            for x in 5..10 {
                m.set(x, y, true);
            }
        }
        let opened = open(&m, 1);
        assert!(!opened.get(1, 1));
        assert_eq!(opened.foreground_count(), 25);
        assert!(opened.is_subset_of(&m));
    }

    #[test]
    fn zero_radius_is_identity() {
        let m = BinaryMask::from_rows(&["101", "010"]);
        assert_eq!(open(&m, 0), m);
    }

    proptest! {
        #[test]
        fn separable_matches_brute_force(seed in any::<u64>(), radius in 0usize..3, w in 1usize..14, h in 1usize..14) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.6));
            prop_assert_eq!(erode(&m, radius), brute(&m, radius, true));
            prop_assert_eq!(dilate(&m, radius), brute(&m, radius, false));
            prop_assert!(open(&m, radius).is_subset_of(&m));
        }
    }
}

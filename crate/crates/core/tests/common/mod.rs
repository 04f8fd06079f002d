//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reposeg::{BinaryMask, Connectivity, LabelMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

fn neighbours(conn: Connectivity) -> &'static [(isize, isize)] {
    const FOUR: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const EIGHT: [(isize, isize); 8] = [
        (-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1),
    ];
    match conn {
        Connectivity::Four => &FOUR,
        Connectivity::Eight => &EIGHT,
    }
}

fn fill(mask: &BinaryMask, conn: Connectivity, labels: &mut [u32], x: usize, y: usize, label: u32) {
    let w = mask.width();
    labels[y * w + x] = label;
    for &(dx, dy) in neighbours(conn) {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        if nx < 0 || ny < 0 || nx >= w as isize || ny >= mask.height() as isize {
            continue;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
            fill(mask, conn, labels, nx, ny, label);
        }
    }
}

/// Recursive flood fill, labels in row-major first-encounter order.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, usize) {
    let w = mask.width();
    let mut labels = vec![0u32; mask.area()];
    let mut k = 0;
    for y in 0..mask.height() {
        for x in 0..w {
            if mask.get(x, y) && labels[y * w + x] == 0 {
                k += 1;
                fill(mask, conn, &mut labels, x, y, k as u32);
            }
        }
    }
    (labels, k)
}

pub fn component_count(mask: &BinaryMask, conn: Connectivity) -> usize {
    flood_fill_labels(mask, conn).1
}

/// True when both labelings induce the same partition of the foreground.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn labels_match(map: &LabelMap, mask: &BinaryMask, conn: Connectivity) -> bool {
    let (oracle, k) = flood_fill_labels(mask, conn);
    map.component_count() == k && same_partition(map.labels(), &oracle)
}

/// Exhaustive Otsu: every threshold scored from scratch with the
/// weight/mean form, smallest maximizer wins. `None` for a single-level histogram.
pub fn otsu_oracle(hist: &[u64; 256]) -> Option<u8> {
    let n: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let p: Vec<f64> = hist.iter().map(|&c| c as f64 / n as f64).collect();
    let mut best_t = 0u8;
    let mut best_v = f64::NEG_INFINITY;
    for t in 0..256 {
        let w0: f64 = p[..=t].iter().sum();
        let w1: f64 = p[t + 1..].iter().sum();
        let c0: u64 = hist[..=t].iter().sum();
        if c0 == 0 || c0 == n {
            continue;
        }
        let m0 = p[..=t].iter().enumerate().map(|(i, &q)| i as f64 * q).sum::<f64>() / w0;
        let m1 = p[t + 1..].iter().enumerate().map(|(i, &q)| (i + t + 1) as f64 * q).sum::<f64>() / w1;
        let v = w0 * w1 * (m0 - m1).powi(2);
        if v > best_v {
            best_v = v;
            best_t = t as u8;
        }
    }
    Some(best_t)
}

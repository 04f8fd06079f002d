//! Connected component labelling and the mask clean-up built on it:
//! keep the largest foreground component, then fill every hole.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::BinaryMask;

/// Pixel adjacency used when grouping foreground pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    Eight,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PostprocessError {
    #[error("labelling has no components")]
    EmptyLabeling,
    #[error("mask has no foreground pixels")]
    EmptyMask,
}

/// Component labels for every pixel of a mask.
///
/// Label 0 is background; components are numbered `1..=K` in the row-major
/// order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    // Index 0 holds the background count.
    sizes: Vec<usize>,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Number of components `K`.
    pub fn component_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Pixel count of component `label`, for `label` in `1..=K`.
    pub fn component_size(&self, label: u32) -> usize {
        self.sizes[label as usize]
    }

    /// Sizes of components `1..=K` in label order.
    pub fn component_sizes(&self) -> &[usize] {
        &self.sizes[1..]
    }

    /// Label of the largest component, lowest label on ties.
    pub fn largest_label(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (i, &size) in self.component_sizes().iter().enumerate() {
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((i as u32 + 1, size));
            }
        }
        best.map(|(label, _)| label)
    }

    /// Mask of the pixels carrying `label`.
    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask::from_pixels(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == label && label != 0).collect(),
        )
        .expect("label map dimensions are valid")
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn with_capacity(n: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the connected foreground components of `mask`.
///
/// Two-pass union-find; the second pass renumbers roots in first-encounter
/// row-major order so the output is deterministic.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = mask.dimensions();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; w * h];
    let mut sets = DisjointSet::with_capacity(w * h / 4 + 1);

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut label = NONE;
            let mut visit = |nx: usize, ny: usize, label: &mut u32| {
                let l = provisional[ny * w + nx];
                if l == NONE {
                    return;
                }
                if *label == NONE {
                    *label = l;
                } else if *label != l {
                    sets.union(*label, l);
                }
            };
            if x > 0 {
                visit(x - 1, y, &mut label);
            }
            if y > 0 {
                visit(x, y - 1, &mut label);
                if conn == Connectivity::Eight {
                    if x > 0 {
                        visit(x - 1, y - 1, &mut label);
                    }
                    if x + 1 < w {
                        visit(x + 1, y - 1, &mut label);
                    }
                }
            }
            if label == NONE {
                label = sets.make();
            }
            provisional[y * w + x] = label;
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut sizes = vec![0usize];
    let mut labels = vec![0u32; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == NONE {
            sizes[0] += 1;
            continue;
        }
        let root = sets.find(p) as usize;
        if final_of_root[root] == 0 {
            sizes.push(0);
            final_of_root[root] = (sizes.len() - 1) as u32;
        }
        let l = final_of_root[root];
        labels[i] = l;
        sizes[l as usize] += 1;
    }

    LabelMap {
        width: w,
        height: h,
        labels,
        sizes,
    }
}

/// Mask of the largest component (lowest label on ties).
pub fn largest_component(labels: &LabelMap) -> Result<BinaryMask, PostprocessError> {
    labels
        .largest_label()
        .map(|l| labels.component_mask(l))
        .ok_or(PostprocessError::EmptyLabeling)
}

/// Fills every hole of `mask`.
///
/// The mask is inverted, the largest four-connected background component
/// is kept, and the result is inverted back; every other background region
/// becomes foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let inverted = mask.inverted();
    let labels = connected_components(&inverted, Connectivity::Four);
    match largest_component(&labels) {
        Ok(background) => background.inverted(),
        // No background at all.
        Err(_) => mask.clone(),
    }
}

/// Keeps the largest eight-connected foreground component and fills its holes.
pub fn postprocess(mask: &BinaryMask) -> Result<BinaryMask, PostprocessError> {
    if mask.is_empty() {
        return Err(PostprocessError::EmptyMask);
    }
    let labels = connected_components(mask, Connectivity::Eight);
    let largest = largest_component(&labels)?;
    Ok(fill_holes(&largest))
}

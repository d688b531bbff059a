//! Two-pass connected-component labeling with union-find.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dataset::Mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component_count: usize,
    /// Pixel counts, largest first.
    pub component_sizes: Vec<usize>,
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

/// Labels foreground components. Returns per-pixel labels (0 = background,
/// components numbered from 1 in raster order of first pixel) and the count.
pub fn label_components(
    mask: &Mask,
    connectivity: Connectivity,
) -> Result<(Vec<u32>, usize), AnalysisError> {
    if let Some(v) = mask.data.iter().find(|&&v| v > 1) {
        return Err(AnalysisError::NonBinary(*v));
    }
    let (h, w) = mask.dims();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; h * w];
    let mut sets = DisjointSet::with_capacity(64);

    for y in 0..h {
        for x in 0..w {
            if mask.data[y * w + x] == 0 {
                continue;
            }
            let mut neighbours = [NONE; 4];
            if x > 0 {
                neighbours[0] = provisional[y * w + x - 1];
            }
            if y > 0 {
                neighbours[1] = provisional[(y - 1) * w + x];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neighbours[2] = provisional[(y - 1) * w + x - 1];
                    }
                    if x + 1 < w {
                        neighbours[3] = provisional[(y - 1) * w + x + 1];
                    }
                }
            }
            let mut label = NONE;
            for &n in neighbours.iter().filter(|&&n| n != NONE) {
                if label == NONE {
                    label = n;
                } else {
                    sets.union(label, n);
                }
            }
            if label == NONE {
                label = sets.make();
            }
            provisional[y * w + x] = label;
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; h * w];
    for (out, &p) in labels.iter_mut().zip(&provisional) {
        if p == NONE {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_of_root[root] == 0 {
            next += 1;
            final_of_root[root] = next;
        }
        *out = final_of_root[root];
    }
    Ok((labels, next as usize))
}

pub fn connected_components(
    mask: &Mask,
    connectivity: Connectivity,
) -> Result<ComponentStats, AnalysisError> {
    let (labels, count) = label_components(mask, connectivity)?;
    let mut sizes = vec![0usize; count];
    for &l in labels.iter().filter(|&&l| l > 0) {
        sizes[l as usize - 1] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Ok(ComponentStats {
        component_count: count,
        component_sizes: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_two_squares() {
        let empty = Mask::zeros(6, 6);
        assert_eq!(connected_components(&empty, Connectivity::Eight).unwrap().component_count, 0);
        let squares = Mask::from_fn(6, 8, |y, x| (1..3).contains(&y) && ((0..2).contains(&x) || (4..6).contains(&x)));
        let s = connected_components(&squares, Connectivity::Eight).unwrap();
        assert_eq!(s.component_count, 2);
        assert_eq!(s.component_sizes, vec![4, 4]);
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let diag = Mask::from_fn(3, 3, |y, x| y == x);
        assert_eq!(connected_components(&diag, Connectivity::Eight).unwrap().component_count, 1);
        assert_eq!(connected_components(&diag, Connectivity::Four).unwrap().component_count, 3);
    }

    #[test]
    fn u_shape_merges() {
        // both arms meet only at the bottom row; needs the union step
        let u = Mask::from_fn(4, 5, |y, x| x == 0 || x == 4 || y == 3);
        let s = connected_components(&u, Connectivity::Eight).unwrap();
        assert_eq!(s.component_count, 1);
        assert_eq!(s.component_sizes, vec![11]);
    }

    #[test]
    fn rejects_non_binary() {
        let m = Mask {
            height: 1,
            width: 1,
            data: vec![7],
        };
        assert!(matches!(
            connected_components(&m, Connectivity::Eight),
            Err(AnalysisError::NonBinary(7))
        ));
    }

    proptest! {
        #[test]
        fn invariants(bits in proptest::collection::vec(any::<bool>(), 120)) {
            let m = Mask::from_fn(10, 12, |y, x| bits[y * 12 + x]);
            let s = connected_components(&m, Connectivity::Eight).unwrap();
            prop_assert_eq!(s.component_sizes.iter().sum::<usize>(), m.foreground());
            prop_assert_eq!(s.component_count == 0, m.foreground() == 0);
            prop_assert!(s.component_sizes.windows(2).all(|w| w[0] >= w[1]));
            let t = connected_components(&m.transpose(), Connectivity::Eight).unwrap();
            prop_assert_eq!(t.component_count, s.component_count);
        }
    }
}

//! Shared test oracles, independent of the engine's search path.

use binpack_core::grid::{GridBin, ItemSpec, Orientation, Placement};

/// Maximum occupied cells over all placements of any item subset, both
/// orientations, all anchors, by exhaustive depth-first enumeration.
///
/// Disjoint rectangle placements commute, so enumerating items in a fixed
/// order with a skip branch covers every packing order. Branches are pruned
/// when even packing everything left cannot beat the incumbent.
pub fn brute_force_best_occupancy(w: u16, h: u16, items: &[(u16, u16)]) -> u32 {
    fn dfs(
        bin: &mut GridBin,
        items: &[(u16, u16)],
        idx: usize,
        current: u32,
        remaining: u32,
        best: &mut u32,
    ) {
        if current > *best {
            *best = current;
        }
        if idx == items.len() || current + remaining <= *best {
            return;
        }
        let (iw, ih) = items[idx];
        let rest = remaining - u32::from(iw) * u32::from(ih);
        dfs(bin, items, idx + 1, current, rest, best);
        let mut footprints = vec![(iw, ih)];
        if iw != ih {
            footprints.push((ih, iw));
        }
        for (lx, ly) in footprints {
            if lx > bin.width() || ly > bin.height() {
                continue;
            }
            for y in 0..=(bin.height() - ly) {
                for x in 0..=(bin.width() - lx) {
                    let placement = Placement {
                        item: ItemSpec::new(9000 + idx as u32, lx, ly),
                        orientation: Orientation::Deg0,
                        x,
                        y,
                        seq: idx as u32,
                    };
                    if bin.apply_pack(&placement).is_ok() {
                        dfs(
                            bin,
                            items,
                            idx + 1,
                            current + u32::from(lx) * u32::from(ly),
                            rest,
                            best,
                        );
                        bin.apply_unpack(&placement).unwrap();
                    }
                }
            }
        }
    }

    let mut bin = GridBin::new(w, h);
    let remaining = items
        .iter()
        .map(|(a, b)| u32::from(*a) * u32::from(*b))
        .sum();
    let mut best = 0;
    dfs(&mut bin, items, 0, 0, remaining, &mut best);
    best
}

/// All multisets of exactly `k` shapes, in lexicographic order.
pub fn shape_multisets(shapes: &[(u16, u16)], k: usize) -> Vec<Vec<(u16, u16)>> {
    fn rec(
        shapes: &[(u16, u16)],
        k: usize,
        start: usize,
        current: &mut Vec<(u16, u16)>,
        out: &mut Vec<Vec<(u16, u16)>>,
    ) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..shapes.len() {
            current.push(shapes[i]);
            rec(shapes, k, i, current, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    rec(shapes, k, 0, &mut Vec::new(), &mut out);
    out
}

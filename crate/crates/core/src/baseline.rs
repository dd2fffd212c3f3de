//! Online packing baselines: first-fit and shelf-next-fit.
//!
//! Both run fully online with no rotation and no repacking and stop at the
//! first item that cannot be placed, matching the comparison setup the
//! engine's online mode uses.

use crate::grid::{GridBin, ItemSpec, Orientation, Placement, RotatedSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    FirstFit,
    ShelfNextFit,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::FirstFit => "FIRST_FIT",
            BaselineKind::ShelfNextFit => "SHELF_NEXT_FIT",
        }
    }

    pub fn parse(name: &str) -> Option<BaselineKind> {
        match name.to_ascii_uppercase().replace('-', "_").as_str() {
            "FIRST_FIT" => Some(BaselineKind::FirstFit),
            "SHELF_NEXT_FIT" => Some(BaselineKind::ShelfNextFit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub bin: GridBin,
    pub packed_items: u32,
}

impl BaselineResult {
    pub fn utilization(&self) -> f64 {
        self.bin.utilization()
    }
}

pub fn run_baseline_episode(
    kind: BaselineKind,
    w: u16,
    h: u16,
    items: &[ItemSpec],
) -> BaselineResult {
    match kind {
        BaselineKind::FirstFit => first_fit(w, h, items),
        BaselineKind::ShelfNextFit => shelf_next_fit(w, h, items),
    }
}

/// Places each arrival at the first feasible anchor in row-wise order.
pub fn first_fit(w: u16, h: u16, items: &[ItemSpec]) -> BaselineResult {
    let mut bin = GridBin::new(w, h);
    let mut packed = 0u32;
    for (i, item) in items.iter().enumerate() {
        let size = RotatedSize {
            lx: item.w,
            ly: item.h,
        };
        let mask = bin.feasibility_mask(size);
        let Some(action) = mask.feasible_actions().next() else {
            break;
        };
        let x = (action.0 % u32::from(w)) as u16;
        let y = (action.0 / u32::from(w)) as u16;
        bin.apply_pack(&Placement {
            item: *item,
            orientation: Orientation::Deg0,
            x,
            y,
            seq: i as u32,
        })
        .expect("mask-approved anchor packs");
        packed += 1;
    }
    BaselineResult {
        bin,
        packed_items: packed,
    }
}

/// Fills left-to-right shelves whose height is fixed by their first item;
/// when an item does not fit the open shelf, a new shelf opens below it.
pub fn shelf_next_fit(w: u16, h: u16, items: &[ItemSpec]) -> BaselineResult {
    let mut bin = GridBin::new(w, h);
    let mut packed = 0u32;
    let mut shelf_y = 0u16;
    let mut shelf_height = 0u16;
    let mut cursor_x = 0u16;
    for (i, item) in items.iter().enumerate() {
        let fits_current = shelf_height > 0
            && item.h <= shelf_height
            && u32::from(cursor_x) + u32::from(item.w) <= u32::from(w);
        let (x, y) = if fits_current {
            (cursor_x, shelf_y)
        } else {
            let next_y = shelf_y + shelf_height;
            if u32::from(next_y) + u32::from(item.h) > u32::from(h) || item.w > w {
                break;
            }
            shelf_y = next_y;
            shelf_height = item.h;
            (0, shelf_y)
        };
        bin.apply_pack(&Placement {
            item: *item,
            orientation: Orientation::Deg0,
            x,
            y,
            seq: i as u32,
        })
        .expect("shelf cursor stays in free space");
        cursor_x = x + item.w;
        packed += 1;
    }
    BaselineResult {
        bin,
        packed_items: packed,
    }
}

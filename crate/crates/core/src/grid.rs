//! Bin occupancy grid, placement geometry, action encoding, feasibility mask,
//! and the edge-contact reward.
//!
//! The bin is a `W x H` cell grid stored as a padded `(W+2) x (H+2)` binary
//! map whose outermost rows and columns are permanently occupied; the padding
//! lets boundary checks and edge-contact counting treat walls like packed
//! cells. Coordinates are `(x, y)` with `x` the column and `y` the row,
//! origin at the top-left. Anchor coordinates are interior and zero-based;
//! a placement anchored at `(x, y)` covers padded cells
//! `[x+1, x+lx] x [y+1, y+ly]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Owner value for a free interior cell.
const NO_OWNER: u32 = u32::MAX;
/// Owner value for the padding border.
const BORDER_OWNER: u32 = u32::MAX - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("anchor ({x}, {y}) with size {lx}x{ly} overflows the {w}x{h} bin")]
    Overflow {
        x: u16,
        y: u16,
        lx: u16,
        ly: u16,
        w: u16,
        h: u16,
    },
    #[error("placement of item {item} overlaps an occupied cell at ({x}, {y})")]
    PlacementConflict { item: u32, x: u16, y: u16 },
    #[error("item {item} is not packed at the claimed cells")]
    NotPacked { item: u32 },
    #[error("coordinates ({x}, {y}) out of range for a {w}x{h} bin")]
    OutOfRange { x: u16, y: u16, w: u16, h: u16 },
    #[error("edge contact queried for an infeasible placement at ({x}, {y})")]
    InfeasibleQuery { x: u16, y: u16 },
    #[error("occupancy buffer has {got} cells, expected {expected}")]
    BadOccupancy { got: usize, expected: usize },
}

/// An item to pack: a unique id plus its footprint in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemSpec {
    pub id: u32,
    pub w: u16,
    pub h: u16,
}

impl ItemSpec {
    pub fn new(id: u32, w: u16, h: u16) -> Self {
        debug_assert!(w >= 1 && h >= 1);
        ItemSpec { id, w, h }
    }

    pub fn area(&self) -> u32 {
        u32::from(self.w) * u32::from(self.h)
    }
}

/// Planar rotation of an item: 0 or 90 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Deg0,
    Deg90,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Deg0, Orientation::Deg90];
}

/// Footprint of an item after rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotatedSize {
    pub lx: u16,
    pub ly: u16,
}

/// Size vector of `item` under rotation `phi`: `Deg0` keeps `(w, h)`,
/// `Deg90` swaps to `(h, w)`.
pub fn rotated_size(item: ItemSpec, phi: Orientation) -> RotatedSize {
    match phi {
        Orientation::Deg0 => RotatedSize {
            lx: item.w,
            ly: item.h,
        },
        Orientation::Deg90 => RotatedSize {
            lx: item.h,
            ly: item.w,
        },
    }
}

/// A low-level position action: index `x + y*W` for an anchor, or the
/// reserved index `W*H` meaning "no feasible position".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PositionAction(pub u32);

impl PositionAction {
    /// The reserved no-position action for a `w x h` bin.
    pub fn no_position(w: u16, h: u16) -> Self {
        PositionAction(u32::from(w) * u32::from(h))
    }

    pub fn is_no_position(self, w: u16, h: u16) -> bool {
        self.0 == u32::from(w) * u32::from(h)
    }
}

/// Row-wise action index for anchor `(x, y)` in a `w`-wide bin.
pub fn encode_action(x: u16, y: u16, w: u16, h: u16) -> Result<PositionAction, GridError> {
    if x >= w || y >= h {
        return Err(GridError::OutOfRange { x, y, w, h });
    }
    Ok(PositionAction(u32::from(x) + u32::from(y) * u32::from(w)))
}

/// Inverse of [`encode_action`]; rejects the no-position index.
pub fn decode_action(action: PositionAction, w: u16, h: u16) -> Result<(u16, u16), GridError> {
    if action.is_no_position(w, h) || action.0 >= u32::from(w) * u32::from(h) {
        return Err(GridError::OutOfRange { x: 0, y: 0, w, h });
    }
    let x = (action.0 % u32::from(w)) as u16;
    let y = (action.0 / u32::from(w)) as u16;
    Ok((x, y))
}

/// A fixed placement: item, orientation, top-left anchor, and a monotonically
/// increasing pack-order stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub item: ItemSpec,
    pub orientation: Orientation,
    pub x: u16,
    pub y: u16,
    pub seq: u32,
}

impl Placement {
    pub fn size(&self) -> RotatedSize {
        rotated_size(self.item, self.orientation)
    }

    /// Interior cells covered by this placement, in row-wise order.
    pub fn cells(&self) -> Vec<(u16, u16)> {
        let size = self.size();
        let mut out = Vec::with_capacity(usize::from(size.lx) * usize::from(size.ly));
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                out.push((self.x + dx, self.y + dy));
            }
        }
        out
    }
}

/// Feasibility over all `W*H` anchors plus the no-position bit.
///
/// Bit `j < W*H` is set iff anchoring at `decode(j)` stays inside the bin and
/// overlaps no occupied cell. Bit `W*H` is set iff every other bit is clear,
/// so the no-position action is suppressed whenever space is available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityMask {
    bits: Vec<bool>,
    w: u16,
    h: u16,
}

impl FeasibilityMask {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_set(&self, idx: u32) -> bool {
        self.bits.get(idx as usize).copied().unwrap_or(false)
    }

    pub fn allows(&self, action: PositionAction) -> bool {
        self.is_set(action.0)
    }

    /// True iff only the no-position bit is set.
    pub fn no_position_only(&self) -> bool {
        self.bits[self.bits.len() - 1]
    }

    pub fn feasible_count(&self) -> usize {
        self.bits[..self.bits.len() - 1]
            .iter()
            .filter(|b| **b)
            .count()
    }

    /// Feasible anchor actions in ascending index order.
    pub fn feasible_actions(&self) -> impl Iterator<Item = PositionAction> + '_ {
        self.bits[..self.bits.len() - 1]
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| PositionAction(i as u32))
    }
}

/// Padded binary occupancy map of the bin plus per-cell owner attribution.
///
/// The binary map is the search state; the owner map exists so that unpacking
/// can verify the cleared cells actually belong to the unpacked item. A bin
/// is a plain value: clones share nothing, so search workers can evaluate
/// clones in parallel freely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridBin {
    w: u16,
    h: u16,
    occ: Vec<u8>,
    owner: Vec<u32>,
    occupied: u32,
}

impl GridBin {
    pub fn new(w: u16, h: u16) -> Self {
        assert!(w >= 1 && h >= 1, "bin dimensions must be positive");
        let pw = usize::from(w) + 2;
        let ph = usize::from(h) + 2;
        let mut occ = vec![0u8; pw * ph];
        let mut owner = vec![NO_OWNER; pw * ph];
        for py in 0..ph {
            for px in 0..pw {
                if px == 0 || px == pw - 1 || py == 0 || py == ph - 1 {
                    occ[py * pw + px] = 1;
                    owner[py * pw + px] = BORDER_OWNER;
                }
            }
        }
        GridBin {
            w,
            h,
            occ,
            owner,
            occupied: 0,
        }
    }

    /// Bin with interior occupancy preset from `cells` (row-wise, `W*H`
    /// entries, nonzero = occupied). Preset cells get a synthetic owner, so
    /// they cannot be unpacked; intended for tests and tools.
    pub fn from_occupancy(w: u16, h: u16, cells: &[u8]) -> Result<Self, GridError> {
        let expected = usize::from(w) * usize::from(h);
        if cells.len() != expected {
            return Err(GridError::BadOccupancy {
                got: cells.len(),
                expected,
            });
        }
        let mut bin = GridBin::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if cells[usize::from(y) * usize::from(w) + usize::from(x)] != 0 {
                    let idx = bin.pidx(x + 1, y + 1);
                    bin.occ[idx] = 1;
                    bin.owner[idx] = BORDER_OWNER;
                    bin.occupied += 1;
                }
            }
        }
        Ok(bin)
    }

    pub fn width(&self) -> u16 {
        self.w
    }

    pub fn height(&self) -> u16 {
        self.h
    }

    pub fn cell_count(&self) -> u32 {
        u32::from(self.w) * u32::from(self.h)
    }

    fn pidx(&self, px: u16, py: u16) -> usize {
        usize::from(py) * (usize::from(self.w) + 2) + usize::from(px)
    }

    /// Occupancy at padded coordinates (border included).
    pub fn occupied_at_padded(&self, px: u16, py: u16) -> bool {
        self.occ[self.pidx(px, py)] != 0
    }

    /// Occupancy at interior coordinates.
    pub fn occupied_at(&self, x: u16, y: u16) -> bool {
        debug_assert!(x < self.w && y < self.h);
        self.occupied_at_padded(x + 1, y + 1)
    }

    pub fn occupied_cells(&self) -> u32 {
        self.occupied
    }

    /// Occupied interior cells divided by `W*H`.
    pub fn utilization(&self) -> f64 {
        f64::from(self.occupied) / f64::from(self.cell_count())
    }

    pub fn is_full(&self) -> bool {
        self.occupied == self.cell_count()
    }

    /// Interior occupancy row-wise as bytes, for wire encodings.
    pub fn interior_bits(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(usize::from(self.w) * usize::from(self.h));
        for y in 0..self.h {
            for x in 0..self.w {
                out.push(u8::from(self.occupied_at(x, y)));
            }
        }
        out
    }

    /// True iff `size` anchored at `(x, y)` stays in bounds and overlaps
    /// nothing.
    pub fn placement_fits(&self, x: u16, y: u16, size: RotatedSize) -> bool {
        if u32::from(x) + u32::from(size.lx) > u32::from(self.w)
            || u32::from(y) + u32::from(size.ly) > u32::from(self.h)
        {
            return false;
        }
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                if self.occupied_at(x + dx, y + dy) {
                    return false;
                }
            }
        }
        true
    }

    /// Marks the placement's cells occupied. Every target cell must be free.
    pub fn apply_pack(&mut self, p: &Placement) -> Result<(), GridError> {
        let size = p.size();
        if u32::from(p.x) + u32::from(size.lx) > u32::from(self.w)
            || u32::from(p.y) + u32::from(size.ly) > u32::from(self.h)
        {
            return Err(GridError::Overflow {
                x: p.x,
                y: p.y,
                lx: size.lx,
                ly: size.ly,
                w: self.w,
                h: self.h,
            });
        }
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                if self.occupied_at(p.x + dx, p.y + dy) {
                    return Err(GridError::PlacementConflict {
                        item: p.item.id,
                        x: p.x + dx,
                        y: p.y + dy,
                    });
                }
            }
        }
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                let idx = self.pidx(p.x + dx + 1, p.y + dy + 1);
                self.occ[idx] = 1;
                self.owner[idx] = p.item.id;
            }
        }
        self.occupied += u32::from(size.lx) * u32::from(size.ly);
        Ok(())
    }

    /// Clears the placement's cells. Every cell must be occupied and owned by
    /// the placement's item; `apply_unpack(apply_pack(b, p), p) == b`.
    pub fn apply_unpack(&mut self, p: &Placement) -> Result<(), GridError> {
        let size = p.size();
        if u32::from(p.x) + u32::from(size.lx) > u32::from(self.w)
            || u32::from(p.y) + u32::from(size.ly) > u32::from(self.h)
        {
            return Err(GridError::NotPacked { item: p.item.id });
        }
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                let idx = self.pidx(p.x + dx + 1, p.y + dy + 1);
                if self.occ[idx] == 0 || self.owner[idx] != p.item.id {
                    return Err(GridError::NotPacked { item: p.item.id });
                }
            }
        }
        for dy in 0..size.ly {
            for dx in 0..size.lx {
                let idx = self.pidx(p.x + dx + 1, p.y + dy + 1);
                self.occ[idx] = 0;
                self.owner[idx] = NO_OWNER;
            }
        }
        self.occupied -= u32::from(size.lx) * u32::from(size.ly);
        Ok(())
    }

    /// Feasibility over all anchors for `size`, plus the no-position bit.
    pub fn feasibility_mask(&self, size: RotatedSize) -> FeasibilityMask {
        let n = usize::from(self.w) * usize::from(self.h);
        let mut bits = vec![false; n + 1];
        let mut any = false;
        if size.lx <= self.w && size.ly <= self.h {
            for y in 0..=(self.h - size.ly) {
                for x in 0..=(self.w - size.lx) {
                    if self.placement_fits(x, y, size) {
                        bits[usize::from(y) * usize::from(self.w) + usize::from(x)] = true;
                        any = true;
                    }
                }
            }
        }
        bits[n] = !any;
        FeasibilityMask {
            bits,
            w: self.w,
            h: self.h,
        }
    }

    /// Count of occupied cells in the four strips bordering the footprint,
    /// evaluated before the item is placed.
    ///
    /// For an anchor `(x, y)` the footprint spans padded cells
    /// `[x+1, x+lx] x [y+1, y+ly]`, so the bordering strips are padded row
    /// `y` (above), padded row `y+ly+1` (below), padded column `x` (left),
    /// and padded column `x+lx+1` (right). Padding border cells count as
    /// occupied. Range: `0 ..= 2*(lx+ly)`.
    pub fn edge_contact(&self, x: u16, y: u16, size: RotatedSize) -> Result<u32, GridError> {
        if !self.placement_fits(x, y, size) {
            return Err(GridError::InfeasibleQuery { x, y });
        }
        Ok(self.edge_contact_unchecked(x, y, size))
    }

    /// [`edge_contact`](Self::edge_contact) without the feasibility precheck;
    /// the caller must pass an in-bounds anchor.
    pub fn edge_contact_unchecked(&self, x: u16, y: u16, size: RotatedSize) -> u32 {
        let mut count = 0u32;
        for j in 1..=size.lx {
            count += u32::from(self.occupied_at_padded(x + j, y));
            count += u32::from(self.occupied_at_padded(x + j, y + size.ly + 1));
        }
        for j in 1..=size.ly {
            count += u32::from(self.occupied_at_padded(x, y + j));
            count += u32::from(self.occupied_at_padded(x + size.lx + 1, y + j));
        }
        count
    }
}

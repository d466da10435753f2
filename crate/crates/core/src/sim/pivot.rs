//! Discrete pivot tables.
//!
//! Every pivot is a unit-square rotation about one of the moving cube's
//! corners. All sixteen (corner, direction, angle) cases are images of a
//! single canonical case under the lattice symmetries: cube at the origin,
//! pivoting clockwise about its south-east corner while resting on a cube
//! to the south.

use crate::geometry::{CellCoord, Corner, Direction, TransformId};
use std::sync::OnceLock;

/// Offsets relative to the moving cube's start cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PivotTable {
    /// Face neighbour that shares the pivot corner and that the cube swings away from.
    pub anchor: (i32, i32),
    /// Cells entered during the first 90°, ending at `landing90`.
    pub arc90: Vec<(i32, i32)>,
    pub landing90: (i32, i32),
    /// Additional cells entered between 90° and 180°, ending at `landing180`.
    pub arc180: Vec<(i32, i32)>,
    pub landing180: (i32, i32),
}

impl PivotTable {
    fn canonical() -> Self {
        Self {
            anchor: (0, -1),
            arc90: vec![(0, 1), (1, 1), (1, 0)],
            landing90: (1, 0),
            arc180: vec![(2, 0), (2, -1), (1, -1)],
            landing180: (1, -1),
        }
    }

    fn transformed(&self, t: TransformId) -> Self {
        let map = |v: &(i32, i32)| t.apply_vec(*v);
        Self {
            anchor: map(&self.anchor),
            arc90: self.arc90.iter().map(map).collect(),
            landing90: map(&self.landing90),
            arc180: self.arc180.iter().map(map).collect(),
            landing180: map(&self.landing180),
        }
    }

    /// Swept cells (absolute) for a rotation that stops at 90° or 180°.
    pub fn swept_cells(&self, start: CellCoord, full_turn: bool) -> Vec<CellCoord> {
        let mut out: Vec<CellCoord> = self
            .arc90
            .iter()
            .map(|&(dx, dy)| start.offset(dx, dy))
            .collect();
        if full_turn {
            out.extend(self.arc180.iter().map(|&(dx, dy)| start.offset(dx, dy)));
        }
        out
    }
}

/// Table for the given pivot corner and direction.
pub fn pivot_table(corner: Corner, direction: Direction) -> &'static PivotTable {
    static TABLES: OnceLock<Vec<PivotTable>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        let canonical = PivotTable::canonical();
        let mut slots: Vec<Option<PivotTable>> = vec![None; 8];
        for t in TransformId::all() {
            // Symmetries act about the moving cell's centre; corners are
            // tracked in half-cell units.
            let corner = Corner::from_half_offset(t.apply_vec(Corner::SE.half_offset()))
                .expect("lattice symmetry maps corners to corners");
            let dir = t.apply_direction(Direction::Cw);
            slots[slot(corner, dir)] = Some(canonical.transformed(t));
        }
        slots
            .into_iter()
            .map(|t| t.expect("every corner/direction reached"))
            .collect()
    });
    &tables[slot(corner, direction)]
}

fn slot(corner: Corner, direction: Direction) -> usize {
    corner.index() * 2 + direction.index()
}

//! Lattice primitives shared by the simulator, the overlap search and the
//! environment: cell coordinates, pivot directions, cell corners and the
//! eight symmetries of the square lattice.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Integer lattice cell, `y` pointing up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub x: i32,
    pub y: i32,
}

impl CellCoord {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn l1(self, other: Self) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn chebyshev(self, other: Self) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// The four face-adjacent cells in E, N, W, S order.
    pub fn face_neighbours(self) -> [CellCoord; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl From<(i32, i32)> for CellCoord {
    fn from((x, y): (i32, i32)) -> Self {
        Self::new(x, y)
    }
}

/// A lattice point (cell corner). Cell `(x, y)` spans `[x, x+1] × [y, y+1]`.
pub type LatticePoint = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "cw")]
    Cw,
    #[serde(rename = "ccw")]
    Ccw,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Cw, Direction::Ccw];

    pub fn opposite(self) -> Self {
        match self {
            Direction::Cw => Direction::Ccw,
            Direction::Ccw => Direction::Cw,
        }
    }

    /// Action-type encoding: 0 is clockwise, 1 counter-clockwise.
    pub fn index(self) -> usize {
        match self {
            Direction::Cw => 0,
            Direction::Ccw => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Cw => "cw",
            Direction::Ccw => "ccw",
        })
    }
}

/// Corner of a unit cell, named by compass direction from the cell centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Corner {
    NE,
    SE,
    SW,
    NW,
}

impl Corner {
    /// Scan order used when several corners could serve as pivot.
    pub const SCAN_ORDER: [Corner; 4] = [Corner::NE, Corner::SE, Corner::SW, Corner::NW];

    /// Offset of the corner from the cell's lower-left lattice point.
    pub fn lattice_offset(self) -> (i32, i32) {
        match self {
            Corner::NE => (1, 1),
            Corner::SE => (1, 0),
            Corner::SW => (0, 0),
            Corner::NW => (0, 1),
        }
    }

    /// Corner position relative to the cell centre, in half-cell units.
    pub fn half_offset(self) -> (i32, i32) {
        let (dx, dy) = self.lattice_offset();
        (2 * dx - 1, 2 * dy - 1)
    }

    pub fn from_half_offset(v: (i32, i32)) -> Option<Self> {
        match v {
            (1, 1) => Some(Corner::NE),
            (1, -1) => Some(Corner::SE),
            (-1, -1) => Some(Corner::SW),
            (-1, 1) => Some(Corner::NW),
            _ => None,
        }
    }

    pub fn point_of(self, cell: CellCoord) -> LatticePoint {
        let (dx, dy) = self.lattice_offset();
        (cell.x + dx, cell.y + dy)
    }

    /// Which corner of `cell` the lattice point is, if any.
    pub fn of_point(cell: CellCoord, p: LatticePoint) -> Option<Self> {
        Corner::SCAN_ORDER
            .into_iter()
            .find(|c| c.point_of(cell) == p)
    }

    pub fn index(self) -> usize {
        match self {
            Corner::NE => 0,
            Corner::SE => 1,
            Corner::SW => 2,
            Corner::NW => 3,
        }
    }
}

/// Rotation component of a lattice symmetry (counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn quarter_turns(self) -> u8 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 1,
            Rotation::R180 => 2,
            Rotation::R270 => 3,
        }
    }

    pub fn from_quarter_turns(q: u8) -> Self {
        Rotation::ALL[(q % 4) as usize]
    }

    pub fn degrees(self) -> u32 {
        90 * self.quarter_turns() as u32
    }
}

/// One of the eight symmetries of the square lattice: an optional mirror
/// across the vertical axis (`x ↦ −x`) followed by a counter-clockwise
/// rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransformId {
    pub mirrored: bool,
    pub rotation: Rotation,
}

impl TransformId {
    pub const IDENTITY: TransformId = TransformId {
        mirrored: false,
        rotation: Rotation::R0,
    };

    /// Enumeration order used for tie-breaking: unmirrored rotations first.
    pub fn all() -> [TransformId; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, t) in out.iter_mut().enumerate() {
            *t = TransformId {
                mirrored: i >= 4,
                rotation: Rotation::ALL[i % 4],
            };
        }
        out
    }

    pub fn new(rotation: Rotation, mirrored: bool) -> Self {
        Self { mirrored, rotation }
    }

    /// Apply to an integer vector (cell offset or doubled corner offset).
    pub fn apply_vec(self, (mut x, mut y): (i32, i32)) -> (i32, i32) {
        if self.mirrored {
            x = -x;
        }
        for _ in 0..self.rotation.quarter_turns() {
            (x, y) = (-y, x);
        }
        (x, y)
    }

    /// Apply to a cell about the origin cell's centre.
    pub fn apply_cell(self, c: CellCoord) -> CellCoord {
        let (x, y) = self.apply_vec((c.x, c.y));
        CellCoord::new(x, y)
    }

    /// Image of a pivot direction under this symmetry.
    pub fn apply_direction(self, d: Direction) -> Direction {
        if self.mirrored {
            d.opposite()
        } else {
            d
        }
    }

    pub fn index(self) -> usize {
        self.rotation.quarter_turns() as usize + if self.mirrored { 4 } else { 0 }
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rot{}{}",
            self.rotation.degrees(),
            if self.mirrored { "+mirror" } else { "" }
        )
    }
}

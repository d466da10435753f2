use super::pivot::pivot_table;
use crate::geometry::{CellCoord, Corner, Direction, LatticePoint, TransformId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one cube")]
    Empty,
    #[error("two cubes share cell {0}")]
    Duplicate(CellCoord),
    #[error("cubes do not form a single face-connected component")]
    Disconnected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveCommand {
    pub cube: usize,
    pub direction: Direction,
}

impl MoveCommand {
    pub fn new(cube: usize, direction: Direction) -> Self {
        Self { cube, direction }
    }

    /// Action index `2·cube + type`.
    pub fn action(self) -> usize {
        2 * self.cube + self.direction.index()
    }

    pub fn from_action(a: usize) -> Self {
        let direction = if a % 2 == 0 {
            Direction::Cw
        } else {
            Direction::Ccw
        };
        Self {
            cube: a / 2,
            direction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PivotKind {
    Traversal90,
    Transfer180,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveResolution {
    pub kind: PivotKind,
    pub corner: Corner,
    pub pivot_corner: LatticePoint,
    pub destination: CellCoord,
    pub swept_cells: Vec<CellCoord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveOutcome {
    Applied(MoveResolution),
    RejectedCollision,
    RejectedDisconnect,
    RejectedNoPivot,
}

impl MoveOutcome {
    pub fn is_applied(&self) -> bool {
        matches!(self, MoveOutcome::Applied(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            MoveOutcome::Applied(_) => "applied",
            MoveOutcome::RejectedCollision => "rejected_collision",
            MoveOutcome::RejectedDisconnect => "rejected_disconnect",
            MoveOutcome::RejectedNoPivot => "rejected_no_pivot",
        }
    }
}

/// Returned by [`Ensemble::resolve_move`] when no corner can act as pivot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoPivot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Breadth-first search over the whole neighbourhood graph.
    Full,
    /// Search restricted to cubes within this Chebyshev radius of the mover.
    Local(u32),
}

/// Cube positions plus the symmetric face-adjacency lists derived from them.
///
/// Cube `i` is `coords[i]`; `adjacency[i]` is sorted. An occupancy map keeps
/// cell lookups constant time.
#[derive(Clone, Debug)]
pub struct Ensemble {
    coords: Vec<CellCoord>,
    adjacency: Vec<Vec<usize>>,
    occupancy: HashMap<CellCoord, usize>,
}

impl PartialEq for Ensemble {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && self.adjacency == other.adjacency
    }
}

impl Eq for Ensemble {}

impl Ensemble {
    pub fn new(coords: Vec<CellCoord>) -> Result<Self, EnsembleError> {
        if coords.is_empty() {
            return Err(EnsembleError::Empty);
        }
        let mut occupancy = HashMap::with_capacity(coords.len());
        for (i, &c) in coords.iter().enumerate() {
            if occupancy.insert(c, i).is_some() {
                return Err(EnsembleError::Duplicate(c));
            }
        }
        let adjacency = coords
            .iter()
            .map(|c| {
                let mut n: Vec<usize> = c
                    .face_neighbours()
                    .iter()
                    .filter_map(|nc| occupancy.get(nc).copied())
                    .collect();
                n.sort_unstable();
                n
            })
            .collect();
        let ensemble = Self {
            coords,
            adjacency,
            occupancy,
        };
        if !ensemble.is_connected() {
            return Err(EnsembleError::Disconnected);
        }
        Ok(ensemble)
    }

    pub fn from_pairs(pairs: &[(i32, i32)]) -> Result<Self, EnsembleError> {
        Self::new(pairs.iter().map(|&p| p.into()).collect())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[CellCoord] {
        &self.coords
    }

    pub fn neighbours(&self, cube: usize) -> &[usize] {
        &self.adjacency[cube]
    }

    pub fn occupant(&self, cell: CellCoord) -> Option<usize> {
        self.occupancy.get(&cell).copied()
    }

    pub fn is_occupied(&self, cell: CellCoord) -> bool {
        self.occupancy.contains_key(&cell)
    }

    /// Inclusive bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (CellCoord, CellCoord) {
        let mut lo = self.coords[0];
        let mut hi = self.coords[0];
        for c in &self.coords {
            lo = CellCoord::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = CellCoord::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        (lo, hi)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.len()
    }

    /// Pick the pivot corner and arc for `cmd`.
    ///
    /// A corner is a candidate when a face neighbour shares it and the
    /// commanded rotation swings the cube away from that neighbour. The
    /// rotation stops at 90° when the cell across the pivot from the 90°
    /// landing is occupied (flat surface), otherwise it carries on to 180°
    /// around the convex corner. Candidates are scanned NE, SE, SW, NW and the
    /// first whose swept cells are free wins; if every candidate is blocked the
    /// first one is returned so the collision check reports it.
    pub fn resolve_move(&self, cmd: MoveCommand) -> Result<MoveResolution, NoPivot> {
        resolve_pivot(self.coords[cmd.cube], cmd.direction, |c| {
            self.is_occupied(c)
        })
    }

    /// True iff every swept cell is free.
    pub fn check_collision(&self, resolution: &MoveResolution) -> bool {
        resolution.swept_cells.iter().all(|c| !self.is_occupied(*c))
    }

    /// Whether the rest of the ensemble stays connected when `moving` is
    /// lifted out.
    pub fn check_connectivity_full(&self, moving: usize) -> bool {
        self.connectivity_search(moving, None)
    }

    /// As [`Self::check_connectivity_full`] but only searching cubes within
    /// Chebyshev distance `radius` of the mover. Never true when the full
    /// check is false.
    pub fn check_connectivity_local(&self, moving: usize, radius: u32) -> bool {
        self.connectivity_search(moving, Some(radius))
    }

    pub fn check_connectivity(&self, moving: usize, mode: Connectivity) -> bool {
        match mode {
            Connectivity::Full => self.check_connectivity_full(moving),
            Connectivity::Local(r) => self.check_connectivity_local(moving, r),
        }
    }

    fn connectivity_search(&self, moving: usize, radius: Option<u32>) -> bool {
        let targets = &self.adjacency[moving];
        let Some((&first, rest)) = targets.split_first() else {
            return false;
        };
        if rest.is_empty() {
            return true;
        }
        let centre = self.coords[moving];
        let within = |j: usize| radius.is_none_or(|r| self.coords[j].chebyshev(centre) <= r as i32);
        let mut seen = vec![false; self.len()];
        seen[moving] = true;
        seen[first] = true;
        let mut remaining = rest.len();
        let mut queue = VecDeque::from([first]);
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if seen[j] || !within(j) {
                    continue;
                }
                seen[j] = true;
                if targets.contains(&j) {
                    remaining -= 1;
                    if remaining == 0 {
                        return true;
                    }
                }
                queue.push_back(j);
            }
        }
        false
    }

    /// Outcome `cmd` would have, without changing the ensemble.
    pub fn evaluate_move(&self, cmd: MoveCommand, mode: Connectivity) -> MoveOutcome {
        assert!(
            cmd.cube < self.len(),
            "cube index {} out of range for {} cubes",
            cmd.cube,
            self.len()
        );
        let Ok(resolution) = self.resolve_move(cmd) else {
            return MoveOutcome::RejectedNoPivot;
        };
        if !self.check_collision(&resolution) {
            return MoveOutcome::RejectedCollision;
        }
        if !self.check_connectivity(cmd.cube, mode) {
            return MoveOutcome::RejectedDisconnect;
        }
        MoveOutcome::Applied(resolution)
    }

    /// Resolve, check and (if legal) perform `cmd`. Rejected moves leave the
    /// ensemble untouched.
    pub fn apply_move(&mut self, cmd: MoveCommand, mode: Connectivity) -> MoveOutcome {
        let outcome = self.evaluate_move(cmd, mode);
        if let MoveOutcome::Applied(resolution) = &outcome {
            self.relocate(cmd.cube, resolution.destination);
        }
        outcome
    }

    fn relocate(&mut self, cube: usize, to: CellCoord) {
        let from = self.coords[cube];
        for j in std::mem::take(&mut self.adjacency[cube]) {
            self.adjacency[j].retain(|&k| k != cube);
        }
        self.occupancy.remove(&from);
        self.occupancy.insert(to, cube);
        self.coords[cube] = to;
        let mut fresh: Vec<usize> = to
            .face_neighbours()
            .iter()
            .filter_map(|c| self.occupancy.get(c).copied())
            .collect();
        fresh.sort_unstable();
        for &j in &fresh {
            let pos = self.adjacency[j].partition_point(|&k| k < cube);
            self.adjacency[j].insert(pos, cube);
        }
        self.adjacency[cube] = fresh;
    }

    /// Legality of every action `a = 2·cube + type`.
    pub fn legal_moves(&self, mode: Connectivity) -> Vec<bool> {
        (0..2 * self.len())
            .map(|a| {
                self.evaluate_move(MoveCommand::from_action(a), mode)
                    .is_applied()
            })
            .collect()
    }

    /// Image of the ensemble under a lattice symmetry (cube identities kept).
    pub fn transformed(&self, t: TransformId) -> Self {
        Self::new(self.coords.iter().map(|&c| t.apply_cell(c)).collect())
            .expect("symmetries preserve validity")
    }

    pub fn translated(&self, dx: i32, dy: i32) -> Self {
        Self::new(self.coords.iter().map(|c| c.offset(dx, dy)).collect())
            .expect("translation preserves validity")
    }

    /// Boundary-growth polyomino: start at the origin, repeatedly occupy a
    /// uniformly chosen free cell adjacent to the current set, then assign
    /// cube indices by a uniform permutation.
    pub fn random_connected(n: usize, seed: u64) -> Self {
        assert!(n >= 1, "need at least one cube");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells = vec![CellCoord::new(0, 0)];
        let mut occupied: HashSet<CellCoord> = cells.iter().copied().collect();
        let mut frontier: Vec<CellCoord> = Vec::new();
        let mut in_frontier: HashSet<CellCoord> = HashSet::new();
        let mut grow =
            |c: CellCoord, occupied: &HashSet<CellCoord>, frontier: &mut Vec<CellCoord>| {
                for nb in c.face_neighbours() {
                    if !occupied.contains(&nb) && in_frontier.insert(nb) {
                        frontier.push(nb);
                    }
                }
            };
        grow(cells[0], &occupied, &mut frontier);
        while cells.len() < n {
            let pick = rng.random_range(0..frontier.len());
            let c = frontier.swap_remove(pick);
            occupied.insert(c);
            cells.push(c);
            grow(c, &occupied, &mut frontier);
        }
        cells.shuffle(&mut rng);
        Self::new(cells).expect("grown polyomino is connected")
    }
}

/// Pivot selection for a cube at `start` given an occupancy predicate over
/// the other cells. Only cells within Chebyshev distance 2 of `start` are
/// consulted.
pub fn resolve_pivot(
    start: CellCoord,
    direction: Direction,
    occupied: impl Fn(CellCoord) -> bool,
) -> Result<MoveResolution, NoPivot> {
    let mut fallback = None;
    for corner in Corner::SCAN_ORDER {
        let table = pivot_table(corner, direction);
        if !occupied(start.offset(table.anchor.0, table.anchor.1)) {
            continue;
        }
        let beyond = start.offset(table.landing180.0, table.landing180.1);
        let (kind, landing, full_turn) = if occupied(beyond) {
            (PivotKind::Traversal90, table.landing90, false)
        } else {
            (PivotKind::Transfer180, table.landing180, true)
        };
        let resolution = MoveResolution {
            kind,
            corner,
            pivot_corner: corner.point_of(start),
            destination: start.offset(landing.0, landing.1),
            swept_cells: table.swept_cells(start, full_turn),
        };
        if resolution.swept_cells.iter().all(|&c| !occupied(c)) {
            return Ok(resolution);
        }
        fallback.get_or_insert(resolution);
    }
    fallback.ok_or(NoPivot)
}

/// Connectivity check that ignores adjacency caches: flood fill over raw
/// coordinates. Used as an independent oracle.
pub fn brute_force_connected(cells: &[CellCoord]) -> bool {
    if cells.is_empty() {
        return true;
    }
    let set: HashSet<CellCoord> = cells.iter().copied().collect();
    let mut seen = HashSet::from([cells[0]]);
    let mut stack = vec![cells[0]];
    while let Some(c) = stack.pop() {
        for nb in c.face_neighbours() {
            if set.contains(&nb) && seen.insert(nb) {
                stack.push(nb);
            }
        }
    }
    seen.len() == set.len()
}

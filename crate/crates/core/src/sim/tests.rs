use super::*;
use crate::geometry::{CellCoord, Direction, Rotation, TransformId};
use proptest::prelude::*;

fn line3() -> Ensemble {
    Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0)]).unwrap()
}

fn block2() -> Ensemble {
    Ensemble::from_pairs(&[(0, 0), (1, 0), (0, 1), (1, 1)]).unwrap()
}

fn c(x: i32, y: i32) -> CellCoord {
    CellCoord::new(x, y)
}

#[test]
fn construction_validates_invariants() {
    assert_eq!(Ensemble::new(vec![]), Err(EnsembleError::Empty));
    assert_eq!(
        Ensemble::from_pairs(&[(0, 0), (0, 0)]),
        Err(EnsembleError::Duplicate(c(0, 0)))
    );
    assert_eq!(
        Ensemble::from_pairs(&[(0, 0), (2, 0)]),
        Err(EnsembleError::Disconnected)
    );
    let e = block2();
    assert_eq!(e.neighbours(0), &[1, 2]);
    assert_eq!(e.neighbours(3), &[1, 2]);
}

#[test]
fn line_end_cube_transfers_around_its_neighbour() {
    let e = line3();
    let r = e.resolve_move(MoveCommand::new(2, Direction::Cw)).unwrap();
    assert_eq!(r.kind, PivotKind::Transfer180);
    assert_eq!(r.pivot_corner, (2, 0));
    assert_eq!(r.destination, c(1, -1));
    assert!(r.swept_cells.contains(&c(2, -1)));
    assert!(r.swept_cells.contains(&c(1, -1)));
    assert!(r.swept_cells.contains(&r.destination));
}

#[test]
fn single_cube_has_no_pivot() {
    let e = Ensemble::from_pairs(&[(0, 0)]).unwrap();
    for d in Direction::ALL {
        assert_eq!(e.resolve_move(MoveCommand::new(0, d)), Err(NoPivot));
        assert_eq!(
            e.evaluate_move(MoveCommand::new(0, d), Connectivity::Full),
            MoveOutcome::RejectedNoPivot
        );
    }
}

#[test]
fn block_corner_cube_wraps_around_the_block() {
    // Cube (1,1) has no surface to roll along: the candidate about its
    // south-west corner is blocked by (1,0), the south-east one swings over
    // the free side and around the convex corner.
    let e = block2();
    let r = e.resolve_move(MoveCommand::new(3, Direction::Cw)).unwrap();
    assert_eq!(r.kind, PivotKind::Transfer180);
    assert_eq!(r.pivot_corner, (2, 1));
    assert_eq!(r.destination, c(2, 0));
    assert!(e.check_collision(&r));
    let mut moved = e.clone();
    assert!(moved
        .apply_move(MoveCommand::new(3, Direction::Cw), Connectivity::Full)
        .is_applied());
    assert!(brute_force_connected(moved.coords()));
    assert!(moved.neighbours(3).contains(&1));
}

#[test]
fn cube_on_a_flat_surface_traverses() {
    let e = Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0), (0, 1)]).unwrap();
    let r = e.resolve_move(MoveCommand::new(3, Direction::Cw)).unwrap();
    assert_eq!(r.kind, PivotKind::Traversal90);
    assert_eq!(r.destination, c(1, 1));
    assert_eq!(r.swept_cells.len(), 3);
}

#[test]
fn collision_check_examples() {
    let e = line3();
    let r = e.resolve_move(MoveCommand::new(2, Direction::Cw)).unwrap();
    assert!(e.check_collision(&r));

    // Destination occupied.
    let blocked = Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0), (1, -1), (2, -1)]).unwrap();
    let r = blocked
        .resolve_move(MoveCommand::new(1, Direction::Ccw))
        .unwrap();
    assert_eq!(r.kind, PivotKind::Traversal90);
    assert_eq!(r.destination, c(1, -1));
    assert!(!blocked.check_collision(&r));

    // A cube under the landing cell turns the end transfer into a traversal.
    let stepped = Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0), (1, -1)]).unwrap();
    let r = stepped
        .resolve_move(MoveCommand::new(2, Direction::Cw))
        .unwrap();
    assert_eq!(r.kind, PivotKind::Traversal90);
    assert_eq!(r.destination, c(2, -1));
    assert!(stepped.check_collision(&r));

    // A spill cell found by the sweep oracle, away from the destination.
    let spill = sweep_oracle(
        c(2, 0),
        (2, 0),
        180,
        Direction::Cw,
        SweepSampling::default(),
    )
    .unwrap();
    assert!(spill.contains(&c(3, 0)));
    let e = line3();
    let r = e.resolve_move(MoveCommand::new(2, Direction::Cw)).unwrap();
    let with_spill = Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0), (3, 0)]).unwrap();
    assert!(!with_spill.is_occupied(r.destination));
    assert!(!with_spill.check_collision(&r));
}

#[test]
fn connectivity_examples() {
    let e = line3();
    assert!(!e.check_connectivity_full(1));
    assert!(e.check_connectivity_full(0));
    assert!(e.check_connectivity_full(2));
    let b = block2();
    for i in 0..4 {
        let rest: Vec<_> = b
            .coords()
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, c)| *c)
            .collect();
        assert_eq!(b.check_connectivity_full(i), brute_force_connected(&rest));
        assert!(b.check_connectivity_full(i));
    }
}

/// Ring around an empty cell: the mover's two neighbours only meet again
/// two cells away.
fn ring() -> Ensemble {
    Ensemble::from_pairs(&[
        (0, 0),
        (1, 0),
        (2, 0),
        (2, 1),
        (2, 2),
        (1, 2),
        (0, 2),
        (0, 1),
    ])
    .unwrap()
}

#[test]
fn local_search_is_conservative_on_a_ring() {
    let e = ring();
    assert!(e.check_connectivity_full(0));
    assert!(!e.check_connectivity_local(0, 1));
    assert!(e.check_connectivity_local(0, 2));
}

#[test]
fn large_radius_equals_full_search() {
    for seed in 0..200 {
        let e = Ensemble::random_connected(9, seed);
        for i in 0..e.len() {
            assert_eq!(
                e.check_connectivity_local(i, 9),
                e.check_connectivity_full(i)
            );
        }
    }
}

#[test]
fn apply_move_examples() {
    let mut l = Ensemble::from_pairs(&[(0, 0), (1, 0), (1, 1)]).unwrap();
    let before = l.clone();
    assert_eq!(
        l.apply_move(MoveCommand::new(1, Direction::Cw), Connectivity::Full),
        MoveOutcome::RejectedDisconnect
    );
    assert_eq!(l, before);

    let mut e = line3();
    let before = e.clone();
    assert_eq!(
        e.apply_move(MoveCommand::new(1, Direction::Cw), Connectivity::Full),
        MoveOutcome::RejectedCollision
    );
    assert_eq!(e, before);

    let out = e.apply_move(MoveCommand::new(2, Direction::Cw), Connectivity::Full);
    assert!(out.is_applied());
    assert!(brute_force_connected(e.coords()));
    assert_eq!(e.coords()[2], c(1, -1));

    let back = e.apply_move(MoveCommand::new(2, Direction::Ccw), Connectivity::Full);
    assert!(back.is_applied());
    assert_eq!(e, before);
}

#[test]
fn legal_moves_examples() {
    let single = Ensemble::from_pairs(&[(0, 0)]).unwrap();
    assert_eq!(single.legal_moves(Connectivity::Full), vec![false, false]);
    let mask = line3().legal_moves(Connectivity::Full);
    assert_eq!(mask.len(), 6);
    assert!(!mask[2] && !mask[3]);
}

#[test]
fn legal_moves_match_per_action_application() {
    for seed in 0..300 {
        let e = Ensemble::random_connected(9, seed);
        for mode in [
            Connectivity::Full,
            Connectivity::Local(1),
            Connectivity::Local(2),
        ] {
            let mask = e.legal_moves(mode);
            for (a, &legal) in mask.iter().enumerate() {
                let mut probe = e.clone();
                let applied = probe
                    .apply_move(MoveCommand::from_action(a), mode)
                    .is_applied();
                assert_eq!(legal, applied, "seed {seed} action {a}");
            }
        }
    }
}

#[test]
fn render_examples() {
    let single = Ensemble::from_pairs(&[(0, 0)]).unwrap();
    let img = render_images(&single, 5).unwrap();
    assert_eq!(img.cube_count(), 1);
    assert_eq!(img.binary[img.offset(2, 2)], 1);

    let line = Ensemble::new((0..9).map(|x| c(x, 0)).collect()).unwrap();
    let img = render_images(&line, 19).unwrap();
    for col in 0..19 {
        for row in 0..19 {
            let expect = u8::from(row == 9 && (5..14).contains(&col));
            assert_eq!(img.binary[img.offset(col, row)], expect);
        }
    }
    assert!(img.is_consistent());
    assert!(matches!(
        render_images(&line, 8),
        Err(RenderError::DoesNotFit { .. })
    ));
}

#[test]
fn centring_ties_go_lower_left() {
    let pair = Ensemble::from_pairs(&[(0, 0), (1, 0)]).unwrap();
    let img = render_images(&pair, 5).unwrap();
    assert_eq!(img.index[img.offset(1, 2)], 0);
    assert_eq!(img.index[img.offset(2, 2)], 1);
}

#[test]
fn random_ensembles_are_deterministic_and_valid() {
    assert_eq!(Ensemble::random_connected(1, 7).coords(), &[c(0, 0)]);
    assert_eq!(
        Ensemble::random_connected(9, 42),
        Ensemble::random_connected(9, 42)
    );
    for seed in 0..10_000 {
        let e = Ensemble::random_connected(9, seed);
        assert_eq!(e.len(), 9);
        assert!(brute_force_connected(e.coords()));
        let distinct: std::collections::HashSet<_> = e.coords().iter().collect();
        assert_eq!(distinct.len(), 9);
        for i in 0..9 {
            for j in 0..9 {
                let adjacent = e.coords()[i].l1(e.coords()[j]) == 1;
                assert_eq!(e.neighbours(i).contains(&j), adjacent);
            }
        }
    }
}

fn assert_adjacency_consistent(e: &Ensemble) {
    for i in 0..e.len() {
        for j in 0..e.len() {
            assert_eq!(
                e.neighbours(i).contains(&j),
                e.coords()[i].l1(e.coords()[j]) == 1
            );
        }
    }
}

#[test]
fn dynamics_commute_with_lattice_symmetries() {
    for seed in 0..300 {
        let e = Ensemble::random_connected(8, seed);
        for t in TransformId::all() {
            let te = e.transformed(t);
            for a in 0..2 * e.len() {
                let cmd = MoveCommand::from_action(a);
                let tcmd = MoveCommand::new(cmd.cube, t.apply_direction(cmd.direction));
                let out = e.evaluate_move(cmd, Connectivity::Full);
                let tout = te.evaluate_move(tcmd, Connectivity::Full);
                match (&out, &tout) {
                    (MoveOutcome::Applied(r), MoveOutcome::Applied(tr)) => {
                        assert_eq!(t.apply_cell(r.destination), tr.destination);
                        assert_eq!(r.kind, tr.kind);
                    }
                    _ => assert_eq!(out, tout, "seed {seed} {t} action {a}"),
                }
            }
        }
    }
}

#[test]
fn rotation_by_quarter_turn_rotates_outcome() {
    let e = line3();
    let t = TransformId::new(Rotation::R90, false);
    let r = e.resolve_move(MoveCommand::new(2, Direction::Cw)).unwrap();
    let tr = e
        .transformed(t)
        .resolve_move(MoveCommand::new(2, Direction::Cw))
        .unwrap();
    assert_eq!(tr.destination, t.apply_cell(r.destination));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_walks_preserve_invariants(seed in 0u64..1_000_000, n in 2usize..12, walk in proptest::collection::vec(0usize..64, 1..60)) {
        let mut e = Ensemble::random_connected(n, seed);
        for step in walk {
            let a = step % (2 * n);
            let before = e.clone();
            let out = e.apply_move(MoveCommand::from_action(a), Connectivity::Full);
            if !out.is_applied() {
                prop_assert_eq!(&e, &before);
            }
            prop_assert!(brute_force_connected(e.coords()));
            assert_adjacency_consistent(&e);
        }
    }

    #[test]
    fn local_legality_implies_full_legality(seed in 0u64..1_000_000, n in 2usize..12, r in 1u32..5) {
        let e = Ensemble::random_connected(n, seed);
        for i in 0..n {
            if e.check_connectivity_local(i, r) {
                prop_assert!(e.check_connectivity_full(i));
            }
        }
        let local = e.legal_moves(Connectivity::Local(r));
        let full = e.legal_moves(Connectivity::Full);
        for (l, f) in local.iter().zip(&full) {
            prop_assert!(!l || *f);
        }
    }

    #[test]
    fn rendering_is_translation_invariant(seed in 0u64..1_000_000, n in 1usize..12, dx in -50i32..50, dy in -50i32..50) {
        let e = Ensemble::random_connected(n, seed);
        let side = canvas_side_for(n);
        let a = render_images(&e, side).unwrap();
        let b = render_images(&e.translated(dx, dy), side).unwrap();
        prop_assert_eq!(&a.binary, &b.binary);
        prop_assert_eq!(&a.index, &b.index);
        prop_assert!(a.is_consistent());
        prop_assert_eq!(a.cube_count(), n);
    }
}

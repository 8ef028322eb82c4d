mod common;

use common::{flood_fill, random_grid, ring_problem, same_partition, unit_grid, GOAL, START};
use contact_gpis::constraints::{
    connected_components, no_penetration, path_exists, ConstraintAux, ConstraintSet, ConstraintSpec,
};
use contact_gpis::gp::{KernelParams, TrainingSet};
use contact_gpis::gpis::{Gpis, SurfaceEstimate};
use contact_gpis::refine::{refine_contacts, RefineConfig};
use contact_gpis::state::StateSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn components_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let w = rng.random_range(1..=64);
        let h = rng.random_range(1..=64);
        let density = rng.random_range(0.1..0.7);
        let g = random_grid(&mut rng, w, h, density);
        let ours = connected_components(&g);
        let oracle = flood_fill(&g);
        assert!(same_partition(&ours.labels, &oracle));
        assert_eq!(ours.count as u32, oracle.iter().copied().max().unwrap_or(0));
    }
}

#[test]
fn closed_ring_blocks_and_open_ring_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (dp, base, _, _) = ring_problem(&mut rng, 0);
    let spec = unit_grid(0.02);
    let closed = base.conditioned_on(dp.active_training_set()).unwrap();
    assert!(!path_exists(&closed, &START, &[GOAL.to_vec()], &spec));

    // drop the four ring points facing the start
    let dir = [START[0] - GOAL[0], START[1] - GOAL[1]];
    let mut facing: Vec<(usize, f64)> = dp
        .active()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_interior())
        .map(|(i, d)| {
            (
                i,
                (d.point[0] - GOAL[0]) * dir[0] + (d.point[1] - GOAL[1]) * dir[1],
            )
        })
        .collect();
    facing.sort_by(|a, b| b.1.total_cmp(&a.1));
    let drop: Vec<usize> = facing[..4].iter().map(|f| f.0).collect();
    let keep: Vec<bool> = (0..dp.active().len()).map(|i| !drop.contains(&i)).collect();
    let open = base
        .conditioned_on(dp.active_training_set().subset(&keep))
        .unwrap();
    let grid = open.occupancy_grid(&spec).unwrap();
    let labels = flood_fill(&grid);
    let shape = spec.shape();
    let a = labels[contact_gpis::grid::flat_index(&spec.cell_of(&START, &shape), &shape)];
    let b = labels[contact_gpis::grid::flat_index(&spec.cell_of(&GOAL, &shape), &shape)];
    assert_eq!(
        path_exists(&open, &START, &[GOAL.to_vec()], &spec),
        a != 0 && a == b
    );
    assert!(a != 0 && a == b);
}

#[test]
fn median_penetration_is_the_sign_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let g = Gpis::new(2, KernelParams::new(0.3, 1.0, 1e-4).unwrap())
            .conditioned_on(TrainingSet::from_points(2, &pts, &ys).unwrap())
            .unwrap();
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let x = StateSet::point(&q);
        assert_eq!(no_penetration(&g, &x, 0.5).unwrap(), g.mean(&q) > 0.0);
    }
}

#[test]
fn refinement_opens_an_encircled_goal() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut dp, base, constraints, aux) = ring_problem(&mut rng, 0);
        let exterior_before: Vec<_> = dp
            .active()
            .iter()
            .filter(|d| !d.is_interior())
            .cloned()
            .collect();
        assert!(!constraints
            .satisfied(
                &base.conditioned_on(dp.active_training_set()).unwrap(),
                &aux
            )
            .unwrap());
        let rec = refine_contacts(
            &mut dp,
            &base,
            &constraints,
            &aux,
            RefineConfig {
                generations: 25,
                population: 20,
                seed,
            },
        )
        .unwrap();
        assert!(rec.found_feasible, "seed {seed}");
        assert!(rec.generations <= 25);
        let after = base.conditioned_on(dp.active_training_set()).unwrap();
        assert!(constraints.satisfied(&after, &aux).unwrap());
        assert!(rec.removed.iter().all(|d| d.is_interior()));
        for d in &exterior_before {
            assert!(dp.active().contains(d));
        }
        assert!(rec.removed.iter().all(|d| dp.in_memory(d)));
        assert!(!rec.removed.is_empty());
    }
}

#[test]
fn refinement_purges_local_minimum_points_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut dp, base, constraints, aux) = ring_problem(&mut rng, 4);
    assert_eq!(dp.active_mask().iter().filter(|m| **m).count(), 4);
    let rec = refine_contacts(
        &mut dp,
        &base,
        &constraints,
        &aux,
        RefineConfig {
            generations: 25,
            population: 20,
            seed: 4,
        },
    )
    .unwrap();
    assert_eq!(rec.active_before - rec.active_after_purge, 4);
    assert!(dp.active().iter().all(|d| !d.local_min));
    assert!(dp.memory().iter().all(|d| !d.local_min));
}

#[test]
fn infeasible_refinement_only_purges() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dp, base, _, _) = ring_problem(&mut rng, 3);
    // a component far from every datum sits at the prior mean 0
    let constraints =
        ConstraintSet::new(vec![ConstraintSpec::NoPenetration { zeta: 0.4 }]).unwrap();
    let aux = ConstraintAux {
        state: StateSet::point(&[5.0, 5.0]),
        goals: vec![GOAL.to_vec()],
    };
    let rec = refine_contacts(
        &mut dp,
        &base,
        &constraints,
        &aux,
        RefineConfig {
            generations: 5,
            population: 8,
            seed: 2,
        },
    )
    .unwrap();
    assert!(!rec.found_feasible);
    assert!(rec.removed.is_empty());
    assert_eq!(dp.active().len(), rec.active_after_purge);
}

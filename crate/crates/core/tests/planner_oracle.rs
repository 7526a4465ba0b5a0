mod common;

use common::{random_heightmap, random_model, rng, ucs_oracle};
use rand::Rng;
use slope_energy::path::energy_of_path;
use slope_energy::planner::{LatticeConfig, LatticeExtent, Node, Planner};
use slope_energy::{Terrain, WrenchModel};

#[test]
fn matches_uniform_cost_search_on_heightmaps() {
    let mut r = rng(11);
    for _ in 0..15 {
        let cols = r.random_range(2..14);
        let rows = r.random_range(2..14);
        let cell = r.random_range(0.5..2.0);
        let terrain = random_heightmap(&mut r, cols, rows, cell);
        let model = random_model(&mut r);
        let cfg = LatticeConfig {
            cell_size_m: cell,
            allow_lateral: r.random_bool(0.3),
            ..Default::default()
        };
        let start = Node::new(r.random_range(0..cols), r.random_range(0..rows), r.random_range(0..16));
        let goal = (r.random_range(0..cols), r.random_range(0..rows));
        let planner = Planner::new(&terrain, &model, cfg).unwrap();
        let plan = planner.plan(start, goal).unwrap();
        let oracle = ucs_oracle(
            &terrain,
            &model,
            &cfg,
            cols,
            rows,
            [0.0, 0.0],
            (start.col, start.row, start.heading),
            goal,
        )
        .unwrap();
        assert!(
            (plan.energy_j - oracle).abs() <= 1e-9 * oracle.max(1.0),
            "planner {} vs oracle {}",
            plan.energy_j,
            oracle
        );
        let end = plan.path.end();
        let [gx, gy] = planner.lattice().position(goal.0, goal.1);
        assert!((end.x - gx).hypot(end.y - gy) < 1e-9);
    }
}

#[test]
fn plane_plans_reintegrate_exactly() {
    let terrain = Terrain::plane(12f64.to_radians(), 0.7).unwrap();
    let model = WrenchModel::reference();
    let cfg = LatticeConfig {
        extent: Some(LatticeExtent {
            origin: [0.0, 0.0],
            cols: 12,
            rows: 12,
        }),
        ..Default::default()
    };
    let plan = Planner::new(&terrain, &model, cfg)
        .unwrap()
        .plan(Node::new(1, 1, 0), (10, 9))
        .unwrap();
    let e = energy_of_path(&plan.path, &terrain, &model, 0.01).unwrap().total_j;
    // straights are exact on a plane; turns see a heading-dependent slope frame
    assert!((e - plan.energy_j).abs() <= 1e-6 * plan.energy_j);
}

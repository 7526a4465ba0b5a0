//! Minimum-energy planning on a heading-augmented grid lattice.
//!
//! Nodes are `(col, row, heading)`. From every node the robot may walk
//! forward to the 8-connected neighbour its heading points at (headings that
//! point between neighbours only turn), or turn in place by one heading step.
//! Edge energies come straight from the wrench model: power at the edge
//! midpoint times the edge duration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{BodyAxis, PathSpec, Primitive};
use crate::se2::{Pose, Twist};
use crate::terrain::Terrain;
use crate::wrench::WrenchModel;

const ALIGN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeExtent {
    pub origin: [f64; 2],
    pub cols: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub cell_size_m: f64,
    pub headings: usize,
    pub speed_mps: f64,
    pub omega_radps: f64,
    /// Adds sideways steps, costed with the lateral force.
    pub allow_lateral: bool,
    /// Required on unbounded terrain; defaults to the heightmap extent otherwise.
    pub extent: Option<LatticeExtent>,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            cell_size_m: 1.0,
            headings: 16,
            speed_mps: 0.3,
            omega_radps: 0.5,
            allow_lateral: false,
            extent: None,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::InvalidConfig("cell_size_m must be > 0".into()));
        }
        if self.headings < 4 {
            return Err(Error::InvalidConfig("at least 4 headings are required".into()));
        }
        if !(self.speed_mps > 0.0 && self.omega_radps > 0.0) {
            return Err(Error::InvalidConfig("speed_mps and omega_radps must be > 0".into()));
        }
        if let Some(e) = self.extent {
            if e.cols == 0 || e.rows == 0 {
                return Err(Error::InvalidConfig("lattice extent must be non-empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub col: usize,
    pub row: usize,
    pub heading: usize,
}

impl Node {
    pub fn new(col: usize, row: usize, heading: usize) -> Self {
        Self { col, row, heading }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Forward,
    LateralLeft,
    LateralRight,
    TurnLeft,
    TurnRight,
}

impl Move {
    pub fn is_turn(&self) -> bool {
        matches!(self, Move::TurnLeft | Move::TurnRight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: Node,
    pub mv: Move,
    pub energy: f64,
    /// Edge length in meters (0 for turns).
    pub length: f64,
}

/// Implicit lattice over a terrain; edges are generated on demand.
#[derive(Debug, Clone)]
pub struct Lattice<'a> {
    terrain: &'a Terrain,
    model: &'a WrenchModel,
    cfg: LatticeConfig,
    extent: LatticeExtent,
    forward: Vec<Option<(i64, i64)>>,
    left: Vec<Option<(i64, i64)>>,
    right: Vec<Option<(i64, i64)>>,
}

fn aligned_offset(angle: f64) -> Option<(i64, i64)> {
    let (s, c) = angle.sin_cos();
    for dx in -1i64..=1 {
        for dy in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let n = ((dx * dx + dy * dy) as f64).sqrt();
            if (dx as f64 / n - c).abs() < ALIGN_EPS && (dy as f64 / n - s).abs() < ALIGN_EPS {
                return Some((dx, dy));
            }
        }
    }
    None
}

impl<'a> Lattice<'a> {
    pub fn new(terrain: &'a Terrain, model: &'a WrenchModel, cfg: LatticeConfig) -> Result<Self> {
        cfg.validate()?;
        let extent = match (cfg.extent, terrain.bounds()) {
            (Some(e), _) => e,
            (None, Some([x0, y0, x1, y1])) => LatticeExtent {
                origin: [x0, y0],
                cols: ((x1 - x0) / cfg.cell_size_m + ALIGN_EPS).floor() as usize + 1,
                rows: ((y1 - y0) / cfg.cell_size_m + ALIGN_EPS).floor() as usize + 1,
            },
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "an unbounded terrain needs an explicit lattice extent".into(),
                ))
            }
        };
        let far = [
            extent.origin[0] + (extent.cols - 1) as f64 * cfg.cell_size_m,
            extent.origin[1] + (extent.rows - 1) as f64 * cfg.cell_size_m,
        ];
        if !terrain.contains(extent.origin[0], extent.origin[1]) || !terrain.contains(far[0], far[1]) {
            return Err(Error::InvalidConfig("lattice extent exceeds the terrain".into()));
        }
        let h = cfg.headings;
        let angle = |k: usize| 2.0 * PI * k as f64 / h as f64;
        let forward = (0..h).map(|k| aligned_offset(angle(k))).collect();
        let (left, right) = if cfg.allow_lateral {
            (
                (0..h).map(|k| aligned_offset(angle(k) + PI / 2.0)).collect(),
                (0..h).map(|k| aligned_offset(angle(k) - PI / 2.0)).collect(),
            )
        } else {
            (vec![None; h], vec![None; h])
        };
        Ok(Self {
            terrain,
            model,
            cfg,
            extent,
            forward,
            left,
            right,
        })
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.cfg
    }

    pub fn extent(&self) -> LatticeExtent {
        self.extent
    }

    pub fn node_count(&self) -> usize {
        self.extent.cols * self.extent.rows * self.cfg.headings
    }

    pub fn index(&self, n: Node) -> usize {
        (n.row * self.extent.cols + n.col) * self.cfg.headings + n.heading
    }

    pub fn node(&self, index: usize) -> Node {
        let h = self.cfg.headings;
        let cell = index / h;
        Node::new(cell % self.extent.cols, cell / self.extent.cols, index % h)
    }

    pub fn contains(&self, n: Node) -> bool {
        n.col < self.extent.cols && n.row < self.extent.rows && n.heading < self.cfg.headings
    }

    pub fn position(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.extent.origin[0] + col as f64 * self.cfg.cell_size_m,
            self.extent.origin[1] + row as f64 * self.cfg.cell_size_m,
        ]
    }

    pub fn heading_angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.cfg.headings as f64
    }

    pub fn heading_step(&self) -> f64 {
        2.0 * PI / self.cfg.headings as f64
    }

    pub fn pose(&self, n: Node) -> Pose {
        let [x, y] = self.position(n.col, n.row);
        Pose::new(x, y, self.heading_angle(n.heading))
    }

    fn energy(&self, at: Pose, twist: Twist, duration: f64) -> Result<f64> {
        let frame = self.terrain.frame_at(&at)?;
        let e = self.model.power(&frame, &twist) * duration;
        if !e.is_finite() {
            return Err(Error::NonFinitePower { t: 0.0 });
        }
        if e < 0.0 {
            return Err(Error::NegativeEdgeCost { energy: e });
        }
        Ok(e)
    }

    fn step(&self, n: Node, off: Option<(i64, i64)>, mv: Move, twist: Twist) -> Result<Option<Edge>> {
        let Some((dx, dy)) = off else { return Ok(None) };
        let col = n.col as i64 + dx;
        let row = n.row as i64 + dy;
        if col < 0 || row < 0 || col >= self.extent.cols as i64 || row >= self.extent.rows as i64 {
            return Ok(None);
        }
        let to = Node::new(col as usize, row as usize, n.heading);
        let [x0, y0] = self.position(n.col, n.row);
        let [x1, y1] = self.position(to.col, to.row);
        let length = (x1 - x0).hypot(y1 - y0);
        let mid = Pose::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), self.heading_angle(n.heading));
        let energy = self.energy(mid, twist, length / self.cfg.speed_mps)?;
        Ok(Some(Edge { to, mv, energy, length }))
    }

    /// Outgoing edges of `n`, translations first, then left and right turns.
    pub fn successors(&self, n: Node) -> Result<Vec<Edge>> {
        let v = self.cfg.speed_mps;
        let w = self.cfg.omega_radps;
        let mut out = Vec::with_capacity(5);
        let moves = [
            (self.forward[n.heading], Move::Forward, Twist::new(v, 0.0, 0.0)),
            (self.left[n.heading], Move::LateralLeft, Twist::new(0.0, v, 0.0)),
            (self.right[n.heading], Move::LateralRight, Twist::new(0.0, -v, 0.0)),
        ];
        for (off, mv, twist) in moves {
            if let Some(e) = self.step(n, off, mv, twist)? {
                out.push(e);
            }
        }
        let h = self.cfg.headings;
        let step = self.heading_step();
        let [x, y] = self.position(n.col, n.row);
        let yaw = self.heading_angle(n.heading);
        for (mv, sign, next) in [
            (Move::TurnLeft, 1.0, (n.heading + 1) % h),
            (Move::TurnRight, -1.0, (n.heading + h - 1) % h),
        ] {
            // frame sampled at the mid-turn heading
            let mid = Pose::new(x, y, yaw + 0.5 * sign * step);
            let energy = self.energy(mid, Twist::new(0.0, 0.0, sign * w), step / w)?;
            out.push(Edge {
                to: Node::new(n.col, n.row, next),
                mv,
                energy,
                length: 0.0,
            });
        }
        Ok(out)
    }

    /// Edges entering `n`.
    pub fn predecessors(&self, n: Node) -> Result<Vec<(Node, Edge)>> {
        let h = self.cfg.headings;
        let mut candidates = vec![
            Node::new(n.col, n.row, (n.heading + 1) % h),
            Node::new(n.col, n.row, (n.heading + h - 1) % h),
        ];
        for off in [self.forward[n.heading], self.left[n.heading], self.right[n.heading]]
            .into_iter()
            .flatten()
        {
            let col = n.col as i64 - off.0;
            let row = n.row as i64 - off.1;
            if col >= 0 && row >= 0 && (col as usize) < self.extent.cols && (row as usize) < self.extent.rows {
                candidates.push(Node::new(col as usize, row as usize, n.heading));
            }
        }
        let mut out = Vec::new();
        for c in candidates {
            for e in self.successors(c)? {
                if e.to == n {
                    out.push((c, e));
                }
            }
        }
        Ok(out)
    }

    /// Smallest energy per meter over every translation edge of the lattice.
    pub fn min_cost_per_meter(&self) -> Result<f64> {
        let mut best = f64::INFINITY;
        for i in 0..self.node_count() {
            for e in self.successors(self.node(i))? {
                if e.length > 0.0 {
                    best = best.min(e.energy / e.length);
                }
            }
        }
        Ok(if best.is_finite() { best } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub schema_version: u32,
    pub path: PathSpec,
    pub energy_j: f64,
    pub expanded_nodes: usize,
    pub runtime_ms: f64,
    #[serde(skip)]
    pub nodes: Vec<Node>,
    #[serde(skip)]
    pub moves: Vec<Move>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HeuristicAudit {
    pub checked: usize,
    pub violations: usize,
    pub worst_excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    turns: u32,
    index: usize,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.turns.cmp(&self.turns))
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Planner<'a> {
    lattice: Lattice<'a>,
    cost_per_meter: f64,
}

impl<'a> Planner<'a> {
    pub fn new(terrain: &'a Terrain, model: &'a WrenchModel, cfg: LatticeConfig) -> Result<Self> {
        let lattice = Lattice::new(terrain, model, cfg)?;
        let cost_per_meter = lattice.min_cost_per_meter()?;
        Ok(Self {
            lattice,
            cost_per_meter,
        })
    }

    pub fn lattice(&self) -> &Lattice<'a> {
        &self.lattice
    }

    /// Straight-line distance to the goal cell times the cheapest energy per meter.
    pub fn heuristic(&self, n: Node, goal: (usize, usize)) -> f64 {
        let [x0, y0] = self.lattice.position(n.col, n.row);
        let [x1, y1] = self.lattice.position(goal.0, goal.1);
        (x1 - x0).hypot(y1 - y0) * self.cost_per_meter
    }

    pub fn plan(&self, start: Node, goal: (usize, usize)) -> Result<Plan> {
        self.search(start, goal, None)
    }

    /// Plans and checks `h(n) <= cost-to-go(n)` on every expanded node.
    pub fn plan_audited(&self, start: Node, goal: (usize, usize)) -> Result<(Plan, HeuristicAudit)> {
        let mut expanded = Vec::new();
        let plan = self.search(start, goal, Some(&mut expanded))?;
        let to_go = self.cost_to_go(goal)?;
        let mut audit = HeuristicAudit::default();
        for i in expanded {
            let n = self.lattice.node(i);
            let excess = self.heuristic(n, goal) - to_go[i];
            audit.checked += 1;
            if excess > 1e-9 * to_go[i].abs().max(1.0) {
                audit.violations += 1;
                audit.worst_excess = audit.worst_excess.max(excess);
            }
        }
        Ok((plan, audit))
    }

    /// Exact remaining energy from every node to any node of the goal cell.
    pub fn cost_to_go(&self, goal: (usize, usize)) -> Result<Vec<f64>> {
        let lat = &self.lattice;
        let mut dist = vec![f64::INFINITY; lat.node_count()];
        let mut heap = BinaryHeap::new();
        for k in 0..lat.config().headings {
            let i = lat.index(Node::new(goal.0, goal.1, k));
            dist[i] = 0.0;
            heap.push(OpenEntry { f: 0.0, turns: 0, index: i });
        }
        while let Some(OpenEntry { f, index, .. }) = heap.pop() {
            if f > dist[index] {
                continue;
            }
            for (p, e) in lat.predecessors(lat.node(index))? {
                let j = lat.index(p);
                let d = f + e.energy;
                if d < dist[j] {
                    dist[j] = d;
                    heap.push(OpenEntry { f: d, turns: 0, index: j });
                }
            }
        }
        Ok(dist)
    }

    fn search(&self, start: Node, goal: (usize, usize), mut expanded: Option<&mut Vec<usize>>) -> Result<Plan> {
        let clock = Instant::now();
        let lat = &self.lattice;
        if !lat.contains(start) || !lat.contains(Node::new(goal.0, goal.1, 0)) {
            return Err(Error::InvalidConfig("start or goal outside the lattice".into()));
        }
        let n_nodes = lat.node_count();
        let mut g = vec![f64::INFINITY; n_nodes];
        let mut turns = vec![u32::MAX; n_nodes];
        let mut parent: Vec<Option<(usize, Move)>> = vec![None; n_nodes];
        let mut closed = vec![false; n_nodes];
        let mut heap = BinaryHeap::new();

        let s = lat.index(start);
        g[s] = 0.0;
        turns[s] = 0;
        heap.push(OpenEntry {
            f: self.heuristic(start, goal),
            turns: 0,
            index: s,
        });
        let mut expanded_count = 0;
        let mut reached = None;

        while let Some(OpenEntry { index, .. }) = heap.pop() {
            if closed[index] {
                continue;
            }
            closed[index] = true;
            let n = lat.node(index);
            if (n.col, n.row) == goal {
                reached = Some(index);
                break;
            }
            expanded_count += 1;
            if let Some(list) = expanded.as_deref_mut() {
                list.push(index);
            }
            for e in lat.successors(n)? {
                let j = lat.index(e.to);
                if closed[j] {
                    continue;
                }
                let ng = g[index] + e.energy;
                let nt = turns[index] + u32::from(e.mv.is_turn());
                if ng < g[j] || (ng == g[j] && nt < turns[j]) {
                    g[j] = ng;
                    turns[j] = nt;
                    parent[j] = Some((index, e.mv));
                    heap.push(OpenEntry {
                        f: ng + self.heuristic(e.to, goal),
                        turns: nt,
                        index: j,
                    });
                }
            }
        }

        let end = reached.ok_or(Error::NoPath)?;
        let mut nodes = vec![lat.node(end)];
        let mut moves = Vec::new();
        let mut cur = end;
        while let Some((p, mv)) = parent[cur] {
            nodes.push(lat.node(p));
            moves.push(mv);
            cur = p;
        }
        nodes.reverse();
        moves.reverse();
        let path = self.to_path(start, &moves);
        Ok(Plan {
            schema_version: 1,
            path,
            energy_j: g[end],
            expanded_nodes: expanded_count,
            runtime_ms: clock.elapsed().as_secs_f64() * 1e3,
            nodes,
            moves,
        })
    }

    /// Converts a move sequence into primitives, merging runs of identical moves.
    pub fn to_path(&self, start: Node, moves: &[Move]) -> PathSpec {
        let lat = &self.lattice;
        let cfg = lat.config();
        let mut prims: Vec<Primitive> = Vec::new();
        let mut heading = start.heading;
        let h = cfg.headings;
        let mut last: Option<Move> = None;
        for &mv in moves {
            let extend = last == Some(mv);
            match mv {
                Move::Forward | Move::LateralLeft | Move::LateralRight => {
                    let off = match mv {
                        Move::Forward => lat.forward[heading],
                        Move::LateralLeft => lat.left[heading],
                        _ => lat.right[heading],
                    }
                    .expect("move exists on the lattice");
                    let len = cfg.cell_size_m * ((off.0 * off.0 + off.1 * off.1) as f64).sqrt();
                    let axis = match mv {
                        Move::Forward => BodyAxis::Forward,
                        Move::LateralLeft => BodyAxis::Lateral,
                        _ => BodyAxis::LateralRight,
                    };
                    match prims.last_mut() {
                        Some(Primitive::Straight { length_m, .. }) if extend => *length_m += len,
                        _ => prims.push(Primitive::Straight {
                            length_m: len,
                            speed_mps: cfg.speed_mps,
                            axis,
                        }),
                    }
                }
                Move::TurnLeft | Move::TurnRight => {
                    let sign = if mv == Move::TurnLeft { 1.0 } else { -1.0 };
                    heading = if mv == Move::TurnLeft { (heading + 1) % h } else { (heading + h - 1) % h };
                    match prims.last_mut() {
                        Some(Primitive::Turn { delta_yaw_rad, .. }) if extend => {
                            *delta_yaw_rad += sign * lat.heading_step()
                        }
                        _ => prims.push(Primitive::Turn {
                            delta_yaw_rad: sign * lat.heading_step(),
                            omega_radps: cfg.omega_radps,
                        }),
                    }
                }
            }
            last = Some(mv);
        }
        PathSpec::new(lat.pose(start), prims)
    }
}

/// One-shot planning: builds the lattice and searches it.
pub fn plan(
    start: Node,
    goal: (usize, usize),
    terrain: &Terrain,
    model: &WrenchModel,
    cfg: LatticeConfig,
) -> Result<Plan> {
    Planner::new(terrain, model, cfg)?.plan(start, goal)
}

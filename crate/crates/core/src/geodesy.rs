//! Shortest-path machinery on occupancy grids.
//!
//! Two distance-field solvers share the same grid conventions:
//!
//! * [`distance_field_dijkstra`]: exact 8-connected shortest paths with axis
//!   cost `h` and diagonal cost `h·√2`. A diagonal move requires both
//!   adjacent axis cells to be free (no corner cutting).
//! * [`distance_field_fmm`]: fast marching on the 8-neighbour simplex
//!   stencil. Each update solves the first-order eikonal equation
//!   `|∇T| = 1` on the triangle formed by one axis neighbour and one
//!   diagonal neighbour, falling back to the single-neighbour edge updates.
//!   Because the edge updates are exactly the Dijkstra edges and the simplex
//!   update minimises over linear interpolants, the result satisfies
//!   `euclidean ≤ fmm ≤ dijkstra8` for point sources.
//!
//! The multi-goal optimum `g` is an exact Dijkstra over `(cell, satisfied
//! category mask)`; [`brute_force_multigoal`] is an independent enumerator
//! used to check it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{CategoryId, Cell, GridScene, Traversable};

/// Slack used whenever a distance is compared against a radius.
pub const RADIUS_EPS: f64 = 1e-9;

pub fn within_radius(distance: f64, radius: f64) -> bool {
    distance <= radius + RADIUS_EPS
}

#[derive(Debug, Error, PartialEq)]
pub enum GeodesyError {
    #[error("source set is empty")]
    EmptySources,
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("cell {0} is unreachable")]
    Unreachable(Cell),
    #[error("category {0} has no instance")]
    CategoryAbsent(CategoryId),
    #[error("category {0} cannot be reached")]
    CategoryUnreachable(CategoryId),
    #[error("brute-force enumeration needs {needed} evaluations, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Dijkstra8,
    Fmm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    spacing: f64,
    values: Vec<f64>,
    /// Index into `sources` of the source each cell's value came from.
    nearest: Vec<Option<u32>>,
    sources: Vec<Cell>,
    metric: Metric,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn sources(&self) -> &[Cell] {
        &self.sources
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: Cell) -> f64 {
        self.values[cell.y * self.width + cell.x]
    }

    /// The source cell whose front reached `cell` first, if any.
    pub fn nearest_source(&self, cell: Cell) -> Option<Cell> {
        self.nearest[cell.y * self.width + cell.x].map(|i| self.sources[i as usize])
    }

    pub fn is_reachable(&self, cell: Cell) -> bool {
        self.get(cell).is_finite()
    }

    /// CSV grid dump (one row per grid row, `inf` for unreachable cells).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if x > 0 {
                    out.push(',');
                }
                let v = self.values[y * self.width + x];
                if v.is_finite() {
                    let _ = write!(out, "{v:.6}");
                } else {
                    out.push_str("inf");
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    idx: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on index for determinism
        other.dist.total_cmp(&self.dist).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const AXIS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const DIAG: [(isize, isize); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Free neighbour of `c` reachable in one move, with its step length in cells
/// (1 or √2). Diagonals require both shared axis neighbours to be free.
pub(crate) fn neighbors8<G: Traversable>(grid: &G, c: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
    AXIS.iter()
        .map(|&d| (d, false))
        .chain(DIAG.iter().map(|&d| (d, true)))
        .filter_map(move |((dx, dy), diag)| {
            let (nx, ny) = (c.x as isize + dx, c.y as isize + dy);
            if !grid.in_bounds(nx, ny) {
                return None;
            }
            let n = Cell::new(nx as usize, ny as usize);
            if !grid.is_free(n) {
                return None;
            }
            if diag && !(grid.is_free(Cell::new(nx as usize, c.y)) && grid.is_free(Cell::new(c.x, ny as usize))) {
                return None;
            }
            Some((n, diag))
        })
}

fn check_sources<G: Traversable>(grid: &G, sources: &[Cell]) -> Result<(), GeodesyError> {
    if sources.is_empty() {
        return Err(GeodesyError::EmptySources);
    }
    for &s in sources {
        if s.x >= grid.width() || s.y >= grid.height() {
            return Err(GeodesyError::OutOfBounds(s));
        }
    }
    Ok(())
}

/// Exact 8-connected geodesic distances (meters) from the nearest source.
/// Sources lying on obstacles are ignored.
pub fn distance_field_dijkstra<G: Traversable>(grid: &G, sources: &[Cell], spacing: f64) -> Result<DistanceField, GeodesyError> {
    check_sources(grid, sources)?;
    let (w, h) = (grid.width(), grid.height());
    let mut values = vec![f64::INFINITY; w * h];
    let mut nearest = vec![None; w * h];
    let mut heap = BinaryHeap::new();
    for (i, &s) in sources.iter().enumerate() {
        let idx = grid.index(s);
        if grid.is_free(s) && values[idx] > 0.0 {
            values[idx] = 0.0;
            nearest[idx] = Some(i as u32);
            heap.push(HeapItem { dist: 0.0, idx });
        }
    }
    let diag_cost = spacing * std::f64::consts::SQRT_2;
    while let Some(HeapItem { dist, idx }) = heap.pop() {
        if dist > values[idx] {
            continue;
        }
        let c = Cell::new(idx % w, idx / w);
        for (n, diag) in neighbors8(grid, c) {
            let nd = dist + if diag { diag_cost } else { spacing };
            let ni = grid.index(n);
            if nd < values[ni] {
                values[ni] = nd;
                nearest[ni] = nearest[idx];
                heap.push(HeapItem { dist: nd, idx: ni });
            }
        }
    }
    Ok(DistanceField { width: w, height: h, spacing, values, nearest, sources: sources.to_vec(), metric: Metric::Dijkstra8 })
}

/// Candidate arrival time at `c` from already-accepted neighbours.
fn fmm_local_update<G: Traversable>(grid: &G, values: &[f64], accepted: &[bool], c: Cell, h: f64) -> (f64, Option<usize>) {
    let w = grid.width();
    let known = |x: isize, y: isize| -> Option<(f64, usize)> {
        if !grid.in_bounds(x, y) {
            return None;
        }
        let i = y as usize * w + x as usize;
        (accepted[i] && grid.is_free(Cell::new(x as usize, y as usize))).then(|| (values[i], i))
    };
    let (cx, cy) = (c.x as isize, c.y as isize);
    let mut best = f64::INFINITY;
    let mut from = None;
    let mut consider = |v: f64, src: usize| {
        if v < best {
            best = v;
            from = Some(src);
        }
    };
    for (dx, dy) in AXIS {
        if let Some((t, i)) = known(cx + dx, cy + dy) {
            consider(t + h, i);
        }
    }
    for (dx, dy) in DIAG {
        let side_a = grid.in_bounds(cx + dx, cy) && grid.is_free(Cell::new((cx + dx) as usize, c.y));
        let side_b = grid.in_bounds(cx, cy + dy) && grid.is_free(Cell::new(c.x, (cy + dy) as usize));
        if !(side_a && side_b) {
            continue;
        }
        let Some((td, di)) = known(cx + dx, cy + dy) else { continue };
        consider(td + h * std::f64::consts::SQRT_2, di);
        // the two triangles sharing this diagonal
        for (ax, ay) in [(cx + dx, cy), (cx, cy + dy)] {
            let Some((ta, ai)) = known(ax, ay) else { continue };
            let delta = td - ta;
            if delta <= 0.0 && -delta < h * std::f64::consts::FRAC_1_SQRT_2 {
                let src = if delta < 0.0 { di } else { ai };
                consider(ta + (h * h - delta * delta).sqrt(), src);
            }
        }
    }
    (best, from)
}

/// First-order fast marching (8-neighbour simplex stencil), meters.
pub fn distance_field_fmm<G: Traversable>(grid: &G, sources: &[Cell], spacing: f64) -> Result<DistanceField, GeodesyError> {
    check_sources(grid, sources)?;
    let (w, h) = (grid.width(), grid.height());
    let mut values = vec![f64::INFINITY; w * h];
    let mut nearest: Vec<Option<u32>> = vec![None; w * h];
    let mut accepted = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    for (i, &s) in sources.iter().enumerate() {
        let idx = grid.index(s);
        if grid.is_free(s) && values[idx] > 0.0 {
            values[idx] = 0.0;
            nearest[idx] = Some(i as u32);
            heap.push(HeapItem { dist: 0.0, idx });
        }
    }
    while let Some(HeapItem { dist, idx }) = heap.pop() {
        if accepted[idx] || dist > values[idx] {
            continue;
        }
        accepted[idx] = true;
        let c = Cell::new(idx % w, idx / w);
        for (n, _) in neighbors8(grid, c) {
            let ni = grid.index(n);
            if accepted[ni] {
                continue;
            }
            let (t, from) = fmm_local_update(grid, &values, &accepted, n, spacing);
            if t < values[ni] {
                values[ni] = t;
                nearest[ni] = from.and_then(|f| nearest[f]);
                heap.push(HeapItem { dist: t, idx: ni });
            }
        }
    }
    Ok(DistanceField { width: w, height: h, spacing, values, nearest, sources: sources.to_vec(), metric: Metric::Fmm })
}

/// Largest absolute mismatch between each reachable non-source value and the
/// local stencil solve from its smaller-valued neighbours.
pub fn fmm_residual<G: Traversable>(grid: &G, field: &DistanceField) -> f64 {
    let (w, h) = (grid.width(), grid.height());
    let mut worst: f64 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = Cell::new(x, y);
            let v = field.get(c);
            if !v.is_finite() || v == 0.0 {
                continue;
            }
            let below: Vec<bool> = field.values.iter().map(|&t| t < v).collect();
            let (t, _) = fmm_local_update(grid, &field.values, &below, c, field.spacing);
            worst = worst.max((t - v).abs());
        }
    }
    worst
}

/// Descent path from `from` to a source: at each cell, move to the strictly
/// smaller-valued neighbour minimising `value + step cost`.
pub fn extract_path<G: Traversable>(grid: &G, field: &DistanceField, from: Cell) -> Result<Vec<Cell>, GeodesyError> {
    if from.x >= field.width || from.y >= field.height {
        return Err(GeodesyError::OutOfBounds(from));
    }
    if !field.is_reachable(from) {
        return Err(GeodesyError::Unreachable(from));
    }
    let mut path = vec![from];
    let mut cur = from;
    while field.get(cur) > 0.0 {
        let here = field.get(cur);
        let next = neighbors8(grid, cur)
            .filter(|(n, _)| field.get(*n) < here)
            .map(|(n, diag)| {
                let cost = if diag { field.spacing * std::f64::consts::SQRT_2 } else { field.spacing };
                (field.get(n) + cost, n)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        match next {
            Some((_, n)) => {
                path.push(n);
                cur = n;
            }
            None => return Err(GeodesyError::Unreachable(cur)),
        }
    }
    Ok(path)
}

/// Sum of 8-connected step costs along a cell path.
pub fn path_cost(path: &[Cell], spacing: f64) -> f64 {
    path.windows(2)
        .map(|p| if p[0].x != p[1].x && p[0].y != p[1].y { spacing * std::f64::consts::SQRT_2 } else { spacing })
        .sum()
}

/// Ground-truth fields for one scene, built lazily and shared by readers.
#[derive(Debug)]
pub struct SceneFields {
    scene: GridScene,
    per_category: Vec<OnceLock<Option<DistanceField>>>,
    per_instance: Vec<OnceLock<DistanceField>>,
}

impl SceneFields {
    pub fn new(scene: GridScene) -> Self {
        let per_category = (0..scene.catalog().len()).map(|_| OnceLock::new()).collect();
        let per_instance = (0..scene.objects().len()).map(|_| OnceLock::new()).collect();
        Self { scene, per_category, per_instance }
    }

    pub fn scene(&self) -> &GridScene {
        &self.scene
    }

    /// Multi-source Dijkstra field over all instances of `category`.
    pub fn category_field(&self, category: CategoryId) -> Result<&DistanceField, GeodesyError> {
        let slot = self.per_category.get(category).ok_or(GeodesyError::CategoryAbsent(category))?;
        slot.get_or_init(|| {
            let sources = self.scene.instances_of(category);
            distance_field_dijkstra(&self.scene, &sources, self.scene.cell_size()).ok()
        })
        .as_ref()
        .ok_or(GeodesyError::CategoryAbsent(category))
    }

    /// Field of the `index`-th object instance of the scene.
    pub fn instance_field(&self, index: usize) -> &DistanceField {
        self.per_instance[index].get_or_init(|| {
            let cell = self.scene.objects()[index].cell;
            distance_field_dijkstra(&self.scene, &[cell], self.scene.cell_size()).expect("object cells are in bounds")
        })
    }

    /// Geodesic distance-to-goal from `cell` to the nearest instance of `category`.
    pub fn dtg(&self, cell: Cell, category: CategoryId) -> Result<f64, GeodesyError> {
        if cell.x >= self.scene.width() || cell.y >= self.scene.height() {
            return Err(GeodesyError::OutOfBounds(cell));
        }
        Ok(self.category_field(category)?.get(cell))
    }
}

/// Query for the multi-goal optimum `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGoalQuery {
    pub start: Cell,
    /// One nonempty list of instance cells per target category.
    pub goal_sets: Vec<Vec<Cell>>,
    /// Legs end at the first cell within this geodesic radius of an instance.
    pub radius: f64,
}

fn credit_masks<G: Traversable>(grid: &G, query: &MultiGoalQuery, spacing: f64) -> Result<Vec<u32>, GeodesyError> {
    let (w, h) = (grid.width(), grid.height());
    let mut masks = vec![0u32; w * h];
    for (bit, set) in query.goal_sets.iter().enumerate() {
        if set.is_empty() {
            return Err(GeodesyError::CategoryAbsent(bit));
        }
        let field = distance_field_dijkstra(grid, set, spacing)?;
        for (m, &v) in masks.iter_mut().zip(field.values()) {
            if within_radius(v, query.radius) {
                *m |= 1 << bit;
            }
        }
    }
    Ok(masks)
}

/// Exact length of the shortest walk from `start` that comes within
/// `radius` of one instance of every category. Dijkstra over
/// `(cell, satisfied mask)`.
pub fn optimal_multigoal_length<G: Traversable>(grid: &G, query: &MultiGoalQuery, spacing: f64) -> Result<f64, GeodesyError> {
    let k = query.goal_sets.len();
    assert!(k <= 16, "at most 16 categories per query");
    let (w, h) = (grid.width(), grid.height());
    if query.start.x >= w || query.start.y >= h {
        return Err(GeodesyError::OutOfBounds(query.start));
    }
    if !grid.is_free(query.start) {
        return Err(GeodesyError::Unreachable(query.start));
    }
    let masks = credit_masks(grid, query, spacing)?;
    let full = (1u32 << k) - 1;

    // every category needs a credit cell reachable from start
    let from_start = distance_field_dijkstra(grid, &[query.start], spacing)?;
    for bit in 0..k {
        let ok = masks.iter().zip(from_start.values()).any(|(&m, &d)| m & (1 << bit) != 0 && d.is_finite());
        if !ok {
            return Err(GeodesyError::CategoryUnreachable(bit));
        }
    }

    let states = w * h * (1usize << k);
    let mut dist = vec![f64::INFINITY; states];
    let encode = |idx: usize, mask: u32| idx * (1usize << k) + mask as usize;
    let start_idx = grid.index(query.start);
    let start_mask = masks[start_idx];
    if start_mask == full {
        return Ok(0.0);
    }
    let s = encode(start_idx, start_mask);
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem { dist: 0.0, idx: s });
    let diag_cost = spacing * std::f64::consts::SQRT_2;
    while let Some(HeapItem { dist: d, idx: state }) = heap.pop() {
        if d > dist[state] {
            continue;
        }
        let mask = (state & ((1usize << k) - 1)) as u32;
        if mask == full {
            return Ok(d);
        }
        let cell_idx = state >> k;
        let c = Cell::new(cell_idx % w, cell_idx / w);
        for (n, diag) in neighbors8(grid, c) {
            let ni = grid.index(n);
            let nm = mask | masks[ni];
            let nd = d + if diag { diag_cost } else { spacing };
            let ns = encode(ni, nm);
            if nd < dist[ns] {
                dist[ns] = nd;
                heap.push(HeapItem { dist: nd, idx: ns });
            }
        }
    }
    // unreachable given the checks above, but keep the error path honest
    Err(GeodesyError::CategoryUnreachable(k))
}

/// Exhaustive enumeration of category orders, instance choices and stopping
/// cells. Test oracle for [`optimal_multigoal_length`].
pub fn brute_force_multigoal<G: Traversable>(grid: &G, query: &MultiGoalQuery, spacing: f64, budget: u128) -> Result<f64, GeodesyError> {
    let k = query.goal_sets.len();
    if query.start.x >= grid.width() || query.start.y >= grid.height() {
        return Err(GeodesyError::OutOfBounds(query.start));
    }
    // stopping candidates per (category, instance)
    let mut stops: Vec<Vec<Vec<Cell>>> = Vec::with_capacity(k);
    for (cat, set) in query.goal_sets.iter().enumerate() {
        if set.is_empty() {
            return Err(GeodesyError::CategoryAbsent(cat));
        }
        let mut per_instance = Vec::new();
        for &inst in set {
            let f = distance_field_dijkstra(grid, &[inst], spacing)?;
            let cells: Vec<Cell> = (0..grid.height())
                .flat_map(|y| (0..grid.width()).map(move |x| Cell::new(x, y)))
                .filter(|&c| within_radius(f.get(c), query.radius))
                .collect();
            per_instance.push(cells);
        }
        stops.push(per_instance);
    }

    let per_cat: Vec<u128> = stops.iter().map(|p| p.iter().map(|c| c.len() as u128).sum()).collect();
    let perms: u128 = (1..=k as u128).product();
    let needed = perms.saturating_mul(per_cat.iter().product());
    if needed > budget {
        return Err(GeodesyError::BudgetExceeded { needed, budget });
    }

    // pairwise distances from every candidate (and the start)
    let mut points: Vec<Cell> = vec![query.start];
    for p in &stops {
        for cells in p {
            points.extend(cells.iter().copied());
        }
    }
    points.sort();
    points.dedup();
    let point_index = |c: Cell| points.binary_search(&c).expect("candidate registered");
    let fields: Vec<DistanceField> =
        points.iter().map(|&p| distance_field_dijkstra(grid, &[p], spacing)).collect::<Result<_, _>>()?;

    let options: Vec<Vec<usize>> = stops
        .iter()
        .map(|p| p.iter().flat_map(|cells| cells.iter().map(|&c| point_index(c))).collect())
        .collect();

    let mut best = f64::INFINITY;
    let mut order: Vec<usize> = (0..k).collect();
    permute(&mut order, 0, &mut |ord| {
        enumerate_legs(&fields, &points, &options, ord, 0, point_index(query.start), 0.0, &mut best);
    });
    if best.is_finite() {
        Ok(best)
    } else {
        Err(GeodesyError::CategoryUnreachable(0))
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_legs(
    fields: &[DistanceField],
    points: &[Cell],
    options: &[Vec<usize>],
    order: &[usize],
    depth: usize,
    at: usize,
    acc: f64,
    best: &mut f64,
) {
    if depth == order.len() {
        if acc < *best {
            *best = acc;
        }
        return;
    }
    for &next in &options[order[depth]] {
        let leg = fields[at].get(points[next]);
        if !leg.is_finite() {
            continue;
        }
        enumerate_legs(fields, points, options, order, depth + 1, next, acc + leg, best);
    }
}

fn permute(items: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, f);
        items.swap(k, i);
    }
}

//! Episode state machine over a [`GridScene`].
//!
//! The agent has a continuous position (meters, origin at the top-left grid
//! corner) and a heading in 30° increments; heading 0 points along +x and
//! positive turns are counter-clockwise on screen (toward −y). Forward moves
//! advance 0.25 m. A move whose destination cell is blocked, out of bounds,
//! or reached diagonally past a blocked corner is a silent no-op that still
//! consumes the timestep.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{within_radius, GeodesyError, SceneFields};
use crate::reward::DtgSnapshot;
use crate::scene::{CategoryId, Cell, GridScene, Traversable};

pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_DEGREES: u32 = 30;
const HEADINGS: u8 = 12;
const SQRT3_2: f64 = 0.866_025_403_784_438_6;

// exact unit vectors (grid coordinates, y down) for the twelve headings
const UNIT: [(f64, f64); 12] = [
    (1.0, 0.0),
    (SQRT3_2, -0.5),
    (0.5, -SQRT3_2),
    (0.0, -1.0),
    (-0.5, -SQRT3_2),
    (-SQRT3_2, -0.5),
    (-1.0, 0.0),
    (-SQRT3_2, 0.5),
    (-0.5, SQRT3_2),
    (0.0, 1.0),
    (0.5, SQRT3_2),
    (SQRT3_2, 0.5),
];

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error("episode already terminated ({0:?})")]
    Terminated(Termination),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Heading(u8);

impl Heading {
    pub fn from_degrees(deg: u32) -> Option<Self> {
        (deg % TURN_DEGREES == 0 && deg < 360).then(|| Self((deg / TURN_DEGREES) as u8))
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * TURN_DEGREES
    }

    pub fn left(self) -> Self {
        Self((self.0 + 1) % HEADINGS)
    }

    pub fn right(self) -> Self {
        Self((self.0 + HEADINGS - 1) % HEADINGS)
    }

    /// Unit direction in grid coordinates (y grows downward).
    pub fn unit(self) -> (f64, f64) {
        UNIT[self.0 as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
}

impl Pose {
    pub fn at_cell(cell: Cell, cell_size: f64, heading: Heading) -> Self {
        Self { x: (cell.x as f64 + 0.5) * cell_size, y: (cell.y as f64 + 0.5) * cell_size, heading }
    }

    pub fn cell(&self, cell_size: f64) -> Cell {
        Cell::new((self.x / cell_size).floor() as usize, (self.y / cell_size).floor() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const MOVES: [Action; 3] = [Action::MoveForward, Action::TurnLeft, Action::TurnRight];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::MoveForward => "forward",
            Action::TurnLeft => "left",
            Action::TurnRight => "right",
            Action::Stop => "stop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Action::MoveForward),
            "left" => Ok(Action::TurnLeft),
            "right" => Ok(Action::TurnRight),
            "stop" => Ok(Action::Stop),
            _ => Err(format!("unknown action {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SuccessMetric {
    #[default]
    Geodesic,
    Euclidean,
}

impl FromStr for SuccessMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geodesic" => Ok(Self::Geodesic),
            "euclidean" => Ok(Self::Euclidean),
            _ => Err(format!("unknown success metric {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub success_metric: SuccessMetric,
    /// Credit a category only once a qualifying instance has been observed.
    pub require_seen: bool,
    pub fov_degrees: f64,
    pub sensor_range: f64,
    /// Side of the square semantic map; defaults to the larger scene side.
    pub map_side: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { success_metric: SuccessMetric::Geodesic, require_seen: false, fov_degrees: 90.0, sensor_range: 5.0, map_side: None }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub scene: Arc<SceneFields>,
    pub start: Pose,
    pub targets: Vec<CategoryId>,
    pub max_steps: usize,
    pub success_radius: f64,
    /// Pre-sequenced order; `None` for sequence-agnostic episodes.
    pub sequence: Option<Vec<CategoryId>>,
    /// With a sequence, allow crediting later categories passed en route.
    pub opportunistic: bool,
}

impl EpisodeSpec {
    pub fn new(scene: Arc<SceneFields>, start: Pose, targets: Vec<CategoryId>, max_steps: usize) -> Self {
        Self { scene, start, targets, max_steps, success_radius: 1.0, sequence: None, opportunistic: false }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let scene = self.scene.scene();
        let bad = |m: String| Err(EnvError::InvalidSpec(m));
        if self.targets.is_empty() {
            return bad("at least one target category is required".into());
        }
        let mut sorted = self.targets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.targets.len() {
            return bad("duplicate target category".into());
        }
        for &t in &self.targets {
            if t >= scene.catalog().len() || scene.instances_of(t).is_empty() {
                return bad(format!("target category {t} has no instance in the scene"));
            }
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.success_radius >= 0.0) {
            return bad("success radius must be non-negative".into());
        }
        let (w, h) = (scene.width() as f64 * scene.cell_size(), scene.height() as f64 * scene.cell_size());
        if !(self.start.x >= 0.0 && self.start.y >= 0.0 && self.start.x < w && self.start.y < h) {
            return bad("start pose is outside the scene".into());
        }
        if !scene.is_free(self.start.cell(scene.cell_size())) {
            return bad("start cell is an obstacle".into());
        }
        if let Some(seq) = &self.sequence {
            let mut s = seq.clone();
            s.sort_unstable();
            if s != sorted {
                return bad("sequence must be a permutation of the targets".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    AllFound,
    MaxSteps,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundEntry {
    pub category: CategoryId,
    pub timestep: usize,
    pub instance: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub pose: Pose,
    pub t: usize,
    /// Sorted ascending.
    pub remaining: Vec<CategoryId>,
    pub found_log: Vec<FoundEntry>,
    pub forward_moves: usize,
    pub path_length: f64,
    pub terminated: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collided: bool,
    pub categories_found: Vec<CategoryId>,
    pub moved_distance: f64,
}

/// `K = C + 2` semantic channels followed by three auxiliary planes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMap {
    side: usize,
    categories: usize,
    data: Vec<u8>,
}

pub const OBSTACLE_PLANE: usize = 0;
pub const EXPLORED_PLANE: usize = 1;

impl SemanticMap {
    pub fn new(side: usize, categories: usize) -> Self {
        Self { side, categories, data: vec![0; (categories + 5) * side * side] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    /// `K = C + 2`.
    pub fn semantic_channels(&self) -> usize {
        self.categories + 2
    }

    pub fn planes(&self) -> usize {
        self.categories + 5
    }

    pub fn category_plane(&self, c: CategoryId) -> usize {
        2 + c
    }

    pub fn agent_plane(&self) -> usize {
        self.categories + 2
    }

    pub fn trajectory_plane(&self) -> usize {
        self.categories + 3
    }

    pub fn found_plane(&self) -> usize {
        self.categories + 4
    }

    pub fn get(&self, plane: usize, cell: Cell) -> u8 {
        self.data[(plane * self.side + cell.y) * self.side + cell.x]
    }

    fn set(&mut self, plane: usize, cell: Cell, v: u8) {
        let s = self.side;
        self.data[(plane * s + cell.y) * s + cell.x] = v;
    }

    pub fn plane(&self, plane: usize) -> &[u8] {
        let n = self.side * self.side;
        &self.data[plane * n..(plane + 1) * n]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn explored_count(&self) -> usize {
        self.plane(EXPLORED_PLANE).iter().filter(|&&v| v != 0).count()
    }
}

pub struct Observation<'a> {
    pub map: &'a SemanticMap,
    /// Multi-hot over the categories the agent is currently asked to find.
    pub remaining_encoding: Vec<f32>,
    pub pose: Pose,
}

/// Cells visible from `pose`: inside the field of view and sensor range and
/// not occluded by an obstacle strictly between the agent and the cell centre.
pub fn visible_cells(scene: &GridScene, pose: &Pose, cfg: &EnvConfig) -> Vec<Cell> {
    let cs = scene.cell_size();
    let own = pose.cell(cs);
    let reach = (cfg.sensor_range / cs).ceil() as isize + 1;
    let (hx, hy) = pose.heading.unit();
    let cos_half = (cfg.fov_degrees.to_radians() / 2.0).cos();
    let mut out = Vec::new();
    for y in own.y as isize - reach..=own.y as isize + reach {
        for x in own.x as isize - reach..=own.x as isize + reach {
            if !scene.in_bounds(x, y) {
                continue;
            }
            let c = Cell::new(x as usize, y as usize);
            if c == own {
                out.push(c);
                continue;
            }
            let (cx, cy) = scene.cell_center(c);
            let (dx, dy) = (cx - pose.x, cy - pose.y);
            let dist = dx.hypot(dy);
            if dist > cfg.sensor_range + 1e-9 {
                continue;
            }
            if (dx * hx + dy * hy) / dist < cos_half - 1e-9 {
                continue;
            }
            if line_of_sight(scene, (pose.x / cs, pose.y / cs), own, (cx / cs, cy / cs), c) {
                out.push(c);
            }
        }
    }
    out
}

/// Grid traversal from `from` (continuous, cell units) to the centre of
/// `target`; exact corner crossings step diagonally.
fn line_of_sight(scene: &GridScene, from: (f64, f64), start: Cell, to: (f64, f64), target: Cell) -> bool {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let step_x: isize = if dx > 0.0 { 1 } else { -1 };
    let step_y: isize = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let bound = |p: f64, c: usize, step: isize| if step > 0 { c as f64 + 1.0 - p } else { p - c as f64 };
    let mut t_max_x = if dx != 0.0 { bound(from.0, start.x, step_x) * t_delta_x } else { f64::INFINITY };
    let mut t_max_y = if dy != 0.0 { bound(from.1, start.y, step_y) * t_delta_y } else { f64::INFINITY };
    let (mut x, mut y) = (start.x as isize, start.y as isize);
    let limit = start.x.abs_diff(target.x) + start.y.abs_diff(target.y) + 2;
    for _ in 0..limit {
        if (x as usize, y as usize) == (target.x, target.y) {
            return true;
        }
        if (t_max_x - t_max_y).abs() < 1e-12 {
            x += step_x;
            y += step_y;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        } else if t_max_x < t_max_y {
            x += step_x;
            t_max_x += t_delta_x;
        } else {
            y += step_y;
            t_max_y += t_delta_y;
        }
        if !scene.in_bounds(x, y) {
            return false;
        }
        let c = Cell::new(x as usize, y as usize);
        if c == target {
            return true;
        }
        if !scene.is_free(c) {
            return false;
        }
    }
    false
}

/// Reveals what is visible from `pose` and refreshes the auxiliary planes.
pub fn sense(scene: &GridScene, pose: &Pose, cfg: &EnvConfig, found: &[Cell], map: &mut SemanticMap) {
    for c in visible_cells(scene, pose, cfg) {
        map.set(EXPLORED_PLANE, c, 1);
        if !scene.is_free(c) {
            map.set(OBSTACLE_PLANE, c, 1);
        }
    }
    for o in scene.objects() {
        if map.get(EXPLORED_PLANE, o.cell) == 1 {
            let p = map.category_plane(o.category);
            map.set(p, o.cell, 1);
        }
    }
    let agent = map.agent_plane();
    let n = map.side * map.side;
    map.data[agent * n..(agent + 1) * n].fill(0);
    let here = pose.cell(scene.cell_size());
    map.set(agent, here, 1);
    let traj = map.trajectory_plane();
    map.set(traj, here, 1);
    let fp = map.found_plane();
    for &c in found {
        map.set(fp, c, 1);
    }
}

/// One running episode: spec, mutable state and the agent's map.
#[derive(Debug, Clone)]
pub struct Episode {
    spec: EpisodeSpec,
    cfg: EnvConfig,
    state: EpisodeState,
    map: SemanticMap,
}

impl Episode {
    pub fn reset(spec: EpisodeSpec, cfg: EnvConfig) -> Result<Self, EnvError> {
        spec.validate()?;
        let scene = spec.scene.scene();
        let side = scene.width().max(scene.height());
        let side = match cfg.map_side {
            Some(m) if m < side => return Err(EnvError::InvalidSpec(format!("map side {m} smaller than scene side {side}"))),
            Some(m) => m,
            None => side,
        };
        let mut remaining = spec.targets.clone();
        remaining.sort_unstable();
        let state = EpisodeState {
            pose: spec.start,
            t: 0,
            remaining,
            found_log: Vec::new(),
            forward_moves: 0,
            path_length: 0.0,
            terminated: None,
        };
        let map = SemanticMap::new(side, scene.catalog().len());
        let mut ep = Self { spec, cfg, state, map };
        ep.sense();
        if !ep.credit()?.is_empty() {
            ep.sense();
        }
        if ep.state.remaining.is_empty() {
            ep.state.terminated = Some(Termination::AllFound);
        }
        Ok(ep)
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn map(&self) -> &SemanticMap {
        &self.map
    }

    pub fn scene(&self) -> &GridScene {
        self.spec.scene.scene()
    }

    pub fn fields(&self) -> &SceneFields {
        &self.spec.scene
    }

    pub fn agent_cell(&self) -> Cell {
        self.state.pose.cell(self.scene().cell_size())
    }

    pub fn is_done(&self) -> bool {
        self.state.terminated.is_some()
    }

    /// Next category of a pre-sequenced episode.
    pub fn sequence_cursor(&self) -> Option<CategoryId> {
        let seq = self.spec.sequence.as_ref()?;
        seq.iter().copied().find(|c| self.state.remaining.binary_search(c).is_ok())
    }

    /// Categories that may be credited now (and that the reward tracks).
    pub fn active_targets(&self) -> Vec<CategoryId> {
        match (&self.spec.sequence, self.spec.opportunistic) {
            (Some(_), false) => self.sequence_cursor().into_iter().collect(),
            _ => self.state.remaining.clone(),
        }
    }

    pub fn observe(&self) -> Observation<'_> {
        Observation {
            map: &self.map,
            remaining_encoding: self.scene().catalog().encode(self.active_targets()),
            pose: self.state.pose,
        }
    }

    /// Ground-truth geodesic distance from the agent's cell to each listed category.
    pub fn dtg_snapshot(&self, categories: &[CategoryId]) -> Result<DtgSnapshot, EnvError> {
        let cell = self.agent_cell();
        let entries = categories
            .iter()
            .map(|&c| Ok((c, self.spec.scene.dtg(cell, c)?)))
            .collect::<Result<Vec<_>, GeodesyError>>()?;
        Ok(DtgSnapshot::new(entries))
    }

    pub fn step(&mut self, action: Action) -> Result<StepEvents, EnvError> {
        if let Some(t) = self.state.terminated {
            return Err(EnvError::Terminated(t));
        }
        self.state.t += 1;
        let mut events = StepEvents::default();
        match action {
            Action::Stop => {
                self.state.terminated = Some(Termination::Stop);
                return Ok(events);
            }
            Action::TurnLeft => self.state.pose.heading = self.state.pose.heading.left(),
            Action::TurnRight => self.state.pose.heading = self.state.pose.heading.right(),
            Action::MoveForward => {
                if self.try_move() {
                    self.state.forward_moves += 1;
                    self.state.path_length = FORWARD_STEP * self.state.forward_moves as f64;
                    events.moved_distance = FORWARD_STEP;
                } else {
                    events.collided = true;
                }
            }
        }
        self.sense();
        events.categories_found = self.credit()?;
        if !events.categories_found.is_empty() {
            self.sense();
        }
        if self.state.remaining.is_empty() {
            self.state.terminated = Some(Termination::AllFound);
        } else if self.state.t >= self.spec.max_steps {
            self.state.terminated = Some(Termination::MaxSteps);
        }
        Ok(events)
    }

    fn try_move(&mut self) -> bool {
        let scene = self.spec.scene.scene();
        let cs = scene.cell_size();
        let (ux, uy) = self.state.pose.heading.unit();
        let (nx, ny) = (self.state.pose.x + FORWARD_STEP * ux, self.state.pose.y + FORWARD_STEP * uy);
        let (fx, fy) = ((nx / cs).floor(), (ny / cs).floor());
        if fx < 0.0 || fy < 0.0 || fx >= scene.width() as f64 || fy >= scene.height() as f64 {
            return false;
        }
        let dest = Cell::new(fx as usize, fy as usize);
        let here = self.state.pose.cell(cs);
        if !scene.is_free(dest) {
            return false;
        }
        if dest.x != here.x && dest.y != here.y && !(scene.is_free(Cell::new(dest.x, here.y)) && scene.is_free(Cell::new(here.x, dest.y))) {
            return false;
        }
        self.state.pose.x = nx;
        self.state.pose.y = ny;
        true
    }

    fn sense(&mut self) {
        let found: Vec<Cell> = self.state.found_log.iter().map(|f| f.instance).collect();
        sense(self.spec.scene.scene(), &self.state.pose, &self.cfg, &found, &mut self.map);
    }

    /// Nearest qualifying instance of `category` within the success radius.
    fn creditable_instance(&self, category: CategoryId) -> Result<Option<Cell>, EnvError> {
        let scene = self.spec.scene.scene();
        let cell = self.agent_cell();
        let radius = self.spec.success_radius;
        let pose = self.state.pose;
        let mut best: Option<(f64, Cell)> = None;
        for (i, o) in scene.objects().iter().enumerate() {
            if o.category != category {
                continue;
            }
            let d = match self.cfg.success_metric {
                crate::env::SuccessMetric::Geodesic => self.spec.scene.instance_field(i).get(cell),
                crate::env::SuccessMetric::Euclidean => {
                    let (cx, cy) = scene.cell_center(o.cell);
                    (cx - pose.x).hypot(cy - pose.y)
                }
            };
            if !within_radius(d, radius) {
                continue;
            }
            if self.cfg.require_seen && self.map.get(self.map.category_plane(category), o.cell) == 0 {
                continue;
            }
            if best.is_none_or(|(bd, bc)| d < bd || (d == bd && o.cell < bc)) {
                best = Some((d, o.cell));
            }
        }
        Ok(best.map(|b| b.1))
    }

    fn credit(&mut self) -> Result<Vec<CategoryId>, EnvError> {
        let mut found = Vec::new();
        // crediting the sequence head can make the next category eligible
        loop {
            let mut progressed = false;
            for c in self.active_targets() {
                if let Some(instance) = self.creditable_instance(c)? {
                    self.state.remaining.retain(|&r| r != c);
                    self.state.found_log.push(FoundEntry { category: c, timestep: self.state.t, instance });
                    found.push(c);
                    progressed = true;
                }
            }
            if !progressed || self.spec.sequence.is_none() || self.spec.opportunistic {
                break;
            }
        }
        Ok(found)
    }
}

/// One tab-separated trajectory log line:
/// `t action x y heading collided found:<labels> reward`.
pub fn format_log_line(
    t: usize,
    action: Action,
    pose: &Pose,
    collided: bool,
    found: &[CategoryId],
    catalog: &crate::scene::CategoryCatalog,
    reward: f64,
) -> String {
    let labels: Vec<String> = found.iter().map(|&c| catalog.token(c)).collect();
    format!(
        "{t}\t{action}\t{:.6}\t{:.6}\t{}\t{}\tfound:{}\t{reward:.9}",
        pose.x,
        pose.y,
        pose.heading.degrees(),
        collided as u8,
        labels.join(",")
    )
}

/// Parses the action column of a trajectory log line.
pub fn parse_log_action(line: &str) -> Result<Action, String> {
    let col = line.split('\t').nth(1).ok_or_else(|| format!("malformed log line {line:?}"))?;
    col.parse()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(text: &str) -> Arc<SceneFields> {
        Arc::new(SceneFields::new(GridScene::from_text(text).unwrap()))
    }

    fn corridor() -> Arc<SceneFields> {
        fields("multion-scene v1 21 1 0.25\n.....................\nobj chair 0 0\nobj couch 20 0\n")
    }

    fn west() -> Heading {
        Heading::from_degrees(180).unwrap()
    }

    #[test]
    fn heading_wraps() {
        let mut h = Heading::default();
        for _ in 0..12 {
            h = h.left();
        }
        assert_eq!(h, Heading::default());
        assert_eq!(Heading::default().right().degrees(), 330);
        assert!(Heading::from_degrees(45).is_none());
    }

    #[test]
    fn nothing_credited_at_start_of_corridor() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![0, 1], 100);
        let ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        assert!(ep.state().found_log.is_empty());
        assert_eq!(ep.state().remaining, vec![0, 1]);
    }

    #[test]
    fn adjacent_target_credited_at_reset() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(1, 0), 0.25, west()), vec![0, 1], 100);
        let ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        assert_eq!(ep.state().found_log, vec![FoundEntry { category: 0, timestep: 0, instance: Cell::new(0, 0) }]);
    }

    #[test]
    fn absent_target_rejected() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![4], 100);
        assert!(matches!(Episode::reset(spec, EnvConfig::default()), Err(EnvError::InvalidSpec(_))));
    }

    #[test]
    fn six_steps_west_credit_chair() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![0, 1], 100);
        let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        for i in 0..5 {
            let ev = ep.step(Action::MoveForward).unwrap();
            assert!(ev.categories_found.is_empty(), "step {i}");
        }
        let ev = ep.step(Action::MoveForward).unwrap();
        assert_eq!(ev.categories_found, vec![0]);
        assert_eq!(ep.agent_cell(), Cell::new(4, 0));
        assert_eq!(ep.state().path_length, 1.5);
        assert_eq!(ep.state().found_log[0].timestep, 6);
    }

    #[test]
    fn wall_collision_is_a_noop() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, Heading::from_degrees(90).unwrap()), vec![0], 100);
        let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        let before = ep.state().pose;
        let ev = ep.step(Action::MoveForward).unwrap();
        assert!(ev.collided);
        assert_eq!(ep.state().pose, before);
        assert_eq!(ep.state().t, 1);
        assert_eq!(ep.state().path_length, 0.0);
    }

    #[test]
    fn max_steps_and_terminated_error() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![0], 3);
        let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        for _ in 0..3 {
            ep.step(Action::TurnLeft).unwrap();
        }
        assert_eq!(ep.state().terminated, Some(Termination::MaxSteps));
        assert!(matches!(ep.step(Action::TurnLeft), Err(EnvError::Terminated(Termination::MaxSteps))));
    }

    #[test]
    fn stop_terminates() {
        let spec = EpisodeSpec::new(corridor(), Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![0], 30);
        let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        ep.step(Action::Stop).unwrap();
        assert_eq!(ep.state().terminated, Some(Termination::Stop));
        assert_eq!(ep.state().t, 1);
    }

    const ROOM: &str = "multion-scene v1 7 7 0.25\n.......\n.#####.\n.#...#.\n.#...#.\n.#...#.\n.#####.\n.......\nobj tv 0 0\n";

    #[test]
    fn closed_room_reveals_only_itself() {
        let f = fields(ROOM);
        let scene = f.scene();
        let cfg = EnvConfig::default();
        let mut map = SemanticMap::new(7, 6);
        for deg in [0, 90, 180, 270] {
            let pose = Pose::at_cell(Cell::new(3, 3), 0.25, Heading::from_degrees(deg).unwrap());
            sense(scene, &pose, &cfg, &[], &mut map);
        }
        let mut expected = Vec::new();
        for y in 1..=5 {
            for x in 1..=5 {
                expected.push(Cell::new(x, y));
            }
        }
        let explored: Vec<Cell> = (0..7)
            .flat_map(|y| (0..7).map(move |x| Cell::new(x, y)))
            .filter(|&c| map.get(EXPLORED_PLANE, c) == 1)
            .collect();
        assert_eq!(explored, expected);
        assert_eq!(map.plane(OBSTACLE_PLANE).iter().filter(|&&v| v == 1).count(), 16);
        // the tv outside the walls stays unseen
        assert_eq!(map.get(map.category_plane(5), Cell::new(0, 0)), 0);

        let before = map.clone();
        let pose = Pose::at_cell(Cell::new(3, 3), 0.25, Heading::from_degrees(270).unwrap());
        sense(scene, &pose, &cfg, &[], &mut map);
        assert_eq!(map, before);
    }

    #[test]
    fn fov_limits_view() {
        let f = fields("multion-scene v1 9 9 0.25\n.........\n.........\n.........\n.........\n.........\n.........\n.........\n.........\n.........\n");
        let pose = Pose::at_cell(Cell::new(4, 4), 0.25, Heading::default());
        let cells = visible_cells(f.scene(), &pose, &EnvConfig::default());
        assert!(cells.contains(&Cell::new(8, 4)));
        assert!(cells.contains(&Cell::new(6, 2)));
        assert!(!cells.contains(&Cell::new(3, 4)));
        assert!(!cells.contains(&Cell::new(5, 2)));
    }

    #[test]
    fn require_seen_delays_credit() {
        // couch sits 1 m behind the agent: in range but outside the field of view
        let f = fields("multion-scene v1 12 1 0.25\n............\nobj couch 0 0\nobj tv 11 0\n");
        let start = Pose::at_cell(Cell::new(4, 0), 0.25, Heading::default());
        let cfg = EnvConfig { require_seen: true, ..Default::default() };
        let mut ep = Episode::reset(EpisodeSpec::new(f.clone(), start, vec![1, 5], 50), cfg).unwrap();
        assert!(ep.state().found_log.is_empty());
        for _ in 0..6 {
            ep.step(Action::TurnLeft).unwrap();
        }
        assert_eq!(ep.state().found_log.len(), 1);
        assert_eq!(ep.state().found_log[0].timestep, 5);

        let ep = Episode::reset(EpisodeSpec::new(f, start, vec![1, 5], 50), EnvConfig::default()).unwrap();
        assert_eq!(ep.state().found_log.len(), 1);
    }

    #[test]
    fn euclidean_metric_credits_through_walls() {
        let f = fields("multion-scene v1 5 3 0.25\n.....\n##.##\n.....\nobj bed 0 2\n");
        let start = Pose::at_cell(Cell::new(0, 0), 0.25, Heading::default());
        let geo = Episode::reset(EpisodeSpec::new(f.clone(), start, vec![3], 10), EnvConfig::default()).unwrap();
        assert!(geo.state().found_log.is_empty());
        let cfg = EnvConfig { success_metric: SuccessMetric::Euclidean, ..Default::default() };
        let euc = Episode::reset(EpisodeSpec::new(f, start, vec![3], 10), cfg).unwrap();
        assert_eq!(euc.state().terminated, Some(Termination::AllFound));
    }

    #[test]
    fn strict_sequence_skips_out_of_order_credit() {
        let f = corridor();
        let mut spec = EpisodeSpec::new(f, Pose::at_cell(Cell::new(10, 0), 0.25, west()), vec![0, 1], 100);
        spec.sequence = Some(vec![1, 0]);
        let mut ep = Episode::reset(spec.clone(), EnvConfig::default()).unwrap();
        for _ in 0..6 {
            ep.step(Action::MoveForward).unwrap();
        }
        assert!(ep.state().found_log.is_empty());
        assert_eq!(ep.sequence_cursor(), Some(1));

        spec.opportunistic = true;
        let mut ep = Episode::reset(spec, EnvConfig::default()).unwrap();
        for _ in 0..6 {
            ep.step(Action::MoveForward).unwrap();
        }
        assert_eq!(ep.state().found_log.len(), 1);
        assert_eq!(ep.sequence_cursor(), Some(1));
    }

    #[test]
    fn log_line_round_trip() {
        let catalog = crate::scene::CategoryCatalog::default();
        let pose = Pose::at_cell(Cell::new(1, 2), 0.25, Heading::default());
        let line = format_log_line(3, Action::TurnRight, &pose, false, &[2, 4], &catalog, -0.01);
        assert_eq!(line, "3\tright\t0.375000\t0.625000\t0\t0\tfound:potted_plant,toilet\t-0.010000000");
        assert_eq!(parse_log_action(&line).unwrap(), Action::TurnRight);
    }
}

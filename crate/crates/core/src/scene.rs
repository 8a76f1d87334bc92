//! Static world model: occupancy grid, object instances, category catalog.
//!
//! Scenes are immutable once built and can be loaded from / saved to a small
//! line-oriented text format:
//!
//! ```text
//! multion-scene v1 <width> <height> <cell_size>
//! <height rows of `#` (obstacle) / `.` (free)>
//! obj <label> <x> <y>
//! catalog <label> ...        (optional)
//! ```
//!
//! Labels containing spaces are written with `_` in place of each space.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
pub const DEFAULT_ENCODING_WIDTH: usize = 16;
pub const DEFAULT_CATEGORIES: [&str; 6] = ["chair", "couch", "potted plant", "bed", "toilet", "tv"];

const HEADER_MAGIC: &str = "multion-scene";
const FORMAT_VERSION: &str = "v1";
const GEN_RETRIES: usize = 64;

pub type CategoryId = usize;

/// Grid coordinate: `x` is the column, `y` the row, origin top-left.
///
/// Ordering is row-major (`y` first), which is the tie-break order used
/// throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
}

/// Ordered list of category labels embedded in a fixed-width one-hot encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCatalog {
    names: Vec<String>,
    encoding_width: usize,
}

impl Default for CategoryCatalog {
    fn default() -> Self {
        Self {
            names: DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            encoding_width: DEFAULT_ENCODING_WIDTH,
        }
    }
}

impl CategoryCatalog {
    pub fn new(names: Vec<String>, encoding_width: usize) -> Result<Self, SceneError> {
        if names.is_empty() {
            return Err(SceneError::Catalog("catalog must not be empty".into()));
        }
        if names.len() > encoding_width {
            return Err(SceneError::Catalog(format!(
                "{} categories exceed encoding width {}",
                names.len(),
                encoding_width
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.trim() != n || n.contains('_') || n.contains(['\t', '\n', ',']) {
                return Err(SceneError::Catalog(format!("label {n:?} is not representable")));
            }
            if !seen.insert(n.as_str()) {
                return Err(SceneError::Catalog(format!("duplicate label {n:?}")));
            }
        }
        Ok(Self { names, encoding_width })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn encoding_width(&self) -> usize {
        self.encoding_width
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: CategoryId) -> &str {
        &self.names[id]
    }

    /// Resolves a label; accepts either the plain form or the file-token form.
    pub fn id_of(&self, label: &str) -> Option<CategoryId> {
        let plain = label.replace('_', " ");
        self.names.iter().position(|n| *n == plain)
    }

    /// Label as written in files and logs (spaces become `_`).
    pub fn token(&self, id: CategoryId) -> String {
        self.names[id].replace(' ', "_")
    }

    /// Multi-hot vector of `encoding_width` slots.
    pub fn encode<I: IntoIterator<Item = CategoryId>>(&self, ids: I) -> Vec<f32> {
        let mut v = vec![0.0; self.encoding_width];
        for id in ids {
            v[id] = 1.0;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub category: CategoryId,
    pub cell: Cell,
}

/// Read-only view of a 2-D passability grid.
pub trait Traversable {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn is_free(&self, cell: Cell) -> bool;

    fn in_bounds(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width() && (y as usize) < self.height()
    }

    fn index(&self, cell: Cell) -> usize {
        cell.y * self.width() + cell.x
    }
}

/// Plain boolean passability mask (true = free).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeMask {
    pub width: usize,
    pub height: usize,
    pub free: Vec<bool>,
}

impl FreeMask {
    pub fn new(width: usize, height: usize, free: Vec<bool>) -> Self {
        assert_eq!(free.len(), width * height);
        Self { width, height, free }
    }
}

impl Traversable for FreeMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn is_free(&self, cell: Cell) -> bool {
        self.free[cell.y * self.width + cell.x]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScene {
    width: usize,
    height: usize,
    cell_size: f64,
    /// Row-major, `true` = obstacle.
    occupancy: Vec<bool>,
    objects: Vec<ObjectInstance>,
    catalog: CategoryCatalog,
}

impl Traversable for GridScene {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn is_free(&self, cell: Cell) -> bool {
        !self.occupancy[cell.y * self.width + cell.x]
    }
}

impl GridScene {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        occupancy: Vec<bool>,
        objects: Vec<ObjectInstance>,
        catalog: CategoryCatalog,
    ) -> Result<Self, SceneError> {
        let scene = Self { width, height, cell_size, occupancy, objects, catalog };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.width == 0 || self.height == 0 {
            return Err(SceneError::Invalid("width and height must be positive".into()));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(SceneError::Invalid(format!("cell size {} must be positive", self.cell_size)));
        }
        if self.occupancy.len() != self.width * self.height {
            return Err(SceneError::Invalid("occupancy size does not match dimensions".into()));
        }
        let mut taken = HashSet::new();
        for o in &self.objects {
            if o.category >= self.catalog.len() {
                return Err(SceneError::Invalid(format!("object category {} not in catalog", o.category)));
            }
            if o.cell.x >= self.width || o.cell.y >= self.height {
                return Err(SceneError::Invalid(format!("object at {} is out of bounds", o.cell)));
            }
            if !self.is_free(o.cell) {
                return Err(SceneError::Invalid(format!("object at {} lies on an obstacle", o.cell)));
            }
            if !taken.insert((o.category, o.cell)) {
                return Err(SceneError::Invalid(format!("duplicate object at {}", o.cell)));
            }
        }
        Ok(())
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn catalog(&self) -> &CategoryCatalog {
        &self.catalog
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn instances_of(&self, category: CategoryId) -> Vec<Cell> {
        self.objects.iter().filter(|o| o.category == category).map(|o| o.cell).collect()
    }

    /// Sorted, deduplicated list of categories with at least one instance.
    pub fn categories_present(&self) -> Vec<CategoryId> {
        let mut v: Vec<_> = self.objects.iter().map(|o| o.category).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell::new(x, y)))
            .filter(|c| self.is_free(*c))
            .collect()
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        ((cell.x as f64 + 0.5) * self.cell_size, (cell.y as f64 + 0.5) * self.cell_size)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_MAGIC} {FORMAT_VERSION} {} {} {}\n", self.width, self.height, self.cell_size);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(if self.occupancy[y * self.width + x] { '#' } else { '.' });
            }
            out.push('\n');
        }
        for o in &self.objects {
            out.push_str(&format!("obj {} {} {}\n", self.catalog.token(o.category), o.cell.x, o.cell.y));
        }
        if self.catalog != CategoryCatalog::default() {
            out.push_str("catalog");
            for id in 0..self.catalog.len() {
                out.push(' ');
                out.push_str(&self.catalog.token(id));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SceneError> {
        let perr = |line: usize, msg: &str| SceneError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != HEADER_MAGIC {
            return Err(perr(ln, "expected `multion-scene v1 <width> <height> <cell_size>`"));
        }
        if parts[1] != FORMAT_VERSION {
            return Err(perr(ln, &format!("unsupported version {}", parts[1])));
        }
        let width: usize = parts[2].parse().map_err(|_| perr(ln, "bad width"))?;
        let height: usize = parts[3].parse().map_err(|_| perr(ln, "bad height"))?;
        let cell_size: f64 = parts[4].parse().map_err(|_| perr(ln, "bad cell size"))?;

        let mut occupancy = Vec::with_capacity(width * height);
        for _ in 0..height {
            let (ln, row) = lines.next().ok_or_else(|| perr(ln + 1, "missing grid row"))?;
            if row.chars().count() != width {
                return Err(perr(ln, &format!("grid row must have {width} characters")));
            }
            for ch in row.chars() {
                match ch {
                    '#' => occupancy.push(true),
                    '.' => occupancy.push(false),
                    _ => return Err(perr(ln, &format!("unexpected grid character {ch:?}"))),
                }
            }
        }

        let mut raw_objects = Vec::new();
        let mut catalog = None;
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first() {
                None => continue,
                Some(&"obj") => {
                    if toks.len() != 4 {
                        return Err(perr(ln, "expected `obj <label> <x> <y>`"));
                    }
                    let x: usize = toks[2].parse().map_err(|_| perr(ln, "bad object x"))?;
                    let y: usize = toks[3].parse().map_err(|_| perr(ln, "bad object y"))?;
                    raw_objects.push((ln, toks[1].to_string(), Cell::new(x, y)));
                }
                Some(&"catalog") => {
                    if catalog.is_some() {
                        return Err(perr(ln, "duplicate catalog line"));
                    }
                    let names = toks[1..].iter().map(|t| t.replace('_', " ")).collect();
                    catalog = Some(CategoryCatalog::new(names, DEFAULT_ENCODING_WIDTH)?);
                }
                Some(other) => return Err(perr(ln, &format!("unknown directive {other:?}"))),
            }
        }
        let catalog = catalog.unwrap_or_default();

        let mut objects = Vec::with_capacity(raw_objects.len());
        for (ln, label, cell) in raw_objects {
            let category = catalog
                .id_of(&label)
                .ok_or_else(|| SceneError::Invalid(format!("line {ln}: unknown category label {label:?}")))?;
            objects.push(ObjectInstance { category, cell });
        }
        Self::new(width, height, cell_size, occupancy, objects, catalog)
    }
}

pub fn load_scene(path: &Path) -> Result<GridScene, SceneError> {
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
    GridScene::from_text(&text)
}

pub fn save_scene(scene: &GridScene, path: &Path) -> Result<(), SceneError> {
    fs::write(path, scene.to_text()).map_err(|source| SceneError::Io { path: path.display().to_string(), source })
}

/// Parameters of the procedural room generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGenSpec {
    pub width: usize,
    pub height: usize,
    pub room_count: usize,
    pub instances_per_category: RangeInclusive<usize>,
    pub categories_present: Vec<CategoryId>,
    pub seed: u64,
}

impl SceneGenSpec {
    pub fn new(width: usize, height: usize, room_count: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            room_count,
            instances_per_category: 1..=3,
            categories_present: (0..DEFAULT_CATEGORIES.len()).collect(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Region {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Region {
    fn w(&self) -> usize {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

const MIN_ROOM_SIDE: usize = 2;

/// Rectangular rooms carved by recursive wall splits, each split wall pierced
/// by one door gap. Objects are placed uniformly on free non-door cells.
pub fn generate_scene(spec: &SceneGenSpec) -> Result<GridScene, SceneError> {
    let catalog = CategoryCatalog::default();
    if spec.width < 4 || spec.height < 4 {
        return Err(SceneError::Generation("width and height must be at least 4".into()));
    }
    if spec.room_count == 0 {
        return Err(SceneError::Generation("room_count must be at least 1".into()));
    }
    if !spec.categories_present.is_empty() && *spec.instances_per_category.start() == 0 {
        return Err(SceneError::Generation("every present category needs at least one instance".into()));
    }
    if spec.instances_per_category.is_empty() {
        return Err(SceneError::Generation("empty instance range".into()));
    }
    for &c in &spec.categories_present {
        if c >= catalog.len() {
            return Err(SceneError::Generation(format!("category {c} not in catalog")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..GEN_RETRIES {
        if let Some(scene) = try_generate(spec, &catalog, &mut rng)? {
            return Ok(scene);
        }
    }
    Err(SceneError::Generation(format!("no valid layout after {GEN_RETRIES} attempts")))
}

fn try_generate(spec: &SceneGenSpec, catalog: &CategoryCatalog, rng: &mut ChaCha8Rng) -> Result<Option<GridScene>, SceneError> {
    let (w, h) = (spec.width, spec.height);
    let mut occ = vec![false; w * h];
    for x in 0..w {
        occ[x] = true;
        occ[(h - 1) * w + x] = true;
    }
    for y in 0..h {
        occ[y * w] = true;
        occ[y * w + w - 1] = true;
    }
    let mut door_set: HashSet<Cell> = HashSet::new();
    let mut regions = vec![Region { x0: 1, y0: 1, x1: w - 2, y1: h - 2 }];

    while regions.len() < spec.room_count {
        // split the largest splittable region
        let mut order: Vec<usize> = (0..regions.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(regions[i].w() * regions[i].h()));
        let mut split_done = false;
        for i in order {
            let r = regions[i];
            let can_v = r.w() >= 2 * MIN_ROOM_SIDE + 1;
            let can_h = r.h() >= 2 * MIN_ROOM_SIDE + 1;
            if !can_v && !can_h {
                continue;
            }
            let vertical = if can_v && can_h { r.w() >= r.h() } else { can_v };
            if vertical {
                let options: Vec<usize> = (r.x0 + MIN_ROOM_SIDE..=r.x1 - MIN_ROOM_SIDE)
                    .filter(|&x| !door_set.contains(&Cell::new(x, r.y0 - 1)) && !door_set.contains(&Cell::new(x, r.y1 + 1)))
                    .collect();
                let Some(&sx) = options.choose(rng) else { continue };
                for y in r.y0..=r.y1 {
                    occ[y * w + sx] = true;
                }
                let dy = rng.random_range(r.y0..=r.y1);
                occ[dy * w + sx] = false;
                door_set.insert(Cell::new(sx, dy));
                regions[i] = Region { x1: sx - 1, ..r };
                regions.push(Region { x0: sx + 1, ..r });
            } else {
                let options: Vec<usize> = (r.y0 + MIN_ROOM_SIDE..=r.y1 - MIN_ROOM_SIDE)
                    .filter(|&y| !door_set.contains(&Cell::new(r.x0 - 1, y)) && !door_set.contains(&Cell::new(r.x1 + 1, y)))
                    .collect();
                let Some(&sy) = options.choose(rng) else { continue };
                for x in r.x0..=r.x1 {
                    occ[sy * w + x] = true;
                }
                let dx = rng.random_range(r.x0..=r.x1);
                occ[sy * w + dx] = false;
                door_set.insert(Cell::new(dx, sy));
                regions[i] = Region { y1: sy - 1, ..r };
                regions.push(Region { y0: sy + 1, ..r });
            }
            split_done = true;
            break;
        }
        if !split_done {
            return Err(SceneError::Generation(format!(
                "{}x{} grid cannot hold {} rooms",
                w, h, spec.room_count
            )));
        }
    }

    // split positions avoid sealing doors, so this only guards regressions
    let mask = FreeMask::new(w, h, occ.iter().map(|o| !o).collect());
    if !is_connected(&mask) {
        return Ok(None);
    }

    let mut candidates: Vec<Cell> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Cell::new(x, y)))
        .filter(|c| !occ[c.y * w + c.x] && !door_set.contains(c))
        .collect();
    candidates.shuffle(rng);

    let mut objects = Vec::new();
    let mut next = 0;
    for &cat in &spec.categories_present {
        let n = rng.random_range(spec.instances_per_category.clone());
        for _ in 0..n {
            if next >= candidates.len() {
                return Ok(None);
            }
            objects.push(ObjectInstance { category: cat, cell: candidates[next] });
            next += 1;
        }
    }
    GridScene::new(w, h, DEFAULT_CELL_SIZE, occ, objects, catalog.clone()).map(Some)
}

/// True when every free cell is 4-connected to every other free cell.
pub fn is_connected<G: Traversable>(grid: &G) -> bool {
    let (w, h) = (grid.width(), grid.height());
    let free: Vec<Cell> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Cell::new(x, y)))
        .filter(|c| grid.is_free(*c))
        .collect();
    let Some(&start) = free.first() else {
        return true;
    };
    let mut seen = vec![false; w * h];
    let mut stack = vec![start];
    seen[grid.index(start)] = true;
    let mut count = 0;
    while let Some(c) = stack.pop() {
        count += 1;
        for (dx, dy) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let (nx, ny) = (c.x as isize + dx, c.y as isize + dy);
            if !grid.in_bounds(nx, ny) {
                continue;
            }
            let n = Cell::new(nx as usize, ny as usize);
            let i = grid.index(n);
            if grid.is_free(n) && !seen[i] {
                seen[i] = true;
                stack.push(n);
            }
        }
    }
    count == free.len()
}

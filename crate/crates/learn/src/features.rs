//! Observation → network input, and network output → goal cell.

use multion_core::env::{SemanticMap, OBSTACLE_PLANE};
use multion_core::scene::Cell;

use crate::real::Real;

/// All map planes, max-pooled (or zero-padded) to `side × side`, as 0/1 bytes.
pub fn map_tensor(map: &SemanticMap, side: usize) -> Vec<u8> {
    let m = map.side();
    let mut out = vec![0u8; map.planes() * side * side];
    for p in 0..map.planes() {
        let src = map.plane(p);
        let dst = &mut out[p * side * side..][..side * side];
        if m <= side {
            for y in 0..m {
                dst[y * side..y * side + m].copy_from_slice(&src[y * m..(y + 1) * m]);
            }
            continue;
        }
        for oy in 0..side {
            let (y0, y1) = (oy * m / side, ((oy + 1) * m).div_ceil(side));
            for ox in 0..side {
                let (x0, x1) = (ox * m / side, ((ox + 1) * m).div_ceil(side));
                let v = (y0..y1).any(|y| src[y * m + x0..y * m + x1].iter().any(|&b| b != 0));
                dst[oy * side + ox] = v as u8;
            }
        }
    }
    out
}

pub fn to_real<T: Real>(bytes: &[u8]) -> Vec<T> {
    bytes.iter().map(|&b| if b != 0 { T::one() } else { T::zero() }).collect()
}

/// Maps an action in `[0, 1]²` to a cell of the full map, clamped to the scene.
pub fn action_to_cell(action: [f32; 2], map_side: usize, width: usize, height: usize) -> Cell {
    let to = |a: f32, limit: usize| ((a.clamp(0.0, 1.0) as f64 * map_side as f64).floor() as usize).min(limit - 1);
    Cell::new(to(action[0], width), to(action[1], height))
}

/// Closest cell (Chebyshev rings, then row-major) not known to be an obstacle
/// and not within one cell of `agent`. A goal there counts as reached the
/// moment it is issued, so it would waste the macro-step.
pub fn snap_to_free(map: &SemanticMap, width: usize, height: usize, cell: Cell, agent: Cell) -> Option<Cell> {
    let max_r = width.max(height);
    for r in 0..=max_r {
        let mut best: Option<Cell> = None;
        let (y0, y1) = (cell.y.saturating_sub(r), (cell.y + r).min(height - 1));
        let (x0, x1) = (cell.x.saturating_sub(r), (cell.x + r).min(width - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = Cell::new(x, y);
                if c.chebyshev(cell) == r && c.chebyshev(agent) > 1 && map.get(OBSTACLE_PLANE, c) == 0 {
                    best = Some(best.map_or(c, |b: Cell| b.min(c)));
                }
            }
        }
        if best.is_some() {
            return best;
        }
    }
    None
}

//! Frontier extraction and grid path planning on a projected label map.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::semgrid::{GridGeometry, SemanticGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellLabel {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub free: f64,
    pub occupied: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            free: 0.6,
            occupied: 0.5,
        }
    }
}

/// Per-cell labels together with the grid they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub geometry: GridGeometry,
    pub labels: Vec<CellLabel>,
}

impl LabelMap {
    pub fn new(geometry: GridGeometry, labels: Vec<CellLabel>) -> Self {
        assert_eq!(geometry.num_cells(), labels.len());
        Self { geometry, labels }
    }

    pub fn filled(geometry: GridGeometry, label: CellLabel) -> Self {
        Self {
            labels: vec![label; geometry.num_cells()],
            geometry,
        }
    }

    pub fn get(&self, cell: usize) -> CellLabel {
        self.labels[cell]
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Free cells farther than `clearance` cells (Chebyshev) from any occupied cell.
    pub fn traversable(&self, clearance: usize) -> Vec<bool> {
        let g = &self.geometry;
        let mut ok: Vec<bool> = self.labels.iter().map(|l| *l == CellLabel::Free).collect();
        let r = clearance as i64;
        for (cell, label) in self.labels.iter().enumerate() {
            if *label != CellLabel::Occupied {
                continue;
            }
            let (cx, cy) = g.coords(cell);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                    if x >= 0 && y >= 0 && (x as usize) < g.width && (y as usize) < g.height {
                        ok[g.index(x as usize, y as usize)] = false;
                    }
                }
            }
        }
        ok
    }

    /// True when the straight segment between two points only crosses free cells.
    pub fn segment_is_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        segment_cells(&self.geometry, a, b)
            .map(|cells| cells.iter().all(|c| self.labels[*c] == CellLabel::Free))
            .unwrap_or(false)
    }
}

/// Cells touched by the segment `a → b`; `None` if `a` lies outside the grid.
pub fn segment_cells(geometry: &GridGeometry, a: (f64, f64), b: (f64, f64)) -> Option<Vec<usize>> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    let start = geometry.cell_of(a.0, a.1)?;
    if len == 0.0 {
        return Some(vec![start]);
    }
    let trav = crate::semgrid::traverse_ray(geometry, a, dy.atan2(dx), len).ok()?;
    let mut cells: Vec<usize> = trav.cells.iter().map(|c| c.index).collect();
    if cells.is_empty() {
        cells.push(start);
    }
    Some(cells)
}

pub fn classify_cells(grid: &SemanticGrid, thresholds: &Thresholds) -> LabelMap {
    let labels = (0..grid.num_cells())
        .map(|cell| {
            let p = grid.probabilities(cell);
            if p[0] > thresholds.free {
                CellLabel::Free
            } else if p[1..].iter().copied().fold(0.0, f64::max) > thresholds.occupied {
                CellLabel::Occupied
            } else {
                CellLabel::Unknown
            }
        })
        .collect();
    LabelMap::new(*grid.geometry(), labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    /// Member cells in row-major order.
    pub cells: Vec<usize>,
    pub centroid: (f64, f64),
    /// Planning target: the free cell nearest the centroid within the bounding box.
    pub goal: usize,
}

impl Frontier {
    pub fn size(&self) -> usize {
        self.cells.len()
    }
}

/// Clusters of free cells bordering unknown space, largest first.
pub fn detect_frontiers(labels: &LabelMap, min_size: usize, clearance: usize) -> Vec<Frontier> {
    let g = &labels.geometry;
    let n = g.num_cells();
    let is_frontier: Vec<bool> = (0..n)
        .map(|c| {
            labels.labels[c] == CellLabel::Free
                && g.neighbors8(c)
                    .any(|nb| labels.labels[nb] == CellLabel::Unknown)
        })
        .collect();
    let traversable = labels.traversable(clearance);
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for seed in 0..n {
        if !is_frontier[seed] || seen[seed] {
            continue;
        }
        let mut cells = vec![seed];
        let mut stack = vec![seed];
        seen[seed] = true;
        while let Some(c) = stack.pop() {
            for nb in g.neighbors8(c) {
                if is_frontier[nb] && !seen[nb] {
                    seen[nb] = true;
                    cells.push(nb);
                    stack.push(nb);
                }
            }
        }
        if cells.len() < min_size {
            continue;
        }
        cells.sort_unstable();
        let k = cells.len() as f64;
        let (sx, sy) = cells.iter().fold((0.0, 0.0), |(ax, ay), c| {
            let (x, y) = g.cell_center(*c);
            (ax + x, ay + y)
        });
        let centroid = (sx / k, sy / k);
        let goal = snap_goal(labels, &traversable, &cells, centroid);
        out.push(Frontier {
            cells,
            centroid,
            goal,
        });
    }
    out.sort_by(|a, b| b.size().cmp(&a.size()).then(a.cells[0].cmp(&b.cells[0])));
    out
}

fn snap_goal(
    labels: &LabelMap,
    traversable: &[bool],
    cells: &[usize],
    centroid: (f64, f64),
) -> usize {
    let g = &labels.geometry;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for c in cells {
        let (x, y) = g.coords(*c);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let mut best: Option<(bool, f64, usize)> = None;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = g.index(x, y);
            if labels.labels[c] != CellLabel::Free {
                continue;
            }
            let (cx, cy) = g.cell_center(c);
            let d = (cx - centroid.0).hypot(cy - centroid.1);
            // traversable cells first, then distance, then row-major
            let key = (!traversable[c], d, c);
            let better = match &best {
                None => true,
                Some(b) => (key.0, key.1).partial_cmp(&(b.0, b.1)) == Some(Ordering::Less),
            };
            if better {
                best = Some(key);
            }
        }
    }
    best.map(|b| b.2).unwrap_or(cells[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    /// Cell sequence from start to goal.
    pub cells: Vec<usize>,
    /// Cell centres of `cells`.
    pub waypoints: Vec<(f64, f64)>,
    pub length: f64,
}

impl PlannedPath {
    pub fn polyline_length(points: &[(f64, f64)]) -> f64 {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    h: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (f, h, cell)
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Moves allowed from `cell`: 8-neighbourhood, no corner cutting.
pub(crate) fn moves<'a>(
    g: &'a GridGeometry,
    ok: &'a [bool],
    cell: usize,
) -> impl Iterator<Item = (usize, f64)> + 'a {
    let (cx, cy) = g.coords(cell);
    let (w, h) = (g.width as i64, g.height as i64);
    let at = move |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && y >= 0 && x < w && y < h).then(|| g.index(x as usize, y as usize))
    };
    const DIRS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    DIRS.iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (cx as i64 + dx, cy as i64 + dy);
        let target = at(x, y)?;
        if !ok[target] {
            return None;
        }
        if dx != 0 && dy != 0 {
            let a = at(cx as i64 + dx, cy as i64)?;
            let b = at(cx as i64, cy as i64 + dy)?;
            if !ok[a] || !ok[b] {
                return None;
            }
            Some((target, std::f64::consts::SQRT_2))
        } else {
            Some((target, 1.0))
        }
    })
}

/// Shortest 8-connected path between two cells; `None` when unreachable.
///
/// Only cells passing the clearance test are entered, except the start.
pub fn astar(
    labels: &LabelMap,
    start: usize,
    goal: usize,
    clearance: usize,
) -> Option<PlannedPath> {
    let mut ok = labels.traversable(clearance);
    astar_on(&labels.geometry, &mut ok, start, goal)
}

/// A* over a precomputed traversability mask (the start is always admitted).
pub fn astar_on(
    g: &GridGeometry,
    ok: &mut [bool],
    start: usize,
    goal: usize,
) -> Option<PlannedPath> {
    let n = g.num_cells();
    if start >= n || goal >= n {
        return None;
    }
    let start_was = ok[start];
    ok[start] = true;
    let result = astar_inner(g, ok, start, goal);
    ok[start] = start_was;
    result
}

fn astar_inner(g: &GridGeometry, ok: &[bool], start: usize, goal: usize) -> Option<PlannedPath> {
    if !ok[goal] {
        return None;
    }
    let (gx, gy) = g.coords(goal);
    let heuristic = |c: usize| {
        let (x, y) = g.coords(c);
        (x as f64 - gx as f64).hypot(y as f64 - gy as f64)
    };
    let n = g.num_cells();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    cost[start] = 0.0;
    heap.push(Open {
        f: heuristic(start),
        h: heuristic(start),
        cell: start,
    });
    while let Some(Open { cell, .. }) = heap.pop() {
        if closed[cell] {
            continue;
        }
        closed[cell] = true;
        if cell == goal {
            break;
        }
        for (nb, step) in moves(g, ok, cell) {
            if closed[nb] {
                continue;
            }
            let c = cost[cell] + step;
            if c < cost[nb] {
                cost[nb] = c;
                parent[nb] = cell;
                let h = heuristic(nb);
                heap.push(Open {
                    f: c + h,
                    h,
                    cell: nb,
                });
            }
        }
    }
    if !closed[goal] {
        return None;
    }
    let mut cells = vec![goal];
    while *cells.last().unwrap() != start {
        cells.push(parent[*cells.last().unwrap()]);
    }
    cells.reverse();
    let waypoints: Vec<(f64, f64)> = cells.iter().map(|c| g.cell_center(*c)).collect();
    let length = PlannedPath::polyline_length(&waypoints);
    Some(PlannedPath {
        cells,
        waypoints,
        length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalOutcome {
    Reached,
    Unreachable,
    /// Attempted, but the frontier persisted or the run could not follow the path.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blacklist {
    /// Blacklisted goal points with the replan index at which they were added.
    pub entries: Vec<((f64, f64), usize)>,
    /// Merge radius in metres.
    pub radius: f64,
    /// Entries expire this many replans after insertion; `None` keeps them forever.
    pub expiry: Option<usize>,
}

impl Blacklist {
    pub fn new(radius: f64, expiry: Option<usize>) -> Self {
        Self {
            entries: Vec::new(),
            radius,
            expiry,
        }
    }

    /// Default merge radius of two cells.
    pub fn for_resolution(resolution: f64) -> Self {
        Self::new(2.0 * resolution, None)
    }

    pub fn update(&mut self, goal: (f64, f64), outcome: GoalOutcome, replan: usize) {
        if outcome != GoalOutcome::Reached {
            self.entries.push((goal, replan));
        }
    }

    pub fn contains(&self, point: (f64, f64), replan: usize) -> bool {
        self.entries.iter().any(|((x, y), at)| {
            let alive = self.expiry.is_none_or(|e| replan < at + e);
            alive && (x - point.0).hypot(y - point.1) <= self.radius + 1e-9
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

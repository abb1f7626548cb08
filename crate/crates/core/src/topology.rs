//! Box grids over a rectangle, combinatorial outer approximations of the
//! time-τ map, maximal invariant sets, isolation, entrance/exit structure of
//! polygon boundaries, dissipativity certificates and a hole detector.
//!
//! Nothing here is rigorous: images are sampled on a 3×3 stencil per box,
//! hulled and padded by one box diagonal.

use std::collections::VecDeque;
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;

use crate::equilibria::jacobian_at;
use crate::field::VectorField;
use crate::integrate::{flow_endpoint, Termination};
use crate::{Error, IntegrationParams, Point, Rect, Result};

/// Uniform partition of a rectangle into `nx × ny` boxes. Box `(i, j)` has
/// index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGrid {
    rect: Rect,
    nx: usize,
    ny: usize,
}

impl BoxGrid {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if !rect.is_valid() {
            return Err(Error::Precondition("degenerate grid rectangle".into()));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::Precondition("grid needs at least 4 boxes per side".into()));
        }
        Ok(Self { rect, nx, ny })
    }

    /// Square boxes of `n × n` over `rect`.
    pub fn square(rect: Rect, n: usize) -> Result<Self> {
        Self::new(rect, n, n)
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn box_width(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn box_height(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    pub fn box_diagonal(&self) -> f64 {
        self.box_width().hypot(self.box_height())
    }

    /// Larger of the two box side lengths.
    pub fn box_size(&self) -> f64 {
        self.box_width().max(self.box_height())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    fn x_at(&self, i: usize) -> f64 {
        if i == self.nx {
            self.rect.x1
        } else {
            self.rect.x0 + i as f64 * self.box_width()
        }
    }

    fn y_at(&self, j: usize) -> f64 {
        if j == self.ny {
            self.rect.y1
        } else {
            self.rect.y0 + j as f64 * self.box_height()
        }
    }

    pub fn box_rect(&self, idx: usize) -> Rect {
        let (i, j) = self.ij(idx);
        Rect::new(self.x_at(i), self.y_at(j), self.x_at(i + 1), self.y_at(j + 1))
    }

    pub fn center(&self, idx: usize) -> Point {
        self.box_rect(idx).center()
    }

    /// Box containing `p`; points on the upper edges go to the last box.
    pub fn locate(&self, p: Point) -> Option<usize> {
        if !self.rect.contains(p) {
            return None;
        }
        let i = (((p.x - self.rect.x0) / self.box_width()) as usize).min(self.nx - 1);
        let j = (((p.y - self.rect.y0) / self.box_height()) as usize).min(self.ny - 1);
        Some(self.index(i, j))
    }

    /// Column and row ranges of boxes meeting `[x0, x1] × [y0, y1]`, clipped
    /// to the grid. `None` if the query misses the grid.
    fn window(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<(usize, usize, usize, usize)> {
        let r = self.rect;
        if x1 < r.x0 || x0 > r.x1 || y1 < r.y0 || y0 > r.y1 {
            return None;
        }
        let ci = |x: f64| (((x - r.x0) / self.box_width()).floor().max(0.0) as usize).min(self.nx - 1);
        let cj = |y: f64| (((y - r.y0) / self.box_height()).floor().max(0.0) as usize).min(self.ny - 1);
        Some((ci(x0), ci(x1), cj(y0), cj(y1)))
    }
}

/// A set of boxes of one grid.
#[derive(Clone, PartialEq)]
pub struct BoxSet {
    grid: BoxGrid,
    mask: Vec<bool>,
    count: usize,
}

impl fmt::Debug for BoxSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoxSet")
            .field("grid", &self.grid)
            .field("len", &self.count)
            .finish()
    }
}

impl BoxSet {
    pub fn empty(grid: BoxGrid) -> Self {
        Self {
            mask: vec![false; grid.len()],
            grid,
            count: 0,
        }
    }

    pub fn full(grid: BoxGrid) -> Self {
        Self {
            mask: vec![true; grid.len()],
            count: grid.len(),
            grid,
        }
    }

    /// Boxes selected by a predicate on their rectangles.
    pub fn from_fn(grid: BoxGrid, mut keep: impl FnMut(&Rect) -> bool) -> Self {
        let mut s = Self::empty(grid);
        for idx in 0..grid.len() {
            if keep(&grid.box_rect(idx)) {
                s.insert(idx);
            }
        }
        s
    }

    pub fn from_indices(grid: BoxGrid, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(grid);
        for idx in indices {
            if idx >= grid.len() {
                return Err(Error::Parse(format!("box index {idx} outside the grid")));
            }
            s.insert(idx);
        }
        Ok(s)
    }

    /// Boxes containing at least one of the points.
    pub fn cover_points(grid: BoxGrid, points: &[Point]) -> Self {
        let mut s = Self::empty(grid);
        for &p in points {
            if let Some(idx) = grid.locate(p) {
                s.insert(idx);
            }
        }
        s
    }

    /// Boxes whose centre lies in the closed disk.
    pub fn disk_cover(grid: BoxGrid, center: Point, radius: f64) -> Self {
        Self::from_fn(grid, |r| r.center().dist(center) <= radius)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.mask.get(idx).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, idx: usize) {
        if !self.mask[idx] {
            self.mask[idx] = true;
            self.count += 1;
        }
    }

    pub fn remove(&mut self, idx: usize) {
        if self.mask[idx] {
            self.mask[idx] = false;
            self.count -= 1;
        }
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn rects(&self) -> impl Iterator<Item = Rect> + '_ {
        self.iter().map(|i| self.grid.box_rect(i))
    }

    pub fn contains_point(&self, p: Point) -> bool {
        self.within(p, 0.0)
    }

    /// Whether `p` is within Chebyshev distance `d` of the union of members.
    pub fn within(&self, p: Point, d: f64) -> bool {
        let Some((i0, i1, j0, j1)) = self.grid.window(p.x - d, p.y - d, p.x + d, p.y + d) else {
            return false;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                let idx = self.grid.index(i, j);
                if self.mask[idx] && chebyshev_to_rect(p, &self.grid.box_rect(idx)) <= d {
                    return true;
                }
            }
        }
        false
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(self.grid, other.grid, "box sets live on different grids");
        let mask: Vec<bool> = self.mask.iter().zip(&other.mask).map(|(&a, &b)| f(a, b)).collect();
        let count = mask.iter().filter(|&&m| m).count();
        Self {
            grid: self.grid,
            mask,
            count,
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.difference(other).is_empty()
    }

    /// Adds every box within `k` rings (8-neighbourhood), clipped to the grid.
    pub fn dilate(&self, k: usize) -> Self {
        if k == 0 {
            return self.clone();
        }
        let (nx, ny) = self.grid.resolution();
        let mut rows = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if self.mask[j * nx + i] {
                    for ii in i.saturating_sub(k)..=(i + k).min(nx - 1) {
                        rows[j * nx + ii] = true;
                    }
                }
            }
        }
        let mut mask = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if rows[j * nx + i] {
                    for jj in j.saturating_sub(k)..=(j + k).min(ny - 1) {
                        mask[jj * nx + i] = true;
                    }
                }
            }
        }
        let count = mask.iter().filter(|&&m| m).count();
        Self {
            grid: self.grid,
            mask,
            count,
        }
    }

    /// Smallest rectangle holding every member box.
    pub fn bounding_rect(&self) -> Option<Rect> {
        self.rects()
            .reduce(|a, b| Rect::new(a.x0.min(b.x0), a.y0.min(b.y0), a.x1.max(b.x1), a.y1.max(b.y1)))
    }

    /// Largest distance from `c` to a corner of a member box.
    pub fn radius_about(&self, c: Point) -> f64 {
        self.rects()
            .flat_map(|r| r.corners())
            .fold(0.0, |m, p| m.max(p.dist(c)))
    }

    /// Members with an 8-neighbour outside the set or off the grid.
    pub fn boundary_layer(&self) -> Self {
        let (nx, ny) = self.grid.resolution();
        let mut out = Self::empty(self.grid);
        for idx in self.iter() {
            let (i, j) = self.grid.ij(idx);
            let on_edge = i == 0 || j == 0 || i + 1 == nx || j + 1 == ny;
            let exposed = on_edge || neighbours8(i, j, nx, ny).any(|(a, b)| !self.mask[self.grid.index(a, b)]);
            if exposed {
                out.insert(idx);
            }
        }
        out
    }

    /// 8-connected components, ordered by their smallest index.
    pub fn components(&self) -> Vec<BoxSet> {
        let (nx, ny) = self.grid.resolution();
        let mut seen = vec![false; self.grid.len()];
        let mut out = Vec::new();
        for start in self.iter() {
            if seen[start] {
                continue;
            }
            let mut comp = Self::empty(self.grid);
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(idx) = queue.pop_front() {
                comp.insert(idx);
                let (i, j) = self.grid.ij(idx);
                for (a, b) in neighbours8(i, j, nx, ny) {
                    let n = self.grid.index(a, b);
                    if self.mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Text form: `rect x0 y0 x1 y1`, `res nx ny`, then the member indices
    /// on one line.
    pub fn to_text(&self) -> String {
        let r = self.grid.rect;
        let (nx, ny) = self.grid.resolution();
        let members: Vec<String> = self.iter().map(|i| i.to_string()).collect();
        format!(
            "rect {} {} {} {}\nres {} {}\n{}\n",
            r.x0,
            r.y0,
            r.x1,
            r.y1,
            nx,
            ny,
            members.join(" ")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("box set: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let rect_line = lines.next().ok_or_else(|| bad("missing rect line"))?;
        let nums: Vec<f64> = match rect_line.strip_prefix("rect") {
            Some(rest) => rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad rect value")))
                .collect::<Result<_>>()?,
            None => return Err(bad("expected `rect`")),
        };
        if nums.len() != 4 {
            return Err(bad("rect needs four numbers"));
        }
        let res_line = lines.next().ok_or_else(|| bad("missing res line"))?;
        let res: Vec<usize> = match res_line.strip_prefix("res") {
            Some(rest) => rest
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad("bad resolution")))
                .collect::<Result<_>>()?,
            None => return Err(bad("expected `res`")),
        };
        if res.len() != 2 {
            return Err(bad("res needs two counts"));
        }
        let grid = BoxGrid::new(Rect::new(nums[0], nums[1], nums[2], nums[3]), res[0], res[1])?;
        let indices = lines
            .flat_map(str::split_whitespace)
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad box index")))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(grid, indices)
    }
}

impl fmt::Display for BoxSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn neighbours8(i: usize, j: usize, nx: usize, ny: usize) -> impl Iterator<Item = (usize, usize)> {
    let (i, j) = (i as i64, j as i64);
    (-1i64..=1)
        .flat_map(move |dj| (-1i64..=1).map(move |di| (i + di, j + dj)))
        .filter(move |&(a, b)| (a, b) != (i, j) && a >= 0 && b >= 0 && a < nx as i64 && b < ny as i64)
        .map(|(a, b)| (a as usize, b as usize))
}

fn chebyshev_to_rect(p: Point, r: &Rect) -> f64 {
    let dx = (r.x0 - p.x).max(p.x - r.x1).max(0.0);
    let dy = (r.y0 - p.y).max(p.y - r.y1).max(0.0);
    dx.max(dy)
}

// ---------------------------------------------------------------------------
// convex geometry for box images

fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d.scale(t))
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    (o1 > 0.0) != (o2 > 0.0) && (o3 > 0.0) != (o4 > 0.0) && o1 != 0.0 && o2 != 0.0
}

/// Point in a counterclockwise convex polygon (boundary included).
fn in_convex(poly: &[Point], p: Point) -> bool {
    if poly.len() < 3 {
        return false;
    }
    (0..poly.len()).all(|k| (poly[(k + 1) % poly.len()] - poly[k]).cross(p - poly[k]) >= 0.0)
}

fn edges_of(poly: &[Point]) -> Vec<(Point, Point)> {
    match poly.len() {
        0 => Vec::new(),
        1 => vec![(poly[0], poly[0])],
        2 => vec![(poly[0], poly[1])],
        n => (0..n).map(|k| (poly[k], poly[(k + 1) % n])).collect(),
    }
}

/// Euclidean distance between a convex hull (any vertex count) and a box.
fn hull_rect_distance(hull: &[Point], r: &Rect) -> f64 {
    let corners = r.corners();
    if hull.iter().any(|&p| r.contains(p)) || corners.iter().any(|&c| in_convex(hull, c)) {
        return 0.0;
    }
    let hull_edges = edges_of(hull);
    let rect_edges: Vec<(Point, Point)> = (0..4).map(|k| (corners[k], corners[(k + 1) % 4])).collect();
    let mut best = f64::INFINITY;
    for &(a, b) in &hull_edges {
        for &(c, d) in &rect_edges {
            if segments_intersect(a, b, c, d) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(a, c, d))
                .min(point_segment_distance(b, c, d))
                .min(point_segment_distance(c, a, b))
                .min(point_segment_distance(d, a, b));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// box maps

/// Directed graph of box transitions under the time-τ map, restricted to
/// the boxes of a domain. Images reaching outside the domain set `exits`.
#[derive(Debug, Clone)]
pub struct BoxMap {
    domain: BoxSet,
    tau: f64,
    padding: f64,
    // position of each grid box among the sources, u32::MAX if absent
    slot: Vec<u32>,
    sources: Vec<usize>,
    edges: Vec<Vec<usize>>,
    exits: Vec<bool>,
}

impl BoxMap {
    pub fn domain(&self) -> &BoxSet {
        &self.domain
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn padding(&self) -> f64 {
        self.padding
    }

    /// Image boxes of `idx` inside the domain.
    pub fn targets(&self, idx: usize) -> &[usize] {
        match self.slot.get(idx) {
            Some(&s) if s != u32::MAX => &self.edges[s as usize],
            _ => &[],
        }
    }

    /// Whether the image of `idx` reaches outside the domain.
    pub fn exits_from(&self, idx: usize) -> bool {
        match self.slot.get(idx) {
            Some(&s) if s != u32::MAX => self.exits[s as usize],
            _ => false,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

/// Map time from the box-size and speed scales of the domain:
/// `scale × grid diagonal / max speed at box centres`, clamped to [0.01, 5].
pub fn default_tau(field: &VectorField, domain: &BoxSet, scale: f64) -> Result<f64> {
    let mut vmax: f64 = 0.0;
    for idx in domain.iter() {
        let c = domain.grid().center(idx);
        let v = field
            .velocity(c)
            .map_err(|_| Error::NonFiniteField { x: c.x, y: c.y })?;
        vmax = vmax.max(v.norm());
    }
    let diag = domain.grid().rect().diagonal();
    let tau = if vmax > 0.0 { scale * diag / vmax } else { 5.0 };
    Ok(tau.clamp(0.01, 5.0))
}

/// Outer approximation of the time-τ map on the boxes of `domain`.
pub fn build_box_map(field: &VectorField, domain: &BoxSet, tau: f64, params: &IntegrationParams) -> Result<BoxMap> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Precondition("box map time must be positive".into()));
    }
    params.validate()?;
    let grid = *domain.grid();
    let (nx, ny) = grid.resolution();
    let (lx, ly) = (2 * nx + 1, 2 * ny + 1);
    let (hw, hh) = (0.5 * grid.box_width(), 0.5 * grid.box_height());
    let rect = grid.rect();
    let lattice_point = |a: usize, b: usize| {
        let x = if a == 2 * nx { rect.x1 } else { rect.x0 + a as f64 * hw };
        let y = if b == 2 * ny { rect.y1 } else { rect.y0 + b as f64 * hh };
        Point::new(x, y)
    };

    let mut needed = vec![false; lx * ly];
    for idx in domain.iter() {
        let (i, j) = grid.ij(idx);
        for b in 0..3 {
            for a in 0..3 {
                needed[(2 * j + b) * lx + 2 * i + a] = true;
            }
        }
    }
    let wanted: Vec<usize> = (0..lx * ly).filter(|&k| needed[k]).collect();
    let flows: Vec<Option<Point>> = wanted
        .par_iter()
        .map(|&k| {
            let p = lattice_point(k % lx, k / lx);
            let (q, term) = flow_endpoint(field, p, tau, params)?;
            Ok(match term {
                Termination::Escaped(_) => None,
                _ => Some(q),
            })
        })
        .collect::<Result<_>>()?;
    let mut image = vec![None; lx * ly];
    for (&k, q) in wanted.iter().zip(flows) {
        image[k] = q;
    }

    let padding = grid.box_diagonal();
    let sources: Vec<usize> = domain.iter().collect();
    let per_box: Vec<(Vec<usize>, bool)> = sources
        .par_iter()
        .map(|&idx| {
            let (i, j) = grid.ij(idx);
            let mut pts = Vec::with_capacity(9);
            let mut exit = false;
            for b in 0..3 {
                for a in 0..3 {
                    match image[(2 * j + b) * lx + 2 * i + a] {
                        Some(q) => pts.push(q),
                        None => exit = true,
                    }
                }
            }
            let hull = convex_hull(pts);
            if hull.is_empty() {
                return (Vec::new(), true);
            }
            let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for p in &hull {
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            let (x0, y0, x1, y1) = (x0 - padding, y0 - padding, x1 + padding, y1 + padding);
            if x0 < rect.x0 || y0 < rect.y0 || x1 > rect.x1 || y1 > rect.y1 {
                exit = true;
            }
            let mut targets = Vec::new();
            if let Some((i0, i1, j0, j1)) = grid.window(x0, y0, x1, y1) {
                for jj in j0..=j1 {
                    for ii in i0..=i1 {
                        let t = grid.index(ii, jj);
                        if hull_rect_distance(&hull, &grid.box_rect(t)) <= padding {
                            if domain.contains(t) {
                                targets.push(t);
                            } else {
                                exit = true;
                            }
                        }
                    }
                }
            }
            (targets, exit)
        })
        .collect();

    let mut slot = vec![u32::MAX; grid.len()];
    for (s, &idx) in sources.iter().enumerate() {
        slot[idx] = s as u32;
    }
    let (edges, exits) = per_box.into_iter().unzip();
    Ok(BoxMap {
        domain: domain.clone(),
        tau,
        padding,
        slot,
        sources,
        edges,
        exits,
    })
}

/// Boxes on a bi-infinite path of the map restricted to its domain: those
/// that can reach a recurrent strongly connected component and can be
/// reached from one.
pub fn invariant_part(m: &BoxMap) -> BoxSet {
    let n = m.sources.len();
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(n, m.edge_count());
    for _ in 0..n {
        graph.add_node(());
    }
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, targets) in m.edges.iter().enumerate() {
        for &t in targets {
            let ts = m.slot[t] as usize;
            graph.add_edge(NodeIndex::new(s), NodeIndex::new(ts), ());
            reverse[ts].push(s);
        }
    }
    let mut recurrent = vec![false; n];
    for comp in tarjan_scc(&graph) {
        let nontrivial = comp.len() > 1 || {
            let s = comp[0].index();
            m.edges[s].iter().any(|&t| m.slot[t] as usize == s)
        };
        if nontrivial {
            for node in comp {
                recurrent[node.index()] = true;
            }
        }
    }
    let forward: Vec<Vec<usize>> = m
        .edges
        .iter()
        .map(|ts| ts.iter().map(|&t| m.slot[t] as usize).collect())
        .collect();
    let reached = reach(&forward, &recurrent);
    let reaching = reach(&reverse, &recurrent);
    let mut out = BoxSet::empty(*m.domain.grid());
    for s in 0..n {
        if reached[s] && reaching[s] {
            out.insert(m.sources[s]);
        }
    }
    out
}

fn reach(adj: &[Vec<usize>], start: &[bool]) -> Vec<bool> {
    let mut seen = start.to_vec();
    let mut queue: VecDeque<usize> = (0..adj.len()).filter(|&s| start[s]).collect();
    while let Some(s) = queue.pop_front() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

/// True iff no box of `inv` lies in the outermost layer of the map's domain.
pub fn check_isolating(m: &BoxMap, inv: &BoxSet) -> bool {
    inv.intersection(&m.domain.boundary_layer()).is_empty()
}

// ---------------------------------------------------------------------------
// boundary structure of polygons

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcLabel {
    Entrance,
    Exit,
}

impl ArcLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ArcLabel::Entrance => "Entrance",
            ArcLabel::Exit => "Exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangencyKind {
    /// The orbit touches the boundary from inside.
    Internal,
    /// The orbit touches the boundary from outside.
    External,
    Unresolved,
}

impl TangencyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TangencyKind::Internal => "Internal",
            TangencyKind::External => "External",
            TangencyKind::Unresolved => "Unresolved",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangency {
    pub point: Point,
    pub edge: usize,
    /// `n · (J v)` at the point; positive bends outward.
    pub contact: f64,
    pub kind: TangencyKind,
}

/// A maximal run of boundary with one label, from `start` to `end`
/// counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryArc {
    pub label: ArcLabel,
    pub start: Point,
    pub end: Point,
    pub length: f64,
    /// Polygon edges the arc runs along, in order.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntranceExitDecomposition {
    pub arcs: Vec<BoundaryArc>,
    pub tangencies: Vec<Tangency>,
    pub perimeter: f64,
}

impl EntranceExitDecomposition {
    pub fn unresolved(&self) -> usize {
        self.tangencies
            .iter()
            .filter(|t| t.kind == TangencyKind::Unresolved)
            .count()
    }
}

/// Outward-flux sign threshold on boundary samples.
pub const FLUX_EPS: f64 = 1e-9;
const CONTACT_EPS: f64 = 1e-12;

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| poly[k].cross(poly[(k + 1) % n])).sum::<f64>()
}

/// Splits the boundary of a counterclockwise polygon into entrance and
/// exit arcs by the sign of `v · n` at `samples_per_edge` interior points
/// per edge, with sign changes located by bisection.
pub fn entrance_exit(
    field: &VectorField,
    polygon: &[Point],
    samples_per_edge: usize,
) -> Result<EntranceExitDecomposition> {
    let n = polygon.len();
    if n < 3 || samples_per_edge == 0 {
        return Err(Error::Precondition("polygon needs 3 vertices and samples".into()));
    }
    if signed_area(polygon) <= 0.0 {
        return Err(Error::Precondition("polygon must be counterclockwise".into()));
    }
    // pieces: (label, start, end, length, edge)
    let mut pieces: Vec<(ArcLabel, Point, Point, f64, usize)> = Vec::new();
    let mut tangencies = Vec::new();
    let mut perimeter = 0.0;
    for k in 0..n {
        let (a, b) = (polygon[k], polygon[(k + 1) % n]);
        let d = b - a;
        let len = d.norm();
        if len == 0.0 {
            return Err(Error::DegenerateEdge(k));
        }
        perimeter += len;
        let normal = Point::new(d.y, -d.x).scale(1.0 / len);
        let flux = |t: f64| -> Result<f64> {
            let p = a + d.scale(t);
            let v = field
                .velocity(p)
                .map_err(|_| Error::NonFiniteField { x: p.x, y: p.y })?;
            Ok(v.dot(normal))
        };
        let mut marks: Vec<(f64, ArcLabel)> = Vec::new();
        for s in 0..samples_per_edge {
            let t = (s as f64 + 0.5) / samples_per_edge as f64;
            let c = flux(t)?;
            if c > FLUX_EPS {
                marks.push((t, ArcLabel::Exit));
            } else if c < -FLUX_EPS {
                marks.push((t, ArcLabel::Entrance));
            }
        }
        if marks.is_empty() {
            return Err(Error::DegenerateEdge(k));
        }
        let mut cut_start = 0.0;
        let mut current = marks[0].1;
        for w in marks.windows(2) {
            let ((t0, l0), (t1, l1)) = (w[0], w[1]);
            if l0 == l1 {
                continue;
            }
            let (mut lo, mut hi) = (t0, t1);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let c = flux(mid)?;
                let same = if l0 == ArcLabel::Exit { c > 0.0 } else { c < 0.0 };
                if same {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tc = 0.5 * (lo + hi);
            let p = a + d.scale(tc);
            let (j, _) = jacobian_at(field, p)?;
            let v = field
                .velocity(p)
                .map_err(|_| Error::NonFiniteField { x: p.x, y: p.y })?;
            let jv = Point::new(j[0][0] * v.x + j[0][1] * v.y, j[1][0] * v.x + j[1][1] * v.y);
            let contact = normal.dot(jv);
            let kind = if contact.abs() < CONTACT_EPS {
                TangencyKind::Unresolved
            } else if contact < 0.0 {
                TangencyKind::Internal
            } else {
                TangencyKind::External
            };
            tangencies.push(Tangency {
                point: p,
                edge: k,
                contact,
                kind,
            });
            pieces.push((current, a + d.scale(cut_start), p, (tc - cut_start) * len, k));
            cut_start = tc;
            current = l1;
        }
        pieces.push((current, a + d.scale(cut_start), b, (1.0 - cut_start) * len, k));
    }

    let mut arcs: Vec<BoundaryArc> = Vec::new();
    for (label, start, end, length, edge) in pieces {
        match arcs.last_mut() {
            Some(last) if last.label == label => {
                last.end = end;
                last.length += length;
                if last.edges.last() != Some(&edge) {
                    last.edges.push(edge);
                }
            }
            _ => arcs.push(BoundaryArc {
                label,
                start,
                end,
                length,
                edges: vec![edge],
            }),
        }
    }
    if arcs.len() > 1 && arcs[0].label == arcs[arcs.len() - 1].label {
        let last = arcs.pop().expect("at least two arcs");
        let first = &mut arcs[0];
        first.start = last.start;
        first.length += last.length;
        let mut edges = last.edges;
        for e in first.edges.drain(..) {
            if edges.last() != Some(&e) {
                edges.push(e);
            }
        }
        first.edges = edges;
    }
    Ok(EntranceExitDecomposition {
        arcs,
        tangencies,
        perimeter,
    })
}

// ---------------------------------------------------------------------------
// dissipativity and shape

fn check_candidates(candidates: &[f64]) -> Result<()> {
    if candidates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::Precondition("radii must be positive".into()));
    }
    if candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("radii must be ascending".into()));
    }
    Ok(())
}

fn circle_points(radius: f64, samples: usize) -> impl Iterator<Item = Point> {
    (0..samples).map(move |k| {
        let th = std::f64::consts::TAU * k as f64 / samples as f64;
        Point::new(radius * th.cos(), radius * th.sin())
    })
}

// radii swept between consecutive candidates
const SWEEP_STEPS: usize = 16;

fn inward_on_circle(field: &VectorField, r: f64, samples: usize) -> Result<bool> {
    for p in circle_points(r, samples) {
        let v = field
            .velocity(p)
            .map_err(|_| Error::NonFiniteField { x: p.x, y: p.y })?;
        if v.dot(p) / r >= -FLUX_EPS {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest origin-centred candidate radius `r` such that the field points
/// strictly inward on every sampled circle between `r` and the largest
/// candidate (geometrically spaced radii between candidates). Orbits that
/// start in that shell therefore enter the disk of radius `r`.
pub fn trapping_disk(field: &VectorField, candidates: &[f64], samples: usize) -> Result<Option<f64>> {
    check_candidates(candidates)?;
    if samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let Some(&last) = candidates.last() else {
        return Ok(None);
    };
    if !inward_on_circle(field, last, samples)? {
        return Ok(None);
    }
    let mut best = last;
    for w in candidates.windows(2).rev() {
        let (lo, hi) = (w[0], w[1]);
        let ratio = (hi / lo).powf(1.0 / SWEEP_STEPS as f64);
        let mut r = hi;
        for _ in 0..SWEEP_STEPS {
            r /= ratio;
            if !inward_on_circle(field, r.max(lo), samples)? {
                return Ok(Some(best));
            }
        }
        best = lo;
    }
    Ok(Some(best))
}

/// Smallest origin-centred candidate radius `r` such that every candidate
/// circle from `r` up has its time-`horizon` image strictly inside itself at
/// every sample. Such disks map into their own interior, so the flow is
/// dissipative even where the field is not inward on the circles.
pub fn absorbing_disk(
    field: &VectorField,
    candidates: &[f64],
    samples: usize,
    horizon: f64,
    params: &IntegrationParams,
) -> Result<Option<f64>> {
    check_candidates(candidates)?;
    if horizon.is_nan() || horizon <= 0.0 || samples == 0 {
        return Err(Error::Precondition("need a positive horizon and samples".into()));
    }
    let mut best = None;
    for &r in candidates.iter().rev() {
        let pts: Vec<Point> = circle_points(r, samples).collect();
        let inside = pts
            .par_iter()
            .map(|&p| {
                let (q, term) = flow_endpoint(field, p, horizon, params)?;
                Ok(!matches!(term, Termination::Escaped(_)) && q.norm() < r)
            })
            .collect::<Result<Vec<bool>>>()?;
        if !inside.into_iter().all(|ok| ok) {
            break;
        }
        best = Some(r);
    }
    Ok(best)
}

/// Whether the boxes outside `k` (on the grid grown by `margin` rings) form
/// one 4-connected region: no holes at grid resolution.
pub fn complement_connected(k: &BoxSet, margin: usize) -> bool {
    let margin = margin.max(1);
    let (nx, ny) = k.grid().resolution();
    let (w, h) = (nx + 2 * margin, ny + 2 * margin);
    let member = |a: usize, b: usize| {
        a >= margin
            && b >= margin
            && a < nx + margin
            && b < ny + margin
            && k.contains(k.grid().index(a - margin, b - margin))
    };
    let free = w * h - k.len();
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    seen[0] = true;
    let mut reached = 0;
    while let Some((a, b)) = queue.pop_front() {
        reached += 1;
        let steps = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
        for (c, d) in steps {
            if c < w && d < h && !seen[d * w + c] && !member(c, d) {
                seen[d * w + c] = true;
                queue.push_back((c, d));
            }
        }
    }
    reached == free
}

//! Limit-set estimates from orbit tails, limit cycles from section returns,
//! and the search for an orbit running from infinity into a set `K`.

use rayon::prelude::*;

use crate::equilibria::find_equilibria;
use crate::field::VectorField;
use crate::integrate::{crossings, escape_time, flow, flow_endpoint, Direction, Termination};
use crate::topology::{BoxGrid, BoxSet};
use crate::{IntegrationParams, Point, Rect, Result, Trajectory};

/// Knobs of the limit-set estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    /// Fraction of the integrated window treated as transient.
    pub transient_fraction: f64,
    /// Side of the boxes covering an orbit tail.
    pub tail_box: f64,
    pub section_length: f64,
    /// Offset along the section used to sample cycle stability.
    pub displacement: f64,
    /// Two consecutive section returns closer than this close a cycle.
    pub return_tol: f64,
    pub max_returns: usize,
}

impl Default for LimitParams {
    fn default() -> Self {
        Self {
            transient_fraction: 0.8,
            tail_box: 0.02,
            section_length: 0.2,
            displacement: 1e-3,
            return_tol: 1e-8,
            max_returns: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStability {
    AttractingFromSampled,
    RepellingFromSampled,
    Mixed,
}

impl CycleStability {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleStability::AttractingFromSampled => "AttractingFromSampled",
            CycleStability::RepellingFromSampled => "RepellingFromSampled",
            CycleStability::Mixed => "Mixed",
        }
    }

    fn reversed(self) -> Self {
        match self {
            CycleStability::AttractingFromSampled => CycleStability::RepellingFromSampled,
            CycleStability::RepellingFromSampled => CycleStability::AttractingFromSampled,
            CycleStability::Mixed => CycleStability::Mixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    /// One period of the orbit; the last point repeats the first.
    pub polyline: Vec<Point>,
    pub period: f64,
    /// Smallest and largest `|p|` along the polyline.
    pub radius_stats: (f64, f64),
    pub stability: CycleStability,
}

impl LimitCycle {
    pub fn max_abs_x(&self) -> f64 {
        self.polyline.iter().fold(0.0, |m, p| m.max(p.x.abs()))
    }

    /// Largest distance from a point of either polyline to the other.
    pub fn hausdorff(&self, other: &LimitCycle) -> f64 {
        let one_way = |a: &[Point], b: &[Point]| {
            a.iter()
                .map(|p| {
                    b.windows(2)
                        .map(|w| segment_distance(*p, w[0], w[1]))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        one_way(&self.polyline, &other.polyline).max(one_way(&other.polyline, &self.polyline))
    }

    pub fn bounding_rect(&self) -> Rect {
        bounds(&self.polyline)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d.scale(t))
}

fn bounds(points: &[Point]) -> Rect {
    let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        r.x0 = r.x0.min(p.x);
        r.y0 = r.y0.min(p.y);
        r.x1 = r.x1.max(p.x);
        r.y1 = r.y1.max(p.y);
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitKind {
    EquilibriumPoint(Point),
    Cycle(LimitCycle),
    Escape,
    Unresolved,
}

impl LimitKind {
    pub fn name(&self) -> &'static str {
        match self {
            LimitKind::EquilibriumPoint(_) => "EquilibriumPoint",
            LimitKind::Cycle(_) => "Cycle",
            LimitKind::Escape => "Escape",
            LimitKind::Unresolved => "Unresolved",
        }
    }
}

/// The last part of an integrated orbit, standing in for its limit set.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTail {
    pub trajectory: Trajectory,
    /// First sample index of the tail.
    pub from: usize,
}

impl OrbitTail {
    pub fn points(&self) -> &[Point] {
        &self.trajectory.points[self.from..]
    }

    pub fn escaped(&self) -> bool {
        matches!(self.trajectory.termination, Termination::Escaped(_))
    }

    /// Signed times bounding the tail.
    pub fn window(&self) -> (f64, f64) {
        (self.trajectory.times[self.from], self.trajectory.end_time())
    }

    /// Whether every tail point lies within Chebyshev distance `slack` of
    /// `k`. Escaping tails never land.
    pub fn lands_in(&self, k: &BoxSet, slack: f64) -> bool {
        !self.escaped()
            && !matches!(self.trajectory.termination, Termination::NonFiniteField)
            && self.points().iter().all(|p| k.within(*p, slack))
    }

    /// Whether every tail box of side `h` lies in the `h`-dilation of `k`.
    pub fn boxes_land_in(&self, k: &BoxSet, h: f64) -> bool {
        match tail_cover(self.points(), h) {
            Some(boxes) if !self.escaped() => boxes.rects().all(|r| r.corners().iter().all(|c| k.within(*c, h))),
            _ => false,
        }
    }
}

/// Integrates for `t_max` in `direction` and keeps the final
/// `1 − transient_fraction` of the window actually covered.
pub fn orbit_tail(
    field: &VectorField,
    p0: Point,
    direction: Direction,
    params: &IntegrationParams,
    lp: &LimitParams,
) -> Result<OrbitTail> {
    let span = direction.sign::<f64>() * params.t_max;
    let trajectory = flow(field, p0, span, params)?;
    let cut = lp.transient_fraction * trajectory.end_time().abs();
    let from = trajectory
        .times
        .partition_point(|t| t.abs() < cut)
        .min(trajectory.len() - 1);
    Ok(OrbitTail { trajectory, from })
}

/// Boxes of side `h`, aligned to multiples of `h`, covering the points.
pub fn tail_cover(points: &[Point], h: f64) -> Option<BoxSet> {
    if points.is_empty() || h.is_nan() || h <= 0.0 {
        return None;
    }
    let b = bounds(points);
    if !(b.x0.is_finite() && b.y0.is_finite() && b.x1.is_finite() && b.y1.is_finite()) {
        return None;
    }
    let x0 = (b.x0 / h).floor() * h - h;
    let y0 = (b.y0 / h).floor() * h - h;
    let nx = (((b.x1 - x0) / h).floor() as usize + 2).max(4);
    let ny = (((b.y1 - y0) / h).floor() as usize + 2).max(4);
    let grid = BoxGrid::new(Rect::new(x0, y0, x0 + nx as f64 * h, y0 + ny as f64 * h), nx, ny).ok()?;
    Some(BoxSet::cover_points(grid, points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetEstimate {
    /// Cover of the tail; `None` only for escapes.
    pub boxes: Option<BoxSet>,
    pub kind: LimitKind,
    pub direction: Direction,
    pub tail_window: (f64, f64),
}

/// ω-limit (forward) or ω*-limit (backward) estimate from an orbit tail.
pub fn omega_limit(
    field: &VectorField,
    p0: Point,
    direction: Direction,
    params: &IntegrationParams,
    lp: &LimitParams,
) -> Result<LimitSetEstimate> {
    let tail = orbit_tail(field, p0, direction, params, lp)?;
    let tail_window = tail.window();
    if tail.escaped() {
        return Ok(LimitSetEstimate {
            boxes: None,
            kind: LimitKind::Escape,
            direction,
            tail_window,
        });
    }
    let pts = tail.points();
    let boxes = tail_cover(pts, lp.tail_box);
    let b = bounds(pts);
    let diameter = (b.x1 - b.x0).hypot(b.y1 - b.y0);
    let mean = pts
        .iter()
        .fold(Point::zero(), |s, p| s + *p)
        .scale(1.0 / pts.len() as f64);
    let resting = field.velocity(mean).map(|v| v.norm() < 1e-8).unwrap_or(false);
    let kind = if diameter < 2.0 * lp.tail_box && resting {
        LimitKind::EquilibriumPoint(match tail.trajectory.termination {
            Termination::ConvergedToPoint(p) => p,
            _ => mean,
        })
    } else {
        let oriented = match direction {
            Direction::Forward => None,
            Direction::Backward => Some(field.reversed()),
        };
        let f = oriented.as_ref().unwrap_or(field);
        match detect_limit_cycle(f, pts[0], params, lp) {
            Ok(Some(mut c)) => {
                if direction == Direction::Backward {
                    c.stability = c.stability.reversed();
                }
                LimitKind::Cycle(c)
            }
            _ => LimitKind::Unresolved,
        }
    };
    Ok(LimitSetEstimate {
        boxes,
        kind,
        direction,
        tail_window,
    })
}

/// A section of length `len` through `p`, perpendicular to `v`, and the
/// side code of crossings in the direction of `v`.
fn section_at(p: Point, v: Point, len: f64) -> ((Point, Point), i8) {
    let n = v.normalized().perp();
    let (a, b) = (p - n.scale(0.5 * len), p + n.scale(0.5 * len));
    let before = (b - a).cross(-v);
    ((a, b), if before < 0.0 { 1 } else { -1 })
}

/// Flows past a transient of `t_max / 2`, erects a section across the
/// orbit and follows the return map until two consecutive returns agree.
pub fn detect_limit_cycle(
    field: &VectorField,
    seed: Point,
    params: &IntegrationParams,
    lp: &LimitParams,
) -> Result<Option<LimitCycle>> {
    let (p, term) = flow_endpoint(field, seed, 0.5 * params.t_max, params)?;
    if matches!(term, Termination::Escaped(_)) {
        return Ok(None);
    }
    let v = field
        .velocity(p)
        .map_err(|_| crate::Error::NonFiniteField { x: p.x, y: p.y })?;
    if v.norm() < 1e-10 {
        return Ok(None);
    }
    let (segment, side) = section_at(p, v, lp.section_length);
    let returns = crossings(field, p, segment, lp.max_returns, Some(side), params)?;
    let mut prev = (0.0, p);
    let mut closed = None;
    for c in &returns {
        if c.point.dist(prev.1) < lp.return_tol {
            closed = Some((prev.1, c.t - prev.0));
            break;
        }
        prev = (c.t, c.point);
    }
    let Some((q, period)) = closed else {
        return Ok(None);
    };
    let orbit = flow(field, q, period, params)?;
    if orbit.termination != Termination::TimeBudget {
        return Ok(None);
    }
    let mut polyline = orbit.points;
    if let Some(last) = polyline.last_mut() {
        if last.dist(q) < 1e-6 {
            *last = q;
        } else {
            return Ok(None);
        }
    }
    let (rmin, rmax) = polyline.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.norm()), hi.max(p.norm()))
    });

    let vq = field
        .velocity(q)
        .map_err(|_| crate::Error::NonFiniteField { x: q.x, y: q.y })?;
    let (seg, side) = section_at(q, vq, lp.section_length);
    let n = vq.normalized().perp();
    let mut contracting = [false; 2];
    for (k, s) in [-1.0, 1.0].into_iter().enumerate() {
        let start = q + n.scale(s * lp.displacement);
        let back = crossings(field, start, seg, 1, Some(side), params)?;
        contracting[k] = match back.first() {
            Some(c) => (c.point - q).dot(n).abs() < lp.displacement,
            None => false,
        };
    }
    let stability = match contracting {
        [true, true] => CycleStability::AttractingFromSampled,
        [false, false] => CycleStability::RepellingFromSampled,
        _ => CycleStability::Mixed,
    };
    Ok(Some(LimitCycle {
        polyline,
        period,
        radius_stats: (rmin, rmax),
        stability,
    }))
}

/// An orbit that escapes backward and whose forward tail lands in `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectingOrbit {
    pub seed: Point,
    /// Backward time to reach the escape radius.
    pub escape_time: f64,
    pub forward: Trajectory,
}

/// Checks one seed against both certifying predicates.
pub fn certify_connecting(
    field: &VectorField,
    k: &BoxSet,
    seed: Point,
    params: &IntegrationParams,
    lp: &LimitParams,
) -> Result<Option<ConnectingOrbit>> {
    let Some(t_esc) = escape_time(field, seed, Direction::Backward, params)? else {
        return Ok(None);
    };
    let tail = orbit_tail(field, seed, Direction::Forward, params, lp)?;
    if !tail.boxes_land_in(k, lp.tail_box) {
        return Ok(None);
    }
    Ok(Some(ConnectingOrbit {
        seed,
        escape_time: t_esc,
        forward: tail.trajectory,
    }))
}

/// Seeds around `K`: 16 angles on circles of 2, 4 and 8 times the
/// half-diagonal of its bounding box, then the same radii on the coordinate
/// axes, then eigendirections of equilibria inside the bounding box.
pub fn connecting_seeds(field: &VectorField, k: &BoxSet) -> Result<Vec<Point>> {
    let Some(bb) = k.bounding_rect() else {
        return Ok(Vec::new());
    };
    let c = bb.center();
    let rho = 0.5 * bb.diagonal();
    let radii = [2.0 * rho, 4.0 * rho, 8.0 * rho];
    let mut seeds = Vec::new();
    for &r in &radii {
        for a in 0..16 {
            let th = std::f64::consts::TAU * a as f64 / 16.0;
            seeds.push(Point::new(c.x + r * th.cos(), c.y + r * th.sin()));
        }
    }
    for &r in &radii {
        seeds.extend([
            Point::new(0.0, r),
            Point::new(0.0, -r),
            Point::new(r, 0.0),
            Point::new(-r, 0.0),
        ]);
    }
    let scan = find_equilibria(field, bb, 16, 1e-10)?;
    for eq in scan.equilibria {
        for (_, e) in eq.real_eigenvectors() {
            for &r in &radii {
                seeds.push(eq.location + e.scale(r));
                seeds.push(eq.location - e.scale(r));
            }
        }
    }
    Ok(seeds)
}

/// First seed, in the fixed order of [`connecting_seeds`], certifying an
/// orbit connecting infinity and `K`.
pub fn find_connecting_orbit(
    field: &VectorField,
    k: &BoxSet,
    params: &IntegrationParams,
    lp: &LimitParams,
) -> Result<Option<ConnectingOrbit>> {
    if k.is_empty() {
        return Err(crate::Error::Precondition("K must be nonempty".into()));
    }
    let seeds = connecting_seeds(field, k)?;
    let found: Vec<Option<ConnectingOrbit>> = seeds
        .par_iter()
        .map(|&s| certify_connecting(field, k, s, params, lp))
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().next())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin;
    use std::f64::consts::TAU;

    fn params() -> IntegrationParams {
        IntegrationParams::default()
    }

    fn origin_k(half: f64) -> BoxSet {
        let g = BoxGrid::square(Rect::new(-half, -half, half, half), 4).unwrap();
        BoxSet::cover_points(g, &[Point::new(-1e-9, -1e-9), Point::new(1e-9, 1e-9)])
    }

    #[test]
    fn node_limits_at_origin() {
        let f = builtin("node").unwrap();
        let est = omega_limit(
            &f,
            Point::new(3.0, 4.0),
            Direction::Forward,
            &params(),
            &LimitParams::default(),
        )
        .unwrap();
        match est.kind {
            LimitKind::EquilibriumPoint(p) => assert!(p.norm() < 1e-9),
            k => panic!("{k:?}"),
        }
        assert!(!est.boxes.unwrap().is_empty());
    }

    #[test]
    fn radial_limits() {
        let f = builtin("radial").unwrap();
        let lp = LimitParams::default();
        let fwd = omega_limit(&f, Point::new(0.1, 0.0), Direction::Forward, &params(), &lp).unwrap();
        match &fwd.kind {
            LimitKind::Cycle(c) => {
                assert!((c.radius_stats.0 - 1.0).abs() < 0.01);
                assert!((c.radius_stats.1 - 1.0).abs() < 0.01);
                assert_eq!(c.stability, CycleStability::AttractingFromSampled);
                let boxes = fwd.boxes.as_ref().unwrap();
                assert!(c.polyline.iter().all(|p| boxes.within(*p, lp.tail_box)));
            }
            k => panic!("{k:?}"),
        }
        let bwd = omega_limit(&f, Point::new(0.1, 0.0), Direction::Backward, &params(), &lp).unwrap();
        match bwd.kind {
            LimitKind::EquilibriumPoint(p) => assert!(p.norm() < 1e-6),
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn saddle_escapes() {
        let f = builtin("saddle").unwrap();
        let est = omega_limit(
            &f,
            Point::new(1.0, 1.0),
            Direction::Forward,
            &params(),
            &LimitParams::default(),
        )
        .unwrap();
        assert_eq!(est.kind, LimitKind::Escape);
        assert!(est.boxes.is_none());
    }

    #[test]
    fn radial_cycle() {
        let f = builtin("radial").unwrap();
        let c = detect_limit_cycle(&f, Point::new(0.1, 0.0), &params(), &LimitParams::default())
            .unwrap()
            .unwrap();
        assert!((c.period - TAU).abs() < 1e-3);
        assert!((c.radius_stats.1 - 1.0).abs() < 1e-3);
        assert!(c.polyline[0].dist(*c.polyline.last().unwrap()) < 1e-6);
        let (back, _) = flow_endpoint(&f, c.polyline[0], c.period, &params()).unwrap();
        assert!(back.dist(c.polyline[0]) < 1e-6);
    }

    #[test]
    fn node_has_no_cycle() {
        let f = builtin("node").unwrap();
        let c = detect_limit_cycle(&f, Point::new(1.0, 1.0), &params(), &LimitParams::default()).unwrap();
        assert!(c.is_none());
    }

    #[test]
    fn vdp_cycle_matches_reference() {
        // reference: rel_tol 1e-12 integration, period 6.66328686,
        // max |x| 2.00861986
        let f = builtin("vdp").unwrap();
        let c = detect_limit_cycle(&f, Point::new(0.5, 0.0), &params(), &LimitParams::default())
            .unwrap()
            .unwrap();
        assert!((c.max_abs_x() - 2.00861986).abs() < 0.01, "{}", c.max_abs_x());
        assert!((c.period - 6.66328686).abs() < 0.01, "{}", c.period);
        assert_eq!(c.stability, CycleStability::AttractingFromSampled);
    }

    #[test]
    fn annulus_cycles_sit_on_polar_roots() {
        let f = builtin("annulus").unwrap();
        let lp = LimitParams::default();
        let inner = detect_limit_cycle(&f, Point::new(0.3, 0.0), &params(), &lp)
            .unwrap()
            .unwrap();
        let outer = detect_limit_cycle(&f, Point::new(3.0, 0.0), &params(), &lp)
            .unwrap()
            .unwrap();
        assert!((inner.radius_stats.1 - 1.0).abs() < 5e-3);
        assert!((outer.radius_stats.1 - 2.0).abs() < 5e-3);
        let middle = detect_limit_cycle(&f.reversed(), Point::new(1.2, 0.0), &params(), &lp)
            .unwrap()
            .unwrap();
        assert!((middle.radius_stats.1 - 1.5).abs() < 5e-3);
        assert!(inner.hausdorff(&outer) > 0.9);
        assert!(inner.hausdorff(&inner) < 1e-12);
    }

    #[test]
    fn connecting_orbit_examples() {
        let lp = LimitParams::default();
        let k = origin_k(0.05);
        let node = builtin("node").unwrap();
        let found = find_connecting_orbit(&node, &k, &params(), &lp).unwrap().unwrap();
        let again = certify_connecting(&node, &k, found.seed, &params(), &lp).unwrap();
        assert_eq!(again.as_ref().map(|c| c.seed), Some(found.seed));
        let radial = builtin("radial").unwrap();
        assert!(find_connecting_orbit(&radial, &k, &params(), &lp).unwrap().is_none());
        let saddle = builtin("saddle").unwrap();
        let found = find_connecting_orbit(&saddle, &k, &params(), &lp).unwrap().unwrap();
        assert_eq!(found.seed.x, 0.0);
        assert!(found.escape_time > 0.0);
    }
}

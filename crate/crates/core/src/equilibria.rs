//! Fixed points in a rectangle: grid seeding, Newton refinement and
//! linear classification.

use std::cmp::Ordering;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::field::VectorField;
use crate::{Error, Mat2, Point, Rect, Result};

/// Eigenvalue real parts closer to zero than this count as zero.
pub const EIGEN_TOL: f64 = 1e-8;
/// Roots closer than this are the same equilibrium.
pub const DEDUP_RADIUS: f64 = 1e-6;

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    Sink,
    Source,
    Saddle,
    Center,
    Degenerate,
}

impl EquilibriumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumKind::Sink => "Sink",
            EquilibriumKind::Source => "Source",
            EquilibriumKind::Saddle => "Saddle",
            EquilibriumKind::Center => "Center",
            EquilibriumKind::Degenerate => "Degenerate",
        }
    }
}

/// How the Jacobian of an equilibrium was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSource {
    Symbolic,
    /// The symbolic partials are singular at the point (for instance
    /// `sqrt(x² + y²)` terms at the origin); central differences were used.
    CentralDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub location: Point,
    pub jacobian: Mat2,
    pub jacobian_source: JacobianSource,
    pub eigenvalues: [Complex64; 2],
    pub kind: EquilibriumKind,
}

impl Equilibrium {
    /// Builds the record for a known zero of the field.
    pub fn at(field: &VectorField, location: Point) -> Result<Self> {
        let (jacobian, jacobian_source) = jacobian_at(field, location)?;
        let eigenvalues = eigenvalues(jacobian);
        Ok(Self {
            location,
            jacobian,
            jacobian_source,
            eigenvalues,
            kind: kind_from_eigenvalues(eigenvalues),
        })
    }

    /// Real eigenvectors (unit length), one per real eigenvalue.
    pub fn real_eigenvectors(&self) -> Vec<(f64, Point)> {
        self.eigenvalues
            .iter()
            .filter(|l| l.im == 0.0)
            .map(|l| (l.re, eigenvector(self.jacobian, l.re)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedFailure {
    SingularJacobian,
    NoConvergence,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedDiagnostic {
    pub seed: Point,
    pub failure: SeedFailure,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EquilibriumScan {
    /// Sorted lexicographically by location.
    pub equilibria: Vec<Equilibrium>,
    pub skipped: Vec<SeedDiagnostic>,
}

/// Symbolic Jacobian, falling back to central differences where the
/// symbolic partials do not evaluate.
pub fn jacobian_at(field: &VectorField, p: Point) -> Result<(Mat2, JacobianSource)> {
    match field.jacobian(p) {
        Ok(j) => Ok((j, JacobianSource::Symbolic)),
        Err(_) => field
            .jacobian_fd(p, 1e-7)
            .map(|j| (j, JacobianSource::CentralDifference))
            .map_err(|_| Error::NonFiniteField { x: p.x, y: p.y }),
    }
}

pub fn eigenvalues(m: Mat2) -> [Complex64; 2] {
    let [[a, b], [c, d]] = m;
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [Complex64::new(half_tr + s, 0.0), Complex64::new(half_tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(half_tr, s), Complex64::new(half_tr, -s)]
    }
}

/// Unit eigenvector of `m` for the real eigenvalue `lambda`.
pub fn eigenvector(m: Mat2, lambda: f64) -> Point {
    let [[a, b], [c, d]] = m;
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs()).max(1.0);
    let tiny = 1e-12 * scale;
    let v = if b.abs() > tiny || (a - lambda).abs() > tiny {
        // (a - λ) u + b w = 0
        if b.abs() > tiny {
            Point::new(b, lambda - a)
        } else {
            Point::new(0.0, 1.0)
        }
    } else if c.abs() > tiny {
        Point::new(lambda - d, c)
    } else {
        Point::new(1.0, 0.0)
    };
    v.normalized()
}

/// Linear type from the eigenvalue pair.
pub fn kind_from_eigenvalues(ev: [Complex64; 2]) -> EquilibriumKind {
    let (l0, l1) = (ev[0], ev[1]);
    let real = l0.im == 0.0 && l1.im == 0.0;
    if l0.re < -EIGEN_TOL && l1.re < -EIGEN_TOL {
        EquilibriumKind::Sink
    } else if l0.re > EIGEN_TOL && l1.re > EIGEN_TOL {
        EquilibriumKind::Source
    } else if real && l0.re.abs() > EIGEN_TOL && l1.re.abs() > EIGEN_TOL && (l0.re > 0.0) != (l1.re > 0.0) {
        EquilibriumKind::Saddle
    } else if l0.re.abs() <= EIGEN_TOL && l1.re.abs() <= EIGEN_TOL && l0.im.abs() > EIGEN_TOL {
        EquilibriumKind::Center
    } else {
        EquilibriumKind::Degenerate
    }
}

pub fn classify_linear(eq: &Equilibrium) -> EquilibriumKind {
    kind_from_eigenvalues(eigenvalues(eq.jacobian))
}

fn newton(field: &VectorField, seed: Point) -> std::result::Result<Point, SeedFailure> {
    let mut p = seed;
    for _ in 0..NEWTON_MAX_ITER {
        let f = field.velocity(p).map_err(|_| SeedFailure::NonFinite)?;
        let (j, _) = jacobian_at(field, p).map_err(|_| SeedFailure::NonFinite)?;
        let [[a, b], [c, d]] = j;
        let det = a * d - b * c;
        let scale = (a.abs() + b.abs()) * (c.abs() + d.abs());
        if det == 0.0 || det.abs() <= 1e-14 * scale {
            return Err(SeedFailure::SingularJacobian);
        }
        let dx = (d * f.x - b * f.y) / det;
        let dy = (a * f.y - c * f.x) / det;
        let step = Point::new(dx, dy);
        if !step.is_finite() {
            return Err(SeedFailure::NonFinite);
        }
        p -= step;
        if step.norm() < NEWTON_STEP_TOL {
            return Ok(p);
        }
    }
    Err(SeedFailure::NoConvergence)
}

fn lexicographic(a: &Point, b: &Point) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

/// Grid-seeded Newton search for zeros of the field inside `rect`.
///
/// Seeds are the cell centres of a `grid_n × grid_n` grid where the speed is a
/// local minimum over the neighbouring centres, or where both components
/// change sign across the cell corners. `tol` bounds the residual speed of
/// an accepted root.
pub fn find_equilibria(field: &VectorField, rect: Rect, grid_n: usize, tol: f64) -> Result<EquilibriumScan> {
    if grid_n < 8 {
        return Err(Error::Precondition("grid_n must be at least 8".into()));
    }
    if !rect.is_valid() {
        return Err(Error::Precondition("degenerate rectangle".into()));
    }
    let n = grid_n;
    let (w, h) = (rect.width() / n as f64, rect.height() / n as f64);
    let corner = |i: usize, j: usize| Point::new(rect.x0 + i as f64 * w, rect.y0 + j as f64 * h);
    let center = |i: usize, j: usize| Point::new(rect.x0 + (i as f64 + 0.5) * w, rect.y0 + (j as f64 + 0.5) * h);

    let corners: Vec<Option<Point>> = (0..(n + 1) * (n + 1))
        .map(|k| field.velocity(corner(k % (n + 1), k / (n + 1))).ok())
        .collect();
    let speeds: Vec<f64> = (0..n * n)
        .map(|k| {
            field
                .velocity(center(k % n, k / n))
                .map(|v| v.norm())
                .unwrap_or(f64::INFINITY)
        })
        .collect();

    let mut seeds = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let s = speeds[j * n + i];
            if !s.is_finite() {
                continue;
            }
            let mut local_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || ii < 0 || jj < 0 || ii >= n as i64 || jj >= n as i64 {
                        continue;
                    }
                    if speeds[jj as usize * n + ii as usize] < s {
                        local_min = false;
                    }
                }
            }
            let cell: Vec<Point> = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
                .iter()
                .filter_map(|&(a, b)| corners[b * (n + 1) + a])
                .collect();
            let changes = |pick: fn(&Point) -> f64| {
                let lo = cell.iter().map(pick).fold(f64::INFINITY, f64::min);
                let hi = cell.iter().map(pick).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            let sign_change = cell.len() == 4 && changes(|v| v.x) && changes(|v| v.y);
            if local_min || sign_change {
                seeds.push(center(i, j));
            }
        }
    }

    let results: Vec<(Point, std::result::Result<Point, SeedFailure>)> =
        seeds.par_iter().map(|&s| (s, newton(field, s))).collect();

    let slack = 1e-9 * rect.diagonal().max(1.0);
    let inside = |p: &Point| {
        p.x >= rect.x0 - slack && p.x <= rect.x1 + slack && p.y >= rect.y0 - slack && p.y <= rect.y1 + slack
    };
    let mut roots: Vec<Point> = Vec::new();
    let mut skipped = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(p) => {
                let residual = field.velocity(p).map(|v| v.norm()).unwrap_or(f64::INFINITY);
                if residual < tol && inside(&p) {
                    roots.push(p);
                }
            }
            Err(failure) => skipped.push(SeedDiagnostic { seed, failure }),
        }
    }
    roots.sort_by(lexicographic);
    let mut distinct: Vec<Point> = Vec::new();
    for p in roots {
        if distinct.iter().all(|q| q.dist(p) >= DEDUP_RADIUS) {
            distinct.push(p);
        }
    }
    let equilibria = distinct
        .into_iter()
        .map(|p| Equilibrium::at(field, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumScan { equilibria, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin, BUILTIN_NAMES};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn saddle_has_one_equilibrium() {
        let f = builtin("saddle").unwrap();
        let scan = find_equilibria(&f, Rect::new(-2.0, -2.0, 2.0, 2.0), 32, 1e-10).unwrap();
        assert_eq!(scan.equilibria.len(), 1);
        let e = &scan.equilibria[0];
        assert!(e.location.norm() < 1e-12);
        assert_eq!(e.kind, EquilibriumKind::Saddle);
        assert_eq!(e.jacobian, [[1.0, 0.0], [0.0, -1.0]]);
    }

    #[test]
    fn annulus_origin_is_a_source() {
        let f = builtin("annulus").unwrap();
        let scan = find_equilibria(&f, Rect::new(-3.0, -3.0, 3.0, 3.0), 64, 1e-10).unwrap();
        assert_eq!(scan.equilibria.len(), 1, "{:?}", scan.equilibria);
        assert!(scan.equilibria[0].location.norm() < 1e-9);
        assert_eq!(scan.equilibria[0].kind, EquilibriumKind::Source);
    }

    #[test]
    fn node_has_none_away_from_origin() {
        let f = builtin("node").unwrap();
        let scan = find_equilibria(&f, Rect::new(1.0, 1.0, 2.0, 2.0), 16, 1e-10).unwrap();
        assert!(scan.equilibria.is_empty());
    }

    #[test]
    fn every_builtin_has_only_the_origin() {
        for name in BUILTIN_NAMES {
            let f = builtin(name).unwrap();
            let scan = find_equilibria(&f, Rect::new(-3.0, -3.0, 3.0, 3.0), 48, 1e-10).unwrap();
            assert_eq!(scan.equilibria.len(), 1, "{name}");
            let e = &scan.equilibria[0];
            assert!(e.location.norm() < 1e-9, "{name}");
            assert!(f.velocity(e.location).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn doubling_the_grid_keeps_roots() {
        for name in BUILTIN_NAMES {
            let f = builtin(name).unwrap();
            let rect = Rect::new(-2.5, -1.5, 2.0, 3.0);
            let coarse = find_equilibria(&f, rect, 16, 1e-10).unwrap();
            let fine = find_equilibria(&f, rect, 32, 1e-10).unwrap();
            for e in &coarse.equilibria {
                assert!(fine
                    .equilibria
                    .iter()
                    .any(|g| g.location.dist(e.location) < DEDUP_RADIUS));
            }
        }
    }

    #[test]
    fn multiple_roots_are_separated() {
        // zeros at (±1, 0): a saddle and a centre-like point of a Duffing
        // oscillator plus the origin
        let f = VectorField::parse("duffing", "y", "x - x^3 - 0.2*y").unwrap();
        let scan = find_equilibria(&f, Rect::new(-2.0, -2.0, 2.0, 2.0), 32, 1e-10).unwrap();
        let locs: Vec<Point> = scan.equilibria.iter().map(|e| e.location).collect();
        assert_eq!(locs.len(), 3, "{locs:?}");
        assert!(locs[0].dist(Point::new(-1.0, 0.0)) < 1e-9);
        assert!(locs[1].dist(Point::new(0.0, 0.0)) < 1e-9);
        assert!(locs[2].dist(Point::new(1.0, 0.0)) < 1e-9);
        assert_eq!(scan.equilibria[1].kind, EquilibriumKind::Saddle);
        assert_eq!(scan.equilibria[0].kind, EquilibriumKind::Sink);
    }

    #[test]
    fn eigenvalue_rules() {
        assert_eq!(
            kind_from_eigenvalues([c(1.0, 0.0), c(-1.0, 0.0)]),
            EquilibriumKind::Saddle
        );
        assert_eq!(
            kind_from_eigenvalues([c(1.0, 1.0), c(1.0, -1.0)]),
            EquilibriumKind::Source
        );
        assert_eq!(
            kind_from_eigenvalues([c(-1.0, 0.0), c(-1.0, 0.0)]),
            EquilibriumKind::Sink
        );
        assert_eq!(
            kind_from_eigenvalues([c(0.0, 2.0), c(0.0, -2.0)]),
            EquilibriumKind::Center
        );
        assert_eq!(
            kind_from_eigenvalues([c(0.0, 0.0), c(-1.0, 0.0)]),
            EquilibriumKind::Degenerate
        );
        assert_eq!(
            kind_from_eigenvalues([c(1e-9, 0.0), c(-1.0, 0.0)]),
            EquilibriumKind::Degenerate
        );
    }

    #[test]
    fn eigen_decomposition() {
        let m = [[1.0, -1.0], [1.0, 1.0]];
        let ev = eigenvalues(m);
        assert_eq!(ev[0], c(1.0, 1.0));
        assert_eq!(ev[1], c(1.0, -1.0));
        let saddle = [[1.0, 0.0], [0.0, -1.0]];
        assert_eq!(eigenvector(saddle, 1.0), Point::new(1.0, 0.0));
        assert_eq!(eigenvector(saddle, -1.0), Point::new(0.0, 1.0));
        let m = [[2.0, 1.0], [1.0, 2.0]];
        for (l, v) in [(3.0, eigenvector(m, 3.0)), (1.0, eigenvector(m, 1.0))] {
            let mv = Point::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y);
            assert!((mv - v.scale(l)).norm() < 1e-12);
        }
    }

    #[test]
    fn small_grid_is_rejected() {
        let f = builtin("node").unwrap();
        assert!(find_equilibria(&f, Rect::new(-1.0, -1.0, 1.0, 1.0), 4, 1e-10).is_err());
    }
}

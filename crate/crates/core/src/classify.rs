//! Verdicts on an isolated invariant continuum `K`, extracted as the
//! invariant part of a box neighbourhood `N_K`: global attractor, attractor,
//! repeller or saddle-like, each with the evidence that produced it.

use std::fmt;

use rayon::prelude::*;

use crate::equilibria::{find_equilibria, EquilibriumKind};
use crate::field::VectorField;
use crate::integrate::{flow, Direction, Termination};
use crate::limitsets::{
    detect_limit_cycle, find_connecting_orbit, orbit_tail, ConnectingOrbit, LimitCycle, LimitParams,
};
use crate::topology::{
    absorbing_disk, build_box_map, check_isolating, complement_connected, default_tau, invariant_part, trapping_disk,
    BoxGrid, BoxSet,
};
use crate::{Error, IntegrationParams, Point, Rect, Result, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    pub integration: IntegrationParams,
    /// Tolerances for box-map images; they only need to beat the padding.
    pub map_integration: IntegrationParams,
    pub limits: LimitParams,
    /// Fixed map time; `None` picks one from the domain's speeds.
    pub tau: Option<f64>,
    pub tau_scale: f64,
    /// Times the map time is doubled while `K` touches the boundary of `N_K`.
    pub tau_doublings: usize,
    /// Trapping circle radii, as multiples of `K`'s radius about the origin.
    pub trapping_factors: Vec<f64>,
    pub trapping_samples: usize,
    /// Flow time of the absorbing-disk fallback certificate.
    pub absorbing_horizon: f64,
    pub equilibria_grid: usize,
    pub equilibria_tol: f64,
    pub probe_ring: usize,
    pub basin_grid: usize,
    pub stability_time: f64,
    pub orbit_angles: usize,
    /// Grid resolution of the global attractor hull.
    pub hull_resolution: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            integration: IntegrationParams::default(),
            map_integration: IntegrationParams {
                rel_tol: 1e-8,
                abs_tol: 1e-10,
                max_step: 0.25,
                ..IntegrationParams::default()
            },
            limits: LimitParams::default(),
            tau: None,
            tau_scale: 1.0,
            tau_doublings: 3,
            trapping_factors: vec![2.0, 5.0, 10.0, 50.0, 100.0],
            trapping_samples: 256,
            absorbing_horizon: 10.0,
            equilibria_grid: 64,
            equilibria_tol: 1e-10,
            probe_ring: 16,
            basin_grid: 10,
            stability_time: 50.0,
            orbit_angles: 16,
            hull_resolution: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    NotCertifiedDissipative,
    FixedPointOutsideK,
    FixedPointInDMinusK,
    NoConnectingOrbit,
    NoEntireOrbit,
    NoBoundedOrbitFound,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UndeterminedReason {
    NotIsolated,
    EmptyInvariantSet,
    BasinProbeFailed,
    StabilityProbeFailed,
    /// Mixed attractor/repeller probes, which the theory excludes.
    ContradictsTheorem,
    NoWitnesses,
    Numeric(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    GlobalAttractor,
    Attractor,
    Repeller,
    SaddleLike,
    HypothesesFail(FailReason),
    Undetermined(UndeterminedReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::GlobalAttractor => f.write_str("GlobalAttractor"),
            Verdict::Attractor => f.write_str("Attractor"),
            Verdict::Repeller => f.write_str("Repeller"),
            Verdict::SaddleLike => f.write_str("SaddleLike"),
            Verdict::HypothesesFail(r) => write!(f, "HypothesesFail({r:?})"),
            Verdict::Undetermined(UndeterminedReason::Numeric(m)) => {
                write!(f, "Undetermined(Numeric: {m})")
            }
            Verdict::Undetermined(r) => write!(f, "Undetermined({r:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.dist(self.center) <= self.radius
    }

    pub fn bounding_square(&self) -> Rect {
        Rect::square(self.center, self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipativityMethod {
    /// Field strictly inward on the circle.
    InwardCircle,
    /// Time-horizon image of the circle strictly inside it.
    AbsorbingImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessRole {
    OmegaIntoK,
    OmegaStarIntoK,
    EntireInDMinusK,
}

impl WitnessRole {
    pub fn as_str(self) -> &'static str {
        match self {
            WitnessRole::OmegaIntoK => "omega_into_K",
            WitnessRole::OmegaStarIntoK => "omega_star_into_K",
            WitnessRole::EntireInDMinusK => "entire_in_DminusK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub point: Point,
    pub role: WitnessRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub seed: Point,
    pub passed: bool,
    /// Largest `|p|` over the tail or window the probe inspected.
    pub max_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeStats {
    pub samples: Vec<ProbeSample>,
}

impl ProbeStats {
    pub fn total(&self) -> usize {
        self.samples.len()
    }

    pub fn passed(&self) -> usize {
        self.samples.iter().filter(|s| s.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        !self.samples.is_empty() && self.passed() == self.total()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    pub k: Option<BoxSet>,
    pub tau: Option<f64>,
    pub isolated: bool,
    pub trapping_radius: Option<f64>,
    pub dissipativity: Option<DissipativityMethod>,
    pub equilibria: Vec<Point>,
    pub equilibria_outside: Vec<Point>,
    pub connecting_orbit: Option<ConnectingOrbit>,
    pub witness_orbits: Vec<Witness>,
    pub basin_probe: Option<ProbeStats>,
    pub stability_probe: Option<ProbeStats>,
    pub attractor_probe: Option<ProbeStats>,
    pub repeller_probe: Option<ProbeStats>,
    pub disk: Option<Disk>,
    pub bounded_orbit: Option<Point>,
    pub complement_connected: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub evidence: Evidence,
}

impl Classification {
    fn new(verdict: Verdict, evidence: Evidence) -> Self {
        Self { verdict, evidence }
    }
}

/// Full box set over `rect` at `res × res`.
pub fn box_neighborhood(rect: Rect, res: usize) -> Result<BoxSet> {
    Ok(BoxSet::full(BoxGrid::square(rect, res)?))
}

/// Invariant part of `domain` under the box map, doubling the map time
/// while it touches the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantPart {
    pub set: BoxSet,
    pub tau: f64,
    pub isolated: bool,
}

pub fn isolate(field: &VectorField, domain: &BoxSet, ap: &AnalysisParams) -> Result<InvariantPart> {
    if domain.is_empty() {
        return Err(Error::Precondition("N_K must be nonempty".into()));
    }
    let mut tau = match ap.tau {
        Some(t) => t,
        None => default_tau(field, domain, ap.tau_scale)?,
    };
    let mut doublings = if ap.tau.is_some() { 0 } else { ap.tau_doublings };
    loop {
        let map = build_box_map(field, domain, tau, &ap.map_integration)?;
        let set = invariant_part(&map);
        let isolated = !set.is_empty() && check_isolating(&map, &set);
        if isolated || doublings == 0 || tau >= 5.0 {
            return Ok(InvariantPart { set, tau, isolated });
        }
        tau = (2.0 * tau).min(5.0);
        doublings -= 1;
    }
}

/// Chebyshev slack that counts as "in the dilation of K".
fn landing_slack(k: &BoxSet, ap: &AnalysisParams) -> f64 {
    k.grid().box_size().max(ap.limits.tail_box)
}

fn numeric(e: Error, evidence: Evidence) -> Classification {
    Classification::new(
        Verdict::Undetermined(UndeterminedReason::Numeric(e.to_string())),
        evidence,
    )
}

/// Runs the fallible body; numeric failures become an `Undetermined`
/// verdict with the evidence gathered so far.
fn guarded(evidence: &mut Evidence, body: impl FnOnce(&mut Evidence) -> Result<Verdict>) -> Result<Classification> {
    match body(evidence) {
        Ok(v) => Ok(Classification::new(v, evidence.clone())),
        Err(e @ Error::Precondition(_)) => Err(e),
        Err(e) => Ok(numeric(e, evidence.clone())),
    }
}

/// Step shared by every pipeline: extract `K` and require isolation.
fn extract_k(
    field: &VectorField,
    n_k: &BoxSet,
    ap: &AnalysisParams,
    ev: &mut Evidence,
) -> Result<std::result::Result<BoxSet, Verdict>> {
    let inv = isolate(field, n_k, ap)?;
    ev.tau = Some(inv.tau);
    ev.isolated = inv.isolated;
    ev.k = Some(inv.set.clone());
    if inv.set.is_empty() {
        return Ok(Err(Verdict::Undetermined(UndeterminedReason::EmptyInvariantSet)));
    }
    if !inv.isolated {
        return Ok(Err(Verdict::Undetermined(UndeterminedReason::NotIsolated)));
    }
    Ok(Ok(inv.set))
}

/// Dissipativity certificate: smallest candidate circle that is inward,
/// else smallest whose flow image is absorbed.
pub fn certify_dissipative(
    field: &VectorField,
    base_radius: f64,
    ap: &AnalysisParams,
) -> Result<Option<(f64, DissipativityMethod)>> {
    let base = base_radius.max(f64::MIN_POSITIVE);
    let candidates: Vec<f64> = ap.trapping_factors.iter().map(|f| f * base).collect();
    if let Some(r) = trapping_disk(field, &candidates, ap.trapping_samples)? {
        return Ok(Some((r, DissipativityMethod::InwardCircle)));
    }
    let samples = (ap.trapping_samples / 4).max(16);
    Ok(
        absorbing_disk(field, &candidates, samples, ap.absorbing_horizon, &ap.integration)?
            .map(|r| (r, DissipativityMethod::AbsorbingImage)),
    )
}

/// Up to `count` centres of the boxes two rings out from `k`, spread evenly
/// by angle about its bounding-box centre.
pub fn probe_ring(k: &BoxSet, count: usize) -> Vec<Point> {
    let ring = k.dilate(2).difference(&k.dilate(1));
    let c = k.bounding_rect().map(|r| r.center()).unwrap_or_else(Point::zero);
    let mut pts: Vec<Point> = ring.iter().map(|i| ring.grid().center(i)).collect();
    pts.sort_by(|a, b| {
        let ta = (a.y - c.y).atan2(a.x - c.x);
        let tb = (b.y - c.y).atan2(b.x - c.x);
        ta.total_cmp(&tb)
    });
    if pts.len() <= count {
        return pts;
    }
    (0..count).map(|i| pts[i * pts.len() / count]).collect()
}

fn tail_probe(
    field: &VectorField,
    k: &BoxSet,
    seeds: &[Point],
    direction: Direction,
    slack: f64,
    ap: &AnalysisParams,
) -> Result<ProbeStats> {
    let samples = seeds
        .par_iter()
        .map(|&s| {
            let tail = orbit_tail(field, s, direction, &ap.integration, &ap.limits)?;
            Ok(ProbeSample {
                seed: s,
                passed: tail.lands_in(k, slack),
                max_norm: tail.points().iter().fold(0.0, |m, p| m.max(p.norm())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeStats { samples })
}

/// Forward and backward landing probes from the ring around `K`.
fn ring_probes(field: &VectorField, k: &BoxSet, ap: &AnalysisParams, ev: &mut Evidence) -> Result<(bool, bool)> {
    let ring = probe_ring(k, ap.probe_ring);
    let slack = landing_slack(k, ap);
    let att = tail_probe(field, k, &ring, Direction::Forward, slack, ap)?;
    let rep = tail_probe(field, k, &ring, Direction::Backward, slack, ap)?;
    let out = (att.all_passed(), rep.all_passed());
    ev.attractor_probe = Some(att);
    ev.repeller_probe = Some(rep);
    Ok(out)
}

/// Global-attractor test: isolation, dissipativity, no equilibria outside
/// `K`, an orbit from infinity into `K`, then basin and stability probes.
pub fn classify_theorem3(field: &VectorField, n_k: &BoxSet, ap: &AnalysisParams) -> Result<Classification> {
    let mut ev = Evidence::default();
    guarded(&mut ev, |ev| {
        let k = match extract_k(field, n_k, ap, ev)? {
            Ok(k) => k,
            Err(v) => return Ok(v),
        };
        let Some((radius, method)) = certify_dissipative(field, k.radius_about(Point::zero()), ap)? else {
            return Ok(Verdict::HypothesesFail(FailReason::NotCertifiedDissipative));
        };
        ev.trapping_radius = Some(radius);
        ev.dissipativity = Some(method);
        let disk = Disk::new(Point::zero(), radius);
        let scan = find_equilibria(field, disk.bounding_square(), ap.equilibria_grid, ap.equilibria_tol)?;
        let near = k.grid().box_size();
        ev.equilibria = scan.equilibria.iter().map(|e| e.location).collect();
        ev.equilibria_outside = ev.equilibria.iter().copied().filter(|p| !k.within(*p, near)).collect();
        if !ev.equilibria_outside.is_empty() {
            return Ok(Verdict::HypothesesFail(FailReason::FixedPointOutsideK));
        }
        let Some(orbit) = find_connecting_orbit(field, &k, &ap.integration, &ap.limits)? else {
            return Ok(Verdict::HypothesesFail(FailReason::NoConnectingOrbit));
        };
        ev.connecting_orbit = Some(orbit);

        let basin = basin_probe(field, &k, radius, ap.basin_grid, ap)?;
        let basin_ok = basin.all_passed();
        ev.basin_probe = Some(basin);
        let stability = stability_probe(field, &k, ap)?;
        let stable = stability.all_passed();
        ev.stability_probe = Some(stability);
        Ok(if !basin_ok {
            Verdict::Undetermined(UndeterminedReason::BasinProbeFailed)
        } else if !stable {
            Verdict::Undetermined(UndeterminedReason::StabilityProbeFailed)
        } else {
            Verdict::GlobalAttractor
        })
    })
}

/// Forward tails from an `n × n` grid of cell centres over the disk's
/// bounding square must land in the tail-box dilation of `K`.
pub fn basin_probe(field: &VectorField, k: &BoxSet, radius: f64, n: usize, ap: &AnalysisParams) -> Result<ProbeStats> {
    let step = 2.0 * radius / n as f64;
    let seeds: Vec<Point> = (0..n * n)
        .map(|m| {
            let (i, j) = (m % n, m / n);
            Point::new(-radius + (i as f64 + 0.5) * step, -radius + (j as f64 + 0.5) * step)
        })
        .collect();
    let h = ap.limits.tail_box;
    let samples = seeds
        .par_iter()
        .map(|&s| {
            let tail = orbit_tail(field, s, Direction::Forward, &ap.integration, &ap.limits)?;
            Ok(ProbeSample {
                seed: s,
                passed: tail.boxes_land_in(k, h),
                max_norm: tail.points().iter().fold(0.0, |m, p| m.max(p.norm())),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeStats { samples })
}

/// Orbits from the ring two boxes out must stay within five boxes of `K`
/// over `stability_time`.
pub fn stability_probe(field: &VectorField, k: &BoxSet, ap: &AnalysisParams) -> Result<ProbeStats> {
    let seeds = probe_ring(k, 64);
    let reach = 5.0 * k.grid().box_size();
    let samples = seeds
        .par_iter()
        .map(|&s| {
            let tr = flow(field, s, ap.stability_time, &ap.integration)?;
            let passed = !matches!(tr.termination, Termination::Escaped(_) | Termination::NonFiniteField)
                && tr.points.iter().all(|p| k.within(*p, reach));
            Ok(ProbeSample {
                seed: s,
                passed,
                max_norm: tr.max_norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeStats { samples })
}

fn circle_seeds(center: Point, radii: &[f64], angles: usize) -> Vec<Point> {
    radii
        .iter()
        .flat_map(|&r| {
            (0..angles).map(move |a| {
                let th = std::f64::consts::TAU * a as f64 / angles as f64;
                Point::new(center.x + r * th.cos(), center.y + r * th.sin())
            })
        })
        .collect()
}

/// Attractor-or-repeller test in a disk `D` around `K`: no equilibria in
/// `D − K` and some entire orbit inside `D − K`.
pub fn classify_theorem4(field: &VectorField, n_k: &BoxSet, disk: Disk, ap: &AnalysisParams) -> Result<Classification> {
    let inside = n_k
        .rects()
        .flat_map(|r| r.corners())
        .all(|c| c.dist(disk.center) < disk.radius);
    if !inside {
        return Err(Error::Precondition("D must contain N_K in its interior".into()));
    }
    let mut ev = Evidence {
        disk: Some(disk),
        ..Evidence::default()
    };
    guarded(&mut ev, |ev| disk_test_body(field, n_k, disk, ap, ev))
}

fn disk_test_body(
    field: &VectorField,
    n_k: &BoxSet,
    disk: Disk,
    ap: &AnalysisParams,
    ev: &mut Evidence,
) -> Result<Verdict> {
    let k = match extract_k(field, n_k, ap, ev)? {
        Ok(k) => k,
        Err(v) => return Ok(v),
    };
    let near = k.grid().box_size();
    let scan = find_equilibria(field, disk.bounding_square(), ap.equilibria_grid, ap.equilibria_tol)?;
    ev.equilibria = scan.equilibria.iter().map(|e| e.location).collect();
    ev.equilibria_outside = ev
        .equilibria
        .iter()
        .copied()
        .filter(|p| disk.contains(*p) && !k.within(*p, near))
        .collect();
    if !ev.equilibria_outside.is_empty() {
        return Ok(Verdict::HypothesesFail(FailReason::FixedPointInDMinusK));
    }
    let Some(w) = entire_orbit_in(field, &k, disk, ap)? else {
        return Ok(Verdict::HypothesesFail(FailReason::NoEntireOrbit));
    };
    ev.witness_orbits.push(Witness {
        point: w,
        role: WitnessRole::EntireInDMinusK,
    });
    let (attracts, repels) = ring_probes(field, &k, ap, ev)?;
    let verdict = match (attracts, repels) {
        (true, false) => Verdict::Attractor,
        (false, true) => Verdict::Repeller,
        _ => return Ok(Verdict::Undetermined(UndeterminedReason::ContradictsTheorem)),
    };
    ev.complement_connected = Some(complement_connected(&k, 1));
    Ok(verdict)
}

/// A point whose entire orbit stays in `D` minus the dilation of `K`, from
/// seeds on three circles between `K` and `∂D`. A limit cycle inside that
/// region also counts.
fn entire_orbit_in(field: &VectorField, k: &BoxSet, disk: Disk, ap: &AnalysisParams) -> Result<Option<Point>> {
    let near = k.grid().box_size();
    let r_k = k.radius_about(disk.center);
    let radii: Vec<f64> = [0.25, 0.5, 0.75]
        .iter()
        .map(|s| r_k + s * (disk.radius - r_k))
        .collect();
    let seeds = circle_seeds(disk.center, &radii, ap.orbit_angles);
    let ok = |p: &Point| disk.contains(*p) && !k.within(*p, near);
    let reversed = field.reversed();
    let found = seeds
        .par_iter()
        .map(|&s| -> Result<Option<Point>> {
            if !ok(&s) {
                return Ok(None);
            }
            let mut kept_tails = Vec::new();
            for (dir, f) in [(Direction::Forward, field), (Direction::Backward, &reversed)] {
                let tail = orbit_tail(field, s, dir, &ap.integration, &ap.limits)?;
                let full = tail.trajectory.termination == Termination::TimeBudget;
                let all_in = tail.trajectory.points.iter().all(ok);
                let tail_in = full && tail.points().iter().all(ok);
                kept_tails.push((full && all_in, tail_in, f, tail.points()[0]));
            }
            if kept_tails.iter().all(|t| t.0) {
                return Ok(Some(s));
            }
            for (_, tail_in, f, start) in kept_tails {
                if tail_in {
                    if let Some(c) = detect_limit_cycle(f, start, &ap.integration, &ap.limits)? {
                        if c.polyline.iter().all(ok) {
                            return Ok(Some(c.polyline[0]));
                        }
                    }
                }
            }
            Ok(None)
        })
        .collect::<Vec<_>>();
    for r in found {
        if let Some(p) = r? {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

/// Repeller-or-attractor test when `K` holds every equilibrium: find a
/// bounded orbit outside `K`, wrap it and `K` in a disk, then apply
/// [`classify_theorem4`].
pub fn classify_corollary5(field: &VectorField, n_k: &BoxSet, ap: &AnalysisParams) -> Result<Classification> {
    let mut ev = Evidence::default();
    let located = (|ev: &mut Evidence| -> Result<std::result::Result<(Disk, Point), Verdict>> {
        let k = match extract_k(field, n_k, ap, ev)? {
            Ok(k) => k,
            Err(v) => return Ok(Err(v)),
        };
        let c = k.bounding_rect().map(|r| r.center()).unwrap_or_else(Point::zero);
        let Some((seed, extent)) = bounded_orbit(field, &k, c, ap)? else {
            return Ok(Err(Verdict::HypothesesFail(FailReason::NoBoundedOrbitFound)));
        };
        ev.bounded_orbit = Some(seed);
        let radius = (1.2 * extent.max(k.radius_about(c))).max(1.05 * n_k.radius_about(c));
        Ok(Ok((Disk::new(c, radius), seed)))
    })(&mut ev);
    match located {
        Err(e @ Error::Precondition(_)) => Err(e),
        Err(e) => Ok(numeric(e, ev)),
        Ok(Err(v)) => Ok(Classification::new(v, ev)),
        Ok(Ok((disk, seed))) => {
            let mut out = classify_theorem4(field, n_k, disk, ap)?;
            out.evidence.bounded_orbit = Some(seed);
            Ok(out)
        }
    }
}

/// First seed outside `K` whose orbit stays below the escape radius both
/// ways, on disks of 3, 6, 12 and 24 times `K`'s radius. Returns the seed
/// and the orbit's largest distance from `c`.
fn bounded_orbit(field: &VectorField, k: &BoxSet, c: Point, ap: &AnalysisParams) -> Result<Option<(Point, f64)>> {
    let near = k.grid().box_size();
    let r_k = k.radius_about(c);
    for doubling in 0..4 {
        let rho = 3.0 * r_k * f64::from(1u32 << doubling);
        let radii: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|s| r_k + s * (rho - r_k)).collect();
        let seeds = circle_seeds(c, &radii, ap.orbit_angles);
        let results = seeds
            .par_iter()
            .map(|&s| -> Result<Option<(Point, f64)>> {
                if k.within(s, near) {
                    return Ok(None);
                }
                let mut extent: f64 = 0.0;
                for span in [ap.integration.t_max, -ap.integration.t_max] {
                    let tr = flow(field, s, span, &ap.integration)?;
                    if matches!(tr.termination, Termination::Escaped(_) | Termination::NonFiniteField) {
                        return Ok(None);
                    }
                    extent = tr.points.iter().fold(extent, |m, p| m.max(p.dist(c)));
                }
                Ok(Some((s, extent)))
            })
            .collect::<Vec<_>>();
        for r in results {
            if let Some(hit) = r? {
                return Ok(Some(hit));
            }
        }
    }
    Ok(None)
}

/// Attractor, repeller or saddle-like: ring probes first, then forward and
/// backward witnesses from the ring and from saddle eigendirections in `K`.
pub fn trichotomy(field: &VectorField, n_k: &BoxSet, ap: &AnalysisParams) -> Result<Classification> {
    let mut ev = Evidence::default();
    guarded(&mut ev, |ev| {
        let k = match extract_k(field, n_k, ap, ev)? {
            Ok(k) => k,
            Err(v) => return Ok(v),
        };
        let (attracts, repels) = ring_probes(field, &k, ap, ev)?;
        if attracts && !repels {
            return Ok(Verdict::Attractor);
        }
        if repels && !attracts {
            return Ok(Verdict::Repeller);
        }
        let mut seeds = probe_ring(&k, ap.probe_ring);
        let bb = k.bounding_rect().expect("K is nonempty");
        let reach = 2.5 * k.grid().box_size();
        for eq in find_equilibria(field, bb, 16, ap.equilibria_tol)?.equilibria {
            if eq.kind != EquilibriumKind::Saddle {
                continue;
            }
            for (_, e) in eq.real_eigenvectors() {
                seeds.push(eq.location + e.scale(reach));
                seeds.push(eq.location - e.scale(reach));
            }
        }
        let slack = landing_slack(&k, ap);
        let fwd = tail_probe(field, &k, &seeds, Direction::Forward, slack, ap)?;
        let bwd = tail_probe(field, &k, &seeds, Direction::Backward, slack, ap)?;
        let x = fwd.samples.iter().find(|s| s.passed).map(|s| s.seed);
        let y = bwd.samples.iter().find(|s| s.passed).map(|s| s.seed);
        if let Some(x) = x {
            ev.witness_orbits.push(Witness {
                point: x,
                role: WitnessRole::OmegaIntoK,
            });
        }
        if let Some(y) = y {
            ev.witness_orbits.push(Witness {
                point: y,
                role: WitnessRole::OmegaStarIntoK,
            });
        }
        Ok(if x.is_some() && y.is_some() {
            Verdict::SaddleLike
        } else {
            Verdict::Undetermined(UndeterminedReason::NoWitnesses)
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualKind {
    LimitCycle(LimitCycle),
    Annulus { inner: LimitCycle, outer: LimitCycle },
}

impl DualKind {
    pub fn name(&self) -> &'static str {
        match self {
            DualKind::LimitCycle(_) => "LimitCycle",
            DualKind::Annulus { .. } => "Annulus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualAttractorReport {
    pub k: BoxSet,
    pub k_star: BoxSet,
    pub kind: DualKind,
    pub global_attractor_hull: BoxSet,
    pub trapping_radius: f64,
    pub tau: f64,
}

/// The attractor paired with a repeller `K`: the invariant part of the
/// global attractor hull away from `K`, classified as one limit cycle or
/// an annulus between two.
pub fn dual_attractor(field: &VectorField, n_k: &BoxSet, ap: &AnalysisParams) -> Result<DualAttractorReport> {
    let c5 = classify_corollary5(field, n_k, ap)?;
    if c5.verdict != Verdict::Repeller {
        return Err(Error::PreconditionNotRepeller);
    }
    let k = c5.evidence.k.expect("a verdict of Repeller records K");
    let Some((radius, _)) = certify_dissipative(field, k.radius_about(Point::zero()), ap)? else {
        return Err(Error::Precondition("no trapping disk among the candidates".into()));
    };
    let hull_domain = box_neighborhood(Rect::square(Point::zero(), radius), ap.hull_resolution)?;
    let hull = isolate(field, &hull_domain, ap)?;
    let hull_grid = *hull_domain.grid();
    let reach = k.grid().box_size() + hull_grid.box_size();
    let away = BoxSet::from_fn(hull_grid, |r| !k.within(r.center(), reach));
    let domain = hull.set.intersection(&away);
    if domain.is_empty() {
        return Err(Error::UnableToClassifyKStar("hull lies inside K".into()));
    }
    let map = build_box_map(field, &domain, hull.tau, &ap.map_integration)?;
    let inv = invariant_part(&map);

    let ring = probe_ring(&k, ap.probe_ring);
    let mut landing: Vec<Point> = Vec::new();
    for &s in &ring {
        let tail = orbit_tail(field, s, Direction::Forward, &ap.integration, &ap.limits)?;
        if !tail.escaped() {
            landing.extend_from_slice(tail.points());
        }
    }
    let mut k_star = BoxSet::empty(hull_grid);
    for comp in inv.components() {
        if landing.iter().any(|p| comp.contains_point(*p)) {
            k_star = k_star.union(&comp);
        }
    }
    if k_star.is_empty() {
        return Err(Error::UnableToClassifyKStar(
            "no forward limit lands in the hull".into(),
        ));
    }

    let first_cycle = |seeds: &[Point]| -> Result<Option<LimitCycle>> {
        for &s in seeds {
            if let Some(c) = detect_limit_cycle(field, s, &ap.integration, &ap.limits)? {
                return Ok(Some(c));
            }
        }
        Ok(None)
    };
    let outer_seeds = circle_seeds(Point::zero(), &[0.95 * radius], 8);
    let inner = first_cycle(&ring)?;
    let outer = first_cycle(&outer_seeds)?;
    let (inner, outer) = match (inner, outer) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) | (None, Some(a)) => (a.clone(), a),
        (None, None) => return Err(Error::UnableToClassifyKStar("no limit cycle found".into())),
    };
    let h = ap.limits.tail_box;
    let kind = if inner.hausdorff(&outer) < 2.0 * h {
        DualKind::LimitCycle(inner)
    } else {
        let box_reach = hull_grid.box_size();
        let covered = |p: &Point| k_star.within(*p, box_reach);
        let spans = inner
            .polyline
            .iter()
            .step_by((inner.polyline.len() / 32).max(1))
            .all(|&p| {
                let q = outer
                    .polyline
                    .iter()
                    .copied()
                    .min_by(|a, b| a.dist(p).total_cmp(&b.dist(p)))
                    .expect("cycle polylines are nonempty");
                (0..=8).all(|s| covered(&(p + (q - p).scale(s as f64 / 8.0))))
            });
        if !spans || complement_connected(&k_star, 1) {
            return Err(Error::UnableToClassifyKStar(
                "two cycles found but K* does not fill the annulus between them".into(),
            ));
        }
        DualKind::Annulus { inner, outer }
    };
    Ok(DualAttractorReport {
        k,
        k_star,
        kind,
        global_attractor_hull: hull.set,
        trapping_radius: radius,
        tau: hull.tau,
    })
}

/// Trajectory of the connecting orbit, if the evidence holds one.
pub fn connecting_trajectory(ev: &Evidence) -> Option<&Trajectory> {
    ev.connecting_orbit.as_ref().map(|c| &c.forward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin;

    fn nk(half: f64, res: usize) -> BoxSet {
        box_neighborhood(Rect::square(Point::zero(), half), res).unwrap()
    }

    #[test]
    fn node_is_a_global_attractor() {
        let f = builtin("node").unwrap();
        let c = classify_theorem3(&f, &nk(0.5, 32), &AnalysisParams::default()).unwrap();
        assert_eq!(c.verdict, Verdict::GlobalAttractor, "{:?}", c.evidence.notes);
        let basin = c.evidence.basin_probe.unwrap();
        assert_eq!((basin.passed(), basin.total()), (100, 100));
        assert!(c.evidence.trapping_radius.is_some() && c.evidence.isolated);
        assert!(c.evidence.equilibria_outside.is_empty() && c.evidence.connecting_orbit.is_some());
    }

    #[test]
    fn radial_origin_has_no_connecting_orbit() {
        let f = builtin("radial").unwrap();
        let c = classify_theorem3(&f, &nk(0.3, 32), &AnalysisParams::default()).unwrap();
        assert_eq!(c.verdict, Verdict::HypothesesFail(FailReason::NoConnectingOrbit));
    }

    #[test]
    fn saddle_is_not_dissipative() {
        let f = builtin("saddle").unwrap();
        let c = classify_theorem3(&f, &nk(0.5, 32), &AnalysisParams::default()).unwrap();
        assert_eq!(c.verdict, Verdict::HypothesesFail(FailReason::NotCertifiedDissipative));
    }

    #[test]
    fn radial_origin_is_a_repeller() {
        let f = builtin("radial").unwrap();
        let c = classify_theorem4(
            &f,
            &nk(0.3, 32),
            Disk::new(Point::zero(), 1.5),
            &AnalysisParams::default(),
        )
        .unwrap();
        assert_eq!(c.verdict, Verdict::Repeller);
        assert_eq!(c.evidence.complement_connected, Some(true));
    }

    #[test]
    fn trichotomy_examples() {
        let ap = AnalysisParams::default();
        let saddle = trichotomy(&builtin("saddle").unwrap(), &nk(0.5, 32), &ap).unwrap();
        assert_eq!(saddle.verdict, Verdict::SaddleLike);
        let roles: Vec<WitnessRole> = saddle.evidence.witness_orbits.iter().map(|w| w.role).collect();
        assert_eq!(roles, [WitnessRole::OmegaIntoK, WitnessRole::OmegaStarIntoK]);
        let x = saddle.evidence.witness_orbits[0].point;
        let y = saddle.evidence.witness_orbits[1].point;
        assert_eq!(x.x, 0.0);
        assert_eq!(y.y, 0.0);
        let node = trichotomy(&builtin("node").unwrap(), &nk(0.5, 32), &ap).unwrap();
        assert_eq!(node.verdict, Verdict::Attractor);
        let radial = trichotomy(&builtin("radial").unwrap(), &nk(0.3, 32), &ap).unwrap();
        assert_eq!(radial.verdict, Verdict::Repeller);
    }

    #[test]
    fn node_is_not_a_repeller() {
        let f = builtin("node").unwrap();
        let err = dual_attractor(&f, &nk(0.5, 32), &AnalysisParams::default()).unwrap_err();
        assert_eq!(err, Error::PreconditionNotRepeller);
    }

    #[test]
    fn disk_test_needs_disk_around_nk() {
        let f = builtin("radial").unwrap();
        let r = classify_theorem4(
            &f,
            &nk(0.3, 32),
            Disk::new(Point::zero(), 0.3),
            &AnalysisParams::default(),
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}

//! Orbit segments by an embedded Dormand–Prince 5(4) pair with PI step-size
//! control and cubic Hermite dense output.
//!
//! Reaching `escape_radius` is the numerical stand-in for running off to
//! infinity.

use crate::field::VectorField;
use crate::scalar::{Scalar, Vec2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationParams<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_step: T,
    pub t_max: T,
    pub escape_radius: T,
    /// Spacing of the dense output samples.
    pub dt_dense: T,
}

impl<T: Scalar> Default for IntegrationParams<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-9),
            abs_tol: T::lit(1e-12),
            max_step: T::lit(0.1),
            t_max: T::lit(200.0),
            escape_radius: T::lit(1e4),
            dt_dense: T::lit(0.01),
        }
    }
}

impl<T: Scalar> IntegrationParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rel_tol,
            self.abs_tol,
            self.max_step,
            self.t_max,
            self.escape_radius,
            self.dt_dense,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(Error::Precondition(
                "integration parameters must be finite and strictly positive".into(),
            ));
        }
        if self.rel_tol < T::lit(1e-13) {
            return Err(Error::Precondition("rel_tol must be at least 1e-13".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Direction::Forward => T::one(),
            Direction::Backward => -T::one(),
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination<T> {
    /// Integrated the whole requested time span.
    TimeBudget,
    /// Reached the escape radius at the given (signed) time.
    Escaped(T),
    /// Came to rest at this point.
    ConvergedToPoint(Vec2<T>),
    /// The field could not be evaluated along the orbit.
    NonFiniteField,
}

/// Time-stamped samples of an orbit segment. Times are signed and strictly
/// monotone: increasing forward, decreasing backward.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec2<T>>,
    pub direction: Direction,
    pub termination: Termination<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> Vec2<T> {
        self.points[0]
    }

    pub fn end(&self) -> Vec2<T> {
        *self.points.last().expect("trajectory has at least one sample")
    }

    pub fn end_time(&self) -> T {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn samples(&self) -> impl Iterator<Item = (T, Vec2<T>)> + '_ {
        self.times.iter().copied().zip(self.points.iter().copied())
    }

    /// Samples with `|t| ≥ from`.
    pub fn tail_from(&self, from: T) -> &[Vec2<T>] {
        let i = self.times.partition_point(|t| t.abs() < from);
        &self.points[i.min(self.points.len().saturating_sub(1))..]
    }

    pub fn max_norm(&self) -> T {
        self.points.iter().fold(T::zero(), |m, p| m.max(p.norm()))
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

/// One accepted step `(t0, p0) → (t1, p1)` with velocities at both ends.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step<T> {
    pub t0: T,
    pub p0: Vec2<T>,
    pub v0: Vec2<T>,
    pub t1: T,
    pub p1: Vec2<T>,
    pub v1: Vec2<T>,
}

impl<T: Scalar> Step<T> {
    /// Cubic Hermite interpolant at time `t` within the step.
    pub fn hermite(&self, t: T) -> Vec2<T> {
        let dt = self.t1 - self.t0;
        let s = (t - self.t0) / dt;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        self.p0 * h00 + self.v0 * (h10 * dt) + self.p1 * h01 + self.v1 * (h11 * dt)
    }
}

enum StepError<T> {
    NonFinite(Vec2<T>),
}

// new point, its velocity and the error estimate; Err carries the stage
// point where the field failed
type StageResult<T> = std::result::Result<(Vec2<T>, Vec2<T>, Vec2<T>), Vec2<T>>;

/// Adaptive stepper; `next` returns accepted steps in the chosen direction.
pub(crate) struct Stepper<'a, T> {
    field: &'a VectorField,
    params: IntegrationParams<T>,
    sign: T,
    t: T,
    p: Vec2<T>,
    v: Vec2<T>,
    h: T,
    err_prev: T,
}

impl<'a, T: Scalar> Stepper<'a, T> {
    pub fn new(
        field: &'a VectorField,
        p0: Vec2<T>,
        direction: Direction,
        params: &IntegrationParams<T>,
    ) -> Result<Self> {
        params.validate()?;
        let v = field.velocity(p0).map_err(|_| non_finite(p0))?;
        let h = params.max_step.min(T::lit(1e-2));
        Ok(Self {
            field,
            params: *params,
            sign: direction.sign(),
            t: T::zero(),
            p: p0,
            v,
            h,
            err_prev: T::lit(1e-4),
        })
    }

    pub fn time(&self) -> T {
        self.t
    }

    pub fn point(&self) -> Vec2<T> {
        self.p
    }

    /// Single Dormand–Prince step of signed length `dt` from `(p, v)`.
    /// Returns the fifth-order solution and the embedded error estimate.
    fn dp_step(field: &VectorField, p: Vec2<T>, v: Vec2<T>, dt: T) -> StageResult<T> {
        let mut k = [Vec2::zero(); 7];
        k[0] = v;
        for s in 1..7 {
            let mut acc = Vec2::zero();
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    acc += *kj * T::lit(a);
                }
            }
            let q = p + acc * dt;
            k[s] = field.velocity(q).map_err(|_| q)?;
        }
        // stage 7 sits at the fifth-order solution (FSAL)
        let mut acc = Vec2::zero();
        for (j, kj) in k.iter().enumerate().take(6) {
            acc += *kj * T::lit(A[6][j]);
        }
        let p1 = p + acc * dt;
        let mut err = Vec2::zero();
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                err += *kj * T::lit(E[j]);
            }
        }
        Ok((p1, k[6], err * dt))
    }

    /// Fifth-order point a signed time `dt` after `(p, v)`; used to refine
    /// event times inside an accepted step.
    pub fn advance(&self, p: Vec2<T>, v: Vec2<T>, dt: T) -> Result<Vec2<T>> {
        if dt == T::zero() {
            return Ok(p);
        }
        Self::dp_step(self.field, p, v, dt)
            .map(|(q, _, _)| q)
            .map_err(non_finite)
    }

    fn error_norm(&self, p0: Vec2<T>, p1: Vec2<T>, err: Vec2<T>) -> T {
        let sx = self.params.abs_tol + self.params.rel_tol * p0.x.abs().max(p1.x.abs());
        let sy = self.params.abs_tol + self.params.rel_tol * p0.y.abs().max(p1.y.abs());
        let ex = err.x / sx;
        let ey = err.y / sy;
        ((ex * ex + ey * ey) / T::lit(2.0)).sqrt()
    }

    /// Takes one accepted step of length at most `limit` (a magnitude).
    fn try_next(&mut self, limit: T) -> std::result::Result<Step<T>, StepError<T>> {
        // below this the clock stops advancing
        let h_min = T::epsilon() * T::lit(4.0) * self.t.abs().max(T::min_positive_value());
        loop {
            let h = self.h.min(limit).min(self.params.max_step);
            if h < h_min && h < limit {
                return Err(StepError::NonFinite(self.p));
            }
            match Self::dp_step(self.field, self.p, self.v, self.sign * h) {
                Ok((p1, v1, err)) if p1.is_finite() => {
                    let e = self.error_norm(self.p, p1, err);
                    if e.is_finite() && e <= T::one() {
                        let factor = if e == T::zero() {
                            T::lit(5.0)
                        } else {
                            (T::lit(SAFETY) * e.powf(T::lit(-PI_ALPHA)) * self.err_prev.powf(T::lit(PI_BETA)))
                                .max(T::lit(0.2))
                                .min(T::lit(5.0))
                        };
                        self.err_prev = e.max(T::lit(1e-4));
                        let step = Step {
                            t0: self.t,
                            p0: self.p,
                            v0: self.v,
                            t1: self.t + self.sign * h,
                            p1,
                            v1,
                        };
                        self.t = step.t1;
                        self.p = p1;
                        self.v = v1;
                        self.h = (h * factor).min(self.params.max_step);
                        return Ok(step);
                    }
                    let shrink = if e.is_finite() {
                        (T::lit(SAFETY) * e.powf(T::lit(-0.2))).max(T::lit(0.2))
                    } else {
                        T::lit(0.2)
                    };
                    self.h = h * shrink;
                }
                _ => {
                    // stage left the domain of the field; retreat
                    self.h = h * T::lit(0.25);
                }
            }
        }
    }

    pub fn next(&mut self, limit: T) -> Result<Step<T>> {
        self.try_next(limit).map_err(|StepError::NonFinite(p)| non_finite(p))
    }
}

fn non_finite<T: Scalar>(p: Vec2<T>) -> Error {
    Error::NonFiniteField {
        x: p.x.to_f64_lossy(),
        y: p.y.to_f64_lossy(),
    }
}

const REST_SPEED: f64 = 1e-12;
const REST_DISPLACEMENT: f64 = 1e-10;

/// Locates the first time in the step where `|p| ≥ radius`, by bisection on
/// fifth-order sub-steps. Returns the upper bracket time and point.
fn refine_escape<T: Scalar>(stepper: &Stepper<'_, T>, step: &Step<T>, radius: T) -> Result<(T, Vec2<T>)> {
    let (mut lo, mut hi) = (T::zero(), step.t1 - step.t0);
    let mut p_hi = step.p1;
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    while (hi - lo).abs() > tol {
        let mid = (lo + hi) / T::lit(2.0);
        let q = stepper.advance(step.p0, step.v0, mid)?;
        if q.norm() >= radius {
            hi = mid;
            p_hi = q;
        } else {
            lo = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    Ok((step.t0 + hi, p_hi))
}

/// Integrates from `p0` for signed time `t_span`, sampling every `dt_dense`.
///
/// Field failures along the way end the orbit with
/// [`Termination::NonFiniteField`]; only a failure at `p0` itself is an error.
pub fn flow<T: Scalar>(
    field: &VectorField,
    p0: Vec2<T>,
    t_span: T,
    params: &IntegrationParams<T>,
) -> Result<Trajectory<T>> {
    if t_span == T::zero() || !t_span.is_finite() {
        return Err(Error::Precondition("t_span must be finite and non-zero".into()));
    }
    let direction = if t_span > T::zero() {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let mut stepper = Stepper::new(field, p0, direction, params)?;
    let sign: T = direction.sign();
    let span = t_span.abs();
    let dt = params.dt_dense;
    let mut times = vec![T::zero()];
    let mut points = vec![p0];
    let mut next_k = 1usize;

    let termination = loop {
        let done = stepper.time().abs();
        if done >= span {
            break Termination::TimeBudget;
        }
        let step = match stepper.next(span - done) {
            Ok(s) => s,
            Err(_) => break Termination::NonFiniteField,
        };
        let escaped = step.p1.norm() >= params.escape_radius;
        let (t_end, p_end) = if escaped {
            refine_escape(&stepper, &step, params.escape_radius)?
        } else {
            (step.t1, step.p1)
        };
        loop {
            let tk = sign * dt * T::lit(next_k as f64);
            if tk.abs() >= t_end.abs() {
                break;
            }
            times.push(tk);
            points.push(step.hermite(tk));
            next_k += 1;
        }
        if escaped {
            times.push(t_end);
            points.push(p_end);
            break Termination::Escaped(t_end);
        }
        let on_grid = (t_end.abs() - dt * T::lit(next_k as f64)).abs() <= dt * T::lit(1e-9);
        if on_grid || t_end.abs() >= span {
            times.push(t_end);
            points.push(p_end);
            next_k += 1;
        }
        if t_end.abs() >= span {
            break Termination::TimeBudget;
        }
        if step.v1.norm() < T::lit(REST_SPEED) && t_end.abs() >= T::one() {
            let back = times.partition_point(|t| t.abs() < t_end.abs() - T::one());
            if points[back].dist(p_end) < T::lit(REST_DISPLACEMENT) {
                if !on_grid {
                    times.push(t_end);
                    points.push(p_end);
                }
                break Termination::ConvergedToPoint(p_end);
            }
        }
    };
    Ok(Trajectory {
        times,
        points,
        direction,
        termination,
    })
}

/// Endpoint of the orbit after signed time `t`, without dense output.
/// Escape beyond `escape_radius` stops early and is reported.
pub fn flow_endpoint<T: Scalar>(
    field: &VectorField,
    p0: Vec2<T>,
    t: T,
    params: &IntegrationParams<T>,
) -> Result<(Vec2<T>, Termination<T>)> {
    if t == T::zero() {
        return Ok((p0, Termination::TimeBudget));
    }
    let direction = if t > T::zero() {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let mut stepper = Stepper::new(field, p0, direction, params)?;
    let span = t.abs();
    loop {
        let done = stepper.time().abs();
        if done >= span {
            return Ok((stepper.point(), Termination::TimeBudget));
        }
        let step = stepper.next(span - done)?;
        if step.p1.norm() >= params.escape_radius {
            return Ok((step.p1, Termination::Escaped(step.t1)));
        }
    }
}

/// Smallest `|t|` at which the orbit reaches `escape_radius` in the given
/// direction, or `None` if `t_max` elapses first.
pub fn escape_time<T: Scalar>(
    field: &VectorField,
    p0: Vec2<T>,
    direction: Direction,
    params: &IntegrationParams<T>,
) -> Result<Option<T>> {
    if p0.norm() >= params.escape_radius {
        return Ok(Some(T::zero()));
    }
    let mut stepper = Stepper::new(field, p0, direction, params)?;
    loop {
        let done = stepper.time().abs();
        if done >= params.t_max {
            return Ok(None);
        }
        let step = stepper.next(params.t_max - done)?;
        if step.p1.norm() >= params.escape_radius {
            let (t, _) = refine_escape(&stepper, &step, params.escape_radius)?;
            return Ok(Some(t.abs()));
        }
        if step.v1.norm() < T::lit(REST_SPEED) {
            return Ok(None);
        }
    }
}

/// A transversal crossing of an orbit with a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<T> {
    pub t: T,
    pub point: Vec2<T>,
    /// +1 when the orbit crosses to the left of `a → b`, -1 to the right.
    pub side: i8,
}

/// First `n_wanted` transversal crossings of the forward orbit with the
/// open segment `a → b`, each refined to 1e-10 in time.
pub fn section_crossings<T: Scalar>(
    field: &VectorField,
    p0: Vec2<T>,
    segment: (Vec2<T>, Vec2<T>),
    n_wanted: usize,
    params: &IntegrationParams<T>,
) -> Result<Vec<(T, Vec2<T>)>> {
    Ok(crossings(field, p0, segment, n_wanted, None, params)?
        .into_iter()
        .map(|c| (c.t, c.point))
        .collect())
}

/// Crossings with side information; `side_filter` keeps only crossings in
/// one direction.
pub(crate) fn crossings<T: Scalar>(
    field: &VectorField,
    p0: Vec2<T>,
    (a, b): (Vec2<T>, Vec2<T>),
    n_wanted: usize,
    side_filter: Option<i8>,
    params: &IntegrationParams<T>,
) -> Result<Vec<Crossing<T>>> {
    let d = b - a;
    if d.norm() == T::zero() {
        return Err(Error::Precondition("section endpoints must differ".into()));
    }
    let dn = d.normalized();
    let side = |p: Vec2<T>| d.cross(p - a);
    let mut out = Vec::new();
    if n_wanted == 0 {
        return Ok(out);
    }
    let mut stepper = Stepper::new(field, p0, Direction::Forward, params)?;
    let t_tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    let start_slack = T::epsilon() * T::lit(64.0) * d.norm() * ((p0 - a).norm() + d.norm());
    loop {
        let done = stepper.time();
        if done >= params.t_max {
            return Ok(out);
        }
        let step = stepper.next(params.t_max - done)?;
        if step.p1.norm() >= params.escape_radius {
            return Ok(out);
        }
        let mut s0 = side(step.p0);
        // a start on the section is not a crossing
        if step.t0 == T::zero() && s0.abs() <= start_slack {
            s0 = T::zero();
        }
        let s1 = side(step.p1);
        let crosses = s0 != T::zero() && (s1 == T::zero() || (s0 < T::zero()) != (s1 < T::zero()));
        if crosses {
            let (mut lo, mut hi) = (T::zero(), step.t1 - step.t0);
            let mut q = step.p1;
            while hi - lo > t_tol {
                let mid = (lo + hi) / T::lit(2.0);
                let qm = stepper.advance(step.p0, step.v0, mid)?;
                let sm = side(qm);
                if sm == T::zero() {
                    hi = mid;
                    q = qm;
                    break;
                }
                if (sm < T::zero()) == (s0 < T::zero()) {
                    lo = mid;
                } else {
                    hi = mid;
                    q = qm;
                }
            }
            let u = (q - a).dot(d) / d.dot(d);
            if u > T::zero() && u < T::one() {
                let vq = field.velocity(q).map_err(|_| non_finite(q))?;
                if vq.cross(dn).abs() <= T::lit(1e-8) {
                    return Err(Error::TangentialCrossing {
                        x: q.x.to_f64_lossy(),
                        y: q.y.to_f64_lossy(),
                    });
                }
                let crossing_side: i8 = if s0 < T::zero() { 1 } else { -1 };
                if side_filter.is_none_or(|f| f == crossing_side) {
                    out.push(Crossing {
                        t: step.t0 + hi,
                        point: q,
                        side: crossing_side,
                    });
                    if out.len() >= n_wanted {
                        return Ok(out);
                    }
                }
            }
        }
        if step.v1.norm() < T::lit(REST_SPEED) {
            return Ok(out);
        }
    }
}

//! Planar vector fields and the builtin catalogue.

use std::fmt;

use crate::expr::{parse, Expr, ExprError, Tape, Var};
use crate::scalar::{Scalar, Vec2};
use crate::{Error, Mat2, Point, Result};

/// `ẋ = fx(x, y)`, `ẏ = fy(x, y)`.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    fx: Expr,
    fy: Expr,
    fx_tape: Tape,
    fy_tape: Tape,
    // ∂fx/∂x, ∂fx/∂y, ∂fy/∂x, ∂fy/∂y
    partials: std::result::Result<[Expr; 4], ExprError>,
    partial_tapes: Option<[Tape; 4]>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("fx", &self.fx.to_string())
            .field("fy", &self.fy.to_string())
            .finish()
    }
}

impl VectorField {
    pub fn new(name: impl Into<String>, fx: Expr, fy: Expr) -> Self {
        let partials = (|| {
            Ok([
                fx.differentiate(Var::X)?,
                fx.differentiate(Var::Y)?,
                fy.differentiate(Var::X)?,
                fy.differentiate(Var::Y)?,
            ])
        })();
        let partial_tapes = partials
            .as_ref()
            .ok()
            .map(|p| [p[0].compile(), p[1].compile(), p[2].compile(), p[3].compile()]);
        Self {
            name: name.into(),
            fx_tape: fx.compile(),
            fy_tape: fy.compile(),
            fx,
            fy,
            partials,
            partial_tapes,
        }
    }

    /// Parses both components.
    pub fn parse(name: impl Into<String>, fx: &str, fy: &str) -> Result<Self> {
        Ok(Self::new(name, parse(fx)?, parse(fy)?))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fx(&self) -> &Expr {
        &self.fx
    }

    pub fn fy(&self) -> &Expr {
        &self.fy
    }

    /// Symbolic Jacobian entries, row-major.
    pub fn partials(&self) -> std::result::Result<&[Expr; 4], ExprError> {
        self.partials.as_ref().map_err(Clone::clone)
    }

    pub fn velocity<T: Scalar>(&self, p: Vec2<T>) -> std::result::Result<Vec2<T>, ExprError> {
        Ok(Vec2::new(self.fx_tape.eval(p.x, p.y)?, self.fy_tape.eval(p.x, p.y)?))
    }

    /// Symbolic partials evaluated at `p`.
    pub fn jacobian(&self, p: Point) -> std::result::Result<Mat2, ExprError> {
        let tapes = match &self.partial_tapes {
            Some(t) => t,
            None => return Err(self.partials.clone().unwrap_err()),
        };
        Ok([
            [tapes[0].eval(p.x, p.y)?, tapes[1].eval(p.x, p.y)?],
            [tapes[2].eval(p.x, p.y)?, tapes[3].eval(p.x, p.y)?],
        ])
    }

    /// Central-difference Jacobian of the velocity.
    pub fn jacobian_fd(&self, p: Point, h: f64) -> std::result::Result<Mat2, ExprError> {
        let dx = Vec2::new(h, 0.0);
        let dy = Vec2::new(0.0, h);
        let cx = (self.velocity(p + dx)? - self.velocity(p - dx)?).scale(0.5 / h);
        let cy = (self.velocity(p + dy)? - self.velocity(p - dy)?).scale(0.5 / h);
        Ok([[cx.x, cy.x], [cx.y, cy.y]])
    }

    /// The same field with time running backwards.
    pub fn reversed(&self) -> Self {
        let neg = |e: &Expr| Expr::Unary(crate::expr::UnaryOp::Neg, Box::new(e.clone()));
        Self::new(format!("{}~rev", self.name), neg(&self.fx), neg(&self.fy))
    }
}

pub const BUILTIN_NAMES: [&str; 5] = ["saddle", "node", "radial", "vdp", "annulus"];

// ṙ = -r (r - 1)(r - 1.5)(r - 2), θ̇ = 1. With s = r², the cubic
// (r - 1)(r - 1.5)(r - 2) = r³ - 4.5 r² + 6.5 r - 3 becomes G below and
// ẋ = -G x - y, ẏ = -G y + x.
const ANNULUS_G: &str = "((x^2 + y^2)*sqrt(x^2 + y^2) - 4.5*(x^2 + y^2) + 6.5*sqrt(x^2 + y^2) - 3)";

/// Component strings of a builtin system.
pub fn builtin_source(name: &str) -> Option<(String, String)> {
    let (fx, fy) = match name {
        "saddle" => ("x".to_string(), "-y".to_string()),
        "node" => ("-x".to_string(), "-y".to_string()),
        "radial" => (
            "-y + x*(1 - x^2 - y^2)".to_string(),
            "x + y*(1 - x^2 - y^2)".to_string(),
        ),
        "vdp" => ("y".to_string(), "(1 - x^2)*y - x".to_string()),
        "annulus" => (format!("-{ANNULUS_G}*x - y"), format!("-{ANNULUS_G}*y + x")),
        _ => return None,
    };
    Some((fx, fy))
}

/// Looks up a catalogue entry by name.
pub fn builtin(name: &str) -> Result<VectorField> {
    let (fx, fy) = builtin_source(name).ok_or_else(|| Error::UnknownSystem(name.to_string()))?;
    VectorField::parse(name, &fx, &fy)
}

/// Closed-form polar `ṙ` for the rotationally symmetric builtins.
pub fn polar_radial_rate(name: &str, r: f64) -> Option<f64> {
    match name {
        "radial" => Some(r * (1.0 - r * r)),
        "annulus" => Some(-r * (r - 1.0) * (r - 1.5) * (r - 2.0)),
        "node" => Some(-r),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn catalogue_velocities() {
        let saddle = builtin("saddle").unwrap();
        assert_eq!(saddle.velocity(Vec2::new(1.0, 2.0)).unwrap(), Vec2::new(1.0, -2.0));
        let node = builtin("node").unwrap();
        assert_eq!(node.velocity(Vec2::new(0.0, 0.0)).unwrap().norm(), 0.0);
        let radial = builtin("radial").unwrap();
        assert_eq!(radial.velocity(Vec2::new(1.0, 0.0)).unwrap(), Vec2::new(0.0, 1.0));
    }

    #[test]
    fn catalogue_sources() {
        let saddle = builtin("saddle").unwrap();
        assert_eq!(saddle.fx(), &parse("x").unwrap());
        assert_eq!(saddle.fy(), &parse("-y").unwrap());
        let node = builtin("node").unwrap();
        assert_eq!(node.fx(), &parse("-x").unwrap());
        assert_eq!(node.fy(), &parse("-y").unwrap());
        assert_eq!(builtin("nosuch").unwrap_err(), Error::UnknownSystem("nosuch".into()));
    }

    #[test]
    fn linear_jacobians() {
        let saddle = builtin("saddle").unwrap();
        for p in [Vec2::new(0.0, 0.0), Vec2::new(3.0, -7.0)] {
            assert_eq!(saddle.jacobian(p).unwrap(), [[1.0, 0.0], [0.0, -1.0]]);
        }
        let radial = builtin("radial").unwrap();
        assert_eq!(radial.jacobian(Vec2::zero()).unwrap(), [[1.0, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn vdp_jacobian_matches_finite_differences() {
        let vdp = builtin("vdp").unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let p = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let j = vdp.jacobian(p).unwrap();
            let fd = vdp.jacobian_fd(p, 1e-6).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    let err = (j[r][c] - fd[r][c]).abs() / j[r][c].abs().max(1.0);
                    assert!(err < 1e-5, "entry {r}{c} at {p:?}: {} vs {}", j[r][c], fd[r][c]);
                }
            }
        }
    }

    #[test]
    fn polar_builtins_match_closed_form() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for name in ["radial", "annulus"] {
            let f = builtin(name).unwrap();
            for _ in 0..1000 {
                let r: f64 = rng.gen_range(0.01..3.0);
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = Vec2::new(r * th.cos(), r * th.sin());
                let v = f.velocity(p).unwrap();
                let rdot = p.dot(v) / p.norm();
                let exact = polar_radial_rate(name, p.norm()).unwrap();
                assert!((rdot - exact).abs() < 1e-9, "{name} r={r}: {rdot} vs {exact}");
                let thdot = p.cross(v) / (r * r);
                assert!((thdot - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn annulus_zeros_are_simple() {
        for r0 in [1.0, 1.5, 2.0] {
            assert_eq!(polar_radial_rate("annulus", r0), Some(0.0));
            let h = 1e-6;
            let slope = (polar_radial_rate("annulus", r0 + h).unwrap() - polar_radial_rate("annulus", r0 - h).unwrap())
                / (2.0 * h);
            assert!(slope.abs() > 0.1);
        }
        // near the origin ṙ ≈ 3 r
        let slope = polar_radial_rate("annulus", 1e-6).unwrap() / 1e-6;
        assert!((slope - 3.0).abs() < 1e-4);
    }

    #[test]
    fn reversed_field_negates() {
        let f = builtin("vdp").unwrap();
        let p = Vec2::new(0.3, -1.1);
        assert_eq!(f.reversed().velocity(p).unwrap(), -f.velocity(p).unwrap());
    }

    #[test]
    fn annulus_jacobian_singular_at_origin_only() {
        let f = builtin("annulus").unwrap();
        assert!(f.jacobian(Vec2::zero()).is_err());
        let fd = f.jacobian_fd(Vec2::zero(), 1e-7).unwrap();
        assert!((fd[0][0] - 3.0).abs() < 1e-5 && (fd[0][1] + 1.0).abs() < 1e-5);
        assert!(f.jacobian(Vec2::new(0.5, 0.1)).is_ok());
    }
}

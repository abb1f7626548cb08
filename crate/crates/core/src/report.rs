//! Structured reports: `key: value` lines nested by two-space indents,
//! with a JSON rendering of the same tree.
//!
//! Lists are repeated keys. Numbers print with six significant digits in
//! the text form and at full precision in JSON.

use std::fmt::Write as _;

use serde_json::{Map, Value as Json};

use crate::classify::{Classification, DualAttractorReport, DualKind, ProbeStats};
use crate::equilibria::EquilibriumScan;
use crate::limitsets::LimitCycle;
use crate::topology::{BoxSet, EntranceExitDecomposition};
use crate::{Point, Rect, Termination, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number(f64),
    Integer(i64),
    Bool(bool),
    /// Several numbers on one line, e.g. a point or a rectangle.
    Numbers(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Value(Value),
    Section(Report),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Entry)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Entry)] {
        &self.entries
    }

    pub fn push(&mut self, key: &str, value: Value) -> &mut Self {
        self.entries.push((key.to_string(), Entry::Value(value)));
        self
    }

    pub fn text(&mut self, key: &str, v: impl Into<String>) -> &mut Self {
        self.push(key, Value::Text(v.into()))
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.push(key, Value::Number(v))
    }

    pub fn int(&mut self, key: &str, v: usize) -> &mut Self {
        self.push(key, Value::Integer(v as i64))
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.push(key, Value::Bool(v))
    }

    pub fn point(&mut self, key: &str, p: Point) -> &mut Self {
        self.push(key, Value::Numbers(vec![p.x, p.y]))
    }

    pub fn rect(&mut self, key: &str, r: Rect) -> &mut Self {
        self.push(key, Value::Numbers(vec![r.x0, r.y0, r.x1, r.y1]))
    }

    pub fn section(&mut self, key: &str, child: Report) -> &mut Self {
        self.entries.push((key.to_string(), Entry::Section(child)));
        self
    }

    /// First value stored under `key` at the top level.
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, e)| e)
    }

    /// Text form. Each line is `key: value` or `key:` followed by the
    /// section's lines indented two more spaces.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        for (key, entry) in &self.entries {
            match entry {
                Entry::Value(v) => {
                    let _ = writeln!(out, "{pad}{key}: {}", render_value(v));
                }
                Entry::Section(child) => {
                    let _ = writeln!(out, "{pad}{key}:");
                    child.render_into(out, depth + 1);
                }
            }
        }
    }

    /// JSON form with the same keys. Repeated keys become arrays.
    pub fn to_json(&self) -> Json {
        let mut map = Map::new();
        for (key, entry) in &self.entries {
            let v = match entry {
                Entry::Value(v) => value_json(v),
                Entry::Section(child) => child.to_json(),
            };
            let repeated = self.entries.iter().filter(|(k, _)| k == key).count() > 1;
            if repeated {
                match map.entry(key.clone()).or_insert_with(|| Json::Array(Vec::new())) {
                    Json::Array(items) => items.push(v),
                    _ => unreachable!("repeated keys are always arrays"),
                }
            } else {
                map.insert(key.clone(), v);
            }
        }
        Json::Object(map)
    }
}

fn value_json(v: &Value) -> Json {
    match v {
        Value::Text(s) => Json::from(s.as_str()),
        Value::Number(x) => Json::from(*x),
        Value::Integer(i) => Json::from(*i),
        Value::Bool(b) => Json::from(*b),
        Value::Numbers(xs) => Json::Array(xs.iter().map(|x| Json::from(*x)).collect()),
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        Value::Number(x) => fmt_num(*x),
        Value::Integer(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Numbers(xs) => xs.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(" "),
    }
}

/// Six significant digits. Fixed notation for magnitudes in `[1e-4, 1e6)`,
/// scientific otherwise; zero of either sign is `0.000000`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.000000".into();
    }
    // the exponent after rounding to six digits
    let sci = format!("{x:.5e}");
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .expect("exponent of a finite float");
    if (-4..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

fn probe_section(stats: &ProbeStats) -> Report {
    let mut r = Report::new();
    r.int("passed", stats.passed()).int("total", stats.total());
    for s in stats.samples.iter().filter(|s| !s.passed) {
        r.point("failed_seed", s.seed);
    }
    r
}

fn boxset_summary(k: &BoxSet) -> Report {
    let mut r = Report::new();
    r.int("boxes", k.len());
    if let Some(b) = k.bounding_rect() {
        r.rect("bounds", b);
    }
    r
}

fn cycle_section(c: &LimitCycle) -> Report {
    let mut r = Report::new();
    let (lo, hi) = c.radius_stats;
    r.num("radius", 0.5 * (lo + hi))
        .num("radius_min", lo)
        .num("radius_max", hi)
        .num("period", c.period)
        .num("max_abs_x", c.max_abs_x())
        .text("stability", c.stability.as_str())
        .int("vertices", c.polyline.len());
    r
}

pub fn classification_report(c: &Classification) -> Report {
    let ev = &c.evidence;
    let mut r = Report::new();
    r.text("verdict", c.verdict.to_string());
    let mut e = Report::new();
    if let Some(k) = &ev.k {
        e.section("k", boxset_summary(k));
    }
    e.flag("isolated", ev.isolated);
    if let Some(tau) = ev.tau {
        e.num("tau", tau);
    }
    if let Some(rad) = ev.trapping_radius {
        e.num("trapping_radius", rad);
    }
    if let Some(m) = ev.dissipativity {
        e.text("dissipativity", format!("{m:?}"));
    }
    for p in &ev.equilibria {
        e.point("equilibrium", *p);
    }
    for p in &ev.equilibria_outside {
        e.point("equilibrium_outside", *p);
    }
    if let Some(co) = &ev.connecting_orbit {
        let mut s = Report::new();
        s.point("seed", co.seed)
            .num("escape_time", co.escape_time)
            .point("end", co.forward.end());
        e.section("connecting_orbit", s);
    }
    for w in &ev.witness_orbits {
        e.push(
            "witness",
            Value::Text(format!(
                "{} {} {}",
                w.role.as_str(),
                fmt_num(w.point.x),
                fmt_num(w.point.y)
            )),
        );
    }
    for (key, probe) in [
        ("basin_probe", &ev.basin_probe),
        ("stability_probe", &ev.stability_probe),
        ("attractor_probe", &ev.attractor_probe),
        ("repeller_probe", &ev.repeller_probe),
    ] {
        if let Some(p) = probe {
            e.section(key, probe_section(p));
        }
    }
    if let Some(d) = ev.disk {
        let mut s = Report::new();
        s.point("center", d.center).num("radius", d.radius);
        e.section("disk", s);
    }
    if let Some(p) = ev.bounded_orbit {
        e.point("bounded_orbit", p);
    }
    if let Some(cc) = ev.complement_connected {
        e.flag("complement_connected", cc);
    }
    for n in &ev.notes {
        e.text("note", n.as_str());
    }
    r.section("evidence", e);
    r
}

pub fn dual_report(d: &DualAttractorReport) -> Report {
    let mut r = Report::new();
    r.text("kind", d.kind.name());
    match &d.kind {
        DualKind::LimitCycle(c) => {
            r.section("cycle", cycle_section(c));
        }
        DualKind::Annulus { inner, outer } => {
            r.section("inner_cycle", cycle_section(inner));
            r.section("outer_cycle", cycle_section(outer));
        }
    }
    r.section("k", boxset_summary(&d.k))
        .section("k_star", boxset_summary(&d.k_star))
        .flag(
            "k_star_complement_connected",
            crate::topology::complement_connected(&d.k_star, 1),
        )
        .section("global_attractor_hull", boxset_summary(&d.global_attractor_hull))
        .num("trapping_radius", d.trapping_radius)
        .num("tau", d.tau);
    r
}

pub fn equilibria_report(scan: &EquilibriumScan) -> Report {
    let mut r = Report::new();
    r.int("count", scan.equilibria.len());
    for eq in &scan.equilibria {
        let mut s = Report::new();
        let [l1, l2] = eq.eigenvalues;
        s.point("location", eq.location)
            .text("kind", eq.kind.as_str())
            .push("eigenvalues", Value::Numbers(vec![l1.re, l1.im, l2.re, l2.im]))
            .text("jacobian_source", format!("{:?}", eq.jacobian_source));
        r.section("equilibrium", s);
    }
    r.int("skipped_seeds", scan.skipped.len());
    r
}

fn termination_name(t: &Termination) -> &'static str {
    match t {
        Termination::TimeBudget => "TimeBudget",
        Termination::Escaped(_) => "Escaped",
        Termination::ConvergedToPoint(_) => "ConvergedToPoint",
        Termination::NonFiniteField => "NonFiniteField",
    }
}

pub fn trajectory_report(tr: &Trajectory) -> Report {
    let mut r = Report::new();
    r.point("endpoint", tr.end())
        .num("time", tr.end_time())
        .text("termination", termination_name(&tr.termination))
        .int("samples", tr.len());
    r
}

pub fn invariant_set_report(set: &BoxSet, isolated: bool, tau: f64) -> Report {
    let mut r = Report::new();
    r.flag("isolating", isolated).num("tau", tau);
    r.section("invariant_part", boxset_summary(set));
    r
}

pub fn block_report(d: &EntranceExitDecomposition) -> Report {
    let mut r = Report::new();
    r.num("perimeter", d.perimeter).int("arcs", d.arcs.len());
    for a in &d.arcs {
        let mut s = Report::new();
        s.text("label", a.label.as_str())
            .point("start", a.start)
            .point("end", a.end)
            .num("length", a.length);
        r.section("arc", s);
    }
    for t in &d.tangencies {
        let mut s = Report::new();
        s.point("point", t.point)
            .int("edge", t.edge)
            .num("contact", t.contact)
            .text("kind", t.kind.as_str());
        r.section("tangency", s);
    }
    r.int("unresolved", d.unresolved());
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(0.0), "0.000000");
        assert_eq!(fmt_num(-0.0), "0.000000");
        assert_eq!(fmt_num((-1.0f64).exp()), "0.367879");
        assert_eq!(fmt_num(1.0), "1.00000");
        assert_eq!(fmt_num(-2.5), "-2.50000");
        assert_eq!(fmt_num(4.2718281), "4.27183");
        assert_eq!(fmt_num(123456.7), "123457");
        assert_eq!(fmt_num(999999.7), "1.00000e6");
        assert_eq!(fmt_num(1.5e-7), "1.50000e-7");
        assert_eq!(fmt_num(0.00012345678), "0.000123457");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn nested_text_and_json() {
        let mut inner = Report::new();
        inner.num("radius", 1.0).point("center", Point::new(0.0, -0.5));
        let mut r = Report::new();
        r.text("verdict", "Repeller")
            .section("disk", inner)
            .text("note", "a")
            .text("note", "b")
            .flag("ok", true)
            .int("n", 3);
        assert_eq!(
            r.render(),
            "verdict: Repeller\ndisk:\n  radius: 1.00000\n  center: 0.000000 -0.500000\nnote: a\nnote: b\nok: true\nn: 3\n"
        );
        let j = r.to_json();
        assert_eq!(j["disk"]["radius"], 1.0);
        assert_eq!(j["disk"]["center"][1], -0.5);
        assert_eq!(j["note"], serde_json::json!(["a", "b"]));
        assert_eq!(j["n"], 3);
    }
}

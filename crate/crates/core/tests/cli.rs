use std::path::PathBuf;
use std::process::{Command, Output};

use planar_conley::cli::run_cli;
use planar_conley::topology::BoxSet;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_planar-conley"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("planar-conley-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_prints_the_node_endpoint() {
    let o = run(&["simulate", "node", "--from", "1,0", "--t", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("endpoint: 0.367879 0.000000"), "{out}");
    assert!(out.contains("termination: TimeBudget"));
}

#[test]
fn saddle_trichotomy_reports_both_witnesses() {
    let o = run(&["classify", "saddle", "--mode", "trichotomy"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("verdict: SaddleLike"), "{out}");
    assert_eq!(
        out.lines().filter(|l| l.trim_start().starts_with("witness:")).count(),
        2
    );
}

#[test]
fn radial_dual_attractor_is_the_unit_cycle() {
    let o = run(&["classify", "radial", "--mode", "c6"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("kind: LimitCycle"), "{out}");
    assert!(out.contains("radius: 1.00"), "{out}");
}

#[test]
fn failed_hypotheses_still_exit_zero() {
    let o = run(&["classify", "saddle", "--mode", "t3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: HypothesesFail(NotCertifiedDissipative)"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "node", "--from", "1", "--t", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["classify", "radial", "--mode", "t5"]).status.code(), Some(1));
    // a repeller is required for the dual attractor
    let o = run(&["classify", "node", "--mode", "c6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a repeller"));
}

#[test]
fn thread_cap_is_honoured_and_validated() {
    let o = bin()
        .env("PLANAR_CONLEY_THREADS", "1")
        .args(["invset", "saddle", "--res", "16"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = bin()
        .env("PLANAR_CONLEY_THREADS", "zero")
        .args(["systems"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reports_are_deterministic() {
    let args = ["classify", "node", "--mode", "t3"];
    assert_eq!(stdout(&run(&args)), stdout(&run(&args)));
    let lib = run_cli(std::iter::once("planar-conley").chain(args));
    assert_eq!(lib.stdout, stdout(&run(&args)));
}

#[test]
fn json_carries_full_precision() {
    let o = run(&["--json", "simulate", "node", "--from", "1,0", "--t", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let x = v["endpoint"][0].as_f64().unwrap();
    assert!((x - (-1.0f64).exp()).abs() < 1e-8);
    assert_eq!(v["termination"], "TimeBudget");
}

#[test]
fn invariant_set_round_trips_through_a_file() {
    let dir = scratch_dir("kset");
    let path = dir.join("k.txt");
    let o = run(&[
        "invset",
        "node",
        "--rect",
        "-1,-1,1,1",
        "--res",
        "16",
        "--save",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("isolating: true"));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("rect -1 -1 1 1\nres 16 16\n"));
    let saved = BoxSet::from_text(&text).unwrap();
    assert!(stdout(&o).contains(&format!("boxes: {}", saved.len())));

    // a neighbourhood given as a file: every box of [-0.5, 0.5]^2 at 8x8
    let nbhd = dir.join("n.txt");
    let all: Vec<String> = (0..64).map(|i| i.to_string()).collect();
    std::fs::write(&nbhd, format!("rect -0.5 -0.5 0.5 0.5\nres 8 8\n{}\n", all.join(" "))).unwrap();
    let o = run(&[
        "classify",
        "node",
        "--mode",
        "trichotomy",
        "--kset",
        nbhd.to_str().unwrap(),
    ]);
    assert!(stdout(&o).contains("verdict: Attractor"), "{}", stdout(&o));
}

#[test]
fn block_reports_saddle_arcs() {
    let o = run(&["block", "saddle", "--poly", "-1,-1:1,-1:1,1:-1,1"]);
    let out = stdout(&o);
    assert!(out.contains("arcs: 4"));
    assert_eq!(out.matches("label: Exit").count(), 2);
    assert_eq!(out.matches("label: Entrance").count(), 2);
    assert!(out.contains("unresolved: 0"));
}

#[test]
fn config_file_systems() {
    let dir = scratch_dir("config");
    let path = dir.join("spiral.cfg");
    std::fs::write(
        &path,
        "# stable focus\nname = spiral\nfx = -0.2*x - y\nfy = x - 0.2*y\nrect = -1,-1,1,1\nk_rect = -0.4,-0.4,0.4,0.4\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let o = run(&["equilibria", p]);
    let out = stdout(&o);
    assert!(out.contains("count: 1") && out.contains("kind: Sink"), "{out}");
    let o = run(&["classify", p, "--mode", "t3"]);
    assert!(stdout(&o).contains("verdict: GlobalAttractor"), "{}", stdout(&o));

    std::fs::write(&path, "fx = sin(\nfy = x\nrect = -1,-1,1,1\n").unwrap();
    assert_eq!(run(&["equilibria", p]).status.code(), Some(1));
}

#[test]
fn portrait_is_well_formed_svg() {
    let dir = scratch_dir("svg");
    let kset = dir.join("k.txt");
    run(&[
        "invset",
        "radial",
        "--rect",
        "-1.5,-1.5,1.5,1.5",
        "--res",
        "32",
        "--save",
        kset.to_str().unwrap(),
    ]);
    let out = dir.join("radial.svg");
    let o = run(&[
        "portrait",
        "radial",
        "--out",
        out.to_str().unwrap(),
        "--kset",
        kset.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let doc = roxmltree::Document::parse(&text).expect("well-formed XML");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("version"), Some("1.1"));
    let count = |tag: &str| doc.descendants().filter(|n| n.has_tag_name(tag)).count();
    assert_eq!(count("polyline"), 144);
    assert_eq!(count("circle"), 1);
    assert!(count("polygon") >= 1);
    // the background plus the invariant-set boxes
    assert!(count("rect") > 1);
}

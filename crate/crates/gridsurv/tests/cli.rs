use std::path::Path;
use std::process::Command;

use gridsurv::io::plan::write_plan;
use gridsurv_core::model::{fixtures, Design, Dispatch, Element, ExpansionPlan};

fn gridsurv(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gridsurv")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

/// T2 plan building e2 and g2.
fn write_t2_plan(dir: &Path) -> String {
    let t2 = fixtures::t2();
    let plan = ExpansionPlan {
        design: Design::with_builds(&t2, [Element::Generator(1), Element::Branch(1)]),
        dispatch: Dispatch {
            generation: vec![80.0, 0.0],
            flows: vec![40.0, 40.0],
            angles: vec![4.0, 0.0],
        },
        objective: 110.0,
    };
    let path = dir.join("t2-plan.toml");
    std::fs::write(&path, write_plan(&t2, &plan)).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn plan_exit_codes() {
    let (code, out, _) = gridsurv(&["plan", "--case", "t2", "--algo", "cpa", "--k", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("objective 100.000"), "{out}");
    assert!(out.contains("builds g2\n"), "{out}");

    let (code, out, _) = gridsurv(&["plan", "--case", "t2", "--algo", "ef", "--k", "2", "--eps-schedule", "1=0,2=0.05"]);
    assert_eq!(code, 2);
    assert!(out.starts_with("status infeasible"), "{out}");

    let (code, out, _) = gridsurv(&["plan", "--case", "t2", "--algo", "bd", "--k", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("objective 80.000"), "{out}");
}

#[test]
fn limits_exit_with_three() {
    let (code, out, _) = gridsurv(&["plan", "--case", "t3-cand", "--algo", "cpa", "--k", "2", "--time-limit", "1e-9"]);
    assert_eq!(code, 3, "{out}");
    assert!(out.starts_with("status time_limit"), "{out}");
}

#[test]
fn bad_flags_exit_with_one() {
    for args in [
        &["plan", "--case", "t2", "--algo", "simplex", "--k", "1"][..],
        &["plan", "--case", "t2", "--algo", "ef"],
        &[
            "plan",
            "--case",
            "t2",
            "--algo",
            "ef",
            "--k",
            "1",
            "--eps",
            "0.1",
            "--eps-schedule",
            "1=0",
        ],
        &["plan", "--case", "t2", "--algo", "ef", "--k", "2", "--eps-schedule", "2=oops"],
        &["plan", "--case", "t2", "--algo", "ef", "--k", "1", "--eps", "1.5"],
        &["enumerate", "--k", "2"],
        &["frobnicate"],
    ] {
        let (code, _, err) = gridsurv(args);
        assert_eq!(code, 1, "{args:?}");
        assert!(!err.is_empty(), "{args:?}");
    }
    let (code, _, err) = gridsurv(&["plan", "--case", "missing.toml", "--algo", "ef", "--k", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("missing.toml"), "{err}");
    let (code, out, _) = gridsurv(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("Usage"));
}

#[test]
fn separate_reports_compliance() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_t2_plan(dir.path());

    let (code, out, _) = gridsurv(&["separate", "--case", "t2", "--plan", &plan, "--k", "1", "--eps", "0"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("compliant, worst shed 0.000"), "{out}");

    let (code, out, _) = gridsurv(&["separate", "--case", "t2", "--plan", &plan, "--k", "2", "--eps", "0.05"]);
    assert_eq!(code, 4);
    assert!(out.starts_with("violated by {g1,g2}, shed 80.000 above limit 4.000"), "{out}");

    let (code, out, _) = gridsurv(&["separate", "--case", "t2", "--plan", &plan, "--k", "0", "--eps", "0"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("compliant, worst shed 0.000"), "{out}");
}

#[test]
fn enumerate_counts() {
    for (args, expected) in [
        (&["enumerate", "--n", "152", "--k", "2"][..], "11628"),
        (&["enumerate", "--n", "110", "--k", "1"], "110"),
        (&["enumerate", "--n", "5", "--k", "0"], "0"),
        (&["enumerate", "--case", "t2", "--k", "2"], "10"),
        (&["enumerate", "--n", "1000", "--k", "9"], "2682328502098534222075"),
    ] {
        let (code, out, _) = gridsurv(args);
        assert_eq!(code, 0);
        assert_eq!(out.trim(), expected, "{args:?}");
    }
}

#[test]
fn plan_and_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    let report = dir.path().join("report.csv");
    let run = |algo: &str| {
        gridsurv(&[
            "plan",
            "--case",
            "t2",
            "--algo",
            algo,
            "--k",
            "1",
            "--out",
            plan.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ])
    };
    for algo in ["ef", "bd", "cpa"] {
        assert_eq!(run(algo).0, 0);
    }
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(
        lines[0],
        "instance,m,k,epsilon,algorithm,runtime_s,iterations,cuts,rmp_s,psip_s,dsp_s,objective,status"
    );
    for (line, algo) in lines[1..].iter().zip(["ef", "bd", "cpa"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[..5], ["t2", "4", "1", "0.000", algo]);
        assert_eq!(cells[11..], ["100.000", "optimal"]);
    }
    let written = std::fs::read_to_string(&plan).unwrap();
    assert!(written.contains("builds = [\"g2\"]"), "{written}");
    let (code, _, _) = gridsurv(&[
        "separate",
        "--case",
        "t2",
        "--plan",
        plan.to_str().unwrap(),
        "--k",
        "1",
        "--eps",
        "0",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let strip = |path: &Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                let mut c: Vec<&str> = l.split(',').collect();
                for i in [5, 8, 9, 10] {
                    c[i] = "";
                }
                c.join(",")
            })
            .collect()
    };
    let mut reports = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("r{i}.csv"));
        let args = [
            "plan",
            "--case",
            "t3-cand",
            "--algo",
            "bd",
            "--k",
            "1",
            "--threads",
            "3",
            "--report",
            path.to_str().unwrap(),
        ];
        assert_eq!(gridsurv(&args).0, 0);
        reports.push(strip(&path));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn convert_writes_a_readable_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ieee30-aug.toml");
    let (code, _, _) = gridsurv(&["convert", "--case", "ieee30", "--augment", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, count, _) = gridsurv(&["enumerate", "--case", out.to_str().unwrap(), "--k", "1"]);
    assert_eq!(code, 0);
    assert_eq!(count.trim(), "94");
    let parsed = gridsurv::io::case::parse_case(&std::fs::read_to_string(&out).unwrap(), Default::default()).unwrap();
    assert_eq!(parsed.system, gridsurv::cases::ieee30_augmented());

    let m = dir.path().join("case30.m");
    std::fs::write(&m, gridsurv::cases::CASE30).unwrap();
    let (code, text, _) = gridsurv(&["convert", "--case", m.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(text.contains("id = \"e41\""));
}

#[test]
fn lenient_mode_accepts_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t2.toml");
    let text = gridsurv::io::case::write_case(&fixtures::t2()).replacen("[params]", "[params]\nnote = \"x\"", 1);
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let (code, _, err) = gridsurv(&["plan", "--case", p, "--algo", "ef", "--k", "0"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown field `params.note`"), "{err}");
    let (code, out, err) = gridsurv(&["plan", "--case", p, "--lenient", "--algo", "ef", "--k", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("objective 80.000"));
    assert!(err.contains("params.note"), "{err}");
}

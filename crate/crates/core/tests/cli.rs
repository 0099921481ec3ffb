use std::fs;
use std::path::Path;
use std::process::Command;

use ffdreg::cli::{main_with_args, MetricRow};
use ffdreg::image::write_png;
use ffdreg::synthbench::procedural_texture;

fn ffdreg(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("ffdreg").chain(args.iter().copied()))
}

fn rows(path: &Path) -> Vec<MetricRow> {
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<Vec<MetricRow>, _>>()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--population", "20", "--budget", "400", "--levels", "2"];

#[test]
fn register_self_registration_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("tex.png");
    write_png(&procedural_texture(80, 80, 2).unwrap(), &img).unwrap();
    let out = dir.path().join("run");
    let mut args = vec![
        "register", "--template", s(&img), "--target", s(&img), "--algo", "ga", "--seed", "0,1,2,3,4",
        "--lattice", "5x5", "--range", "2", "--out", s(&out),
    ];
    args.extend_from_slice(SMALL);
    assert_eq!(ffdreg(&args), 0);

    let results: Vec<_> = (0..5).map(|k| out.join(format!("seed-{k}/result.json"))).collect();
    assert!(results.iter().all(|p| p.exists()));
    for f in ["best_deformed.png", "best_overlay.png", "best_mesh.png", "best_mesh.json"] {
        assert!(out.join("seed-0").join(f).exists(), "{f}");
    }
    // GA runs have no post-processed output.
    assert!(!out.join("seed-0/post_mesh.json").exists());

    let r = rows(&out.join("metrics.csv"));
    assert_eq!(r.len(), 5 + 3);
    let labels: Vec<&str> = r[5..].iter().map(|r| r.seed.as_str()).collect();
    assert_eq!(labels, ["min", "max", "mean"]);
    assert!(r.iter().all(|r| r.solution == "best" && r.wall_ms.is_none()));
    let mean: f64 = r[..5].iter().map(|r| r.rmse).sum::<f64>() / 5.0;
    assert!((r[7].rmse - mean).abs() < 1e-12);
    assert!(r[..5].iter().all(|r| r.rmse < 2.0), "{:?}", r.iter().map(|r| r.rmse).collect::<Vec<_>>());

    let mesh: ffdreg::ffd::ControlMesh =
        serde_json::from_str(&fs::read_to_string(out.join("seed-0/best_mesh.json")).unwrap()).unwrap();
    assert!(mesh.max_abs_component() <= 2.0);

    // Identical reruns give identical CSV bytes; writing needs --force.
    let again = dir.path().join("again");
    let mut args2 = args.clone();
    let pos = args2.iter().position(|a| *a == s(&out)).unwrap();
    args2[pos] = s(&again);
    assert_eq!(ffdreg(&args2), 0);
    assert_eq!(fs::read(out.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(ffdreg(&args2), 1);
    args2.push("--force");
    assert_eq!(ffdreg(&args2), 0);
}

#[test]
fn register_multi_objective_with_ground_truth_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let synth = dir.path().join("cases");
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{"base_size": 120, "template_size": 60, "cases": [
            {"image": "procedural:1", "kind": "both", "lattice": [5, 5], "range": 3.0}
        ]}"#,
    )
    .unwrap();
    assert_eq!(ffdreg(&["synth", "--manifest", s(&manifest), "--out", s(&synth)]), 0);
    let case = synth.join("case-00-procedural-1-both-5x5-r3");
    assert!(case.join("gt_mesh.json").exists());

    let out = dir.path().join("reg");
    let (tpl, tgt, gt) = (case.join("template.png"), case.join("target.png"), case.join("gt_mesh.json"));
    let mut args = vec![
        "register",
        "--template", s(&tpl),
        "--target", s(&tgt),
        "--gt", s(&gt),
        "--algo", "nsga3", "--groups", "4",
        "--lattice", "5x5", "--range", "3", "--seed", "7",
        "--dump-levels", "--out", s(&out),
    ];
    args.extend_from_slice(SMALL);
    assert_eq!(ffdreg(&args), 0);
    let r = rows(&out.join("metrics.csv"));
    assert_eq!(r.len(), 2 + 2 * 3);
    assert_eq!((r[0].solution.as_str(), r[1].solution.as_str()), ("best", "post"));
    assert!(r.iter().all(|r| r.mede.is_some() && r.groups == 4));
    for f in ["levels/level-1.json", "levels/level-2-fronts.csv", "post_mesh.json", "post_overlay.png"] {
        assert!(out.join("seed-7").join(f).exists(), "{f}");
    }
    let fronts = fs::read_to_string(out.join("seed-7/levels/level-2-fronts.csv")).unwrap();
    assert!(fronts.starts_with("generation,member,f1,f2,f3,f4,rank"));

    let bin = env!("CARGO_BIN_EXE_ffdreg");
    let o = Command::new(bin)
        .args(["eval", "--mesh", s(&out.join("seed-7/best_mesh.json"))])
        .args(["--template", s(&case.join("template.png")), "--target", s(&case.join("target.png"))])
        .args(["--gt", s(&case.join("gt_mesh.json"))])
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let line = text.lines().nth(1).unwrap();
    let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
    assert!((v[0] - r[0].rmse).abs() < 1e-9);
}

#[test]
fn bench_rows_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{"base_size": 160, "template_size": 80, "cases": [
            {"image": "procedural:4", "kind": "vertical", "lattice": [5, 5], "range": 3.0}
        ]}"#,
    )
    .unwrap();
    let out = dir.path().join("ga");
    let mut args = vec!["bench", "--manifest", s(&manifest), "--algo", "ga", "--seed", "0,1", "--out", s(&out)];
    args.extend_from_slice(SMALL);
    assert_eq!(ffdreg(&args), 0);
    let r = rows(&out.join("bench.csv"));
    assert_eq!(r.len(), 3);
    assert_eq!(r[2].seed, "mean");
    assert!(((r[0].rmse + r[1].rmse) / 2.0 - r[2].rmse).abs() < 1e-12);
    assert!(((r[0].mede.unwrap() + r[1].mede.unwrap()) / 2.0 - r[2].mede.unwrap()).abs() < 1e-12);
    assert_eq!(rows(&out.join("summary.csv")).len(), 3);

    let out2 = dir.path().join("nsga2");
    let mut args = vec!["bench", "--manifest", s(&manifest), "--algo", "nsga2", "--seed", "0,1", "--out", s(&out2)];
    args.extend_from_slice(SMALL);
    assert_eq!(ffdreg(&args), 0);
    let r = rows(&out2.join("bench.csv"));
    let sols: Vec<&str> = r.iter().map(|r| r.solution.as_str()).collect();
    assert_eq!(sols, ["best", "post", "best", "post", "best", "post"]);
    let header = fs::read_to_string(out2.join("bench.csv")).unwrap();
    assert!(header.starts_with("image,kind,lattice,range,algo,groups,seed,solution,rmse,mede,wall_ms\n"));
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("tex.png");
    write_png(&procedural_texture(64, 64, 5).unwrap(), &img).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "algorithms = [\"nsga2\"]\nlattice = [5, 5]\nrange = 2.0\nlevels = 1\nbudget = 100\npopulation = 10\nseeds = [3]\ntemplate = {:?}\ntarget = {:?}\n",
            s(&img),
            s(&img)
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    assert_eq!(ffdreg(&["register", "--config", s(&cfg), "--seed", "8", "--out", s(&out)]), 0);
    assert!(out.join("seed-8/result.json").exists() && !out.join("seed-3").exists());
    let resolved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["lattice"], serde_json::json!([5, 5]));
    assert_eq!(resolved["stride"], serde_json::json!(5));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("tex.png");
    write_png(&procedural_texture(64, 64, 5).unwrap(), &img).unwrap();
    let out = dir.path().join("o");
    let bin = env!("CARGO_BIN_EXE_ffdreg");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();

    assert_eq!(code(&["register", "--template", "/nonexistent.png", "--target", s(&img), "--out", s(&out)]), 2);
    assert_eq!(code(&["bench", "--manifest", "/nonexistent.json", "--out", s(&out)]), 2);
    assert_eq!(code(&["register", "--template", s(&img), "--target", s(&img), "--algo", "ga", "--groups", "2", "--out", s(&out)]), 1);
    assert_eq!(code(&["register", "--template", s(&img), "--target", s(&img), "--groups", "3", "--out", s(&out)]), 1);
    assert_eq!(code(&["register", "--template", s(&img), "--target", s(&img), "--lattice", "8x8", "--out", s(&out)]), 1);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "lattice = \"seven\"\n").unwrap();
    assert_eq!(code(&["register", "--config", s(&bad), "--out", s(&out)]), 1);
    assert!(!out.exists());
}

#[test]
fn synth_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid");
    assert_eq!(ffdreg(&["synth", "--out", s(&out)]), 0);
    let m: ffdreg::synthbench::CaseManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.cases.len(), 40);
    let dirs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 40);
    let t = ffdreg::image::read_image(out.join("case-00-procedural-0-vertical-7x7-r5/template.png")).unwrap();
    assert_eq!((t.width(), t.height()), (160, 160));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nbbox_cli::{augment_label, parse_grid, run_analyze, run_augment, run_eval, run_sweep, sweep_csv, AugmentOptions};
use nbbox_core::annotations::read_dota_annotations;
use nbbox_core::eval::ApMode;
use nbbox_core::transform::NoiseConfig;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn nbbox() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nbbox"));
    c.env_remove("NBBOX_SEED");
    c
}

fn opts(ann: &Path, out: &Path, config: NoiseConfig, seed: u64) -> AugmentOptions {
    AugmentOptions { ann_dir: ann.into(), out_dir: out.into(), config, seed, epoch_tag: String::new(), clip: None, jobs: Some(2) }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v.into_iter().map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())).collect()
}

/// Writes each annotation as a score-1 detection into per-category files.
fn gt_as_detections(ann: &Path, det: &Path) {
    let mut by_class: std::collections::BTreeMap<String, String> = Default::default();
    for path in nbbox_cli::list_txt_files(ann).unwrap() {
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        let f = read_dota_annotations(&fs::read_to_string(&path).unwrap(), &stem).unwrap();
        for obj in &f.objects {
            let coords: Vec<String> = obj.quad.iter().map(|v| v.to_string()).collect();
            by_class.entry(obj.record.category.clone()).or_default().push_str(&format!("{stem} 1.0 {}\n", coords.join(" ")));
        }
    }
    fs::create_dir_all(det).unwrap();
    for (class, text) in by_class {
        fs::write(det.join(format!("Task1_{class}.txt")), text).unwrap();
    }
}

#[test]
fn default_seed42_matches_golden_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let summary = run_augment(&opts(&fixtures().join("ann"), &out, NoiseConfig::default(), 42)).unwrap();
    assert!(summary.success());
    let golden = fixtures().join("golden-seed42");
    if std::env::var_os("NBBOX_BLESS").is_some() {
        for (name, bytes) in read_dir_sorted(&out) {
            fs::write(golden.join(name), bytes).unwrap();
        }
    }
    assert_eq!(read_dir_sorted(&out), read_dir_sorted(&golden));
}

#[test]
fn summary_counts_match_the_files() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = fixtures().join("ann");
    let summary = run_augment(&opts(&ann, tmp.path(), NoiseConfig::default(), 1)).unwrap();
    let files = nbbox_cli::list_txt_files(&ann).unwrap();
    let mut records = 0;
    let mut gated = 0;
    for p in &files {
        let f = read_dota_annotations(&fs::read_to_string(p).unwrap(), "x").unwrap();
        records += f.objects.len();
        gated += f.records().iter().filter(|r| NoiseConfig::default().is_gated(&r.bbox)).count();
    }
    assert_eq!((summary.files, summary.records, summary.gated), (files.len(), records, gated));
    assert_eq!(summary.to_string(), format!("{} files, {records} records, {gated} gated", files.len()));
}

#[test]
fn binary_augment_is_identity_with_stages_off_and_reports_empty_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("off.toml");
    fs::write(&cfg, NoiseConfig::disabled().to_toml_string()).unwrap();
    let out = tmp.path().join("out");
    let run = nbbox()
        .args(["augment", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--ann-dir")
        .arg(fixtures().join("ann"))
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_dir_sorted(&out), read_dir_sorted(&fixtures().join("ann")));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let run = nbbox().arg("augment").arg("--ann-dir").arg(&empty).arg("--out-dir").arg(tmp.path().join("o2")).output().unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("0 files"));
}

#[test]
fn bad_file_fails_exit_but_others_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = tmp.path().join("ann");
    fs::create_dir_all(ann.join("sub")).unwrap();
    fs::copy(fixtures().join("ann/P2001.txt"), ann.join("good.txt")).unwrap();
    fs::copy(fixtures().join("ann/P1088.txt"), ann.join("sub/nested.txt")).unwrap();
    fs::write(ann.join("bad.txt"), "1 2 3 4 5 6 7 plane 0\n").unwrap();
    fs::write(ann.join("notes.md"), "ignored").unwrap();
    let out = tmp.path().join("out");
    let run = nbbox().arg("augment").arg("--ann-dir").arg(&ann).arg("--out-dir").arg(&out).output().unwrap();
    assert!(!run.status.success());
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("bad.txt") && stderr.contains("bad:1"), "{stderr}");
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("3 files"));
    assert!(out.join("good.txt").exists() && out.join("sub/nested.txt").exists());
    assert!(!out.join("bad.txt").exists());
}

#[test]
fn seed_comes_from_env_and_epoch_tag_changes_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = fixtures().join("ann");
    let run = |dir: &str, env: Option<&str>, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let mut c = nbbox();
        c.arg("augment").arg("--ann-dir").arg(&ann).arg("--out-dir").arg(&out).args(extra);
        if let Some(s) = env {
            c.env("NBBOX_SEED", s);
        }
        assert!(c.status().unwrap().success());
        read_dir_sorted(&out)
    };
    let flag = run("a", None, &["--seed", "42"]);
    assert_eq!(run("b", Some("42"), &[]), flag);
    assert_eq!(run("c", Some("7"), &["--seed", "42"]), flag);
    assert_ne!(run("d", None, &[]), flag);
    assert_ne!(run("e", None, &["--seed", "42", "--epoch-tag", "3"]), flag);
    assert_eq!(augment_label("P1.txt", ""), "P1.txt");
    assert_ne!(augment_label("P1.txt", "3"), augment_label("P1.txt3", ""));
}

#[test]
fn clip_keeps_boxes_inside_image() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = tmp.path().join("ann");
    fs::create_dir(&ann).unwrap();
    fs::write(ann.join("edge.txt"), "0 0 40 0 40 30 0 30 ship 0\n960 970 1000 970 1000 1000 960 1000 ship 0\n").unwrap();
    let cfg = NoiseConfig { t_min: -5, t_max: 5, isotropic_translate: false, gamma: 0, ..NoiseConfig::default() };
    for seed in 0..20 {
        let out = tmp.path().join(format!("o{seed}"));
        let o = AugmentOptions { clip: Some((1000.0, 1000.0)), ..opts(&ann, &out, cfg.clone(), seed) };
        assert!(run_augment(&o).unwrap().success());
        let f = read_dota_annotations(&fs::read_to_string(out.join("edge.txt")).unwrap(), "edge").unwrap();
        for obj in &f.objects {
            for p in obj.quad_points() {
                // written at one decimal
                assert!((-0.05..=1000.05).contains(&p.x) && (-0.05..=1000.05).contains(&p.y), "{p:?}");
            }
        }
    }
}

#[test]
fn eval_on_ground_truth_prints_perfect_map() {
    let tmp = tempfile::tempdir().unwrap();
    let det = tmp.path().join("det");
    gt_as_detections(&fixtures().join("ann"), &det);
    let report = run_eval(&fixtures().join("ann"), &det, 0.5, ApMode::AllPoint).unwrap();
    assert_eq!(report.map_score, 1.0);

    let run = nbbox().arg("eval").arg("--ann-dir").arg(fixtures().join("ann")).arg("--det-dir").arg(&det).output().unwrap();
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).contains("mAP 1.0000"));

    let run = nbbox()
        .args(["eval", "--json", "--mode", "all", "--iou", "0.7", "--ann-dir"])
        .arg(fixtures().join("ann"))
        .arg("--det-dir")
        .arg(&det)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v["map"], 1.0);
    assert_eq!(v["mode"], "all");
    assert!(v["per_class"]["plane"]["ap"].is_number());

    let run = nbbox().args(["eval", "--mode", "bogus", "--ann-dir", "x", "--det-dir", "y"]).output().unwrap();
    assert!(!run.status.success());
}

#[test]
fn analyze_rectangles_have_mean_iou_one() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = tmp.path().join("ann");
    fs::create_dir(&ann).unwrap();
    fs::write(ann.join("r.txt"), "0 0 10 0 10 5 0 5 a 0\n20 20 40 40 30 50 10 30 b 0\n").unwrap();
    assert!((run_analyze(&ann).unwrap().mean_iou - 1.0).abs() < 1e-12);

    let out = tmp.path().join("report.json");
    let run = nbbox().arg("analyze").arg("--ann-dir").arg(&ann).arg("--out").arg(&out).output().unwrap();
    assert!(run.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["per_record"].as_array().unwrap().len(), 2);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let grid = parse_grid("[[grid]]\nt_min = -1\nt_max = 1\n\n[[grid]]\nt_min = -20\nt_max = 20\n").unwrap();
    let res = run_sweep(&fixtures().join("ann"), &grid, 3, 2).unwrap();
    let csv = sweep_csv(&res).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].ends_with("gamma,mean_self_iou,p05_self_iou,frac_gated"));
    assert!(res.grid[0].mean_self_iou > res.grid[1].mean_self_iou);
    assert!(parse_grid("[[grid]]\nbogus = 1\n").is_err());
    assert!(parse_grid("grid = []\n").is_err());

    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("grid.toml");
    fs::write(&g, "[[grid]]\n[[grid]]\ngamma = 0\n").unwrap();
    let out = tmp.path().join("sweep.csv");
    let run = |seed: &str| {
        let st = nbbox()
            .args(["sweep", "--trials", "2", "--seed", seed, "--grid"])
            .arg(&g)
            .arg("--ann-dir")
            .arg(fixtures().join("ann"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(st.success());
        fs::read_to_string(&out).unwrap()
    };
    let first = run("5");
    assert_eq!(first.lines().count(), 3);
    assert_eq!(run("5"), first);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    assert_eq!(nbbox_cli::load_config(Some(&dir.join("default.toml"))).unwrap(), NoiseConfig::default());
    assert_eq!(nbbox_cli::load_config(Some(&dir.join("identity.toml"))).unwrap(), NoiseConfig::disabled());
    let grid = parse_grid(&fs::read_to_string(dir.join("translation-sweep.toml")).unwrap()).unwrap();
    assert_eq!(grid.iter().map(|c| c.t_max).collect::<Vec<_>>(), [1, 5, 10, 20, 30]);
}

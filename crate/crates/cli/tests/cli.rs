use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY_MODEL: &str = r#"
name = "tiny"

[[layer]]
name = "stem"
kind = "conv"
n_in = 3
n_out = 8
k = 3
h = 16
w = 16
pad = 1

[[layer]]
name = "b1.conv"
kind = "conv"
n_in = 8
n_out = 20
k = 3
h = 16
w = 16
pad = 1
group = 1

[[layer]]
name = "b1.proj"
kind = "conv"
n_in = 20
n_out = 12
k = 2
h = 16
w = 16
stride = 2
group = 1

[[layer]]
name = "fc"
kind = "fc"
n_in = 12
n_out = 10
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ovsfgen"))
        .args(args)
        .env_remove("OVSFGEN_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.toml"), TINY_MODEL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.s(name)
    }

    fn compressed(&self, schedule: &str) -> String {
        let model = self.s("tiny.toml");
        let w = self.s("w.bin");
        let c = self.s("c.bin");
        assert!(run(&["gen-weights", "--model", &model, "--seed", "4", "--out", &w]).status.success());
        let o = run(&["compress", "--model", &model, "--schedule", schedule, "--weights", &w, "--container", &c]);
        assert!(o.status.success(), "{}", stderr(&o));
        c
    }
}

#[test]
fn compress_reports_counts_and_errors() {
    let w = Work::new();
    let sched = w.write("full.toml", "name = \"full\"\nratios = [1.0, 1.0]\n");
    w.compressed(&sched);
    let o = run(&["compress", "--model", &w.s("tiny.toml"), "--schedule", &sched, "--weights", &w.s("w.bin"), "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# original_params: "), "{text}");
    for line in text.lines().filter(|l| l.starts_with("b1.")) {
        let err: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(err < 1e-5, "{line}");
    }
}

#[test]
fn resnet34_original_count() {
    let w = Work::new();
    let weights = w.s("r34.bin");
    assert!(run(&["gen-weights", "--model", "resnet34", "--out", &weights]).status.success());
    let o = run(&["compress", "--model", "resnet34", "--schedule", "ovsf25", "--weights", &weights, "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let original: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# original_params: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((original / 21.8e6 - 1.0).abs() < 0.01, "{original}");
}

#[test]
fn missing_weights_is_usage_error() {
    let w = Work::new();
    let o = run(&["compress", "--model", &w.s("tiny.toml"), "--weights", &w.s("nope.bin")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn simulate_passes_in_both_modes_and_writes_traces() {
    let w = Work::new();
    let c = w.compressed("ovsf50");
    for mode in ["float", "fixed16"] {
        let traces = w.path(&format!("traces-{mode}"));
        let o = run(&[
            "simulate", "--model", &w.s("tiny.toml"), "--weights", &c, "--sigma", "12,4,20,8", "--mode", mode,
            "--trace-dir", &traces.display().to_string(), "--format", "csv",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains("# result: PASS"), "{text}");
        assert!(!text.contains("FAIL"));
        let trace = std::fs::read_to_string(traces.join("b1.conv.csv")).unwrap();
        assert!(trace.starts_with("tile,p_tile,c_tile,cycles,subtiles\n"));
    }
}

#[test]
fn simulate_rejects_per_filter_and_pool_fixed() {
    let w = Work::new();
    let per_filter = w.write("pf.toml", "name = \"pf\"\nratios = [1.0, 0.5]\nselection = \"per_filter\"\n");
    let c = w.compressed(&per_filter);
    let o = run(&["simulate", "--model", &w.s("tiny.toml"), "--weights", &c, "--sigma", "8,4,8,8"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported"), "{}", stderr(&o));

    let pool = w.write("pool.toml", "name = \"pool\"\nratios = [1.0, 0.5]\nrepr_3x3 = \"pool4\"\n");
    let c = w.compressed(&pool);
    let args = ["simulate", "--model", &w.s("tiny.toml"), "--weights", &c, "--sigma", "8,4,8,8", "--layer", "b1.conv"];
    assert!(run(&args).status.success());
    let mut fixed = args.to_vec();
    fixed.extend(["--mode", "fixed16"]);
    assert_eq!(run(&fixed).status.code(), Some(2));
}

#[test]
fn estimate_and_dse_outputs() {
    let w = Work::new();
    let o = run(&["estimate", "--model", "resnet18", "--schedule", "ovsf50", "--sigma", "128,32,8,64", "--bw", "1x", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# variant: ovsf") && text.contains("# feasible: yes"), "{text}");
    assert!(text.lines().last().unwrap().starts_with("total,"));

    let space = w.write("space.toml", "m = [64, 256]\nt_r = [16, 64]\nt_p = [4, 8]\nt_c = [32, 64]\n");
    let top = w.s("top.csv");
    let o = run(&[
        "dse", "--model", "resnet18", "--variant", "baseline", "--space", &space, "--top-k", "3", "--format", "csv", "--out", &top,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&top).unwrap();
    assert!(csv.contains("# space_total: 8\n"), "{csv}");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn report_is_reproducible_and_single_row() {
    let w = Work::new();
    let space = w.write("space.toml", "m = [64, 256]\nt_r = [16, 64]\nt_p = [4, 8]\nt_c = [32, 64, 128]\n");
    let args = ["report", "--model", "resnet34", "--schedule", "ovsf50", "--bw", "4.5", "--space", &space, "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("# seed: 5\n"));
    let speed_rows = text.lines().filter(|l| l.starts_with("| 4.5 ")).count();
    assert_eq!(speed_rows, 1, "{text}");
}

#[test]
fn unknown_platform_and_bad_sigma_exit_2() {
    let o = run(&["estimate", "--model", "resnet18", "--platform", "vu9p", "--sigma", "1,1,1,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("vu9p"));
    let o = run(&["estimate", "--model", "resnet18", "--sigma", "1,1,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["estimate", "--model", "resnet18", "--sigma", "1,1,1,1", "--bw", "-3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_dir_from_environment() {
    let w = Work::new();
    let o = Command::new(env!("CARGO_BIN_EXE_ovsfgen"))
        .args(["estimate", "--model", "tiny", "--sigma", "16,8,8,8", "--format", "csv"])
        .env("OVSFGEN_CONFIG_DIR", w.dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("# model: tiny"));
    assert!(!Path::new("tiny").exists());
}

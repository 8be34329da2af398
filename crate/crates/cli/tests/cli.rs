//! End-to-end tests through the compiled binary: pipeline wiring, exit
//! codes, artifact cross-checks, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpntk_cli::commands::{ClusterArtifact, PruneArtifact, RedundantArtifact};
use lpntk_cli::formats::{sha256_file, write_kernel};
use lpntk_core::analysis::prune_pipeline;
use lpntk_core::kernel::{KernelKind, KernelMatrix};
use lpntk_core::numerics::Rng;
use tempfile::TempDir;

fn lpntk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpntk"))
        .args(args)
        .env_remove("LPNTK_CACHE_BYTES")
        .output()
        .expect("binary runs")
}

fn lpntk_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpntk"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, out_dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "dataset": {{"source": "synthetic", "classes": 2, "n_per_class": 12, "dim": 6, "cluster_std": 0.15}},
  "model": {{"layer_widths": [6, 10, 2], "epochs": 4, "batch_size": 8, "lr": 0.3}},
  "out_dir": {out:?},
  "seed": {seed}
}}"#,
        out = out_dir.to_str().unwrap(),
        seed = seed
    );
    fs::write(&path, text).unwrap();
    path
}

fn read_to_string(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn pipeline_runs_and_artifacts_cross_check() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, 5);
    let cfg = config.to_str().unwrap();

    assert_ok(&lpntk(&["train", "--config", cfg]));
    for name in [
        "checkpoint.lpw",
        "losses.csv",
        "accuracy.csv",
        "dataset.json",
        "config.json",
        "train.manifest.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let ckpt = out.join("checkpoint.lpw");
    let kernel_file = out.join("kernel.lpk");
    let data = out.join("dataset.json");
    assert_ok(&lpntk(&[
        "kernel",
        "--config",
        cfg,
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "lpntk",
        "--out",
        kernel_file.to_str().unwrap(),
    ]));
    assert!(kernel_file.exists());
    assert!(out.join("kernel.csv").exists());

    assert_ok(&lpntk(&[
        "cluster",
        "--config",
        cfg,
        "--kernel",
        kernel_file.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "-M",
        "3",
    ]));
    let clusters: ClusterArtifact =
        serde_json::from_str(&read_to_string(&out.join("clusters.json"))).unwrap();
    assert_eq!(clusters.m, 3);
    assert_eq!(
        clusters.kernel_fingerprint,
        hex::encode(sha256_file(&ckpt).unwrap()),
        "cluster fingerprint must match the checkpoint digest"
    );
    let covered: usize = clusters.clusters.iter().map(Vec::len).sum();
    assert_eq!(covered, 24);

    assert_ok(&lpntk(&[
        "redundant",
        "--config",
        cfg,
        "--kernel",
        kernel_file.to_str().unwrap(),
    ]));
    let red: RedundantArtifact =
        serde_json::from_str(&read_to_string(&out.join("redundant.json"))).unwrap();
    assert_eq!(red.n, 24);
    assert_eq!(red.count, red.redundant.len());

    assert_ok(&lpntk(&[
        "prune",
        "--config",
        cfg,
        "--kernel",
        kernel_file.to_str().unwrap(),
        "-M",
        "3",
    ]));
    assert!(out.join("prune.json").exists());

    assert_ok(&lpntk(&["report", "--config", cfg]));
    let report = read_to_string(&out.join("report.csv"));
    assert!(report.lines().count() > 4, "report should list artifacts:\n{report}");
    assert!(report.contains("clusters,m,3"));
    assert!(report.contains("redundant,n,24"));
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, 11);
    let cfg = config.to_str().unwrap();
    let ckpt = out.join("checkpoint.lpw");
    let kernel_file = out.join("kernel.lpk");

    let run_all = || {
        assert_ok(&lpntk(&["train", "--config", cfg]));
        assert_ok(&lpntk(&[
            "kernel",
            "--config",
            cfg,
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--out",
            kernel_file.to_str().unwrap(),
        ]));
        assert_ok(&lpntk(&[
            "cluster",
            "--config",
            cfg,
            "--kernel",
            kernel_file.to_str().unwrap(),
            "-M",
            "2",
        ]));
        assert_ok(&lpntk(&["report", "--config", cfg]));
    };
    run_all();
    let names: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    let snapshot: Vec<(String, Vec<u8>)> = names
        .iter()
        .map(|n| (n.clone(), fs::read(out.join(n)).unwrap()))
        .collect();
    run_all();
    for (name, bytes) in &snapshot {
        let again = fs::read(out.join(name)).unwrap();
        assert_eq!(&again, bytes, "{name} changed across identical reruns");
    }

    // a different seed must actually change the numbers
    let kernel_before = fs::read(&kernel_file).unwrap();
    assert_ok(&lpntk(&["train", "--config", cfg, "--seed", "12"]));
    assert_ok(&lpntk(&[
        "kernel",
        "--config",
        cfg,
        "--seed",
        "12",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        kernel_file.to_str().unwrap(),
    ]));
    assert_ne!(fs::read(&kernel_file).unwrap(), kernel_before);
}

#[test]
fn kernel_bytes_ignore_threads_and_cache_budget() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, 3);
    let cfg = config.to_str().unwrap();
    assert_ok(&lpntk(&["train", "--config", cfg]));
    let ckpt = out.join("checkpoint.lpw");
    let kernel_file = out.join("kernel.lpk");
    let base_args = [
        "kernel",
        "--config",
        cfg,
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--out",
        kernel_file.to_str().unwrap(),
    ];
    assert_ok(&lpntk(&base_args));
    let reference = fs::read(&kernel_file).unwrap();
    let reference_csv = fs::read(out.join("kernel.csv")).unwrap();

    let mut threaded = base_args.to_vec();
    threaded.extend(["--threads", "4"]);
    assert_ok(&lpntk(&threaded));
    assert_eq!(fs::read(&kernel_file).unwrap(), reference);
    assert_eq!(fs::read(out.join("kernel.csv")).unwrap(), reference_csv);

    // starve the cache so the blocked path runs
    assert_ok(&lpntk_env(&base_args, "LPNTK_CACHE_BYTES", "64"));
    assert_eq!(fs::read(&kernel_file).unwrap(), reference);
    // malformed budget is a config error
    assert_code(&lpntk_env(&base_args, "LPNTK_CACHE_BYTES", "not-a-number"), 2);
}

/// Ten samples: a six-strong tight block {0,1,3,4,5,6}, sample 2 shadowed
/// by sample 1, and three loners 7, 8, 9.
fn prune_fixture() -> KernelMatrix {
    let n = 10;
    let block = [0usize, 1, 3, 4, 5, 6];
    let mut full = vec![vec![0.0; n]; n];
    for i in 0..n {
        full[i][i] = 3.0;
    }
    for &i in &block {
        for &j in &block {
            if i != j {
                full[i][j] = 2.5 + 0.01 * (i + j) as f64;
            }
        }
    }
    full[2][2] = 1.0;
    full[2][1] = 2.0;
    full[1][2] = 2.0;
    for &j in &[0usize, 3, 4, 5, 6] {
        full[2][j] = 0.2;
        full[j][2] = 0.2;
    }
    full[7][7] = 2.0;
    full[8][8] = 1.5;
    full[9][9] = 1.2;
    for (a, b, v) in [(7, 8, 0.1), (7, 9, 0.1), (8, 9, 0.05)] {
        full[a][b] = v;
        full[b][a] = v;
    }
    for &i in &block {
        for j in [7, 8, 9] {
            full[i][j] = 0.0;
            full[j][i] = 0.0;
        }
    }
    let mut upper = Vec::new();
    for i in 0..n {
        for j in i..n {
            upper.push(full[i][j]);
        }
    }
    KernelMatrix::from_upper(KernelKind::Lpntk, 2, (0..n as u64).collect(), upper).unwrap()
}

#[test]
fn prune_on_fixture_matches_the_library_trace() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, 5);
    let cfg = config.to_str().unwrap();
    let fixture = prune_fixture();
    let kernel_path = tmp.path().join("fixture.lpk");
    write_kernel(&kernel_path, &fixture).unwrap();

    for frac in ["0.5", "0.10"] {
        assert_ok(&lpntk(&[
            "prune",
            "--config",
            cfg,
            "--kernel",
            kernel_path.to_str().unwrap(),
            "--frac",
            frac,
            "-M",
            "3",
        ]));
        let artifact: PruneArtifact =
            serde_json::from_str(&read_to_string(&out.join("prune.json"))).unwrap();
        let mut rng = Rng::new(5);
        let expected = prune_pipeline(&fixture, 3, frac.parse().unwrap(), &mut rng).unwrap();
        let as_u64 = |v: &[usize]| v.iter().map(|&i| i as u64).collect::<Vec<u64>>();
        assert_eq!(artifact.redundant, vec![2], "frac {frac}");
        assert_eq!(artifact.head_cluster, vec![0, 1, 3, 4, 5, 6]);
        assert_eq!(artifact.pruned, as_u64(&expected.pruned));
        assert_eq!(artifact.retained, as_u64(&expected.retained));
        let want_removed = if frac == "0.5" { 3 } else { 1 };
        assert_eq!(artifact.pruned.len(), want_removed);
        assert_eq!(artifact.retained.len(), 9 - want_removed);
    }
}

#[test]
fn config_problems_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &out, 5);
    let cfg = config.to_str().unwrap();

    // missing config file
    assert_code(&lpntk(&["train", "--config", "/nonexistent/c.json"]), 2);
    // unknown key
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        read_to_string(&config).replace("\"seed\": 5", "\"seed\": 5, \"surprise\": 1"),
    )
    .unwrap();
    assert_code(&lpntk(&["train", "--config", bad.to_str().unwrap()]), 2);
    // unknown kernel kind flag
    assert_ok(&lpntk(&["train", "--config", cfg]));
    let ckpt = out.join("checkpoint.lpw");
    assert_code(
        &lpntk(&[
            "kernel",
            "--config",
            cfg,
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--kind",
            "entk",
        ]),
        2,
    );
    // missing checkpoint path
    assert_code(
        &lpntk(&[
            "kernel",
            "--config",
            cfg,
            "--ckpt",
            out.join("nope.lpw").to_str().unwrap(),
        ]),
        2,
    );
    // bad prune fraction
    assert_ok(&lpntk(&[
        "kernel",
        "--config",
        cfg,
        "--ckpt",
        ckpt.to_str().unwrap(),
    ]));
    let kernel_file = out.join("kernel.lpk");
    assert_code(
        &lpntk(&[
            "prune",
            "--config",
            cfg,
            "--kernel",
            kernel_file.to_str().unwrap(),
            "--frac",
            "1.5",
        ]),
        2,
    );
    // corrupted kernel file
    let mut bytes = fs::read(&kernel_file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x55;
    let corrupt = tmp.path().join("corrupt.lpk");
    fs::write(&corrupt, &bytes).unwrap();
    assert_code(
        &lpntk(&[
            "cluster",
            "--config",
            cfg,
            "--kernel",
            corrupt.to_str().unwrap(),
        ]),
        2,
    );
    // clap usage errors also leave with 2
    assert_code(&lpntk(&["cluster", "--config", cfg]), 2);
    assert_code(&lpntk(&["no-such-command"]), 2);
}

#[test]
fn provenance_mismatches_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let config_a = write_config(tmp.path(), &out_a, 5);
    let cfg_a = config_a.to_str().unwrap();
    assert_ok(&lpntk(&["train", "--config", cfg_a]));
    let ckpt_a = out_a.join("checkpoint.lpw");
    let kernel_a = out_a.join("kernel.lpk");
    assert_ok(&lpntk(&[
        "kernel",
        "--config",
        cfg_a,
        "--ckpt",
        ckpt_a.to_str().unwrap(),
        "--out",
        kernel_a.to_str().unwrap(),
    ]));

    // checkpoint from another seed: fingerprint mismatch
    let config_b = {
        let p = tmp.path().join("config_b.json");
        let text = read_to_string(&config_a)
            .replace("\"seed\": 5", "\"seed\": 6")
            .replace(out_a.to_str().unwrap(), out_b.to_str().unwrap());
        fs::write(&p, text).unwrap();
        p
    };
    assert_ok(&lpntk(&["train", "--config", config_b.to_str().unwrap()]));
    let ckpt_b = out_b.join("checkpoint.lpw");
    assert_code(
        &lpntk(&[
            "cluster",
            "--config",
            cfg_a,
            "--kernel",
            kernel_a.to_str().unwrap(),
            "--ckpt",
            ckpt_b.to_str().unwrap(),
        ]),
        2,
    );

    // dataset manifest from a different seed
    assert_code(
        &lpntk(&[
            "kernel",
            "--config",
            cfg_a,
            "--seed",
            "9",
            "--ckpt",
            ckpt_a.to_str().unwrap(),
            "--data",
            out_a.join("dataset.json").to_str().unwrap(),
        ]),
        2,
    );

    // sidecar provenance: same file, different config hash
    assert_code(
        &lpntk(&[
            "cluster",
            "--config",
            cfg_a,
            "--seed",
            "77",
            "--kernel",
            kernel_a.to_str().unwrap(),
        ]),
        2,
    );

    // report rejects artifacts hashed under another config
    assert_ok(&lpntk(&[
        "cluster",
        "--config",
        cfg_a,
        "--kernel",
        kernel_a.to_str().unwrap(),
    ]));
    assert_ok(&lpntk(&["report", "--config", cfg_a]));
    assert_code(&lpntk(&["report", "--config", cfg_a, "--seed", "8"]), 2);
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    // an output directory that cannot be created
    let out = Path::new("/proc/lpntk-no-such-dir/out");
    let config = write_config(tmp.path(), out, 5);
    assert_code(&lpntk(&["train", "--config", config.to_str().unwrap()]), 1);
}

#[test]
fn gap_and_rl_and_difficulty_commands_produce_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let config_path = tmp.path().join("config.json");
    // small enough to keep this test quick: each class tiles into 4/16/64
    let text = format!(
        r#"{{
  "dataset": {{"source": "synthetic", "classes": 2, "n_per_class": 64, "dim": 6, "cluster_std": 0.15}},
  "model": {{"layer_widths": [6, 8, 2], "epochs": 2, "batch_size": 16, "lr": 0.3, "record_iterations": true}},
  "rl": {{"total_steps": 600, "buffer_capacity": 300, "batch_size": 8, "eval_episodes": 2}},
  "out_dir": {out:?},
  "seed": 2
}}"#,
        out = out.to_str().unwrap()
    );
    fs::write(&config_path, text).unwrap();
    let cfg = config_path.to_str().unwrap();

    assert_ok(&lpntk(&[
        "gap", "--config", cfg, "--widths", "8,16", "--trials", "5",
    ]));
    let gap = read_to_string(&out.join("gap.csv"));
    assert!(gap.lines().count() == 4, "two width rows expected:\n{gap}");
    assert!(out.join("gap.json").exists());

    assert_ok(&lpntk(&["rl", "--config", cfg, "--strategy", "lpntk_max"]));
    let returns = read_to_string(&out.join("returns.csv"));
    assert!(returns.lines().nth(2).is_some(), "curve rows expected:\n{returns}");
    assert!(out.join("rl.json").exists());

    assert_ok(&lpntk(&["difficulty", "--config", cfg]));
    let difficulty = read_to_string(&out.join("difficulty.csv"));
    assert_eq!(difficulty.lines().count(), 5, "header plus three divisors:\n{difficulty}");
    for divisor in ["4,", "16,", "64,"] {
        assert!(difficulty.contains(&format!("\n{divisor}")), "{difficulty}");
    }

    assert_ok(&lpntk(&["forget", "--config", cfg]));
    assert!(out.join("forget.json").exists());

    assert_ok(&lpntk(&["report", "--config", cfg]));
    let report = read_to_string(&out.join("report.csv"));
    for key in ["gap,", "rl,", "difficulty,", "forget,"] {
        assert!(report.contains(key), "missing {key} in report:\n{report}");
    }
}

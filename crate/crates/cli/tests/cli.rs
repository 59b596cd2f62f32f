//! End-to-end checks of the `btpp` binary: exit codes, CSV shape, byte
//! determinism, sweep/run agreement, and the report math, all through the
//! real process boundary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn btpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btpp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn write_temp(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("btpp_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir()
        .join(format!("btpp_cli_{}", std::process::id()))
        .join(name)
}

fn quadratic_config(t: u64, gamma: f64, seeds: &str) -> String {
    format!(
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [topology]\nB = 2\n\n\
         [algorithm]\ntag = \"btpp\"\ngamma = {gamma}\n\n\
         [run]\nT = {t}\nseeds = [{seeds}]\n"
    )
}

#[test]
fn hundred_iterations_at_stride_ten_print_twelve_lines() {
    let cfg = write_temp("twelve.toml", &quadratic_config(100, 0.01, "1"));
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    // header + t = 0, 10, ..., 100; the horizon is on the grid and is not
    // written twice
    assert_eq!(lines.len(), 12, "{text}");
    assert!(lines[0].starts_with("iter,algo,engine,n,B,seed,gamma,"));
    assert!(lines[1].starts_with("0,btpp,matrix,10,2,1,"));
    assert!(lines[11].starts_with("100,btpp,matrix,10,2,1,"));
}

#[test]
fn identical_invocations_produce_identical_bytes() {
    let cfg = write_temp("determinism.toml", &quadratic_config(60, 0.01, "3, 9"));
    let a = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    let b = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    // and --out writes those same bytes to a file
    let out_file = temp_path("determinism.csv");
    let c = btpp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(c.status.success());
    assert_eq!(std::fs::read(&out_file).unwrap(), a.stdout);
}

#[test]
fn desk_scale_logistic_gradient_shrinks_over_the_run() {
    let cfg = write_temp(
        "desk.toml",
        "[problem]\ntype = \"logistic\"\nn = 16\np = 20\nJ = 100\nsigma_h = 0.8\nreg_coeff = 0.01\n\n\
         [topology]\nB = 2\n\n\
         [algorithm]\ntag = \"btpp\"\nkind = \"decayed\"\ngamma = 0.3\ndecay_factor = 0.4\n\
         decay_interval = 100\nrescale_by_n = true\n\n\
         [run]\nT = 500\nseeds = [1]\nstride = 50\n",
    );
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    let grad = |line: &str| -> f64 { line.split(',').nth(7).unwrap().parse().unwrap() };
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert!(grad(lines.last().unwrap()) < grad(lines[0]));
}

#[test]
fn seeds_flag_overrides_the_config_list() {
    let cfg = write_temp("override.toml", &quadratic_config(20, 0.01, "1, 2, 3"));
    let out = btpp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "7",
    ]);
    assert!(out.status.success());
    for line in stdout_of(&out).lines().skip(1) {
        assert_eq!(line.split(',').nth(5).unwrap(), "7");
    }
}

#[test]
fn sweep_rows_match_individual_runs_at_each_coordinate() {
    let sweep_cfg = write_temp(
        "sweep.toml",
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [topology]\nB = [2, 4]\n\n\
         [algorithm]\ntag = \"btpp\"\ngamma = 0.01\n\n\
         [run]\nT = 30\nseeds = [3, 5]\n",
    );
    let swept = btpp(&["sweep", "--config", sweep_cfg.to_str().unwrap()]);
    assert!(swept.status.success(), "{}", stderr_of(&swept));
    let sweep_text = stdout_of(&swept);

    let single_cfg = write_temp(
        "single.toml",
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [topology]\nB = 4\n\n\
         [algorithm]\ntag = \"btpp\"\ngamma = 0.01\n\n\
         [run]\nT = 30\nseeds = [5]\n",
    );
    let single = btpp(&["run", "--config", single_cfg.to_str().unwrap()]);
    assert!(single.status.success());
    let single_text = stdout_of(&single);

    // the sweep's (B = 4, seed 5) block is byte-identical to the run
    let from_sweep: Vec<&str> = sweep_text
        .lines()
        .filter(|l| l.split(',').nth(4) == Some("4") && l.split(',').nth(5) == Some("5"))
        .collect();
    let from_single: Vec<&str> = single_text.lines().skip(1).collect();
    assert_eq!(from_sweep, from_single);

    // coordinates expand B-major over seeds: B=2 twice, then B=4 twice
    let coords: Vec<(String, String)> = sweep_text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[4].to_string(), f[5].to_string())
        })
        .collect();
    assert_eq!(
        coords,
        [("2", "3"), ("2", "5"), ("4", "3"), ("4", "5")]
            .map(|(b, s)| (b.to_string(), s.to_string()))
    );
}

#[test]
fn mixed_sweep_rescales_the_tree_method_only() {
    let cfg = write_temp(
        "mixed.toml",
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [topology]\nB = 2\n\n\
         [algorithm]\ntag = [\"btpp\", \"centralized\", \"dsgd_ring\"]\ngamma = 0.01\n\
         rescale_by_n = true\n\n\
         [run]\nT = 20\nseeds = [1]\n",
    );
    let out = btpp(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for line in stdout_of(&out).lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let (algo, branch, gamma) = (fields[1], fields[4], fields[6]);
        if algo == "btpp" {
            assert_eq!(branch, "2");
            assert_eq!(gamma.parse::<f64>().unwrap(), 0.001); // 0.01 / 10
        } else {
            // no tree, no branch column; baselines keep the plain step
            assert_eq!(branch, "");
            assert_eq!(gamma.parse::<f64>().unwrap(), 0.01);
        }
    }
}

#[test]
fn both_engines_agree_through_the_binary() {
    let matrix_cfg = write_temp("eng_matrix.toml", &quadratic_config(40, 0.01, "11"));
    let message_cfg = write_temp(
        "eng_message.toml",
        &quadratic_config(40, 0.01, "11").replace(
            "[run]\n",
            "[run]\nengine = \"message\"\n",
        ),
    );
    let a = btpp(&["run", "--config", matrix_cfg.to_str().unwrap()]);
    let b = btpp(&["run", "--config", message_cfg.to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    // identical up to the engine label in column 3
    let normalize = |text: String| -> Vec<String> {
        text.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                if f.len() > 2 {
                    f[2] = "_";
                }
                f.join(",")
            })
            .collect()
    };
    assert_eq!(normalize(stdout_of(&a)), normalize(stdout_of(&b)));
}

#[test]
fn report_aggregates_seeds_with_the_sample_formula() {
    let cfg = write_temp("agg.toml", &quadratic_config(20, 0.01, "1, 2, 3"));
    let csv = temp_path("agg.csv");
    let run = btpp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(run.status.success());

    let rep = btpp(&[
        "report",
        csv.to_str().unwrap(),
        "--group-by",
        "iter,algo,n,B,gamma",
    ]);
    assert!(rep.status.success(), "{}", stderr_of(&rep));
    let text = stdout_of(&rep);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,algo,n,B,gamma,count,mean_grad_norm_sq,std_grad_norm_sq,\
         mean_consensus_err,std_consensus_err,mean_dist_to_opt,std_dist_to_opt,\
         mean_f_gap,std_f_gap,mean_vectors_sent,std_vectors_sent"
    );
    // three seeds per group; hand-check one group's mean and std against
    // the raw rows
    let raw = std::fs::read_to_string(&csv).unwrap();
    let grads: Vec<f64> = raw
        .lines()
        .filter(|l| l.starts_with("20,"))
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert_eq!(grads.len(), 3);
    let mean = grads.iter().sum::<f64>() / 3.0;
    let std = (grads.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / 2.0).sqrt();
    let wanted = lines.find(|l| l.starts_with("20,")).unwrap();
    let fields: Vec<&str> = wanted.split(',').collect();
    assert_eq!(fields[5], "3");
    assert_eq!(fields[6].parse::<f64>().unwrap(), mean);
    assert_eq!(fields[7].parse::<f64>().unwrap(), std);
}

#[test]
fn report_refuses_foreign_headers() {
    let alien = write_temp("alien.csv", "time,value\n0,1\n");
    let out = btpp(&["report", alien.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("header mismatch"));
}

#[test]
fn verify_passes_on_a_small_grid() {
    let out = btpp(&["verify", "--grid", "1..16:2,3"]);
    assert!(out.status.success(), "{}", stdout_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("verify: PASS"));
    assert!(text.contains("closed-form-power-matches-product"));
    assert!(text.contains("trackers-conserve-gradient-sum"));
}

#[test]
fn verify_catches_an_injected_fault_and_exits_two() {
    let out = btpp(&["verify", "--grid", "10..10:2", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout_of(&out);
    assert!(text.contains("FAIL closed-form-power-matches-product"));
    assert!(text.contains("n=10 B=2 k=1"));
}

#[test]
fn unknown_config_keys_are_rejected_with_context() {
    let cfg = write_temp(
        "unknown_key.toml",
        &quadratic_config(20, 0.01, "1").replace("[run]\n", "[run]\nfoo = 3\n"),
    );
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("foo"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn run_refuses_list_axes_and_points_at_sweep() {
    let cfg = write_temp(
        "listy.toml",
        &quadratic_config(20, 0.01, "1").replace("B = 2", "B = [2, 4]"),
    );
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("use sweep"));
}

#[test]
fn horizon_tuned_schedules_are_for_the_tree_method_only() {
    let cfg = write_temp(
        "horizon_baseline.toml",
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [algorithm]\ntag = \"centralized\"\nkind = \"nonconvex_horizon\"\nvalue_gap = 1.0\n\
         noise_var = 1.0\nsmoothness = 1.0\n\n\
         [run]\nT = 20\nseeds = [1]\n",
    );
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("tree method only"));
}

#[test]
fn a_batch_where_every_seed_diverges_exits_three() {
    let cfg = write_temp("blowup.toml", &quadratic_config(50, 1e9, "1, 2"));
    let out = btpp(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_of(&out);
    assert!(err.contains("seed 1") && err.contains("seed 2"), "{err}");
    // what was measured before the blowup is still delivered
    assert!(stdout_of(&out).lines().count() >= 1);
}

#[test]
fn one_diverging_run_does_not_sink_the_batch() {
    // the tree method's aggregated root step is roughly n * gamma, so a
    // step that is comfortably stable for centralized SGD blows the tree
    // method up; by iteration ~2400 its iterates overflow while the
    // baseline cruises
    let cfg = write_temp(
        "partial.toml",
        "[problem]\ntype = \"quadratic\"\nn = 10\np = 4\nkappa = 3.0\nnoise_sigma = 0.1\n\n\
         [topology]\nB = 2\n\n\
         [algorithm]\ntag = [\"btpp\", \"centralized\"]\ngamma = 0.15\n\n\
         [run]\nT = 3200\nseeds = [1]\nstride = 100\n",
    );
    let out = btpp(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("non-finite iterate"), "{err}");
    assert!(err.contains("btpp"), "{err}");
    let text = stdout_of(&out);
    // the survivor's rows are complete, the casualty keeps what it had
    assert_eq!(text.lines().filter(|l| l.contains(",centralized,")).count(), 33);
    let tree_rows = text.lines().filter(|l| l.contains(",btpp,")).count();
    assert!(0 < tree_rows && tree_rows < 33, "{tree_rows}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let bad = btpp(&["run", "--nonsense"]);
    assert_eq!(bad.status.code(), Some(1));
    let help = btpp(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout_of(&help).contains("verify"));
    let missing = btpp(&["run"]);
    assert_eq!(missing.status.code(), Some(1)); // --config is required
}

#[test]
fn worker_count_comes_from_the_environment() {
    let cfg = write_temp("workers.toml", &quadratic_config(20, 0.01, "1, 2, 3, 4"));
    let single = Command::new(env!("CARGO_BIN_EXE_btpp"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("BTPP_WORKERS", "1")
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_btpp"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("BTPP_WORKERS", "4")
        .output()
        .unwrap();
    assert!(single.status.success());
    assert!(many.status.success());
    // thread count must never leak into the bytes
    assert_eq!(single.stdout, many.stdout);

    let bad = Command::new(env!("CARGO_BIN_EXE_btpp"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("BTPP_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr_of(&bad).contains("BTPP_WORKERS"));
}

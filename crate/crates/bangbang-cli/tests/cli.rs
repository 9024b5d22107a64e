//! End-to-end tests of the `bbctl` binary: artifact shapes, error exits,
//! round trips, and seed determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bbctl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbctl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning bbctl")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "bbctl failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TWO_SPIN_SYSTEM: &str = "\
spins = 2
offsets_hz = [100.0, -50.0]
j_hz = [[0.0, 215.0], [215.0, 0.0]]

[[species]]
label = \"H\"
max_amplitude_hz = 10000.0
spins = [1]

[[species]]
label = \"C\"
max_amplitude_hz = 8000.0
spins = [2]
";

const ONE_SPIN_SYSTEM: &str = "\
spins = 1
offsets_hz = [0.0]

[[species]]
label = \"H\"
max_amplitude_hz = 10000.0
spins = [1]
";

const IDENTITY_2: &str = "2 2\n1,0 0,0\n0,0 1,0\n";

/// Parse `scale,fidelity` style two-column CSVs.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn manifest(dir: &Path) -> toml::Table {
    let text = fs::read_to_string(dir.join("manifest.toml")).expect("manifest exists");
    text.parse().expect("manifest parses")
}

#[test]
fn ofpqs_curve_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bbctl(
        &["ofpqs", "--n-sys", "2", "--marked", "2", "--l-max", "10", "--out", "run"],
        tmp.path(),
    );
    assert_ok(&out);

    let run = tmp.path().join("run");
    let curve = fs::read_to_string(run.join("ofpqs_curve.csv")).unwrap();
    let rows = csv_rows(&curve);
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        assert_eq!(row[1], (2 * (i + 1) + 1).to_string());
        let p: f64 = row[2].parse().unwrap();
        assert!(p >= 0.8 - 1e-9, "l={} P={}", i + 1, p);
    }

    // every artifact named in the manifest exists
    let m = manifest(&run);
    for a in m["artifacts"].as_array().unwrap() {
        assert!(run.join(a.as_str().unwrap()).exists(), "missing {a}");
    }
    assert_eq!(m["subcommand"].as_str(), Some("ofpqs"));
    assert!(m.get("seed").is_none(), "ofpqs takes no seed");

    let plot = fs::read_to_string(run.join("ofpqs_plot.dat")).unwrap();
    assert!(plot.starts_with("# l P\n"));
    let sched = fs::read_to_string(run.join("ofpqs_schedules.csv")).unwrap();
    // 1 + sum(l) schedule rows for l = 1..=10
    assert_eq!(sched.lines().count(), 1 + 55);
}

#[test]
fn ofpqs_missing_marked_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bbctl(&["ofpqs", "--n-sys", "2"], tmp.path());
    assert!(!out.status.success());
    assert!(!tmp.path().join("manifest.toml").exists());
}

#[test]
fn ofpqs_rejects_bad_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bbctl(
        &["ofpqs", "--marked", "1", "--delta-sq", "1.5"],
        tmp.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn optimize_identity_target_converges_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    fs::write(
        tmp.path().join("ga.toml"),
        "segments = 8\npopulation = 12\ngenerations = 50\nfitness_target = 0.999999999\nseed = 5\n",
    )
    .unwrap();

    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-unitary", "eye.txt", "--out", "run",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    // the all-delay seed already implements the identity: generation 0 wins
    let run = tmp.path().join("run");
    let trace = fs::read_to_string(run.join("fitness_trace.csv")).unwrap();
    assert_eq!(trace, "generation,best_fitness\n0,1\n");

    let m = manifest(&run);
    assert_eq!(m["results"]["best_fitness"].as_float(), Some(1.0));
    assert_eq!(m["seed"].as_integer(), Some(5));
    assert_eq!(m["config"]["ga"]["seed"].as_integer(), Some(5));

    // the emitted best sequence is all delays
    let seq = fs::read_to_string(run.join("best_sequence.txt")).unwrap();
    assert_eq!(seq.lines().filter(|l| *l == "D").count(), 8);
}

#[test]
fn optimize_requires_exactly_one_target() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("ga.toml"), "segments = 4\n").unwrap();
    // no target at all
    let out = bbctl(
        &["optimize", "--system", "sys.toml", "--ga-config", "ga.toml"],
        tmp.path(),
    );
    assert!(!out.status.success());
    // two targets
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-unitary", "eye.txt", "--target-pps", "0",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn optimize_rejects_nonunitary_target() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("ga.toml"), "segments = 4\n").unwrap();
    fs::write(tmp.path().join("m.txt"), "2 2\n1,0 0,0\n0,0 2,0\n").unwrap();
    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-unitary", "m.txt",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not unitary"), "stderr: {err}");
}

#[test]
fn optimize_iterate_target_then_simulate_propagator() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), TWO_SPIN_SYSTEM).unwrap();
    fs::write(
        tmp.path().join("ga.toml"),
        "segments = 30\npopulation = 16\ngenerations = 25\nseed = 9\n",
    )
    .unwrap();
    // target compiled from an iterate spec on 1 system qubit + ancilla (dim 4)
    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-iterate", "n_sys=1,marked=1,l=2,j=1,delta_sq=0.2",
            "--out", "opt",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let m = manifest(&tmp.path().join("opt"));
    assert_eq!(
        m["config"]["target"].as_str(),
        Some("iterate(n_sys=1,marked=1,l=2,j=1,delta_sq=0.2)")
    );

    // a twirl-free stored sequence simulates to a propagator matrix
    let out = bbctl(
        &[
            "simulate", "--system", "sys.toml", "--sequence", "opt/best_sequence.txt",
            "--out", "sim",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let prop = fs::read_to_string(tmp.path().join("sim/propagator.txt")).unwrap();
    assert!(prop.starts_with("4 4\n"));
    let m = manifest(&tmp.path().join("sim"));
    let err = m["results"]["unitarity_error"].as_float().unwrap();
    assert!(err < 1e-9, "unitarity error {err}");
}

#[test]
fn simulate_unitary_target_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    fs::write(
        tmp.path().join("ga.toml"),
        "segments = 10\npopulation = 12\ngenerations = 20\nseed = 2\n",
    )
    .unwrap();
    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-unitary", "eye.txt", "--out", "opt",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let m = manifest(&tmp.path().join("opt"));
    let reported: Vec<f64> = m["results"]["fidelity_per_scale"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_float().unwrap())
        .collect();

    let out = bbctl(
        &[
            "simulate", "--system", "sys.toml", "--sequence", "opt/best_sequence.txt",
            "--target-unitary", "eye.txt", "--out", "sim",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let fid = fs::read_to_string(tmp.path().join("sim/fidelity.csv")).unwrap();
    let rows = csv_rows(&fid);
    assert_eq!(rows.len(), reported.len());
    for (row, want) in rows.iter().zip(&reported) {
        let got: f64 = row[1].parse().unwrap();
        assert!(
            (got - want).abs() <= 1e-9,
            "stored sequence re-simulates to {got}, manifest said {want}"
        );
    }
}

#[test]
fn simulate_state_evolution_and_twirl_guard() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    // σ_z/2-like deviation in, π pulse sequence: 10 segments × 18° at Ω = 10 kHz
    fs::write(tmp.path().join("rho_in.txt"), "2 2\n0.5,0 0,0\n0,0 -0.5,0\n").unwrap();
    fs::write(tmp.path().join("rho_t.txt"), "2 2\n-0.5,0 0,0\n0,0 0.5,0\n").unwrap();
    let mut seq = String::from("dt 0.000005\nsegments 10\nspecies H\n");
    for _ in 0..10 {
        seq.push_str("P:0\n");
    }
    fs::write(tmp.path().join("pi.txt"), &seq).unwrap();

    let out = bbctl(
        &[
            "simulate", "--system", "sys.toml", "--sequence", "pi.txt",
            "--initial-state", "rho_in.txt", "--target-state", "rho_t.txt",
            "--rf-scales", "1.0", "--out", "sim",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let fid = fs::read_to_string(tmp.path().join("sim/fidelity.csv")).unwrap();
    let rows = csv_rows(&fid);
    assert_eq!(rows.len(), 1);
    let f: f64 = rows[0][1].parse().unwrap();
    assert!((f - 1.0).abs() < 1e-9, "π pulse inverts σ_z: F_s = {f}");
    assert!(tmp.path().join("sim/state_out.txt").exists());

    // a twirl-bearing sequence is a channel: unitary targets must be refused
    let mut twirled = seq.clone();
    twirled.push_str("twirls 5\n");
    fs::write(tmp.path().join("tw.txt"), &twirled).unwrap();
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    let out = bbctl(
        &[
            "simulate", "--system", "sys.toml", "--sequence", "tw.txt",
            "--target-unitary", "eye.txt", "--out", "sim2",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn pps_bars_sum_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), TWO_SPIN_SYSTEM).unwrap();
    // hand-written twirl-bearing sequence; content is arbitrary but valid
    fs::write(
        tmp.path().join("seq.txt"),
        "dt 0.000005\nsegments 6\nspecies H C\nP:0 D\nD D\nP:90 P:180\nD D\nD P:270\nD D\ntwirls 2 4\n",
    )
    .unwrap();
    let out = bbctl(
        &[
            "pps", "--system", "sys.toml", "--sequence", "seq.txt",
            "--basis", "0", "--purity-factors", "4,1", "--out", "run",
        ],
        tmp.path(),
    );
    assert_ok(&out);

    let bars = fs::read_to_string(tmp.path().join("run/pps_bars.csv")).unwrap();
    let rows = csv_rows(&bars);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "|00>");
    assert_eq!(rows[3][1], "|11>");
    let target_sum: f64 = rows.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    let achieved_sum: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!(target_sum.abs() < 1e-10, "target bars sum to {target_sum}");
    assert!(
        achieved_sum.abs() < 1e-10,
        "achieved bars sum to {achieved_sum}"
    );

    let m = manifest(&tmp.path().join("run"));
    assert!(m["results"]["fidelity_nominal"].as_float().is_some());
}

#[test]
fn bench_grid_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bbctl(
        &[
            "bench", "--sizes", "2,3", "--duties", "1.0,0.1", "--segments", "20",
            "--repeats", "1", "--seed", "4", "--out", "run",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = fs::read_to_string(tmp.path().join("run/bench.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "n_spins,K,duty,tau_sm_s,tau_bb_s,tau_cache_s,ratio"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 2, "sizes × duties rows");
    let plot = fs::read_to_string(tmp.path().join("run/bench_plot.dat")).unwrap();
    assert!(plot.starts_with("# duty ratio\n"));
    // plot data covers the largest size: one line per duty
    assert_eq!(plot.lines().count(), 1 + 2);
    let m = manifest(&tmp.path().join("run"));
    assert_eq!(m["seed"].as_integer(), Some(4));
}

#[test]
fn bench_default_duty_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bbctl(
        &[
            "bench", "--sizes", "2", "--segments", "20", "--repeats", "1",
            "--seed", "4", "--out", "run",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let csv = fs::read_to_string(tmp.path().join("run/bench.csv")).unwrap();
    let duties: Vec<String> = csv_rows(&csv).iter().map(|r| r[2].clone()).collect();
    assert_eq!(duties, ["1", "0.5", "0.2", "0.1"]);
}

#[test]
fn same_seed_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    fs::write(
        tmp.path().join("ga.toml"),
        "segments = 12\npopulation = 10\ngenerations = 15\n",
    )
    .unwrap();
    for dir in ["a", "b"] {
        let out = bbctl(
            &[
                "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
                "--target-unitary", "eye.txt", "--seed", "77", "--out", dir,
            ],
            tmp.path(),
        );
        assert_ok(&out);
    }
    for f in ["best_sequence.txt", "fitness_trace.csv", "fidelity.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "artifact {f} differs between same-seed runs");
    }
    let strip = |p: &Path| {
        fs::read_to_string(p.join("manifest.toml"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("wall_time_s"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&tmp.path().join("a")), strip(&tmp.path().join("b")));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bbctl"))
        .args(["ofpqs", "--marked", "1", "--l-max", "2"])
        .env("BBCTL_OUT", tmp.path().join("from_env"))
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from_env/manifest.toml").exists());
}

#[test]
fn seed_drawn_when_absent_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), ONE_SPIN_SYSTEM).unwrap();
    fs::write(tmp.path().join("eye.txt"), IDENTITY_2).unwrap();
    // no seed in the config file, no --seed flag: one must be drawn
    fs::write(
        tmp.path().join("ga.toml"),
        "segments = 4\npopulation = 8\ngenerations = 2\n",
    )
    .unwrap();
    let out = bbctl(
        &[
            "optimize", "--system", "sys.toml", "--ga-config", "ga.toml",
            "--target-unitary", "eye.txt", "--out", "run",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let m = manifest(&tmp.path().join("run"));
    let recorded = m["seed"].as_integer().expect("drawn seed recorded");
    assert_eq!(
        m["config"]["ga"]["seed"].as_integer(),
        Some(recorded),
        "config echo carries the effective seed"
    );
}

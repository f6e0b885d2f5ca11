use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn protocol() -> PathBuf {
    fixtures().join("kindergarten.fastric")
}

fn fastric(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastric")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_reports_machine_size() {
    let o = fastric(&["validate", p(&protocol())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "kindergarten_tutor: ok (3 states, 6 transitions)\n");
}

#[test]
fn validate_rejects_broken_protocols() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fastric");
    let source = std::fs::read_to_string(protocol()).unwrap().replace("CHANGE: 2 -> 1", "CHANGE: 2 -> 7");
    std::fs::write(&bad, source).unwrap();
    let o = fastric(&["validate", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("undeclared state 7"), "{}", stderr(&o));
}

#[test]
fn render_matches_the_prompt_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    for level in ["L1", "L2", "L3", "L4"] {
        let expected = std::fs::read_to_string(fixtures().join(format!("prompts/{level}.txt"))).unwrap();
        let o = fastric(&["render", p(&protocol()), "--level", level]);
        assert!(o.status.success());
        assert_eq!(stdout(&o), expected);
        let out = dir.path().join(format!("{level}.txt"));
        assert!(fastric(&["render", p(&protocol()), "--level", level, "-o", p(&out)]).status.success());
        assert_eq!(std::fs::read_to_string(out).unwrap(), expected);
    }
    assert_eq!(fastric(&["render", p(&protocol()), "--level", "L5"]).status.code(), Some(1));
}

#[test]
fn score_prints_fraction_and_failed_turn() {
    let o = fastric(&[
        "score",
        "--trace",
        p(&fixtures().join("runlogs/case_brittle_l1.log")),
        "--protocol",
        p(&protocol()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("6/21 = 0.29 (failed turn 7: case_rejection)\n"), "{}", stdout(&o));

    let o = fastric(&["score", "--trace", p(&fixtures().join("runlogs/oracle_l1.log")), "--protocol", p(&protocol())]);
    assert_eq!(stdout(&o), "21/21 = 1.00 (perfect)\n");

    let o = fastric(&[
        "score",
        "--trace",
        p(&fixtures().join("runlogs/annotated_case_rejection.log")),
        "--script",
        p(&fixtures().join("canonical.script")),
        "--protocol",
        p(&protocol()),
    ]);
    assert_eq!(stdout(&o), "6/21 = 0.29 (failed turn 7: case_rejection)\n  rejected lowercase \"more\"\n");
}

#[test]
fn score_rejects_malformed_logs() {
    let o =
        fastric(&["score", "--trace", p(&fixtures().join("runlogs/invalid/gap.log")), "--protocol", p(&protocol())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("expected turn 2, found 3"), "{}", stderr(&o));
}

#[test]
fn run_report_and_optimum_work_on_one_archive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = fastric(&[
        "run",
        "--protocol",
        p(&protocol()),
        "--agent",
        "oracle",
        "--agent",
        "fault:confirmation_seeker",
        "--runs",
        "4",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("oracle                     1.00 (0.00)  1.00 (0.00)  1.00 (0.00)  1.00 (0.00)"), "{text}");
    assert!(text.contains("fault:confirmation_seeker  0.48 (0.00)"), "{text}");
    assert!(out.join("summary.json").is_file());
    assert!(out.join("conditions/oracle__L1/run-0004.log").is_file());

    let report = fastric(&["report", "--runs-dir", p(&out)]);
    assert_eq!(stdout(&report), text);

    let csv = stdout(&fastric(&["report", "--runs-dir", p(&out), "--format", "csv"]));
    assert!(csv.starts_with("agent,level,runs,aborted,mean,sd,mean_exact\noracle,L1,4,0,1.00,0.00,1\n"), "{csv}");
    assert!(csv.contains("fault:confirmation_seeker,L4,4,0,0.48,0.00,10/21\n"), "{csv}");

    let q = stdout(&fastric(&["report", "--runs-dir", p(&out), "--format", "quantiles"]));
    assert!(q.contains("fault:confirmation_seeker,L2,4,0.4762,0.4762,0.4762,0.4762,0.4762,0.4762\n"), "{q}");

    let best = stdout(&fastric(&["optimum", "--runs-dir", p(&out)]));
    assert_eq!(best, "oracle: L1 (1.00 (0.00))\nfault:confirmation_seeker: L1 (0.48 (0.00))\n");
}

#[test]
fn runs_are_reproducible_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let out = dir.path().join(name);
        let o = fastric(&[
            "run",
            "--protocol",
            p(&protocol()),
            "--agent",
            "fault:random:0.3",
            "--level",
            "L2",
            "--runs",
            "10",
            "--seed",
            "99",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success());
        (stdout(&o), std::fs::read(out.join("summary.json")).unwrap())
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn aborted_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = dir.path().join("down.toml");
    std::fs::write(
        &config,
        format!("base_url = \"http://127.0.0.1:{port}/v1\"\nmodel = \"m\"\napi_key_env = \"FASTRIC_CLI_TEST_KEY\"\nmax_retries = 0\n"),
    )
    .unwrap();
    let out = dir.path().join("runs");
    let o = Command::new(env!("CARGO_BIN_EXE_fastric"))
        .args(["run", "--protocol", p(&protocol()), "--agent"])
        .arg(format!("endpoint:{}", config.display()))
        .args(["--level", "L1", "--runs", "1", "--out", p(&out)])
        .env("FASTRIC_CLI_TEST_KEY", "k")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 aborted run excluded"), "{}", stdout(&o));
    assert!(stderr(&o).contains("run 1:"), "{}", stderr(&o));
    let manifest =
        std::fs::read_dir(out.join("conditions")).unwrap().next().unwrap().unwrap().path().join("manifest.json");
    assert!(std::fs::read_to_string(manifest).unwrap().contains("\"completed\": 0"));
}

#[test]
fn unknown_agents_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = fastric(&["run", "--protocol", p(&protocol()), "--agent", "wizard", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("wizard"), "{}", stderr(&o));
    assert!(!out.exists());
}

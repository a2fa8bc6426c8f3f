use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn fig4() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/fig4.csv")
}

fn ngd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngd"))
        .args(args)
        .env_remove("NGD_CACHE_PATH")
        .env_remove("NGD_DAILY_QUOTA")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn pair_reproduces_published_distance() {
    let fixture = data("paper_counts.jsonl");
    let out = ngd(&[
        "pair",
        "horse",
        "rider",
        "--fixture",
        fixture.to_str().unwrap(),
        "--n",
        "8058044651",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "0.443\n");
}

#[test]
fn pair_of_a_term_with_itself_is_zero() {
    let fixture = data("paper_counts.jsonl");
    for term in ["x", "horse"] {
        let out = ngd(&[
            "pair",
            term,
            term,
            "--fixture",
            fixture.to_str().unwrap(),
            "--n",
            "8058044651",
        ]);
        assert!(out.status.success());
        assert_eq!(stdout(&out), "0.000\n");
    }
}

#[test]
fn pair_with_an_unseen_term_is_one() {
    let fixture = data("paper_counts.jsonl");
    let out = ngd(&[
        "pair",
        "zebra",
        "rider",
        "--fixture",
        fixture.to_str().unwrap(),
        "--n",
        "8058044651",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "1.000\n");
}

#[test]
fn count_prints_the_raw_frequency() {
    let fixture = data("paper_counts.jsonl");
    let out = ngd(&[
        "count",
        "horse",
        "--fixture",
        fixture.to_str().unwrap(),
        "--n",
        "8058044651",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "46700000\n");
}

#[test]
fn missing_source_is_a_usage_error() {
    let out = ngd(&["pair", "a", "b"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn two_sources_are_a_usage_error() {
    let fixture = data("paper_counts.jsonl");
    let out = ngd(&[
        "pair",
        "a",
        "b",
        "--fixture",
        fixture.to_str().unwrap(),
        "--index",
        "somewhere",
        "--n",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixture_without_n_is_a_usage_error() {
    let fixture = data("paper_counts.jsonl");
    let out = ngd(&["pair", "a", "b", "--fixture", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bare_remote_without_env_url_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_ngd"))
        .args(["count", "a", "--remote", "--n", "10"])
        .env_remove("NGD_PROVIDER_URL")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_fixture_file_is_a_domain_error() {
    let out = ngd(&["count", "a", "--fixture", "/nonexistent.jsonl", "--n", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = ngd(&["count", "a", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cluster_emits_newick_and_score() {
    let out = ngd(&["cluster", "--matrix", fig4().to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    let newick = lines.next().unwrap();
    assert!(newick.starts_with('(') && newick.ends_with(';'));
    assert!(lines.next().unwrap().starts_with("S(T) = "));
}

#[test]
fn cluster_is_deterministic_for_a_seed() {
    let matrix = fig4();
    let args = ["cluster", "--matrix", matrix.to_str().unwrap(), "--seed", "7"];
    let first = ngd(&args);
    let second = ngd(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn matrix_round_trips_through_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("counts.jsonl");
    let mut lines = Vec::new();
    let terms = ["red", "orange", "yellow", "small", "large"];
    for t in &terms {
        lines.push(format!("{{\"term\": \"{t}\", \"count\": 1000}}"));
    }
    for (i, a) in terms.iter().enumerate() {
        for b in terms.iter().skip(i + 1) {
            let same = (i < 3) == (terms.iter().position(|t| t == b).unwrap() < 3);
            let c = if same { 900 } else { 2 };
            lines.push(format!("{{\"pair\": [\"{a}\", \"{b}\"], \"count\": {c}}}"));
        }
    }
    std::fs::write(&fixture, lines.join("\n")).unwrap();

    let matrix_path = dir.path().join("m.csv");
    let out = ngd(&[
        "matrix",
        "red",
        "orange",
        "yellow",
        "small",
        "large",
        "--fixture",
        fixture.to_str().unwrap(),
        "--n",
        "1000000",
        "--out",
        matrix_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ngd(&[
        "cluster",
        "--matrix",
        matrix_path.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let newick = text.lines().next().unwrap();
    // The two size terms sit on their own branch away from the colors.
    assert!(newick.contains("(small,large)") || newick.contains("(large,small)"));
}

#[test]
fn index_build_stats_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.txt");
    std::fs::write(
        &docs,
        "the horse ran\nthe rider fell\nhorse and rider\nhay for the horse\n",
    )
    .unwrap();
    let index_dir = dir.path().join("idx");
    let out = ngd(&[
        "index",
        "build",
        "--docs",
        docs.to_str().unwrap(),
        "--out",
        index_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ngd(&["count", "horse", "--index", index_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "3\n");

    let out = ngd(&["index", "stats", "--dir", index_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let stats: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(stats["documents"], 4);
}

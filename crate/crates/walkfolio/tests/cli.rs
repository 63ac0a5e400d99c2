use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use walkfolio::report::COLUMNS;
use walkfolio::store::{self, read_records};
use walkfolio_core::centrality::Measure;
use walkfolio_core::portfolio::Scheme;

fn walkfolio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walkfolio"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Twelve tickers over three years; one of them lists a year late.
fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = walkfolio(&[
        "synth",
        "--out",
        path(&data),
        "--tickers",
        "12",
        "--years",
        "3",
        "--late-listings",
        "1",
    ]);
    stdout(&o);
    data
}

fn run(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "run",
        "--data",
        path(data),
        "--out",
        path(out),
        "--tau",
        "20",
        "--m",
        "5",
    ];
    args.extend_from_slice(extra);
    stdout(&walkfolio(&args))
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn restricted_run_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("run");
    let args = [
        "--measures",
        "degree",
        "--thetas",
        "0.5",
        "--options",
        "3",
        "--schemes",
        "ew",
    ];
    let first = run(&data, &out, &args);
    assert!(
        first.starts_with("2 cells (2 computed, 0 from checkpoint), 0 failed"),
        "{first}"
    );
    let records = read_records(&out.join(store::RECORDS_FILE), false).unwrap();
    assert_eq!(records.len(), 2);
    let csv_before = read(out.join(store::RECORDS_FILE));
    let manifest_before = read(out.join(store::MANIFEST_FILE));

    let again = run(&data, &out, &args);
    assert!(
        again.starts_with("2 cells (0 computed, 2 from checkpoint)"),
        "{again}"
    );
    assert_eq!(read(out.join(store::RECORDS_FILE)), csv_before);
    assert_eq!(read(out.join(store::MANIFEST_FILE)), manifest_before);
}

#[test]
fn output_is_independent_of_parallelism_and_interruption() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let grid = [
        "--measures",
        "degree,katz-min,nbtw-exp",
        "--alphas",
        "0.5",
        "--options",
        "3,7",
        "--thetas",
        "0.3",
    ];
    let schemes = ["--schemes", "ew,minvar-lo,meanvar-ls"];
    let with = |extra: &[&'static str]| [&grid[..], &schemes[..], extra].concat();

    let serial = dir.path().join("serial");
    run(&data, &serial, &with(&["--parallelism", "1"]));
    let parallel = dir.path().join("parallel");
    run(&data, &parallel, &with(&["--parallelism", "4"]));
    let resumed = dir.path().join("resumed");
    run(
        &data,
        &resumed,
        &[&grid[..], &["--schemes", "ew", "--parallelism", "2"]].concat(),
    );
    let text = run(&data, &resumed, &with(&["--parallelism", "3"]));
    assert!(text.contains("from checkpoint"), "{text}");

    let reference = read(serial.join(store::RECORDS_FILE));
    assert_eq!(read(parallel.join(store::RECORDS_FILE)), reference);
    assert_eq!(read(resumed.join(store::RECORDS_FILE)), reference);
    assert_eq!(
        read(parallel.join(store::MANIFEST_FILE)),
        read(serial.join(store::MANIFEST_FILE))
    );
    for name in ["sr_top30.csv", "er_top20_A1.csv"] {
        assert_eq!(
            read(parallel.join("reports").join(name)),
            read(serial.join("reports").join(name))
        );
    }
}

#[test]
fn rank_prints_table_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("run");
    run(
        &data,
        &out,
        &[
            "--measures",
            "degree,betweenness",
            "--thetas",
            "0.3",
            "--options",
            "3",
        ],
    );
    let csv = stdout(&walkfolio(&[
        "rank",
        "--run",
        path(&out),
        "--format",
        "csv",
        "--top",
        "3",
    ]));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
    assert_eq!(lines.count(), 3);
    let text = stdout(&walkfolio(&[
        "rank",
        "--run",
        path(&out),
        "--key",
        "er",
        "--side",
        "central",
    ]));
    let header: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(
        header,
        COLUMNS
            .iter()
            .flat_map(|c| c.split(' '))
            .collect::<Vec<_>>()
    );
    assert!(text.lines().count() > 2);
    assert!(text
        .lines()
        .skip(2)
        .all(|l| l.contains("central") && !l.contains("peripheral")));
}

fn id_of(out: &Path, pick: impl Fn(&walkfolio_core::backtest::CellConfig) -> bool) -> String {
    let records = read_records(&out.join(store::RECORDS_FILE), false).unwrap();
    records
        .into_iter()
        .find(|r| pick(&r.cell))
        .expect("matching record")
        .id
}

fn field<'a>(text: &'a str, key: &str) -> Vec<&'a str> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix(key))
        .map(str::trim)
        .collect()
}

#[test]
fn inspect_shows_per_year_trail() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("run");
    run(
        &data,
        &out,
        &[
            "--measures",
            "degree,katz-min",
            "--thetas",
            "0.3",
            "--options",
            "7",
        ],
    );

    let ew = id_of(&out, |c| {
        c.scheme == Scheme::EqualWeight && c.measure == Measure::Degree
    });
    let text = stdout(&walkfolio(&["inspect", "--run", path(&out), &ew[..10]]));
    assert!(text.contains("status ok"), "{text}");
    let weights: Vec<f64> = field(&text, "weight ")
        .iter()
        .map(|w| w.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(weights.len(), 2 * 5);
    assert!(weights.iter().all(|&w| w == 0.2), "{weights:?}");

    let km = id_of(&out, |c| c.measure == Measure::KatzMin);
    let text = stdout(&walkfolio(&["inspect", "--run", path(&out), &km]));
    let alphas = field(&text, "alpha ");
    let rhos = field(&text, "rho ");
    assert_eq!(alphas.len(), 2);
    for (a, r) in alphas.iter().zip(&rhos) {
        let (a, rho): (f64, f64) = (a.parse().unwrap(), r.parse().unwrap());
        assert!(
            (a - (1.0 - (-rho).exp()) / rho).abs() <= 1e-12,
            "alpha {a} rho {rho}"
        );
    }
}

#[test]
fn inspect_reports_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("run");
    let text = stdout(&walkfolio(&[
        "run",
        "--data",
        path(&data),
        "--out",
        path(&out),
        "--tau",
        "20",
        "--m",
        "12",
        "--measures",
        "degree",
        "--thetas",
        "0.3",
        "--options",
        "3",
        "--schemes",
        "ew",
    ]));
    assert!(text.contains("2 failed"), "{text}");
    let id = id_of(&out, |_| true);
    let text = stdout(&walkfolio(&["inspect", "--run", path(&out), &id]));
    assert!(text.contains("status failed"), "{text}");
    assert!(
        text.contains(
            "failure universe-too-small (train year 2001): 11 eligible stocks, 12 required"
        ),
        "{text}"
    );
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("run");
    let missing = walkfolio(&[
        "run",
        "--data",
        path(&dir.path().join("nowhere")),
        "--out",
        path(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,A,B\n2001-01-02,0.01,\n2001-01-03,0.02,0.01\n").unwrap();
    let o = walkfolio(&[
        "run",
        "--data",
        path(&data),
        "--returns",
        path(&bad),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("column B"), "{err}");

    std::fs::write(&bad, "date,A\n2001-01-03,0.01\n2001-01-02,0.02\n").unwrap();
    let o = walkfolio(&[
        "run",
        "--data",
        path(&data),
        "--returns",
        path(&bad),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));

    assert_eq!(
        walkfolio(&["run", "--data", path(&data), "--thetas", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        walkfolio(&["run", "--data", path(&data), "--measures", "pagerank"])
            .status
            .code(),
        Some(2)
    );

    run(
        &data,
        &out,
        &[
            "--measures",
            "degree",
            "--thetas",
            "0.3",
            "--options",
            "3",
            "--schemes",
            "ew",
        ],
    );
    let o = walkfolio(&["inspect", "--run", path(&out), "ffffffffffff"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown cell id"));
}

#[test]
fn prices_convert_to_returns() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    std::fs::write(
        &prices,
        "date,A,B\n2001-01-02,100,NA\n2001-01-03,110,50\n2001-01-04,99,55\n",
    )
    .unwrap();
    let out = dir.path().join("returns.csv");
    stdout(&walkfolio(&[
        "prices-to-returns",
        "--prices",
        path(&prices),
        "--out",
        path(&out),
    ]));
    let panel = walkfolio::io::load_returns_csv(&out).unwrap();
    let v = panel.values();
    assert_eq!(panel.n_rows(), 2);
    assert!((v[(0, 0)] - 0.1).abs() < 1e-15 && (v[(1, 0)] + 0.1).abs() < 1e-15);
    assert!(v[(0, 1)].is_nan());
    assert!((v[(1, 1)] - 0.1).abs() < 1e-15);
}

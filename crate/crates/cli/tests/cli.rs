mod common;

use common::{spmv_rows_args, sptdist};

fn text(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn with(cmd: &str, args: &[String]) -> Vec<String> {
    std::iter::once(cmd.to_string()).chain(args.iter().cloned()).collect()
}

#[test]
fn row_spmv_run_writes_three_entries() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptdist(&with("run", &spmv_rows_args(dir.path(), 2)));
    assert!(out.status.success());
    assert_eq!(text(&out), "# dims 3\n1 3.0\n2 3.0\n3 4.0\n");
}

#[test]
fn piece_count_does_not_change_values() {
    let dir = tempfile::tempdir().unwrap();
    let one = sptdist(&with("run", &spmv_rows_args(dir.path(), 1)));
    let four = sptdist(&with("run", &spmv_rows_args(dir.path(), 4)));
    assert!(one.status.success() && four.status.success());
    assert_eq!(text(&one), text(&four));
}

#[test]
fn oracle_agrees_with_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = spmv_rows_args(dir.path(), 3);
    assert_eq!(text(&sptdist(&with("oracle", &args))), text(&sptdist(&with("run", &args))));
}

#[test]
fn single_piece_partition_is_whole_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let out = text(&sptdist(&with("partition", &spmv_rows_args(dir.path(), 1))));
    assert!(out.contains("B[1].crd     color 0: 0..3"), "{out}");
    assert!(!out.contains("color 1"));
}

#[test]
fn nonzero_partition_splits_positions_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = spmv_rows_args(dir.path(), 2);
    let k = args.iter().position(|a| a.starts_with("divide(")).unwrap();
    args[k] = "fuse(i, j, f); posdivide(f, fo, fi, B, M.x); distribute(fo)".into();
    let out = text(&sptdist(&with("partition", &args)));
    assert!(out.contains("B[1].pos     color 0: 0\n"), "{out}");
    assert!(out.contains("B[1].pos     color 1: 1..2\n"), "{out}");
    assert!(out.contains("B[1].crd     color 0: 0..1\n"), "{out}");
    assert!(out.contains("B[1].crd     color 1: 2..3\n"), "{out}");
}

#[test]
fn missing_format_is_a_usage_error() {
    let out = sptdist(&[
        "run".into(),
        "--expr".into(),
        "a(i) = B(i,j) * c(j)".into(),
        "--format".into(),
        "B=ds".into(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no format for tensor a"));
}

#[test]
fn bad_schedule_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = spmv_rows_args(dir.path(), 2);
    let k = args.iter().position(|a| a.starts_with("divide(")).unwrap();
    args[k] = "distribute(q)".into();
    assert_eq!(sptdist(&with("run", &args)).status.code(), Some(2));
}

#[test]
fn unreadable_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = spmv_rows_args(dir.path(), 2);
    let k = args.iter().position(|a| a.starts_with("B=/")).unwrap();
    args[k] = format!("B={}", dir.path().join("absent.tns").display());
    assert_eq!(sptdist(&with("run", &args)).status.code(), Some(1));
}

use std::path::PathBuf;
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn maptrix() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maptrix"))
}

fn leader_count(svg: &str) -> (usize, usize) {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let ids: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("path"))
        .filter_map(|n| n.attribute("id"))
        .collect();
    (
        ids.iter().filter(|id| id.starts_with("leader-o-")).count(),
        ids.iter().filter(|id| id.starts_with("leader-d-")).count(),
    )
}

#[test]
fn renders_au() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("au.svg");
    let status = maptrix()
        .args(["render"])
        .arg(fixture("au.csv"))
        .arg(fixture("au.geojson"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let svg = std::fs::read_to_string(&out).unwrap();
    assert_eq!(leader_count(&svg), (8, 8));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = maptrix()
            .arg("render")
            .arg(fixture("de.csv"))
            .arg(fixture("de.geojson"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.svg"), run("b.svg"));
}

#[test]
fn inverted_filter_exits_with_range_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = maptrix()
        .arg("render")
        .arg(fixture("au.csv"))
        .arg(fixture("au.geojson"))
        .arg("--out")
        .arg(dir.path().join("x.svg"))
        .args(["--filter", "10:5"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(8));
    assert!(String::from_utf8_lossy(&output.stderr).contains("RangeError"));
}

#[test]
fn malformed_filter_is_an_argument_error() {
    let output = maptrix()
        .arg("render")
        .arg(fixture("au.csv"))
        .arg(fixture("au.geojson"))
        .args(["--out", "x.svg", "--filter", "ten"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn two_country_nz_to_us() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nz_us.svg");
    let json = dir.path().join("nz_us.json");
    let status = maptrix()
        .args(["render", "--mode", "two-country"])
        .arg(fixture("nz_us.csv"))
        .arg(fixture("nz.geojson"))
        .arg(fixture("us.geojson"))
        .arg("--out")
        .arg(&out)
        .arg("--json")
        .arg(&json)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(leader_count(&std::fs::read_to_string(&out).unwrap()), (16, 51));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(doc["cells"].as_array().unwrap().len(), 16 * 51);
}

#[test]
fn groups_reduce_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.json");
    std::fs::write(&groups, r#"[{"group_id": "SE", "member_ids": ["NSW", "ACT"]}]"#).unwrap();
    let out = dir.path().join("g.svg");
    let output = maptrix()
        .arg("render")
        .arg(fixture("au.csv"))
        .arg(fixture("au.geojson"))
        .arg("--out")
        .arg(&out)
        .arg("--group")
        .arg(&groups)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(leader_count(&std::fs::read_to_string(&out).unwrap()), (7, 7));
}

#[test]
fn help_documents_exit_codes() {
    let output = maptrix().args(["render", "--help"]).output().unwrap();
    let help = String::from_utf8_lossy(&output.stdout);
    assert!(help.contains("RangeError"));
    assert!(help.contains("SteepLeaderError"));
}

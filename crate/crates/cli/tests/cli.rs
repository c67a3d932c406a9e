use std::process::{Command, Output};

fn curvhom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvhom"))
        .args(args)
        .env_remove("CURVHOM_SEED")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> (i32, serde_json::Value) {
    let mut all = args.to_vec();
    all.push("--format=json");
    let out = curvhom(&all);
    let v = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.code().unwrap(), v)
}

#[test]
fn isometry_table_p2() {
    let (code, v) = json(&["verify-thm15", "--p", "2"]);
    let table = &v["results"][0]["value"];
    let formulas: Vec<u64> = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["formula"].as_u64().unwrap())
        .collect();
    assert_eq!(formulas, [57, 51, 49, 48, 47, 46]);
    let computed: Vec<u64> = table["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["computed"].as_u64().unwrap())
        .collect();
    assert_eq!(computed, [57, 47, 43, 42, 41, 40]);
    // rows k ≥ 1 disagree with the closed formulas, so the command reports failure
    assert_eq!(code, 1);
}

#[test]
fn closed_form_check_passes() {
    let out = curvhom(&[
        "curvature",
        "--p",
        "1",
        "--F",
        "z1*y^2",
        "--order",
        "2",
        "--check-closed-form",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("curvature: PASS"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        curvhom(&["stabdim", "--p", "1", "--k", "9"]).status.code(),
        Some(2)
    );
    assert_eq!(curvhom(&["stabdim", "--p", "1"]).status.code(), Some(2));
    assert_eq!(
        curvhom(&["curvature", "--p", "1", "--F", "exp(z1)"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        curvhom(&["okp", "--p", "1", "--k", "2"]).status.code(),
        Some(2)
    );
    assert_eq!(curvhom(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        curvhom(&["run", "/nonexistent/scenario"]).status.code(),
        Some(2)
    );
}

#[test]
fn stabdim_and_okp() {
    let (code, v) = json(&["stabdim", "--p", "1", "--k", "0"]);
    assert_eq!(code, 0);
    assert_eq!(v["results"][0]["value"], 21);
    let (_, v) = json(&["stabdim", "--p", "1", "--k", "0", "--affine"]);
    assert_eq!(v["results"][0]["value"], 11);
    let (code, v) = json(&["okp", "--p", "2", "--k", "1"]);
    assert_eq!(code, 0);
    assert_eq!(v["results"][0]["value"], 3);
}

#[test]
fn alpha_and_classify() {
    let (code, v) = json(&["alpha", "--p", "1", "--psi", "exp(y)+exp(2*y)", "--nu", "2"]);
    assert_eq!(code, 0);
    assert_eq!(v["results"][0]["value"], "1105/1089");
    let (_, v) = json(&["classify-psi", "--p", "1", "--psi", "exp(2*y)"]);
    assert_eq!(v["results"][0]["value"], "homogeneous-excluded");
    let (_, v) = json(&["classify-psi", "--p", "1", "--psi=-exp(y)"]);
    assert_eq!(v["results"][0]["value"], "inadmissible");
}

#[test]
fn model_normalizes() {
    let (code, v) = json(&["model", "--p", "1", "--k", "1"]);
    assert_eq!(code, 0);
    assert_eq!(v["results"][0]["values"]["normalized"], true);
    let (code, _) = json(&[
        "model",
        "--p",
        "1",
        "--psi",
        "exp(y)+exp(2*y)",
        "--at",
        "y=1/2",
        "--at",
        "z1=3",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn orbit_maps() {
    let (code, _) = json(&["orbit-map", "--p", "1", "--k", "2", "--xi", "x=2"]);
    assert_eq!(code, 0);
    let (code, v) = json(&["orbit-map", "--p", "1", "--k", "3", "--xi", "x=2"]);
    assert_eq!(code, 1);
    assert_eq!(v["results"][0]["values"]["stated_condition"], false);
    let (code, _) = json(&[
        "orbit-map",
        "--p",
        "1",
        "--k",
        "1",
        "--variant",
        "y",
        "--xi",
        "y=1,zt1=3",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn seeded_output_is_deterministic() {
    let a = curvhom(&[
        "orbit-map",
        "--p",
        "2",
        "--k",
        "1",
        "--seed",
        "11",
        "--format",
        "json",
    ]);
    let b = curvhom(&[
        "orbit-map",
        "--p",
        "2",
        "--k",
        "1",
        "--seed",
        "11",
        "--format",
        "json",
    ]);
    assert_eq!(a.stdout, b.stdout);
    let c = Command::new(env!("CARGO_BIN_EXE_curvhom"))
        .args(["orbit-map", "--p", "2", "--k", "1", "--format", "json"])
        .env("CURVHOM_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn runs_scenario_files() {
    let dir = std::env::temp_dir().join(format!("curvhom-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let ok = dir.join("ok.scn");
    std::fs::write(
        &ok,
        "p=1\nfamily=Npsi\npsi=exp(y)+exp(2*y)\n[task]\n1=alpha nu=2\n2=stabdim\n",
    )
    .unwrap();
    let (code, v) = json(&["run", ok.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    assert_eq!(v["scenario"]["family"], "Npsi");
    let bad = dir.join("bad.scn");
    std::fs::write(&bad, "p=1\nfamily=Mk\nk=9\n").unwrap();
    assert_eq!(
        curvhom(&["run", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let seq = curvhom(&[
        "run",
        ok.to_str().unwrap(),
        "--sequential",
        "--format",
        "json",
    ]);
    let par = curvhom(&["run", ok.to_str().unwrap(), "--format", "json"]);
    assert_eq!(seq.stdout, par.stdout);
}

#[test]
fn shipped_scenario_passes() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/two_exponentials.scn"
    );
    let (code, v) = json(&["run", path]);
    assert_eq!(code, 0);
    assert_eq!(v["results"].as_array().unwrap().len(), 6);
}

use std::collections::BTreeMap;
use std::process::Command;

use topoleak::experiment::config::{MiCurveParams, TopologyAttackParams};
use topoleak::experiment::plot::{render_svg, PlotSpec};
use topoleak::experiment::{
    run_experiment, summarize, ExperimentConfig, ExperimentKind, ExperimentParams, RunRecord, Summary, Table,
};
use topoleak::Error;

fn config(params: ExperimentParams) -> ExperimentConfig {
    ExperimentConfig {
        master_seed: 7,
        workers: Some(2),
        out_dir: None,
        params,
    }
}

fn small_topology() -> TopologyAttackParams {
    TopologyAttackParams {
        runs: 8,
        fractions: vec![0.0, 0.2, 0.4, 0.6],
        ..TopologyAttackParams::default()
    }
}

#[test]
fn mi_curve_summary_and_plot_follow_from_raw_rows() {
    let cfg = config(ExperimentParams::MiCurve(MiCurveParams {
        m_values: vec![2, 4, 8],
        samples: 1000,
        runs: 3,
        ..MiCurveParams::default()
    }));
    let out = run_experiment(&cfg).unwrap();
    let record: RunRecord = serde_json::from_str(out.file("run.json").unwrap()).unwrap();
    assert_eq!(record, out.record);
    assert_eq!(record.config_hash, cfg.hash());

    let csv = out.file("mi_curve.csv").unwrap();
    let table = Table::from_csv("mi_curve", csv).unwrap();
    assert_eq!(table, record.raw[0]);
    assert_eq!(
        summarize(&table, &["distribution", "m"], &["simulated_mi"]).unwrap(),
        record.summary
    );

    // Independent recomputation of one group.
    let (di, mi, si) = (
        table.column("distribution").unwrap(),
        table.column("m").unwrap(),
        table.column("simulated_mi").unwrap(),
    );
    let vals: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r[di] == "gaussian" && r[mi] == "4")
        .map(|r| r[si].parse().unwrap())
        .collect();
    let entry = record
        .summary
        .iter()
        .find(|e| e.group["distribution"] == "gaussian" && e.group["m"] == "4")
        .unwrap();
    let s = Summary::of(&vals);
    assert_eq!((entry.mean, entry.std, entry.count), (s.mean, s.std, 3));

    let svg = render_svg(
        csv,
        &PlotSpec {
            title: "Leakage against honest component size",
            x: "m",
            ys: &["simulated_mi", "analytic_exact", "analytic_asymptotic"],
            group: &["distribution"],
        },
    )
    .unwrap();
    assert_eq!(svg, out.file("mi_curve.svg").unwrap());
}

#[test]
fn topology_summary_matches_membership_rows() {
    let out = run_experiment(&config(ExperimentParams::TopologyAttack(small_topology()))).unwrap();
    let membership = Table::from_csv("membership", out.file("membership.csv").unwrap()).unwrap();
    let summary = Table::from_csv("topology_summary", out.file("topology_summary.csv").unwrap()).unwrap();

    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let (t, f, s) = (
        membership.column("topology").unwrap(),
        membership.column("fraction").unwrap(),
        membership.column("success_rate").unwrap(),
    );
    for r in &membership.rows {
        groups
            .entry((r[t].clone(), r[f].clone()))
            .or_default()
            .push(r[s].parse().unwrap());
    }
    let (st, sf, sm) = (
        summary.column("topology").unwrap(),
        summary.column("fraction").unwrap(),
        summary.column("mean_success_rate").unwrap(),
    );
    assert_eq!(summary.rows.len(), groups.len());
    for r in &summary.rows {
        let vals = &groups[&(r[st].clone(), r[sf].clone())];
        let expect = vals.iter().sum::<f64>() / vals.len() as f64;
        let got: f64 = r[sm].parse().unwrap();
        assert!((got - expect).abs() < 1e-12, "{r:?}");
    }

    let svg = render_svg(
        out.file("topology_summary.csv").unwrap(),
        &PlotSpec {
            title: "Leakage against corrupt fraction",
            x: "fraction",
            ys: &["mean_success_rate"],
            group: &["topology"],
        },
    )
    .unwrap();
    assert_eq!(svg, out.file("topology_attack.svg").unwrap());
}

#[test]
fn same_seed_same_bytes_different_seed_different_rows() {
    let p = ExperimentParams::TopologyAttack(small_topology());
    let a = run_experiment(&config(p.clone())).unwrap();
    let b = run_experiment(&ExperimentConfig {
        workers: Some(1),
        ..config(p.clone())
    })
    .unwrap();
    assert_eq!(a.files, b.files);
    let c = run_experiment(&ExperimentConfig {
        master_seed: 8,
        ..config(p)
    })
    .unwrap();
    assert_ne!(a.file("components.csv"), c.file("components.csv"));
}

#[test]
fn config_parsing() {
    let cfg = ExperimentConfig::parse(
        ExperimentKind::TopologyAttack,
        "master_seed = 3\nruns = 12 # short\nfractions = 0.1,0.5\n",
        None,
    )
    .unwrap();
    let ExperimentParams::TopologyAttack(p) = &cfg.params else {
        panic!("wrong kind");
    };
    assert_eq!((cfg.master_seed, p.runs, p.fractions.clone()), (3, 12, vec![0.1, 0.5]));

    let over = ExperimentConfig::parse(ExperimentKind::TopologyAttack, "master_seed = 3\n", Some(9)).unwrap();
    assert_eq!(over.master_seed, 9);
    let mut threaded = over.clone();
    threaded.workers = Some(8);
    assert_eq!(threaded.hash(), over.hash());
    assert_ne!(cfg.hash(), over.hash());

    for bad in [
        "runs = 5\n",
        "master_seed = 1\nruns = x\n",
        "master_seed = 1\nmaster_seed = 2\n",
        "master_seed = 1\nnope = 1\n",
    ] {
        assert!(
            matches!(
                ExperimentConfig::parse(ExperimentKind::TopologyAttack, bad, None),
                Err(Error::Config(_))
            ),
            "{bad:?}"
        );
    }
    let reparsed = ExperimentConfig::parse(ExperimentKind::TopologyAttack, &cfg.canonical_text(), None).unwrap();
    assert_eq!(reparsed.params, cfg.params);
}

fn topoleak(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_topoleak"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_writes_outputs_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    std::fs::write(path("ok.cfg"), "master_seed = 4\nruns = 3\nn = 20\nm = 40\n").unwrap();
    let (code, stdout, _) = topoleak(&["consensus-check", "--config", &path("ok.cfg"), "--out", &path("cc")]);
    assert_eq!(code, 0, "{stdout}");
    for f in ["consensus_check.csv", "consensus_check.json", "run.json"] {
        assert!(dir.path().join("cc").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cc/consensus_check.json")).unwrap()).unwrap();
    assert_eq!(report["all_conditions_ok"], true);

    std::fs::write(path("bad.cfg"), "master_seed = 4\nwhat = 1\n").unwrap();
    assert_eq!(topoleak(&["consensus-check", "--config", &path("bad.cfg")]).0, 2);
    assert_eq!(topoleak(&["mi-curve", "--config", &path("missing.cfg")]).0, 2);

    // A 29-edge graph on 30 nodes is almost never a spanning tree.
    std::fs::write(path("sparse.cfg"), "master_seed = 4\nruns = 1\nn = 30\nm = 29\n").unwrap();
    let (code, _, stderr) = topoleak(&["consensus-check", "--config", &path("sparse.cfg"), "--out", &path("sp")]);
    assert_eq!(code, 3, "{stderr}");

    std::fs::write(path("path.txt"), "0 1\n1 2\n2 3\n3 4\n").unwrap();
    let (code, stdout, _) = topoleak(&["partition", "--edges", &path("path.txt"), "--corrupt", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["sizes"], serde_json::json!([2, 2]));
    assert_eq!(v["corrupt"], serde_json::json!([2]));

    std::fs::write(path("bad.txt"), "0 1\n1 1\n").unwrap();
    assert_eq!(topoleak(&["partition", "--edges", &path("bad.txt")]).0, 2);
}

// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use veracity_core::report::figures::{
    emit_figures, HEATMAP_FILE, RELIABILITY_FILE, TAXONOMY_BAR_FILE,
};
use veracity_core::report::{
    run_full, run_sweep, train, ReportBundle, RunConfig, BUNDLE_FILES, PROBE_FILE, SWEEP_CSV_FILE,
    SWEEP_JSON_FILE,
};
use veracity_core::synth::{generate, Regime, RegimeSpec};

fn dump_into(dir: &Path, regime: Regime, n: usize) {
    generate(&RegimeSpec::new(regime).with_n(n).with_seed(17))
        .unwrap()
        .write(dir)
        .unwrap();
}

fn file_names(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn bundle_has_exactly_the_listed_files() {
    let root = tempfile::tempdir().unwrap();
    let dump = root.path().join("dump");
    dump_into(&dump, Regime::Agreement, 300);
    let out = root.path().join("out");
    let bundle = run_full(&RunConfig::new(&dump, &out)).unwrap();
    let expected: BTreeSet<String> = BUNDLE_FILES.iter().map(|s| s.to_string()).collect();
    assert_eq!(file_names(&out), expected);
    assert!(bundle.accuracy.probe.accuracy >= 0.97);
    assert_eq!(bundle.accuracy.query.accuracy, 1.0);
    assert_eq!(bundle.meta.dump_manifest_sha256.len(), 64);
    assert!(bundle.meta.warnings.is_empty());
    let loaded = ReportBundle::load(&out).unwrap();
    assert_eq!(loaded, bundle);
}

#[test]
fn reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let dump = root.path().join("dump");
    dump_into(&dump, Regime::Heterogeneity, 400);
    let a = root.path().join("a");
    let b = root.path().join("b");
    run_full(&RunConfig::new(&dump, &a)).unwrap();
    run_full(&RunConfig::new(&dump, &b)).unwrap();
    for name in BUNDLE_FILES {
        if name == "run_meta.json" {
            continue; // records out_dir
        }
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn train_writes_a_loadable_probe() {
    let root = tempfile::tempdir().unwrap();
    let dump = root.path().join("dump");
    dump_into(&dump, Regime::Deception, 200);
    let out = root.path().join("out");
    let model = train(&RunConfig::new(&dump, &out)).unwrap();
    let text = fs::read_to_string(out.join(PROBE_FILE)).unwrap();
    assert_eq!(
        veracity_core::probe::ProbeModel::from_json(&text).unwrap(),
        model
    );
}

#[test]
fn sweep_has_one_row_per_penalty() {
    let root = tempfile::tempdir().unwrap();
    let dump = root.path().join("dump");
    dump_into(&dump, Regime::Deception, 400);
    let out = root.path().join("out");
    let report = run_sweep(&RunConfig::new(&dump, &out)).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.rows[0].sparsity, 0.0);
    for w in report.rows.windows(2) {
        assert!(w[1].sparsity >= w[0].sparsity);
    }
    assert!(out.join(SWEEP_JSON_FILE).exists());
    let csv = fs::read_to_string(out.join(SWEEP_CSV_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 5);
    for row in &report.rows {
        let total: f64 = row.fractions.values().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let root = tempfile::tempdir().unwrap();
    dump_into(&root.path().join("dump"), Regime::Agreement, 100);
    let path = root.path().join("run.json");
    fs::write(
        &path,
        r#"{"dump_dir": "dump", "out_dir": "out", "reg": {"l2_strength": 0.01}}"#,
    )
    .unwrap();
    let config = RunConfig::load(&path).unwrap();
    assert_eq!(config.dump_dir, root.path().join("dump"));
    assert_eq!(config.reg.l2_strength, 0.01);
    assert_eq!(config.reg.max_iterations, 10_000);
    run_full(&config).unwrap();
    assert!(root.path().join("out").join("accuracy.json").exists());
}

fn svg(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn figures_are_well_formed() {
    let root = tempfile::tempdir().unwrap();
    let dump = root.path().join("dump");
    dump_into(&dump, Regime::Deception, 300);
    let out = root.path().join("out");
    let bundle = run_full(&RunConfig::new(&dump, &out)).unwrap();
    let figures = root.path().join("figures");
    emit_figures(&bundle, &figures).unwrap();

    let text = svg(&figures.join(RELIABILITY_FILE));
    let doc = roxmltree::Document::parse(&text).unwrap();
    for source in ["probe", "query"] {
        let series = doc
            .descendants()
            .find(|n| {
                n.attribute("class") == Some("series") && n.attribute("data-source") == Some(source)
            })
            .unwrap();
        let points = series
            .descendants()
            .filter(|n| n.has_tag_name("circle") && n.attribute("class") == Some("point"))
            .count();
        assert_eq!(points, 10, "{source}");
    }

    let text = svg(&figures.join(HEATMAP_FILE));
    let doc = roxmltree::Document::parse(&text).unwrap();
    let cells: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("cell"))
        .collect();
    assert_eq!(cells.len(), 100);
    // Deception data leaves most cells empty, yet each is still drawn.
    let empty: Vec<_> = cells
        .iter()
        .filter(|c| c.attribute("data-count") == Some("0"))
        .collect();
    assert!(!empty.is_empty());
    for c in empty {
        assert_eq!(
            c.attribute("fill-opacity").unwrap().parse::<f64>().unwrap(),
            0.0
        );
    }

    let text = svg(&figures.join(TAXONOMY_BAR_FILE));
    let doc = roxmltree::Document::parse(&text).unwrap();
    let bars = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("bar"))
        .count();
    assert_eq!(bars, 9);
}

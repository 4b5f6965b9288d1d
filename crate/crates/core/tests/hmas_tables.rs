//! The composite score recomputed from published per-metric values.

use std::path::Path;

use wxdiag::composite::{read_metrics_csv, WeightScheme};
use wxdiag::pipeline::{build_hmas_tables, write_hmas_reports, HmasCell};

fn cells(name: &str) -> Vec<HmasCell> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    read_metrics_csv(&path).unwrap().iter().map(HmasCell::from).collect()
}

#[test]
fn published_tables_reproduce_within_a_thousandth() {
    for (name, lead) in [("hmas_day3.csv", 72), ("hmas_day5.csv", 120), ("hmas_day15.csv", 360)] {
        let cells = cells(name);
        assert_eq!(cells.len(), 10, "{name}");
        let tables = build_hmas_tables(&cells, &[WeightScheme::default_scheme()]).unwrap();
        assert_eq!(tables.len(), 1);
        let t = &tables[0];
        assert_eq!(t.lead_hours, lead);
        for r in &t.rows {
            let d = r.abs_diff.unwrap();
            assert!(d <= 1e-3 + 1e-12, "{name} {}: {} vs {:?}", r.model, r.hmas, r.published_hmas);
        }
        // Row order follows the recomputed score; the published order is
        // the same up to rounding ties.
        let published: Vec<f64> = t.rows.iter().map(|r| r.published_hmas.unwrap()).collect();
        assert!(published.windows(2).all(|w| w[0] >= w[1]), "{name}: {published:?}");
    }
}

#[test]
fn day5_anchor_rows() {
    let tables = build_hmas_tables(&cells("hmas_day5.csv"), &WeightScheme::standard_set()).unwrap();
    let t = &tables[0];
    let get = |m: &str| t.rows.iter().find(|r| r.model == m).unwrap();
    assert!((get("FCN3").hmas - 0.820).abs() <= 1e-3);
    assert!((get("FengWu").hmas - 0.382).abs() <= 1e-3);
    assert_eq!(t.rows[0].model, "FCN3");
    assert_eq!(t.rows.last().unwrap().model, "FengWu");
    let s = t.sensitivity.as_ref().unwrap();
    assert_eq!(s.schemes.len(), 5);
    assert!(s.kendall_w > 0.0 && s.kendall_w <= 1.0);
    assert!(t.pareto_front.contains(&"FCN3".to_string()));
    assert!(!t.pareto_front.contains(&"FengWu".to_string()) || t.pareto_front.len() > 1);
}

#[test]
fn day15_inflated_spectrum_row() {
    let tables = build_hmas_tables(&cells("hmas_day15.csv"), &[WeightScheme::default_scheme()]).unwrap();
    let fengwu = tables[0].rows.iter().find(|r| r.model == "FengWu").unwrap();
    assert_eq!(fengwu.metrics.l_eff, 1.0);
    assert!(fengwu.metrics.sfi < 0.2);
}

#[test]
fn report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let tables = build_hmas_tables(&cells("hmas_day5.csv"), &WeightScheme::standard_set()).unwrap();
    write_hmas_reports(dir.path(), 5, &tables).unwrap();
    let table = std::fs::read_to_string(dir.path().join("hmas_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("# wxdiag seed=5"));
    assert_eq!(
        lines.next(),
        Some("lead_hours,model,sfi,l_eff,tau_d,ees,pcs,asi,hmas,published_hmas,abs_diff")
    );
    assert_eq!(lines.count(), 10);
    let sens = std::fs::read_to_string(dir.path().join("hmas_sensitivity.csv")).unwrap();
    assert_eq!(sens.lines().count(), 2 + 5 * 10);
    let corr = std::fs::read_to_string(dir.path().join("hmas_correlation.csv")).unwrap();
    assert_eq!(corr.lines().count(), 2 + 36);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("hmas.json")).unwrap()).unwrap();
    assert_eq!(json["report"], "hmas");
    assert_eq!(json["data"][0]["rows"].as_array().unwrap().len(), 10);
}

use serde_json::Value;
use tvvar_wasm::{fit_paths_json, irf_json, stability_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn fit_paths_track_the_truth() {
    let v = parse(&fit_paths_json("eq43", 400, 1, 0.4, 9).unwrap());
    assert_eq!(v["tau"].as_array().unwrap().len(), 9);
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 4);
    for p in paths {
        let est = p["estimate"].as_array().unwrap();
        let truth = p["truth"].as_array().unwrap();
        let err: f64 = est
            .iter()
            .zip(truth)
            .map(|(e, t)| (e.as_f64().unwrap() - t.as_f64().unwrap()).abs())
            .sum::<f64>()
            / 9.0;
        assert!(err < 0.25, "mean abs error {err}");
        let lo = p["lower"][4].as_f64().unwrap();
        let hi = p["upper"][4].as_f64().unwrap();
        assert!(lo < hi);
    }
    assert_eq!(v["series"][0].as_array().unwrap().len(), 400);
}

#[test]
fn irf_view_shapes_and_impact() {
    for long_run in [false, true] {
        let v = parse(&irf_json("macro3", 300, 2, 0.5, 0.5, 8, long_run).unwrap());
        let est = &v["estimate"];
        assert_eq!(est.as_array().unwrap().len(), 3);
        assert_eq!(est[0][0].as_array().unwrap().len(), 9);
        if !long_run {
            // recursive ordering: no impact of shock 2 on variable 0
            assert_eq!(est[0][2][0].as_f64().unwrap(), 0.0);
            assert_eq!(v["truth"][0][2][0].as_f64().unwrap(), 0.0);
        }
        assert!(v["se"][1][0][3].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn stability_export_reports_p_value() {
    let v = parse(&stability_json(4.0, 300, 3, 0.6, 19).unwrap());
    let p = v["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(v["bootstrap_stats"].as_array().unwrap().len(), 19);
}

#[test]
fn bad_inputs_are_reported() {
    assert!(fit_paths_json("nope", 200, 1, 0.4, 5).unwrap_err().contains("unknown process"));
    assert!(fit_paths_json("eq43", 200, 1, 0.001, 5).is_err());
}

use citefusion_demo::Demo;
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn demo_head_learns_the_synthetic_task() {
    let demo = Demo::build(3).unwrap();
    assert!(demo.train_accuracy() > 0.8, "{}", demo.train_accuracy());
}

#[test]
fn aggregate_reports_every_rule() {
    let demo = Demo::build(3).unwrap();
    let z = [0.9, 0.2, 0.6, 0.7, 0.1, 0.1];
    let out = parse(demo.aggregate_json(&z, 0.5, &[0.5, 0.5, 0.5]).unwrap());
    assert_eq!(out["max"], "Method");
    assert_eq!(out["avg"], "Background");
    assert_eq!(out["majority"], "Background");
    // uniform weights reproduce the unweighted rules
    assert_eq!(out["w_max"], out["max"]);
    assert_eq!(out["w_avg"], out["avg"]);
    assert_eq!(out["w_maj"], out["majority"]);
    assert!(demo.aggregate_json(&z[..4], 0.5, &[0.5; 3]).is_err());
    assert!(demo.aggregate_json(&z, 0.5, &[1.5, 0.5, 0.5]).is_err());
}

#[test]
fn explanation_is_efficient() {
    let demo = Demo::build(3).unwrap();
    let out = parse(demo.explain_json(&[0.1, 0.2, 0.9, 0.8, 0.1, 0.3]).unwrap());
    let phi: Vec<f64> = out["phi"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let gap = out["value"].as_f64().unwrap() - out["baseline_value"].as_f64().unwrap();
    assert!((phi.iter().sum::<f64>() - gap).abs() < 1e-9);
    let p: f64 = out["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((p - 1.0).abs() < 1e-12);
}

#[test]
fn reliability_uses_the_fallback() {
    let demo = Demo::build(3).unwrap();
    let out = parse(demo.reliability_json(&[0.95, 0.03, 0.02], 0.9).unwrap());
    assert_eq!(out["reliable"], true);
    assert_eq!(out["cito"], "http://purl.org/spar/cito/usesMethodIn");
    let out = parse(demo.reliability_json(&[0.5, 0.3, 0.2], 0.9).unwrap());
    assert_eq!(out["reliable"], false);
    assert_eq!(out["cito"], "http://purl.org/spar/cito/citesForInformation");
    assert!(demo.reliability_json(&[0.5, 0.5], 0.9).is_err());
    assert!(demo.reliability_json(&[0.5, 0.3, 0.2], 0.0).is_err());
}

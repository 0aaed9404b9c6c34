//! Frozen reference values produced by tests/oracles/generate.py.

use std::path::Path;

use csvortex::radial_planar::{beta, beta_pair};
use csvortex::special::{bessel_i_scaled, bessel_k_scaled, e1, ein};
use csvortex::vortex_background::{green, green_gradient, green_regular};
use serde_json::Value;

fn table(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/oracles").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn pairs(v: &Value) -> Vec<(f64, f64)> {
    v.as_array().unwrap().iter().map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap())).collect()
}

fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
    let err = (got - want).abs() / want.abs().max(1e-300);
    assert!(err <= tol, "{what}: got {got:e}, want {want:e}, relative error {err:e}");
}

#[test]
fn green_function_matches_the_cosh_series() {
    let t = table("green.json");
    for row in t["displacements"].as_array().unwrap() {
        let d = [row["d"][0].as_f64().unwrap(), row["d"][1].as_f64().unwrap()];
        let g = green(d, [0.0, 0.0]).unwrap();
        assert!((g - row["g"].as_f64().unwrap()).abs() < 1e-12, "G at {d:?}: {g}");
        let grad = green_gradient(d, [0.0, 0.0]).unwrap();
        for c in 0..2 {
            assert!((grad[c] - row["grad"][c].as_f64().unwrap()).abs() < 1e-11, "∇G at {d:?}: {grad:?}");
        }
    }
}

#[test]
fn regular_part_at_the_origin_matches_the_kronecker_limit() {
    let want = table("green.json")["gamma_origin"].as_f64().unwrap();
    assert!((green_regular([0.0, 0.0]) - want).abs() < 1e-12);
}

#[test]
fn special_functions_match_mpmath() {
    let t = table("special.json");
    for (z, want) in pairs(&t["ein"]) {
        assert_rel(ein(z), want, 1e-13, "Ein");
    }
    for (z, want) in pairs(&t["e1"]) {
        assert_rel(e1(z), want, 1e-13, "E1");
    }
    for (name, nu) in [("k0_scaled", 0), ("k1_scaled", 1)] {
        for (x, want) in pairs(&t[name]) {
            assert_rel(bessel_k_scaled(nu, x), want, 1e-13, name);
        }
    }
    for (name, nu) in [("i0_scaled", 0), ("i1_scaled", 1)] {
        for (x, want) in pairs(&t[name]) {
            if want == 0.0 {
                assert!(bessel_i_scaled(nu, x).abs() < 1e-15);
            } else {
                assert_rel(bessel_i_scaled(nu, x), want, 1e-12, name);
            }
        }
    }
}

#[test]
fn bubble_flux_matches_an_independent_integration() {
    for row in table("beta.json")["rows"].as_array().unwrap() {
        let s = row["s"].as_f64().unwrap();
        let want = row["quadrature"].as_f64().unwrap();
        assert_rel(row["limit"].as_f64().unwrap(), want, 1e-10, "oracle self-consistency");
        let (limit, quadrature) = beta_pair(s).unwrap();
        assert_rel(limit, want, 1e-9, "β limit");
        assert_rel(quadrature, want, 1e-9, "β quadrature");
        assert_rel(beta(s).unwrap(), want, 1e-9, "β");
    }
}

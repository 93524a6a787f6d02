//! Browser bindings: three small operations returning JSON strings.

use chaoskit::bsde::{linear_multiplier, picard_solve, AffineGenerator};
use chaoskit::ergodicity::check_locally_ergodic;
use chaoskit::levy::{path_rng, sample_path};
use chaoskit::mc::{multiple_integral, verify_diagram};
use chaoskit::suite::{random_kernel, random_map, rng};
use chaoskit::{Atom, CellSet, ChaosVector, GridKernel, GroupSpec, LevyModel};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_LEVEL: u32 = 5;

fn model(sigma: f64, jump: f64, lambda: f64) -> Result<LevyModel, String> {
    let atoms = if jump != 0.0 { vec![Atom { x: jump, lambda }] } else { Vec::new() };
    LevyModel::new(sigma, atoms).map_err(|e| e.to_string())
}

fn check_level(level: u32) -> Result<(), String> {
    if level > MAX_LEVEL {
        return Err(format!("level is limited to {MAX_LEVEL} in the browser"));
    }
    Ok(())
}

/// Draws a random kernel, map and path, and compares both sides of the permutation identity.
pub fn diagram(sigma: f64, jump: f64, lambda: f64, level: u32, degree: usize, seed: u64) -> Result<String, String> {
    check_level(level)?;
    let m = model(sigma, jump, lambda)?;
    if degree == 0 || degree > 3 || degree > 1 << level {
        return Err("degree must be between 1 and min(3, 2^level)".into());
    }
    let mut r = rng(seed, 0);
    let f = random_kernel(degree, level, m.state_count(), 0.5, &mut r).map_err(|e| e.to_string())?;
    let g = random_map(level, &mut r).map_err(|e| e.to_string())?;
    let path = sample_path(&m, level, &mut path_rng(seed, 0));
    let permuted = path.permute(&g).map_err(|e| e.to_string())?;
    let value = multiple_integral(&permuted, &f, &m).map_err(|e| e.to_string())?;
    let residual = verify_diagram(&f, &g, &path, &m).map_err(|e| e.to_string())?;
    Ok(json!({
        "map": g,
        "entries": f.len(),
        "integral_on_permuted_path": value,
        "residual": residual,
    })
    .to_string())
}

/// Locally-ergodic check of a cell set (`"L:a..b"`) under all its permutations or the periodic shifts.
pub fn ergodic(set: &str, d_max: u32, periodic_shifts: bool) -> Result<String, String> {
    check_level(d_max)?;
    let set: CellSet = set.parse().map_err(|e: chaoskit::ChaosError| e.to_string())?;
    let group = if periodic_shifts {
        GroupSpec::periodic_shifts(d_max)
    } else {
        GroupSpec::restricted(&set, d_max)
    }
    .map_err(|e| e.to_string())?;
    let cert = check_locally_ergodic(&set, &group, d_max).map_err(|e| e.to_string())?;
    let failing: Vec<_> = cert.pairs.iter().filter(|p| !p.transitive).take(8).collect();
    Ok(json!({
        "passed": cert.passed,
        "pairs": cert.pairs.len(),
        "candidates": cert.candidates,
        "levels": cert.checked_levels,
        "first_failures": failing,
    })
    .to_string())
}

/// Picard solution of `Y_t = F + ∫_t^1 a Y_s ds − ∫ Z dM` with `F = 1 + X_1`, against `e^{a(1−t)}`.
pub fn linear_bsde(a: f64, level: u32, iterations: usize) -> Result<String, String> {
    check_level(level)?;
    let m = model(0.5, 1.0, 1.0)?;
    let states = m.state_count();
    let f1 = GridKernel::from_fn(1, level, states, |_| 1.0).map_err(|e| e.to_string())?;
    let terminal = ChaosVector::new(1.0, level, states, vec![f1]).map_err(|e| e.to_string())?;
    let run = picard_solve(&terminal, &AffineGenerator::linear(level, a), iterations, 1e-13, &m)
        .map_err(|e| e.to_string())?;
    let grid: Vec<f64> = run.state.y.iter().map(ChaosVector::constant).collect();
    Ok(json!({
        "times": (0..grid.len()).map(|t| t as f64 / (grid.len() - 1) as f64).collect::<Vec<_>>(),
        "grid": grid,
        "exact": linear_multiplier(a, level),
        "history": run.history,
        "converged": run.converged,
    })
    .to_string())
}

#[wasm_bindgen(js_name = diagram)]
pub fn diagram_js(sigma: f64, jump: f64, lambda: f64, level: u32, degree: usize, seed: u64) -> Result<String, JsError> {
    diagram(sigma, jump, lambda, level, degree, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = ergodic)]
pub fn ergodic_js(set: &str, d_max: u32, periodic_shifts: bool) -> Result<String, JsError> {
    ergodic(set, d_max, periodic_shifts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = linearBsde)]
pub fn linear_bsde_js(a: f64, level: u32, iterations: usize) -> Result<String, JsError> {
    linear_bsde(a, level, iterations).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn diagram_residual_vanishes() {
        let v = parse(&diagram(0.7, 1.2, 2.0, 4, 2, 3).unwrap());
        assert!(v["residual"].as_f64().unwrap() <= 1e-12);
        assert!(diagram(0.7, 1.2, 2.0, 1, 3, 3).is_err());
        assert!(diagram(0.0, 0.0, 1.0, 2, 1, 3).is_err());
    }

    #[test]
    fn ergodic_separates_groups() {
        assert_eq!(parse(&ergodic("1:0..1", 4, false).unwrap())["passed"], true);
        assert_eq!(parse(&ergodic("0:0..1", 4, true).unwrap())["passed"], false);
        assert!(ergodic("nonsense", 4, false).is_err());
    }

    #[test]
    fn bsde_tracks_exponential() {
        let v = parse(&linear_bsde(0.8, 4, 60).unwrap());
        let grid = v["grid"].as_array().unwrap();
        let exact = v["exact"].as_array().unwrap();
        assert_eq!(grid.len(), 17);
        for (g, e) in grid.iter().zip(exact) {
            assert!((g.as_f64().unwrap() - e.as_f64().unwrap()).abs() < 0.8 * 0.8 * 0.8f64.exp() / 16.0);
        }
    }
}

//! Browser bindings: a two-time qubit family explorer, a sweep of its
//! decoherence over the precession frequency, and document analysis.
//!
//! Every export returns a JSON string.

use histories::chain::{family_decoherence_matrix, is_consistent, is_weakly_consistent, weight_table};
use histories::coarse::{product_sum, verify_product_additivity};
use histories::demos::Demo;
use histories::io::{export_dot, parse_document, serialize_document, Document};
use histories::{BranchingFamily, ComplexMatrix, Decomposition, Evolution, InitialState, Projector, C64, DEFAULT_TOL};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Pair {
    a: String,
    b: String,
    discrepancy: f64,
    twice_re_d: f64,
}

#[derive(Serialize)]
struct Explorer {
    labels: Vec<String>,
    weights: Vec<f64>,
    sum: f64,
    decoherence: Vec<Vec<[f64; 2]>>,
    max_off_diagonal: f64,
    max_off_diagonal_re: f64,
    consistent: bool,
    weakly_consistent: bool,
    pairs: Vec<Pair>,
}

#[derive(Serialize)]
struct SweepPoint {
    omega: f64,
    max_off_diagonal: f64,
    max_off_diagonal_re: f64,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum Analysis {
    Ok {
        kind: &'static str,
        labels: Vec<String>,
        weights: Vec<f64>,
        sum: f64,
        branching: bool,
        consistent: bool,
        dot: Option<String>,
    },
    Error {
        message: String,
    },
}

/// Computational basis at t = 0, then the basis `{|θ⟩, |θ⊥⟩}` with
/// `|θ⟩ = cos(θ/2)|0⟩ + sin(θ/2)|1⟩` at t = 1, under `H = (ω/2)σx` and
/// `ρ = λ|+⟩⟨+| + (1 − λ)I/2`.
pub fn two_time_family(theta: f64, omega: f64, purity: f64) -> Result<BranchingFamily, String> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let r = |x: f64| C64::new(x, 0.0);
    let rotated = Decomposition::from_projectors(
        vec![Projector::onto(&[r(c), r(s)]), Projector::onto(&[r(-s), r(c)])],
        DEFAULT_TOL,
    )
    .map_err(|e| e.to_string())?;
    let h =
        ComplexMatrix::from_real_rows(&[vec![0.0, omega / 2.0], vec![omega / 2.0, 0.0]]).map_err(|e| e.to_string())?;
    let evolution = Evolution::hamiltonian(h).map_err(|e| e.to_string())?;
    let lambda = purity.clamp(0.0, 1.0);
    let rho = ComplexMatrix::from_real_rows(&[vec![0.5, lambda / 2.0], vec![lambda / 2.0, 0.5]])
        .map_err(|e| e.to_string())?;
    BranchingFamily::from_product(
        2,
        &[0.0, 1.0],
        &[Decomposition::computational(2), rotated],
        InitialState::Explicit(rho),
        evolution,
    )
    .map_err(|e| e.to_string())
}

fn explore(theta: f64, omega: f64, purity: f64) -> Result<Explorer, String> {
    let family = two_time_family(theta, omega, purity)?;
    let table = weight_table(&family).map_err(|e| e.to_string())?;
    let d = family_decoherence_matrix(&family).map_err(|e| e.to_string())?;
    let labels: Vec<String> = table.leaves().iter().map(|id| id.to_string()).collect();
    let histories = family.histories().map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for i in 0..histories.len() {
        for j in i + 1..histories.len() {
            if product_sum(&histories[i], &histories[j], DEFAULT_TOL).is_err() {
                continue;
            }
            let add = verify_product_additivity(
                &histories[i],
                &histories[j],
                family.evolution(),
                family.initial_state(),
                DEFAULT_TOL,
            )
            .map_err(|e| e.to_string())?;
            pairs.push(Pair {
                a: labels[i].clone(),
                b: labels[j].clone(),
                discrepancy: add.discrepancy,
                twice_re_d: 2.0 * d.get(i, j).re,
            });
        }
    }
    let (max_off_diagonal, max_off_diagonal_re) = d.off_diagonal_max();
    Ok(Explorer {
        decoherence: (0..d.size())
            .map(|a| (0..d.size()).map(|b| [d.get(a, b).re, d.get(a, b).im]).collect())
            .collect(),
        sum: table.sum(),
        weights: table.weights().to_vec(),
        labels,
        max_off_diagonal,
        max_off_diagonal_re,
        consistent: is_consistent(&d, DEFAULT_TOL),
        weakly_consistent: is_weakly_consistent(&d, DEFAULT_TOL),
        pairs,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn error_json(message: String) -> String {
    to_json(&Analysis::Error { message })
}

/// Weights, decoherence matrix and additivity discrepancies of the
/// two-time family.
#[wasm_bindgen]
pub fn explore_two_time(theta: f64, omega: f64, purity: f64) -> String {
    match explore(theta, omega, purity) {
        Ok(e) => to_json(&e),
        Err(message) => error_json(message),
    }
}

/// Largest off-diagonal decoherence of the two-time family at `samples`
/// evenly spaced frequencies in `[0, omega_max]`.
#[wasm_bindgen]
pub fn sweep_omega(theta: f64, purity: f64, omega_max: f64, samples: u32) -> String {
    let samples = samples.clamp(2, 2000);
    let mut points = Vec::with_capacity(samples as usize);
    for k in 0..samples {
        let omega = omega_max * k as f64 / (samples - 1) as f64;
        match explore(theta, omega, purity) {
            Ok(e) => points.push(SweepPoint {
                omega,
                max_off_diagonal: e.max_off_diagonal,
                max_off_diagonal_re: e.max_off_diagonal_re,
            }),
            Err(message) => return error_json(message),
        }
    }
    to_json(&points)
}

/// Parses a family or history-set document and reports its weights, and a
/// DOT rendering when it is a branching family.
#[wasm_bindgen]
pub fn analyze_document(text: &str) -> String {
    let doc = match parse_document(text) {
        Ok(doc) => doc,
        Err(e) => return error_json(e.to_string()),
    };
    let family = match &doc {
        Document::Family(f) => Some(f.clone()),
        Document::Histories(set) => set.to_branching_family(DEFAULT_TOL).ok(),
    };
    let result = match &doc {
        Document::Family(f) => weight_table(f).and_then(|t| {
            let d = family_decoherence_matrix(f)?;
            Ok((
                "family",
                t.leaves().iter().map(|id| id.to_string()).collect::<Vec<_>>(),
                t.weights().to_vec(),
                is_consistent(&d, DEFAULT_TOL),
            ))
        }),
        Document::Histories(set) => {
            let weights: Result<Vec<f64>, _> = set
                .histories
                .iter()
                .map(|h| histories::chain::weight(h, &set.evolution, &set.rho))
                .collect();
            weights.and_then(|w| {
                let d = histories::chain::decoherence_matrix(&set.histories, &set.evolution, &set.rho)?;
                Ok((
                    "histories",
                    (1..=w.len()).map(|i| format!("h{i}")).collect(),
                    w,
                    is_consistent(&d, DEFAULT_TOL),
                ))
            })
        }
    };
    match result {
        Ok((kind, labels, weights, consistent)) => to_json(&Analysis::Ok {
            kind,
            sum: weights.iter().sum(),
            labels,
            weights,
            branching: family.is_some(),
            consistent,
            dot: family.and_then(|f| export_dot(&f, true).ok()),
        }),
        Err(e) => error_json(e.to_string()),
    }
}

/// The canonical document of a built-in example, or an empty string.
#[wasm_bindgen]
pub fn demo_document(name: &str) -> String {
    Demo::from_name(name)
        .map(|d| serialize_document(&d.document()))
        .unwrap_or_default()
}

// Scratch probe: check whether a candidate emergence dataset reproduces the
// published continuation-ratio fit. Not part of the deliverable test suite.

use nalgebra::DVector;
use polylink::design::{DesignSpec, Term};
use polylink::fit::{fisher_scoring, FitOptions};
use polylink::inference::wald_ci;
use polylink::link::Link;
use polylink::model::{Family, ModelSpec};
use polylink::Dataset;

fn main() {
    let doses = [80.0, 100.0, 120.0, 140.0, 160.0, 180.0, 200.0];
    let counts: Vec<Vec<u64>> = vec![
        vec![62, 5, 433],
        vec![94, 24, 382],
        vec![179, 60, 261],
        vec![335, 80, 85],
        vec![432, 46, 22],
        vec![487, 11, 2],
        vec![498, 2, 0],
    ];
    let settings: Vec<Vec<f64>> = doses.iter().map(|&d| vec![d]).collect();
    let data = Dataset::new(vec!["dose".into()], settings, counts).unwrap();
    println!("n = {}", data.total_n());

    let spec = ModelSpec::with_link(3, Family::Continuation, Link::Logit).unwrap();
    let design = DesignSpec::ppo(
        2,
        vec!["dose".into()],
        &[
            vec![Term::Intercept, Term::Linear(0), Term::Quadratic(0)],
            vec![Term::Intercept, Term::Linear(0)],
        ],
        &[],
    )
    .unwrap();
    let options = FitOptions {
        epsilon: 1e-12,
        ..FitOptions::default()
    };
    let fit = fisher_scoring(&spec, &design, &data, &options).unwrap();
    println!("converged: {} in {} iterations", fit.converged, fit.iterations);
    println!("labels: {:?}", fit.param_labels);
    println!("theta: {:?}", fit.theta.as_slice());
    println!("loglik: {:.6}  aic: {:.4}  bic: {:.4}", fit.loglik, fit.aic, fit.bic);
    let target = DVector::from_column_slice(&[-1.935, -0.02642, 0.0003174, -9.159, 0.06386]);
    for (i, (&got, &want)) in fit.theta.iter().zip(target.iter()).enumerate() {
        println!("  theta[{i}]: got {got:.6e}  want {want:.6e}  rel {:.2e}", ((got - want) / want).abs());
    }
    match wald_ci(&fit, 0.05) {
        Ok(cis) => {
            for ci in &cis {
                println!("{}: {:.5} ({:.5}, {:.5})", ci.label, ci.estimate, ci.lower, ci.upper);
            }
        }
        Err(e) => println!("CI error: {e}"),
    }

    // Reduced model: drop the linear dose term from category 1.
    let reduced = DesignSpec::ppo(
        2,
        vec!["dose".into()],
        &[
            vec![Term::Intercept, Term::Quadratic(0)],
            vec![Term::Intercept, Term::Linear(0)],
        ],
        &[],
    )
    .unwrap();
    let red_fit = fisher_scoring(&spec, &reduced, &data, &options).unwrap();
    println!("reduced: loglik {:.6}  bic {:.4}", red_fit.loglik, red_fit.bic);
}

//! Derived constants for a few parameter points, and how the key scaled
//! quantities behave as `eps -> 0` at fixed `(nu, alpha, J, rho)`.
//!
//! Run with: `cargo run --release --example constants`

use hsep::model::derive_constants;
use hsep::transform::z_tilde_factor;
use hsep::ModelParams;

fn main() {
    println!("== one parameter point in full ==");
    let p = ModelParams::from_eps(0.2, 0.25, 1.0, 3, 0.5).expect("valid parameters");
    let c = derive_constants(&p);
    println!(
        "eps={} q={:.6} nu={} alpha={} J={} rho={}",
        p.eps(),
        p.q,
        p.nu,
        p.alpha,
        p.j_phases,
        p.rho
    );
    println!("gamma   = {:.12}", c.gamma);
    println!("b, b'   = {:.12}, {:.12}", c.b, c.b_prime);
    println!("r_star  = {:.12}  (1 / (b - b'))", c.r_star);
    for s in 0..p.j_phases as u64 {
        println!(
            "phase {s}: alpha_s={:.6} a={:.12} mu={:.12} lambda={:.12} sigma={:.12}",
            p.alpha_at(s),
            c.a[s as usize],
            c.mu_at(s),
            c.lambda_at(s),
            c.sigma_at(s),
        );
    }
    println!(
        "per-period drift sum = {:.12}, sigma period sum = {:.12}",
        (0..p.j_phases as u64).map(|s| c.mu_at(s)).sum::<f64>(),
        c.sigma_period_sum(),
    );
    println!(
        "steps per unit scaled time = {:.3}",
        c.steps_of_tau(&p, 1.0)
    );

    println!();
    println!("== eps -> 0 trends at (nu, alpha, J, rho) = (0.25, 1, 1, 0.5) ==");
    println!(
        "{:>6} {:>14} {:>14} {:>14} {:>16}",
        "eps", "(lambda-1)/eps", "sigma/eps", "delta-norm", "steps per tau"
    );
    for eps in [0.4, 0.2, 0.1, 0.05, 0.025] {
        let p = ModelParams::from_eps(eps, 0.25, 1.0, 1, 0.5).expect("valid parameters");
        let c = derive_constants(&p);
        println!(
            "{:>6} {:>14.8} {:>14.8} {:>14.6} {:>16.1}",
            eps,
            (c.lambda_at(0) - 1.0) / eps,
            c.sigma_at(0) / eps,
            z_tilde_factor(&p, &c),
            c.steps_of_tau(&p, 1.0),
        );
    }
    println!();
    println!("(lambda-1)/eps and sigma/eps converge to finite limits; the");
    println!("delta normalisation and the step count diverge like 1/eps and");
    println!("eps^-3 -- that is the weak (KPZ) scaling window.");
}

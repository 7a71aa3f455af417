//! KPZ-scaled readings of the transformed field: run one trajectory from
//! each initial condition and sample `Z_eps(tau, r)` on a `(tau, r)` grid by
//! bilinear interpolation, plus the spatial roughness exponent of the
//! near-equilibrium log field.
//!
//! Run with: `cargo run --release --example scaled_field`

use hsep::dynamics::run_trajectory;
use hsep::env::BernoulliEnv;
use hsep::model::derive_constants;
use hsep::transform::{
    make_near_equilibrium_ic, make_step_ic, z_tilde_factor, ScaledSampler,
};
use hsep::verify::spatial_structure_probe;
use hsep::ModelParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let p = ModelParams::from_eps(0.1, 0.25, 1.0, 1, 0.8).expect("valid parameters");
    let c = derive_constants(&p);
    let taus = [0.1, 0.3, 0.5];
    let rs = [-1.0, -0.5, 0.0, 0.5, 1.0];

    println!("== one step-data trajectory, delta-normalised field ==");
    let mut sampler = ScaledSampler::new(&p, &c, &taus, &rs);
    let t_end = sampler.last_time();
    let mut cfg = make_step_ic((t_end + 16) as usize);
    let env = BernoulliEnv::new(42, 0);
    run_trajectory(&mut cfg, &p, &env, 0, t_end, |t, pre, _| sampler.record(t, pre));
    sampler.record(t_end, &cfg);
    let norm = z_tilde_factor(&p, &c);
    print!("{:>8}", "tau \\ r");
    for r in rs {
        print!("{r:>10.2}");
    }
    println!();
    for (ti, &tau) in taus.iter().enumerate() {
        print!("{tau:>8.2}");
        for ri in 0..rs.len() {
            let z = sampler.finish()[ti * rs.len() + ri].z * norm;
            print!("{z:>10.4}");
        }
        println!();
    }
    println!("(one realisation of a narrowing random heat profile)");

    println!();
    println!("== one near-equilibrium trajectory, raw field ==");
    let mut sampler = ScaledSampler::new(&p, &c, &taus, &rs);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lo = -(t_end as i64) - 60;
    let mut cfg = make_near_equilibrium_ic(&p, lo, t_end as i64 + 16, &mut rng);
    let env = BernoulliEnv::new(43, 0);
    run_trajectory(&mut cfg, &p, &env, 0, t_end, |t, pre, _| sampler.record(t, pre));
    sampler.record(t_end, &cfg);
    for (ti, &tau) in taus.iter().enumerate() {
        print!("{tau:>8.2}");
        for ri in 0..rs.len() {
            let z = sampler.finish()[ti * rs.len() + ri].z;
            print!("{z:>10.4}");
        }
        println!();
    }
    println!("(order-one rough field: statistically stationary in space)");

    println!();
    println!("== spatial roughness of the near-equilibrium log field ==");
    let probe = spatial_structure_probe(&p, &c, 400, &[1, 2, 4, 8, 16, 32], 400, 8, 2026);
    println!(
        "fitted exponent {:.4} +- {:.4} (Brownian roughness = 1/2)",
        probe.exponent, probe.exponent_se
    );
}

// temporary probe - will be deleted
use nalgebra::DVector;
use rand::Rng;
use std::time::Duration;
use whmc_core::geometry::{Mode, ModeLibrary};
use whmc_core::linalg::fd_hessian_from_grad;
use whmc_core::metrics::{mode_occupancy, rem};
use whmc_core::modesearch::bfgs_minimize;
use whmc_core::samplers::{run_chain, ChainBudget, SamplerConfig, SamplerVariant};
use whmc_core::seeding::seeded_rng;
use whmc_core::targets::{generate_sensor_data, TargetDensity};

fn sensor_library(seed: u64) -> (whmc_core::targets::SensorNetworkTarget, ModeLibrary) {
    let (target, _) = generate_sensor_data(seed);
    let mut rng = seeded_rng(1000 + seed);
    let mut minima: Vec<DVector<f64>> = Vec::new();
    for _ in 0..60 {
        let x0 = DVector::from_fn(16, |_, _| rng.random::<f64>());
        let r = bfgs_minimize(
            |x| -target.log_density(x),
            |x| -target.grad_log_density(x),
            &x0,
            1e-5,
            600,
        );
        if target.grad_log_density(&r.x).amax() < 1e-3
            && !minima.iter().any(|m| (m - &r.x).norm() < 0.05)
        {
            minima.push(r.x.clone());
        }
    }
    let modes: Vec<Mode> = minima
        .iter()
        .filter_map(|m| {
            let h = fd_hessian_from_grad(|x| target.grad_log_density(x), m);
            Mode::new(m.clone(), h, 1.0).ok()
        })
        .collect();
    println!("library size {}", modes.len());
    (target, ModeLibrary::new(modes))
}

#[test]
#[ignore]
fn probe_sensor_rem() {
    let (target, library) = sensor_library(7);
    // cheap reference: longer whmc run
    let mut cfg_ref = SamplerConfig::new(SamplerVariant::WhmcAug, 0.01, 30);
    cfg_ref.world_offset = 1.0;
    let reference = whmc_core::metrics::reference_mean_longrun(
        &target, &library, &cfg_ref, 8, 30_000, 3_000, 500,
    )
    .unwrap();
    println!("reference computed");
    for (variant, e, l, h) in [
        (SamplerVariant::WhmcAug, 0.01, 30usize, 1.0),
        (SamplerVariant::WhmcAug, 0.02, 25, 1.0),
        (SamplerVariant::WhmcAug, 0.01, 30, 0.5),
        (SamplerVariant::Hmc, 0.01, 30, 1.0),
        (SamplerVariant::Hmc, 0.02, 25, 1.0),
    ] {
        let mut cfg = SamplerConfig::new(variant, e, l);
        cfg.world_offset = h;
        let budget = ChainBudget::with_wall_limit(usize::MAX, Duration::from_secs(30));
        let trace = run_chain(
            &library.modes()[0].location.clone(),
            &target,
            Some(&library),
            &cfg,
            &budget,
            321,
        )
        .unwrap();
        let curve = rem(&trace, &reference).unwrap();
        let occ = mode_occupancy(&trace, &library);
        let zero_occ = occ.iter().filter(|o| **o == 0.0).count();
        println!(
            "{variant:?} e={e} L={l} h={h}: iters {} accept {:.2} jumps {} REM {:.4} zero-occ-modes {}/{}",
            trace.len(),
            trace.acceptance_rate(),
            trace.jump_count(),
            curve.last().unwrap().rem,
            zero_occ,
            library.len()
        );
    }
}

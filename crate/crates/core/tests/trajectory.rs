use std::f64::consts::FRAC_PI_4;

use cqed_bayes::field::ModelParams;
use cqed_bayes::trajectory::{run_ensemble, run_trajectory, run_trajectory_with_noise, Integrator, Scheme, SimConfig, TrajectoryRecord};

fn resonant_pi4() -> ModelParams {
    ModelParams::new(0.0, 0.1, 1.0, 2.0, FRAC_PI_4)
}

/// Final-state fidelity between a run at `dt` and one at `dt/2` driven by the same Brownian path.
fn refinement_gap(dt: f64, seed: u64, integrator: Integrator) -> f64 {
    let mut fine = SimConfig::new(resonant_pi4(), dt / 2.0, 1.0);
    fine.seed = seed;
    fine.snapshot_every = Some(1.0);
    fine.integrator = integrator;
    let a = run_trajectory(&fine).unwrap();
    let coarse_dw: Vec<Vec<f64>> = a.dw.iter().map(|c| c.chunks(2).map(|w| w[0] + w[1]).collect()).collect();
    let coarse = SimConfig { dt, ..fine.clone() };
    let b = run_trajectory_with_noise(&coarse, &coarse_dw).unwrap();
    let sa = &a.snapshots.last().unwrap().state;
    let sb = &b.snapshots.last().unwrap().state;
    1.0 - sa.inner(sb).unwrap().norm_sqr()
}

#[test]
fn paired_refinement_converges() {
    for integrator in [Integrator::EulerMaruyama, Integrator::Milstein] {
        let mut gaps = Vec::new();
        for dt in [4e-3, 2e-3, 1e-3, 5e-4] {
            let g: f64 = (0..8).map(|s| refinement_gap(dt, s, integrator)).sum::<f64>() / 8.0;
            gaps.push(g);
        }
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "{integrator:?}: {gaps:?}");
        }
        assert!(gaps[3] < 1e-4, "{integrator:?}: {gaps:?}");
    }
}

#[test]
fn increments_have_unit_diffusion() {
    let mut cfg = SimConfig::new(resonant_pi4(), 1e-3, 1.0);
    cfg.scheme = Scheme::TwoQuadrature;
    cfg.snapshot_every = None;
    cfg.record_qubit = false;
    let stats = run_ensemble(&cfg, 20, |_, c| {
        let r = run_trajectory(c)?;
        let all: Vec<f64> = r.dw.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let m = all.iter().sum::<f64>() / n;
        Ok((m, all.iter().map(|x| x * x).sum::<f64>() / n))
    })
    .unwrap();
    let n: f64 = 20.0 * 2000.0;
    let mean = stats.iter().map(|s| s.0).sum::<f64>() / 20.0;
    let var = stats.iter().map(|s| s.1).sum::<f64>() / 20.0;
    assert!(mean.abs() < 4.0 * (1e-3 / n).sqrt(), "mean {mean}");
    assert!((var / 1e-3 - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "var {var}");
}

#[test]
fn records_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SimConfig::new(resonant_pi4(), 1e-3, 0.5);
    cfg.scheme = Scheme::TwoQuadrature;
    cfg.seed = 99;
    let rec = run_trajectory(&cfg).unwrap();
    let hash = rec.write_dir(dir.path(), &cfg).unwrap();
    let (back, meta) = TrajectoryRecord::read_dir(dir.path()).unwrap();
    assert_eq!(meta.record_sha1, hash);
    assert_eq!(meta.config, cfg);
    assert_eq!(back.samples, rec.samples);
    assert_eq!(back.dw, rec.dw);
    let again = run_trajectory_with_noise(&cfg, &back.dw).unwrap();
    assert_eq!(again.samples, rec.samples);
}

use coldmem_core::analytic::DetectionModel;
use coldmem_core::ensemble::{sample_ensemble, Ballistics, Retrieval, DEFAULT_PENCIL_LENGTH};
use coldmem_core::fit::{fit_decay, FitOptions, ModelKind};
use coldmem_core::photon::{synthesize_curve, GammaEngine, Scenario};
use coldmem_core::physics::{spin_wave_vector, BeamGeometry, EnsembleParams};
use coldmem_core::runner::{ChunkRunner, Sequential};
use coldmem_core::zeeman::ZeemanConfig;

/// Splits work across scoped threads in interleaved order.
struct Threads(usize);

impl ChunkRunner for Threads {
    fn map_indexed<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
        let parts: Vec<Vec<(usize, T)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..self.0)
                .map(|k| {
                    let f = &f;
                    s.spawn(move || (k..count).step_by(self.0).map(|i| (i, f(i))).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (i, v) in parts.into_iter().flatten() {
            slots[i] = Some(v);
        }
        slots.into_iter().map(Option::unwrap).collect()
    }
}

fn scenario(engine: GammaEngine) -> Scenario {
    Scenario {
        ensemble: EnsembleParams {
            atom_count: 20_000,
            ..EnsembleParams::default()
        },
        geometry: BeamGeometry::from_degrees(3.0),
        zeeman: ZeemanConfig::clock(),
        detection: DetectionModel {
            chi: 0.001,
            eta_s: 0.3,
            eta_as: 0.3,
            background: 0.1,
        },
        pencil_length: DEFAULT_PENCIL_LENGTH,
        ballistics: Ballistics::default(),
        engine,
    }
}

fn delays() -> Vec<f64> {
    (0..14).map(|i| 0.5e-6 + 5e-6 * i as f64).collect()
}

#[test]
fn analytic_round_trip_recovers_lifetime() {
    let s = scenario(GammaEngine::Analytic);
    let curve = synthesize_curve(&Sequential, &s, &delays(), 10_000_000, 11).unwrap();
    assert_eq!(curve.len(), 14);
    let fit = fit_decay(&curve, ModelKind::Gaussian, &FitOptions::default()).unwrap();
    assert!((fit.lifetime - 24.71e-6).abs() < 3.0 * fit.lifetime_sigma, "{fit:?}");
    assert!(fit.chi2_reduced < 3.0);
}

#[test]
fn monte_carlo_and_analytic_engines_agree() {
    let mc = scenario(GammaEngine::MonteCarlo)
        .gamma_curve(&Sequential, &delays(), 3)
        .unwrap();
    let an = scenario(GammaEngine::Analytic)
        .gamma_curve(&Sequential, &delays(), 3)
        .unwrap();
    for (a, b) in mc.iter().zip(&an) {
        assert!((a - b).abs() < 5.0 / (20_000f64).sqrt(), "{a} vs {b}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = scenario(GammaEngine::MonteCarlo);
    let base = synthesize_curve(&Sequential, &s, &delays(), 1_000_000, 5).unwrap();
    for n in [2, 3, 8] {
        let other = synthesize_curve(&Threads(n), &s, &delays(), 1_000_000, 5).unwrap();
        assert_eq!(base, other, "{n} threads");
    }
}

#[test]
fn retrieval_breakdown_multiplies() {
    let s = scenario(GammaEngine::MonteCarlo);
    let sample = sample_ensemble(&s.ensemble, s.pencil_length, 9).unwrap();
    let sw = spin_wave_vector(&s.geometry, &s.ensemble.species).unwrap();
    let zeeman = ZeemanConfig {
        field_gradient: 0.05,
        ..ZeemanConfig::new(
            coldmem_core::zeeman::Sublevel::new(1, 1),
            coldmem_core::zeeman::Sublevel::new(2, 1),
            3.2e-4,
            0.0,
        )
    };
    let r = Retrieval {
        sample: &sample,
        spin_wave: &sw,
        zeeman: &zeeman,
        waist: s.ensemble.cloud_radius,
        ballistics: Ballistics { gravity: true },
    };
    let b = r.breakdown_with(&Threads(4), 20e-6).unwrap();
    assert!(b.magnetic < 1.0 && b.motional < 1.0 && b.survival <= 1.0);
    assert_eq!(r.combined_with(&Sequential, 20e-6).unwrap(), b.combined());
}

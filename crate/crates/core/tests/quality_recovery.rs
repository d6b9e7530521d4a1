use std::time::Instant;

use clarify_core::quality::{fit_mle, FitConfig, LikelihoodForm, QualityDataset, QualityObservation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Beta laws with closed-form inverse CDFs.
#[derive(Clone, Copy)]
enum Law {
    /// Beta(a, 1): F⁻¹(u) = u^(1/a)
    A(f64),
    /// Beta(1, b): F⁻¹(u) = 1 − (1 − u)^(1/b)
    B(f64),
}

impl Law {
    fn sample(self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        match self {
            Law::A(a) => u.powf(1.0 / a),
            Law::B(b) => 1.0 - (1.0 - u).powf(1.0 / b),
        }
    }

    fn mean(self) -> f64 {
        match self {
            Law::A(a) => a / (a + 1.0),
            Law::B(b) => 1.0 / (1.0 + b),
        }
    }
}

fn simulate(laws: &[Law], tau: &[f64], per_backend: usize, seed: u64) -> QualityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::new();
    for (l, law) in laws.iter().enumerate() {
        let mut n = 0;
        let mut k = 1u32;
        while n < per_backend {
            let e = law.sample(&mut rng);
            let t = tau[(k as usize - 1).min(tau.len() - 1)];
            let accepted = e > t;
            observations.push(QualityObservation { k, backend: l, accepted, e: accepted.then_some(e) });
            n += 1;
            k = if accepted { 1 } else { k + 1 };
        }
    }
    QualityDataset { backends: (0..laws.len()).map(|i| format!("m{i}")).collect(), observations }
}

#[test]
fn recovers_means_from_censored_sample() {
    let laws = [Law::A(5.0), Law::A(2.0), Law::B(0.25), Law::B(1.5)];
    let tau = [0.6, 0.5, 0.4];
    let data = simulate(&laws, &tau, 2000, 42);
    assert_eq!(data.observations.len(), 8000);
    let cfg = FitConfig { n_thresholds: Some(3), ..Default::default() };
    let start = Instant::now();
    let fit = fit_mle(&data, &cfg, LikelihoodForm::StandardCensored).unwrap();
    let elapsed = start.elapsed();
    for (law, b) in laws.iter().zip(&fit.backends) {
        let m = b.mean.unwrap();
        println!("true {:.4} fitted {:.4} params {:?}", law.mean(), m, b.params);
        assert!((m - law.mean()).abs() <= 0.02, "{} vs {}", m, law.mean());
    }
    println!("tau {:?} iters {} converged {} in {:?}", fit.thresholds.tau, fit.iterations, fit.converged, elapsed);
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn product_form_fit_is_monotone() {
    let laws = [Law::A(5.0), Law::B(0.5)];
    let data = simulate(&laws, &[0.6, 0.5, 0.4], 500, 7);
    let fit = fit_mle(&data, &FitConfig { n_thresholds: Some(3), ..Default::default() }, LikelihoodForm::PaperProduct).unwrap();
    assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(fit.log_likelihood >= fit.trace[0]);
    assert!(fit.thresholds.tau.iter().all(|t| *t > 0.0 && *t < 1.0));
}

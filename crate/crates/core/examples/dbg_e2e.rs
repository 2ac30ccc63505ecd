use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::config::PipelineConfig;
use robustmix::contamination::{strong_contaminate, AttackStrategy, ContaminationModel, ContaminationSpec};
use robustmix::model::{sample_mixture, tv_monte_carlo, GaussianComponent, GaussianMixture};
use robustmix::pipeline::learn_gmm;
use std::time::Instant;

fn main() {
    let d = 6;
    let mut cov2 = DMatrix::<f64>::identity(d, d);
    cov2[(0, 0)] = 2.0;
    let mut mu2 = DVector::zeros(d);
    mu2[0] = 3.0;
    let truth = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![
            GaussianComponent::standard(d),
            GaussianComponent::new(mu2, cov2).unwrap(),
        ],
    )
    .unwrap();
    let n = 100_000;
    let eps = 0.02;
    let spec = ContaminationSpec {
        model: ContaminationModel::Strong,
        eps,
        strategy: AttackStrategy::FarCluster,
        location_scale: 100.0,
    };
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut ok = 0;
    for seed in 0..seeds {
        let t0 = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let (xa, la) = sample_mixture(&truth, n, &mut rng);
        let ya = strong_contaminate(&xa, &la, &spec, &mut rng).unwrap().points;
        let (xb, lb) = sample_mixture(&truth, n, &mut rng);
        let yb = strong_contaminate(&xb, &lb, &spec, &mut rng).unwrap().points;
        let gen_s = t0.elapsed().as_secs_f64();
        let cfg = PipelineConfig::default();
        let t1 = Instant::now();
        match learn_gmm(&ya, &yb, 2, eps, &cfg, 4242 + seed) {
            Ok((hyp, report)) => {
                let learn_s = t1.elapsed().as_secs_f64();
                let mut rng2 = ChaCha8Rng::seed_from_u64(777);
                let tv = tv_monte_carlo(&truth, &hyp.mixture, 20_000, 1e-9, &mut rng2).unwrap();
                if tv.value <= 0.2 { ok += 1; }
                println!("seed {seed}: tv {:.4} +- {:.4} | gen {gen_s:.1}s learn {learn_s:.1}s | non_null {} winner {} trace {}",
                         tv.value, tv.stderr, report.non_null, report.winner_index, report.winner_provenance);
            }
            Err(e) => println!("seed {seed}: FAILED {e}"),
        }
    }
    println!("ok {ok}/{seeds}");
}

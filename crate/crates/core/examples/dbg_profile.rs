use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::config::{BranchSchedule, PipelineConfig};
use robustmix::contamination::{strong_contaminate, AttackStrategy, ContaminationModel, ContaminationSpec};
use robustmix::model::{sample_mixture, tv_monte_carlo, GaussianComponent, GaussianMixture};
use robustmix::pipeline::cluster_or_decode;
use std::time::Instant;

fn main() {
    let d = 6;
    let mut cov2 = DMatrix::<f64>::identity(d, d);
    cov2[(0, 0)] = 2.0;
    let mut mu2 = DVector::zeros(d);
    mu2[0] = 3.0;
    let truth = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![GaussianComponent::standard(d), GaussianComponent::new(mu2, cov2).unwrap()],
    ).unwrap();
    let n = 100_000;
    let eps = 0.02;
    let spec = ContaminationSpec { model: ContaminationModel::Strong, eps, strategy: AttackStrategy::FarCluster, location_scale: 100.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let t0 = Instant::now();
    let (xa, la) = sample_mixture(&truth, n, &mut rng);
    let ya = strong_contaminate(&xa, &la, &spec, &mut rng).unwrap().points;
    println!("gen: {:.2}s", t0.elapsed().as_secs_f64());

    // Forced decode branch
    for trial in 0..3 {
        let cfg = PipelineConfig { branch: BranchSchedule { p_light: 0.0, p_cluster: 0.0 }, ..Default::default() };
        let t = Instant::now();
        let h = cluster_or_decode(&ya, 2, eps, &cfg, &mut rng);
        match h {
            Ok(h) => {
                let mut r2 = ChaCha8Rng::seed_from_u64(1);
                let tv = tv_monte_carlo(&truth, &h.mixture, 10_000, 1e-9, &mut r2).unwrap();
                println!("decode trial {trial}: {:.2}s tv {:.3} trace {}", t.elapsed().as_secs_f64(), tv.value, h.provenance);
                for (i, c) in h.mixture.components().iter().enumerate() {
                    println!("  comp {i}: w {:.3} mu {:?} diag {:?}", h.mixture.weights()[i],
                      c.mean().iter().take(2).map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>(),
                      (0..2).map(|j| (c.cov()[(j,j)]*100.0).round()/100.0).collect::<Vec<_>>());
                }
            }
            Err(e) => println!("decode trial {trial}: {:.2}s ERR {e}", t.elapsed().as_secs_f64()),
        }
    }
    // Forced cluster branch
    let cfg = PipelineConfig { branch: BranchSchedule { p_light: 0.0, p_cluster: 1.0 }, ..Default::default() };
    let t = Instant::now();
    let h = cluster_or_decode(&ya, 2, eps, &cfg, &mut rng);
    println!("cluster branch: {:.2}s ok={}", t.elapsed().as_secs_f64(), h.is_ok());
    // Light branch
    let cfg = PipelineConfig { branch: BranchSchedule { p_light: 1.0, p_cluster: 0.0 }, ..Default::default() };
    let t = Instant::now();
    let _ = cluster_or_decode(&ya, 2, eps, &cfg, &mut rng);
    println!("light branch (k=1 inner fails at k=0... chained): {:.2}s", t.elapsed().as_secs_f64());
}

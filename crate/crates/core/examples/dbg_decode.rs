use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::config::DecodeMode;
use robustmix::decode::{list_decode, DecodeConfig};
use robustmix::contamination::{strong_contaminate, AttackStrategy, ContaminationModel, ContaminationSpec};
use robustmix::linalg;
use robustmix::model::{sample_mixture, GaussianComponent, GaussianMixture};
use robustmix::robust;
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
    let (xa, la) = sample_mixture(&truth, n, &mut rng);
    let ya = strong_contaminate(&xa, &la, &spec, &mut rng).unwrap().points;

    let t = Instant::now();
    let (_, iso) = robust::isotropize(&ya, eps, 10.0, 60).unwrap();
    println!("isotropize: {:.2}s", t.elapsed().as_secs_f64());
    let half = iso.len() / 2;
    let tensor_half: Vec<_> = iso[..half].to_vec();
    let fresh_half: Vec<_> = iso[half..].to_vec();

    let alpha = 0.1414;
    let cfg = DecodeConfig::default();
    let t = Instant::now();
    let (list, report) = list_decode(&tensor_half, 2, alpha, eps, 4.0/alpha, DecodeMode::Efficient, Some(&fresh_half), &cfg, &mut rng).unwrap();
    println!("list_decode: {:.2}s", t.elapsed().as_secs_f64());
    println!("scales: eta {:.3} delta {:.3} lambda {:.3} D {:.1} ell {}", report.scales.eta, report.scales.delta, report.scales.lambda, report.scales.coeff_bound, report.scales.ell_used);
    println!("subspace dims: {:?}", &report.subspace_dims[..report.subspace_dims.len().min(12)]);
    println!("distinct subspaces: {}, list {} (groups {})", report.distinct_subspaces, list.entries.len(), list.groups().len());
    for (i, c) in list.entries.iter().enumerate().take(6) {
        let eigs = linalg::sym_eigen_sorted(&c.cov).0;
        println!("cand {i}: group {:?} w {:?} |mu| {:.2} eigs [{:.3}..{:.3}]", c.group, c.weight, c.mean.norm(), eigs.last().unwrap(), eigs[0]);
    }
}

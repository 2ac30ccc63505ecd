use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::cluster::{partial_cluster, PartialClusterParams};
use robustmix::config::OracleMode;
use robustmix::model::{sample_mixture, GaussianComponent, GaussianMixture};

fn main() {
    // Acceptance-5 style: 3 components, two Frobenius-close + one far.
    let d = 4;
    let mix = GaussianMixture::new(
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        vec![
            GaussianComponent::new(DVector::zeros(d), DMatrix::identity(d, d)).unwrap(),
            GaussianComponent::new(DVector::from_element(d, 0.5), DMatrix::identity(d, d)).unwrap(),
            GaussianComponent::new(DVector::zeros(d), DMatrix::identity(d, d) * 25.0).unwrap(),
        ],
    )
    .unwrap();
    for mode in [OracleMode::GroundTruth, OracleMode::Affinity] {
        let mut far_purities = vec![];
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (pts, labels) = sample_mixture(&mix, 3000, &mut rng);
            let params = PartialClusterParams { tau: 1.0, ..Default::default() };
            match partial_cluster(&pts, 3, 0.3, 0.0, 0.01, mode, Some(&labels), &params, &mut rng) {
                Ok(res) => {
                    let p = res.purity.as_ref().unwrap();
                    far_purities.push(p[2]);
                    if seed < 3 {
                        println!("{mode:?} seed {seed}: trivial={} groups={} purity={:?} sides=({},{})",
                            res.trivial, res.groups.len(), p, res.side1.len(), res.side2.len());
                    }
                }
                Err(e) => println!("{mode:?} seed {seed}: ERR {e}"),
            }
        }
        far_purities.sort_by(f64::total_cmp);
        if !far_purities.is_empty() {
            println!("{mode:?}: median far-component purity {:.4} (min {:.4})",
                far_purities[far_purities.len()/2], far_purities[0]);
        }
    }
}

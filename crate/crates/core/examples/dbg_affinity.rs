use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::cluster::{moment_matrix_oracle, AffinityParams};
use robustmix::config::OracleMode;
use robustmix::model::{sample_mixture, GaussianComponent, GaussianMixture};

fn main() {
    let d = 3;
    let mix = GaussianMixture::new(
        vec![0.5, 0.5],
        vec![
            GaussianComponent::new(DVector::from_element(d, 0.0), DMatrix::identity(d, d)).unwrap(),
            GaussianComponent::new(DVector::from_element(d, 12.0), DMatrix::identity(d, d)).unwrap(),
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let (pts, labels) = sample_mixture(&mix, 300, &mut rng);
    for nf in [0.01, 0.02, 0.05, 0.1, 0.2] {
        let params = AffinityParams { neighbor_frac: nf, ..Default::default() };
        let m = moment_matrix_oracle(&pts, OracleMode::Affinity, 0.5, 0.0, 2, &params, None);
        match m {
            Ok(m) => {
                let mut worst = 0.0f64;
                let mut misrows = 0;
                for i in 0..300 {
                    for j in 0..300 {
                        let ideal = if labels[i] == labels[j] { 0.5 } else { 0.0 };
                        let dev = (m.entries()[(i, j)] - ideal).abs();
                        if dev > worst { worst = dev; }
                    }
                    let mut rowbad = 0.0f64;
                    for j in 0..300 {
                        let ideal = if labels[i] == labels[j] { 0.5 } else { 0.0 };
                        rowbad = rowbad.max((m.entries()[(i, j)] - ideal).abs());
                    }
                    if rowbad > 0.05 { misrows += 1; }
                }
                println!("nf={nf}: worst {worst:.3}, bad rows {misrows}");
            }
            Err(e) => println!("nf={nf}: rejected: {e}"),
        }
    }
}

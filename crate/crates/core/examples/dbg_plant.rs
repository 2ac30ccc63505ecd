use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustmix::config::DecodeMode;
use robustmix::decode::{decode_from_tensors, decode_scales, DecodeConfig};
use robustmix::hermite::{expected_hermite_mixture, DEFAULT_ENTRY_GUARD as GUARD};
use robustmix::model::{sample_mixture, GaussianComponent, GaussianMixture};

fn random_symmetric(d: usize, frob: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d { for j in i..d { let v: f64 = rng.gen_range(-1.0..1.0); m[(i,j)] = v; m[(j,i)] = v; } }
    let n = m.norm();
    m * (frob / n)
}

fn main() {
    let d = 4; let k = 2; let alpha = 0.5;
    let mut ok = 0; let trials = 20;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        // Plant: means norm ~1, S_i with ||S||_F ~ 1.2 <= Delta = 2, PSD-adjusted.
        let mut comps = vec![]; 
        for _ in 0..k {
            let mu = DVector::from_fn(d, |_, _| rng.gen_range(-0.6..0.6));
            loop {
                let s = random_symmetric(d, 1.2, &mut rng);
                let cov = DMatrix::<f64>::identity(d, d) + &s;
                if let Ok(c) = GaussianComponent::new(mu.clone(), cov) { comps.push(c); break; }
            }
        }
        let mix = GaussianMixture::new(vec![alpha, 1.0 - alpha], comps).unwrap();
        let tensors: Vec<_> = (1..=4).map(|m| expected_hermite_mixture(&mix, m, GUARD).unwrap()).collect();
        let (fresh, _) = sample_mixture(&mix, 6000, &mut rng);
        let cfg = DecodeConfig { collapse_budget: 200, eta_override: Some(0.05), ..Default::default() };
        let scales = decode_scales(k, alpha, 0.0, 2.0, &cfg);
        let (list, report) = decode_from_tensors(&tensors, k, alpha, 0.0, scales, DecodeMode::Efficient, Some(&fresh), None, &cfg, &mut rng).unwrap();
        // For each true component, min over candidates of max(mean err, cov err).
        let mut worst: f64 = 0.0;
        for c in mix.components() {
            let best = list.entries.iter().map(|e| {
                let me = (&e.mean - c.mean()).norm();
                let ce = (&e.cov - c.cov()).norm();
                me.max(ce)
            }).fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        if worst <= 0.3 { ok += 1; }
        if seed < 4 { println!("seed {seed}: worst component error {worst:.3}, list {} distinct_sub {}", list.entries.len(), report.distinct_subspaces); }
    }
    println!("pass {ok}/{trials}");
}

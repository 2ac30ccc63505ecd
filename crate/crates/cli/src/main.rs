//! Experiment harness CLI: generate corrupted samples, run the learner,
//! evaluate hypotheses against the truth, and sweep parameter grids.
//!
//! Exit codes: 0 success, 1 pipeline failure (with a report), 2 input error.

mod formats;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use robustmix::config::PipelineConfig;
use robustmix::contamination::{
    huber_contaminate, strong_contaminate, tv_contaminate, ContaminationModel, CorruptedSample,
};
use robustmix::model::{
    match_components, sample_mixture, tv_monte_carlo, GaussianMixture,
};
use robustmix::pipeline::learn_gmm;

use formats::{
    read_mixture, read_sample_csv, write_json, write_sample_csv, BenchSpec, ExperimentSpec,
};

#[derive(Parser)]
#[command(
    name = "robustmix",
    about = "Outlier-robust learning of Gaussian mixtures: generation, runs, evaluation, sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for trial parallelism (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate clean and corrupted CSV sample pairs plus the truth mixture.
    Gen {
        /// Experiment spec JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the learner on generated samples; write hypothesis and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a hypothesis file against a truth file.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
        /// Monte Carlo sample size for the TV estimate.
        #[arg(long, default_value_t = 20_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (eval.json / eval.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one list-decoding pass on generated samples and dump the
    /// candidate list as JSON (diagnostic).
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep a grid of (eps, n, d) cells, emitting a median/IQR CSV table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default experiment spec (including the constants table).
    Defaults,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let code = match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.to_string().contains("pipeline failure") {
                1
            } else {
                2
            }
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { config, seed, out } => cmd_gen(&config, seed, &out),
        Command::Run {
            config,
            data,
            seed,
            out,
        } => cmd_run(&config, &data, seed, &out),
        Command::Eval {
            truth,
            hypothesis,
            n_mc,
            seed,
            out,
        } => cmd_eval(&truth, &hypothesis, n_mc, seed, &out),
        Command::Decode {
            config,
            data,
            seed,
            out,
        } => cmd_decode(&config, &data, seed, &out),
        Command::Bench { config, seed, out } => cmd_bench(&config, seed, &out),
        Command::Defaults => cmd_defaults(),
    }
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading spec {}", path.display()))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
    spec.validate()?;
    Ok(spec)
}

fn contaminate(
    truth: &GaussianMixture,
    spec: &ExperimentSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<nalgebra::DVector<f64>>, Vec<usize>, CorruptedSample)> {
    let to_err = |e: robustmix::Error| anyhow::anyhow!(e.to_string());
    match spec.contamination.model {
        ContaminationModel::Strong => {
            let (x, labels) = sample_mixture(truth, spec.n, rng);
            let corrupted =
                strong_contaminate(&x, &labels, &spec.contamination, rng).map_err(to_err)?;
            Ok((x, labels, corrupted))
        }
        ContaminationModel::Huber => {
            let (x, labels) = sample_mixture(truth, spec.n, rng);
            // Huber noise: the far-cluster shape at the configured scale.
            let noise = GaussianMixture::single(
                robustmix::model::GaussianComponent::new(
                    nalgebra::DVector::from_fn(truth.dim(), |i, _| {
                        if i == 0 {
                            spec.contamination.location_scale
                        } else {
                            0.0
                        }
                    }),
                    nalgebra::DMatrix::identity(truth.dim(), truth.dim()) * 1e-4,
                )
                .map_err(to_err)?,
            );
            let corrupted =
                huber_contaminate(&x, &labels, &spec.contamination, &noise, rng).map_err(to_err)?;
            Ok((x, labels, corrupted))
        }
        ContaminationModel::Tv => {
            let (x, labels) = sample_mixture(truth, spec.n, rng);
            let corrupted = tv_contaminate(truth, &spec.contamination, spec.n, rng).map_err(to_err)?;
            Ok((x, labels, corrupted))
        }
    }
}

fn cmd_gen(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let spec = load_spec(config)?;
    let truth = spec.resolve_mixture()?;
    std::fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for tag in ["a", "b"] {
        let (clean, labels, corrupted) = contaminate(&truth, &spec, &mut rng)?;
        write_sample_csv(
            &out.join(format!("clean_{tag}.csv")),
            &clean,
            Some(&labels),
            None,
            seed,
        )?;
        write_sample_csv(
            &out.join(format!("corrupted_{tag}.csv")),
            &corrupted.points,
            Some(&corrupted.labels),
            Some(&corrupted.mask),
            seed,
        )?;
    }
    write_json(&out.join("truth.json"), &truth)?;
    write_json(
        &out.join("gen_meta.json"),
        &json!({
            "seed": seed,
            "n": spec.n,
            "k": spec.k,
            "contamination": spec.contamination,
        }),
    )?;
    println!("wrote samples to {}", out.display());
    Ok(())
}

fn cmd_run(config: &Path, data: &Path, seed: u64, out: &Path) -> Result<()> {
    let spec = load_spec(config)?;
    std::fs::create_dir_all(out)?;
    let a = read_sample_csv(&data.join("corrupted_a.csv"))?;
    let b = read_sample_csv(&data.join("corrupted_b.csv"))?;
    let t0 = Instant::now();
    let result = learn_gmm(
        &a.points,
        &b.points,
        spec.k,
        spec.contamination.eps,
        &spec.pipeline,
        seed,
    );
    match result {
        Ok((hyp, mut report)) => {
            report.timings.insert("learn".into(), t0.elapsed().as_secs_f64());
            // TV against the truth when it is available next to the data.
            let truth_path = data.join("truth.json");
            if truth_path.exists() {
                let truth = read_mixture(&truth_path)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7EAC);
                if let Ok(tv) =
                    tv_monte_carlo(&truth, &hyp.mixture, spec.n_mc_eval, 1e-9, &mut rng)
                {
                    report.tv_vs_truth = Some((tv.value, tv.stderr));
                }
            }
            write_json(&out.join("hypothesis.json"), &hyp.mixture)?;
            write_json(
                &out.join("report.json"),
                &json!({ "seed": seed, "report": report, "provenance": hyp.provenance }),
            )?;
            println!(
                "hypothesis written; winner branch: {}",
                report.winner_provenance
            );
            Ok(())
        }
        Err(e) => {
            write_json(
                &out.join("report.json"),
                &json!({ "seed": seed, "failure": e.to_string() }),
            )?;
            anyhow::bail!("pipeline failure: {e}")
        }
    }
}

fn cmd_eval(truth: &Path, hypothesis: &Path, n_mc: usize, seed: u64, out: &Path) -> Result<()> {
    let truth_mix = read_mixture(truth)?;
    let hyp_mix = read_mixture(hypothesis)?;
    std::fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tv = tv_monte_carlo(&truth_mix, &hyp_mix, n_mc.max(1000), 1e-9, &mut rng)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let report = match_components(&truth_mix, &hyp_mix, 0.3, 1.0);
    let eval = json!({
        "seed": seed,
        "tv_estimate": tv.value,
        "tv_stderr": tv.stderr,
        "matched_weight": report.matched_weight,
        "weight_gaps": report.weight_gaps,
        "unmatched_weight": report.unmatched_weight,
        "max_matched_tv_bound": report.max_matched_tv,
        "assignment": report.assignment,
    });
    write_json(&out.join("eval.json"), &eval)?;
    let mut csv = String::from("metric,value,stderr\n");
    csv.push_str(&format!("tv,{},{}\n", tv.value, tv.stderr));
    csv.push_str(&format!("unmatched_weight,{},0\n", report.unmatched_weight));
    for (i, g) in report.weight_gaps.iter().enumerate() {
        csv.push_str(&format!("weight_gap_{i},{g},0\n"));
    }
    std::fs::write(out.join("eval.csv"), csv)?;
    println!("tv = {:.4} +- {:.4}", tv.value, tv.stderr);
    Ok(())
}

fn cmd_decode(config: &Path, data: &Path, seed: u64, out: &Path) -> Result<()> {
    let spec = load_spec(config)?;
    std::fs::create_dir_all(out)?;
    let a = read_sample_csv(&data.join("corrupted_a.csv"))?;
    let b = read_sample_csv(&data.join("corrupted_b.csv"))?;
    if let Some(data_seed) = a.seed {
        println!("data generated with seed {data_seed}");
    }
    if let Some(mask) = &a.corrupted {
        let frac = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        println!("corrupted fraction in sample a: {frac:.4}");
    }
    if let Some(labels) = &a.labels {
        let observed = labels.iter().filter(|&&l| l != usize::MAX).count();
        println!("labeled clean points: {observed}");
    }
    let eps = spec.contamination.eps;
    let alpha = (1.0 / spec.k as f64).min(0.5);
    let dcfg = robustmix::decode::DecodeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (list, report) = robustmix::decode::list_decode(
        &a.points,
        spec.k,
        alpha,
        eps,
        4.0 / alpha,
        spec.pipeline.mode,
        Some(&b.points),
        &dcfg,
        &mut rng,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    write_json(&out.join("candidates.json"), &formats::candidate_list_json(&list))?;
    write_json(
        &out.join("decode_report.json"),
        &json!({ "seed": seed, "report": report }),
    )?;
    println!("{} candidates written", list.entries.len());
    Ok(())
}

fn cmd_bench(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let raw = std::fs::read_to_string(config)?;
    let sweep: BenchSpec = serde_json::from_str(&raw).context("parsing bench spec")?;
    std::fs::create_dir_all(out)?;
    let eps_grid = if sweep.eps_grid.is_empty() {
        vec![sweep.base.contamination.eps]
    } else {
        sweep.eps_grid.clone()
    };
    let n_grid = if sweep.n_grid.is_empty() {
        vec![sweep.base.n]
    } else {
        sweep.n_grid.clone()
    };
    let d_grid = if sweep.d_grid.is_empty() {
        vec![]
    } else {
        sweep.d_grid.clone()
    };

    let mut rows = vec!["eps,n,d,trials,failures,tv_median,tv_q25,tv_q75".to_string()];
    for &eps in &eps_grid {
        for &n in &n_grid {
            let d_cells: Vec<Option<usize>> = if d_grid.is_empty() {
                vec![None]
            } else {
                d_grid.iter().map(|&d| Some(d)).collect()
            };
            for d_cell in d_cells {
                let mut spec = sweep.base.clone();
                spec.contamination.eps = eps;
                spec.n = n;
                if let (Some(d), formats::MixtureSource::SeparatedPair { d: dd, .. }) =
                    (d_cell, &mut spec.mixture)
                {
                    *dd = d;
                }
                let truth = spec.resolve_mixture()?;
                let cell_seed = seed ^ ((eps.to_bits() >> 8) ^ n as u64);
                let tvs: Vec<Option<f64>> = (0..sweep.trials)
                    .into_par_iter()
                    .map(|t| run_cell(&spec, &truth, cell_seed.wrapping_add(t as u64)).ok())
                    .collect();
                let mut ok: Vec<f64> = tvs.iter().flatten().cloned().collect();
                let failures = sweep.trials - ok.len();
                ok.sort_by(f64::total_cmp);
                let q = |p: f64| -> f64 {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok[((p * (ok.len() - 1) as f64).round()) as usize]
                    }
                };
                rows.push(format!(
                    "{eps},{n},{},{},{failures},{},{},{}",
                    d_cell.map(|d| d.to_string()).unwrap_or_else(|| truth.dim().to_string()),
                    sweep.trials,
                    q(0.5),
                    q(0.25),
                    q(0.75)
                ));
            }
        }
    }
    let table = rows.join("\n") + "\n";
    std::fs::write(out.join("bench.csv"), &table)?;
    println!("{table}");
    Ok(())
}

fn run_cell(spec: &ExperimentSpec, truth: &GaussianMixture, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, _, ca) = contaminate(truth, spec, &mut rng)?;
    let (_, _, cb) = contaminate(truth, spec, &mut rng)?;
    let (hyp, _) = learn_gmm(
        &ca.points,
        &cb.points,
        spec.k,
        spec.contamination.eps,
        &spec.pipeline,
        seed,
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let tv = tv_monte_carlo(truth, &hyp.mixture, spec.n_mc_eval, 1e-9, &mut rng)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(tv.value)
}

fn cmd_defaults() -> Result<()> {
    let spec = ExperimentSpec {
        mixture: formats::MixtureSource::SeparatedPair {
            d: 6,
            separation: 3.0,
            cov_scale: 2.0,
        },
        contamination: robustmix::contamination::ContaminationSpec {
            model: ContaminationModel::Strong,
            eps: 0.02,
            strategy: robustmix::contamination::AttackStrategy::FarCluster,
            location_scale: 100.0,
        },
        n: 100_000,
        k: 2,
        pipeline: PipelineConfig::default(),
        trials: 1,
        n_mc_eval: 20_000,
    };
    println!("{}", serde_json::to_string_pretty(&spec)?);
    Ok(())
}

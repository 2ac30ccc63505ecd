//! File formats: sample CSV, candidate-list JSON, and experiment specs.
//!
//! Sample sets are CSV with `d` numeric columns `x0..x{d-1}`, optional
//! `label` and `corrupted` columns, and leading `# key: value` comment lines
//! carrying the seed. Mixtures use the JSON schema from the core crate.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use robustmix::config::PipelineConfig;
use robustmix::contamination::ContaminationSpec;
use robustmix::model::GaussianMixture;

/// A sample set on disk.
#[derive(Debug, Clone)]
pub struct SampleFile {
    pub points: Vec<DVector<f64>>,
    pub labels: Option<Vec<usize>>,
    pub corrupted: Option<Vec<bool>>,
    pub seed: Option<u64>,
}

pub fn write_sample_csv(
    path: &Path,
    points: &[DVector<f64>],
    labels: Option<&[usize]>,
    corrupted: Option<&[bool]>,
    seed: u64,
) -> Result<()> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    let mut out = String::new();
    out.push_str(&format!("# seed: {seed}\n"));
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    if corrupted.is_some() {
        header.push("corrupted".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
        if let Some(l) = labels {
            row.push(if l[i] == usize::MAX {
                "-1".into()
            } else {
                l[i].to_string()
            });
        }
        if let Some(c) = corrupted {
            row.push(if c[i] { "1".into() } else { "0".into() });
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_sample_csv(path: &Path) -> Result<SampleFile> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seed = None;
    let mut lines = Vec::new();
    for line in raw.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("seed:") {
                seed = v.trim().parse::<u64>().ok();
            }
            continue;
        }
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    if lines.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let header: Vec<&str> = lines[0].split(',').collect();
    let label_col = header.iter().position(|&h| h == "label");
    let corrupt_col = header.iter().position(|&h| h == "corrupted");
    let coord_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x'))
        .map(|(i, _)| i)
        .collect();
    if coord_cols.is_empty() {
        bail!("{}: no coordinate columns", path.display());
    }
    let mut points = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut corrupted = corrupt_col.map(|_| Vec::new());
    for (ln, line) in lines.iter().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            bail!("{}: ragged row {}", path.display(), ln + 1);
        }
        let coords: Vec<f64> = coord_cols
            .iter()
            .map(|&c| fields[c].trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: bad number on row {}", path.display(), ln + 1))?;
        points.push(DVector::from_vec(coords));
        if let (Some(ls), Some(c)) = (labels.as_mut(), label_col) {
            let v: i64 = fields[c].trim().parse()?;
            ls.push(if v < 0 { usize::MAX } else { v as usize });
        }
        if let (Some(cs), Some(c)) = (corrupted.as_mut(), corrupt_col) {
            cs.push(fields[c].trim() == "1");
        }
    }
    Ok(SampleFile {
        points,
        labels,
        corrupted,
        seed,
    })
}

pub fn read_mixture(path: &Path) -> Result<GaussianMixture> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: GaussianMixture =
        serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
    Ok(m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let raw = serde_json::to_string_pretty(value)?;
    fs::write(path, raw).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Candidate list entry schema: {"mean": [...], "cov": [[...]], "tags": {...}}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub tags: serde_json::Map<String, serde_json::Value>,
}

pub fn candidate_list_json(list: &robustmix::decode::CandidateList) -> Vec<CandidateEntry> {
    list.entries
        .iter()
        .map(|c| {
            let d = c.mean.len();
            let mut tags = serde_json::Map::new();
            if let Some(g) = c.group {
                tags.insert("group".into(), serde_json::json!(g));
            }
            if let Some(w) = c.weight {
                tags.insert("weight".into(), serde_json::json!(w));
            }
            CandidateEntry {
                mean: c.mean.iter().cloned().collect(),
                cov: (0..d)
                    .map(|i| (0..d).map(|j| c.cov[(i, j)]).collect())
                    .collect(),
                tags,
            }
        })
        .collect()
}

/// How the experiment obtains its ground-truth mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureSource {
    /// Load from a mixture JSON file.
    File { path: String },
    /// Inline mixture JSON.
    Inline { mixture: GaussianMixture },
    /// A separated pair: `N(0, I)` and `N(sep * e1, diag(cov_scale, 1, ..))`.
    SeparatedPair {
        d: usize,
        separation: f64,
        cov_scale: f64,
    },
}

/// Experiment specification consumed by `gen`, `run`, and `bench`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mixture: MixtureSource,
    pub contamination: ContaminationSpec,
    /// Sample size of each of the two corrupted samples.
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc_eval: usize,
}

fn default_trials() -> usize {
    1
}

fn default_n_mc() -> usize {
    20_000
}

impl ExperimentSpec {
    pub fn resolve_mixture(&self) -> Result<GaussianMixture> {
        match &self.mixture {
            MixtureSource::File { path } => read_mixture(Path::new(path)),
            MixtureSource::Inline { mixture } => Ok(mixture.clone()),
            MixtureSource::SeparatedPair {
                d,
                separation,
                cov_scale,
            } => {
                use nalgebra::DMatrix;
                use robustmix::model::GaussianComponent;
                let mut cov2 = DMatrix::<f64>::identity(*d, *d);
                cov2[(0, 0)] = *cov_scale;
                let mut mu2 = DVector::zeros(*d);
                mu2[0] = *separation;
                Ok(GaussianMixture::new(
                    vec![0.5, 0.5],
                    vec![
                        GaussianComponent::standard(*d),
                        GaussianComponent::new(mu2, cov2)
                            .map_err(|e| anyhow::anyhow!(e.to_string()))?,
                    ],
                )
                .map_err(|e| anyhow::anyhow!(e.to_string()))?)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trial count must be at least 1");
        }
        if self.n == 0 {
            bail!("sample size must be positive");
        }
        self.pipeline
            .validate()
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        self.contamination
            .validate()
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(())
    }
}

/// Bench sweep: a base spec plus grids over eps, n, k (separation pairs), d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSpec {
    pub base: ExperimentSpec,
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub d_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

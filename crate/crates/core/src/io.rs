//! File formats: chain JSON lines, prediction and trajectory CSVs,
//! coefficient summaries, and run directories.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{state_names, CoefMatrix, DynamicsPosterior, Trajectory};
use crate::error::{Error, Result};
use crate::model::{ChainMetadata, ChainState, PosteriorChain, SamplerKind, SCHEMA_VERSION};
use crate::predict::equal_tailed;

/// Environment variable naming the default root for run directories.
pub const OUTPUT_ROOT_ENV: &str = "HIERGP_OUT";
const CHAIN_FORMAT: &str = "hiergp-chain";

/// First line of a chain file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainHeader {
    pub format: String,
    pub schema_version: u32,
    pub sampler: SamplerKind,
    pub burn_in: usize,
    pub thinning: usize,
    pub states: usize,
    pub metadata: ChainMetadata,
}

/// One header line, then one retained state per line.
pub fn write_chain<W: Write>(chain: &PosteriorChain, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    let header = ChainHeader {
        format: CHAIN_FORMAT.into(),
        schema_version: SCHEMA_VERSION,
        sampler: chain.metadata.sampler,
        burn_in: chain.burn_in,
        thinning: chain.thinning,
        states: chain.len(),
        metadata: chain.metadata.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in &chain.states {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chain<R: std::io::Read>(input: R) -> Result<PosteriorChain> {
    let mut lines = BufReader::new(input).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config("chain file is empty".into()))??;
    let header: ChainHeader = serde_json::from_str(&first)?;
    if header.format != CHAIN_FORMAT {
        return Err(Error::Config(format!(
            "not a chain file (format {:?})",
            header.format
        )));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "chain schema version {} is not supported (expected {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut states = Vec::with_capacity(header.states);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        states.push(serde_json::from_str::<ChainState>(&line)?);
    }
    if states.len() != header.states {
        return Err(Error::Config(format!(
            "chain header announces {} states, file has {}",
            header.states,
            states.len()
        )));
    }
    Ok(PosteriorChain {
        states,
        burn_in: header.burn_in,
        thinning: header.thinning,
        metadata: header.metadata,
    })
}

pub fn write_chain_file(chain: &PosteriorChain, path: &Path) -> Result<()> {
    write_chain(chain, File::create(path)?)
}

pub fn read_chain_file(path: &Path) -> Result<PosteriorChain> {
    read_chain(File::open(path)?)
}

/// Columns `x1..xd, mean, lower, upper, truth`; `truth` is blank when unknown.
pub fn write_predictions<W: Write>(
    points: &DMatrix<f64>,
    mean: &[f64],
    lower: &[f64],
    upper: &[f64],
    truth: Option<&[f64]>,
    out: W,
) -> Result<()> {
    let n = points.nrows();
    if [mean.len(), lower.len(), upper.len()]
        .iter()
        .any(|&l| l != n)
        || truth.is_some_and(|t| t.len() != n)
    {
        return Err(Error::mismatch("prediction columns have different lengths"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=points.ncols()).map(|m| format!("x{m}")).collect();
    header.extend(["mean", "lower", "upper", "truth"].map(String::from));
    w.write_record(&header)?;
    for i in 0..n {
        let mut row: Vec<String> = points.row(i).iter().map(|v| v.to_string()).collect();
        row.push(mean[i].to_string());
        row.push(lower[i].to_string());
        row.push(upper[i].to_string());
        row.push(truth.map_or(String::new(), |t| t[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `t, x_1..x_q, sample_id`, one block per labelled trajectory.
pub fn write_trajectories<W: Write>(trajs: &[(String, &Trajectory)], out: W) -> Result<()> {
    let q = trajs.first().map_or(0, |(_, t)| t.states.ncols());
    if trajs.iter().any(|(_, t)| t.states.ncols() != q) {
        return Err(Error::mismatch(
            "trajectories have different state dimensions",
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|m| format!("x_{m}")));
    header.push("sample_id".into());
    w.write_record(&header)?;
    for (id, tr) in trajs {
        for (i, t) in tr.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(tr.states.row(i).iter().map(|v| v.to_string()));
            row.push(id.clone());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub term: String,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub inclusion: f64,
    pub selected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateSummary {
    pub coordinate: String,
    pub terms: Vec<TermSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub schema_version: u32,
    pub samples: usize,
    pub level: f64,
    pub coordinates: Vec<CoordinateSummary>,
}

/// Per-term posterior summaries, optionally alongside the truth and a baseline fit.
pub fn coefficient_report(
    post: &DynamicsPosterior,
    level: f64,
    truth: Option<&CoefMatrix>,
    baseline: Option<&CoefMatrix>,
) -> Result<CoefficientReport> {
    if post.samples.is_empty() {
        return Err(Error::EmptyChain);
    }
    let q = post.inclusion.ncols();
    let names = state_names(q);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mean = post.mean();
    let median = post.median();
    let labels = mean.labels(&name_refs);
    let selected = post.selected();
    let coordinates = (0..q)
        .map(|m| CoordinateSummary {
            coordinate: names[m].clone(),
            terms: labels
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    let draws: Vec<f64> = post.samples.iter().map(|s| s[(j, m)]).collect();
                    let (lower, upper) = equal_tailed(&draws, level);
                    TermSummary {
                        term: label.clone(),
                        mean: mean.xi[(j, m)],
                        median: median.xi[(j, m)],
                        lower,
                        upper,
                        inclusion: post.inclusion[(j, m)],
                        selected: selected[m][j],
                        truth: truth.map(|t| t.xi[(j, m)]),
                        baseline: baseline.map(|b| b.xi[(j, m)]),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(CoefficientReport {
        schema_version: SCHEMA_VERSION,
        samples: post.samples.len(),
        level,
        coordinates,
    })
}

pub fn write_json<T: Serialize, W: Write>(value: &T, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Seeds and streams used by a run, written next to its outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub seed: u64,
    pub entries: Vec<SeedEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub purpose: String,
    pub stream: u64,
}

impl SeedManifest {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, purpose: impl Into<String>, stream: u64) {
        self.entries.push(SeedEntry {
            purpose: purpose.into(),
            stream,
        });
    }
}

/// An output directory. Creation is idempotent so reruns overwrite in place.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        fs::create_dir_all(&path)?;
        Ok(Self { path })
    }

    /// `explicit`, else `$HIERGP_OUT/<name>`, else `runs/<name>`.
    pub fn resolve(explicit: Option<&Path>, name: &str) -> PathBuf {
        match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let root = std::env::var_os(OUTPUT_ROOT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("runs"));
                root.join(name)
            }
        }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn create_file(&self, name: &str) -> Result<File> {
        Ok(File::create(self.file(name))?)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.file(name), text)?;
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &SeedManifest) -> Result<()> {
        write_json(manifest, self.create_file("seeds.json")?)
    }
}

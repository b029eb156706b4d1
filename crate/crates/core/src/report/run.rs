use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bma::{exact_bma, mc3_sample, ExactOptions, GPrior, Mc3Chain, PosteriorSummary, SamplerConfig};
use crate::error::{Error, Result};
use crate::ivbma::{run_ivbma, IvbmaResult};
use crate::pipeline::{load_panel, prepare, PreparedData, Roster};
use crate::report::export::{export_draws, write_mc3_chain, write_top_models, MC3_CHAIN_FILE};
use crate::report::table::{render_table, TableRow};

pub const REPORT_FILE: &str = "report.txt";
pub const FIRST_STAGE_REPORT_FILE: &str = "first_stage.txt";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.txt";
pub const TOP_MODELS_FILE: &str = "top_models.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BmaExact,
    BmaMc3,
    Ivbma,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::BmaExact => "bma-exact",
            Method::BmaMc3 => "bma-mc3",
            Method::Ivbma => "ivbma",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bma-exact" => Ok(Method::BmaExact),
            "bma-mc3" => Ok(Method::BmaMc3),
            "ivbma" => Ok(Method::Ivbma),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected bma-exact, bma-mc3 or ivbma"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub roster: PathBuf,
    pub method: Method,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub g: GPrior,
    /// File listing the countries to keep, one per line or comma-separated.
    pub subsample: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunConfig {
    pub const DEFAULT_ITERATIONS: usize = 3_000_000;
    pub const DEFAULT_BURN_IN: usize = 200_000;
    pub const DEFAULT_THINNING: usize = 10;
    pub const DEFAULT_SEED: u64 = 42;

    pub fn new(data: impl Into<PathBuf>, roster: impl Into<PathBuf>, method: Method, out: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            roster: roster.into(),
            method,
            iterations: Self::DEFAULT_ITERATIONS,
            burn_in: Self::DEFAULT_BURN_IN,
            thinning: Self::DEFAULT_THINNING,
            seed: Self::DEFAULT_SEED,
            g: GPrior::UnitInformation,
            subsample: None,
            out: out.into(),
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let mut c = SamplerConfig::new(self.iterations, self.burn_in, self.seed);
        c.thinning = self.thinning;
        c.g = self.g;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler_config().validate()
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Pipeline,
    Engine,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Pipeline => "pipeline",
            Stage::Engine => "engine",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct RunError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError> {
        self.map_err(|source| RunError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub config_sha256: String,
    pub data_sha256: String,
    pub roster_sha256: String,
    pub subsample_sha256: Option<String>,
    pub countries: usize,
    pub dropped: usize,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

/// What a completed run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: String,
    pub second_stage: PosteriorSummary,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses a country list: one entry per line or comma-separated, `#` starts a comment.
pub fn parse_country_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

struct EngineOutput {
    title: &'static str,
    header: Vec<String>,
    summary: PosteriorSummary,
    ivbma: Option<IvbmaResult>,
    chain: Option<Mc3Chain>,
}

fn run_engine(config: &RunConfig, data: &PreparedData) -> Result<EngineOutput> {
    let design = &data.design;
    let k = design.p() + design.q();
    let g_line = match config.g {
        GPrior::UnitInformation => format!("g-prior: g = n = {}", design.n()),
        GPrior::Fixed(g) => format!("g-prior: g = {g}"),
    };
    let mut header = vec![
        format!("Method: {}", config.method),
        format!("Countries: {} (dropped {})", design.n(), data.drop_log.len()),
        format!("Candidates: {k} ({} endogenous, {} exogenous)", design.p(), design.q()),
        g_line,
    ];
    let sampler = config.sampler_config();
    match config.method {
        Method::BmaExact => {
            let exact = exact_bma(
                &design.single_stage(),
                &sampler.prior(),
                ExactOptions {
                    cap: sampler.enumeration_cap,
                    parallel: true,
                },
            )?;
            header.push(format!("Models enumerated: {}", exact.len()));
            Ok(EngineOutput {
                title: "Posterior inclusion probabilities (BMA, exact enumeration)",
                header,
                summary: exact.summary,
                ivbma: None,
                chain: None,
            })
        }
        Method::BmaMc3 => {
            let run = mc3_sample(&design.single_stage(), &sampler)?;
            header.push(format!(
                "Iterations: {}, burn-in {}, seed {}",
                config.iterations, config.burn_in, config.seed
            ));
            header.push(format!(
                "Models visited: {}, acceptance rate {:.3}",
                run.summary.models_visited,
                run.chain.acceptance_rate()
            ));
            Ok(EngineOutput {
                title: "Posterior inclusion probabilities (BMA, MC3)",
                header,
                summary: run.summary,
                ivbma: None,
                chain: Some(run.chain),
            })
        }
        Method::Ivbma => {
            let result = run_ivbma(design, &sampler)?;
            header.push(format!(
                "Iterations: {}, burn-in {}, thinning {}, seed {}",
                config.iterations, config.burn_in, config.thinning, config.seed
            ));
            header.push(format!(
                "Second-stage models visited: {}, acceptance rate {:.3}",
                result.second_stage.models_visited, result.outcome_acceptance
            ));
            Ok(EngineOutput {
                title: "Second-stage posterior inclusion probabilities (IVBMA)",
                header,
                summary: result.second_stage.clone(),
                ivbma: Some(result),
                chain: None,
            })
        }
    }
}

fn labels_for(names: &[String], roster: &Roster) -> Vec<String> {
    names
        .iter()
        .map(|n| roster.get(n).map(|s| s.label().to_string()).unwrap_or_else(|| n.clone()))
        .collect()
}

fn first_stage_report(result: &IvbmaResult, data: &PreparedData, roster: &Roster) -> Result<String> {
    let design = &data.design;
    let labels = labels_for(&design.first_stage_names(), roster);
    let mut out = String::new();
    for (j, summary) in result.first_stage.iter().enumerate() {
        let target = roster
            .get(&result.first_stage_targets[j])
            .map(|s| s.label().to_string())
            .unwrap_or_else(|| result.first_stage_targets[j].clone());
        let rows = TableRow::from_summary(summary, &labels, &[]);
        let header = vec![format!(
            "Acceptance rate {:.3}",
            result.first_stage_acceptance[j]
        )];
        out.push_str(&render_table(&format!("First stage: {target}"), &header, &rows)?);
        out.push('\n');
    }
    out.push_str("Posterior mean of the error covariance (outcome first, then first stages in column order)\n");
    let s = &result.sigma_summary;
    for i in 0..s.nrows() {
        let row: Vec<String> = (0..s.ncols()).map(|j| format!("{:>10.4}", s[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn diagnostics_text(data: &PreparedData) -> String {
    let mut out = String::new();
    out.push_str(&data.diagnostics.to_string());
    out.push('\n');
    if data.drop_log.is_empty() {
        out.push_str("No countries dropped.\n");
    } else {
        out.push_str(&data.drop_log.to_string());
    }
    out
}

/// Pipeline, engine and report in one call. All files are written into `config.out`.
pub fn run(config: &RunConfig) -> std::result::Result<RunOutcome, RunError> {
    let started = Instant::now();
    config.validate().at(Stage::Config)?;

    let roster_bytes = read_bytes(&config.roster).at(Stage::Load)?;
    let data_bytes = read_bytes(&config.data).at(Stage::Load)?;
    let roster = Roster::from_toml_str(&String::from_utf8_lossy(&roster_bytes)).at(Stage::Load)?;
    let panel = load_panel(&config.data, &roster).at(Stage::Load)?;
    let (subsample, subsample_sha) = match &config.subsample {
        Some(path) => {
            let bytes = read_bytes(path).at(Stage::Load)?;
            let list = parse_country_list(&String::from_utf8_lossy(&bytes));
            if list.is_empty() {
                return Err(Error::Config(format!("subsample file {} lists no countries", path.display())))
                    .at(Stage::Config);
            }
            (Some(list), Some(sha256(&bytes)))
        }
        None => (None, None),
    };

    let data = prepare(&panel, &roster, subsample.as_deref()).at(Stage::Pipeline)?;
    log::info!(
        "{} countries after averaging, {} dropped",
        data.design.n(),
        data.drop_log.len()
    );
    let engine = run_engine(config, &data).at(Stage::Engine)?;

    fs::create_dir_all(&config.out)
        .map_err(|e| Error::io(&config.out, e))
        .at(Stage::Report)?;
    let design = &data.design;
    let labels = labels_for(&design.second_stage_names(), &roster);
    let endogenous: Vec<bool> = (0..design.p() + design.q()).map(|j| j < design.p()).collect();
    let rows = TableRow::from_summary(&engine.summary, &labels, &endogenous);
    let report = render_table(engine.title, &engine.header, &rows).at(Stage::Report)?;

    let mut outputs = vec![REPORT_FILE.to_string(), DIAGNOSTICS_FILE.to_string()];
    write_text(&config.out.join(REPORT_FILE), &report).at(Stage::Report)?;
    write_text(&config.out.join(DIAGNOSTICS_FILE), &diagnostics_text(&data)).at(Stage::Report)?;
    let top_path = config.out.join(TOP_MODELS_FILE);
    let top = fs::File::create(&top_path).map_err(|e| Error::io(&top_path, e)).at(Stage::Report)?;
    write_top_models(&engine.summary.top_models, top)
        .map_err(|e| Error::io(&top_path, e))
        .at(Stage::Report)?;
    outputs.push(TOP_MODELS_FILE.to_string());
    if let Some(chain) = &engine.chain {
        let path = config.out.join(MC3_CHAIN_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e)).at(Stage::Report)?;
        write_mc3_chain(chain, file).map_err(|e| Error::io(&path, e)).at(Stage::Report)?;
        outputs.push(MC3_CHAIN_FILE.to_string());
    }
    if let Some(result) = &engine.ivbma {
        let text = first_stage_report(result, &data, &roster).at(Stage::Report)?;
        write_text(&config.out.join(FIRST_STAGE_REPORT_FILE), &text).at(Stage::Report)?;
        outputs.push(FIRST_STAGE_REPORT_FILE.to_string());
        for path in export_draws(result, &config.out, 1).at(Stage::Report)? {
            outputs.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    outputs.push(MANIFEST_FILE.to_string());

    let manifest = Manifest {
        tool: "ivbma".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        seed: config.seed,
        config_sha256: config.hash(),
        data_sha256: sha256(&data_bytes),
        roster_sha256: sha256(&roster_bytes),
        subsample_sha256: subsample_sha,
        countries: design.n(),
        dropped: data.drop_log.len(),
        outputs,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&config.out.join(MANIFEST_FILE), &(json + "\n")).at(Stage::Report)?;
    Ok(RunOutcome {
        manifest,
        report,
        second_stage: engine.summary,
    })
}

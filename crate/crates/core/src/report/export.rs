use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bma::{Mc3Chain, TopModel};
use crate::error::{Error, Result};
use crate::ivbma::{IvbmaDraws, IvbmaResult};

pub const DRAW_HEADER: &str = "chain,iteration,variable,coefficient";
pub const SECOND_STAGE_FILE: &str = "draws_second_stage.csv";
pub const FIRST_STAGE_FILE: &str = "draws_first_stage.csv";
pub const MC3_CHAIN_FILE: &str = "mc3_chain.csv";

/// Second-stage coefficient draws followed by the retained `sigma_i_j` entries.
pub fn write_second_stage_draws<W: Write>(draws: &IvbmaDraws, chain: usize, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{DRAW_HEADER}")?;
    let k = draws.second_stage_names.len();
    let s = draws.sigma_names.len();
    for (r, it) in draws.iterations.iter().enumerate() {
        for (j, name) in draws.second_stage_names.iter().enumerate() {
            writeln!(w, "{chain},{it},{name},{}", draws.second_stage[r * k + j])?;
        }
        for (j, name) in draws.sigma_names.iter().enumerate() {
            writeln!(w, "{chain},{it},{name},{}", draws.sigma[r * s + j])?;
        }
    }
    w.flush()
}

/// Own-instrument coefficient draws of each first-stage equation, named `endogenous|instrument`.
pub fn write_first_stage_draws<W: Write>(draws: &IvbmaDraws, chain: usize, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{DRAW_HEADER}")?;
    let p = draws.first_stage_names.len();
    for (r, it) in draws.iterations.iter().enumerate() {
        for (j, name) in draws.first_stage_names.iter().enumerate() {
            writeln!(w, "{chain},{it},{name},{}", draws.first_stage[r * p + j])?;
        }
    }
    w.flush()
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes both draw files into `dir` and returns their paths.
pub fn export_draws(result: &IvbmaResult, dir: &Path, chain: usize) -> Result<[PathBuf; 2]> {
    let second = dir.join(SECOND_STAGE_FILE);
    let first = dir.join(FIRST_STAGE_FILE);
    write_second_stage_draws(&result.draws, chain, create(&second)?).map_err(|e| Error::io(&second, e))?;
    write_first_stage_draws(&result.draws, chain, create(&first)?).map_err(|e| Error::io(&first, e))?;
    Ok([second, first])
}

/// `mask,pmp` lines for the highest-probability models.
pub fn write_top_models<W: Write>(models: &[TopModel], out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "mask,pmp")?;
    for m in models {
        writeln!(w, "{},{}", m.mask, m.pmp)?;
    }
    w.flush()
}

/// One `mask,log_ml` line per post-burn-in state of an MC3 chain.
pub fn write_mc3_chain<W: Write>(chain: &Mc3Chain, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "mask,log_ml")?;
    let masks: Vec<String> = chain.models.iter().map(ToString::to_string).collect();
    for &s in &chain.states {
        writeln!(w, "{},{}", masks[s as usize], chain.log_ml[s as usize])?;
    }
    w.flush()
}

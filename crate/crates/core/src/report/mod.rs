//! Evidence classes, results tables, draw export and the end-to-end `run`.

pub mod evidence;
pub mod export;
pub mod run;
pub mod table;

pub use evidence::{classify_evidence, EvidenceClass};
pub use export::{
    export_draws, write_first_stage_draws, write_mc3_chain, write_second_stage_draws, write_top_models, DRAW_HEADER,
    FIRST_STAGE_FILE, MC3_CHAIN_FILE, SECOND_STAGE_FILE,
};
pub use run::{parse_country_list, run, Manifest, Method, RunConfig, RunError, RunOutcome, Stage};
pub use table::{parse_table, render_table, ParsedRow, TableRow};

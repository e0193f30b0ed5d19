//! Pipeline orchestration: abstract → synthesize → simulate → report, with
//! each stage reading and writing JSON artifacts so expensive abstractions
//! are reusable across specifications.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{build_abstraction, memory_report, Abstraction, ModelClass};
use crate::config::{RunConfig, Setup};
use crate::synthesis::{rdp, ReachAvoidSpec, SynthesisResult};
use crate::validation::{compute_metrics, monte_carlo, McConfig, RunReport, Timings};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{0}")]
    Build(#[from] crate::config::BuildError),
    #[error("abstraction: {0}")]
    Abstraction(#[from] crate::abstraction::AbstractionError),
    #[error("synthesis: {0}")]
    Synthesis(#[from] crate::synthesis::SynthesisError),
    #[error("validation: {0}")]
    Validation(#[from] crate::validation::ValidationError),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

fn write_file(path: &Path, contents: &str) -> Result<(), StageError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| StageError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, contents).map_err(|e| StageError::Io { path: path.to_path_buf(), source: e })
}

fn read_file(path: &Path) -> Result<String, StageError> {
    fs::read_to_string(path).map_err(|e| StageError::Io { path: path.to_path_buf(), source: e })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("artifact serialization");
    s.push('\n');
    s
}

fn parse_artifact<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, StageError> {
    serde_json::from_str(text)
        .map_err(|e| StageError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

/// Serialized abstraction together with its construction time.
#[derive(Serialize, Deserialize)]
pub struct AbstractionFile {
    pub format_version: u32,
    pub t_abs_seconds: f64,
    pub abstraction: Abstraction,
}

/// Serialized synthesis output.
#[derive(Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub class: ModelClass,
    pub t_abs_seconds: f64,
    pub t_syn_seconds: f64,
    pub spec: ReachAvoidSpec,
    pub result: SynthesisResult,
}

/// Serialized run report.
#[derive(Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub report: RunReport,
}

pub fn abstraction_path(out_dir: &Path, class: ModelClass) -> PathBuf {
    out_dir.join(format!("abstraction-{class}.json"))
}

pub fn result_path(out_dir: &Path, class: ModelClass) -> PathBuf {
    out_dir.join(format!("result-{class}.json"))
}

pub fn report_path(out_dir: &Path, class: ModelClass) -> PathBuf {
    out_dir.join(format!("report-{class}.json"))
}

/// Build every configured abstraction class and write one artifact each.
pub fn cmd_abstract(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, StageError> {
    let setup = Setup::build(cfg)?;
    let mut written = Vec::new();
    for &class in &cfg.classes {
        let cover = match class {
            ModelClass::TwoImdp | ModelClass::Mimdp => Some(setup.coarse_cover.as_slice()),
            _ => None,
        };
        let start = Instant::now();
        let abs = build_abstraction(
            &setup.system,
            &setup.partition,
            &setup.noise_partition,
            class,
            cover,
        )?;
        let t_abs = start.elapsed().as_secs_f64();
        log::info!("abstract[{class}]: {} states in {t_abs:.3}s", abs.num_states);
        let path = abstraction_path(out_dir, class);
        write_file(
            &path,
            &to_json(&AbstractionFile { format_version: FORMAT_VERSION, t_abs_seconds: t_abs, abstraction: abs }),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Load one abstraction artifact and synthesize a robust controller.
pub fn cmd_synthesize(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, StageError> {
    let setup = Setup::build(cfg)?;
    let spec = ReachAvoidSpec::from_partition(&setup.partition, cfg.horizon);
    let mut written = Vec::new();
    for &class in &cfg.classes {
        let in_path = abstraction_path(out_dir, class);
        let file: AbstractionFile = parse_artifact(&in_path, &read_file(&in_path)?)?;
        if file.format_version != FORMAT_VERSION {
            return Err(StageError::Artifact {
                path: in_path,
                message: format!("format version {} unsupported", file.format_version),
            });
        }
        let start = Instant::now();
        let result = rdp(&file.abstraction, &spec)?;
        let t_syn = start.elapsed().as_secs_f64();
        if !result.converged {
            log::warn!(
                "synthesize[{class}]: iteration cap hit at residual {:.2e}; \
                 values remain valid lower bounds",
                result.residual
            );
        }
        log::info!(
            "synthesize[{class}]: {} iterations, residual {:.2e}, {t_syn:.3}s",
            result.iterations,
            result.residual
        );
        let path = result_path(out_dir, class);
        write_file(
            &path,
            &to_json(&ResultFile {
                format_version: FORMAT_VERSION,
                class,
                t_abs_seconds: file.t_abs_seconds,
                t_syn_seconds: t_syn,
                spec: spec.clone(),
                result,
            }),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Monte-Carlo validation of a synthesized controller; writes the report
/// JSON and a flat CSV with one row per initial state.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, StageError> {
    let setup = Setup::build(cfg)?;
    let mut written = Vec::new();
    for &class in &cfg.classes {
        let in_path = result_path(out_dir, class);
        let file: ResultFile = parse_artifact(&in_path, &read_file(&in_path)?)?;
        let abs_path = abstraction_path(out_dir, class);
        let abs_file: AbstractionFile = parse_artifact(&abs_path, &read_file(&abs_path)?)?;
        let mc_cfg = McConfig {
            initial_states: cfg.validation.initial_states,
            trajectories: cfg.validation.trajectories,
            max_steps: cfg.validation.max_steps,
            seed: cfg.seed,
        };
        let start = Instant::now();
        let estimates = monte_carlo(
            &setup.system,
            &cfg.noise.model,
            &setup.partition,
            &file.result,
            &file.spec,
            &mc_cfg,
        )?;
        let t_sim = start.elapsed().as_secs_f64();
        let report = compute_metrics(
            &file.result,
            &setup.partition,
            class,
            setup.noise_partition.num_cells(),
            setup.system.num_actions(),
            &estimates,
            Timings {
                abstraction_seconds: file.t_abs_seconds,
                synthesis_seconds: file.t_syn_seconds,
                simulation_seconds: t_sim,
            },
            memory_report(&abs_file.abstraction),
        )?;
        log::info!(
            "simulate[{class}]: e_avg {:.4}, mc_avg {:.4}, {} flagged",
            report.e_avg,
            report.mc_avg,
            report.violations.len()
        );
        let path = report_path(out_dir, class);
        write_file(&path, &to_json(&ReportFile { format_version: FORMAT_VERSION, report: report.clone() }))?;
        let csv_path = out_dir.join(format!("report-{class}.csv"));
        write_file(&csv_path, &per_state_csv(&report))?;
        written.push(path);
        written.push(csv_path);
    }
    Ok(written)
}

fn per_state_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "state,rate,satisfied,undetermined,trials,wilson_radius,p_lower,p_upper,flagged\n",
    );
    for e in &report.mc_estimates {
        let flagged = report.violations.contains(&e.state);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            e.state,
            e.rate,
            e.satisfied,
            e.undetermined,
            e.trials,
            e.wilson_radius,
            report.heatmap[e.state].p_lower,
            report.heatmap[e.state].p_upper,
            flagged
        ));
    }
    out
}

/// Merge report artifacts into the comparison table and one heatmap CSV per
/// class.
pub fn cmd_report(report_files: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, StageError> {
    let mut reports = Vec::new();
    for path in report_files {
        let file: ReportFile = parse_artifact(path, &read_file(path)?)?;
        reports.push(file.report);
    }
    let mut written = Vec::new();

    let mut table = String::from(
        "class,num_states,num_actions,num_cells,e_avg,t_abs_s,t_syn_s,memory_bytes,\
         p_lower_avg,p_upper_avg,p_mc_avg,violations\n",
    );
    for r in &reports {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.class,
            r.num_states,
            r.num_actions,
            r.num_cells,
            r.e_avg,
            r.timings.abstraction_seconds,
            r.timings.synthesis_seconds,
            r.memory.estimated_bytes,
            r.p_lower_avg,
            r.p_upper_avg,
            r.mc_avg,
            r.violations.len()
        ));
    }
    let table_path = out_dir.join("comparison.csv");
    write_file(&table_path, &table)?;
    written.push(table_path);

    for r in &reports {
        let dim = r.heatmap.first().map_or(0, |c| c.center.len());
        let mut csv = (0..dim).map(|d| format!("c{d},")).collect::<String>();
        csv.push_str("p_lower,p_upper\n");
        for cell in &r.heatmap {
            for v in &cell.center {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{},{}\n", cell.p_lower, cell.p_upper));
        }
        let path = out_dir.join(format!("heatmap-{}.csv", r.class));
        write_file(&path, &csv)?;
        written.push(path);
    }
    Ok(written)
}

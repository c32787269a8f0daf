use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use mlfdr::evaluate::StudyReport;
use mlfdr::regression::FitFailure;
use mlfdr::rng::{derive_seed, substream};
use mlfdr::simulate::SPARSE;
use mlfdr::{
    generate, replicate_study, run_pipeline, score, step_up_select, EmConfig, EmTrace, EvalReport, FittedModel,
    MixtureStrategy, OutcomeModel, PipelineConfig, PipelineOutput, ScenarioKind, SimScenario, StudyOptions,
};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::args::{Cli, Mode};
use crate::error::{write_error, CliError, Result};
use crate::ingest::{ingest, IngestManifest, IngestOptions, InputPaths};
use crate::report::{hypothesis_rows, simulated_ids, write_curve, write_dataset, write_hypotheses, write_json, CurvePoint};

/// Everything needed to reproduce a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub library_version: &'static str,
    pub mode: Mode,
    pub seed: u64,
    pub seed_source: &'static str,
    pub options: Cli,
    pub defaulted: Vec<String>,
    pub pipeline: Option<PipelineConfig>,
    pub scenario: Option<SimScenario>,
    pub ingest: Option<IngestManifest>,
    pub excluded: Vec<Excluded>,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
pub struct Excluded {
    pub id: String,
    #[serde(flatten)]
    pub failure: FitFailure,
}

#[derive(Debug, Serialize)]
struct ModelFile<'a> {
    model: &'a FittedModel,
    class_probabilities: [f64; 4],
    trace: &'a EmTrace,
    alpha: f64,
    rejections: usize,
    cutoff: f64,
    estimated_fdr: f64,
    hypotheses: usize,
}

/// What a finished run reports on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub hypotheses: usize,
    pub rejections: usize,
    pub text: String,
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn validate(cli: &Cli) -> Result<()> {
    let bad = |msg: &str| Err(CliError::config("config.invalid_parameter", msg));
    if !(cli.alpha > 0.0 && cli.alpha < 1.0) {
        return bad("alpha must lie in (0, 1)");
    }
    if cli.alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return bad("every alpha-grid value must lie in (0, 1)");
    }
    if cli.d1 == 0 || cli.d2 == 0 {
        return bad("d1 and d2 must be at least 1");
    }
    if cli.reps == 0 {
        return bad("reps must be at least 1");
    }
    Ok(())
}

fn em_config(cli: &Cli, seed: u64) -> EmConfig {
    EmConfig { seed, tol: cli.tol, restarts: cli.restarts, max_iter: cli.max_iter, ..EmConfig::default() }
}

fn strategy(cli: &Cli) -> MixtureStrategy {
    if cli.two_step {
        MixtureStrategy::TwoStep
    } else {
        MixtureStrategy::Auto
    }
}

/// Sorted union of the reporting grid and the target level.
fn alpha_levels(cli: &Cli) -> Vec<f64> {
    let mut levels = cli.alpha_grid.clone();
    levels.push(cli.alpha);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

fn load_scenario(cli: &Cli, defaulted: &[String]) -> Result<(SimScenario, &'static str)> {
    let mut sc = match &cli.scenario_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config("config.path", format!("{}: {e}", path.display())))?;
            toml::from_str::<SimScenario>(&text)
                .map_err(|e| CliError::config("config.scenario", format!("{}: {e}", path.display())))?
        }
        None => SimScenario::with_scaled_tau(ScenarioKind::Case1, SPARSE, 100, 1000, 10.0, cli.seed),
    };
    let source = if !defaulted.iter().any(|d| d == "seed") {
        sc.seed = cli.seed;
        "command line"
    } else if cli.scenario_file.is_some() {
        "scenario file"
    } else {
        sc.seed = cli.seed;
        "default"
    };
    sc.validate()?;
    Ok((sc, source))
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

fn write_analysis(dir: &Path, ids: &[String], out: &PipelineOutput) -> Result<()> {
    write_hypotheses(&dir.join("hypotheses.csv"), &hypothesis_rows(ids, &out.stats, &out.lfdr, &out.selection))?;
    let model = ModelFile {
        model: &out.model,
        class_probabilities: out.model.class_probabilities(),
        trace: &out.trace,
        alpha: out.selection.alpha,
        rejections: out.selection.k,
        cutoff: out.selection.cutoff,
        estimated_fdr: out.selection.estimated_fdr(),
        hypotheses: out.stats.len(),
    };
    write_json(&dir.join("model.json"), &model)
}

fn excluded(ids: &[String], out: &PipelineOutput) -> Vec<Excluded> {
    out.stats.failures.iter().map(|f| Excluded { id: ids[f.hypothesis].clone(), failure: *f }).collect()
}

/// Run one invocation. `defaulted` lists the options left at their defaults.
pub fn run(cli: &Cli, defaulted: &[String]) -> Result<Summary> {
    validate(cli)?;
    prepare_out_dir(&cli.out_dir)?;
    let mut timer = Timer(BTreeMap::new());
    let mut manifest = RunManifest {
        tool: "mlfdr",
        cli_version: env!("CARGO_PKG_VERSION"),
        library_version: mlfdr::VERSION,
        mode: cli.mode,
        seed: cli.seed,
        seed_source: if defaulted.iter().any(|d| d == "seed") { "default" } else { "command line" },
        options: cli.clone(),
        defaulted: defaulted.to_vec(),
        pipeline: None,
        scenario: None,
        ingest: None,
        excluded: Vec::new(),
        timings_ms: BTreeMap::new(),
    };
    let summary = match cli.mode {
        Mode::Analyze => analyze(cli, &mut timer, &mut manifest)?,
        Mode::Simulate => simulate(cli, defaulted, &mut timer, &mut manifest)?,
        Mode::Evaluate => evaluate(cli, defaulted, &mut timer, &mut manifest)?,
    };
    manifest.timings_ms = timer.0;
    write_json(&cli.out_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

fn analyze(cli: &Cli, timer: &mut Timer, manifest: &mut RunManifest) -> Result<Summary> {
    let missing = |name: &str| CliError::config("config.missing_input", format!("analyze needs --{name}"));
    let paths = InputPaths {
        exposure: cli.exposure.clone().ok_or_else(|| missing("exposure"))?,
        mediators: cli.mediators.clone().ok_or_else(|| missing("mediators"))?,
        outcomes: cli.outcomes.clone().ok_or_else(|| missing("outcomes"))?,
        confounders: cli.confounders.clone(),
    };
    let options = IngestOptions {
        prevalence_threshold: cli.prevalence_filter,
        pseudo_count: cli.pseudo_count,
        clr: cli.clr,
        center: cli.center,
        outcome: cli.outcome_kind,
    };
    let ingested = timer.time("ingest", || ingest(&paths, &options))?;
    manifest.ingest = Some(ingested.manifest.clone());
    let mut data = ingested.dataset;
    if cli.permute_exposure {
        let mut perm: Vec<usize> = (0..data.n()).collect();
        perm.shuffle(&mut substream(cli.seed, 0));
        data = data.with_permuted_exposure(&perm)?;
    }

    let config = PipelineConfig {
        outcome_model: cli.interaction.then_some(OutcomeModel::Interaction),
        d1: cli.d1,
        d2: cli.d2,
        strategy: strategy(cli),
        em: em_config(cli, cli.seed),
        alpha: cli.alpha,
        ..PipelineConfig::default()
    };
    manifest.pipeline = Some(config.clone());
    let out = timer.time("pipeline", || run_pipeline(&data, &config))?;
    manifest.excluded = excluded(&ingested.ids, &out);
    timer.time("write", || write_analysis(&cli.out_dir, &ingested.ids, &out))?;
    Ok(Summary {
        hypotheses: out.stats.len(),
        rejections: out.selection.k,
        text: format!(
            "{} of {} mediators selected at alpha {} ({} excluded); results in {}",
            out.selection.k,
            out.stats.len(),
            cli.alpha,
            out.stats.failures.len(),
            cli.out_dir.display()
        ),
    })
}

/// Components from the command line when given, else from the scenario.
fn components(cli: &Cli, defaulted: &[String], kind: ScenarioKind) -> (usize, usize) {
    let (k1, k2) = kind.components();
    let given = |name: &str| !defaulted.iter().any(|d| d == name);
    (if given("d1") { cli.d1 } else { k1 }, if given("d2") { cli.d2 } else { k2 })
}

fn simulate(cli: &Cli, defaulted: &[String], timer: &mut Timer, manifest: &mut RunManifest) -> Result<Summary> {
    let (sc, source) = load_scenario(cli, defaulted)?;
    manifest.seed = sc.seed;
    manifest.seed_source = source;
    manifest.scenario = Some(sc.clone());
    let ds = timer.time("generate", || generate(&sc))?;
    timer.time("write_data", || write_dataset(&cli.out_dir.join("data"), &ds))?;

    let (d1, d2) = components(cli, defaulted, sc.kind);
    let config = PipelineConfig {
        outcome_model: Some(sc.kind.outcome_model()),
        d1,
        d2,
        strategy: strategy(cli),
        em: em_config(cli, sc.seed),
        alpha: cli.alpha,
        ..PipelineConfig::default()
    };
    manifest.pipeline = Some(config.clone());
    let out = timer.time("pipeline", || run_pipeline(&ds.data, &config))?;
    let ids = simulated_ids(sc.m);
    manifest.excluded = excluded(&ids, &out);

    let oracle_scores = mlfdr::compute_lfdr(&out.stats, &ds.truth)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut oracle: Vec<EvalReport> = Vec::new();
    for alpha in alpha_levels(cli) {
        let tag = |mut r: EvalReport| {
            r.seed = Some(sc.seed);
            r.scenario = Some(sc.kind);
            r
        };
        reports.push(tag(score(&step_up_select(&out.lfdr, alpha)?, &ds.labels)?));
        oracle.push(tag(score(&step_up_select(&oracle_scores, alpha)?, &ds.labels)?));
    }
    timer.time("write", || -> Result<()> {
        write_analysis(&cli.out_dir, &ids, &out)?;
        write_json(&cli.out_dir.join("report.json"), &SimulationReport { adaptive: &reports, oracle: &oracle })?;
        let points: Vec<CurvePoint> = reports
            .iter()
            .zip(&oracle)
            .map(|(r, o)| CurvePoint {
                alpha: r.alpha,
                fdr: r.fdp,
                fdr_se: None,
                power: r.power,
                power_se: None,
                oracle_fdr: Some(o.fdp),
                oracle_power: Some(o.power),
                rejections: r.r as f64,
            })
            .collect();
        write_curve(&cli.out_dir.join("fdr_power.tsv"), &points)
    })?;
    let main = reports.iter().find(|r| r.alpha == cli.alpha).expect("target level is in the grid");
    Ok(Summary {
        hypotheses: out.stats.len(),
        rejections: main.r,
        text: format!(
            "{} of {} mediators selected at alpha {}: false discovery proportion {:.4}, power {:.4}; results in {}",
            main.r,
            out.stats.len(),
            cli.alpha,
            main.fdp,
            main.power,
            cli.out_dir.display()
        ),
    })
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    adaptive: &'a [EvalReport],
    oracle: &'a [EvalReport],
}

fn evaluate(cli: &Cli, defaulted: &[String], timer: &mut Timer, manifest: &mut RunManifest) -> Result<Summary> {
    let (sc, source) = load_scenario(cli, defaulted)?;
    manifest.seed = sc.seed;
    manifest.seed_source = source;
    manifest.scenario = Some(sc.clone());
    let options = StudyOptions {
        alphas: alpha_levels(cli),
        components: Some(components(cli, defaulted, sc.kind)),
        strategy: strategy(cli),
        em: em_config(cli, sc.seed),
        ..StudyOptions::default()
    };
    let study = timer.time("study", || replicate_study(&sc, cli.reps, &options))?;
    // The first replicate's data, for inspection.
    let first = generate(&sc.with_seed(derive_seed(sc.seed, 0)))?;
    timer.time("write", || -> Result<()> {
        write_dataset(&cli.out_dir.join("data"), &first)?;
        write_json(&cli.out_dir.join("report.json"), &study)?;
        write_curve(&cli.out_dir.join("fdr_power.tsv"), &study_curve(&study))
    })?;
    let level = study.level(cli.alpha).expect("target level is in the grid");
    Ok(Summary {
        hypotheses: sc.m,
        rejections: level.mean_rejections.round() as usize,
        text: format!(
            "{} replicates ({} failed): FDR {:.4} (se {:.4}), power {:.4} (se {:.4}) at alpha {}; results in {}",
            study.replicates.len(),
            study.failures.len(),
            level.fdr.mean,
            level.fdr.se,
            level.power.mean,
            level.power.se,
            cli.alpha,
            cli.out_dir.display()
        ),
    })
}

fn study_curve(study: &StudyReport) -> Vec<CurvePoint> {
    study
        .levels
        .iter()
        .map(|l| CurvePoint {
            alpha: l.alpha,
            fdr: l.fdr.mean,
            fdr_se: Some(l.fdr.se),
            power: l.power.mean,
            power_se: Some(l.power.se),
            oracle_fdr: l.oracle_fdr.map(|e| e.mean),
            oracle_power: l.oracle_power.map(|e| e.mean),
            rejections: l.mean_rejections,
        })
        .collect()
}

//! Command-line driver: each subcommand runs one pipeline stage and writes
//! its outputs plus a run manifest into `--output-dir`.

pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use personaload::baselines::{
    few_shot_predict, mnl_fit, mnl_prediction_set, same_group_predict, zero_shot_predict, FewShotConfig,
    FEW_SHOT_TEMPLATE_VERSION, ZERO_SHOT_TEMPLATE_VERSION,
};
use personaload::data::{
    render_table, split_datasets, summarize_bundle, summarize_records, swissmetro, Category, ChoiceRecord,
    DatasetBundle, RespondentPanel, SplitManifest,
};
use personaload::em::{train_from, Checkpoint};
use personaload::eval::{comparison_report, evaluate, render_confusion};
use personaload::interpret::{cluster_profiles, cluster_sweep, export_params, project_2d, ProfileEmbeddingTable};
use personaload::loading::{loading_distribution, EmbeddingParams};
use personaload::oracle::{CachedOracle, HttpOracle, Oracle, SyntheticOracle};
use personaload::persona::{infer_personas, INFERENCE_TEMPLATE_VERSION};
use personaload::predict::{predict, Aggregation, PredictionSet, SIMULATION_TEMPLATE_VERSION};
use personaload::{
    jsonl, synth, AgeBand, Error, ErrorClass, Gender, IncomeBand, PersonaBasis, Result, SocioDemographics, UserGroup,
};

use crate::config::{Config, OracleKind, Overrides};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "personaload",
    version,
    about = "Persona loading for travel mode choice simulation"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "PERSONALOAD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "PERSONALOAD_SEED")]
    pub seed: Option<u64>,
    /// Directory receiving this command's outputs and manifest.
    #[arg(long, global = true, env = "PERSONALOAD_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "PERSONALOAD_ORACLE")]
    pub oracle: Option<OracleKind>,
    /// JSONL response cache wrapped around the oracle.
    #[arg(long, global = true, env = "PERSONALOAD_CACHE")]
    pub cache: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct BundleArg {
    /// Directory written by `split` or `synth`.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and filter the Swissmetro file; write panels and a summary.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Split panels into detailed, general and test sets.
    Split {
        /// Swissmetro `.dat` file, or `panels.jsonl` (or its directory) from `ingest`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Infer one persona per detailed panel with the expert oracle.
    InferPersonas {
        #[command(flatten)]
        bundle: BundleArg,
    },
    /// Estimate the loading parameters by Monte-Carlo EM.
    Train {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Continue from a checkpoint directory written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict the test records with persona loading.
    Predict {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        basis: Option<PathBuf>,
        /// `params.json`, or a directory containing it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, value_enum)]
        aggregation: Option<AggregationArg>,
    },
    /// Run a comparison model on the test records.
    Baseline {
        #[command(subcommand)]
        kind: BaselineCommand,
    },
    /// Score one prediction set against the test records.
    Evaluate {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Side-by-side report for several prediction sets (`name=dir`, in order).
    Compare {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long = "predictions", value_name = "NAME=DIR")]
        predictions: Vec<String>,
    },
    /// Parameter table, profile clusters and 2-D projection.
    Interpret {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Generate a synthetic population with latent groups keyed to user group.
    Synth,
    /// Print the top of the loading distribution for one profile.
    DumpLoading {
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        gender: String,
        #[arg(long)]
        age: String,
        #[arg(long)]
        income: String,
        #[arg(long)]
        group: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AggregationArg {
    SingleDraw,
    MajorityVote,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Multinomial logit fitted on the detailed and general records.
    Mnl {
        #[command(flatten)]
        bundle: BundleArg,
    },
    /// Demographics and trip context only, one oracle call per record.
    ZeroShot {
        #[command(flatten)]
        bundle: BundleArg,
    },
    /// Zero-shot plus the nearest detailed and general records as examples.
    FewShot {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        n_examples: Option<usize>,
        /// Example counts to sweep, one output subdirectory each.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
    },
    /// Persona drawn uniformly from panels sharing the record's profile.
    SameGroup {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        basis: Option<PathBuf>,
    },
}

/// Process exit status for each error class; clap uses 2 for usage errors.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 3,
        ErrorClass::Data => 4,
        ErrorClass::Oracle => 5,
        ErrorClass::Estimation => 6,
    }
}

fn need<'a>(value: &'a Option<PathBuf>, flag: &str, command: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("`{command}` requires {flag}")))
}

fn build_oracle(config: &Config) -> Result<Box<dyn Oracle>> {
    let base: Box<dyn Oracle> = match config.oracle.kind {
        OracleKind::Synthetic => Box::new(SyntheticOracle::new(config.oracle.synthetic.clone())?),
        OracleKind::Http => Box::new(HttpOracle::new(config.oracle.http.clone())?),
    };
    Ok(match &config.oracle.cache {
        Some(path) => Box::new(CachedOracle::new(base, path)?),
        None => base,
    })
}

fn record_oracle(manifest: &mut RunManifest, oracle: &dyn Oracle) {
    let s = oracle.stats();
    manifest.oracle = Some(oracle.identity());
    manifest.oracle_calls = s.calls;
    manifest.cache_hits = s.cache_hits;
}

fn read_bundle(dir: &Path, manifest: &mut RunManifest) -> Result<DatasetBundle> {
    manifest.input(dir)?;
    Ok(DatasetBundle::read_dir(dir)?.0)
}

fn read_basis(dir: &Path, manifest: &mut RunManifest) -> Result<PersonaBasis> {
    manifest.input(dir)?;
    PersonaBasis::read_dir(dir)
}

fn read_params(path: &Path, manifest: &mut RunManifest) -> Result<EmbeddingParams> {
    let file = if path.is_dir() {
        path.join(personaload::em::PARAMS_FILE)
    } else {
        path.to_path_buf()
    };
    manifest.input(&file)?;
    EmbeddingParams::load(&file)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_panels(input: &Path) -> Result<Vec<RespondentPanel>> {
    if input.extension().is_some_and(|e| e == "jsonl") {
        jsonl::read(input)
    } else {
        Ok(swissmetro::filter_records(&swissmetro::parse_file(input)?))
    }
}

fn parse_category<C: Category>(value: &str) -> Result<C> {
    C::ALL.iter().copied().find(|c| c.label() == value).ok_or_else(|| {
        let labels: Vec<&str> = C::ALL.iter().map(|c| c.label()).collect();
        Error::Config(format!(
            "unknown {} `{value}`; expected one of {}",
            C::VARIABLE,
            labels.join(", ")
        ))
    })
}

/// Parses arguments (exiting on usage errors) and runs the command.
pub fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.output_dir.clone(),
        oracle: cli.oracle,
        cache: cli.cache.clone(),
    };
    let config = Config::resolve(cli.config.as_deref(), &overrides)?;
    let out = config.output_dir.clone();
    match &cli.command {
        Command::Ingest { input } => ingest(&config, need(input, "--input", "ingest")?, &out),
        Command::Split { input } => split(&config, need(input, "--input", "split")?, &out),
        Command::InferPersonas { bundle } => {
            let mut m = RunManifest::start("infer-personas", &config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "infer-personas")?, &mut m)?;
            let oracle = build_oracle(&config)?;
            let outcome = infer_personas(&b.detailed, oracle.as_ref())?;
            outcome.basis.write_dir(&out)?;
            jsonl::write(&out.join("failures.jsonl"), &outcome.failures)?;
            println!(
                "inferred {} personas ({} failures) into {}",
                outcome.basis.len(),
                outcome.failures.len(),
                out.display()
            );
            m.template(INFERENCE_TEMPLATE_VERSION);
            record_oracle(&mut m, oracle.as_ref());
            m.finish(&out)
        }
        Command::Train { bundle, basis, resume } => {
            let bundle_dir = need(&bundle.bundle, "--bundle", "train")?;
            let basis_dir = need(basis, "--basis", "train")?;
            let mut m = RunManifest::start("train", &config);
            let b = read_bundle(bundle_dir, &mut m)?;
            let basis = read_basis(basis_dir, &mut m)?;
            let resume = match resume {
                Some(dir) => {
                    m.input(dir)?;
                    Some(Checkpoint::read_dir(dir)?)
                }
                None => None,
            };
            let oracle = build_oracle(&config)?;
            let outcome = train_from(&b.general, &basis, oracle.as_ref(), &config.train, resume, Some(&out))?;
            outcome.write_dir(&out)?;
            println!(
                "{} iterations, converged: {}, params written to {}",
                outcome.iterations(),
                outcome.converged,
                out.join(personaload::em::PARAMS_FILE).display()
            );
            m.template(SIMULATION_TEMPLATE_VERSION);
            record_oracle(&mut m, oracle.as_ref());
            m.finish(&out)
        }
        Command::Predict {
            bundle,
            basis,
            params,
            repeats,
            aggregation,
        } => {
            let mut m = RunManifest::start("predict", &config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "predict")?, &mut m)?;
            let basis = read_basis(need(basis, "--basis", "predict")?, &mut m)?;
            let params = read_params(need(params, "--params", "predict")?, &mut m)?;
            let mut pc = config.predict.clone();
            if let Some(r) = repeats {
                pc.repeats = *r;
            }
            if let Some(a) = aggregation {
                pc.aggregation = match a {
                    AggregationArg::SingleDraw => Aggregation::SingleDraw,
                    AggregationArg::MajorityVote => Aggregation::MajorityVote,
                };
            }
            if pc.aggregation == Aggregation::SingleDraw && pc.repeats > 1 {
                return Err(Error::Config("--repeats > 1 needs --aggregation majority-vote".into()));
            }
            m.config.predict = pc.clone();
            let oracle = build_oracle(&config)?;
            let set = predict(&b.test, &params, &basis, oracle.as_ref(), &pc)?;
            finish_predictions(set, &out, m, Some(oracle.as_ref()), SIMULATION_TEMPLATE_VERSION)
        }
        Command::Baseline { kind } => baseline(&config, kind, &out),
        Command::Evaluate { bundle, predictions } => {
            let mut m = RunManifest::start("evaluate", &config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "evaluate")?, &mut m)?;
            let dir = need(predictions, "--predictions", "evaluate")?;
            m.input(dir)?;
            let set = PredictionSet::read_dir(dir)?;
            let report = evaluate(&set, &b.test, config.evaluate.epsilon)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            jsonl::write_json(&out.join("metrics.json"), &report)?;
            let text = format!(
                "method: {}\ndivergence: {:.6}\nmacro F1: {:.6}\nweighted F1: {:.6}\nevaluated: {}\nfailed: {}\n\n{}",
                report.method,
                report.divergence,
                report.macro_f1,
                report.weighted_f1,
                report.evaluated,
                report.failed,
                render_confusion(&report.confusion)
            );
            write_text(&out.join("metrics.txt"), &text)?;
            print!("{text}");
            m.finish(&out)
        }
        Command::Compare { bundle, predictions } => {
            let mut m = RunManifest::start("compare", &config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "compare")?, &mut m)?;
            if predictions.is_empty() {
                return Err(Error::Config(
                    "`compare` requires at least one --predictions NAME=DIR".into(),
                ));
            }
            let mut sets = Vec::new();
            for arg in predictions {
                let (name, dir) = arg
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--predictions expects NAME=DIR, got `{arg}`")))?;
                m.input(Path::new(dir))?;
                sets.push((name.to_string(), PredictionSet::read_dir(Path::new(dir))?));
            }
            let report = comparison_report(&sets, &b.test, config.evaluate.epsilon)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let table = report.render_table();
            let mut confusion = String::new();
            for r in &report.rows {
                confusion.push_str(&format!("{}\n{}\n", r.method, render_confusion(&r.confusion)));
            }
            jsonl::write_json(&out.join("comparison.json"), &report)?;
            jsonl::write_json(&out.join("plot_data.json"), &report.plot_data())?;
            write_text(&out.join("comparison.txt"), &table)?;
            write_text(&out.join("confusion.txt"), &confusion)?;
            print!("{table}");
            m.finish(&out)
        }
        Command::Interpret { bundle, params, k } => {
            let mut m = RunManifest::start("interpret", &config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "interpret")?, &mut m)?;
            let params = read_params(need(params, "--params", "interpret")?, &mut m)?;
            let k = k.unwrap_or(config.interpret.k);
            let records: Vec<ChoiceRecord> = b
                .detailed_records()
                .into_iter()
                .chain(b.general.iter().cloned())
                .collect();
            let table = ProfileEmbeddingTable::from_records(&records, &params);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let entries = export_params(&params);
            let mut text = String::new();
            for e in &entries {
                text.push_str(&format!("{:<18} {:>12.6}\n", e.label, e.value));
            }
            jsonl::write_json(&out.join("params_table.json"), &entries)?;
            write_text(&out.join("params_table.txt"), &text)?;
            jsonl::write_json(&out.join("profiles.json"), &table)?;
            let clusters = cluster_profiles(&table, k, config.seed, config.interpret.restarts)?;
            jsonl::write_json(&out.join("clusters.json"), &clusters)?;
            jsonl::write_json(&out.join("projection.json"), &project_2d(&table)?)?;
            let sweep = cluster_sweep(&table, &config.interpret.sweep, config.seed, config.interpret.restarts)?;
            jsonl::write_json(&out.join("sweep.json"), &sweep)?;
            print!("{text}");
            println!("{} profiles in {k} clusters, sizes {:?}", table.len(), clusters.sizes());
            m.finish(&out)
        }
        Command::Synth => {
            let m = RunManifest::start("synth", &config);
            let pop = synth::generate(&config.synth)?;
            let sm = SplitManifest {
                seed: config.synth.seed,
                sizes: personaload::data::SplitSizes {
                    n_detailed_respondents: pop.bundle.detailed.len(),
                    n_general_records: pop.bundle.general.len(),
                    n_test_records: pop.bundle.test.len(),
                },
                source_sha256: None,
                filter_rule: "synthetic population".into(),
                filtered_respondents: pop.ratings.len(),
                filtered_records: pop.bundle.detailed_records().len()
                    + pop.bundle.general.len()
                    + pop.bundle.test.len(),
            };
            pop.bundle.write_dir(&out, &sm)?;
            let ratings: Vec<_> = pop.ratings.iter().collect();
            jsonl::write(&out.join("ratings.jsonl"), &ratings)?;
            pop.true_basis().write_dir(&out.join("true-basis"))?;
            print!("{}", render_table(&summarize_bundle(&pop.bundle)));
            m.clone().finish(&out.join("true-basis"))?;
            m.finish(&out)
        }
        Command::DumpLoading {
            basis,
            params,
            gender,
            age,
            income,
            group,
            top,
        } => {
            let mut m = RunManifest::start("dump-loading", &config);
            let basis = read_basis(need(basis, "--basis", "dump-loading")?, &mut m)?;
            let params = read_params(need(params, "--params", "dump-loading")?, &mut m)?;
            let d = SocioDemographics {
                gender: parse_category::<Gender>(gender)?,
                age: parse_category::<AgeBand>(age)?,
                income: parse_category::<IncomeBand>(income)?,
                group: parse_category::<UserGroup>(group)?,
            };
            let dist = loading_distribution(&d, &params, &basis, config.train.lambda)?;
            for (k, p) in dist.top(*top) {
                let persona = &basis.personas[k];
                let src = basis.demographics_of(k);
                println!(
                    "{p:.6}  respondent {} ({}, {}, {}, {})  ratings {:?}",
                    persona.source,
                    src.gender,
                    src.age,
                    src.income,
                    src.group,
                    persona.ratings.values()
                );
            }
            Ok(())
        }
    }
}

fn ingest(config: &Config, input: &Path, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("ingest", config);
    m.input(input)?;
    let panels = swissmetro::filter_records(&swissmetro::parse_file(input)?);
    let records: Vec<ChoiceRecord> = panels.iter().flat_map(|p| p.records()).collect();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    jsonl::write(&out.join("panels.jsonl"), &panels)?;
    let summary = summarize_records("filtered", &records);
    jsonl::write_json(&out.join("summary.json"), &summary)?;
    let table = render_table(std::slice::from_ref(&summary));
    write_text(&out.join("summary.txt"), &table)?;
    println!("{} respondents, {} records", panels.len(), records.len());
    print!("{table}");
    m.finish(out)
}

fn split(config: &Config, input: &Path, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("split", config);
    let panels_file = input.join("panels.jsonl");
    let input = if input.is_dir() { panels_file.as_path() } else { input };
    m.input(input)?;
    let source_sha256 = m.inputs.first().map(|i| i.sha256.clone());
    let panels = read_panels(input)?;
    let bundle = split_datasets(&panels, config.seed, config.split)?;
    let sm = SplitManifest {
        seed: config.seed,
        sizes: config.split,
        source_sha256,
        filter_rule: swissmetro::FILTER_RULE.into(),
        filtered_respondents: panels.len(),
        filtered_records: panels.iter().map(|p| p.observations.len()).sum(),
    };
    bundle.write_dir(out, &sm)?;
    let table = render_table(&summarize_bundle(&bundle));
    write_text(&out.join("summary.txt"), &table)?;
    println!(
        "detailed {} panels / {} records, general {}, test {}",
        bundle.detailed.len(),
        bundle.detailed_records().len(),
        bundle.general.len(),
        bundle.test.len()
    );
    m.finish(out)
}

fn finish_predictions(
    set: PredictionSet,
    out: &Path,
    mut m: RunManifest,
    oracle: Option<&dyn Oracle>,
    template: &str,
) -> Result<()> {
    set.write_dir(out)?;
    print!("{}", set.summary());
    m.template(template);
    if let Some(o) = oracle {
        record_oracle(&mut m, o);
    }
    m.finish(out)
}

fn baseline(config: &Config, kind: &BaselineCommand, out: &Path) -> Result<()> {
    match kind {
        BaselineCommand::Mnl { bundle } => {
            let mut m = RunManifest::start("baseline mnl", config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "baseline mnl")?, &mut m)?;
            let train: Vec<ChoiceRecord> = b
                .detailed_records()
                .into_iter()
                .chain(b.general.iter().cloned())
                .collect();
            let fit = mnl_fit(&train, config.mnl.annual_pass_interaction)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            jsonl::write_json(&out.join("mnl_fit.json"), &fit)?;
            let set = mnl_prediction_set(&fit.params, &b.test)?;
            finish_predictions(set, out, m, None, "none")
        }
        BaselineCommand::ZeroShot { bundle } => {
            let mut m = RunManifest::start("baseline zero-shot", config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "baseline zero-shot")?, &mut m)?;
            let oracle = build_oracle(config)?;
            let set = zero_shot_predict(&b.test, oracle.as_ref());
            finish_predictions(set, out, m, Some(oracle.as_ref()), ZERO_SHOT_TEMPLATE_VERSION)
        }
        BaselineCommand::FewShot {
            bundle,
            n_examples,
            sweep,
        } => {
            if n_examples.is_some() && sweep.is_some() {
                return Err(Error::Config("--n-examples and --sweep cannot be combined".into()));
            }
            let mut m = RunManifest::start("baseline few-shot", config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "baseline few-shot")?, &mut m)?;
            let pool: Vec<ChoiceRecord> = b
                .detailed_records()
                .into_iter()
                .chain(b.general.iter().cloned())
                .collect();
            let oracle = build_oracle(config)?;
            let counts = match (sweep, n_examples) {
                (Some(s), _) => s.clone(),
                (None, Some(n)) => vec![*n],
                (None, None) => vec![config.few_shot.n_examples],
            };
            if let [n] = counts[..] {
                let set = few_shot_predict(&b.test, &pool, &FewShotConfig { n_examples: n }, oracle.as_ref())?;
                m.config.few_shot.n_examples = n;
                return finish_predictions(set, out, m, Some(oracle.as_ref()), FEW_SHOT_TEMPLATE_VERSION);
            }
            for n in counts {
                let set = few_shot_predict(&b.test, &pool, &FewShotConfig { n_examples: n }, oracle.as_ref())?;
                let mut sub = m.clone();
                sub.config.few_shot.n_examples = n;
                finish_predictions(
                    set,
                    &out.join(format!("n{n}")),
                    sub,
                    Some(oracle.as_ref()),
                    FEW_SHOT_TEMPLATE_VERSION,
                )?;
            }
            record_oracle(&mut m, oracle.as_ref());
            m.finish(out)
        }
        BaselineCommand::SameGroup { bundle, basis } => {
            let mut m = RunManifest::start("baseline same-group", config);
            let b = read_bundle(need(&bundle.bundle, "--bundle", "baseline same-group")?, &mut m)?;
            let basis = read_basis(need(basis, "--basis", "baseline same-group")?, &mut m)?;
            let oracle = build_oracle(config)?;
            let set = same_group_predict(&b.test, &basis, oracle.as_ref(), config.seed)?;
            finish_predictions(set, out, m, Some(oracle.as_ref()), SIMULATION_TEMPLATE_VERSION)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn missing_basis_is_a_config_error() {
        let cli = Cli::try_parse_from(["personaload", "train", "--bundle", "x"]).unwrap();
        let e = run(cli).unwrap_err();
        assert_eq!(exit_code(e.class()), 3);
        assert!(e.to_string().contains("--basis"));
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let e = Cli::try_parse_from(["personaload", "split", "--bogus"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes: std::collections::HashSet<i32> = [
            ErrorClass::Config,
            ErrorClass::Data,
            ErrorClass::Oracle,
            ErrorClass::Estimation,
        ]
        .map(exit_code)
        .into();
        assert_eq!(codes.len(), 4);
        assert!(!codes.contains(&0) && !codes.contains(&2));
    }

    #[test]
    fn category_labels_parse() {
        assert_eq!(parse_category::<AgeBand>("55-65").unwrap(), AgeBand::From55To65);
        assert!(matches!(parse_category::<UserGroup>("bus_user"), Err(Error::Config(_))));
    }
}

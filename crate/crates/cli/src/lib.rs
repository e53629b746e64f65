//! Command implementations behind the `gpx` binary.
//!
//! Every command writes into its `--out` directory: a `report.json` plus one
//! CSV per plotted series. Outputs depend only on the arguments and the seed;
//! wall-clock timings go to a separate `timings.json` when requested.

pub mod args;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use gpx::conformal::{self, IntervalRow};
use gpx::dataset::read_points_csv;
use gpx::gp::{FitOptions, ModelDocument, MODEL_FORMAT_VERSION};
use gpx::pdp::{self, ImportanceTable, PdResult, ICE_EXPORT_LIMIT};
use gpx::rng::RNG_ALGORITHM;
use gpx::shap::{self, ShapMode, ShapTable};
use gpx::{sobol, Dataset, Error, FeatureSpace, GpModel, KernelConfig, Point, Result, Surrogate};

pub use args::{Cli, Command};
use args::*;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Conformal(a) => cmd_conformal(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Contents of `model.json`: the model document plus the holdout used for
/// testing and conformal calibration, and the settings that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub document: ModelDocument,
    pub holdout_csv: Option<String>,
    pub run: FitRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRun {
    pub source: SourceArgs,
    pub fit: FitSettings,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = read_to_string(path)?;
        ModelDocument::from_json(&text)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn model(&self) -> Result<GpModel> {
        GpModel::from_document(&self.document)
    }

    pub fn holdout(&self) -> Result<Dataset> {
        let text = self.holdout_csv.as_ref().ok_or_else(|| {
            Error::validation("model file has no calibration partition; re-fit with `gpx fit` to create a train/holdout split")
        })?;
        Dataset::from_csv_str(&self.document.space, text)
    }
}

struct RunDir {
    path: PathBuf,
    timings: Option<BTreeMap<String, f64>>,
}

impl RunDir {
    fn create(path: &Path, timings: bool) -> Result<RunDir> {
        fs::create_dir_all(path)?;
        Ok(RunDir { path: path.to_path_buf(), timings: timings.then(BTreeMap::new) })
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path.join(name), text)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        if let Some(t) = self.timings.as_mut() {
            t.insert(label.to_string(), start.elapsed().as_secs_f64());
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        match &self.timings {
            Some(t) => self.write_json("timings.json", t),
            None => Ok(()),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Feature names as they appear in file names.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn metadata(command: &str, seed: u64, config: Json) -> Json {
    json!({
        "tool": "gpx",
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_ALGORITHM,
        "model_format_version": MODEL_FORMAT_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
    })
}

fn load_source(src: &SourceArgs, seed: u64) -> Result<Dataset> {
    match (&src.benchmark, &src.space, &src.data) {
        (Some(p), _, _) => p.generate_dataset(src.n, seed),
        (None, Some(space), Some(data)) => {
            let space = FeatureSpace::from_json(&read_to_string(space)?)?;
            Dataset::from_csv_str(&space, &read_to_string(data)?)
        }
        _ => Err(Error::validation("give --benchmark, or both --space and --data")),
    }
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let dir = RunDir::create(&a.out, false)?;
    let data = a.problem.generate_dataset(a.n, a.seed)?;
    dir.write("data.csv", &data.to_csv_string()?)?;
    let mut space = data.space().to_json()?;
    space.push('\n');
    dir.write("space.json", &space)?;
    println!("wrote {} samples of {} to {}", data.len(), a.problem, a.out.display());
    Ok(())
}

struct Fitted {
    model: GpModel,
    file: ModelFile,
    summary: Json,
}

fn fit_and_write(source: &SourceArgs, fit: &FitSettings, dir: &mut RunDir) -> Result<Fitted> {
    let data = load_source(source, fit.seed)?;
    let (train, holdout) = conformal::split(&data, fit.train_frac, fit.seed)?;
    let template = KernelConfig::initial(train.space(), fit.kernel);
    let opts = FitOptions { n_starts: fit.starts, max_evals_per_start: None, seed: fit.seed };
    let (model, starts) = dir.time("fit", || GpModel::fit_with_report(&train, &template, &opts))?;
    let (train_raw, train_std) = model.rmse(&train)?;
    let (test_raw, test_std) = model.rmse(&holdout)?;
    let space = model.space();
    let mut correlations = Vec::new();
    for j in space.categorical_indices() {
        let name = &space.spec(j).name;
        let lc = model.config().level_correlation(space, name)?;
        dir.write(&format!("correlation_{}.csv", file_stem(name)), &lc.to_csv()?)?;
        correlations.push(lc);
    }
    let file = ModelFile {
        document: model.to_document()?,
        holdout_csv: Some(holdout.to_csv_string()?),
        run: FitRun { source: source.clone(), fit: fit.clone() },
    };
    dir.write_json("model.json", &file)?;
    let summary = json!({
        "method": "gp",
        "seed": fit.seed,
        "budget": { "starts": fit.starts },
        "n_train": train.len(),
        "n_test": holdout.len(),
        "kernel": model.config(),
        "trend_mu": model.trend_mu(),
        "sigma2": model.sigma2(),
        "neg_log_likelihood": model.neg_log_likelihood(),
        "standardizer": model.standardizer(),
        "rmse": {
            "train": { "raw": train_raw, "standardized": train_std },
            "test": { "raw": test_raw, "standardized": test_std },
        },
        "starts": starts,
        "level_correlations": correlations,
    });
    Ok(Fitted { model, file, summary })
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut dir = RunDir::create(&a.out, a.timings)?;
    let fitted = fit_and_write(&a.source, &a.fit, &mut dir)?;
    let report = json!({
        "metadata": metadata("fit", a.fit.seed, json!({ "source": a.source, "fit": a.fit })),
        "fit": fitted.summary,
    });
    dir.write_json("report.json", &report)?;
    dir.finish()?;
    println!(
        "fit {} train / {} test rows, standardized test RMSE {}",
        fitted.summary["n_train"], fitted.summary["n_test"], fitted.summary["rmse"]["test"]["standardized"]
    );
    Ok(())
}

fn parse_references(space: &FeatureSpace, items: &[String]) -> Result<Point> {
    let mut overrides = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("reference `{item}` is not FEATURE=LEVEL")))?;
        overrides.insert(k.trim().to_string(), v.trim().to_string());
    }
    space.center_reference(&overrides)
}

fn all_selections(space: &FeatureSpace) -> BTreeSet<Selection> {
    let mut s: BTreeSet<Selection> =
        [Selection::Pdp, Selection::Ice, Selection::Shap, Selection::Importance, Selection::Correlation].into();
    if !space.has_categorical() {
        s.insert(Selection::Sobol);
    }
    s
}

fn explain_blocks(
    model: &GpModel,
    settings: &ExplainSettings,
    selections: &BTreeSet<Selection>,
    seed: u64,
    dir: &mut RunDir,
) -> Result<Vec<Json>> {
    let space = model.space().clone();
    if selections.contains(&Selection::Sobol) {
        sobol::require_continuous(&space)?;
    }
    if settings.grid_size < 2 || settings.n_base < 2 || settings.n_coalitions == Some(0) {
        return Err(Error::validation("budgets must be positive (grid size and n_base at least 2)"));
    }
    let reference = parse_references(&space, &settings.reference)?;
    let background = model.train();
    let mut blocks = Vec::new();

    let wants_pd = selections.contains(&Selection::Pdp) || selections.contains(&Selection::Ice);
    let mut pds: Vec<PdResult> = Vec::new();
    if wants_pd {
        pds = dir.time("pdp", || {
            space
                .names()
                .map(|f| pdp::compute_pd(model, &[f], background, settings.grid_size, "train"))
                .collect::<Result<Vec<_>>>()
        })?;
    }
    if selections.contains(&Selection::Pdp) {
        for (j, r) in pds.iter().enumerate() {
            let name = &r.features[0];
            let file = format!("pdp_{}.csv", file_stem(name));
            dir.write(&file, &csv_string(|w| r.write_csv(w, false, ICE_EXPORT_LIMIT))?)?;
            let mut block = json!({
                "method": "pdp",
                "feature": name,
                "seed": seed,
                "budget": { "grid_size": settings.grid_size, "n_background": r.ice.len(), "ice_exported": r.ice.len().min(ICE_EXPORT_LIMIT) },
                "background": r.background,
                "file": file,
                "grid": r.grid,
                "pd": r.pd,
            });
            if space.spec(j).is_categorical() {
                let level = reference[j].to_string();
                let levels = pdp::categorical_pd_levels(model, name, background, &level)?;
                block["reference_level"] = json!(level);
                block["levels"] = json!(levels);
            }
            blocks.push(block);
        }
    }
    if selections.contains(&Selection::Ice) {
        for r in &pds {
            let name = &r.features[0];
            let file = format!("ice_centered_{}.csv", file_stem(name));
            dir.write(&file, &csv_string(|w| r.write_csv(w, true, ICE_EXPORT_LIMIT))?)?;
            blocks.push(json!({
                "method": "ice",
                "feature": name,
                "seed": seed,
                "centered": true,
                "budget": { "grid_size": settings.grid_size, "ice_exported": r.ice.len().min(ICE_EXPORT_LIMIT) },
                "centered_spread": r.centered_spread(),
                "file": file,
            }));
        }
    }

    let mode = match settings.n_coalitions {
        Some(n) => ShapMode::Kernel { n_coalitions: n, seed },
        None if space.len() <= shap::MAX_EXACT_FEATURES => ShapMode::Exact,
        None => ShapMode::Kernel { n_coalitions: 2048, seed },
    };
    let shap_meta = |t: &ShapTable| {
        json!({ "mode": t.mode, "n_sh": t.n_sh, "reference": reference.values() })
    };
    let mut shap_table: Option<ShapTable> = None;
    if selections.contains(&Selection::Shap) || selections.contains(&Selection::Importance) {
        let sample = shap::sample_rows(background, shap::DEFAULT_SAMPLE_SIZE, seed);
        shap_table = Some(dir.time("shap", || shap::shap_table(model, sample.points(), &reference, mode))?);
    }
    if selections.contains(&Selection::Shap) {
        let t = shap_table.as_ref().expect("computed above");
        dir.write("shap_values.csv", &csv_string(|w| t.write_csv(w))?)?;
        blocks.push(json!({
            "method": "shap",
            "seed": seed,
            "budget": shap_meta(t),
            "importance": t.importance(),
            "file": "shap_values.csv",
        }));
    }

    let mut sobol_result = None;
    if selections.contains(&Selection::Sobol) || (selections.contains(&Selection::Importance) && !space.has_categorical()) {
        sobol_result = Some(dir.time("sobol", || sobol::sobol_indices(model, settings.n_base, seed))?);
    }
    if selections.contains(&Selection::Sobol) {
        let r = sobol_result.as_ref().expect("computed above");
        dir.write("sobol.csv", &csv_string(|w| r.write_csv(w))?)?;
        blocks.push(json!({
            "method": "sobol",
            "seed": seed,
            "evaluator": "surrogate",
            "budget": { "n_base": r.n_base, "evaluations": r.n_base * (space.len() + 2) },
            "result": r,
            "file": "sobol.csv",
        }));
    }

    if selections.contains(&Selection::Importance) {
        let mut tables: Vec<ImportanceTable> = Vec::new();
        tables.push(match pds.is_empty() {
            true => dir.time("pd_importance", || pdp::pd_importance(model, background, settings.grid_size))?,
            false => ImportanceTable {
                method: gpx::ImportanceMethod::Pd,
                features: space.names().map(String::from).collect(),
                values: pds
                    .iter()
                    .enumerate()
                    .map(|(j, r)| pdp::importance_from_pd(space.spec(j).is_categorical(), &r.pd))
                    .collect(),
            },
        });
        tables.push(shap_table.as_ref().expect("computed above").importance());
        if let Some(r) = &sobol_result {
            tables.push(r.first_table());
            tables.push(r.total_table());
        }
        let text = csv_string(|w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["method", "feature", "importance"])?;
            for t in &tables {
                for (f, v) in t.features.iter().zip(&t.values) {
                    wtr.write_record([t.method.to_string(), f.clone(), v.to_string()])?;
                }
            }
            wtr.flush()?;
            Ok(())
        })?;
        dir.write("importance.csv", &text)?;
        let mut block = json!({
            "method": "importance",
            "seed": seed,
            "budget": {
                "grid_size": settings.grid_size,
                "shap": shap_meta(shap_table.as_ref().expect("computed above")),
                "n_base": sobol_result.as_ref().map(|r| r.n_base),
            },
            "tables": tables,
            "file": "importance.csv",
        });
        if space.has_categorical() {
            block["sobol_omitted"] = json!("Sobol' indices need an all-continuous feature space");
        }
        blocks.push(block);
    }

    if selections.contains(&Selection::Correlation) {
        for j in space.categorical_indices() {
            let name = &space.spec(j).name;
            let lc = model.config().level_correlation(&space, name)?;
            let file = format!("correlation_{}.csv", file_stem(name));
            dir.write(&file, &lc.to_csv()?)?;
            blocks.push(json!({ "method": "correlation", "feature": name, "seed": seed, "budget": null, "matrix": lc, "file": file }));
        }
    }
    Ok(blocks)
}

fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let model = file.model()?;
    let mut dir = RunDir::create(&a.out, a.timings)?;
    let selections: BTreeSet<Selection> = a.settings.explain.iter().copied().collect();
    let blocks = explain_blocks(&model, &a.settings, &selections, a.seed, &mut dir)?;
    let report = json!({
        "metadata": metadata("explain", a.seed, json!({ "model": a.model, "explain": a.settings })),
        "model": { "run": file.run, "kernel": model.config() },
        "blocks": blocks,
    });
    dir.write_json("report.json", &report)?;
    dir.finish()?;
    println!("wrote {} explanation blocks to {}", report["blocks"].as_array().map_or(0, |b| b.len()), a.out.display());
    Ok(())
}

fn interval_block(name: &str, calib: &conformal::ConformalCalibration, rows: &[IntervalRow], file: &str) -> Json {
    let (gp_neg, conf_neg) = conformal::negative_lower_counts(rows);
    let gp_coverage = rows
        .iter()
        .map(|r| r.y_true.map(|y| r.gp_lower <= y && y <= r.gp_upper))
        .collect::<Option<Vec<bool>>>()
        .filter(|h| !h.is_empty())
        .map(|h| h.iter().filter(|&&x| x).count() as f64 / h.len() as f64);
    json!({
        "method": "split-conformal",
        "feature": name,
        "alpha": calib.alpha,
        "q_alpha": calib.q_alpha,
        "width": calib.width(),
        "n_cal": calib.n_cal,
        "n_validation": rows.len(),
        "coverage": { "conformal": conformal::empirical_coverage(rows), "gp": gp_coverage },
        "negative_lower": { "gp": gp_neg, "conformal": conf_neg },
        "file": file,
    })
}

fn conformal_blocks(
    model: &GpModel,
    file: &ModelFile,
    settings: &ConformalSettings,
    data: Option<&Path>,
    seed: u64,
    dir: &mut RunDir,
) -> Result<Vec<Json>> {
    let space = model.space().clone();
    let cal = file.holdout()?;
    let (points, y) = match (data, file.run.source.benchmark) {
        (Some(path), _) => read_points_csv(&space, read_to_string(path)?.as_bytes())?,
        (None, Some(problem)) => {
            let v = problem.validation_dataset(settings.n_validation, seed)?;
            (v.points().to_vec(), Some(v.responses().to_vec()))
        }
        (None, None) => return Err(Error::validation("models fitted on a dataset need --data with validation points")),
    };
    let calib = conformal::calibrate_model(model, &cal, settings.alpha)?;
    let rows = conformal::interval_table(model, &calib, &points, y.as_deref())?;
    dir.write("conformal.csv", &csv_string(|w| conformal::write_interval_csv(&space, &rows, w))?)?;
    let mut blocks = vec![interval_block("all", &calib, &rows, "conformal.csv")];
    blocks[0]["seed"] = json!(seed);

    if settings.single_feature {
        let fit = &file.run.fit;
        for j in 0..space.len() {
            let name = space.spec(j).name.clone();
            let train = model.train().project(&[j])?;
            let holdout = cal.project(&[j])?;
            let template = KernelConfig::initial(train.space(), fit.kernel);
            let opts = FitOptions { n_starts: fit.starts, max_evals_per_start: None, seed: fit.seed };
            let sub = dir.time(&format!("single_feature_{name}"), || GpModel::fit(&train, &template, &opts))?;
            let c = conformal::calibrate_model(&sub, &holdout, settings.alpha)?;
            let pts: Vec<Point> = points.iter().map(|p| Point(vec![p[j].clone()])).collect();
            let r = conformal::interval_table(&sub, &c, &pts, y.as_deref())?;
            let f = format!("conformal_{}.csv", file_stem(&name));
            dir.write(&f, &csv_string(|w| conformal::write_interval_csv(train.space(), &r, w))?)?;
            let mut block = interval_block(&name, &c, &r, &f);
            block["seed"] = json!(fit.seed);
            block["single_feature_kernel"] = json!(sub.config());
            blocks.push(block);
        }
    }
    Ok(blocks)
}

fn cmd_conformal(a: &ConformalArgs) -> Result<()> {
    let file = ModelFile::load(&a.model)?;
    let model = file.model()?;
    let mut dir = RunDir::create(&a.out, a.timings)?;
    let blocks = conformal_blocks(&model, &file, &a.settings, a.data.as_deref(), a.seed, &mut dir)?;
    let report = json!({
        "metadata": metadata("conformal", a.seed, json!({ "model": a.model, "data": a.data, "conformal": a.settings })),
        "blocks": blocks,
    });
    dir.write_json("report.json", &report)?;
    dir.finish()?;
    println!("q_alpha = {} on {} calibration points", blocks[0]["q_alpha"], blocks[0]["n_cal"]);
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut dir = RunDir::create(&a.out, a.timings)?;
    let fitted = fit_and_write(&a.source, &a.fit, &mut dir)?;
    let space = fitted.model.space().clone();
    let selections: BTreeSet<Selection> = if a.explain.explain.is_empty() {
        all_selections(&space)
    } else {
        a.explain.explain.iter().copied().collect()
    };
    let blocks = explain_blocks(&fitted.model, &a.explain, &selections, a.fit.seed, &mut dir)?;
    // fresh validation points exist only for benchmark sources
    let intervals = match fitted.file.run.source.benchmark {
        Some(_) => conformal_blocks(&fitted.model, &fitted.file, &a.conformal, None, a.fit.seed, &mut dir)?,
        None => Vec::new(),
    };
    let report = json!({
        "metadata": metadata("report", a.fit.seed, json!({
            "source": a.source, "fit": a.fit, "explain": a.explain, "conformal": a.conformal,
        })),
        "fit": fitted.summary,
        "blocks": blocks,
        "conformal": intervals,
    });
    dir.write_json("report.json", &report)?;
    dir.finish()?;
    println!("report written to {}", a.out.display());
    Ok(())
}

use std::fmt::Write as _;

use clusterfuse::model::{count_nonzero, DEFAULT_ZERO_TOL};
use clusterfuse::qda::{classification_error, Priors, QdaModel};
use clusterfuse::tuning::{cv_select, CvOutcome, Method, TuningGrid};
use clusterfuse::{ClassDataset, FitResult, PenaltyConfig, PrecisionSet};

use crate::data::{label_indices, read_labeled, read_observations, Labeled};
use crate::error::{CliError, CliResult};
use crate::model_file::{matrix_rows, write_file, Diagnostics, GridFile, ModelFile, SCHEMA_VERSION};
use crate::{EstimateArgs, EstimateMethod, PenaltyArgs, PredictArgs, PriorArg, TrainArgs, TrainMethod, TuneArgs};

impl From<EstimateMethod> for Method {
    fn from(m: EstimateMethod) -> Self {
        match m {
            EstimateMethod::Crf => Method::Crf,
            EstimateMethod::Pcen => Method::Pcen,
        }
    }
}

fn tuning_grid(grid: GridFile, folds: usize, seed: u64) -> TuningGrid {
    let mut g = TuningGrid::new(grid.lambda1, grid.lambda2, grid.q);
    g.folds = folds;
    g.rng_seed = seed;
    g
}

fn score_table_csv(cv: &CvOutcome) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["lambda1", "lambda2", "q", "score", "error"]).map_err(io)?;
    for row in &cv.table {
        w.write_record([
            row.lambda1.to_string(),
            row.lambda2.to_string(),
            row.q.to_string(),
            row.score.to_string(),
            row.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

struct Fitted {
    fit: FitResult,
    cfg: PenaltyConfig,
    stats: ClassDataset,
    cv: Option<CvOutcome>,
}

/// Fits with fixed penalties or, given a grid file, with the cross-validated best.
fn fit(lab: &Labeled, method: Method, args: &PenaltyArgs, ridge: bool) -> CliResult<Fitted> {
    let stats = ClassDataset::from_labeled(&lab.data)?;
    let (cfg, cv) = match (&args.grid_file, args.lambda1) {
        (Some(path), _) => {
            let mut grid = GridFile::read(path)?;
            if ridge {
                grid.lambda2 = vec![0.0];
                grid.q = vec![1];
            }
            let base = PenaltyConfig::new(1.0, 0.0, 1);
            let cv = cv_select(&lab.data, &tuning_grid(grid, args.folds, args.seed), method, &base)?;
            if !cv.best_score.is_finite() {
                return Err(CliError::Numeric("every grid point failed to fit".into()));
            }
            (cv.best.clone(), Some(cv))
        }
        (None, Some(l1)) => {
            let cfg = if ridge {
                PenaltyConfig::new(l1, 0.0, 1)
            } else {
                PenaltyConfig::new(l1, args.lambda2, args.q)
            };
            (cfg, None)
        }
        (None, None) => {
            return Err(CliError::Parameter("give --lambda1 or --grid-file".into()));
        }
    };
    let fit = method.fit(&stats, &cfg, args.seed)?;
    Ok(Fitted { fit, cfg, stats, cv })
}

fn model_file(lab: &Labeled, f: &Fitted, method_name: &str, seed: u64, priors: Priors) -> CliResult<ModelFile> {
    let qda = QdaModel::from_estimates(f.fit.omegas.clone(), &f.stats, priors)?;
    let report = &f.fit.report;
    Ok(ModelFile {
        schema_version: SCHEMA_VERSION,
        p: f.stats.dim(),
        c: f.stats.n_classes(),
        classes: lab.names.clone(),
        lambda1: f.cfg.lambda1,
        lambda2: f.cfg.lambda2,
        q: f.cfg.q,
        partition: f.fit.partition.labels().to_vec(),
        log_priors: qda.log_priors.clone(),
        mus: qda.mus.iter().map(|m| m.iter().copied().collect()).collect(),
        omegas: f.fit.omegas.iter().map(matrix_rows).collect(),
        diagnostics: Diagnostics {
            method: method_name.to_owned(),
            seed,
            converged: report.converged,
            inner_converged: report.inner_converged,
            outer_iterations: report.outer_iterations,
            nonconverged_class: report.nonconverged_class,
            objective_trace: report.objective_trace.clone(),
            n_per_class: f.stats.classes.iter().map(|s| s.n).collect(),
            nonzero_per_class: f
                .fit
                .omegas
                .iter()
                .map(|m| count_nonzero(&PrecisionSet(vec![m.clone()]), DEFAULT_ZERO_TOL))
                .collect(),
        },
    })
}

fn summary(model: &ModelFile, cv: Option<&CvOutcome>) -> String {
    let d = &model.diagnostics;
    let mut s = String::new();
    let _ = writeln!(s, "method: {}", d.method);
    let _ = writeln!(s, "lambda1: {}  lambda2: {}  Q: {}", model.lambda1, model.lambda2, model.q);
    if let Some(cv) = cv {
        let _ = writeln!(s, "selected by {}-point cross-validation, score {}", cv.table.len(), cv.best_score);
    }
    let _ = writeln!(s, "converged: {} after {} outer rounds", d.converged && d.inner_converged, d.outer_iterations);
    let _ = writeln!(s, "{:>6} {:>12} {:>8} {:>8} {:>10}", "class", "label", "cluster", "n", "nonzero");
    for c in 0..model.c {
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>8} {:>8} {:>10}",
            c, model.classes[c], model.partition[c], d.n_per_class[c], d.nonzero_per_class[c]
        );
    }
    let trace: Vec<String> = d.objective_trace.iter().map(|v| format!("{v:.10e}")).collect();
    let _ = writeln!(s, "objective trace: {}", trace.join(" "));
    s
}

/// Writes the model, prints the summary, and flags non-convergence.
fn finish(model: ModelFile, cv: Option<&CvOutcome>, output: &std::path::Path) -> CliResult<()> {
    model.write(output)?;
    print!("{}", summary(&model, cv));
    let d = &model.diagnostics;
    if !(d.converged && d.inner_converged) {
        let which = d.nonconverged_class.map_or(String::new(), |c| format!(" (class {c})"));
        return Err(CliError::NotConverged(format!(
            "solver did not converge{which}; model written to {}",
            output.display()
        )));
    }
    Ok(())
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let lab = read_labeled(&a.input.input, a.input.header, a.input.label_col)?;
    let method = Method::from(a.method);
    let f = fit(&lab, method, &a.penalty, false)?;
    let model = model_file(&lab, &f, method.name(), a.penalty.seed, Priors::Empirical)?;
    finish(model, f.cv.as_ref(), &a.output)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let lab = read_labeled(&a.input.input, a.input.header, a.input.label_col)?;
    let (method, name) = match a.method {
        TrainMethod::Crf => (Method::Crf, "crf"),
        TrainMethod::Pcen => (Method::Pcen, "pcen"),
        TrainMethod::Ridge => (Method::Crf, "ridge"),
    };
    let f = fit(&lab, method, &a.penalty, a.method == TrainMethod::Ridge)?;
    let priors = match a.priors {
        PriorArg::Empirical => Priors::Empirical,
        PriorArg::Uniform => Priors::Uniform,
    };
    let model = model_file(&lab, &f, name, a.penalty.seed, priors)?;
    finish(model, f.cv.as_ref(), &a.output)
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let file = ModelFile::read(&a.model)?;
    let model = file.qda()?;
    let obs = read_observations(&a.input.input, a.input.header, a.input.label_col, file.p)?;
    let pred = model.predict_rows(&obs.x)?;
    if let Some(path) = &a.output {
        let mut text = String::from("row,predicted\n");
        for (i, &c) in pred.iter().enumerate() {
            let _ = writeln!(text, "{},{}", i, file.classes[c]);
        }
        write_file(path, &text)?;
    }
    println!("predicted {} rows", pred.len());
    if let Some(labels) = &obs.labels {
        let truth = label_indices(labels, &file.classes)?;
        let err = classification_error(&model, &obs.x, &truth)?;
        let wrong = pred.iter().zip(&truth).filter(|(a, b)| a != b).count();
        println!("error rate: {err} ({wrong}/{})", truth.len());
    }
    Ok(())
}

pub fn tune(a: &TuneArgs) -> CliResult<()> {
    let lab = read_labeled(&a.input.input, a.input.header, a.input.label_col)?;
    let grid = tuning_grid(GridFile::read(&a.grid_file)?, a.folds, a.seed);
    let cv = cv_select(&lab.data, &grid, a.method.into(), &PenaltyConfig::new(1.0, 0.0, 1))?;
    write_file(&a.output, &score_table_csv(&cv)?)?;
    println!(
        "best: lambda1 {} lambda2 {} Q {} (score {})",
        cv.best.lambda1, cv.best.lambda2, cv.best.q, cv.best_score
    );
    Ok(())
}

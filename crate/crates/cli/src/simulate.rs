//! Replicated simulation driver writing tidy `(method, lambda1, lambda2, rep, metric, value)` rows.

use std::str::FromStr;

use clusterfuse::model::{count_nonzero, metric_frob_error, metric_stp, DEFAULT_ZERO_TOL};
use clusterfuse::qda::{classification_error, QdaModel};
use clusterfuse::simgen::{make_scenario, sample_classes, GroundTruth, Scenario, ScenarioKind};
use clusterfuse::tuning::Method;
use clusterfuse::{ClassDataset, LabeledData, PenaltyConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::model_file::{write_file, GridFile};
use crate::SimulateArgs;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

struct Replicate {
    truth: GroundTruth,
    train: LabeledData,
    stats: ClassDataset,
    test: Option<LabeledData>,
}

struct Row {
    method: String,
    lambda1: f64,
    lambda2: f64,
    rep: usize,
    metric: &'static str,
    value: f64,
}

fn replicate(args: &SimulateArgs, kind: ScenarioKind, rep: usize) -> CliResult<Replicate> {
    let seed = args.seed ^ (rep as u64 + 1).wrapping_mul(GOLDEN);
    let mut scenario = Scenario::new(kind, args.p, args.n, seed);
    scenario.rho = args.rho;
    let (truth, blocks) = make_scenario(&scenario)?;
    let train = LabeledData::from_class_blocks(&blocks)?;
    let stats = ClassDataset::from_labeled(&train)?;
    let test = if kind == ScenarioKind::QdaDense {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ GOLDEN);
        Some(LabeledData::from_class_blocks(&sample_classes(&truth, args.n_test, &mut rng)?)?)
    } else {
        None
    };
    Ok(Replicate { truth, train, stats, test })
}

fn error_rate(model: &QdaModel, test: &LabeledData) -> CliResult<f64> {
    Ok(classification_error(model, &test.x, &test.labels)?)
}

fn fit_rows(r: &Replicate, rep: usize, method: Method, cfg: &PenaltyConfig, seed: u64) -> Vec<Row> {
    let label = format!("{}-{}", method.name(), cfg.q);
    let row = |metric, value| Row {
        method: label.clone(),
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        rep,
        metric,
        value,
    };
    let evaluate = || -> CliResult<Vec<Row>> {
        let fit = method.fit(&r.stats, cfg, seed)?;
        let truth = &r.truth.omegas;
        let stp = metric_stp(truth, &fit.omegas, DEFAULT_ZERO_TOL)?;
        let positives = count_nonzero(truth, DEFAULT_ZERO_TOL);
        let mut rows = vec![
            row("nonzero", count_nonzero(&fit.omegas, DEFAULT_ZERO_TOL) as f64),
            row("stp", stp as f64),
            row("tpr", stp as f64 / positives as f64),
            row("frob_error", metric_frob_error(truth, &fit.omegas)?),
            row("partition_recovered", f64::from(u8::from(fit.partition.equivalent(&r.truth.partition)))),
            row("converged", f64::from(u8::from(fit.report.converged && fit.report.inner_converged))),
        ];
        if let Some(test) = &r.test {
            let model = QdaModel::new(
                fit.omegas.clone(),
                r.stats.classes.iter().map(|s| s.mean.clone()).collect(),
                vec![0.0; r.stats.n_classes()],
            )?;
            rows.push(row("error_rate", error_rate(&model, test)?));
        }
        Ok(rows)
    };
    match evaluate() {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("warning: rep {rep} {label} lambda1={} lambda2={}: {e}", cfg.lambda1, cfg.lambda2);
            vec![row("failed", 1.0)]
        }
    }
}

/// True precision matrices with sample means: the classification oracle.
fn oracle_rows(r: &Replicate, rep: usize) -> CliResult<Vec<Row>> {
    let Some(test) = &r.test else { return Ok(Vec::new()) };
    let mus = r.train.class_means();
    let model = QdaModel::new(r.truth.omegas.clone(), mus, vec![0.0; r.stats.n_classes()])?;
    Ok(vec![Row {
        method: "oracle".into(),
        lambda1: 0.0,
        lambda2: 0.0,
        rep,
        metric: "error_rate",
        value: error_rate(&model, test)?,
    }])
}

fn to_csv(rows: &[Row]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["method", "lambda1", "lambda2", "rep", "metric", "value"]).map_err(io)?;
    for r in rows {
        let rec = [r.method.clone(), r.lambda1.to_string(), r.lambda2.to_string(), r.rep.to_string(), r.metric.into(), r.value.to_string()];
        w.write_record(&rec).map_err(io)?;
    }
    // averages over replications, in first-appearance order
    let mut keys: Vec<(String, f64, f64, &str)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.lambda1, r.lambda2, r.metric);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (method, l1, l2, metric) in keys {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.lambda1 == l1 && r.lambda2 == l2 && r.metric == metric)
            .map(|r| r.value)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        w.write_record([method, l1.to_string(), l2.to_string(), "mean".into(), metric.into(), mean.to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let kind = ScenarioKind::from_str(&args.scenario)?;
    if args.reps == 0 {
        return Err(CliError::Parameter("--reps must be at least 1".into()));
    }
    let grid = match &args.grid_file {
        Some(path) => GridFile::read(path)?,
        None => GridFile { lambda1: vec![1.0, 10.0, 100.0], lambda2: vec![10.0], q: vec![2] },
    };
    let methods: Vec<Method> = match args.method {
        Some(m) => vec![m.into()],
        // dense covariances are the ridge setting; sparse graphs the L1 setting
        None if kind == ScenarioKind::QdaDense => vec![Method::Crf],
        None => vec![Method::Pcen],
    };
    let reps: Vec<Replicate> =
        (0..args.reps).into_par_iter().map(|rep| replicate(args, kind, rep)).collect::<CliResult<_>>()?;

    let mut jobs = Vec::new();
    for rep in 0..args.reps {
        for &method in &methods {
            for &l1 in &grid.lambda1 {
                for &l2 in &grid.lambda2 {
                    for &q in &grid.q {
                        jobs.push((rep, method, PenaltyConfig::new(l1, l2, q)));
                    }
                }
            }
        }
    }
    let mut fitted: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|(rep, method, cfg)| fit_rows(&reps[*rep], *rep, *method, cfg, args.seed))
        .collect();
    let mut rows: Vec<Row> = Vec::new();
    let per_rep = jobs.len() / args.reps;
    for (rep, r) in reps.iter().enumerate() {
        for chunk in &mut fitted[rep * per_rep..(rep + 1) * per_rep] {
            rows.append(chunk);
        }
        rows.extend(oracle_rows(r, rep)?);
    }
    write_file(&args.output, &to_csv(&rows)?)?;
    println!("wrote {} rows for {} replications to {}", rows.len(), args.reps, args.output.display());
    Ok(())
}


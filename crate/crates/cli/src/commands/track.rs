use std::time::Instant;

use nalgebra::DMatrix;

use robsub::io::write_stream_metrics;
use robsub::linalg::orthonormal_basis;
use robsub::online::{init_tracker, run_stream, Lambda2Rule, StreamMetrics, TrackerInit};
use robsub::DataMatrix;

use crate::args::{Lambda2Arg, Select, TrackArgs};
use crate::report::{load_matrix, save_with, usage, CliResult, RunReport};

pub fn run(a: &TrackArgs) -> CliResult<()> {
    let started = Instant::now();
    let all = load_matrix(&a.input)?;
    if a.n0 < a.q || a.n0 >= all.nrows() {
        return Err(usage(format!(
            "--init must lie in [q, rows) = [{}, {})",
            a.q,
            all.nrows()
        )));
    }
    let p = all.ncols();
    let truth = match &a.truth {
        Some(path) => {
            let u = load_matrix(path)?;
            if u.nrows() != p {
                return Err(usage(format!("--truth has {} rows, stream has {p} columns", u.nrows())));
            }
            Some(orthonormal_basis(&u))
        }
        None => None,
    };
    let rule = match a.lambda2 {
        Lambda2Arg::Value(v) => Lambda2Rule::Fixed(v),
        Lambda2Arg::Inf => Lambda2Rule::Infinite,
        Lambda2Arg::Auto => match a.select.ok_or_else(|| usage("--lambda2 auto needs --select"))? {
            Select::Count { n } => Lambda2Rule::Count {
                n_outliers: n,
                grid_size: a.grid,
                eps: a.eps,
            },
            Select::Noise { sigma2 } => Lambda2Rule::NoiseCov {
                sigma_e: DMatrix::identity(p, p) * sigma2,
                grid_size: a.grid,
                eps: a.eps,
            },
        },
    };
    let init_rows = DataMatrix::new(all.rows(0, a.n0).into_owned())?;
    let stream = all.rows(a.n0, all.nrows() - a.n0).into_owned();

    let mut report = RunReport::new(a, a.solver.seed)?;
    let (metrics, lambda2, defect) = track(&init_rows, &stream, a, rule, truth.as_ref())?;
    report.metric("lambda2", lambda2);
    report.metric("orthonormality_defect", defect);
    summarize(&mut report, "", &metrics);
    report.outlier_norms = metrics.iter().map(|m| m.outlier_norm).collect();
    if let Some(out) = &a.metrics {
        save_with(out, |w| write_stream_metrics(w, &metrics))?;
    }
    if a.ablate_nonrobust {
        let (base, _, _) = track(&init_rows, &stream, a, Lambda2Rule::Infinite, truth.as_ref())?;
        summarize(&mut report, "ablation_", &base);
        if let Some(out) = &a.ablation_metrics {
            save_with(out, |w| write_stream_metrics(w, &base))?;
        }
    }
    report.finish(started, a.report.report.as_deref())
}

fn track(
    init_rows: &DataMatrix,
    stream: &DMatrix<f64>,
    a: &TrackArgs,
    rule: Lambda2Rule,
    truth: Option<&DMatrix<f64>>,
) -> CliResult<(Vec<StreamMetrics>, f64, f64)> {
    let init = TrackerInit {
        beta: a.beta,
        rule,
        batch: a.solver.options(),
        reorth_every: a.reorth,
        ..Default::default()
    };
    let (mut state, lambda2) = init_tracker(init_rows, a.q, &init)?;
    let metrics = run_stream(&mut state, stream, truth)?;
    Ok((metrics, lambda2, state.orthonormality_defect()))
}

fn summarize(report: &mut RunReport, prefix: &str, metrics: &[StreamMetrics]) {
    let n = metrics.len() as f64;
    let flagged = metrics.iter().filter(|m| m.outlier_norm > 0.0).count();
    report.metric(&format!("{prefix}flagged"), flagged as f64);
    report.metric(
        &format!("{prefix}mean_reconstruction_error"),
        metrics.iter().map(|m| m.reconstruction_error).sum::<f64>() / n,
    );
    if let Some(last) = metrics.last().and_then(|m| m.angle) {
        report.metric(&format!("{prefix}final_angle_deg"), last.to_degrees());
    }
}

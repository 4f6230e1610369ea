use std::time::Instant;

use nalgebra::DMatrix;

use robsub::batch::{default_lambda0, fit_batch, refine_reweighted, BatchFit};
use robsub::path::{
    compute_path, compute_path_cold, estimate_lambda_max, lambda_grid, select_by_count, select_by_noise_cov,
    support_count, Selection, LAMBDA_MAX_MARGIN,
};
use robsub::{io::write_path_table, DataMatrix, RegularizerKind};

use crate::args::{FitArgs, Select};
use crate::report::{load_data, require_converged, save_with, usage, worker_threads, CliResult, RunReport};

pub fn run(a: &FitArgs) -> CliResult<()> {
    let started = Instant::now();
    let x = load_data(&a.input)?;
    let kind: RegularizerKind = a.reg.into();
    let opts = a.solver.options();
    let mut report = RunReport::new(a, a.solver.seed)?;

    let fit = match a.lambda2 {
        Some(l2) => fit_batch(&x, a.q, l2, kind, &opts, None)?,
        None => {
            let sel = run_path(a, &x, kind, &mut report)?;
            report.metric("path_index", sel.index as f64);
            report.flag("approximate_selection", sel.approximate);
            if let Some(c) = sel.criterion {
                report.metric("noise_criterion", c);
            }
            sel.fit
        }
    };
    let fit = if a.refine > 0 {
        let lambda0 = a.lambda0.unwrap_or_else(|| default_lambda0(fit.lambda2, a.delta));
        report.metric("lambda0", lambda0);
        refine_reweighted(&x, &fit, lambda0, a.delta, a.refine, &opts)?
    } else {
        fit
    };
    describe(&mut report, &fit);
    let converged = fit.converged;
    report.finish(started, a.report.report.as_deref())?;
    require_converged(converged, "fit", a.solver.max_iters)
}

fn run_path(a: &FitArgs, x: &DataMatrix, kind: RegularizerKind, report: &mut RunReport) -> CliResult<Selection> {
    let select = a.select.ok_or_else(|| usage("--path needs --select"))?;
    let lmax = match a.lambda_max {
        Some(l) => l,
        None => estimate_lambda_max(x, a.q, kind)? * LAMBDA_MAX_MARGIN,
    };
    if !(lmax > 0.0) {
        return Err(usage("data are exactly rank q; no outlier path to trace"));
    }
    let grid = lambda_grid(lmax, a.eps, a.grid)?;
    let opts = robsub::SolverOptions {
        record_trace: false,
        ..a.solver.options()
    };
    let path = if a.cold {
        let threads = worker_threads()?;
        report.metric("threads", threads as f64);
        compute_path_cold(x, a.q, &grid, kind, &opts, threads)?
    } else {
        compute_path(x, a.q, &grid, kind, &opts)?
    };
    if let Some(out) = &a.path_out {
        save_with(out, |w| write_path_table(w, &path))?;
    }
    report.metric("lambda_max", lmax);
    report.series.insert("path_lambda2".into(), path.grid.clone());
    report.series.insert(
        "path_support".into(),
        path.support_counts.iter().map(|&c| c as f64).collect(),
    );
    Ok(match select {
        Select::Count { n } => select_by_count(&path, n)?,
        Select::Noise { sigma2 } => {
            let p = x.n_cols();
            select_by_noise_cov(&path, x, &(DMatrix::identity(p, p) * sigma2))?
        }
    })
}

fn describe(report: &mut RunReport, fit: &BatchFit) {
    report.metric("lambda2", fit.lambda2);
    report.metric("objective", fit.objective);
    report.metric("iters", fit.iters as f64);
    report.flag("converged", fit.converged);
    report.metric("support", support_count(&fit.outliers) as f64);
    report.outlier_norms = fit.outliers.row_norms();
    report
        .series
        .insert("objective_trace".into(), fit.objective_trace.clone());
}

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use robsub::io::read_edge_list;
use robsub::kernel::{embed_and_cluster, fit_kpca, graph_gram, linear_gram, outlier_norms, rbf_gram, GramMatrix};

use crate::args::{GramSpec, KpcaArgs};
use crate::report::{load_data, load_matrix, require_converged, usage, CliError, CliResult, RunReport};

pub fn run(a: &KpcaArgs) -> CliResult<()> {
    let started = Instant::now();
    let k = gram(a)?;
    let model = fit_kpca(&k, a.qbar, a.lstar, a.lambda2, &a.solver.options())?;
    let norms = outlier_norms(&model, &k);

    let mut report = RunReport::new(a, a.solver.seed)?;
    report.metric("objective", model.objective);
    report.metric("iters", model.iters as f64);
    report.flag("converged", model.converged);
    report.metric("psd_shift", k.psd_shift);
    report.metric("support", norms.iter().filter(|v| **v > 0.0).count() as f64);
    report
        .series
        .insert("objective_trace".into(), model.objective_trace.clone());
    if let Some(n_clusters) = a.cluster {
        let clusters = embed_and_cluster(&model, &k, n_clusters, !a.keep_outliers, a.solver.seed)?;
        report.metric("inertia", clusters.inertia);
        if let Some(path) = &a.ari {
            let truth = load_labels(path, k.n())?;
            report.metric("ari", clusters.ari(&truth)?);
        }
        report.labels = Some(clusters.labels);
    }
    report.outlier_norms = norms;
    let converged = model.converged;
    report.finish(started, a.report.report.as_deref())?;
    require_converged(converged, "kernel fit", a.solver.max_iters)
}

fn gram(a: &KpcaArgs) -> CliResult<GramMatrix> {
    Ok(match a.gram {
        GramSpec::Rbf { c } => rbf_gram(&load_data(&a.input)?, c)?,
        GramSpec::Linear => linear_gram(&load_data(&a.input)?)?,
        GramSpec::Graph { zeta } => {
            let f = File::open(&a.input).map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;
            let adj = read_edge_list(BufReader::new(f), a.nodes)
                .map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;
            graph_gram(&adj, zeta)?
        }
        GramSpec::File => GramMatrix::new(load_matrix(&a.input)?)?,
    })
}

/// One non-negative integer label per row.
fn load_labels(path: &Path, n: usize) -> CliResult<Vec<usize>> {
    let m = load_matrix(path)?;
    if m.ncols() != 1 || m.nrows() != n {
        return Err(usage(format!(
            "{}: expected {n} labels in one column, got {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    m.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(usage(format!(
                    "{}: label {v} is not a non-negative integer",
                    path.display()
                )))
            }
        })
        .collect()
}

use std::time::Instant;

use robsub::path::support_count;
use robsub::rank::{check_certificate, fit_rank, noise_presets, spcp_reference, Centering, SpcpOptions};
use robsub::RegularizerKind;

use crate::args::{CenterArg, RankArgs};
use crate::report::{load_data, require_converged, usage, CliResult, RunReport};

pub fn run(a: &RankArgs) -> CliResult<()> {
    let started = Instant::now();
    let x = load_data(&a.input)?;
    let preset = a.sigma2.map(|s2| noise_presets(x.n_rows(), s2));
    let lstar = a
        .lstar
        .or(preset.map(|p| p.0))
        .ok_or_else(|| usage("give --lstar or --sigma2"))?;
    let lambda2 = a
        .lambda2
        .or(preset.map(|p| p.1))
        .ok_or_else(|| usage("give --lambda2 or --sigma2"))?;
    let kind: RegularizerKind = a.reg.into();
    let centering = match a.center {
        CenterArg::Estimate => Centering::Estimate,
        CenterArg::None => Centering::None,
    };
    let fit = fit_rank(&x, a.qbar, lstar, lambda2, kind, &a.solver.options(), centering)?;

    let mut report = RunReport::new(a, a.solver.seed)?;
    report.metric("lambda_star", lstar);
    report.metric("lambda2", lambda2);
    report.metric("objective", fit.objective);
    report.metric("iters", fit.iters as f64);
    report.flag("converged", fit.converged);
    report.metric("support", support_count(&fit.outliers) as f64);
    report.outlier_norms = fit.outliers.row_norms();
    report
        .series
        .insert("objective_trace".into(), fit.objective_trace.clone());

    if a.certify {
        let cert = check_certificate(&x, &fit, lstar);
        report.flag("certificate_holds", cert.holds);
        report.metric("certificate_gap", cert.gap);
        report.metric("residual_spectral_norm", cert.residual_norm);
    }
    if a.oracle_spcp {
        // The convex program has no mean; with an estimated mean compare
        // against the column-centered problem instead.
        let opts = SpcpOptions {
            precenter: centering == Centering::Estimate,
            ..Default::default()
        };
        let sol = spcp_reference(&x, lstar, lambda2, kind, &opts)?;
        let n = x.n_rows() as f64;
        report.metric("spcp_objective", sol.objective);
        report.metric("spcp_dual_residual", sol.dual_residual);
        report.flag("spcp_converged", sol.converged);
        report.metric("spcp_low_rank_gap", (&sol.l - fit.low_rank()).norm() / n);
        report.metric("spcp_outlier_gap", (&sol.o - fit.outliers.values()).norm() / n);
        report.metric(
            "spcp_relative_objective_gap",
            (fit.objective - sol.objective).abs() / sol.objective.abs().max(f64::MIN_POSITIVE),
        );
    }
    let converged = fit.converged;
    report.finish(started, a.report.report.as_deref())?;
    require_converged(converged, "rank fit", a.solver.max_iters)
}

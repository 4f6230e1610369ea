use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use robsub::datagen::{
    gen_concentric, gen_irt_2plm, gen_lowrank_outliers, inject_random_responders, ConcentricSpec, SynthSpec,
};

use crate::args::{GenCircles, GenCommand, GenIrt, GenLowrank, OutputArgs};
use crate::report::{save_json, save_matrix, save_with, usage, CliError, CliResult};

pub fn run(cmd: &GenCommand) -> CliResult<()> {
    match cmd {
        GenCommand::Lowrank(a) => lowrank(a),
        GenCommand::Circles(a) => circles(a),
        GenCommand::Irt(a) => irt(a),
    }
}

/// Target paths for `names`, refused up front if any exists and `--force` is
/// off, so a refused run writes nothing.
fn targets(out: &OutputArgs, names: &[&str]) -> CliResult<Vec<PathBuf>> {
    let ext = if out.binary { "bin" } else { "csv" };
    let mut paths: Vec<PathBuf> = names.iter().map(|n| out.out.join(format!("{n}.{ext}"))).collect();
    paths.push(out.out.join("meta.json"));
    if !out.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(CliError::Io(format!(
                "{} exists (use --force to overwrite)",
                p.display()
            )));
        }
    }
    std::fs::create_dir_all(&out.out).map_err(|e| CliError::Io(format!("{}: {e}", out.out.display())))?;
    Ok(paths)
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect()
}

fn lowrank(a: &GenLowrank) -> CliResult<()> {
    let spec = SynthSpec {
        n: a.n,
        p: a.p,
        q: a.q,
        rho: a.rho,
        sigma2: a.sigma2,
        outlier_range: (-a.range, a.range),
        seed: a.seed,
    };
    spec.validate()?;
    let paths = targets(&a.output, &["X", "L", "E", "O", "U", "S"])?;
    let d = gen_lowrank_outliers(&spec)?;
    for (path, m) in paths.iter().zip([&d.x, &d.l, &d.e, &d.o, &d.u, &d.s]) {
        save_matrix(path, m, a.output.binary)?;
    }
    let meta = json!({
        "generator": "lowrank",
        "seed": a.seed,
        "spec": a,
        "factor_variance": spec.factor_variance(),
        "outlier_entries": d.o.iter().filter(|v| **v != 0.0).count(),
        "files": file_names(&paths),
    });
    save_json(paths.last().expect("meta path"), &meta)
}

fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    save_with(path, |w| {
        for l in labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

fn circles(a: &GenCircles) -> CliResult<()> {
    let spec = ConcentricSpec {
        counts: vec![a.per_ring; a.radii.len()],
        radii: a.radii.clone(),
        sigma2: a.sigma2,
        n_outliers: a.outliers,
        half_width: a.half_width,
        seed: a.seed,
    };
    let mut paths = targets(&a.output, &["X"])?;
    let labels_path = a.output.out.join("labels.csv");
    if !a.output.force && labels_path.exists() {
        return Err(CliError::Io(format!(
            "{} exists (use --force to overwrite)",
            labels_path.display()
        )));
    }
    let d = gen_concentric(&spec)?;
    save_matrix(&paths[0], &d.x, a.output.binary)?;
    write_labels(&labels_path, &d.labels)?;
    paths.insert(1, labels_path);
    let meta = json!({
        "generator": "circles",
        "seed": a.seed,
        "spec": a,
        "outlier_rows": d.outliers,
        "outlier_label": a.radii.len(),
        "files": file_names(&paths),
    });
    save_json(paths.last().expect("meta path"), &meta)
}

fn irt(a: &GenIrt) -> CliResult<()> {
    let rows: Vec<usize> = match a.aberrant {
        Some(r) if r.last > a.n => {
            return Err(usage(format!("--aberrant {}:{} exceeds {} rows", r.first, r.last, a.n)))
        }
        Some(r) => (r.first - 1..r.last).collect(),
        None => Vec::new(),
    };
    if !(0.0..=1.0).contains(&a.rate) {
        return Err(usage("--rate must lie in [0, 1]"));
    }
    let paths = targets(&a.output, &["X", "Y", "theta"])?;
    let (y, params) = gen_irt_2plm(a.n, a.p, a.q, a.seed)?;
    // Separate stream for the corruption so the clean responses do not
    // depend on which rows are redrawn.
    let x = inject_random_responders(&y, &rows, a.rate, a.seed.wrapping_add(1))?;
    for (path, m) in paths.iter().zip([&x, &y, &params.theta]) {
        save_matrix(path, m, a.output.binary)?;
    }
    let meta = json!({
        "generator": "irt",
        "seed": a.seed,
        "spec": a,
        "aberrant_rows": rows,
        "item_discrimination": params.a,
        "item_difficulty": params.b,
        "item_factor": params.factor,
        "files": file_names(&paths),
    });
    save_json(paths.last().expect("meta path"), &meta)
}

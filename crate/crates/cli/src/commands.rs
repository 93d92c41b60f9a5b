use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use cgmix::simulation::{
    contaminate, run_study, BandwidthPolicy, Scenario, StudyReport, StudySpec,
};
use cgmix::{
    classify, fit, select_bandwidth_cv, CvReport, Dataset, FitResult, GatingKind, ModelConfig,
    ModelKind,
};

use crate::ingest::{build_dataset, Table};
use crate::output::{num, Staged, SCHEMA_VERSION};
use crate::report::FitReport;
use crate::settings::Settings;

const DEFAULT_K: usize = 2;
const DEFAULT_FOLDS: usize = 5;

fn load(s: &Settings) -> Result<Dataset> {
    let table = Table::read(s.data()?)?;
    build_dataset(&table, s.y_col()?, s.x_cols()?, s.t_col()?)
}

fn model_config(s: &Settings, kind: ModelKind) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(kind, s.k.unwrap_or(DEFAULT_K))
        .with_seed(s.seed.unwrap_or(0))
        .with_restarts(s.restarts.unwrap_or(ModelConfig::DEFAULT_RESTARTS))
        .with_max_iter(s.max_iter.unwrap_or(ModelConfig::DEFAULT_MAX_ITER));
    match (kind.gating(), s.h) {
        (GatingKind::Nonparametric, Some(h)) => cfg = cfg.with_bandwidth(h)?,
        (GatingKind::Nonparametric, None) => {
            bail!("{kind} needs a bandwidth: pass --h or pick one with cv-bandwidth")
        }
        (_, Some(_)) => bail!("--h only applies to nonparametric gating (sgmoe, scgmoe)"),
        (_, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threshold(s: &Settings) -> f64 {
    s.threshold.unwrap_or(cgmix::DEFAULT_OUTLIER_THRESHOLD)
}

fn fit_settings(s: &Settings) -> Result<(Dataset, FitResult)> {
    let kind = s.model()?;
    let cfg = model_config(s, kind)?;
    let d = load(s)?;
    let f = fit(&d, &cfg)?;
    Ok((d, f))
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn fit_cmd(s: &Settings) -> Result<()> {
    let (d, f) = fit_settings(s)?;
    let clusters = classify(&f, threshold(s))?;
    let report = FitReport::new(&f, &clusters);
    let mut out = Staged::new(&s.out_dir())?;
    out.add_json("fit.json", &report)?;
    let k = f.params.k();

    let mut header: Vec<String> = vec!["row".into()];
    header.extend((1..d.x().ncols()).map(|j| format!("x{j}")));
    header.extend((1..=k).map(|c| format!("mu_{c}")));
    let means = d.x() * f.params.beta.transpose();
    let lines: Vec<Vec<String>> = (0..d.n())
        .map(|i| {
            let mut r = vec![(i + 1).to_string()];
            r.extend((1..d.x().ncols()).map(|j| num(d.x()[(i, j)])));
            r.extend((0..k).map(|c| num(means[(i, c)])));
            r
        })
        .collect();
    out.add_csv("lines.csv", &header, &lines)?;

    if let cgmix::GatingState::Nonparametric { curves } = &f.gating {
        let mut header: Vec<String> = vec!["u".into()];
        header.extend((1..=k).map(|c| format!("pi_{c}")));
        let rows: Vec<Vec<String>> = curves
            .grid
            .points()
            .iter()
            .enumerate()
            .map(|(g, &u)| {
                std::iter::once(num(u))
                    .chain((0..k).map(|c| num(curves.values[(g, c)])))
                    .collect()
            })
            .collect();
        out.add_csv("curves.csv", &header, &rows)?;
    }
    println!(
        "{}: loglik {:.4}, df {:.3}, BIC {:.4}, converged {} after {} iterations",
        f.kind, f.loglik, f.df.total, f.bic, f.converged, f.n_iter
    );
    print_written(&out.commit()?);
    Ok(())
}

pub fn classify_cmd(s: &Settings) -> Result<()> {
    let (_, f) = fit_settings(s)?;
    let c = classify(&f, threshold(s))?;
    let k = f.params.k();
    let mut header: Vec<String> = vec!["row".into(), "label".into(), "outlier".into()];
    header.extend((1..=k).map(|j| format!("z_{j}")));
    header.extend((1..=k).map(|j| format!("v_{j}")));
    let rows: Vec<Vec<String>> = (0..c.labels.len())
        .map(|i| {
            let mut r = vec![
                (i + 1).to_string(),
                (c.labels[i] + 1).to_string(),
                c.outlier[i].to_string(),
            ];
            r.extend((0..k).map(|j| num(c.zhat[(i, j)])));
            r.extend((0..k).map(|j| num(c.vhat[(i, j)])));
            r
        })
        .collect();
    let mut out = Staged::new(&s.out_dir())?;
    out.add_csv("clusters.csv", &header, &rows)?;
    let sizes: Vec<String> = c.cluster_sizes().iter().map(usize::to_string).collect();
    println!(
        "cluster sizes {}; {} outliers at threshold {}",
        sizes.join(", "),
        c.n_outliers(),
        c.threshold
    );
    print_written(&out.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct CvOutput<'a> {
    schema_version: u32,
    model: ModelKind,
    k: usize,
    seed: u64,
    #[serde(flatten)]
    report: &'a CvReport,
}

/// `range(t) · (0.05, 0.08, …, 0.29)`.
pub fn default_h_grid(d: &Dataset) -> Vec<f64> {
    let (lo, hi) = d.t_range();
    (0..9)
        .map(|i| (hi - lo) * (0.05 + 0.03 * i as f64))
        .collect()
}

pub fn cv_cmd(s: &Settings) -> Result<()> {
    let kind = s.model()?;
    if kind.gating() != GatingKind::Nonparametric {
        bail!("cv-bandwidth needs a nonparametric model (sgmoe or scgmoe), got {kind}");
    }
    let d = load(s)?;
    let grid = s.h_grid.clone().unwrap_or_else(|| default_h_grid(&d));
    let first = *grid.first().context("--h-grid is empty")?;
    let base = Settings {
        h: Some(first),
        ..s.clone()
    };
    let cfg = model_config(&base, kind)?;
    let report = select_bandwidth_cv(&d, cfg.k, &grid, s.folds.unwrap_or(DEFAULT_FOLDS), &cfg)?;
    println!("{:>12}  {:>16}", "h", "mean held-out");
    for sc in &report.scores {
        println!("{:>12.6}  {:>16.6}", sc.h, sc.mean);
    }
    println!("selected h = {}", report.selected);
    let mut out = Staged::new(&s.out_dir())?;
    out.add_json(
        "cv.json",
        &CvOutput {
            schema_version: SCHEMA_VERSION,
            model: kind,
            k: cfg.k,
            seed: cfg.seed,
            report: &report,
        },
    )?;
    print_written(&out.commit()?);
    Ok(())
}

pub fn contaminate_cmd(s: &Settings) -> Result<()> {
    let path = s.data()?;
    let table = Table::read(path)?;
    let y_name = s.y_col()?;
    let j = table.column_index(y_name)?;
    let y = table.numeric_column(y_name)?;
    let (y_new, modified) = contaminate(
        &y,
        s.fraction.unwrap_or(0.05),
        s.factor.unwrap_or(2.5),
        s.seed.unwrap_or(0),
    )?;
    let mut rows = table.rows.clone();
    for &i in &modified {
        // Unchanged values keep their original spelling.
        if y_new[i] != y[i] {
            rows[i][j] = num(y_new[i]);
        }
    }
    let index: Vec<Vec<String>> = modified.iter().map(|i| vec![(i + 1).to_string()]).collect();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let mut out = Staged::new(&s.out_dir())?;
    out.add_csv(&format!("{stem}_contaminated.csv"), &table.headers, &rows)?;
    out.add_csv(
        &format!("{stem}_contaminated_rows.csv"),
        &["row".to_string()],
        &index,
    )?;
    println!("modified {} of {} rows", modified.len(), y.len());
    print_written(&out.commit()?);
    Ok(())
}

pub fn study_spec(s: &Settings, paper_grid: bool) -> Result<StudySpec> {
    let seed = s.seed.unwrap_or(0);
    let mut spec = if paper_grid {
        StudySpec::paper_grid(seed)
    } else {
        StudySpec {
            scenarios: Scenario::ALL.to_vec(),
            n_values: vec![200],
            models: ModelKind::ALL.to_vec(),
            reps: 10,
            seed,
            restarts: ModelConfig::DEFAULT_RESTARTS,
            max_iter: ModelConfig::DEFAULT_MAX_ITER,
            bandwidth: BandwidthPolicy::default_cv(),
        }
    };
    if let Some(v) = &s.scenarios {
        spec.scenarios = v.clone();
    }
    if let Some(v) = &s.n_values {
        spec.n_values = v.clone();
    }
    if let Some(v) = &s.models {
        spec.models = v.clone();
    }
    spec.reps = s.reps.unwrap_or(spec.reps);
    spec.restarts = s.restarts.unwrap_or(spec.restarts);
    spec.max_iter = s.max_iter.unwrap_or(spec.max_iter);
    spec.bandwidth = match (s.h, &s.h_grid) {
        (Some(_), Some(_)) => bail!("pass either --h or --h-grid, not both"),
        (Some(h), None) => BandwidthPolicy::Fixed { h },
        (None, Some(g)) => BandwidthPolicy::PilotCv {
            h_grid: g.clone(),
            folds: s.folds.unwrap_or(DEFAULT_FOLDS),
        },
        (None, None) => match spec.bandwidth {
            BandwidthPolicy::PilotCv { h_grid, .. } => BandwidthPolicy::PilotCv {
                h_grid,
                folds: s.folds.unwrap_or(DEFAULT_FOLDS),
            },
            fixed => fixed,
        },
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct StudyOutput<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a StudyReport,
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn simulate_cmd(s: &Settings, paper_grid: bool, dry_run: bool) -> Result<()> {
    let spec = study_spec(s, paper_grid)?;
    let cells = spec.cells();
    println!("{} cells x {} replications", cells.len(), spec.reps);
    if dry_run {
        for (sc, n, m) in cells {
            println!("{sc}\t{n}\t{m}");
        }
        return Ok(());
    }
    let report = run_study(&spec)?;
    let cell_header: Vec<String> = [
        "scenario",
        "n",
        "model",
        "bandwidth",
        "reps",
        "failures",
        "mse_pi_mean_x100",
        "mse_pi_sd_x100",
    ]
    .map(String::from)
    .to_vec();
    let cell_rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            vec![
                c.scenario.to_string(),
                c.n.to_string(),
                c.model.to_string(),
                opt(c.bandwidth),
                c.reps.to_string(),
                c.failures.to_string(),
                num(c.mse_pi_mean_x100),
                num(c.mse_pi_sd_x100),
            ]
        })
        .collect();
    let param_header: Vec<String> = [
        "scenario",
        "n",
        "model",
        "param",
        "truth",
        "mse_x100",
        "bias_x100",
        "sq_mean_bias_x100",
        "mean_estimate",
    ]
    .map(String::from)
    .to_vec();
    let param_rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .flat_map(|c| {
            c.params.iter().map(move |p| {
                vec![
                    c.scenario.to_string(),
                    c.n.to_string(),
                    c.model.to_string(),
                    p.name.clone(),
                    num(p.truth),
                    num(p.mse_x100),
                    num(p.bias_x100),
                    num(p.sq_mean_bias_x100),
                    num(p.mean_estimate),
                ]
            })
        })
        .collect();
    for c in &report.cells {
        println!(
            "{} n={} {:>6}: MSE(pi)x100 {:.3} ({:.3}), failures {}",
            c.scenario, c.n, c.model, c.mse_pi_mean_x100, c.mse_pi_sd_x100, c.failures
        );
    }
    let mut out = Staged::new(&s.out_dir())?;
    out.add_json(
        "study.json",
        &StudyOutput {
            schema_version: SCHEMA_VERSION,
            report: &report,
        },
    )?;
    out.add_csv("study_cells.csv", &cell_header, &cell_rows)?;
    out.add_csv("study_params.csv", &param_header, &param_rows)?;
    print_written(&out.commit()?);
    Ok(())
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use tagbias::diagnostics::{chain_autocorrelations, summarize, SummaryOptions};
use tagbias::io::{
    file_digest, ingest, read_sample_archive, write_dataset_labeled, write_plot_csv, write_report,
    write_sample_archive, ModeEstimate, PhaseTiming, PlotRow, PointEstimates, Provenance,
    RunReport,
};
use tagbias::model::default_mu;
use tagbias::optimize::{
    dpb_lindley_smith, md_exact_mean, md_mode_iteration, select_gamma_by_mode_distance,
    OptimizerResult,
};
use tagbias::samplers::{run_chain, ChainConfig, Model};
use tagbias::synthetic::{
    fixture_stats, make_paper_scale_fixture, simulate_dataset, Population, SimSpec,
};
use tagbias::{
    corrected_mle, naive_mle, natural_population_estimate, AlphaSpec, CompositionVector, Error,
    Hyperparams, TagDataset,
};

use crate::{DiagnoseArgs, EstimateArgs, PriorArgs, SampleArgs, SimulateArgs};

const GAMMA1_GRID: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const GAMMA2_GRID: [f64; 3] = [0.0005, 0.005, 0.05];

pub enum Status {
    Ok,
    /// Outputs were written but an estimator missed its convergence or
    /// validity contract.
    NotConverged,
}

struct Timer {
    phases: Vec<PhaseTiming>,
    mark: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            phases: Vec::new(),
            mark: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases.push(PhaseTiming {
            phase: phase.to_string(),
            seconds: (now - self.mark).as_secs_f64(),
        });
        self.mark = now;
    }
}

fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn print_reproducibility(input: &Path, digest: &str, seed: Option<u64>) {
    let argv: Vec<String> = std::env::args().collect();
    println!("# tagbias {}", tool_version());
    println!("# invocation: {}", argv.join(" "));
    println!("# input: {} sha256:{digest}", input.display());
    if let Some(seed) = seed {
        println!("# seed: {seed}");
    }
}

fn load(input: &Path) -> Result<(TagDataset, String, Vec<String>)> {
    let ingested = ingest(input).with_context(|| format!("reading {}", input.display()))?;
    let digest = file_digest(input)?;
    Ok((ingested.data, digest, ingested.warnings))
}

fn parse_alpha(spec: &str) -> Result<AlphaSpec> {
    let spec = spec.trim();
    if let Some(path) = spec.strip_prefix('@') {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading alpha file {path}"))?;
        let values = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .with_context(|| format!("alpha value {l:?}"))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(AlphaSpec::Vector(values));
    }
    match spec {
        "1" => Ok(AlphaSpec::One),
        "1/k" => Ok(AlphaSpec::OverK),
        other => Ok(AlphaSpec::Constant(other.parse().with_context(|| {
            format!("--alpha expects 1, 1/k, a number or @file, got {other:?}")
        })?)),
    }
}

fn hyperparams(prior: &PriorArgs, data: &TagDataset) -> Result<Hyperparams> {
    let alpha = parse_alpha(&prior.alpha)?.resolve(data.len())?;
    let lambda = prior
        .lambda
        .unwrap_or_else(|| natural_population_estimate(data).max(1.0));
    let mu = prior.mu.unwrap_or_else(|| default_mu(data));
    Ok(Hyperparams::new(
        alpha,
        prior.gamma1,
        prior.gamma2,
        lambda,
        mu,
    )?)
}

/// Category indices by descending tag count, ties by id.
fn ranked(data: &TagDataset) -> Vec<usize> {
    let records = data.records();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[b]
            .tag_count
            .cmp(&records[a].tag_count)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    order
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn optimizer_outcome(
    name: &str,
    outcome: tagbias::Result<OptimizerResult>,
    warnings: &mut Vec<String>,
    status: &mut Status,
) -> Result<Option<OptimizerResult>> {
    match outcome {
        Ok(r) => Ok(Some(r)),
        Err(Error::NotConverged { last }) => {
            warnings.push(format!(
                "{name} did not converge: residual {} after {} iterations",
                last.final_residual, last.iterations_used
            ));
            *status = Status::NotConverged;
            Ok(Some(*last))
        }
        Err(e @ Error::NonPositiveDenominator { .. }) => {
            warnings.push(format!("{name} failed: {e}"));
            *status = Status::NotConverged;
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn estimate(args: &EstimateArgs) -> Result<Status> {
    let mut timer = Timer::new();
    let (data, digest, mut warnings) = load(&args.input)?;
    print_reproducibility(&args.input, &digest, None);
    let hyper = hyperparams(&args.prior, &data)?;
    timer.lap("ingest");

    let naive = naive_mle(&data).ok();
    let corrected = corrected_mle(&data).ok();
    if corrected.is_none() {
        warnings.push("no tags observed; maximum-likelihood estimates are undefined".into());
    }
    let mut status = Status::Ok;

    let mut config = serde_json::json!({
        "alpha": args.prior.alpha,
        "hyper": hyper,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "select_gamma": args.select_gamma,
    });
    let ls = if args.select_gamma {
        let target = corrected
            .clone()
            .context("--select-gamma needs observed tags for its target")?;
        let selection = select_gamma_by_mode_distance(
            &data,
            &hyper.alpha,
            &GAMMA1_GRID,
            &GAMMA2_GRID,
            &target,
            args.tol,
            args.max_iter,
        );
        match selection {
            Ok(sel) => {
                config["selected_gamma"] = serde_json::json!({
                    "gamma1": sel.gamma1,
                    "gamma2": sel.gamma2,
                    "distance": sel.distance,
                });
                Some(sel.result)
            }
            Err(e) => optimizer_outcome("dpb_lindley_smith", Err(e), &mut warnings, &mut status)?,
        }
    } else {
        optimizer_outcome(
            "dpb_lindley_smith",
            dpb_lindley_smith(&data, &hyper, args.tol, args.max_iter),
            &mut warnings,
            &mut status,
        )?
    };
    let md_mode = optimizer_outcome(
        "md_mode",
        md_mode_iteration(&data, &hyper.alpha, hyper.mu, args.tol, args.max_iter),
        &mut warnings,
        &mut status,
    )?;
    let md_mean = md_exact_mean(&data, &hyper.alpha)?;
    timer.lap("estimate");

    let mut modes = BTreeMap::new();
    if let Some(r) = &ls {
        modes.insert("dpb_lindley_smith".to_string(), ModeEstimate::from(r));
    }
    if let Some(r) = &md_mode {
        modes.insert("md_mode".to_string(), ModeEstimate::from(r));
    }
    let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
    let mut report = RunReport::new(
        "estimate",
        Provenance {
            input: args.input.display().to_string(),
            sha256: digest,
            seed: None,
            tool_version: tool_version(),
        },
        config,
    );
    report.estimates = Some(PointEstimates {
        ids: ids.clone(),
        naive_mle: naive.as_ref().map(|v| v.values().to_vec()),
        corrected_mle: corrected.as_ref().map(|v| v.values().to_vec()),
        natural_population_estimate: natural_population_estimate(&data),
        md_exact_mean: Some(md_mean.values().to_vec()),
        modes,
    });

    let top_n = args.top_n.min(data.len());
    if args.top_n > data.len() {
        warnings.push(format!(
            "top_n {} exceeds {} categories; clamped",
            args.top_n,
            data.len()
        ));
    }
    let rows: Vec<PlotRow> = ranked(&data)
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(pos, i)| PlotRow {
            rank: pos + 1,
            id: ids[i].clone(),
            naive_mle: naive.as_ref().map(|v| v[i]),
            corrected_mle: corrected.as_ref().map(|v| v[i]),
            post_mean: Some(md_mean[i]),
            post_mode: md_mode.as_ref().map(|r| r.m[i]),
            lower95: None,
            upper95: None,
        })
        .collect();

    println!("rank\tid\tcount\tnaive_mle\tcorrected_mle\tmd_mean\tmd_mode");
    for row in &rows {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        let count = data.records()[data.index_of(&row.id).expect("ranked id")].tag_count;
        println!(
            "{}\t{}\t{count}\t{}\t{}\t{}\t{}",
            row.rank,
            row.id,
            fmt(row.naive_mle),
            fmt(row.corrected_mle),
            fmt(row.post_mean),
            fmt(row.post_mode)
        );
    }

    ensure_dir(&args.out_dir)?;
    write_plot_csv(&args.out_dir.join("plot.csv"), &rows)?;
    timer.lap("write");
    report.timings = timer.phases;
    report.warnings = warnings;
    write_report(&args.out_dir.join("report.json"), &report)?;
    emit_warnings(&report.warnings);
    Ok(status)
}

fn emit_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn sample(args: &SampleArgs) -> Result<Status> {
    if args.with_mode && args.model == Model::Dmb {
        bail!("--with-mode is available for dpb and md only");
    }
    let mut timer = Timer::new();
    let (data, digest, mut warnings) = load(&args.input)?;
    print_reproducibility(&args.input, &digest, Some(args.seed));
    let hyper = hyperparams(&args.prior, &data)?;
    let config = ChainConfig::new(args.model, hyper, args.seed)
        .with_schedule(args.iterations, args.burn_in, args.thin)
        .with_traces(args.trace.clone());
    config.validate(&data)?;
    timer.lap("ingest");

    let store = run_chain(&data, &config)?;
    timer.lap("sample");

    let mut status = Status::Ok;
    let mode = if args.with_mode {
        let outcome = match args.model {
            Model::Dpb => dpb_lindley_smith(
                &data,
                &config.hyper,
                tagbias::optimize::DEFAULT_TOLERANCE,
                tagbias::optimize::DEFAULT_MAX_ITER,
            ),
            _ => md_mode_iteration(
                &data,
                &config.hyper.alpha,
                config.hyper.mu,
                tagbias::optimize::DEFAULT_TOLERANCE,
                tagbias::optimize::DEFAULT_MAX_ITER,
            ),
        };
        optimizer_outcome("mode", outcome, &mut warnings, &mut status)?
    } else {
        None
    };
    let summary = summarize(
        &store,
        &data,
        &SummaryOptions {
            top_n: args.top_n,
            window: Some(args.window),
            mode: mode.as_ref().map(|r| r.m.values()),
        },
    )?;
    let diagnostics = match chain_autocorrelations(&store, &args.lags) {
        Ok(t) => t,
        Err(e) => {
            warnings.push(format!("autocorrelation unavailable: {e}"));
            Vec::new()
        }
    };
    timer.lap("summarize");

    println!(
        "# model {}: {} sweeps, {} retained, {:.3} s ({:.3} us/sweep)",
        args.model,
        args.iterations,
        store.len(),
        store.meta.wall_seconds,
        store.meta.wall_seconds / args.iterations as f64 * 1e6
    );
    println!("rank\tid\tcount\tmean\tlower95\tupper95\tcorrected_mle");
    for row in &summary.rows {
        println!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
            row.rank,
            row.id,
            row.tag_count,
            row.mean,
            row.lower95,
            row.upper95,
            row.corrected_mle.map_or("NA".into(), |v| format!("{v:.6}"))
        );
    }

    ensure_dir(&args.out_dir)?;
    let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
    write_sample_archive(
        &args.out_dir.join("samples.tsv"),
        &store,
        &ids,
        args.store_full,
    )?;
    let rows: Vec<PlotRow> = summary.rows.iter().map(PlotRow::from).collect();
    write_plot_csv(&args.out_dir.join("plot.csv"), &rows)?;
    timer.lap("write");

    let mut report = RunReport::new(
        "sample",
        Provenance {
            input: args.input.display().to_string(),
            sha256: digest,
            seed: Some(args.seed),
            tool_version: tool_version(),
        },
        serde_json::to_value(&config)?,
    );
    warnings.extend(summary.warnings.iter().cloned());
    report.summary = Some(summary);
    report.diagnostics = diagnostics;
    report.timings = timer.phases;
    report.warnings = warnings;
    write_report(&args.out_dir.join("report.json"), &report)?;
    emit_warnings(&report.warnings);
    Ok(status)
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<Status> {
    let store = read_sample_archive(&args.archive)
        .with_context(|| format!("reading {}", args.archive.display()))?;
    let digest = file_digest(&args.archive)?;
    print_reproducibility(&args.archive, &digest, Some(store.meta.config.seed));
    let tables = chain_autocorrelations(&store, &args.lags)?;

    let header: Vec<&str> = tables.iter().map(|t| t.series.as_str()).collect();
    println!("lag\t{}", header.join("\t"));
    for lag in &args.lags {
        let values: Vec<String> = tables
            .iter()
            .map(|t| format!("{:.4}", t.lags[lag]))
            .collect();
        println!("{lag}\t{}", values.join("\t"));
    }

    if let Some(path) = &args.report {
        let mut report = RunReport::new(
            "diagnose",
            Provenance {
                input: args.archive.display().to_string(),
                sha256: digest,
                seed: Some(store.meta.config.seed),
                tool_version: tool_version(),
            },
            serde_json::to_value(&store.meta)?,
        );
        report.diagnostics = tables;
        write_report(path, &report)?;
    }
    Ok(Status::Ok)
}

pub fn simulate(args: &SimulateArgs) -> Result<Status> {
    let data = if args.library_scale {
        make_paper_scale_fixture(args.seed)?
    } else {
        let truth = args.truth.as_ref().context("--truth is required")?;
        let (ids, m, phi) = read_truth(truth)?;
        let population = match (args.population, args.lambda) {
            (Some(n), None) => Population::Fixed(n),
            (None, Some(rate)) => Population::Poisson(rate),
            _ => bail!("give exactly one of --population or --lambda"),
        };
        let mut spec = SimSpec::new(
            CompositionVector::from_weights(m)?,
            phi,
            population,
            args.seed,
        );
        spec.ids = Some(ids);
        let sim = simulate_dataset(&spec)?;
        println!("# population {}", sim.n_true);
        sim.data
    };
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let label = if args.library_scale {
        format!("library-scale fixture, seed {}", args.seed)
    } else {
        format!(
            "simulated from {}, seed {}",
            args.truth.as_ref().expect("checked").display(),
            args.seed
        )
    };
    write_dataset_labeled(&args.output, &data, Some(&label))?;
    let digest = file_digest(&args.output)?;
    println!("# tagbias {}", tool_version());
    println!(
        "# invocation: {}",
        std::env::args().collect::<Vec<_>>().join(" ")
    );
    println!("# output: {} sha256:{digest}", args.output.display());
    println!("# seed: {}", args.seed);
    let stats = fixture_stats(&data);
    println!("categories\t{}", stats.categories);
    println!("total_tags\t{}", stats.total_tags);
    println!("zero_counts\t{}", stats.zero_counts);
    println!("max_count\t{}", stats.max_count);
    println!("natural_estimate\t{:.2}", stats.natural_estimate);
    println!("phi_range\t{:.4}\t{:.4}", stats.phi_min, stats.phi_max);
    Ok(Status::Ok)
}

/// Reads `id m phi` rows; `m` may be unnormalized weights.
fn read_truth(path: &PathBuf) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    let mut m = Vec::new();
    let mut phi = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !header_seen {
            if fields != ["id", "m", "phi"] {
                bail!("{}:{}: expected header `id m phi`", path.display(), i + 1);
            }
            header_seen = true;
            continue;
        }
        if fields.len() != 3 {
            bail!("{}:{}: expected 3 fields", path.display(), i + 1);
        }
        ids.push(fields[0].to_string());
        m.push(
            fields[1]
                .parse()
                .with_context(|| format!("{}:{}: bad m", path.display(), i + 1))?,
        );
        phi.push(
            fields[2]
                .parse()
                .with_context(|| format!("{}:{}: bad phi", path.display(), i + 1))?,
        );
    }
    if ids.is_empty() {
        bail!("{}: no categories", path.display());
    }
    Ok((ids, m, phi))
}

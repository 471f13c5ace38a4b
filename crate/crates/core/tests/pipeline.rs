use std::collections::BTreeMap;
use std::path::Path;

use tagbias::diagnostics::{chain_autocorrelations, summarize, SummaryOptions};
use tagbias::io::{
    file_digest, ingest, read_plot_csv, read_report, read_sample_archive, write_dataset,
    write_plot_csv, write_report, write_sample_archive, ModeEstimate, PhaseTiming, PlotRow,
    PointEstimates, Provenance, RunReport,
};
use tagbias::optimize::Termination;
use tagbias::samplers::{run_chain, ChainConfig, Model, SampleStore, StoreMeta};
use tagbias::synthetic::{make_paper_scale_fixture, simulate_dataset, Population, SimSpec};
use tagbias::{corrected_mle, naive_mle, CompositionVector, Hyperparams, TagDataset};

#[test]
fn simulated_data_round_trips_through_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SimSpec::new(
        CompositionVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
        vec![0.123456789, 0.5, 1.0, 0.003],
        Population::Poisson(2000.0),
        3,
    );
    let data = simulate_dataset(&spec).unwrap().data;
    let path = dir.path().join("sim.tsv");
    write_dataset(&path, &data).unwrap();
    assert_eq!(ingest(&path).unwrap().data, data);

    let fixture = make_paper_scale_fixture(2).unwrap();
    write_dataset(&path, &fixture).unwrap();
    assert_eq!(ingest(&path).unwrap().data, fixture);
}

#[test]
fn sample_archive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = TagDataset::from_counts(&[5, 0, 2, 9], &[0.8, 0.1, 0.5, 1.0]).unwrap();
    let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
    for model in Model::ALL {
        let h = Hyperparams::new(vec![0.25; 4], 100.0, 0.005, 20.0, 3.0).unwrap();
        let cfg = ChainConfig::new(model, h, 12)
            .with_schedule(1200, 200, 5)
            .with_traces(vec!["c2".into(), "c4".into()]);
        let store = run_chain(&data, &cfg).unwrap();

        let full = dir.path().join(format!("{model}-full.tsv"));
        write_sample_archive(&full, &store, &ids, true).unwrap();
        let back = read_sample_archive(&full).unwrap();
        assert!(back.same_draws(&store), "{model}");

        let traces = dir.path().join(format!("{model}.tsv"));
        write_sample_archive(&traces, &store, &ids, false).unwrap();
        let back = read_sample_archive(&traces).unwrap();
        assert!(back.retained_m.is_empty());
        assert_eq!(back.trace_n, store.trace_n);
        assert_eq!(back.trace_focal, store.trace_focal);
        assert_eq!(back.meta.config, store.meta.config);
        let tables = chain_autocorrelations(&back, &[10, 20]).unwrap();
        assert_eq!(tables[0].series, model.scalar_name());
        assert_eq!(tables.len(), 3);
    }
}

fn golden_report() -> RunReport {
    let data = TagDataset::from_counts(&[2, 1, 1], &[1.0, 0.5, 0.5]).unwrap();
    let hyper = Hyperparams::new(vec![1.0; 3], 100.0, 0.005, 6.0, 2.0).unwrap();
    let config = ChainConfig::new(Model::Dpb, hyper, 42).with_schedule(10, 0, 1);
    let draws = [
        [0.25, 0.25, 0.5],
        [0.5, 0.25, 0.25],
        [0.25, 0.5, 0.25],
        [0.375, 0.375, 0.25],
    ];
    let store = SampleStore {
        retained_m: draws
            .iter()
            .map(|d| CompositionVector::new(d.to_vec()).unwrap())
            .collect(),
        trace_n: vec![4.0, 7.0, 5.0, 6.0, 9.0, 3.0],
        trace_focal: Vec::new(),
        meta: StoreMeta {
            config: config.clone(),
            chain: 0,
            wall_seconds: 0.5,
        },
    };
    let summary = summarize(
        &store,
        &data,
        &SummaryOptions {
            top_n: 2,
            window: None,
            mode: Some(&[0.5, 0.25, 0.25]),
        },
    )
    .unwrap();
    let mut modes = BTreeMap::new();
    modes.insert(
        "dpb_lindley_smith".to_string(),
        ModeEstimate {
            m: vec![0.5, 0.25, 0.25],
            iterations_used: 3,
            final_residual: 0.0,
            termination: Termination::Converged,
        },
    );
    let mut report = RunReport::new(
        "sample",
        Provenance {
            input: "toy.tsv".into(),
            sha256: "0".repeat(64),
            seed: Some(42),
            tool_version: "0.1.0".into(),
        },
        serde_json::to_value(&config).unwrap(),
    );
    report.estimates = Some(PointEstimates {
        ids: vec!["c1".into(), "c2".into(), "c3".into()],
        naive_mle: Some(naive_mle(&data).unwrap().into_inner()),
        corrected_mle: Some(corrected_mle(&data).unwrap().into_inner()),
        natural_population_estimate: 6.0,
        md_exact_mean: Some(vec![1.0 / 3.0; 3]),
        modes,
    });
    report.summary = Some(summary);
    report.diagnostics = chain_autocorrelations(&store, &[1, 2]).unwrap();
    report.timings = vec![
        PhaseTiming {
            phase: "ingest".into(),
            seconds: 0.25,
        },
        PhaseTiming {
            phase: "sample".into(),
            seconds: 0.5,
        },
    ];
    report
}

#[test]
fn report_schema_matches_golden_file() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/run_report.json");
    let report = golden_report();
    let rendered = serde_json::to_string_pretty(&report).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).unwrap();
    assert_eq!(rendered, expected);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    write_report(&path, &report).unwrap();
    assert_eq!(read_report(&path).unwrap(), report);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), expected);
}

#[test]
fn plot_data_round_trip() {
    let report = golden_report();
    let rows: Vec<PlotRow> = report
        .summary
        .unwrap()
        .rows
        .iter()
        .map(PlotRow::from)
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.csv");
    write_plot_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(
        text.starts_with("rank,id,naive_mle,corrected_mle,post_mean,post_mode,lower95,upper95\n")
    );
    assert_eq!(read_plot_csv(&path).unwrap(), rows);

    write_plot_csv(&path, &[]).unwrap();
    assert!(read_plot_csv(&path).unwrap().is_empty());
}

#[test]
fn digest_changes_with_content() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.tsv");
    let data = TagDataset::from_counts(&[1, 2], &[0.5, 1.0]).unwrap();
    write_dataset(&path, &data).unwrap();
    let a = file_digest(&path).unwrap();
    let data = TagDataset::from_counts(&[1, 3], &[0.5, 1.0]).unwrap();
    write_dataset(&path, &data).unwrap();
    assert_ne!(a, file_digest(&path).unwrap());
    assert_eq!(a.len(), 64);
}

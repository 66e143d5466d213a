use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use tooldse_core::bdmetrics::rdcsv::{write_rows, RdRow};
use tooldse_core::dse::{
    full_search, greedy_dse, pareto_front, select_ebe, select_ee, sensitivity, write_trace, AcceptMode, DseError,
    DseOptions, DseReport, EbeOptions, Evaluation, Explorer, Objective, ProfileSummary, TraceRecord,
    REPORT_SCHEMA_VERSION,
};
use tooldse_core::evaluator::{CachedEvaluator, Evaluator};

use crate::failure::Failure;
use crate::resolve::{resolve, write_json, RunConfig, Source};
use crate::svg;
use crate::{DseRunArgs, FullSearchArgs};

type Cached = CachedEvaluator<Box<dyn Evaluator>>;

fn cached(inner: Box<dyn Evaluator>, run: &RunConfig, cache_file: bool) -> Result<Cached, Failure> {
    let c = CachedEvaluator::new(inner, run.catalog_fingerprint.clone());
    match (&run.cache, cache_file) {
        (Some(path), true) => Ok(c.with_file(path)?),
        _ => Ok(c),
    }
}

fn prepare_out(run: &RunConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(&run.out).map_err(|e| Failure::io(&run.out, e))?;
    write_json(&run.out.join("run_config.json"), run)
}

fn save_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), Failure> {
    let f = File::create(path).map_err(|e| Failure::io(path, e))?;
    write_trace(BufWriter::new(f), trace).map_err(|e| Failure::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:+.2}%")).unwrap_or_else(|| "n/a".into())
}

fn write_curves(path: &Path, evals: &[Evaluation]) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for e in evals {
        let config = e.profile.config().to_string();
        for c in &e.curves {
            for p in &c.points {
                rows.push(RdRow::from_point(&e.id(), &config, &c.sequence, p));
            }
        }
    }
    let f = File::create(path).map_err(|e| Failure::io(path, e))?;
    write_rows(BufWriter::new(f), &rows).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn write_pareto_csv(path: &Path, evals: &[Evaluation], front: &[Evaluation], objective: Objective) -> Result<(), Failure> {
    let on_front: std::collections::HashSet<String> = front.iter().map(|e| e.id()).collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Failure::runtime(format!("{}: {e}", path.display()));
    w.write_record(["profile_id", "bits", "bdr", "bdde", "pareto"]).map_err(csv_err)?;
    for e in evals {
        let bdr = fmt_opt(e.bdr(objective));
        let bdde = fmt_opt(e.objective(objective));
        let pareto = if on_front.contains(&e.id()) { "1" } else { "0" };
        w.write_record([e.id().as_str(), e.bits.as_str(), &bdr, &bdde, pareto]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

pub fn run(args: DseRunArgs) -> Result<(), Failure> {
    let resolved = resolve("dse run", &args.search)?;
    let (mut run, file, catalog, source) = (resolved.run, resolved.file, resolved.catalog, resolved.source);
    run.tools = args.tools.or(file.tools);
    run.refine_evaluator = args.refine_evaluator.or(file.refine_evaluator);
    run.refine_sequences = args.refine_sequences.or(file.refine_sequences);
    run.sequential_accept = Some(args.sequential_accept || file.sequential_accept.unwrap_or(false));
    run.max_iterations = Some(args.max_iterations.or(file.max_iterations).unwrap_or(64));
    run.bdr_cap = Some(args.bdr_cap.or(file.bdr_cap).unwrap_or(EbeOptions::default().bdr_cap));
    run.ebe_k = Some(args.ebe_k.or(file.ebe_k).unwrap_or(EbeOptions::default().k));
    run.svg = Some(args.svg || file.svg.unwrap_or(false));
    if run.max_iterations == Some(0) {
        return Err(Failure::usage("--max-iterations must be at least 1"));
    }
    if run.ebe_k == Some(0) {
        return Err(Failure::usage("--ebe-k must be at least 1"));
    }
    prepare_out(&run)?;

    let evaluator = cached(source.build(&catalog, run.config, run.seed)?, &run, true)?;
    let ex = Explorer::new(&evaluator, &catalog, run.config, run.sequences.clone(), run.qps.clone(), run.method)?
        .with_jobs(run.jobs);
    let accept = if run.sequential_accept == Some(true) {
        AcceptMode::Sequential
    } else {
        AcceptMode::Batch
    };
    let opts = DseOptions {
        objective: run.objective,
        accept,
        tools: run.tools.clone(),
        max_iterations: run.max_iterations.unwrap_or(64),
    };
    let trace_path = run.out.join("trace.jsonl");
    let outcome = match greedy_dse(&ex, &opts) {
        Ok(o) => o,
        Err(DseError::Aborted { source, trace }) => {
            save_trace(&trace_path, &trace)?;
            evaluator.save()?;
            return Err(DseError::Aborted { source, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    save_trace(&trace_path, &outcome.trace)?;

    let evals = ex.evaluations();
    let mut ee = select_ee(&evals, run.objective)?.clone();
    // A full tie with CTC keeps CTC.
    let base = ex.evaluate(ex.baseline())?;
    if base.objective(run.objective) == ee.objective(run.objective) && base.bdr(run.objective) == ee.bdr(run.objective) {
        ee = base;
    }

    let refine_sequences = run.refine_sequences.clone().unwrap_or_else(|| run.sequences.clone());
    let ebe_opts = EbeOptions {
        bdr_cap: run.bdr_cap.unwrap_or(10.0),
        k: run.ebe_k.unwrap_or(3),
    };
    let separate = run.refine_evaluator.as_ref().is_some_and(|r| *r != run.evaluator) || refine_sequences != run.sequences;
    let refine_holder;
    let refine_evaluator;
    let refine_ex: &Explorer = if separate {
        let spec = run.refine_evaluator.clone().unwrap_or_else(|| run.evaluator.clone());
        let src = Source::parse(&spec)?;
        refine_evaluator = cached(src.build(&catalog, run.config, run.seed)?, &run, false)?;
        refine_holder =
            Explorer::new(&refine_evaluator, &catalog, run.config, refine_sequences.clone(), run.qps.clone(), run.method)?
                .with_jobs(run.jobs);
        &refine_holder
    } else {
        &ex
    };
    let calls_before = refine_ex.calls();
    let (ebe_profile, ebe_note) = match select_ebe(&evals, run.objective, refine_ex, ebe_opts) {
        Ok(sel) => (Some(ProfileSummary::from_evaluation(&sel.winner)), None),
        Err(e @ DseError::EmptyShortlist { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let refine_call_count = if separate {
        refine_ex.calls()
    } else {
        refine_ex.calls() - calls_before
    };

    let sens = match sensitivity(&outcome.trace, &catalog, run.config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("warning: sensitivity skipped: {e}");
            BTreeMap::new()
        }
    };
    let front = pareto_front(&evals, run.objective);
    let final_eval = ex.evaluate(&outcome.final_profile)?;
    let explored: Vec<String> = match &run.tools {
        Some(t) => catalog
            .applicable(run.config)
            .filter(|d| t.contains(&d.name))
            .map(|d| d.name.clone())
            .collect(),
        None => catalog.applicable_names(run.config),
    };
    let report = DseReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: run.config,
        objective: run.objective,
        method: run.method,
        accept_mode: accept,
        seed: run.seed,
        catalog_fingerprint: run.catalog_fingerprint.clone(),
        evaluator: run.evaluator.clone(),
        sequences: run.sequences.clone(),
        refine_sequences,
        qps: run.qps.clone(),
        tools: explored,
        iterations: outcome.iterations,
        termination: outcome.termination,
        final_profile: ProfileSummary::from_evaluation(&final_eval),
        ee_profile: ProfileSummary::from_evaluation(&ee),
        ebe_profile,
        ebe_note,
        sensitivity: sens,
        pareto: front.iter().map(ProfileSummary::from_evaluation).collect(),
        evaluator_call_count: outcome.evaluator_calls,
        refine_call_count,
    };
    write_json(&run.out.join("report.json"), &report)?;
    write_pareto_csv(&run.out.join("pareto.csv"), &evals, &front, run.objective)?;
    write_curves(&run.out.join("curves.csv"), &evals)?;
    if run.svg == Some(true) {
        svg::write_dse(&run.out.join("dse.svg"), &outcome.trace)?;
        svg::write_pareto(&run.out.join("pareto.svg"), &evals, &front, run.objective)?;
    }
    evaluator.save()?;

    println!(
        "{} iterations ({:?}), {} evaluator calls",
        report.iterations, report.termination, report.evaluator_call_count
    );
    let line = |label: &str, p: &ProfileSummary| {
        let bd = p.bd.unwrap_or_default();
        println!(
            "{label:<6} {}  {}  BDR {}  BDDE {}",
            p.id,
            p.bits,
            fmt_pct(run.objective.bdr(&bd)),
            fmt_pct(run.objective.value(&bd))
        );
    };
    line("final", &report.final_profile);
    line("EE", &report.ee_profile);
    match (&report.ebe_profile, &report.ebe_note) {
        (Some(p), _) => line("EBE", p),
        (None, Some(note)) => println!("EBE    none: {note}"),
        _ => {}
    }
    println!("outputs in {}", run.out.display());
    Ok(())
}

pub fn fullsearch(args: FullSearchArgs) -> Result<(), Failure> {
    let resolved = resolve("dse fullsearch", &args.search)?;
    let (mut run, file, catalog, source) = (resolved.run, resolved.file, resolved.catalog, resolved.source);
    run.tools = args.tools.or(file.tools);
    let subset = run
        .tools
        .clone()
        .ok_or_else(|| Failure::usage("--tools is required for exhaustive search"))?;
    prepare_out(&run)?;
    let evaluator = cached(source.build(&catalog, run.config, run.seed)?, &run, true)?;
    let ex = Explorer::new(&evaluator, &catalog, run.config, run.sequences.clone(), run.qps.clone(), run.method)?
        .with_jobs(run.jobs);
    let fs = full_search(&ex, &subset, run.objective)?;
    evaluator.save()?;
    if !fs.dropped.is_empty() {
        eprintln!("note: not applicable to {}: {}", run.config, fs.dropped.join(","));
    }

    let path = run.out.join("fullsearch.csv");
    let csv_err = |e: csv::Error| Failure::runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let mut header: Vec<String> = ["rank", "profile_id", "bits"].map(String::from).to_vec();
    header.extend(fs.tools.iter().cloned());
    header.extend(["bdr_psnr", "bdde_psnr", "bdr_vmaf", "bdde_vmaf", "error"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for (i, e) in fs.results.iter().enumerate() {
        let bd = e.bd.unwrap_or_default();
        let mut rec = vec![(i + 1).to_string(), e.id(), e.bits.clone()];
        rec.extend(fs.tools.iter().map(|t| if e.profile.get(t) == Some(true) { "1" } else { "0" }.to_string()));
        rec.extend([bd.bdr_psnr, bd.bdde_psnr, bd.bdr_vmaf, bd.bdde_vmaf].map(fmt_opt));
        rec.push(e.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;

    let best = fs.best().ok_or_else(|| Failure::runtime("no profile could be scored"))?;
    let bd = best.bd.unwrap_or_default();
    println!(
        "{} profiles over {} tools; optimum {} {}  BDR {}  BDDE {}",
        fs.results.len(),
        fs.tools.len(),
        best.id(),
        best.bits,
        fmt_pct(run.objective.bdr(&bd)),
        fmt_pct(run.objective.value(&bd))
    );
    Ok(())
}

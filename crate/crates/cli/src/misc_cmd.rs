use std::fs::File;
use std::io::BufReader;

use serde::Serialize;
use tooldse_core::dse::{read_trace, sensitivity as categorize};
use tooldse_core::evaluator::LandscapeSpec;
use tooldse_core::measurement::{
    source_from_spec, ConfidenceParams, IdleMode, MeasureError, MeasurementSession, Sidedness,
};

use crate::failure::{Failure, NON_CONVERGENCE};
use crate::resolve::{load_catalog, write_json};
use crate::{IdleArg, LandscapeCommand, MeasureArgs, ProfileCommand, SensitivityArgs, SidednessArg};

pub fn sensitivity(args: SensitivityArgs) -> Result<(), Failure> {
    let f = File::open(&args.trace).map_err(|e| Failure::usage(format!("{}: {e}", args.trace.display())))?;
    let trace = read_trace(BufReader::new(f))?;
    let config = match args.config {
        Some(c) => c,
        None => trace
            .first()
            .map(|r| r.config)
            .ok_or_else(|| Failure::usage(format!("{} is empty", args.trace.display())))?,
    };
    let catalog = load_catalog(args.catalog.as_deref())?;
    let table = categorize(&trace, &catalog, config)?;
    if !args.json {
        println!("{:<12} {:>4} {:>10}  category", "tool", "ctc", "effect");
        for (tool, e) in &table {
            println!(
                "{tool:<12} {:>4} {:>+9.2}%  {}",
                if e.ctc_enabled { "on" } else { "off" },
                e.effect,
                e.category
            );
        }
    }
    println!("{}", serde_json::to_string(&table).map_err(|e| Failure::runtime(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct MeasureReport {
    source: String,
    samples: Vec<f64>,
    mean: f64,
    stddev: f64,
    m: usize,
    converged: bool,
    interval_width: Option<f64>,
    idle_power_w: f64,
    params: ConfidenceParams,
}

pub fn measure(args: MeasureArgs) -> Result<(), Failure> {
    let params = ConfidenceParams {
        beta: args.beta,
        alpha: args.alpha,
        m_min: args.m_min,
        m_max: args.m_max,
        sidedness: match args.sidedness {
            SidednessArg::TwoSided => Sidedness::TwoSided,
            SidednessArg::OneSided => Sidedness::OneSided,
        },
    };
    let source = source_from_spec(&args.source)?;
    let mut session = MeasurementSession::new(source, params)?.with_idle_mode(match args.idle {
        IdleArg::PerSession => IdleMode::PerSession,
        IdleArg::PerRun => IdleMode::PerRun,
    });
    if let Some(w) = args.idle_power {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Failure::usage("--idle-power must be a non-negative number"));
        }
        session = session.with_idle_power(w);
    }
    let command = args.command.clone();
    let mut task = || -> Result<(), MeasureError> {
        let Some(cmd) = &command else {
            return Ok(());
        };
        let status = std::process::Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| MeasureError::Task(e.to_string()))?;
        if status.success() {
            Ok(())
        } else {
            Err(MeasureError::Task(format!("`{cmd}` exited with {status}")))
        }
    };
    let series = session.measure_until_confident(&mut task)?;
    let report = MeasureReport {
        source: args.source,
        interval_width: series.interval_width().ok(),
        samples: series.samples.clone(),
        mean: series.mean,
        stddev: series.stddev,
        m: series.m,
        converged: series.converged,
        idle_power_w: series.idle_power_w,
        params,
    };
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::runtime(e.to_string()))?);
    if !report.converged {
        return Err(Failure {
            code: NON_CONVERGENCE,
            message: format!(
                "no convergence after {} runs (beta {}, alpha {})",
                report.m, params.beta, params.alpha
            ),
        });
    }
    Ok(())
}

pub fn profile(cmd: ProfileCommand) -> Result<(), Failure> {
    match cmd {
        ProfileCommand::Validate { file, catalog } => {
            let catalog = load_catalog(catalog.as_deref())?;
            let text = std::fs::read_to_string(&file).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
            let p = catalog
                .parse_profile(&text)
                .map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
            println!("ok {} {} {}", p.config(), p.id(), catalog.bit_string(&p));
        }
        ProfileCommand::Ctc { config, catalog } => {
            let catalog = load_catalog(catalog.as_deref())?;
            println!("{}", catalog.ctc_profile(config).to_json());
        }
    }
    Ok(())
}

pub fn landscape(cmd: LandscapeCommand) -> Result<(), Failure> {
    let LandscapeCommand::Generate {
        config,
        tools,
        interactions,
        seed,
        catalog,
        out,
    } = cmd;
    let catalog = load_catalog(catalog.as_deref())?;
    let names = tools.unwrap_or_else(|| catalog.applicable_names(config));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let spec = if interactions == 0 {
        LandscapeSpec::random_separable(config, &refs, seed)
    } else {
        LandscapeSpec::random_interacting(config, &refs, interactions, seed)
    };
    // Validates tool names and applicability.
    tooldse_core::SyntheticLandscape::new(spec.clone(), &catalog)?;
    let text = spec.to_json_pretty();
    match out {
        Some(path) => std::fs::write(&path, format!("{text}\n")).map_err(|e| Failure::io(&path, e))?,
        None => println!("{text}"),
    }
    Ok(())
}

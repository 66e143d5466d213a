use std::collections::BTreeMap;
use std::fs::File;

use serde::Serialize;
use tooldse_core::bdmetrics::rdcsv::{curves_from_rows, read_rows};
use tooldse_core::bdmetrics::{bd_axis, CostAxis, QualityAxis};

use crate::failure::Failure;
use crate::{BdArgs, CostArg, QualityArg};

#[derive(Serialize)]
struct BdOutput {
    reference: String,
    test: String,
    cost: CostAxis,
    method: String,
    /// Per sequence, keyed by quality axis.
    sequences: BTreeMap<String, BTreeMap<String, f64>>,
    mean: BTreeMap<String, f64>,
}

pub fn run(args: BdArgs) -> Result<(), Failure> {
    let file = File::open(&args.input).map_err(|e| Failure::usage(format!("{}: {e}", args.input.display())))?;
    let rows = read_rows(file).map_err(|e| Failure::usage(format!("{}: {e}", args.input.display())))?;
    let curves = curves_from_rows(&rows)?;
    let cost = match args.cost {
        CostArg::Rate => CostAxis::Rate,
        CostArg::Energy => CostAxis::Energy,
        CostArg::Time => CostAxis::Time,
    };
    let qualities: &[QualityAxis] = match args.quality {
        QualityArg::Psnr => &[QualityAxis::Psnr],
        QualityArg::Vmaf => &[QualityAxis::Vmaf],
        QualityArg::Both => &[QualityAxis::Psnr, QualityAxis::Vmaf],
    };

    let mut sequences: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((id, seq), reference) in &curves {
        if *id != args.reference {
            continue;
        }
        let Some(test) = curves.get(&(args.test.clone(), seq.clone())) else {
            continue;
        };
        let mut per = BTreeMap::new();
        for &q in qualities {
            if args.quality == QualityArg::Both && !(reference.has(cost, q) && test.has(cost, q)) {
                continue;
            }
            let v = bd_axis(reference, test, cost, q, args.method)
                .map_err(|e| Failure::usage(format!("sequence {seq}: {e}")))?;
            per.insert(q.to_string(), v.percent);
        }
        sequences.insert(seq.clone(), per);
    }
    if sequences.is_empty() {
        return Err(Failure::usage(format!(
            "no sequence has curves for both `{}` and `{}`",
            args.reference, args.test
        )));
    }
    let mut mean: BTreeMap<String, f64> = BTreeMap::new();
    for &q in qualities {
        let vals: Vec<f64> = sequences.values().filter_map(|m| m.get(&q.to_string()).copied()).collect();
        if vals.is_empty() {
            continue;
        }
        if vals.len() != sequences.len() {
            return Err(Failure::usage(format!("{q} values missing for some sequences")));
        }
        mean.insert(q.to_string(), vals.iter().sum::<f64>() / vals.len() as f64);
    }
    if mean.is_empty() {
        return Err(Failure::usage(format!("curves lack {cost} values for every quality metric")));
    }

    let out = BdOutput {
        reference: args.reference,
        test: args.test,
        cost,
        method: args.method.to_string(),
        sequences,
        mean,
    };
    if !args.json {
        let label = match cost {
            CostAxis::Rate => "BDR",
            CostAxis::Energy => "BDDE",
            CostAxis::Time => "BD-time",
        };
        println!("{label} of {} against {} ({} interpolation)", out.test, out.reference, out.method);
        for (seq, per) in &out.sequences {
            let cells: Vec<String> = per.iter().map(|(q, v)| format!("{q} {v:+.2}%")).collect();
            println!("  {seq:<24} {}", cells.join("  "));
        }
        let cells: Vec<String> = out.mean.iter().map(|(q, v)| format!("{q} {v:+.2}%")).collect();
        println!("  {:<24} {}", "mean", cells.join("  "));
    }
    println!("{}", serde_json::to_string(&out).map_err(|e| Failure::runtime(e.to_string()))?);
    Ok(())
}

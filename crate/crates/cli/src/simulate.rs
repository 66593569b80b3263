use std::fs;
use std::time::Instant;

use regmeta::simulation::{
    full_grid, run_scenario, write_metrics_csv, CiKind, Design, ScenarioConfig, ScenarioReport,
};
use serde::{Deserialize, Serialize};

use crate::args::SimulateArgs;
use crate::error::CliError;
use crate::report::SCHEMA;

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Many(Vec<ScenarioConfig>),
    One(Box<ScenarioConfig>),
}

#[derive(Serialize)]
struct SimulationJson<'a> {
    schema: u32,
    scenarios: &'a [ScenarioReport],
}

fn scenarios(args: &SimulateArgs) -> Result<Vec<ScenarioConfig>, CliError> {
    let mut out = if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {path}: {e}")))?;
        match serde_json::from_str::<ConfigFile>(&text)
            .map_err(|e| CliError::Usage(format!("{path}: {e}")))?
        {
            ConfigFile::Many(v) => v,
            ConfigFile::One(c) => vec![*c],
        }
    } else if args.full {
        let mut grid = full_grid(args.replicates, args.seed);
        for s in &mut grid {
            s.boot_b = args.boot_b;
            s.level = args.level;
        }
        grid
    } else if let Some(k) = args.design {
        let design = Design::from_index(k)
            .ok_or_else(|| CliError::Usage(format!("--design must be 1-4, got {k}")))?;
        let mut s =
            ScenarioConfig::for_design(design, args.s_total, args.tau, args.replicates, args.seed);
        s.boot_b = args.boot_b;
        s.level = args.level;
        vec![s]
    } else {
        return Err(CliError::Usage(
            "give --config <json>, --design <1-4> or --full".into(),
        ));
    };
    for s in &mut out {
        if let Some(mu) = args.mu {
            s.generative.mu = mu;
        }
        if args.no_bootstrap {
            s.methods.retain(|m| m.ci_kind() != CiKind::Bootstrap);
        }
        s.validate()
            .map_err(|e| CliError::Usage(format!("scenario {}: {e}", s.id)))?;
    }
    if out.is_empty() {
        return Err(CliError::Usage("no scenarios to run".into()));
    }
    Ok(out)
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let list = scenarios(args)?;
    let mut reports = Vec::with_capacity(list.len());
    for (i, s) in list.iter().enumerate() {
        let t = Instant::now();
        eprintln!(
            "[{}/{}] {}: {} replicates, {} methods",
            i + 1,
            list.len(),
            s.id,
            s.generative.n_replicates,
            s.methods.len()
        );
        let r = run_scenario(s).map_err(|e| CliError::Usage(e.to_string()))?;
        eprintln!(
            "[{}/{}] {} done in {:.1}s (unpublished {:.3}, redraws {})",
            i + 1,
            list.len(),
            s.id,
            t.elapsed().as_secs_f64(),
            r.unpublished_fraction,
            r.n_redraws
        );
        reports.push(r);
    }

    let metrics: Vec<_> = reports.iter().flat_map(|r| r.metrics.clone()).collect();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &metrics).map_err(|e| CliError::Io(e.to_string()))?;
    match &args.out {
        Some(path) => {
            fs::write(path, &buf).map_err(|e| CliError::Io(format!("cannot write {path}: {e}")))?
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    if let Some(path) = &args.json {
        let js = serde_json::to_string_pretty(&SimulationJson {
            schema: SCHEMA,
            scenarios: &reports,
        })
        .expect("reports serialize");
        fs::write(path, js).map_err(|e| CliError::Io(format!("cannot write {path}: {e}")))?;
    }
    Ok(())
}

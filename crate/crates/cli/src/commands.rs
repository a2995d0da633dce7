use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use keyfault_core::injection::{run_stream, text_to_inputs, InjectionConfig};
use keyfault_core::metrics::{format_table, log_report, suspect_ratio, Dictionary, MetricsReport};
use keyfault_core::session::{bundled_phrases, make_plan, parse_phrases, partition_phrases, SessionLog};
use keyfault_core::simulator::{run_experiment, Manifest};
use keyfault_core::substitution::{build_matrix, extract_suspects, SubstitutionMatrix};
use keyfault_core::{InjectionModel, KeyboardLayout};
use keyfault_service::{FsLogStore, StudyService};

use crate::{CliError, Command, ModelArgs};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BuildMatrix { logs_dir, out } => build_matrix_cmd(&logs_dir, &out),
        Command::Inject {
            input,
            mode,
            seed,
            p_t,
            model,
            out,
            decisions,
        } => {
            let model = load_model(&model)?;
            let config = InjectionConfig::new(mode, p_t, seed, Arc::new(model))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            inject_cmd(input.as_deref(), &config, out.as_deref(), decisions.as_deref())
        }
        Command::Simulate {
            manifest,
            seed,
            model,
            dict,
            out,
        } => simulate_cmd(manifest.as_deref(), seed, &model, dict.as_deref(), out.as_deref()),
        Command::Analyze {
            logs,
            targets,
            dict,
            json,
        } => analyze_cmd(&logs, targets.as_deref(), dict.as_deref(), json),
        Command::Plan {
            participants,
            seed,
            phrases,
            set_size,
        } => plan_cmd(participants, seed, phrases.as_deref(), set_size),
        Command::Serve {
            addr,
            data,
            model,
            dict,
        } => {
            let store = FsLogStore::new(&data).map_err(|e| CliError::Input(format!("{}: {e}", data.display())))?;
            let service = StudyService::new(
                Arc::new(store),
                Arc::new(load_model(&model)?),
                Arc::new(load_dict(dict.as_deref())?),
            );
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            eprintln!("serving on http://{addr}, data in {}", data.display());
            rt.block_on(keyfault_service::http::serve(addr, Arc::new(service)))
                .map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn load_model(args: &ModelArgs) -> Result<InjectionModel, CliError> {
    let layout = match &args.layout {
        Some(p) => KeyboardLayout::parse(&read_file(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => KeyboardLayout::qwerty(),
    };
    let matrix = match &args.matrix {
        Some(p) => {
            SubstitutionMatrix::parse(&read_file(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => SubstitutionMatrix::synthetic(),
    };
    InjectionModel::new(matrix, layout).map_err(|e| CliError::Input(e.to_string()))
}

fn load_dict(path: Option<&Path>) -> Result<Dictionary, CliError> {
    match path {
        Some(p) => {
            let d = Dictionary::parse(&read_file(p)?);
            if d.is_empty() {
                return Err(CliError::Input(format!("{}: no words", p.display())));
            }
            Ok(d)
        }
        None => Ok(Dictionary::bundled()),
    }
}

/// `.jsonl` files of a directory (sorted), or the path itself.
fn log_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            out.extend(files);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(CliError::Input(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(out)
}

/// Parses every log, warning about and skipping the unparseable ones.
fn load_logs(paths: &[PathBuf]) -> Result<Vec<(PathBuf, SessionLog)>, CliError> {
    let mut logs = Vec::new();
    for p in log_paths(paths)? {
        match SessionLog::parse(&read_file(&p)?) {
            Ok(l) => logs.push((p, l)),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if logs.is_empty() {
        let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::Input(format!("no parseable logs in {}", names.join(", "))));
    }
    Ok(logs)
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn build_matrix_cmd(logs_dir: &Path, out: &Path) -> Result<(), CliError> {
    let logs = load_logs(&[logs_dir.to_path_buf()])?;
    let mut pairs = Vec::new();
    let mut ratios = Vec::new();
    for (_, log) in &logs {
        pairs.extend(extract_suspects(log).pairs);
        if let Ok(r) = suspect_ratio(&log.events) {
            ratios.push(r);
        }
    }
    let built = build_matrix(&pairs);
    write_file(out, &built.matrix.to_text())?;
    println!("sessions: {}", logs.len());
    println!("suspect pairs: {} ({} outside the alphabet)", pairs.len(), built.skipped);
    if !ratios.is_empty() {
        ratios.sort_by(f64::total_cmp);
        println!(
            "suspect ratio per session: min {:.4}  median {:.4}  p85 {:.4}  max {:.4}",
            ratios[0],
            percentile(&ratios, 0.5),
            percentile(&ratios, 0.85),
            ratios[ratios.len() - 1]
        );
    }
    println!("nonzero cells: {}", built.matrix.nonzero_cells());
    println!("wrote {}", out.display());
    Ok(())
}

fn inject_cmd(
    input: Option<&Path>,
    config: &InjectionConfig,
    out: Option<&Path>,
    decisions: Option<&Path>,
) -> Result<(), CliError> {
    let text = match input {
        Some(p) => read_file(p)?,
        None => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::Input(format!("stdin: {e}")))?;
            s
        }
    };
    eprintln!("seed: {}", config.seed);
    let output = run_stream(config, &text_to_inputs(&text)).map_err(|e| CliError::Internal(e.to_string()))?;
    match out {
        Some(p) => write_file(p, &output.text)?,
        None => io::stdout()
            .write_all(output.text.as_bytes())
            .map_err(|e| CliError::Internal(e.to_string()))?,
    }
    let sidecar = decisions
        .map(Path::to_path_buf)
        .or_else(|| out.map(|o| PathBuf::from(format!("{}.decisions.jsonl", o.display()))));
    match sidecar {
        Some(p) => {
            let mut lines = String::new();
            for d in &output.decisions {
                lines.push_str(&serde_json::to_string(d).expect("decisions serialise"));
                lines.push('\n');
            }
            write_file(&p, &lines)?;
            eprintln!("{} decisions written to {}", output.decisions.len(), p.display());
        }
        None => eprintln!("{} decisions (use --decisions to save them)", output.decisions.len()),
    }
    Ok(())
}

fn simulate_cmd(
    manifest: Option<&Path>,
    seed: Option<u64>,
    model: &ModelArgs,
    dict: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut m = match manifest {
        Some(p) => Manifest::parse(&read_file(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => Manifest::bundled(),
    };
    if let Some(s) = seed {
        m.seed = s;
    }
    eprintln!("seed: {}", m.seed);
    let model = Arc::new(load_model(model)?);
    let dict = load_dict(dict)?;
    let pool = match &m.phrases {
        Some(p) => {
            let base = manifest.and_then(Path::parent).unwrap_or(Path::new("."));
            parse_phrases(&read_file(&base.join(p))?)
        }
        None => bundled_phrases(),
    };
    let sets = partition_phrases(&pool, 4, m.phrases_per_set, m.seed).map_err(|e| CliError::Input(e.to_string()))?;
    let conditions = m.conditions(model).map_err(|e| CliError::Input(e.to_string()))?;
    let rows = run_experiment(&m.typists(), &sets, &conditions, m.seed, &dict)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
        let mut reports = String::new();
        for row in &rows {
            let name = format!("p{:03}-{}.jsonl", row.participant, row.condition);
            write_file(&dir.join(name), &row.merged_log(m.seed).serialize())?;
            let line = serde_json::json!({
                "participant": row.participant,
                "typist": row.typist,
                "condition": row.condition,
                "report": row.report,
            });
            reports.push_str(&line.to_string());
            reports.push('\n');
        }
        write_file(&dir.join("reports.jsonl"), &reports)?;
    }
    let mut groups: BTreeMap<String, Vec<MetricsReport>> = BTreeMap::new();
    for row in &rows {
        groups.entry(row.condition.to_string()).or_default().push(row.report.clone());
    }
    println!("reports: {}", rows.len());
    print!("{}", format_table(&groups.into_iter().collect::<Vec<_>>()));
    Ok(())
}

fn analyze_cmd(logs: &[PathBuf], targets: Option<&Path>, dict: Option<&Path>, json: bool) -> Result<(), CliError> {
    let logs = load_logs(logs)?;
    let dict = load_dict(dict)?;
    let targets = targets.map(|p| read_file(p).map(|t| parse_phrases(&t))).transpose()?;
    let mut groups: BTreeMap<String, Vec<MetricsReport>> = BTreeMap::new();
    for (path, log) in &logs {
        let report = match log_report(&log.events, targets.as_deref(), &dict) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        if json {
            let line = serde_json::json!({ "file": path.display().to_string(), "report": report });
            println!("{line}");
        }
        let group = log.header.condition.map_or_else(|| "all".to_string(), |c| c.to_string());
        groups.entry(group).or_default().push(report);
    }
    if groups.is_empty() {
        return Err(CliError::Input("no submitted tasks in the given logs".into()));
    }
    print!("{}", format_table(&groups.into_iter().collect::<Vec<_>>()));
    Ok(())
}

fn plan_cmd(participants: u32, seed: u64, phrases: Option<&Path>, set_size: usize) -> Result<(), CliError> {
    let pool = match phrases {
        Some(p) => parse_phrases(&read_file(p)?),
        None => bundled_phrases(),
    };
    println!("seed: {seed}");
    for p in 0..participants {
        let plan = make_plan(p, seed);
        let order: Vec<String> = plan.conditions.iter().map(|c| c.to_string()).collect();
        let sets: Vec<String> = plan.conditions.iter().map(|&c| plan.phrase_set(c).to_string()).collect();
        println!("participant {p}: {} (phrase sets {})", order.join(" "), sets.join(" "));
    }
    let sets = partition_phrases(&pool, 4, set_size, seed).map_err(|e| CliError::Input(e.to_string()))?;
    for s in &sets {
        println!("phrase set {}: {} phrases, mean length {:.2}", s.id, s.phrases.len(), s.mean_len());
    }
    Ok(())
}

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;
use sha2::{Digest, Sha256};
use sphere_energy::manifest::RunManifest;

use crate::output::{csv_string, flatten};
use crate::{run, Cli, CliError, Command, Outcome, ReplayArgs, ReportArgs};

pub fn content_hash(m: &RunManifest) -> String {
    hex::encode(Sha256::digest(m.content_key().as_bytes()))
}

fn collect_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::Usage(format!("reading {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Usage(format!("manifest {} does not exist", p.display())));
        }
    }
    Ok(files)
}

fn load(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    RunManifest::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn verdict(pass: Option<bool>) -> &'static str {
    match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "INFO",
    }
}

pub fn report(a: &ReportArgs) -> Result<Outcome, CliError> {
    let files = collect_files(&a.inputs)?;
    let mut seen = HashSet::new();
    let mut kept: Vec<(String, PathBuf, RunManifest)> = Vec::new();
    let mut duplicates = 0usize;
    for f in files {
        let m = load(&f)?;
        let h = content_hash(&m);
        if seen.insert(h.clone()) {
            kept.push((h, f, m));
        } else {
            duplicates += 1;
        }
    }
    let header = ["hash", "command", "claim", "seed", "result", "wall_time_s", "source"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = kept
        .iter()
        .map(|(h, f, m)| {
            vec![
                h[..16].to_string(),
                m.command.clone(),
                m.claim.clone(),
                m.seed.to_string(),
                verdict(m.pass).to_string(),
                format!("{:.3}", m.wall_time_s),
                f.display().to_string(),
            ]
        })
        .collect();
    let count = |p: Option<bool>| kept.iter().filter(|(_, _, m)| m.pass == p).count();
    let (passed, failed, info) = (count(Some(true)), count(Some(false)), count(None));
    let mut summary = format!(
        "{} manifests ({duplicates} duplicates dropped): {passed} passed, {failed} failed, {info} informational\n",
        kept.len()
    );
    for (_, _, m) in &kept {
        summary.push_str(&format!("[{}] {} :: {}\n", verdict(m.pass), m.command, m.claim));
    }
    let table = csv_string(&header, &rows).map_err(CliError::Runtime)?;
    if let Some(p) = &a.table {
        std::fs::write(p, &table).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))?;
    }
    if let Some(p) = &a.summary {
        std::fs::write(p, &summary).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))?;
    }
    let outputs = json!({
        "manifests": kept.len(),
        "duplicates": duplicates,
        "passed": passed,
        "failed": failed,
        "informational": info,
        "rows": rows.iter().map(|r| header.iter().cloned().zip(r.iter().map(|v| json!(v))).collect::<serde_json::Map<_, _>>()).collect::<Vec<_>>(),
        "summary": summary,
    });
    let params = json!({"inputs": a.inputs, "table": a.table, "summary": a.summary});
    Ok(Outcome {
        params,
        claim: "aggregate of run manifests".into(),
        pass: Some(failed == 0),
        outputs,
        table: Some((header, rows)),
    })
}

pub fn replay(a: &ReplayArgs) -> Result<Outcome, CliError> {
    let original = load(&a.manifest)?;
    if original.argv.is_empty() {
        return Err(CliError::Usage(format!("{} records no argument vector to replay", a.manifest.display())));
    }
    let mut cli = Cli::try_parse_from(std::iter::once("sphere-energy".to_string()).chain(original.argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("refusing to replay a replay".into()));
    }
    cli.workers = Some(1);
    let (again, _) = run(&cli, original.argv.clone(), original.seed)?;
    let before = flatten(&original.outputs);
    let after = flatten(&again.outputs);
    let differences: Vec<String> = before
        .iter()
        .zip(after.iter())
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
        .chain((before.len() != after.len()).then(|| "<shape>".to_string()))
        .collect();
    let matches = original.outputs == again.outputs && original.pass == again.pass;
    let outputs = json!({
        "replayed_command": original.command,
        "matches": matches,
        "original_hash": content_hash(&original),
        "replay_hash": content_hash(&again),
        "differences": differences,
        "replay_pass": again.pass,
    });
    let params = json!({"manifest": a.manifest});
    Ok(Outcome {
        params,
        claim: format!("replay of {} reproduces its outputs", original.command),
        pass: Some(matches),
        outputs,
        table: None,
    })
}

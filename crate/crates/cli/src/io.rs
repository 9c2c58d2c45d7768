use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use okd::bench::NamedInstance;
use okd::Instance;
use serde::Deserialize;

/// Reads a file, or standard input for `None` / `-`.
pub fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .context("cannot read standard input")?;
            Ok(s)
        }
    }
}

/// Writes to a file, or standard output for `None` / `-`.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// `prefix.ext`, keeping any directories in `prefix`.
pub fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InstanceDoc {
    One(Instance),
    Many(Vec<Instance>),
    Wrapped { instances: Vec<Instance> },
}

/// Parses one instance, an array of instances, or `{"instances": [...]}`.
pub fn parse_instances(text: &str, origin: &str) -> Result<Vec<Instance>> {
    // Try the plain schema first so its error message is the one reported.
    let single = serde_json::from_str::<Instance>(text);
    if let Ok(inst) = single {
        return Ok(vec![inst]);
    }
    match serde_json::from_str::<InstanceDoc>(text) {
        Ok(InstanceDoc::One(i)) => Ok(vec![i]),
        Ok(InstanceDoc::Many(v)) | Ok(InstanceDoc::Wrapped { instances: v }) => Ok(v),
        Err(_) => {
            let err = single.unwrap_err();
            bail!("{origin}: not a valid instance document: {err}")
        }
    }
}

pub fn load_named(path: Option<&Path>) -> Result<Vec<NamedInstance>> {
    let origin = match path {
        Some(p) if p != Path::new("-") => p.display().to_string(),
        _ => "stdin".to_string(),
    };
    let stem = match path {
        Some(p) if p != Path::new("-") => p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| origin.clone()),
        _ => "stdin".to_string(),
    };
    let insts = parse_instances(&read_input(path)?, &origin)?;
    let single = insts.len() == 1;
    Ok(insts
        .into_iter()
        .enumerate()
        .map(|(i, inst)| {
            let id = if single {
                stem.clone()
            } else {
                format!("{stem}#{i:03}")
            };
            NamedInstance::new(id, inst)
        })
        .collect())
}

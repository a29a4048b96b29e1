//! Input/output targets and per-input parallel execution.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{Context, Result};

pub const STDIO: &str = "-";

pub fn open_input(path: &str) -> Result<Box<dyn BufRead + Send>> {
    if path == STDIO {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("cannot open input '{path}'"))?;
    Ok(Box::new(BufReader::new(file)))
}

/// Where one output stream of one job goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Stdout,
    Stderr,
    File(PathBuf),
    /// Collected in memory and printed after all jobs finish, in input order.
    Buffer,
}

impl Target {
    /// Resolves `--output`-style flags. With one input the flag names a file
    /// (or `-`); with several it names a directory receiving `<stem>.<suffix>`.
    pub fn resolve(flag: Option<&str>, input: &str, multi: bool, suffix: &str, default: Target) -> Result<Target> {
        match flag {
            None | Some(STDIO) if multi && default == Target::Stdout => Ok(Target::Buffer),
            None => Ok(default),
            Some(STDIO) => Ok(Target::Stdout),
            Some(p) if multi => {
                std::fs::create_dir_all(p).with_context(|| format!("cannot create output directory '{p}'"))?;
                Ok(Target::File(Path::new(p).join(format!("{}.{suffix}", stem(input)))))
            }
            Some(p) => Ok(Target::File(PathBuf::from(p))),
        }
    }

    /// Runs `f` against this target; returns buffered bytes for [`Target::Buffer`].
    pub fn write_with<T>(&self, f: impl FnOnce(&mut dyn Write) -> Result<T>) -> Result<(T, Vec<u8>)> {
        match self {
            Target::Stdout => {
                let mut w = BufWriter::new(io::stdout());
                let out = f(&mut w)?;
                w.flush()?;
                Ok((out, Vec::new()))
            }
            Target::Stderr => {
                let mut w = io::stderr();
                let out = f(&mut w)?;
                Ok((out, Vec::new()))
            }
            Target::File(path) => {
                let file = File::create(path).with_context(|| format!("cannot create '{}'", path.display()))?;
                let mut w = BufWriter::new(file);
                let out = f(&mut w)?;
                w.flush().with_context(|| format!("cannot write '{}'", path.display()))?;
                Ok((out, Vec::new()))
            }
            Target::Buffer => {
                let mut buf = Vec::new();
                let out = f(&mut buf)?;
                Ok((out, buf))
            }
        }
    }
}

pub fn stem(input: &str) -> String {
    if input == STDIO {
        return "stdin".into();
    }
    Path::new(input)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Runs `job` for every input on its own thread. Buffered output is printed
/// to stdout in input order; failures are reported per input.
pub fn run_parallel<F>(inputs: &[String], job: F) -> Result<()>
where
    F: Fn(&str, bool) -> Result<Vec<u8>> + Sync,
{
    let multi = inputs.len() > 1;
    if inputs.iter().filter(|i| i.as_str() == STDIO).count() > 1 {
        anyhow::bail!("standard input can be given only once");
    }
    let results: Vec<Result<Vec<u8>>> = thread::scope(|scope| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|input| {
                let job = &job;
                scope.spawn(move || job(input, multi))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("worker thread panicked"))))
            .collect()
    });
    let mut failures = 0;
    let mut stdout = io::stdout().lock();
    for (input, result) in inputs.iter().zip(results) {
        match result {
            Ok(buf) => stdout.write_all(&buf)?,
            Err(e) => {
                failures += 1;
                eprintln!("error: {input}: {e:#}");
            }
        }
    }
    stdout.flush()?;
    if failures > 0 {
        anyhow::bail!("{failures} of {} inputs failed", inputs.len());
    }
    Ok(())
}

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use virtstain_core::{Error, Slide};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(Error::Config(_) | Error::ConfigLines(_) | Error::InvalidArgument(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

/// Entries of `dir` whose file name satisfies `keep`, sorted by name.
pub fn sorted_entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> CliResult<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if keep(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn ppm_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    sorted_entries(dir, |p| p.is_file() && p.extension().is_some_and(|e| e == "ppm"))
}

pub fn load_slides(dir: &Path, limit: Option<usize>) -> CliResult<Vec<Slide>> {
    let files = ppm_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no .ppm files in {}", dir.display())));
    }
    files.iter().take(limit.unwrap_or(usize::MAX)).map(|p| Ok(Slide::load_ppm(p)?)).collect()
}

/// `key value` lines.
pub fn metrics_text(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
}

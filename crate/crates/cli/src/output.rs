use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Core(opachain_core::Error),
    Io { path: PathBuf, source: io::Error },
    Usage(String),
}

impl From<opachain_core::Error> for CliError {
    fn from(e: opachain_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
            CliError::Usage(m) => m.clone(),
        }
    }

    /// Single line, `key=value` pairs, message quoted and escaped.
    pub fn machine_line(&self) -> String {
        format!(
            "error kind={} exit={} message={:?}",
            self.kind(),
            self.exit_code(),
            self.message()
        )
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Files staged by a command. Nothing touches disk until `commit`, and each
/// file is written next to its target and renamed into place.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        if self.files.is_empty() {
            return Ok(Vec::new());
        }
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        for (name, contents) in self.files {
            let target = dir.join(&name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
            fs::rename(&tmp, &target).map_err(|e| CliError::io(&target, e))?;
            written.push(target);
        }
        Ok(written)
    }
}

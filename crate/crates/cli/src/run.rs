use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;

use crate::config::RunConfig;

/// A check ran and did not pass (exit code 1).
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Output directory of one invocation with its config echo and log.
pub struct Run {
    pub dir: PathBuf,
    pub cfg: RunConfig,
    log: File,
}

impl Run {
    pub fn create(out_dir: Option<&Path>, cfg: RunConfig, command: &str) -> anyhow::Result<Self> {
        let dir = match out_dir {
            Some(d) => d.to_path_buf(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                PathBuf::from("runs").join(format!("{secs}-s{}", cfg.seed))
            }
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?).context("writing config echo")?;
        let log = File::create(dir.join("log.txt")).context("creating log")?;
        let mut run = Self { dir, cfg, log };
        run.info(format!("command {command}, seed {}, jobs {}", run.cfg.seed, run.cfg.jobs));
        Ok(run)
    }

    pub fn info(&mut self, msg: impl AsRef<str>) {
        self.line("info", msg.as_ref());
    }

    pub fn warn(&mut self, msg: impl AsRef<str>) {
        self.line("warn", msg.as_ref());
    }

    fn line(&mut self, level: &str, msg: &str) {
        eprintln!("{level}: {msg}");
        let _ = writeln!(self.log, "{level}: {msg}");
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

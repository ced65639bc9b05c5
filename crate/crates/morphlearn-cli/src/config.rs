//! Flat key=value config files. CLI flags override file values.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use morphlearn::datasets::{MorphOp, SEName};
use morphlearn::harness::HarnessConfig;
use morphlearn::LayerKind;

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), lineno + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key {key}={raw}: {e}"),
            },
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|e| anyhow::anyhow!("config key {key}: {e}"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// Merge defaults <- config file <- CLI flags into a harness config plus the
/// scenario lists for matrix runs.
pub struct Merged {
    pub harness: HarnessConfig,
    pub ops: Vec<MorphOp>,
    pub ses: Vec<SEName>,
    pub kinds: Vec<LayerKind>,
}

#[allow(clippy::too_many_arguments)]
pub fn merge(
    file: &FileConfig,
    samples: Option<usize>,
    seed: Option<u64>,
    mnist_dir: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
    full_scale: bool,
    ops: Option<Vec<MorphOp>>,
    ses: Option<Vec<SEName>>,
    kinds: Option<Vec<LayerKind>>,
) -> Result<Merged> {
    let mut harness = HarnessConfig::default();

    if let Some(v) = file.get::<usize>("batch_size")? {
        harness.train.batch_size = v;
    }
    if let Some(v) = file.get::<f64>("initial_lr")? {
        harness.train.initial_lr = v;
    }
    if let Some(v) = file.get::<usize>("plateau_patience_lr")? {
        harness.train.plateau_patience_lr = v;
    }
    if let Some(v) = file.get::<f64>("lr_decay_factor")? {
        harness.train.lr_decay_factor = v;
    }
    if let Some(v) = file.get::<usize>("plateau_patience_stop")? {
        harness.train.plateau_patience_stop = v;
    }
    if let Some(v) = file.get::<usize>("max_epochs")? {
        harness.train.max_epochs = v;
    }
    if let Some(v) = file.get::<u64>("seed")? {
        harness.train.seed = v;
    }
    if let Some(v) = file.get::<usize>("samples")? {
        harness.samples = v;
    }
    if let Some(v) = file.get::<usize>("kernel_side")? {
        harness.kernel_side = v;
    }
    if let Some(v) = file.get::<usize>("workers")? {
        harness.workers = v;
    }
    if let Some(v) = file.get::<PathBuf>("mnist_dir")? {
        harness.mnist_dir = Some(v);
    }
    if let Some(v) = file.get::<PathBuf>("out_dir")? {
        harness.out_dir = Some(v);
    }

    // flags override the file
    if let Some(v) = samples {
        harness.samples = v;
    }
    if let Some(v) = seed {
        harness.train.seed = v;
    }
    if let Some(v) = mnist_dir {
        harness.mnist_dir = Some(v);
    }
    if harness.mnist_dir.is_none() {
        if let Ok(dir) = std::env::var("MNIST_DIR") {
            harness.mnist_dir = Some(PathBuf::from(dir));
        }
    }
    if let Some(v) = out_dir {
        harness.out_dir = Some(v);
    }
    if let Some(v) = workers {
        harness.workers = v;
    }
    if full_scale {
        harness.samples = 60000;
    }

    let ops = match ops {
        Some(v) => v,
        None => file
            .get_list::<MorphOp>("ops")?
            .unwrap_or_else(|| MorphOp::all().to_vec()),
    };
    let ses = match ses {
        Some(v) => v,
        None => file
            .get_list::<SEName>("ses")?
            .unwrap_or_else(|| SEName::all().to_vec()),
    };
    let kinds = match kinds {
        Some(v) => v,
        None => file
            .get_list::<LayerKind>("layers")?
            .unwrap_or_else(|| LayerKind::morphological().to_vec()),
    };

    Ok(Merged {
        harness,
        ops,
        ses,
        kinds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("run.conf");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn file_values_parse_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            "# comment\nbatch_size = 16\ninitial_lr=0.02\nsamples=200\nseed=9\n\
             ops=dilation,erosion\nlayers=smorph\nworkers=2\n",
        );
        let file = FileConfig::load(&path).unwrap();
        let merged = merge(
            &file,
            Some(50), // flag overrides the file's samples=200
            None,
            None,
            None,
            None,
            false,
            None,
            None,
            None,
        )
        .unwrap();
        assert_eq!(merged.harness.train.batch_size, 16);
        assert_eq!(merged.harness.train.initial_lr, 0.02);
        assert_eq!(merged.harness.train.seed, 9);
        assert_eq!(merged.harness.samples, 50);
        assert_eq!(merged.harness.workers, 2);
        assert_eq!(merged.ops, vec![MorphOp::Dilation, MorphOp::Erosion]);
        assert_eq!(merged.kinds, vec![LayerKind::SMorph]);
        assert_eq!(merged.ses.len(), 6); // unspecified: all
    }

    #[test]
    fn malformed_lines_and_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "batch_size\n");
        assert!(FileConfig::load(&path).is_err());
        let path = write_config(dir.path(), "batch_size=lots\n");
        let file = FileConfig::load(&path).unwrap();
        assert!(file.get::<usize>("batch_size").is_err());
    }

    #[test]
    fn full_scale_flag_selects_the_whole_training_set() {
        let merged = merge(
            &FileConfig::default(),
            None,
            None,
            None,
            None,
            None,
            true,
            None,
            None,
            None,
        )
        .unwrap();
        assert_eq!(merged.harness.samples, 60000);
    }
}

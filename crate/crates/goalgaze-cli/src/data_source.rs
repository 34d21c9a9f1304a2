//! Data arguments: either a corpus directory in the binary record format,
//! or a fully offline synthetic spec of the form
//! `synth:seed=42,classes=10,per-class=40,style=standard`.

use anyhow::{bail, Context, Result};
use goalgaze_core::data::synthetic::{gen_synthetic_styled, SynthStyle};
use goalgaze_core::data::{load_corpus, load_corpus_dir, Dataset, Split};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub enum DataSource {
    /// Directory with train.bin/test.bin (or the upstream batch layout).
    Dir(PathBuf),
    /// Single record file.
    File(PathBuf),
    Synth { seed: u64, classes: usize, per_class: usize, style: String },
}

impl DataSource {
    pub fn parse(arg: &str) -> Result<Self> {
        if let Some(rest) = arg.strip_prefix("synth:") {
            let mut seed = 42u64;
            let mut classes = 10usize;
            let mut per_class = 40usize;
            let mut style = "standard".to_string();
            for part in rest.split(',').filter(|p| !p.is_empty()) {
                let (key, value) = part
                    .split_once('=')
                    .with_context(|| format!("bad synth spec component `{part}`"))?;
                match key {
                    "seed" => seed = value.parse().context("synth seed")?,
                    "classes" => classes = value.parse().context("synth classes")?,
                    "per-class" => per_class = value.parse().context("synth per-class")?,
                    "style" => style = value.to_string(),
                    other => bail!("unknown synth key `{other}`"),
                }
            }
            if style != "standard" && style != "hard" {
                bail!("synth style must be `standard` or `hard`, got `{style}`");
            }
            return Ok(DataSource::Synth { seed, classes, per_class, style });
        }
        let path = PathBuf::from(arg);
        if path.is_dir() {
            Ok(DataSource::Dir(path))
        } else if path.is_file() {
            Ok(DataSource::File(path))
        } else {
            bail!("data source `{arg}` is neither a path that exists nor a synth: spec");
        }
    }

    fn style(&self) -> SynthStyle {
        match self {
            DataSource::Synth { style, .. } if style == "hard" => SynthStyle::hard(),
            _ => SynthStyle::standard(),
        }
    }

    /// Load one dataset with the given split tag.
    pub fn load(&self, split: Split) -> Result<Dataset> {
        match self {
            DataSource::Synth { seed, classes, per_class, .. } => Ok(gen_synthetic_styled(
                *seed,
                *classes,
                *per_class,
                self.style(),
                split,
            )?),
            DataSource::File(path) => Ok(load_corpus(path, split, None)?),
            DataSource::Dir(dir) => {
                let (train, test) = load_corpus_dir(dir, None)?;
                Ok(match split {
                    Split::Test => test,
                    _ => train,
                })
            }
        }
    }

    /// Train and test splits. A directory provides both; a synth spec
    /// derives a disjoint test seed; a single file cannot be split.
    pub fn load_train_test(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DataSource::Dir(dir) => Ok(load_corpus_dir(dir, None)?),
            DataSource::Synth { seed, classes, per_class, .. } => {
                let train =
                    gen_synthetic_styled(*seed, *classes, *per_class, self.style(), Split::Train)?;
                let test_seed = goalgaze_core::derive_seed(*seed, &[0x7e57]);
                let test = gen_synthetic_styled(
                    test_seed,
                    *classes,
                    (*per_class + 1) / 2,
                    self.style(),
                    Split::Test,
                )?;
                Ok((train, test))
            }
            DataSource::File(path) => {
                bail!("`{}` is a single record file; train/test loading needs a directory or synth spec", path.display())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataSource::Dir(p) => format!("dir:{}", p.display()),
            DataSource::File(p) => format!("file:{}", p.display()),
            DataSource::Synth { seed, classes, per_class, style } => {
                format!("synth:seed={seed},classes={classes},per-class={per_class},style={style}")
            }
        }
    }
}

pub fn exists_hint(path: &Path) -> String {
    if path.exists() {
        String::new()
    } else {
        format!(" (missing: {})", path.display())
    }
}

//! Binary corpus records, bit-exact: 3073 bytes per record, one u8 class
//! label followed by 1024 R, 1024 G, 1024 B bytes, row-major. A file is a
//! plain concatenation of records.

use super::{Dataset, Split, IMG_LEN, IMG_SIDE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::Read;
use std::path::Path;

pub const RECORD_LEN: usize = 1 + IMG_LEN;

/// Load one record file. Pixels are scaled to [0,1] as byte/255; record
/// order is preserved. `class_names`, when given, also fixes the class
/// count; otherwise names are synthesized from the largest label seen.
pub fn load_corpus(path: &Path, split: Split, class_names: Option<Vec<String>>) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_records(&bytes, split, class_names)
        .map_err(|e| annotate_path(e, path))
}

fn annotate_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

pub fn parse_records(
    bytes: &[u8],
    split: Split,
    class_names: Option<Vec<String>>,
) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::Format { offset: 0, msg: "empty corpus file".into() });
    }
    if bytes.len() % RECORD_LEN != 0 {
        let whole = bytes.len() / RECORD_LEN;
        return Err(Error::Format {
            offset: (whole * RECORD_LEN) as u64,
            msg: format!(
                "file length {} is not a multiple of the {RECORD_LEN}-byte record",
                bytes.len()
            ),
        });
    }
    let m = bytes.len() / RECORD_LEN;
    let mut labels = Vec::with_capacity(m);
    let mut data = Vec::with_capacity(m * IMG_LEN);
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as u32;
        if let Some(names) = &class_names {
            if label as usize >= names.len() {
                return Err(Error::Format {
                    offset: (i * RECORD_LEN) as u64,
                    msg: format!("label {label} exceeds class count {}", names.len()),
                });
            }
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    let names = class_names.unwrap_or_else(|| {
        let n = labels.iter().copied().max().unwrap_or(0) + 1;
        (0..n).map(|c| format!("class_{c}")).collect()
    });
    Dataset::new(
        Tensor::new(vec![m, 3, IMG_SIDE, IMG_SIDE], data)?,
        labels,
        names,
        split,
    )
}

/// Serialize a dataset back into the record format. Pixels are quantized
/// with round-to-nearest; loading a saved file and saving it again is
/// byte-identical.
pub fn save_corpus(path: &Path, ds: &Dataset) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = Vec::with_capacity(ds.len() * RECORD_LEN);
    for i in 0..ds.len() {
        if ds.labels[i] > u8::MAX as u32 {
            return Err(Error::config(format!(
                "label {} does not fit the one-byte record label",
                ds.labels[i]
            )));
        }
        out.push(ds.labels[i] as u8);
        out.extend(ds.image(i).iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load train and test splits from a corpus directory. Accepts either the
/// artifact layout (`train.bin` + `test.bin`) or the upstream benchmark
/// layout (`data_batch_1..5.bin` + `test_batch.bin`).
pub fn load_corpus_dir(dir: &Path, class_names: Option<Vec<String>>) -> Result<(Dataset, Dataset)> {
    let own_train = dir.join("train.bin");
    let (train_files, test_file): (Vec<std::path::PathBuf>, std::path::PathBuf) =
        if own_train.exists() {
            (vec![own_train], dir.join("test.bin"))
        } else {
            (
                (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
                dir.join("test_batch.bin"),
            )
        };
    let mut bytes = Vec::new();
    for f in &train_files {
        if !f.exists() {
            return Err(Error::config(format!(
                "corpus directory {} has neither train.bin nor data_batch_*.bin",
                dir.display()
            )));
        }
        std::fs::File::open(f)?.read_to_end(&mut bytes)?;
    }
    let train = parse_records(&bytes, Split::Train, class_names.clone())
        .map_err(|e| annotate_path(e, &train_files[0]))?;
    train.check_classes_nonempty()?;
    let test = load_corpus(&test_file, Split::Test, class_names.or(Some(train.class_names.clone())))?;
    Ok((train, test))
}

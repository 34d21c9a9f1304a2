//! Network checkpoints: a directory of per-parameter-group tensor files
//! plus a JSON manifest listing group names, shapes, frozen flags, the
//! attention slot, and the RNG seed lineage.

use super::{AttentionWeights, NetConfig, Network};
use crate::error::{Error, Result};
use crate::tensor::io;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct GroupEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct AttentionEntry {
    target: Vec<u32>,
    alpha: f64,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: NetConfig,
    norm: Option<([f64; 3], [f64; 3])>,
    seed_lineage: Vec<String>,
    attention: Option<AttentionEntry>,
    groups: Vec<GroupEntry>,
}

pub fn save(dir: &Path, net: &Network<f32>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut groups = Vec::new();
    for name in net.group_names() {
        let t = net
            .group_tensor(&name)
            .ok_or_else(|| Error::state(format!("unknown group {name}")))?;
        let file = format!("{name}.ggtn");
        io::save_tensor(&dir.join(&file), t)?;
        groups.push(GroupEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            frozen: net.is_frozen(&name),
            file,
        });
    }
    let attention = match &net.attention {
        Some(a) => {
            let file = "attention.w.ggtn".to_string();
            io::save_tensor(&dir.join(&file), a.tensor())?;
            Some(AttentionEntry { target: a.target.clone(), alpha: a.alpha, file })
        }
        None => None,
    };
    let manifest = Manifest {
        format: "goalgaze-checkpoint".into(),
        version: 1,
        config: net.cfg.clone(),
        norm: net.norm,
        seed_lineage: net.seed_lineage.clone(),
        attention,
        groups,
    };
    let f = std::io::BufWriter::new(std::fs::File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Network<f32>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::config(format!("no checkpoint manifest at {}", manifest_path.display())));
    }
    let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(&manifest_path)?,
    ))?;
    if manifest.format != "goalgaze-checkpoint" || manifest.version != 1 {
        return Err(Error::config(format!(
            "unsupported checkpoint format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let mut net = Network::<f32>::init(manifest.config, 0)?;
    net.norm = manifest.norm;
    net.seed_lineage = manifest.seed_lineage;
    for entry in &manifest.groups {
        let t = io::load_tensor(&dir.join(&entry.file))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::dim(format!(
                "group {}: manifest says {:?} but file holds {:?}",
                entry.name,
                entry.shape,
                t.shape()
            )));
        }
        let dst = net
            .group_tensor_mut(&entry.name)
            .ok_or_else(|| Error::config(format!("manifest group {} not in architecture", entry.name)))?;
        if dst.shape() != t.shape() {
            return Err(Error::dim(format!(
                "group {}: architecture expects {:?}, file holds {:?}",
                entry.name,
                dst.shape(),
                t.shape()
            )));
        }
        *dst = t;
        net.set_frozen(&entry.name, entry.frozen);
    }
    if let Some(a) = &manifest.attention {
        let w = io::load_tensor(&dir.join(&a.file))?;
        net.attention = Some(AttentionWeights::from_tensor(w, a.target.clone(), a.alpha)?);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetConfig;

    #[test]
    fn checkpoint_round_trips_weights_flags_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let mut net = Network::<f32>::init(NetConfig::tiny(4), 42).unwrap();
        net.freeze_all();
        net.set_frozen("head.fc2", false);
        net.norm = Some(([0.5, 0.4, 0.3], [0.2, 0.2, 0.25]));
        net.seed_lineage.push("pretrain:42".into());
        net.attention = Some(AttentionWeights::identity(net.cfg.attention_filters(), vec![1], 0.5));
        save(dir.path(), &net).unwrap();

        let back = load(dir.path()).unwrap();
        assert_eq!(back.cfg, net.cfg);
        assert_eq!(back.norm, net.norm);
        assert_eq!(back.seed_lineage, net.seed_lineage);
        assert!(back.is_frozen("block1.conv1.kernel"));
        assert!(!back.is_frozen("head.fc2.weight"));
        for name in net.group_names() {
            assert_eq!(
                net.group_tensor(&name).unwrap().data(),
                back.group_tensor(&name).unwrap().data(),
                "group {name}"
            );
        }
        let (a, b) = (net.attention.unwrap(), back.attention.unwrap());
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.target, b.target);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn load_missing_manifest_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load(dir.path()).is_err());
    }
}

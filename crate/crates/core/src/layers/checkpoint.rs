//! Checkpoint directories: `network.net` (the spec), `manifest.txt`
//! (parameter names, roles and shapes) and `tensors.bin` (the parameters as
//! consecutive WIGT records, in manifest order).

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::init::InitPolicy;
use crate::tensor::{serial, Element};

use super::network::Network;
use super::spec::NetworkSpec;

const MANIFEST_HEADER: &str = "wig-checkpoint 1";

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn save_checkpoint<T: Element>(dir: &Path, net: &Network<T>) -> Result<()> {
    fsutil::create_dir_all(dir)?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    let mut blob = Vec::new();
    for p in net.params() {
        manifest.push_str(&format!(
            "{} {} {} {}\n",
            p.name,
            p.role.name(),
            shape_text(p.value.shape()),
            T::PRECISION.name()
        ));
        serial::write(&mut blob, &p.value)?;
    }
    fsutil::write_atomic(&dir.join("tensors.bin"), &blob)?;
    fsutil::write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())?;
    fsutil::write_atomic(&dir.join("network.net"), net.spec().to_string().as_bytes())
}

pub fn read_checkpoint_spec(dir: &Path) -> Result<NetworkSpec> {
    fsutil::read_to_string(&dir.join("network.net"))?.parse()
}

/// Loads a checkpoint written by [`save_checkpoint`]. Every stored tensor
/// must match the name and shape the spec implies.
pub fn load_checkpoint<T: Element>(dir: &Path) -> Result<Network<T>> {
    let spec = read_checkpoint_spec(dir)?;
    let mut net = Network::<T>::build(&spec, 0, InitPolicy::scratch())?;
    let manifest = fsutil::read_to_string(&dir.join("manifest.txt"))?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Config(format!(
            "{}: not a checkpoint manifest",
            dir.join("manifest.txt").display()
        )));
    }
    let entries: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    let expected: Vec<String> = net
        .params()
        .iter()
        .map(|p| format!("{} {}", p.name, shape_text(p.value.shape())))
        .collect();
    let found: Vec<String> = entries
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            format!("{} {}", f.first().unwrap_or(&""), f.get(2).unwrap_or(&""))
        })
        .collect();
    if expected != found {
        return Err(Error::Config(format!(
            "checkpoint does not match its network spec; expected parameters [{}], found [{}]",
            expected.join(", "),
            found.join(", ")
        )));
    }
    let blob = fsutil::read(&dir.join("tensors.bin"))?;
    let mut cursor = Cursor::new(blob.as_slice());
    let mut values = Vec::with_capacity(expected.len());
    for _ in 0..expected.len() {
        let offset = cursor.position();
        values.push(serial::read_at::<T, _>(&mut cursor, offset)?);
    }
    if cursor.position() != blob.len() as u64 {
        return Err(Error::format(
            cursor.position(),
            "trailing bytes after last tensor",
        ));
    }
    net.set_param_values(values)?;
    Ok(net)
}

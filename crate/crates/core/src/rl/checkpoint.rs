//! Policy checkpoints: a text manifest followed by raw little-endian f64s.
//!
//! ```text
//! qfc-ckpt-1
//! scenario mbs
//! observation full-state
//! obs_dim 9
//! hidden 64,64,64
//! lstm_hidden none
//! stop_head false
//! tensor pi.mlp.0.weight 64x9
//! ...
//! end
//! <blob>
//! ```
//!
//! Tensors appear in layout order and the blob holds them back to back.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::policy::{ActorCritic, Architecture};
use crate::controllers::ObservationKind;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "qfc-ckpt-1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    /// Free-form label of the training scenario.
    pub scenario: String,
    pub net: ActorCritic,
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn to_bytes(scenario: &str, net: &ActorCritic) -> Vec<u8> {
    let arch = net.architecture();
    let mut head = String::new();
    head.push_str(CHECKPOINT_VERSION);
    head.push('\n');
    head.push_str(&format!("scenario {scenario}\n"));
    head.push_str(&format!("observation {}\n", arch.observation.name()));
    head.push_str(&format!("obs_dim {}\n", arch.obs_dim));
    let hidden: Vec<String> = arch.hidden.iter().map(|h| h.to_string()).collect();
    head.push_str(&format!("hidden {}\n", hidden.join(",")));
    head.push_str(&format!(
        "lstm_hidden {}\n",
        arch.lstm_hidden.map_or_else(|| "none".to_string(), |h| h.to_string())
    ));
    head.push_str(&format!("stop_head {}\n", arch.stop_head));
    for t in net.layout().tensors() {
        head.push_str(&format!("tensor {} {}\n", t.name, shape_str(&t.shape)));
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for v in net.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save(path: &Path, scenario: &str, net: &ActorCritic) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&to_bytes(scenario, net))?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::Checkpoint(format!("missing {key}")))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Checkpoint(format!("expected `{key} ...`, found {line:?}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("bad {what}: {s:?}")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let marker = b"\nend\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Checkpoint("manifest terminator not found".into()))?;
    let head = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::Checkpoint("manifest is not utf-8".into()))?;
    let blob = &bytes[end + marker.len()..];
    let mut lines = head.lines();
    let version = lines.next().unwrap_or_default();
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version:?}")));
    }
    let scenario = field(lines.next(), "scenario")?.to_string();
    let observation = match field(lines.next(), "observation")? {
        "full-state" => ObservationKind::FullState,
        "outcome-pair" => ObservationKind::OutcomePair,
        other => return Err(Error::Checkpoint(format!("unknown observation {other:?}"))),
    };
    let obs_dim = parse_usize(field(lines.next(), "obs_dim")?, "obs_dim")?;
    let hidden_s = field(lines.next(), "hidden")?;
    let hidden = if hidden_s.is_empty() {
        Vec::new()
    } else {
        hidden_s
            .split(',')
            .map(|h| parse_usize(h, "hidden"))
            .collect::<Result<_>>()?
    };
    let lstm_hidden = match field(lines.next(), "lstm_hidden")? {
        "none" => None,
        h => Some(parse_usize(h, "lstm_hidden")?),
    };
    let stop_head = match field(lines.next(), "stop_head")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Checkpoint(format!("bad stop_head {other:?}"))),
    };
    let arch = Architecture {
        observation,
        obs_dim,
        hidden,
        lstm_hidden,
        stop_head,
    };
    let template = ActorCritic::zeroed(arch.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected = template.layout().tensors();
    let listed: Vec<&str> = lines.collect();
    if listed.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, architecture has {}",
            listed.len(),
            expected.len()
        )));
    }
    for (line, spec) in listed.iter().zip(expected) {
        let want = format!("tensor {} {}", spec.name, shape_str(&spec.shape));
        if *line != want {
            return Err(Error::Checkpoint(format!("expected {want:?}, found {line:?}")));
        }
    }
    let n = template.layout().len();
    if blob.len() != 8 * n {
        return Err(Error::Checkpoint(format!(
            "blob has {} bytes, expected {}",
            blob.len(),
            8 * n
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let net = ActorCritic::from_params(arch, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(Checkpoint { scenario, net })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

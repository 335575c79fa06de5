//! Binary weight files: `DQN1`, three little-endian u32 layer sizes
//! (input, hidden, output), then the flat parameters as little-endian f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::QNetwork;
use crate::error::{Error, Result};
use crate::mlp::{Architecture, ModelParams};

const MAGIC: &[u8; 4] = b"DQN1";

pub fn encode(net: &QNetwork) -> Vec<u8> {
    let p = net.params();
    let arch = p.arch();
    let mut out = Vec::with_capacity(16 + 8 * arch.param_count());
    out.extend_from_slice(MAGIC);
    for d in [arch.input, arch.hidden, arch.output] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in p.flat_view() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<QNetwork> {
    if bytes.len() < 16 {
        return Err(Error::TruncatedFile("weight header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            found: u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")),
            expected: u32::from_be_bytes(*MAGIC),
        });
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let arch = Architecture::new(dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != 8 * arch.param_count() {
        return Err(Error::TruncatedFile(format!(
            "expected {} parameter bytes, found {}",
            8 * arch.param_count(),
            body.len()
        )));
    }
    let flat = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(QNetwork::new(ModelParams::from_flat(arch, flat)?))
}

pub fn save(net: &QNetwork, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<QNetwork> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn round_trip_and_layout() {
        let net = QNetwork::random(Architecture::new(3, 4, 2), &mut substream(0, Stream::ModelInit));
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"DQN1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 8 * 26);
        assert_eq!(decode(&bytes).unwrap().params(), net.params());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.bin");
        save(&net, &path).unwrap();
        assert_eq!(load(&path).unwrap().params(), net.params());
    }

    #[test]
    fn rejects_bad_files() {
        let net = QNetwork::random(Architecture::new(2, 2, 2), &mut substream(0, Stream::ModelInit));
        let mut bytes = encode(&net);
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::TruncatedFile(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadMagic { .. })));
    }
}

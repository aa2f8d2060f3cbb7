//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        7 bytes   "DYADNN1"
//! version      u32       1
//! name         u32 length + UTF-8 bytes
//! input_size   u32
//! hidden       u32 count + count × u32
//! lstm_first   u8 (0/1)
//! output_size  u32
//! l2_enabled   u8 (0/1)
//! dropout      f64
//! lr           f64
//! epochs       u32
//! standardizer u8 (0/1), then 16 × f64 mean and 16 × f64 std when present
//! n_params     u64
//! params       n_params × f64 in Network::param_blocks order
//! ```

use std::fs;
use std::path::Path;

use super::{build, ModelError, Network, NetworkSpec};
use crate::features::{Standardizer, FEATURE_DIM};

pub const MAGIC: &[u8; 7] = b"DYADNN1";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize32(&mut self, v: usize) -> Result<(), ModelError> {
        let v = u32::try_from(v)
            .map_err(|_| ModelError::InvalidSpec(format!("{v} does not fit the model format")))?;
        self.u32(v);
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ModelError::CorruptModelFile(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }
    fn u8(&mut self, what: &str) -> Result<u8, ModelError> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &str) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self, what: &str) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn flag(&mut self, what: &str) -> Result<bool, ModelError> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(ModelError::CorruptModelFile(format!("{what} flag is {v}"))),
        }
    }
}

pub fn model_to_bytes(n: &Network) -> Result<Vec<u8>, ModelError> {
    let spec = n.spec();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.usize32(spec.name.len())?;
    w.0.extend_from_slice(spec.name.as_bytes());
    w.usize32(spec.input_size)?;
    w.usize32(spec.hidden_sizes.len())?;
    for &h in &spec.hidden_sizes {
        w.usize32(h)?;
    }
    w.u8(u8::from(spec.first_hidden_is_lstm));
    w.usize32(spec.output_size)?;
    w.u8(u8::from(spec.l2_enabled));
    w.f64(spec.dropout_rate);
    w.f64(spec.learning_rate);
    w.usize32(spec.epochs)?;
    match n.standardizer() {
        Some(s) => {
            w.u8(1);
            s.mean.iter().chain(&s.std).for_each(|&v| w.f64(v));
        }
        None => w.u8(0),
    }
    let params = n.params_flat();
    w.u64(params.len() as u64);
    for v in params {
        w.f64(v);
    }
    Ok(w.0)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Network, ModelError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(ModelError::CorruptModelFile("bad magic, not a model file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(ModelError::CorruptModelFile(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let name_len = r.u32("name length")? as usize;
    let name = String::from_utf8(r.take(name_len, "name")?.to_vec())
        .map_err(|_| ModelError::CorruptModelFile("model name is not UTF-8".into()))?;
    let input_size = r.u32("input size")? as usize;
    let n_hidden = r.u32("hidden count")? as usize;
    // Bound the allocation by what the remaining bytes could possibly hold.
    if n_hidden > bytes.len() / 4 {
        return Err(ModelError::CorruptModelFile(format!("{n_hidden} hidden layers")));
    }
    let hidden_sizes = (0..n_hidden)
        .map(|_| r.u32("hidden size").map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let first_hidden_is_lstm = r.flag("lstm")?;
    let output_size = r.u32("output size")? as usize;
    let l2_enabled = r.flag("l2")?;
    let dropout_rate = r.f64("dropout")?;
    let learning_rate = r.f64("learning rate")?;
    let epochs = r.u32("epochs")? as usize;
    let spec = NetworkSpec {
        name,
        input_size,
        hidden_sizes,
        first_hidden_is_lstm,
        output_size,
        l2_enabled,
        dropout_rate,
        learning_rate,
        epochs,
    };
    spec.validate()
        .map_err(|e| ModelError::CorruptModelFile(format!("stored spec is invalid: {e}")))?;

    let standardizer = if r.flag("standardizer")? {
        let mut s = Standardizer::identity();
        for k in 0..FEATURE_DIM {
            s.mean[k] = r.f64("standardizer mean")?;
        }
        for k in 0..FEATURE_DIM {
            s.std[k] = r.f64("standardizer std")?;
        }
        Some(s)
    } else {
        None
    };

    let n_params = r.u64("parameter count")?;
    let expected = spec.param_count() as u64;
    if n_params != expected {
        return Err(ModelError::CorruptModelFile(format!(
            "{n_params} parameters stored, spec implies {expected}"
        )));
    }
    let raw = r.take(8 * expected as usize, "parameters")?;
    if r.pos != bytes.len() {
        return Err(ModelError::CorruptModelFile(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut net = build(&spec, 0)?;
    net.set_params_flat(&params)?;
    net.set_standardizer(standardizer);
    Ok(net)
}

pub fn save_model(n: &Network, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, model_to_bytes(n)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network, ModelError> {
    model_from_bytes(&fs::read(path)?)
}

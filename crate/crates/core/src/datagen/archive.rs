//! On-disk dataset format.
//!
//! Each split is a little-endian binary file: magic, version, a JSON header,
//! then one record per state. A sibling JSON manifest summarizes the dataset.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Family, GenParams, LabeledState};
use crate::error::{Result, WitnessError};
use crate::fock::{CMatrix, DensityMatrix, ModeShape};

pub const MAGIC: &[u8; 8] = b"CVWDSET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHeader {
    pub format_version: u32,
    pub split: String,
    pub num_modes: usize,
    pub cutoff: usize,
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativitySummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub num_modes: usize,
    pub cutoff: usize,
    pub seed: u64,
    pub family_weights: BTreeMap<String, f64>,
    pub split_sizes: BTreeMap<String, usize>,
    pub family_counts: BTreeMap<String, usize>,
    pub label_counts: BTreeMap<String, usize>,
    /// Max-over-splits negativity of the entangled samples.
    pub entangled_negativity: Option<NegativitySummary>,
}

impl DatasetManifest {
    pub fn from_dataset(ds: &DatasetSplit) -> Self {
        let mut family_counts = BTreeMap::new();
        let mut label_counts = BTreeMap::new();
        let mut negs = Vec::new();
        for s in ds.all() {
            *family_counts.entry(s.family.name().to_string()).or_insert(0) += 1;
            *label_counts.entry(s.label.to_string()).or_insert(0) += 1;
            if s.label == 1 {
                negs.push(s.max_negativity());
            }
        }
        let entangled_negativity = (!negs.is_empty()).then(|| NegativitySummary {
            min: negs.iter().copied().fold(f64::INFINITY, f64::min),
            mean: negs.iter().sum::<f64>() / negs.len() as f64,
            max: negs.iter().copied().fold(0.0, f64::max),
        });
        Self {
            format_version: FORMAT_VERSION,
            num_modes: ds.shape.num_modes,
            cutoff: ds.shape.cutoff,
            seed: ds.seed,
            family_weights: ds.family_weights.iter().map(|(f, w)| (f.name().to_string(), *w)).collect(),
            split_sizes: ds.splits().iter().map(|(n, v)| (n.to_string(), v.len())).collect(),
            family_counts,
            label_counts,
            entangled_negativity,
        }
    }
}

fn format_err(msg: impl Into<String>) -> WitnessError {
    WitnessError::Format(msg.into())
}

/// Writes one split in the binary record format.
pub fn write_split<W: Write>(
    out: &mut W,
    name: &str,
    states: &[LabeledState],
    shape: &ModeShape,
    seed: u64,
) -> Result<()> {
    let header = SplitHeader {
        format_version: FORMAT_VERSION,
        split: name.to_string(),
        num_modes: shape.num_modes,
        cutoff: shape.cutoff,
        seed,
        count: states.len(),
    };
    let header_json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(header_json.len() as u32).to_le_bytes())?;
    out.write_all(&header_json)?;
    for s in states {
        if s.rho.shape() != *shape {
            return Err(WitnessError::Shape("state shape differs from split shape".into()));
        }
        out.write_all(&[s.label, s.family.code()])?;
        out.write_all(&(s.gen_params.len() as u16).to_le_bytes())?;
        for (k, v) in &s.gen_params {
            out.write_all(&(k.len() as u16).to_le_bytes())?;
            out.write_all(k.as_bytes())?;
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&[s.negativities.len() as u8])?;
        for v in &s.negativities {
            out.write_all(&v.to_le_bytes())?;
        }
        let dim = shape.total_dim();
        out.write_all(&(dim as u32).to_le_bytes())?;
        let m = s.rho.matrix();
        for i in 0..dim {
            for j in 0..dim {
                out.write_all(&m[(i, j)].re.to_le_bytes())?;
                out.write_all(&m[(i, j)].im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| format_err(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

/// Reads a split written by [`write_split`].
pub fn read_split<R: Read>(input: R) -> Result<(SplitHeader, Vec<LabeledState>)> {
    let mut c = Cursor { inner: input };
    if c.bytes(8)?.as_slice() != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let hlen = c.u32()? as usize;
    let header: SplitHeader = serde_json::from_slice(&c.bytes(hlen)?)?;
    let shape = ModeShape::new(header.num_modes, header.cutoff)?;
    let dim = shape.total_dim();
    let mut states = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let label = c.u8()?;
        if label > 1 {
            return Err(format_err(format!("invalid label {label}")));
        }
        let family = Family::from_code(c.u8()?).ok_or_else(|| format_err("unknown family code"))?;
        let mut gen_params = GenParams::new();
        for _ in 0..c.u16()? {
            let len = c.u16()? as usize;
            let key = String::from_utf8(c.bytes(len)?).map_err(|_| format_err("non-utf8 name"))?;
            gen_params.insert(key, c.f64()?);
        }
        let n_splits = c.u8()? as usize;
        let negativities = (0..n_splits).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        if c.u32()? as usize != dim {
            return Err(format_err("record dimension differs from header"));
        }
        let mut m = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let re = c.f64()?;
                let im = c.f64()?;
                m[(i, j)] = Complex64::new(re, im);
            }
        }
        states.push(LabeledState {
            rho: DensityMatrix::from_matrix(m, shape)?,
            label,
            family,
            gen_params,
            negativities,
        });
    }
    Ok((header, states))
}

/// Writes `train.bin`, `validation.bin`, `test.bin` and `manifest.json` into `dir`.
pub fn save_dataset(ds: &DatasetSplit, dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    for (name, states) in ds.splits() {
        let mut w = BufWriter::new(File::create(dir.join(format!("{name}.bin")))?);
        write_split(&mut w, name, states, &ds.shape, ds.seed)?;
        w.flush()?;
    }
    let manifest = DatasetManifest::from_dataset(ds);
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
    let shape = ModeShape::new(manifest.num_modes, manifest.cutoff)?;
    let mut parts = Vec::new();
    for name in ["train", "validation", "test"] {
        let (header, states) = read_split(BufReader::new(File::open(dir.join(format!("{name}.bin")))?))?;
        if header.num_modes != shape.num_modes || header.cutoff != shape.cutoff {
            return Err(format_err(format!("{name} split shape disagrees with manifest")));
        }
        parts.push(states);
    }
    let test = parts.pop().unwrap();
    let validation = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    let family_weights = manifest
        .family_weights
        .iter()
        .filter_map(|(n, w)| Family::from_name(n).map(|f| (f, *w)))
        .collect();
    Ok(DatasetSplit { train, validation, test, seed: manifest.seed, shape, family_weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_dataset, GenerationSettings};

    #[test]
    fn roundtrip_is_bit_exact() {
        let shape = ModeShape::new(2, 3).unwrap();
        let ds = build_dataset(30, &shape, 9, &GenerationSettings::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(manifest.label_counts["1"], 15);
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.test, ds.test);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(matches!(read_split(&b"NOTMAGIC"[..]), Err(WitnessError::Format(_))));
        let shape = ModeShape::new(2, 2).unwrap();
        let mut buf = Vec::new();
        write_split(&mut buf, "x", &[], &shape, 0).unwrap();
        buf[8] = 7;
        assert!(read_split(buf.as_slice()).is_err());
    }
}

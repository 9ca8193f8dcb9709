//! Snapshot files: raw little-endian f64 payload plus a JSON sidecar.
//!
//! Components are stored one after another, each in grid order, so the payload of a
//! field with `c` components on an `n^d` grid is exactly `n^d * c * 8` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constitutive::ModelParams;
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, ScalarField, SymTensorField, VectorField};
use crate::tensor::sym_len;

pub const FORMAT_VERSION: u32 = 1;
pub const BYTE_ORDER: &str = "little";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub field_name: String,
    pub component_count: usize,
    pub time: f64,
    pub byte_order: String,
    pub format_version: u32,
}

impl SnapshotHeader {
    pub fn for_field(field: &Field, name: &str, time: f64) -> Self {
        let grid = field_grid(field);
        SnapshotHeader {
            dim: grid.dim(),
            n: grid.n(),
            length: grid.length(),
            field_name: name.to_string(),
            component_count: components(field).len(),
            time,
            byte_order: BYTE_ORDER.into(),
            format_version: FORMAT_VERSION,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.n.pow(self.dim as u32) * self.component_count * 8
    }
}

fn components(field: &Field) -> &[ScalarField] {
    match field {
        Field::Scalar(f) => std::slice::from_ref(f),
        Field::Vector(v) => &v.comps,
        Field::SymTensor(t) => &t.comps,
    }
}

fn field_grid(field: &Field) -> &Grid {
    components(field)[0].grid()
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (payload) and `path` with a `.json` extension (header).
pub fn write_snapshot(field: &Field, header: &SnapshotHeader, path: &Path) -> Result<()> {
    let comps = components(field);
    let grid = field_grid(field);
    if header.dim != grid.dim()
        || header.n != grid.n()
        || header.length != grid.length()
        || header.component_count != comps.len()
    {
        return Err(Error::Format(format!(
            "header {header:?} does not describe a {}-component field on {grid:?}",
            comps.len()
        )));
    }
    if header.byte_order != BYTE_ORDER || header.format_version != FORMAT_VERSION {
        return Err(Error::Format("only little-endian format version 1 can be written".into()));
    }
    let mut bytes = Vec::with_capacity(header.payload_len());
    for c in comps {
        for v in c.values().iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &bytes)?;
    let json = serde_json::to_string_pretty(header).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(sidecar(path), json)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Field)> {
    let text = fs::read_to_string(sidecar(path))?;
    let header: SnapshotHeader =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("bad snapshot header: {e}")))?;
    if header.byte_order != BYTE_ORDER {
        return Err(Error::Format(format!(
            "byte order `{}` is not supported, expected `{BYTE_ORDER}`",
            header.byte_order
        )));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unknown format version {}", header.format_version)));
    }
    let grid = Grid::new(header.dim, header.n, header.length).map_err(|e| Error::Format(e.to_string()))?;
    let bytes = fs::read(path)?;
    if bytes.len() != header.payload_len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            bytes.len(),
            header.payload_len()
        )));
    }
    let per = grid.len();
    let mut comps = Vec::with_capacity(header.component_count);
    for c in 0..header.component_count {
        let vals = bytes[c * per * 8..(c + 1) * per * 8]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        comps.push(ScalarField::from_values(&grid, vals));
    }
    let d = header.dim;
    let field = match header.component_count {
        1 => Field::Scalar(comps.pop().expect("one component")),
        c if c == d => Field::Vector(VectorField { comps }),
        c if c == sym_len(d) => Field::SymTensor(SymTensorField { comps }),
        c => return Err(Error::Format(format!("{c} components do not form a field in {d}D"))),
    };
    Ok((header, field))
}

const PARAMS_FILE: &str = "params.json";

/// Writes `rho`, `u`, `eta`, `T` and the model parameters into `dir`.
pub fn write_state(dir: &Path, state: &State) -> Result<()> {
    fs::create_dir_all(dir)?;
    let fields = [
        ("rho", Field::Scalar(state.rho.clone())),
        ("u", Field::Vector(state.u.clone())),
        ("eta", Field::Scalar(state.eta.clone())),
        ("T", Field::SymTensor(state.stress.clone())),
    ];
    for (name, f) in &fields {
        let h = SnapshotHeader::for_field(f, name, state.time);
        write_snapshot(f, &h, &dir.join(format!("{name}.bin")))?;
    }
    let params = serde_json::to_string_pretty(&state.params).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(PARAMS_FILE), params)?;
    Ok(())
}

pub fn read_state(dir: &Path) -> Result<State> {
    let params: ModelParams = serde_json::from_str(&fs::read_to_string(dir.join(PARAMS_FILE))?)
        .map_err(|e| Error::Format(format!("bad parameter file: {e}")))?;
    let read = |name: &str| read_snapshot(&dir.join(format!("{name}.bin")));
    let (h, rho) = read("rho")?;
    let (_, u) = read("u")?;
    let (_, eta) = read("eta")?;
    let (_, t) = read("T")?;
    match (rho, u, eta, t) {
        (Field::Scalar(rho), Field::Vector(u), Field::Scalar(eta), Field::SymTensor(t)) => {
            State::new(h.time, rho, u, eta, t, params)
        }
        _ => Err(Error::Format(format!("snapshot set in {} has unexpected field shapes", dir.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_smooth_field;

    #[test]
    fn scalar_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::periodic(2, 16).unwrap();
        let f = Field::Scalar(random_smooth_field(&g, 3, 2.0, 1.0, None).map(|v| v * 1e-7 + 1.0 / 3.0));
        let h = SnapshotHeader::for_field(&f, "rho", 0.25);
        let p = dir.path().join("rho.bin");
        write_snapshot(&f, &h, &p).unwrap();
        let (h2, f2) = read_snapshot(&p).unwrap();
        assert_eq!(h, h2);
        match (&f, &f2) {
            (Field::Scalar(a), Field::Scalar(b)) => {
                let (a, b) = (a.values(), b.values());
                assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            _ => panic!("shape changed"),
        }
    }

    #[test]
    fn truncated_payload_and_foreign_byte_order_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::periodic(2, 8).unwrap();
        let f = Field::Vector(VectorField::zeros(&g));
        let h = SnapshotHeader::for_field(&f, "u", 0.0);
        let p = dir.path().join("u.bin");
        write_snapshot(&f, &h, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Format(_))));

        fs::write(&p, &bytes).unwrap();
        let mut big = h.clone();
        big.byte_order = "big".into();
        fs::write(sidecar(&p), serde_json::to_string(&big).unwrap()).unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Format(_))));

        let mut wrong = h;
        wrong.component_count = 3;
        assert!(matches!(write_snapshot(&f, &wrong, &p), Err(Error::Format(_))));
    }
}

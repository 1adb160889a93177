//! Binary field dumps.
//!
//! Layout (little-endian): magic `SEMMHD01`, version `u32`, `Ex Ey Ez N E` as
//! `u32`, per element the bounds `x0 x1 y0 y1 z0 z1` as `f64`, the field count
//! `u32`, each name as `u32` length plus UTF-8 bytes, then every field's values
//! in `(element, k, j, i)` order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{MhdError, Result};
use crate::field::VectorField;
use crate::mesh::BoxMesh;
use crate::stepper::MhdState;

pub const MAGIC: &[u8; 8] = b"SEMMHD01";
pub const VERSION: u32 = 1;

pub const STATE_FIELDS: [&str; 8] = ["u_x", "u_y", "u_z", "B_x", "B_y", "B_z", "p", "q"];

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub counts: [u32; 3],
    pub order: u32,
    pub n_elements: u32,
    /// `[x0, x1, y0, y1, z0, z1]` per element.
    pub bounds: Vec<[f64; 6]>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl FieldDump {
    pub fn from_state(mesh: &BoxMesh, state: &MhdState) -> Self {
        let bounds = (0..mesh.n_elements())
            .map(|e| {
                let b = mesh.bounds(e);
                [b[0][0], b[0][1], b[1][0], b[1][1], b[2][0], b[2][1]]
            })
            .collect();
        let data: [&Vec<f64>; 8] = [
            &state.u.x, &state.u.y, &state.u.z, &state.b.x, &state.b.y, &state.b.z, &state.p, &state.q,
        ];
        FieldDump {
            counts: mesh.counts.map(|c| c as u32),
            order: mesh.order as u32,
            n_elements: mesh.n_elements() as u32,
            bounds,
            fields: STATE_FIELDS
                .iter()
                .zip(data)
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect(),
        }
    }

    pub fn field(&self, name: &str) -> Result<&[f64]> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| MhdError::UnknownField(name.to_string()))
    }

    /// Rebuild an `MhdState` (no lagged history) from the eight state fields.
    pub fn to_state(&self, time: f64) -> Result<MhdState> {
        let get = |n: &str| self.field(n).map(|v| v.to_vec());
        let u = VectorField::from_components([get("u_x")?, get("u_y")?, get("u_z")?]);
        let b = VectorField::from_components([get("B_x")?, get("B_y")?, get("B_z")?]);
        let mut s = MhdState::new(u, b);
        s.p = get("p")?;
        s.q = get("q")?;
        s.time = time;
        Ok(s)
    }

    fn points_per_field(&self) -> usize {
        let n1 = self.order as usize + 1;
        self.n_elements as usize * n1 * n1 * n1
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let ppf = self.points_per_field();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [
            self.counts[0],
            self.counts[1],
            self.counts[2],
            self.order,
            self.n_elements,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for b in &self.bounds {
            for v in b {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&(self.fields.len() as u32).to_le_bytes())?;
        for (name, _) in &self.fields {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        for (name, values) in &self.fields {
            if values.len() != ppf {
                return Err(MhdError::InvalidExtent(format!(
                    "field {name} has {} values, expected {ppf}",
                    values.len()
                )));
            }
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(MhdError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(MhdError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let counts = [read_u32(r)?, read_u32(r)?, read_u32(r)?];
        let order = read_u32(r)?;
        let n_elements = read_u32(r)?;
        let mut bounds = Vec::with_capacity(n_elements as usize);
        for _ in 0..n_elements {
            let mut b = [0.0; 6];
            for v in &mut b {
                *v = read_f64(r)?;
            }
            bounds.push(b);
        }
        let n_fields = read_u32(r)?;
        let mut names = Vec::with_capacity(n_fields as usize);
        for _ in 0..n_fields {
            let len = read_u32(r)? as usize;
            let mut bytes = vec![0u8; len];
            read_exact(r, &mut bytes)?;
            names.push(String::from_utf8(bytes).map_err(|_| MhdError::Truncated)?);
        }
        let mut dump = FieldDump {
            counts,
            order,
            n_elements,
            bounds,
            fields: Vec::new(),
        };
        let ppf = dump.points_per_field();
        for name in names {
            let mut bytes = vec![0u8; ppf * 8];
            read_exact(r, &mut bytes)?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            dump.fields.push((name, values));
        }
        Ok(dump)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => MhdError::Truncated,
        _ => MhdError::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_field_dump(mesh: &BoxMesh, state: &MhdState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    FieldDump::from_state(mesh, state).write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<FieldDump> {
    FieldDump::read_from(&mut BufReader::new(File::open(path)?))
}

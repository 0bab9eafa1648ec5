//! The orbit file: a small self-describing binary checkpoint.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic       4  b"PDOR"
//! version     u32
//! t_lo        f64
//! dt          f64
//! n           u64
//! bc[2]       tag u8 (0 clamped, 1 pinned, 2 free), k i64, omega f64
//! plan_hash   u64
//! s           f64
//! step_count  u64
//! u           n × f64
//! v           n × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pendrot::gradientflow::{BoundaryCondition, Trajectory};

pub const MAGIC: [u8; 4] = *b"PDOR";
pub const VERSION: u32 = 1;

/// A trajectory checkpoint with its relaxation bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitFile {
    pub trajectory: Trajectory,
    pub plan_hash: u64,
    pub s: f64,
    pub step_count: u64,
}

fn bc_tag(bc: BoundaryCondition) -> (u8, i64, f64) {
    match bc {
        BoundaryCondition::ClampedToTorus { k, omega } => (0, k, omega),
        BoundaryCondition::Pinned => (1, 0, 0.0),
        BoundaryCondition::Free => (2, 0, 0.0),
    }
}

fn bc_from(tag: u8, k: i64, omega: f64) -> Result<BoundaryCondition> {
    match tag {
        0 => Ok(BoundaryCondition::ClampedToTorus { k, omega }),
        1 => Ok(BoundaryCondition::Pinned),
        2 => Ok(BoundaryCondition::Free),
        other => bail!("parse error: unknown boundary tag {other}"),
    }
}

pub fn write(path: &Path, orbit: &OrbitFile) -> Result<()> {
    let q = &orbit.trajectory;
    let mut buf = Vec::with_capacity(96 + 16 * q.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&q.t_lo.to_le_bytes());
    buf.extend_from_slice(&q.dt.to_le_bytes());
    buf.extend_from_slice(&(q.len() as u64).to_le_bytes());
    for bc in [q.bc.0, q.bc.1] {
        let (tag, k, omega) = bc_tag(bc);
        buf.push(tag);
        buf.extend_from_slice(&k.to_le_bytes());
        buf.extend_from_slice(&omega.to_le_bytes());
    }
    buf.extend_from_slice(&orbit.plan_hash.to_le_bytes());
    buf.extend_from_slice(&orbit.s.to_le_bytes());
    buf.extend_from_slice(&orbit.step_count.to_le_bytes());
    for w in q.u.iter().chain(q.v.iter()) {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating orbit file {}", path.display()))?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.data.len() {
            bail!(
                "parse error at offset {}: file truncated ({} bytes, need {})",
                self.offset,
                self.data.len(),
                self.offset + n
            );
        }
        let out = &self.data[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read(path: &Path) -> Result<OrbitFile> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening orbit file {}", path.display()))?
        .read_to_end(&mut data)?;
    let mut c = Cursor {
        data: &data,
        offset: 0,
    };
    let magic = c.take(4)?;
    if magic != MAGIC {
        bail!("parse error at offset 0: bad magic {magic:02x?}");
    }
    let version = c.u32()?;
    if version != VERSION {
        bail!("unsupported orbit file version {version} (this build reads {VERSION})");
    }
    let t_lo = c.f64()?;
    let dt = c.f64()?;
    let n = c.u64()? as usize;
    let mut bcs = Vec::with_capacity(2);
    for _ in 0..2 {
        let tag = c.u8()?;
        let k = c.i64()?;
        let omega = c.f64()?;
        bcs.push(bc_from(tag, k, omega)?);
    }
    let plan_hash = c.u64()?;
    let s = c.f64()?;
    let step_count = c.u64()?;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        u.push(c.f64()?);
    }
    for _ in 0..n {
        v.push(c.f64()?);
    }
    if c.offset != data.len() {
        bail!(
            "parse error at offset {}: {} trailing bytes",
            c.offset,
            data.len() - c.offset
        );
    }
    let trajectory = Trajectory::new(t_lo, dt, u, v, (bcs[0], bcs[1]))
        .map_err(|e| anyhow::anyhow!("parse error: {e}"))?;
    Ok(OrbitFile {
        trajectory,
        plan_hash,
        s,
        step_count,
    })
}

/// CSV mirror `(t, u, v)` of a trajectory.
pub fn write_csv(path: &Path, q: &Trajectory) -> Result<()> {
    let mut out = String::from("t,u,v\n");
    for i in 0..q.len() {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            q.time(i),
            q.u[i],
            q.v[i]
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

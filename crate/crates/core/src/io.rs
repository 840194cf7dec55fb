//! File formats.
//!
//! CSV numbers use Rust's shortest round-trip decimal representation, so
//! parsing a written value recovers the identical `f64`.
//!
//! Binary adjacency dump (little-endian):
//!
//! ```text
//! offset  size        field
//! 0       8           magic  b"TWADJ\0\0\x01"
//! 8       8           n            u64
//! 16      1           kind code    u8 (0 deterministic, 1 random dense, 2 random sparse)
//! 17      1           has_seed     u8
//! 18      6           zero padding
//! 24      8           seed         u64 (0 when absent)
//! 32      8           nnz          u64
//! 40      8 (n+1)     row offsets  u64
//! ..      4 nnz       column indices u32, ascending within each row
//! ```
//!
//! Snapshot dump: magic `b"TWSNAP\0\x01"`, `n: u64`, `t: f64`, then `n`
//! phases as `f64`, all little-endian.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use crate::analysis::{ModulationEstimate, SampleStats};
use crate::dynamics::{PhaseState, SimulationConfig, Trajectory};
use crate::graphon::{CouplingMatrix, Csr, GraphKind, Layout};
use crate::{Error, Result};

const ADJ_MAGIC: &[u8; 8] = b"TWADJ\0\0\x01";
const SNAP_MAGIC: &[u8; 8] = b"TWSNAP\0\x01";

/// Nonzero weights as `k,j,w` rows (weights without the `1/(nα_n)` prefactor).
pub fn write_pixel_csv<W: Write>(coupling: &CouplingMatrix, mut w: W) -> Result<()> {
    writeln!(w, "k,j,w")?;
    for k in 0..coupling.n {
        for (j, x) in coupling.row_entries(k) {
            writeln!(w, "{k},{j},{x}")?;
        }
    }
    Ok(())
}

fn as_csr(coupling: &CouplingMatrix) -> Csr {
    match &coupling.layout {
        Layout::SparseBinary(csr) => csr.clone(),
        Layout::BandedUniform { .. } => Csr::from_rows(
            (0..coupling.n).map(|k| coupling.row_entries(k).into_iter().map(|(j, _)| j as u32).collect()).collect(),
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdjacencyHeader {
    pub n: usize,
    pub kind: GraphKind,
    pub seed: Option<u64>,
}

pub fn write_adjacency_binary<W: Write>(coupling: &CouplingMatrix, header: AdjacencyHeader, mut w: W) -> Result<()> {
    if header.n != coupling.n {
        return Err(Error::DimensionMismatch { expected: coupling.n, found: header.n });
    }
    let csr = as_csr(coupling);
    w.write_all(ADJ_MAGIC)?;
    w.write_all(&(header.n as u64).to_le_bytes())?;
    w.write_all(&[header.kind.code(), header.seed.is_some() as u8, 0, 0, 0, 0, 0, 0])?;
    w.write_all(&header.seed.unwrap_or(0).to_le_bytes())?;
    w.write_all(&(csr.nnz() as u64).to_le_bytes())?;
    for off in &csr.row_offsets {
        w.write_all(&(*off as u64).to_le_bytes())?;
    }
    for c in &csr.col_indices {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_adjacency_binary<R: Read>(mut r: R) -> Result<(AdjacencyHeader, Csr)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != ADJ_MAGIC {
        return Err(Error::Format("not an adjacency dump (bad magic)".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let mut flags = [0u8; 8];
    r.read_exact(&mut flags)?;
    let kind =
        GraphKind::from_code(flags[0]).ok_or_else(|| Error::Format(format!("unknown graph kind code {}", flags[0])))?;
    let seed_raw = read_u64(&mut r)?;
    let seed = (flags[1] != 0).then_some(seed_raw);
    let nnz = read_u64(&mut r)? as usize;
    let mut row_offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        row_offsets.push(read_u64(&mut r)? as usize);
    }
    if row_offsets.first() != Some(&0)
        || row_offsets.last() != Some(&nnz)
        || row_offsets.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::Format("inconsistent row offsets".into()));
    }
    let mut col_indices = Vec::with_capacity(nnz);
    let mut b = [0u8; 4];
    for _ in 0..nnz {
        r.read_exact(&mut b)?;
        let c = u32::from_le_bytes(b);
        if c as usize >= n {
            return Err(Error::IndexOutOfRange { index: c as usize, n });
        }
        col_indices.push(c);
    }
    Ok((AdjacencyHeader { n, kind, seed }, Csr { row_offsets, col_indices }))
}

/// Key/value header written as `# key=value` lines above trajectory CSVs.
pub fn trajectory_metadata(config: &SimulationConfig, traj: &Trajectory) -> Vec<(String, String)> {
    let g = &config.graph;
    let mut m = vec![
        ("n".to_string(), g.n.to_string()),
        ("q".into(), config.q.to_string()),
        ("kappa".into(), g.kappa.to_string()),
        ("p".into(), g.p.to_string()),
        ("sigma".into(), config.sigma.to_string()),
        ("omega".into(), traj.omega.to_string()),
        ("kind".into(), g.kind.as_str().to_string()),
        ("seed".into(), config.seed.to_string()),
    ];
    if let Some(s) = g.seed {
        m.push(("graph_seed".into(), s.to_string()));
    }
    if let Some(gm) = g.gamma {
        m.push(("gamma".into(), gm.to_string()));
    }
    m.push(("rotating_frame".into(), config.rotating_frame.unwrap_or(0.0).to_string()));
    m
}

/// `t,u_k1,u_k2,…` rows for the recorded node subset.
pub fn write_trajectory_csv<W: Write>(config: &SimulationConfig, traj: &Trajectory, mut w: W) -> Result<()> {
    for (k, v) in trajectory_metadata(config, traj) {
        writeln!(w, "# {k}={v}")?;
    }
    write!(w, "t")?;
    for k in &traj.node_indices {
        write!(w, ",u_{k}")?;
    }
    writeln!(w)?;
    for (t, row) in traj.times.iter().zip(&traj.states) {
        write!(w, "{t}")?;
        for x in row {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// A trajectory CSV read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub meta: BTreeMap<String, String>,
    pub nodes: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta.get(key).ok_or_else(|| Error::Format(format!("missing header key '{key}'")))?;
        v.parse().map_err(|_| Error::Format(format!("bad value for '{key}': {v}")))
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format(format!("line {line}: bad number '{s}'")))
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<TrajectoryTable> {
    let mut meta = BTreeMap::new();
    let mut nodes = None;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let mut fields = line.split(',');
        match &nodes {
            None => {
                if fields.next().map(str::trim) != Some("t") {
                    return Err(Error::Format(format!("line {lineno}: expected header starting with 't'")));
                }
                let ks = fields
                    .map(|f| {
                        f.trim()
                            .strip_prefix("u_")
                            .and_then(|k| k.parse::<usize>().ok())
                            .ok_or_else(|| Error::Format(format!("line {lineno}: bad column '{f}'")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                nodes = Some(ks);
            }
            Some(ks) => {
                let t = parse_f64(fields.next().unwrap_or(""), lineno)?;
                let row = fields.map(|f| parse_f64(f, lineno)).collect::<Result<Vec<_>>>()?;
                if row.len() != ks.len() {
                    return Err(Error::Format(format!("line {lineno}: {} values for {} nodes", row.len(), ks.len())));
                }
                times.push(t);
                states.push(row);
            }
        }
    }
    let nodes = nodes.ok_or_else(|| Error::Format("missing column header".into()))?;
    Ok(TrajectoryTable { meta, nodes, times, states })
}

pub fn write_stats_csv<W: Write>(stats: &[SampleStats], mut w: W) -> Result<()> {
    writeln!(w, "t,theta,coherence,max_deviation,c,s,r,psi")?;
    for s in stats {
        writeln!(w, "{},{},{},{},{},{},{},{}", s.t, s.theta, s.coherence, s.max_deviation, s.c, s.s, s.r, s.psi)?;
    }
    Ok(())
}

pub fn write_estimate_csv<W: Write>(est: &ModulationEstimate, mut w: W) -> Result<()> {
    writeln!(w, "# omega_tilde={}", est.omega_tilde)?;
    writeln!(w, "# psi_rate={}", est.psi_rate)?;
    writeln!(w, "t,c,s,r,psi,drift")?;
    for s in &est.samples {
        writeln!(w, "{},{},{},{},{},{}", s.t, s.c, s.s, s.r, s.psi, s.drift)?;
    }
    Ok(())
}

pub fn write_snapshot<W: Write>(state: &PhaseState, mut w: W) -> Result<()> {
    w.write_all(SNAP_MAGIC)?;
    w.write_all(&(state.phases.len() as u64).to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    for x in &state.phases {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<PhaseState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAP_MAGIC {
        return Err(Error::Format("not a snapshot (bad magic)".into()));
    }
    let n = read_u64(&mut r)? as usize;
    let t = f64::from_bits(read_u64(&mut r)?);
    let phases = (0..n).map(|_| read_u64(&mut r).map(f64::from_bits)).collect::<Result<_>>()?;
    Ok(PhaseState { t, phases })
}

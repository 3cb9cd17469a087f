//! Little-endian binary container for compiled programs.

use thiserror::Error;

use super::{Instruction, Occupancy, Opcode, Program, Region, Space};
use crate::ir::{Channel, ChannelKind};
use crate::model::Reduce;

pub const MAGIC: [u8; 4] = *b"ZIPR";
pub const FORMAT_VERSION: u16 = 1;
const RECORD: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("truncated input")]
    Truncated,
    #[error("invalid {what} value {value}")]
    Invalid { what: &'static str, value: u32 },
}

pub fn encode(p: &Program) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&p.rounds.to_le_bytes());
    b.extend_from_slice(&(p.regions.len() as u32).to_le_bytes());
    for r in &p.regions {
        b.extend_from_slice(&(r.name.len() as u16).to_le_bytes());
        b.extend_from_slice(r.name.as_bytes());
        b.extend_from_slice(&r.base.to_le_bytes());
        b.extend_from_slice(&r.extent.to_le_bytes());
        b.push(r.occupancy as u8);
        for v in [r.dim, r.types, r.rows] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.push(match r.init {
            None => 0,
            Some(Reduce::Sum) => 1,
            Some(Reduce::Max) => 2,
        });
        b.extend_from_slice(&r.init_round.to_le_bytes());
        b.extend_from_slice(&r.last_round.to_le_bytes());
    }
    b.extend_from_slice(&(p.channels.len() as u32).to_le_bytes());
    for c in &p.channels {
        b.extend_from_slice(&(c.id as u32).to_le_bytes());
        b.push(match c.kind {
            ChannelKind::SrcScatter => 0,
            ChannelKind::DstScatter => 1,
            ChannelKind::GatherSum => 2,
            ChannelKind::GatherMax => 3,
        });
        b.extend_from_slice(&(c.dim as u32).to_le_bytes());
    }
    for f in [&p.s_function, &p.e_function, &p.d_function] {
        b.extend_from_slice(&(f.len() as u32).to_le_bytes());
        for ins in f {
            let start = b.len();
            b.push(ins.opcode as u8);
            b.push(ins.space as u8);
            b.extend_from_slice(&ins.round.to_le_bytes());
            for v in [ins.dim, ins.dim_in, ins.dst, ins.src_a, ins.src_b, ins.aux, ins.channel] {
                b.extend_from_slice(&v.to_le_bytes());
            }
            debug_assert_eq!(b.len() - start, RECORD);
        }
    }
    b
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn invalid(what: &'static str, value: impl Into<u32>) -> DecodeError {
    DecodeError::Invalid {
        what,
        value: value.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Program, DecodeError> {
    let mut r = Reader { buf: bytes };
    if r.take(4).map_err(|_| DecodeError::BadMagic)? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError::Version(version));
    }
    let mut p = Program {
        rounds: r.u16()?,
        ..Program::default()
    };
    let n = r.u32()?;
    for _ in 0..n {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| invalid("name", 0u32))?;
        let base = r.u64()?;
        let extent = r.u64()?;
        let occ = r.u8()?;
        let occupancy = match occ {
            0 => Occupancy::TileSrc,
            1 => Occupancy::TileEdge,
            2 => Occupancy::PartitionDst,
            3 => Occupancy::Weights,
            v => return Err(invalid("occupancy", v)),
        };
        let (dim, types, rows) = (r.u32()?, r.u32()?, r.u32()?);
        let init = match r.u8()? {
            0 => None,
            1 => Some(Reduce::Sum),
            2 => Some(Reduce::Max),
            v => return Err(invalid("reduce", v)),
        };
        p.regions.push(Region {
            name,
            base,
            extent,
            occupancy,
            dim,
            types,
            rows,
            init,
            init_round: r.u16()?,
            last_round: r.u16()?,
        });
    }
    let n = r.u32()?;
    for _ in 0..n {
        let id = r.u32()? as usize;
        let kind = match r.u8()? {
            0 => ChannelKind::SrcScatter,
            1 => ChannelKind::DstScatter,
            2 => ChannelKind::GatherSum,
            3 => ChannelKind::GatherMax,
            v => return Err(invalid("channel kind", v)),
        };
        p.channels.push(Channel {
            id,
            kind,
            dim: r.u32()? as usize,
        });
    }
    for f in [&mut p.s_function, &mut p.e_function, &mut p.d_function] {
        let n = r.u32()? as usize;
        if r.buf.len() < n.saturating_mul(RECORD) {
            return Err(DecodeError::Truncated);
        }
        for _ in 0..n {
            let op = r.u8()?;
            let opcode = Opcode::from_u8(op).ok_or_else(|| invalid("opcode", op))?;
            let space = match r.u8()? {
                0 => Space::None,
                1 => Space::Src,
                2 => Space::Edge,
                3 => Space::Dst,
                v => return Err(invalid("space", v)),
            };
            let mut ins = Instruction::new(opcode, space, r.u16()?);
            ins.dim = r.u32()?;
            ins.dim_in = r.u32()?;
            ins.dst = r.u32()?;
            ins.src_a = r.u32()?;
            ins.src_b = r.u32()?;
            ins.aux = r.u32()?;
            ins.channel = r.u32()?;
            f.push(ins);
        }
    }
    if !r.buf.is_empty() {
        return Err(invalid("trailing bytes", r.buf.len() as u32));
    }
    Ok(p)
}

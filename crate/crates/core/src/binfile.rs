//! Binary block file.
//!
//! ```text
//! "EDGB" version:u8 count:u16
//! per block:  name_len:u8 name  insn_count:u8  words:u32*  exit_count:u8 (len:u8 label)*
//! ```
//!
//! All integers are little-endian; names and labels are UTF-8.

use thiserror::Error;

use crate::isa::{Block, BlockError, DecodeError, InsnError, Instruction};

pub const MAGIC: &[u8; 4] = b"EDGB";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinError {
    #[error("not a block file (bad magic)")]
    BadMagic,
    #[error("unsupported block file version {0}")]
    UnsupportedVersion(u8),
    #[error("file truncated")]
    Truncated,
    #[error("{0} trailing bytes after the last block")]
    TrailingBytes(usize),
    #[error("name or label is not valid UTF-8")]
    BadUtf8,
    #[error("`{0}` is longer than 255 bytes")]
    NameTooLong(String),
    #[error("too many blocks ({0})")]
    TooManyBlocks(usize),
    #[error("block `{block}` instruction {iid}: {err}")]
    Decode { block: String, iid: usize, err: DecodeError },
    #[error("block `{block}` instruction {iid}: {err}")]
    Encode { block: String, iid: usize, err: InsnError },
    #[error("block `{block}`: {err}")]
    Invalid { block: String, err: BlockError },
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), BinError> {
    let len = u8::try_from(s.len()).map_err(|_| BinError::NameTooLong(s.to_string()))?;
    out.push(len);
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn write_blocks(blocks: &[Block]) -> Result<Vec<u8>, BinError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let count = u16::try_from(blocks.len()).map_err(|_| BinError::TooManyBlocks(blocks.len()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for b in blocks {
        b.validate().map_err(|err| BinError::Invalid { block: b.name.clone(), err })?;
        put_str(&mut out, &b.name)?;
        out.push(b.len() as u8);
        for (iid, insn) in b.instructions.iter().enumerate() {
            let w = insn.encode().map_err(|err| BinError::Encode { block: b.name.clone(), iid, err })?;
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.push(u8::try_from(b.exits.len()).map_err(|_| BinError::TooManyBlocks(b.exits.len()))?);
        for e in &b.exits {
            put_str(&mut out, e)?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BinError> {
        if self.buf.len() < n {
            return Err(BinError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, BinError> {
        Ok(self.take(1)?[0])
    }

    fn string(&mut self) -> Result<String, BinError> {
        let n = self.u8()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| BinError::BadUtf8)
    }
}

pub fn read_blocks(bytes: &[u8]) -> Result<Vec<Block>, BinError> {
    let mut r = Reader { buf: bytes };
    if r.take(4).map_err(|_| BinError::BadMagic)? != MAGIC {
        return Err(BinError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(BinError::UnsupportedVersion(version));
    }
    let count = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    let mut blocks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name = r.string()?;
        let n = r.u8()? as usize;
        let mut instructions = Vec::with_capacity(n);
        for iid in 0..n {
            let w = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
            let insn = Instruction::decode(w).map_err(|err| BinError::Decode { block: name.clone(), iid, err })?;
            instructions.push(insn);
        }
        let exits = (0..r.u8()?).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
        let block = Block { name, instructions, exits };
        block.validate().map_err(|err| BinError::Invalid { block: block.name.clone(), err })?;
        blocks.push(block);
    }
    if !r.buf.is_empty() {
        return Err(BinError::TrailingBytes(r.buf.len()));
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::assemble;

    const SRC: &str = "
blk0:
    READ R0 T[2R]
    READ R7 T[2L]
    ADD T[3L]
    TLEI #5 B[1P]
    BRO.T B1 blk1
    BRO.F B1 blk2
blk1:
    BRO HALT
blk2:
    BRO HALT
";

    #[test]
    fn roundtrip() {
        let blocks = assemble(SRC).unwrap();
        let bytes = write_blocks(&blocks).unwrap();
        assert_eq!(&bytes[..4], b"EDGB");
        assert_eq!(bytes[4], VERSION);
        assert_eq!(&bytes[5..7], &[3, 0]);
        assert_eq!(read_blocks(&bytes).unwrap(), blocks);
    }

    #[test]
    fn header_errors() {
        assert_eq!(read_blocks(b"EDG"), Err(BinError::BadMagic));
        assert_eq!(read_blocks(b"ELF!\x01\x00\x00"), Err(BinError::BadMagic));
        assert_eq!(read_blocks(b"EDGB\x07\x00\x00"), Err(BinError::UnsupportedVersion(7)));
        assert_eq!(read_blocks(b"EDGB\x01\x00\x00").unwrap(), vec![]);
        assert_eq!(read_blocks(b"EDGB\x01\x00\x00\xff"), Err(BinError::TrailingBytes(1)));
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = write_blocks(&assemble(SRC).unwrap()).unwrap();
        for n in 0..bytes.len() {
            assert!(read_blocks(&bytes[..n]).is_err(), "prefix {n}");
        }
    }

    #[test]
    fn bad_word_reports_position() {
        let mut bytes = write_blocks(&assemble(SRC).unwrap()).unwrap();
        // name "blk0" then count; first word starts at 7 + 1 + 4 + 1
        let at = 13;
        bytes[at + 3] = 0xfe;
        assert!(matches!(
            read_blocks(&bytes),
            Err(BinError::Decode { iid: 0, err: DecodeError::InvalidOpcode(_), .. })
        ));
    }
}

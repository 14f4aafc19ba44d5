//! Mapping checkpoint files.
//!
//! Layout (all integers little-endian u32 unless noted):
//!   magic "LXMP" | version | d | N | target index
//!   N language codes, each a u32 byte length + UTF-8 bytes
//!   N row-major d x d matrices of little-endian f32, in language order
//!
//! The format is deterministic byte-for-byte for a given mapping set, so
//! same-seed training runs produce bit-identical checkpoint files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mapping::MappingSet;

const MAGIC: &[u8; 4] = b"LXMP";
const VERSION: u32 = 1;

pub fn save_checkpoint(mappings: &MappingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(mappings.dim() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&(mappings.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&(mappings.target() as u32).to_le_bytes()).map_err(io)?;
    for lang in mappings.langs() {
        let bytes = lang.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(bytes).map_err(io)?;
    }
    for m in mappings.maps() {
        for &v in m.data() {
            out.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MappingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);

    let bad = |msg: &str| Error::parse(path, 0, msg);
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("file too short for checkpoint header"))?;
    if &magic != MAGIC {
        return Err(bad("not a mapping checkpoint (bad magic)"));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |input: &mut BufReader<File>| -> Result<u32> {
        input
            .read_exact(&mut u32_buf)
            .map_err(|_| Error::parse(path, 0, "truncated checkpoint"))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let dim = read_u32(&mut input)? as usize;
    let n_langs = read_u32(&mut input)? as usize;
    let target = read_u32(&mut input)? as usize;
    if dim == 0 || n_langs == 0 || target >= n_langs {
        return Err(bad("inconsistent checkpoint header"));
    }

    let mut langs = Vec::with_capacity(n_langs);
    for _ in 0..n_langs {
        let len = read_u32(&mut input)? as usize;
        if len > 4096 {
            return Err(bad("language code unreasonably long"));
        }
        let mut buf = vec![0u8; len];
        input
            .read_exact(&mut buf)
            .map_err(|_| Error::parse(path, 0, "truncated language code"))?;
        langs.push(
            String::from_utf8(buf).map_err(|_| Error::parse(path, 0, "non-UTF-8 language code"))?,
        );
    }

    let mut maps = Vec::with_capacity(n_langs);
    let mut f32_buf = [0u8; 4];
    for _ in 0..n_langs {
        let mut data = Vec::with_capacity(dim * dim);
        for _ in 0..dim * dim {
            input
                .read_exact(&mut f32_buf)
                .map_err(|_| Error::parse(path, 0, "truncated matrix data"))?;
            data.push(f32::from_le_bytes(f32_buf) as f64);
        }
        maps.push(Matrix::from_vec(dim, dim, data)?);
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after checkpoint payload"));
    }
    MappingSet::from_parts(langs, target, maps)
}

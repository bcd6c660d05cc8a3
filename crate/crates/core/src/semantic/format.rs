//! Little-endian binary formats for embeddings (`SCEB`) and whitening models (`SCWH`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{EmbeddingMatrix, SemanticError, WhiteningModel};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SCEB";
pub const WHITENING_MAGIC: &[u8; 4] = b"SCWH";
pub const FORMAT_VERSION: u32 = 1;

fn truncated(what: &str) -> impl FnOnce(std::io::Error) -> SemanticError + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SemanticError::Truncated(what.to_owned())
        } else {
            SemanticError::Io(e)
        }
    }
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(), SemanticError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(truncated("magic"))?;
    if &found != magic {
        return Err(SemanticError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated("version"))?;
    if version != FORMAT_VERSION {
        return Err(SemanticError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

pub fn write_embeddings<W: Write>(matrix: &EmbeddingMatrix, mut w: W) -> Result<(), SemanticError> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(to_u32(matrix.len(), "row count")?)?;
    w.write_u32::<LittleEndian>(to_u32(matrix.dim(), "dimension")?)?;
    for id in matrix.ids() {
        w.write_u32::<LittleEndian>(to_u32(id.len(), "id length")?)?;
        w.write_all(id.as_bytes())?;
    }
    for v in matrix.data() {
        w.write_f32::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix, SemanticError> {
    read_header(&mut r, EMBEDDING_MAGIC)?;
    let rows = r.read_u32::<LittleEndian>().map_err(truncated("row count"))? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(truncated("dimension"))? as usize;
    let mut ids = Vec::with_capacity(rows.min(1 << 20));
    for i in 0..rows {
        let len = r.read_u32::<LittleEndian>().map_err(truncated("id length"))? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)
            .map_err(|e| truncated(&format!("id {i}"))(e))?;
        let id = String::from_utf8(buf).map_err(|_| SemanticError::Format(format!("id {i} is not UTF-8")))?;
        ids.push(id);
    }
    let total = rows
        .checked_mul(dim)
        .ok_or_else(|| SemanticError::Format("header dimensions overflow".to_owned()))?;
    let mut data = vec![0f32; total];
    r.read_f32_into::<LittleEndian>(&mut data).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            SemanticError::Truncated(format!("payload shorter than {rows}x{dim} values"))
        }
        _ => SemanticError::Io(e),
    })?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(SemanticError::Format(format!(
            "trailing bytes after {rows}x{dim} payload (dimension mismatch?)"
        )));
    }
    EmbeddingMatrix::new(ids, dim, data)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), SemanticError> {
    write_embeddings(matrix, BufWriter::new(File::create(path)?))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, SemanticError> {
    read_embeddings(BufReader::new(File::open(path)?))
}

pub fn write_whitening<W: Write>(model: &WhiteningModel, mut w: W) -> Result<(), SemanticError> {
    w.write_all(WHITENING_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(to_u32(model.input_dim(), "input dimension")?)?;
    w.write_u32::<LittleEndian>(to_u32(model.output_dim(), "output dimension")?)?;
    for v in model.mean() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for v in model.projection() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `SCWH` model. The format does not store the fitting row count, so
/// `source_count` of the result is 0.
pub fn read_whitening<R: Read>(mut r: R) -> Result<WhiteningModel, SemanticError> {
    read_header(&mut r, WHITENING_MAGIC)?;
    let input = r.read_u32::<LittleEndian>().map_err(truncated("input dimension"))? as usize;
    let output = r.read_u32::<LittleEndian>().map_err(truncated("output dimension"))? as usize;
    let mut mean = vec![0f64; input];
    r.read_f64_into::<LittleEndian>(&mut mean).map_err(truncated("mean"))?;
    let mut projection = vec![
        0f64;
        input
            .checked_mul(output)
            .ok_or_else(|| SemanticError::Format("header dimensions overflow".to_owned()))?
    ];
    r.read_f64_into::<LittleEndian>(&mut projection)
        .map_err(truncated("projection"))?;
    WhiteningModel::from_parts(mean, projection, output, 0)
}

pub fn save_whitening(model: &WhiteningModel, path: impl AsRef<Path>) -> Result<(), SemanticError> {
    write_whitening(model, BufWriter::new(File::create(path)?))
}

pub fn load_whitening(path: impl AsRef<Path>) -> Result<WhiteningModel, SemanticError> {
    read_whitening(BufReader::new(File::open(path)?))
}

fn to_u32(n: usize, what: &str) -> Result<u32, SemanticError> {
    u32::try_from(n).map_err(|_| SemanticError::Format(format!("{what} {n} does not fit in u32")))
}

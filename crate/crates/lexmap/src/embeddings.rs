//! Monolingual embedding sets: loading the text word2vec format, exporting
//! mapped embeddings, and frequency-ordered vocabulary lookup.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{MatRef, Matrix};

/// Frequency-ordered vocabulary; rank 0 is the most frequent word.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary::default()
    }

    /// Append a word; returns false (and changes nothing) if already present.
    pub fn push(&mut self, word: &str) -> bool {
        if self.index.contains_key(word) {
            return false;
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        true
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, rank: usize) -> &str {
        &self.words[rank]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

/// A language's vocabulary plus its |V| x d embedding matrix, in file order.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    pub lang: String,
    pub vocab: Vocabulary,
    pub matrix: Matrix,
}

impl EmbeddingSpace {
    pub fn new(lang: impl Into<String>, vocab: Vocabulary, matrix: Matrix) -> Result<Self> {
        if matrix.rows() != vocab.len() {
            return Err(Error::Shape(format!(
                "embedding matrix has {} rows for {} words",
                matrix.rows(),
                vocab.len()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::Argument("embedding matrix contains NaN/Inf".into()));
        }
        Ok(EmbeddingSpace {
            lang: lang.into(),
            vocab,
            matrix,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn embedding(&self, rank: usize) -> &[f64] {
        self.matrix.row(rank)
    }

    /// View of the `min(top_k, |V|)` most frequent rows; no copy.
    pub fn frequent_slice(&self, top_k: usize) -> MatRef<'_> {
        self.matrix.leading_rows(top_k)
    }
}

/// Load the text word2vec format: a `<count> <dim>` header line, then one
/// `<token> <d floats>` line per word. Reads until `min(count, max_vocab)`
/// unique tokens are collected; duplicate tokens after the first are skipped
/// with a warning and do not count toward the limit.
pub fn load_text_embeddings(
    lang: &str,
    path: impl AsRef<Path>,
    max_vocab: Option<usize>,
) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let mut fields = header.split_whitespace();
    let count: usize = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "header must be '<count> <dim>'"))?;
    let dim: i64 = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "header must be '<count> <dim>'"))?;
    if fields.next().is_some() {
        return Err(Error::parse(path, 1, "header must be '<count> <dim>'"));
    }
    if dim <= 0 {
        return Err(Error::parse(path, 1, format!("dimension must be positive, got {dim}")));
    }
    let dim = dim as usize;

    let target = max_vocab.map_or(count, |mv| count.min(mv));
    let mut vocab = Vocabulary::new();
    let mut data: Vec<f64> = Vec::with_capacity(target.saturating_mul(dim));
    let mut line = String::new();
    let mut line_no = 1usize;
    while vocab.len() < target {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break; // fewer rows than the header claimed; accept what we have
        }
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing token"))?;
        let mut row = Vec::with_capacity(dim);
        for f in fields {
            let v: f64 = f.parse().map_err(|_| {
                Error::parse(path, line_no, format!("bad float field {f:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, line_no, "non-finite embedding value"));
            }
            row.push(v);
        }
        if row.len() != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {dim} floats, found {}", row.len()),
            ));
        }
        if !vocab.push(token) {
            eprintln!(
                "warning: {}:{line_no}: duplicate token {token:?} skipped",
                path.display()
            );
            continue;
        }
        data.extend_from_slice(&row);
    }

    let matrix = Matrix::from_vec(vocab.len(), dim, data)?;
    EmbeddingSpace::new(lang, vocab, matrix)
}

/// Write a row of floats with six fractional digits, the precision the text
/// format round-trips at.
fn write_row(out: &mut impl Write, token: &str, row: &[f64]) -> std::io::Result<()> {
    out.write_all(token.as_bytes())?;
    for v in row {
        write!(out, " {v:.6}")?;
    }
    out.write_all(b"\n")
}

/// Export the space mapped by `mapping` (rows become `x M^T`) in the same
/// text format the loader reads. Re-loading reproduces values within 1e-5.
pub fn export_mapped_embeddings(
    space: &EmbeddingSpace,
    mapping: &Matrix,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if mapping.rows() != space.dim() || mapping.cols() != space.dim() {
        return Err(Error::Shape(format!(
            "mapping is {}x{} for {}-dimensional embeddings",
            mapping.rows(),
            mapping.cols(),
            space.dim()
        )));
    }
    let mapped = space.matrix.matmul_nt(mapping)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{} {}", space.len(), space.dim()).map_err(|e| Error::io(path, e))?;
    for rank in 0..space.len() {
        write_row(&mut out, space.vocab.word(rank), mapped.row(rank))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_basic() {
        let f = write_tmp("2 3\na 1 0 0\nb 0 1 0\n");
        let space = load_text_embeddings("xx", f.path(), None).unwrap();
        assert_eq!(space.vocab.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(space.matrix.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(space.matrix.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(space.vocab.rank("b"), Some(1));
    }

    #[test]
    fn load_truncates_at_max_vocab() {
        let f = write_tmp("2 3\na 1 0 0\nb 0 1 0\n");
        let space = load_text_embeddings("xx", f.path(), Some(1)).unwrap();
        assert_eq!(space.vocab.words(), &["a".to_string()]);
        assert_eq!(space.len(), 1);
    }

    #[test]
    fn load_skips_duplicates_keeping_first() {
        let f = write_tmp("2 3\na 1 0 0\na 0 1 0\nb 0 0 1\n");
        let space = load_text_embeddings("xx", f.path(), None).unwrap();
        assert_eq!(space.vocab.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(space.matrix.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(space.matrix.row(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn load_rejects_malformed_input() {
        let f = write_tmp("nonsense\na 1 0 0\n");
        assert!(matches!(
            load_text_embeddings("xx", f.path(), None),
            Err(Error::Parse { line: 1, .. })
        ));

        let f = write_tmp("2 3\na 1 0\nb 0 1 0\n");
        assert!(matches!(
            load_text_embeddings("xx", f.path(), None),
            Err(Error::Parse { line: 2, .. })
        ));

        let f = write_tmp("2 0\na\nb\n");
        assert!(load_text_embeddings("xx", f.path(), None).is_err());

        let f = write_tmp("1 2\na nan 0\n");
        assert!(load_text_embeddings("xx", f.path(), None).is_err());
    }

    #[test]
    fn export_identity_round_trips() {
        let f = write_tmp("2 3\na 0.125 -0.75 0.5\nb 0.25 1.0 -0.375\n");
        let space = load_text_embeddings("xx", f.path(), None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        export_mapped_embeddings(&space, &Matrix::identity(3), out.path()).unwrap();
        let reloaded = load_text_embeddings("xx", out.path(), None).unwrap();
        assert_eq!(reloaded.vocab.words(), space.vocab.words());
        assert!(reloaded.matrix.max_abs_diff(&space.matrix) < 1e-5);
    }

    #[test]
    fn export_applies_rotation_rowwise() {
        let vocab = {
            let mut v = Vocabulary::new();
            v.push("w");
            v
        };
        let space = EmbeddingSpace::new(
            "xx",
            vocab,
            Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        // 90-degree rotation: column convention (0,-1;1,0), so x M^T = (0, 1).
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        export_mapped_embeddings(&space, &rot, out.path()).unwrap();
        let reloaded = load_text_embeddings("xx", out.path(), None).unwrap();
        assert!((reloaded.matrix.get(0, 0) - 0.0).abs() < 1e-9);
        assert!((reloaded.matrix.get(0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn double_round_trip_is_bitwise_stable() {
        let f = write_tmp("3 2\na 0.1234567 -0.9876543\nb 2.5 -0.000012\nc 0 0\n");
        let space = load_text_embeddings("xx", f.path(), None).unwrap();
        let out1 = tempfile::NamedTempFile::new().unwrap();
        export_mapped_embeddings(&space, &Matrix::identity(2), out1.path()).unwrap();
        let space1 = load_text_embeddings("xx", out1.path(), None).unwrap();
        let out2 = tempfile::NamedTempFile::new().unwrap();
        export_mapped_embeddings(&space1, &Matrix::identity(2), out2.path()).unwrap();
        let bytes1 = std::fs::read(out1.path()).unwrap();
        let bytes2 = std::fs::read(out2.path()).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn frequent_slice_clamps_and_aliases_rows() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        let mut vocab = Vocabulary::new();
        for i in 0..5 {
            vocab.push(&format!("w{i}"));
        }
        let space =
            EmbeddingSpace::new("xx", vocab, Matrix::from_rows(&rows).unwrap()).unwrap();
        let s3 = space.frequent_slice(3);
        assert_eq!(s3.rows, 3);
        assert_eq!(s3.row(2), &[2.0, 1.0]);
        let s10 = space.frequent_slice(10);
        assert_eq!(s10.rows, 5);
    }

    #[test]
    fn vocab_rank_of_word_is_inverse_of_word_of_rank() {
        let mut vocab = Vocabulary::new();
        for i in 0..500 {
            vocab.push(&format!("tok{i}"));
        }
        for r in (0..500).step_by(5) {
            assert_eq!(vocab.rank(vocab.word(r)), Some(r));
        }
    }
}

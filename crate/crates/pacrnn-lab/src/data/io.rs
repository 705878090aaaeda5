//! Corpus archive: a text manifest followed by a little-endian binary payload.
//!
//! ```text
//! PACRNN-CORPUS 1
//! language <tag>
//! state_classes <S>
//! phoneme_classes <P>
//! silence_phoneme <index|none>
//! utterances <N>
//! utt <id> <language> <T> <D>        (N lines)
//! end
//! <payload>
//! ```
//!
//! The payload holds, per utterance in manifest order: `T` and `D` as `u64`,
//! `T*D` feature values as `f64` (row-major), then `T` state labels and `T`
//! phoneme labels as `u32`. All integers and reals are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CORPUS_MAGIC: &str = "PACRNN-CORPUS 1";

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::new();
    write_corpus_to(corpus, &mut bytes)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_corpus_to(corpus: &Corpus, out: &mut impl Write) -> Result<()> {
    corpus.validate()?;
    for token in std::iter::once(&corpus.language).chain(corpus.utterances.iter().flat_map(|u| [&u.id, &u.language])) {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!("identifier {:?} must be non-empty without whitespace", token)));
        }
    }
    let mut header = String::new();
    header.push_str(CORPUS_MAGIC);
    header.push('\n');
    header.push_str(&format!("language {}\n", corpus.language));
    header.push_str(&format!("state_classes {}\n", corpus.state_classes));
    header.push_str(&format!("phoneme_classes {}\n", corpus.phoneme_classes));
    match corpus.silence_phoneme {
        Some(s) => header.push_str(&format!("silence_phoneme {}\n", s)),
        None => header.push_str("silence_phoneme none\n"),
    }
    header.push_str(&format!("utterances {}\n", corpus.utterances.len()));
    for u in &corpus.utterances {
        header.push_str(&format!("utt {} {} {} {}\n", u.id, u.language, u.frames(), u.feature_dim()));
    }
    header.push_str("end\n");
    out.write_all(header.as_bytes())?;
    for u in &corpus.utterances {
        out.write_all(&(u.frames() as u64).to_le_bytes())?;
        out.write_all(&(u.feature_dim() as u64).to_le_bytes())?;
        for v in u.features.data() {
            out.write_all(&v.to_le_bytes())?;
        }
        for &s in &u.state_labels {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        for &p in &u.phoneme_labels {
            out.write_all(&(p as u32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus_from(&fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(start as u64, "unterminated manifest line"))?;
        self.pos = start + end + 1;
        let text = std::str::from_utf8(&rest[..end]).map_err(|_| Error::format(start as u64, "manifest is not UTF-8"))?;
        Ok((start, text))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (at, line) = self.line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((at, v)),
            _ => Err(Error::format(at as u64, format!("expected `{} ...`, found {:?}", key, line))),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated payload: {} needs {} bytes, {} remain", what, n, self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn parse_num(at: usize, text: &str, what: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| Error::format(at as u64, format!("{} is not a number: {:?}", what, text)))
}

pub fn read_corpus_from(bytes: &[u8]) -> Result<Corpus> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (_, magic) = cur.line().map_err(|_| Error::format(0, "missing corpus magic"))?;
    if magic != CORPUS_MAGIC {
        return Err(Error::format(0, format!("bad magic {:?}", magic)));
    }
    let (_, language) = cur.keyed("language")?;
    let (at, s) = cur.keyed("state_classes")?;
    let state_classes = parse_num(at, s, "state_classes")?;
    let (at, p) = cur.keyed("phoneme_classes")?;
    let phoneme_classes = parse_num(at, p, "phoneme_classes")?;
    let (at, sil) = cur.keyed("silence_phoneme")?;
    let silence_phoneme = if sil == "none" { None } else { Some(parse_num(at, sil, "silence_phoneme")?) };
    let (at, n) = cur.keyed("utterances")?;
    let count = parse_num(at, n, "utterances")?;

    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let (at, rest) = cur.keyed("utt")?;
        let fields: Vec<&str> = rest.split(' ').collect();
        if fields.len() != 4 {
            return Err(Error::format(at as u64, format!("utt line needs 4 fields, got {:?}", rest)));
        }
        entries.push((
            fields[0].to_string(),
            fields[1].to_string(),
            parse_num(at, fields[2], "frame count")?,
            parse_num(at, fields[3], "feature_dim")?,
        ));
    }
    let (at, end) = cur.line()?;
    if end != "end" {
        return Err(Error::format(at as u64, format!("expected `end`, found {:?}", end)));
    }

    let mut utterances = Vec::with_capacity(count);
    for (id, lang, t_len, dim) in entries {
        let at = cur.pos as u64;
        let payload_t = cur.u64("frame count")? as usize;
        let payload_d = cur.u64("feature dim")? as usize;
        if payload_t != t_len || payload_d != dim {
            return Err(Error::format(
                at,
                format!(
                    "utterance {}: manifest says {}x{} but payload says {}x{}",
                    id, t_len, dim, payload_t, payload_d
                ),
            ));
        }
        let raw = cur.take(t_len * dim * 8, &format!("features of {}", id))?;
        let features: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let labels = |cur: &mut Cursor, what: &str| -> Result<Vec<usize>> {
            Ok(cur
                .take(t_len * 4, what)?
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
                .collect())
        };
        let state_labels = labels(&mut cur, &format!("state labels of {}", id))?;
        let phoneme_labels = labels(&mut cur, &format!("phoneme labels of {}", id))?;
        let utt = Utterance {
            features: Tensor::matrix(t_len, dim, features)?,
            id,
            language: lang,
            state_labels,
            phoneme_labels,
        };
        utt.validate(state_classes, phoneme_classes)?;
        utterances.push(utt);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(cur.pos as u64, "trailing bytes after last utterance"));
    }
    let corpus = Corpus { language: language.to_string(), state_classes, phoneme_classes, silence_phoneme, utterances };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy_corpus, ToyLanguageSpec, ToyParams};

    fn small() -> Corpus {
        let p = ToyParams { feature_dim: 3, ..ToyParams::default() };
        generate_toy_corpus(&ToyLanguageSpec::from_params(&p).unwrap(), 3, (10, 20)).unwrap()
    }

    fn bytes_of(c: &Corpus) -> Vec<u8> {
        let mut b = Vec::new();
        write_corpus_to(c, &mut b).unwrap();
        b
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = small();
        let back = read_corpus_from(&bytes_of(&c)).unwrap();
        assert_eq!(back, c);
        for (a, b) in c.utterances.iter().zip(&back.utterances) {
            let bits_a: Vec<u64> = a.features.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.features.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn corrupted_magic() {
        let mut b = bytes_of(&small());
        b[0] = b'X';
        assert!(matches!(read_corpus_from(&b), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let b = bytes_of(&small());
        let cut = &b[..b.len() - 3];
        match read_corpus_from(cut) {
            Err(Error::Format { offset, detail }) => {
                assert!(offset > 0 && (offset as usize) < b.len(), "{}", offset);
                assert!(detail.contains("truncated"));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn manifest_dim_mismatch_names_utterance() {
        let c = small();
        let text = String::from_utf8_lossy(&bytes_of(&c)).into_owned();
        let first = &c.utterances[0];
        let line = format!("utt {} {} {} 3\n", first.id, first.language, first.frames());
        let bad_line = format!("utt {} {} {} 4\n", first.id, first.language, first.frames());
        let mut b = bytes_of(&c);
        let at = text.find(&line).unwrap();
        b.splice(at..at + line.len(), bad_line.bytes());
        let err = read_corpus_from(&b).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains(&first.id), "{}", err);
    }
}

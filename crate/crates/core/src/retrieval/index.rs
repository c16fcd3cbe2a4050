use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bm25::{Bm25Params, IDF_ID};
use super::chunk::{chunk_document, ChunkParams, Passage};
use super::tokenize::{terms, TOKENIZER_ID};
use crate::error::{Error, Result};
use crate::text::sha256_hex;

pub const INDEX_FORMAT: &str = "claimgate-index-v1";
const POSTINGS_MAGIC: &[u8; 8] = b"CGPOST01";
const LENGTHS_MAGIC: &[u8; 8] = b"CGLEN001";

/// One source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub title: String,
    pub text: String,
}

/// Page titles compare case-folded with underscores as spaces.
pub fn normalize_title(title: &str) -> String {
    title
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Read `{"title": .., "text": ..}` lines; other fields are ignored.
pub fn read_corpus(path: &Path) -> Result<Vec<CorpusDoc>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub passage_id: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub tokenizer: String,
    pub idf: String,
    pub window: usize,
    pub stride: usize,
    pub k1: f64,
    pub b: f64,
    pub documents: usize,
    pub passages: usize,
    pub terms: usize,
    pub total_tokens: u64,
    pub files: BTreeMap<String, String>,
}

/// In-memory passage index with BM25 statistics.
#[derive(Debug, Clone)]
pub struct Index {
    pub chunk: ChunkParams,
    pub bm25: Bm25Params,
    pub documents: usize,
    passages: Vec<Passage>,
    postings: BTreeMap<String, Vec<Posting>>,
    lengths: Vec<u32>,
    avglen: f64,
    by_title: HashMap<String, Vec<u32>>,
}

impl Index {
    /// Build from documents in any order; documents are sorted by title
    /// first so ids and statistics do not depend on input order.
    pub fn build(mut docs: Vec<CorpusDoc>, chunk: ChunkParams, bm25: Bm25Params) -> Result<Self> {
        chunk.validate()?;
        bm25.validate()?;
        docs.sort_by(|a, b| a.title.cmp(&b.title));
        if let Some(w) = docs.windows(2).find(|w| w[0].title == w[1].title) {
            return Err(Error::Data(format!(
                "duplicate corpus title `{}`",
                w[0].title
            )));
        }
        let chunked: Vec<Vec<Passage>> = docs
            .par_iter()
            .map(|d| chunk_document(&d.title, &d.text, chunk))
            .collect();
        let mut passages = Vec::new();
        for doc_passages in chunked {
            for mut p in doc_passages {
                p.passage_id = u32::try_from(passages.len())
                    .map_err(|_| Error::Data("more than 2^32 passages".into()))?;
                passages.push(p);
            }
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for p in &passages {
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in &p.tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_owned()).or_default().push(Posting {
                    passage_id: p.passage_id,
                    tf: count,
                });
            }
        }
        let lengths = passages.iter().map(|p| p.token_count as u32).collect();
        Ok(Self::assemble(
            chunk,
            bm25,
            docs.len(),
            passages,
            postings,
            lengths,
        ))
    }

    fn assemble(
        chunk: ChunkParams,
        bm25: Bm25Params,
        documents: usize,
        passages: Vec<Passage>,
        postings: BTreeMap<String, Vec<Posting>>,
        lengths: Vec<u32>,
    ) -> Self {
        let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
        let avglen = if lengths.is_empty() {
            0.0
        } else {
            total as f64 / lengths.len() as f64
        };
        let mut by_title: HashMap<String, Vec<u32>> = HashMap::new();
        for p in &passages {
            by_title
                .entry(normalize_title(&p.doc_id))
                .or_default()
                .push(p.passage_id);
        }
        Index {
            chunk,
            bm25,
            documents,
            passages,
            postings,
            lengths,
            avglen,
            by_title,
        }
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn passage(&self, id: u32) -> &Passage {
        &self.passages[id as usize]
    }

    pub fn avg_len(&self) -> f64 {
        self.avglen
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Passage ids of a page, ascending; `None` when the page is absent.
    pub fn passages_of(&self, title: &str) -> Option<&[u32]> {
        self.by_title
            .get(&normalize_title(title))
            .map(Vec::as_slice)
    }

    /// BM25 ranking of passages sharing at least one term with the query,
    /// best first, ties by ascending passage id, at most `fetch` entries.
    pub fn search(&self, query: &str, fetch: usize) -> Vec<(u32, f64)> {
        self.search_terms(&terms(query), fetch)
    }

    pub fn search_terms(&self, query: &[String], fetch: usize) -> Vec<(u32, f64)> {
        let n = self.passages.len();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in query {
            let plist = self.postings(term);
            if plist.is_empty() {
                continue;
            }
            let idf = Bm25Params::idf(n, plist.len());
            for p in plist {
                let len = f64::from(self.lengths[p.passage_id as usize]);
                *acc.entry(p.passage_id).or_insert(0.0) +=
                    self.bm25
                        .term_weight(idf, f64::from(p.tf), len, self.avglen);
            }
        }
        let mut ranked: Vec<(u32, f64)> = acc.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(fetch);
        ranked
    }

    pub fn save(&self, dir: &Path) -> Result<IndexManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let io = |p: &Path| {
            let p = p.to_owned();
            move |e| Error::io(p.clone(), e)
        };

        let mut postings_buf = Vec::new();
        postings_buf.extend_from_slice(POSTINGS_MAGIC);
        postings_buf
            .write_u32::<LittleEndian>(self.postings.len() as u32)
            .unwrap();
        for (term, list) in &self.postings {
            postings_buf
                .write_u32::<LittleEndian>(term.len() as u32)
                .unwrap();
            postings_buf.extend_from_slice(term.as_bytes());
            postings_buf
                .write_u32::<LittleEndian>(list.len() as u32)
                .unwrap();
            for p in list {
                postings_buf
                    .write_u32::<LittleEndian>(p.passage_id)
                    .unwrap();
                postings_buf.write_u32::<LittleEndian>(p.tf).unwrap();
            }
        }

        let mut lengths_buf = Vec::new();
        lengths_buf.extend_from_slice(LENGTHS_MAGIC);
        lengths_buf
            .write_u32::<LittleEndian>(self.lengths.len() as u32)
            .unwrap();
        for &l in &self.lengths {
            lengths_buf.write_u32::<LittleEndian>(l).unwrap();
        }

        let mut passages_buf = Vec::new();
        for p in &self.passages {
            serde_json::to_writer(&mut passages_buf, p).map_err(|e| Error::Data(e.to_string()))?;
            passages_buf.push(b'\n');
        }

        let mut files = BTreeMap::new();
        for (name, buf) in [
            ("postings.bin", &postings_buf),
            ("lengths.bin", &lengths_buf),
            ("passages.jsonl", &passages_buf),
        ] {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(io(&path))?);
            w.write_all(buf).map_err(io(&path))?;
            w.flush().map_err(io(&path))?;
            files.insert(name.to_owned(), sha256_hex(buf));
        }
        let manifest = IndexManifest {
            format: INDEX_FORMAT.into(),
            tokenizer: TOKENIZER_ID.into(),
            idf: IDF_ID.into(),
            window: self.chunk.window,
            stride: self.chunk.stride,
            k1: self.bm25.k1,
            b: self.bm25.b,
            documents: self.documents,
            passages: self.passages.len(),
            terms: self.postings.len(),
            total_tokens: self.lengths.iter().map(|&l| u64::from(l)).sum(),
            files,
        };
        let path = dir.join("manifest.json");
        let mut text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(io(&path))?;
        Ok(manifest)
    }

    pub fn load_manifest(dir: &Path) -> Result<IndexManifest> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: invalid manifest: {e}", path.display())))
    }

    /// Load and verify an index directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::load_manifest(dir)?;
        if manifest.format != INDEX_FORMAT
            || manifest.tokenizer != TOKENIZER_ID
            || manifest.idf != IDF_ID
        {
            return Err(Error::Data(format!(
                "unsupported index format/tokenizer/idf: {} / {} / {}",
                manifest.format, manifest.tokenizer, manifest.idf
            )));
        }
        let read = |name: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut buf))
                .map_err(|e| Error::io(&path, e))?;
            let want = manifest.files.get(name).map(String::as_str).unwrap_or("");
            if sha256_hex(&buf) != want {
                return Err(Error::Data(format!(
                    "{}: checksum mismatch",
                    path.display()
                )));
            }
            Ok(buf)
        };
        let corrupt = |what: &str| Error::Data(format!("corrupt {what}"));

        let buf = read("postings.bin")?;
        let mut r = buf.as_slice();
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("postings.bin"))?;
        if &magic != POSTINGS_MAGIC {
            return Err(corrupt("postings.bin"));
        }
        let mut postings = BTreeMap::new();
        let n_terms = r
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt("postings.bin"))?;
        for _ in 0..n_terms {
            let len = r
                .read_u32::<LittleEndian>()
                .map_err(|_| corrupt("postings.bin"))? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)
                .map_err(|_| corrupt("postings.bin"))?;
            let term = String::from_utf8(bytes).map_err(|_| corrupt("postings.bin"))?;
            let df = r
                .read_u32::<LittleEndian>()
                .map_err(|_| corrupt("postings.bin"))?;
            let mut list = Vec::with_capacity(df as usize);
            for _ in 0..df {
                let passage_id = r
                    .read_u32::<LittleEndian>()
                    .map_err(|_| corrupt("postings.bin"))?;
                let tf = r
                    .read_u32::<LittleEndian>()
                    .map_err(|_| corrupt("postings.bin"))?;
                list.push(Posting { passage_id, tf });
            }
            postings.insert(term, list);
        }

        let buf = read("lengths.bin")?;
        let mut r = buf.as_slice();
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("lengths.bin"))?;
        if &magic != LENGTHS_MAGIC {
            return Err(corrupt("lengths.bin"));
        }
        let n = r
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt("lengths.bin"))?;
        let lengths = (0..n)
            .map(|_| {
                r.read_u32::<LittleEndian>()
                    .map_err(|_| corrupt("lengths.bin"))
            })
            .collect::<Result<Vec<u32>>>()?;

        let buf = read("passages.jsonl")?;
        let mut passages = Vec::with_capacity(lengths.len());
        for (i, line) in buf
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .enumerate()
        {
            let mut p: Passage =
                serde_json::from_slice(line).map_err(|_| corrupt("passages.jsonl"))?;
            p.tokens = terms(&p.text);
            if p.passage_id as usize != i || p.tokens.len() != p.token_count {
                return Err(corrupt("passages.jsonl"));
            }
            passages.push(p);
        }
        if passages.len() != lengths.len() || passages.len() != manifest.passages {
            return Err(corrupt("index: passage count mismatch"));
        }
        if passages
            .iter()
            .zip(&lengths)
            .any(|(p, &l)| p.token_count != l as usize)
        {
            return Err(corrupt("lengths.bin"));
        }
        let chunk = ChunkParams {
            window: manifest.window,
            stride: manifest.stride,
        };
        let bm25 = Bm25Params {
            k1: manifest.k1,
            b: manifest.b,
        };
        Ok(Self::assemble(
            chunk,
            bm25,
            manifest.documents,
            passages,
            postings,
            lengths,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<CorpusDoc> {
        vec![
            CorpusDoc {
                title: "Zebra".into(),
                text: "zebras are striped horses of africa".into(),
            },
            CorpusDoc {
                title: "Apple_pie".into(),
                text: "apple pie is a dessert made with apples".into(),
            },
        ]
    }

    #[test]
    fn order_independent() {
        let a = Index::build(docs(), ChunkParams::default(), Bm25Params::default()).unwrap();
        let mut rev = docs();
        rev.reverse();
        let b = Index::build(rev, ChunkParams::default(), Bm25Params::default()).unwrap();
        assert_eq!(a.passages(), b.passages());
        assert_eq!(a.postings, b.postings);
        assert_eq!(a.passage(0).doc_id, "Apple_pie");
        assert_eq!(a.passages_of("apple pie"), Some(&[0u32][..]));
    }

    #[test]
    fn duplicate_titles_rejected() {
        let mut d = docs();
        d.push(d[0].clone());
        assert!(Index::build(d, ChunkParams::default(), Bm25Params::default()).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Index::build(docs(), ChunkParams::default(), Bm25Params::default()).unwrap();
        let m = a.save(dir.path()).unwrap();
        let b = Index::load(dir.path()).unwrap();
        assert_eq!(a.passages(), b.passages());
        assert_eq!(a.postings, b.postings);
        assert_eq!(a.search("apple dessert", 5), b.search("apple dessert", 5));
        assert_eq!(m.passages, 2);
        std::fs::write(dir.path().join("lengths.bin"), b"junk").unwrap();
        assert!(Index::load(dir.path()).is_err());
    }
}

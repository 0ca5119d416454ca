//! CoNLL-2009 column files, vocabularies and (sentence, predicate) instances.
//!
//! Column layout: ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD
//! DEPREL PDEPREL FILLPRED PRED APRED1..APREDn. Only ID, FORM, LEMMA,
//! FILLPRED, PRED and the APRED columns are consumed; syntax columns are
//! carried through verbatim so that files round-trip.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Number of fixed columns before the per-predicate APRED columns.
pub const FIXED_COLS: usize = 14;

const COL_FORM: usize = 1;
const COL_LEMMA: usize = 2;
const COL_FILLPRED: usize = 12;

/// Reserved role id for "not an argument".
pub const NONE_ROLE_ID: usize = 0;
/// Canonical display label for the none role; written as `_` in files.
pub const NONE_ROLE_LABEL: &str = "None";
/// Reserved token id for out-of-vocabulary words.
pub const UNK_TOKEN_ID: usize = 0;
pub const UNK_TOKEN: &str = "<unk>";
/// Role id assigned by lenient mapping to labels outside the vocabulary.
/// It can never be predicted, so such gold arguments count against recall.
pub const UNMAPPED_ROLE_ID: usize = usize::MAX;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown role id {0}")]
    UnknownRole(usize),
    #[error("unknown role label '{0}'")]
    UnknownRoleLabel(String),
    #[error("misaligned data: {0}")]
    Misaligned(String),
}

/// One token row. The fixed columns are kept verbatim for round-tripping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub is_predicate: bool,
    cols: Vec<String>,
}

impl Token {
    pub fn new(index: usize, form: &str, lemma: &str, is_predicate: bool) -> Token {
        assert!(index >= 1 && !form.is_empty());
        let mut cols = vec!["_".to_string(); FIXED_COLS];
        cols[0] = index.to_string();
        cols[COL_FORM] = form.to_string();
        cols[COL_LEMMA] = lemma.to_string();
        cols[COL_FILLPRED] = if is_predicate { "Y" } else { "_" }.to_string();
        cols[13] = if is_predicate {
            format!("{lemma}.01")
        } else {
            "_".to_string()
        };
        Token {
            index,
            form: form.to_string(),
            lemma: lemma.to_string(),
            is_predicate,
            cols,
        }
    }

    pub fn fixed_cols(&self) -> &[String] {
        &self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.form.as_str())
    }
}

/// One (sentence, predicate) pair with per-token role labels as they
/// appear in the file (`_` for the none role).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawInstance {
    /// Index into the corpus sentence list.
    pub sentence: usize,
    /// 0-based token offset of the predicate.
    pub predicate_index: usize,
    pub roles: Vec<String>,
}

/// A [`RawInstance`] with roles mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateInstance {
    pub sentence: usize,
    pub predicate_index: usize,
    pub roles: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub instances: Vec<RawInstance>,
}

impl Corpus {
    pub fn instance_sentence(&self, inst: &RawInstance) -> &Sentence {
        &self.sentences[inst.sentence]
    }
}

/// Read a CoNLL-2009 file. One instance is produced per FILLPRED=`Y`
/// token, with roles taken from the corresponding APRED column.
pub fn read_conll(path: impl AsRef<Path>) -> Result<Corpus, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_conll(&text)
}

pub fn parse_conll(text: &str) -> Result<Corpus, DataError> {
    let mut corpus = Corpus::default();
    // rows of (line number, fixed cols, apred cols)
    let mut rows: Vec<(usize, Vec<String>, Vec<String>)> = Vec::new();

    let flush = |rows: &mut Vec<(usize, Vec<String>, Vec<String>)>,
                     corpus: &mut Corpus|
     -> Result<(), DataError> {
        if rows.is_empty() {
            return Ok(());
        }
        let predicate_offsets: Vec<usize> = rows
            .iter()
            .enumerate()
            .filter(|(_, (_, cols, _))| cols[COL_FILLPRED] == "Y")
            .map(|(i, _)| i)
            .collect();
        let n_preds = predicate_offsets.len();
        for (line, _, apreds) in rows.iter() {
            if apreds.len() != n_preds {
                return Err(DataError::Parse {
                    line: *line,
                    msg: format!(
                        "{} APRED columns but sentence has {} predicates",
                        apreds.len(),
                        n_preds
                    ),
                });
            }
        }
        let sentence_idx = corpus.sentences.len();
        let tokens: Vec<Token> = rows
            .iter()
            .map(|(_, cols, _)| Token {
                index: cols[0].parse().expect("validated"),
                form: cols[COL_FORM].clone(),
                lemma: cols[COL_LEMMA].clone(),
                is_predicate: cols[COL_FILLPRED] == "Y",
                cols: cols.clone(),
            })
            .collect();
        for (k, &pred_off) in predicate_offsets.iter().enumerate() {
            corpus.instances.push(RawInstance {
                sentence: sentence_idx,
                predicate_index: pred_off,
                roles: rows.iter().map(|(_, _, apreds)| apreds[k].clone()).collect(),
            });
        }
        corpus.sentences.push(Sentence { tokens });
        rows.clear();
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            flush(&mut rows, &mut corpus)?;
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < FIXED_COLS {
            return Err(DataError::Parse {
                line,
                msg: format!("expected at least {FIXED_COLS} columns, got {}", fields.len()),
            });
        }
        let expected_index = rows.len() + 1;
        let id: usize = fields[0].parse().map_err(|_| DataError::Parse {
            line,
            msg: format!("malformed token index '{}'", fields[0]),
        })?;
        if id != expected_index {
            return Err(DataError::Parse {
                line,
                msg: format!("token index {id} out of order, expected {expected_index}"),
            });
        }
        let fixed: Vec<String> = fields[..FIXED_COLS].iter().map(|s| s.to_string()).collect();
        let apreds: Vec<String> = fields[FIXED_COLS..].iter().map(|s| s.to_string()).collect();
        rows.push((line, fixed, apreds));
    }
    flush(&mut rows, &mut corpus)?;
    Ok(corpus)
}

/// Write sentences with the given per-instance role labels in the same
/// column layout. `roles` must align with `corpus.instances`; reading the
/// result reproduces the role annotations exactly.
pub fn write_conll(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    roles: &[Vec<String>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = render_conll(corpus, roles)?;
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn render_conll(corpus: &Corpus, roles: &[Vec<String>]) -> Result<String, DataError> {
    if roles.len() != corpus.instances.len() {
        return Err(DataError::Misaligned(format!(
            "{} role sequences for {} instances",
            roles.len(),
            corpus.instances.len()
        )));
    }
    // group instance indices per sentence, in predicate order
    let mut per_sentence: Vec<Vec<usize>> = vec![Vec::new(); corpus.sentences.len()];
    for (q, inst) in corpus.instances.iter().enumerate() {
        per_sentence[inst.sentence].push(q);
    }
    let mut out = String::new();
    for (s_idx, sentence) in corpus.sentences.iter().enumerate() {
        for q in &per_sentence[s_idx] {
            if roles[*q].len() != sentence.len() {
                return Err(DataError::Misaligned(format!(
                    "instance {} has {} roles for a {}-token sentence",
                    q,
                    roles[*q].len(),
                    sentence.len()
                )));
            }
        }
        for (i, token) in sentence.tokens.iter().enumerate() {
            out.push_str(&token.cols.join("\t"));
            for q in &per_sentence[s_idx] {
                out.push('\t');
                out.push_str(&roles[*q][i]);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

/// Map role ids back to file labels; the none role becomes `_`.
pub fn roles_to_labels(roles: &[usize], vocab: &Vocab) -> Result<Vec<String>, DataError> {
    roles
        .iter()
        .map(|&id| {
            if id == NONE_ROLE_ID {
                Ok("_".to_string())
            } else {
                vocab
                    .role_label(id)
                    .map(str::to_string)
                    .ok_or(DataError::UnknownRole(id))
            }
        })
        .collect()
}

/// Token and role vocabularies with dense, insertion-ordered ids.
///
/// Token id 0 is the unknown token; role id 0 is the none role. Forms and
/// lemmas are lowercased for lookup.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(from = "VocabSerde", into = "VocabSerde")]
pub struct Vocab {
    tokens: Vec<String>,
    roles: Vec<String>,
    token_index: HashMap<String, usize>,
    role_index: HashMap<String, usize>,
}

/// Serialized form: just the id-ordered lists; lookup maps are rebuilt.
#[derive(Serialize, Deserialize)]
struct VocabSerde {
    tokens: Vec<String>,
    roles: Vec<String>,
}

impl From<VocabSerde> for Vocab {
    fn from(v: VocabSerde) -> Vocab {
        let mut out = Vocab {
            tokens: v.tokens,
            roles: v.roles,
            token_index: HashMap::new(),
            role_index: HashMap::new(),
        };
        out.rebuild_indices();
        out
    }
}

impl From<Vocab> for VocabSerde {
    fn from(v: Vocab) -> VocabSerde {
        VocabSerde {
            tokens: v.tokens,
            roles: v.roles,
        }
    }
}

impl Vocab {
    fn empty() -> Vocab {
        let mut v = Vocab {
            tokens: vec![UNK_TOKEN.to_string()],
            roles: vec![NONE_ROLE_LABEL.to_string()],
            token_index: HashMap::new(),
            role_index: HashMap::new(),
        };
        v.rebuild_indices();
        v
    }

    /// Rebuild the lookup maps from the id-ordered lists.
    fn rebuild_indices(&mut self) {
        self.token_index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        self.role_index = self
            .roles
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
    }

    /// Deterministic construction: tokens (lowercased forms, then lemmas)
    /// and roles are assigned ids in file order.
    pub fn build(corpus: &Corpus) -> Vocab {
        Vocab::build_many(&[corpus])
    }

    /// Build one vocabulary over several corpora, in order.
    pub fn build_many(corpora: &[&Corpus]) -> Vocab {
        let mut v = Vocab::empty();
        for corpus in corpora {
            for sentence in &corpus.sentences {
                for token in &sentence.tokens {
                    v.intern_token(&token.form.to_lowercase());
                    v.intern_token(&token.lemma.to_lowercase());
                }
            }
            for inst in &corpus.instances {
                for label in &inst.roles {
                    if label != "_" {
                        v.intern_role(label);
                    }
                }
            }
        }
        v
    }

    fn intern_token(&mut self, tok: &str) -> usize {
        if let Some(&id) = self.token_index.get(tok) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(tok.to_string());
        self.token_index.insert(tok.to_string(), id);
        id
    }

    fn intern_role(&mut self, label: &str) -> usize {
        if let Some(&id) = self.role_index.get(label) {
            return id;
        }
        let id = self.roles.len();
        self.roles.push(label.to_string());
        self.role_index.insert(label.to_string(), id);
        id
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Size of the role inventory, including the none role.
    pub fn n_roles(&self) -> usize {
        self.roles.len()
    }

    /// Lowercased lookup with unknown fallback.
    pub fn token_id(&self, raw: &str) -> usize {
        self.token_index
            .get(raw.to_lowercase().as_str())
            .copied()
            .unwrap_or(UNK_TOKEN_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Role id for a file label; `_` means the none role.
    pub fn role_id(&self, label: &str) -> Option<usize> {
        if label == "_" {
            return Some(NONE_ROLE_ID);
        }
        self.role_index.get(label).copied()
    }

    pub fn role_label(&self, id: usize) -> Option<&str> {
        self.roles.get(id).map(String::as_str)
    }

    pub fn role_labels(&self) -> &[String] {
        &self.roles
    }
}

/// Map raw instances to role ids; unknown labels are an error.
pub fn map_instances(corpus: &Corpus, vocab: &Vocab) -> Result<Vec<PredicateInstance>, DataError> {
    corpus
        .instances
        .iter()
        .map(|inst| {
            let roles = inst
                .roles
                .iter()
                .map(|label| {
                    vocab
                        .role_id(label)
                        .ok_or_else(|| DataError::UnknownRoleLabel(label.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PredicateInstance {
                sentence: inst.sentence,
                predicate_index: inst.predicate_index,
                roles,
            })
        })
        .collect()
}

/// Map raw instances to role ids, sending labels outside the vocabulary
/// to [`UNMAPPED_ROLE_ID`]. Returns the number of unmapped labels.
pub fn map_instances_lenient(corpus: &Corpus, vocab: &Vocab) -> (Vec<PredicateInstance>, usize) {
    let mut unmapped = 0;
    let instances = corpus
        .instances
        .iter()
        .map(|inst| PredicateInstance {
            sentence: inst.sentence,
            predicate_index: inst.predicate_index,
            roles: inst
                .roles
                .iter()
                .map(|label| {
                    vocab.role_id(label).unwrap_or_else(|| {
                        unmapped += 1;
                        UNMAPPED_ROLE_ID
                    })
                })
                .collect(),
        })
        .collect();
    (instances, unmapped)
}

/// Pretty-print a sentence with one instance's role labels, for logs.
pub fn format_instance(sentence: &Sentence, roles: &[String]) -> String {
    let mut out = String::new();
    for (tok, role) in sentence.tokens.iter().zip(roles) {
        let _ = write!(out, "{}/{} ", tok.form, role);
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "1\tthe-dog\tthe-dog\t_\t_\t_\t_\t_\t_\t_\t_\t_\tY\tbark.01\t_\n2\tbarks\tbark\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\tA1\n\n";

    #[test]
    fn minimal_file_yields_one_instance() {
        let corpus = parse_conll(MINIMAL).unwrap();
        assert_eq!(corpus.sentences.len(), 1);
        assert_eq!(corpus.instances.len(), 1);
        let inst = &corpus.instances[0];
        assert_eq!(inst.predicate_index, 0);
        assert_eq!(inst.roles, vec!["_".to_string(), "A1".to_string()]);
        assert!(corpus.sentences[0].tokens[0].is_predicate);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let corpus = parse_conll("").unwrap();
        assert!(corpus.sentences.is_empty() && corpus.instances.is_empty());
        let corpus = parse_conll("\n\n\n").unwrap();
        assert!(corpus.sentences.is_empty());
    }

    fn fixture() -> String {
        // 3 sentences; the second has 2 predicates
        let mut out = String::new();
        let s1 = [
            ("ms", "ms", false, vec!["_"]),
            ("hiti", "hiti", false, vec!["A0"]),
            ("signed", "sign", true, vec!["_"]),
            ("a", "a", false, vec!["_"]),
            ("contract", "contract", false, vec!["A1"]),
        ];
        let s2 = [
            ("we", "we", false, vec!["A0", "_"]),
            ("agreed", "agree", true, vec!["_", "_"]),
            ("to", "to", false, vec!["_", "_"]),
            ("sign", "sign", true, vec!["A1", "_"]),
            ("it", "it", false, vec!["_", "A1"]),
        ];
        let s3 = [("rain", "rain", false, vec![]), ("fell", "fall", false, vec![])];
        for rows in [&s1[..], &s2[..], &s3[..]] {
            for (i, (form, lemma, pred, apreds)) in rows.iter().enumerate() {
                let tok = Token::new(i + 1, form, lemma, *pred);
                out.push_str(&tok.fixed_cols().join("\t"));
                for a in apreds {
                    out.push('\t');
                    out.push_str(a);
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    #[test]
    fn fixture_roundtrips_byte_identically() {
        let text = fixture();
        let corpus = parse_conll(&text).unwrap();
        assert_eq!(corpus.sentences.len(), 3);
        assert_eq!(corpus.instances.len(), 3);
        let roles: Vec<Vec<String>> = corpus.instances.iter().map(|i| i.roles.clone()).collect();
        let rendered = render_conll(&corpus, &roles).unwrap();
        assert_eq!(rendered, text);
        // read . write . read is a fixed point
        let corpus2 = parse_conll(&rendered).unwrap();
        assert_eq!(corpus2, corpus);
        let rendered2 = render_conll(&corpus2, &roles).unwrap();
        assert_eq!(rendered2, rendered);
    }

    #[test]
    fn ragged_apred_columns_report_line() {
        let bad = "1\ta\ta\t_\t_\t_\t_\t_\t_\t_\t_\t_\tY\ta.01\t_\n2\tb\tb\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\tA1\tA2\n\n";
        let err = parse_conll(bad).unwrap_err();
        match err {
            DataError::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("APRED"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_index_reports_line() {
        let bad = "x\ta\ta\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        match parse_conll(bad).unwrap_err() {
            DataError::Parse { line, msg } => {
                assert_eq!(line, 1);
                assert!(msg.contains("index"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn too_few_columns_is_an_error() {
        let bad = "1\ta\ta\t_\n\n";
        assert!(matches!(
            parse_conll(bad).unwrap_err(),
            DataError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn all_none_roles_render_as_underscores() {
        let corpus = parse_conll(MINIMAL).unwrap();
        let roles = vec![vec!["_".to_string(), "_".to_string()]];
        let rendered = render_conll(&corpus, &roles).unwrap();
        for line in rendered.lines().filter(|l| !l.is_empty()) {
            assert!(line.ends_with("\t_"));
        }
    }

    #[test]
    fn unknown_role_id_is_an_error_not_silent_none() {
        let corpus = parse_conll(MINIMAL).unwrap();
        let vocab = Vocab::build(&corpus);
        assert!(matches!(
            roles_to_labels(&[0, 99], &vocab).unwrap_err(),
            DataError::UnknownRole(99)
        ));
    }

    #[test]
    fn vocab_is_deterministic_and_dense() {
        let corpus = parse_conll(&fixture()).unwrap();
        let v1 = Vocab::build(&corpus);
        let v2 = Vocab::build(&corpus);
        assert_eq!(v1, v2);
        assert_eq!(v1.role_id("_"), Some(NONE_ROLE_ID));
        assert_eq!(v1.role_id("A0"), Some(1));
        assert_eq!(v1.role_id("A1"), Some(2));
        assert_eq!(v1.token_id("HITI"), v1.token_id("hiti"));
        assert_eq!(v1.token_id("never-seen"), UNK_TOKEN_ID);
        // dense ids
        for id in 0..v1.n_roles() {
            assert!(v1.role_label(id).is_some());
        }
    }

    #[test]
    fn instances_mark_their_predicate() {
        let corpus = parse_conll(&fixture()).unwrap();
        for inst in &corpus.instances {
            let sentence = corpus.instance_sentence(inst);
            assert!(sentence.tokens[inst.predicate_index].is_predicate);
            assert_eq!(inst.roles.len(), sentence.len());
        }
    }

    #[test]
    fn lenient_mapping_reserves_unmapped() {
        let corpus = parse_conll(MINIMAL).unwrap();
        let empty_vocab = {
            let c = Corpus::default();
            Vocab::build(&c)
        };
        let (mapped, unmapped) = map_instances_lenient(&corpus, &empty_vocab);
        assert_eq!(unmapped, 1);
        assert_eq!(mapped[0].roles, vec![NONE_ROLE_ID, UNMAPPED_ROLE_ID]);
        assert!(map_instances(&corpus, &empty_vocab).is_err());
    }
}

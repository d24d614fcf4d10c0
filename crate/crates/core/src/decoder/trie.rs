use crate::criterion::{encode_target, Alphabet};
use crate::error::{Error, Result};

/// One lexicon line: a word and its letters (before repetition encoding).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub letters: Vec<String>,
}

impl LexiconEntry {
    /// Spells a word letter by letter.
    pub fn from_word(word: &str) -> Self {
        LexiconEntry {
            word: word.to_string(),
            letters: word.chars().map(|c| c.to_string()).collect(),
        }
    }
}

/// Parses `word<TAB>letter letter ...` lines; blank lines are ignored.
pub fn parse_lexicon(text: &str) -> Result<Vec<LexiconEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, spelling) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected `word<TAB>letters`".into(),
        })?;
        let letters: Vec<String> = spelling.split_whitespace().map(str::to_string).collect();
        if word.trim().is_empty() || letters.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "empty word or spelling".into(),
            });
        }
        out.push(LexiconEntry {
            word: word.trim().to_string(),
            letters,
        });
    }
    Ok(out)
}

pub fn format_lexicon(entries: &[LexiconEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.word, e.letters.join(" ")))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrieNode {
    /// `(token, child)` sorted by token.
    pub children: Vec<(usize, usize)>,
    /// Indices into [`LexiconTrie::words`] spelled by the path to this node.
    pub words: Vec<usize>,
}

/// Prefix tree over repetition-encoded spellings.
#[derive(Clone, Debug, PartialEq)]
pub struct LexiconTrie {
    nodes: Vec<TrieNode>,
    words: Vec<String>,
    spellings: Vec<Vec<usize>>,
}

impl LexiconTrie {
    pub const ROOT: usize = 0;

    pub fn build(entries: &[LexiconEntry], alphabet: &Alphabet) -> Result<Self> {
        let mut trie = LexiconTrie {
            nodes: vec![TrieNode::default()],
            words: Vec::new(),
            spellings: Vec::new(),
        };
        for e in entries {
            let mut letters = Vec::with_capacity(e.letters.len());
            for l in &e.letters {
                let idx = alphabet.index_of(l).map_err(|_| {
                    Error::Vocabulary(format!("word {:?} uses unknown letter {l:?}", e.word))
                })?;
                if idx == alphabet.silence() || idx == alphabet.repetition() {
                    return Err(Error::Vocabulary(format!(
                        "word {:?} spells with reserved token {l:?}",
                        e.word
                    )));
                }
                letters.push(idx);
            }
            let encoded = encode_target(alphabet, &letters)?.encoded;
            let mut node = Self::ROOT;
            for &tok in &encoded {
                node = match trie.nodes[node].children.binary_search_by_key(&tok, |c| c.0) {
                    Ok(pos) => trie.nodes[node].children[pos].1,
                    Err(pos) => {
                        let id = trie.nodes.len();
                        trie.nodes.push(TrieNode::default());
                        trie.nodes[node].children.insert(pos, (tok, id));
                        id
                    }
                };
            }
            trie.nodes[node].words.push(trie.words.len());
            trie.words.push(e.word.clone());
            trie.spellings.push(encoded);
        }
        Ok(trie)
    }

    pub fn from_words<S: AsRef<str>>(words: &[S], alphabet: &Alphabet) -> Result<Self> {
        let entries: Vec<LexiconEntry> = words.iter().map(|w| LexiconEntry::from_word(w.as_ref())).collect();
        Self::build(&entries, alphabet)
    }

    pub fn node(&self, id: usize) -> &TrieNode {
        &self.nodes[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    /// Encoded spelling of word `i`.
    pub fn spelling(&self, i: usize) -> &[usize] {
        &self.spellings[i]
    }

    pub fn child(&self, node: usize, token: usize) -> Option<usize> {
        let c = &self.nodes[node].children;
        c.binary_search_by_key(&token, |x| x.0).ok().map(|p| c[p].1)
    }

    /// Node reached by walking `tokens` from the root.
    pub fn walk(&self, tokens: &[usize]) -> Option<usize> {
        tokens.iter().try_fold(Self::ROOT, |n, &t| self.child(n, t))
    }
}

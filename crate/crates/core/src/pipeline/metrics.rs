use serde::{Deserialize, Serialize};

/// Substitution, deletion and insertion counts of a minimal alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }
}

/// Levenshtein alignment of `hyp` against `reference`. Among minimal-cost
/// alignments the one with the most substitutions is chosen, which fixes the
/// deletion and insertion counts as well.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    // (cost, -substitutions), compared lexicographically
    let mut d = vec![vec![(0usize, 0isize); m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = (i, 0);
    }
    for j in 0..=m {
        d[0][j] = (j, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let (c, s) = d[i - 1][j - 1];
            let sub = if reference[i - 1] == hyp[j - 1] { (c, s) } else { (c + 1, s - 1) };
            let del = (d[i - 1][j].0 + 1, d[i - 1][j].1);
            let ins = (d[i][j - 1].0 + 1, d[i][j - 1].1);
            d[i][j] = sub.min(del).min(ins);
        }
    }
    let (cost, neg_subs) = d[n][m];
    let substitutions = (-neg_subs) as usize;
    // deletions - insertions = n - m and deletions + insertions = cost - substitutions
    let gaps = cost - substitutions;
    let deletions = ((gaps + n) as isize - m as isize) as usize / 2;
    EditCounts {
        substitutions,
        deletions,
        insertions: gaps - deletions,
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Letters of a transcript with single spaces between words.
pub fn letters(text: &str) -> Vec<char> {
    words(text).join(" ").chars().collect()
}

/// Word error rate in percent over a set of (reference, hypothesis) pairs.
pub fn wer<S: AsRef<str>>(pairs: &[(S, S)]) -> f64 {
    let mut errors = 0;
    let mut total = 0;
    for (r, h) in pairs {
        let rw = words(r.as_ref());
        errors += edit_distance(&rw, &words(h.as_ref())).errors();
        total += rw.len();
    }
    percent(errors, total)
}

pub fn cer<S: AsRef<str>>(pairs: &[(S, S)]) -> f64 {
    let mut errors = 0;
    let mut total = 0;
    for (r, h) in pairs {
        let rl = letters(r.as_ref());
        errors += edit_distance(&rl, &letters(h.as_ref())).errors();
        total += rl.len();
    }
    percent(errors, total)
}

pub(crate) fn percent(errors: usize, total: usize) -> f64 {
    if total == 0 {
        if errors == 0 {
            0.0
        } else {
            100.0
        }
    } else {
        100.0 * errors as f64 / total as f64
    }
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut num, mut dx, mut dy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mean) * (b - mean);
        dx += (a - mean).powi(2);
        dy += (b - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        None
    } else {
        Some(num / (dx * dy).sqrt())
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

//! Inclusion patterns, count tables, log-linear model specifications and
//! their design matrices.
//!
//! Observed cells are always stored in the canonical order: descending number
//! of sources, ties broken by descending binary value with source `A` as the
//! most significant digit. For three sources that is
//! `111, 110, 101, 011, 100, 010, 001`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MIN_SOURCES: usize = 2;
pub const MAX_SOURCES: usize = 16;

fn check_k(k: usize) -> Result<()> {
    if (MIN_SOURCES..=MAX_SOURCES).contains(&k) {
        Ok(())
    } else {
        Err(Error::SourceCount(k))
    }
}

fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Upper-case letter naming source `i` (`A` for the first source).
pub fn source_label(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Set of sources that observed a unit.
///
/// Bit `i` of the mask is source `i`; the textual form writes source `A`
/// first, so `"101"` means "in A and C, not in B".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InclusionPattern {
    k: u8,
    mask: u32,
}

impl InclusionPattern {
    pub fn new(k: usize, mask: u32) -> Result<Self> {
        check_k(k)?;
        if mask >> k != 0 {
            return Err(Error::Pattern(format!(
                "mask {mask:#b} has bits beyond k={k}"
            )));
        }
        Ok(Self { k: k as u8, mask })
    }

    /// The unobserved cell, `00…0`.
    pub fn unobserved(k: usize) -> Result<Self> {
        Self::new(k, 0)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        check_k(s.len()).map_err(|_| Error::Pattern(s.to_string()))?;
        let mut mask = 0u32;
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => mask |= 1 << i,
                '0' => {}
                _ => return Err(Error::Pattern(s.to_string())),
            }
        }
        Self::new(s.len(), mask)
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn contains(&self, source: usize) -> bool {
        self.mask >> source & 1 == 1
    }

    /// True when every source of `term` (a source mask) observed the unit.
    pub fn covers(&self, term: u32) -> bool {
        self.mask & term == term
    }

    pub fn count_ones(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_observed(&self) -> bool {
        self.mask != 0
    }

    pub fn is_odd(&self) -> bool {
        self.count_ones() % 2 == 1
    }

    /// Value of the bit string read with source `A` as the most significant digit.
    pub fn binary_value(&self) -> u32 {
        let k = self.k as u32;
        self.mask.reverse_bits() >> (32 - k)
    }

    /// Position of an observed pattern in the canonical order.
    pub fn index(&self) -> Result<usize> {
        if !self.is_observed() {
            return Err(Error::Pattern(
                "the unobserved pattern has no table index".into(),
            ));
        }
        let k = self.k();
        let ones = self.count_ones();
        let before: usize = (ones + 1..=k).map(|j| binomial(k, j)).sum();
        // count same-popcount values below this one, then flip to "above"
        let value = self.binary_value();
        let mut below = 0;
        let mut remaining = ones;
        for pos in (0..k).rev() {
            if value >> pos & 1 == 1 {
                below += binomial(pos, remaining);
                remaining -= 1;
            }
        }
        Ok(before + binomial(k, ones) - 1 - below)
    }
}

impl fmt::Display for InclusionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.k() {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// All `2^k − 1` observed patterns in canonical order.
pub fn canonical_patterns(k: usize) -> Result<Vec<InclusionPattern>> {
    check_k(k)?;
    let mut pats: Vec<InclusionPattern> = (1u32..(1 << k))
        .map(|mask| InclusionPattern { k: k as u8, mask })
        .collect();
    pats.sort_by(|a, b| {
        b.count_ones()
            .cmp(&a.count_ones())
            .then(b.binary_value().cmp(&a.binary_value()))
    });
    Ok(pats)
}

/// Observed counts over the `2^k − 1` observed patterns, canonical order.
///
/// Counts are real because every bias adjustment produces fractional
/// pseudo-counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    k: usize,
    values: Vec<f64>,
}

impl CountTable {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        check_k(k)?;
        let cells = (1usize << k) - 1;
        if values.len() != cells {
            return Err(Error::Table(format!(
                "expected {cells} counts for k={k}, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Table(format!(
                "counts must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { k, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, pattern: &InclusionPattern) -> Result<f64> {
        if pattern.k() != self.k {
            return Err(Error::DimensionMismatch {
                table: self.k,
                model: pattern.k(),
            });
        }
        Ok(self.values[pattern.index()?])
    }

    /// Total number of observed units (`n`).
    pub fn observed_total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Size of one source: the sum over patterns that include `source`.
    pub fn marginal(&self, source: usize) -> Result<f64> {
        if source >= self.k {
            return Err(Error::Table(format!(
                "source {source} out of range for k={}",
                self.k
            )));
        }
        Ok(self.sum_where(|p| p.contains(source)))
    }

    /// Sum of the counts whose pattern satisfies `pred`.
    pub fn sum_where(&self, pred: impl Fn(&InclusionPattern) -> bool) -> f64 {
        self.patterns()
            .zip(&self.values)
            .filter(|(p, _)| pred(p))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn patterns(&self) -> impl Iterator<Item = InclusionPattern> {
        // k was validated at construction
        canonical_patterns(self.k).unwrap_or_default().into_iter()
    }

    /// Reads the text format: an optional `k=<int>` header followed by one
    /// `pattern,count` line per observed cell in any order. Without the header
    /// `k` is the length of the first pattern. Blank lines, `#` comments and a
    /// `pattern,count` column header are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| {
                !l.is_empty() && !l.starts_with('#') && !l.eq_ignore_ascii_case("pattern,count")
            })
            .peekable();
        let first = *lines
            .peek()
            .ok_or_else(|| Error::Table("empty input".into()))?;
        let k: usize = match first.strip_prefix("k=") {
            Some(v) => {
                lines.next();
                v.trim()
                    .parse()
                    .map_err(|_| Error::Table(format!("bad `k=<int>` header {first:?}")))?
            }
            None => first.split(',').next().unwrap_or("").trim().len(),
        };
        check_k(k)?;
        let mut values = vec![None; (1 << k) - 1];
        for line in lines {
            let (pat, count) = line
                .split_once(',')
                .ok_or_else(|| Error::Table(format!("expected `pattern,count`, got {line:?}")))?;
            let pat = InclusionPattern::parse(pat)?;
            if pat.k() != k {
                return Err(Error::Table(format!(
                    "pattern {pat} does not have {k} sources"
                )));
            }
            let count: f64 = count
                .trim()
                .parse()
                .map_err(|_| Error::Table(format!("bad count {count:?} for pattern {pat}")))?;
            let slot = &mut values[pat.index()?];
            if slot.is_some() {
                return Err(Error::Table(format!("pattern {pat} listed twice")));
            }
            *slot = Some(count);
        }
        let pats = canonical_patterns(k)?;
        let values = values
            .into_iter()
            .zip(&pats)
            .map(|(v, p)| v.ok_or_else(|| Error::Table(format!("missing count for pattern {p}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(k, values)
    }

    /// Writes the text format in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = format!("k={}\n", self.k);
        for (p, v) in self.patterns().zip(&self.values) {
            out.push_str(&format!("{p},{v:?}\n"));
        }
        out
    }
}

/// Log-linear model: intercept, all main effects, plus a hierarchical set of
/// interaction terms of order `2..k`.
///
/// Terms are source masks. The saturated model contains every interaction
/// below order `k`, so its parameter count equals the number of observed
/// cells; the `k`-way interaction is never identifiable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    k: usize,
    terms: Vec<u32>,
}

fn term_order(a: &u32, b: &u32) -> std::cmp::Ordering {
    let key = |t: &u32| {
        let sources: Vec<u32> = (0..32).filter(|i| t >> i & 1 == 1).collect();
        (t.count_ones(), sources)
    };
    key(a).cmp(&key(b))
}

fn term_label(term: u32) -> String {
    (0..MAX_SOURCES)
        .filter(|i| term >> i & 1 == 1)
        .map(source_label)
        .collect()
}

impl ModelSpec {
    pub fn new(k: usize, terms: impl IntoIterator<Item = u32>) -> Result<Self> {
        check_k(k)?;
        let mut terms: Vec<u32> = terms.into_iter().collect();
        terms.sort_by(term_order);
        terms.dedup();
        for &t in &terms {
            if t >> k != 0 {
                return Err(Error::Model(format!(
                    "term {} uses a source beyond k={k}",
                    term_label(t)
                )));
            }
            let order = t.count_ones() as usize;
            if order < 2 {
                return Err(Error::Model(
                    "interaction terms need at least two sources".into(),
                ));
            }
            if order >= k {
                return Err(Error::Model(format!(
                    "the {k}-way interaction {} is not identifiable",
                    term_label(t)
                )));
            }
            // hierarchy: every sub-interaction of order >= 2 must be present
            for i in 0..k {
                let sub = t & !(1 << i);
                if sub != t && sub.count_ones() >= 2 && !terms.contains(&sub) {
                    return Err(Error::Model(format!(
                        "term {} requires {} (hierarchical models only)",
                        term_label(t),
                        term_label(sub)
                    )));
                }
            }
        }
        Ok(Self { k, terms })
    }

    pub fn independence(k: usize) -> Result<Self> {
        Self::new(k, [])
    }

    /// All interactions of order below `k`.
    pub fn saturated(k: usize) -> Result<Self> {
        check_k(k)?;
        let full = (1u32 << k) - 1;
        Self::new(k, (1u32..full).filter(|t| t.count_ones() >= 2))
    }

    pub fn all_pairs(k: usize) -> Result<Self> {
        check_k(k)?;
        Self::with_pairs(k, (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))))
    }

    pub fn with_pairs(k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut terms = Vec::new();
        for (i, j) in pairs {
            if i == j || i >= k || j >= k {
                return Err(Error::Model(format!(
                    "invalid source pair ({i}, {j}) for k={k}"
                )));
            }
            terms.push(1u32 << i | 1u32 << j);
        }
        Self::new(k, terms)
    }

    /// Parses `k=3;pairs=AB,BC`, `k=4;sat`, `k=3;ind`, `k=4;terms=AB,BC,ABC`,
    /// `k=3;pairs=none` or `k=3;pairs=all`.
    pub fn parse(s: &str) -> Result<Self> {
        Self::parse_with_k(s, None)
    }

    /// Like [`ModelSpec::parse`], but `k=` may be omitted when `k` is known
    /// from context (for example `sat` or `pairs=AB` for a given table).
    pub fn parse_with_k(s: &str, k: Option<usize>) -> Result<Self> {
        let mut k_decl = None;
        let mut body = None;
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some(v) = part.strip_prefix("k=") {
                k_decl = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Model(format!("bad k in {s:?}")))?,
                );
            } else if body.replace(part).is_some() {
                return Err(Error::Model(format!("more than one term list in {s:?}")));
            }
        }
        let k = match (k_decl, k) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Model(format!(
                    "model declares k={a} but the data has k={b}"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Model(format!("missing `k=` in {s:?}"))),
        };
        let body = body.unwrap_or("ind");
        let (key, list) = match body.split_once('=') {
            Some((key, list)) => (key.trim(), list.trim()),
            None => ("", body),
        };
        match (key, list.to_ascii_lowercase().as_str()) {
            (_, "sat" | "saturated") => return Self::saturated(k),
            (_, "ind" | "independence" | "none" | "") => return Self::independence(k),
            ("pairs", "all") => return Self::all_pairs(k),
            ("" | "pairs" | "terms", _) => {}
            _ => return Err(Error::Model(format!("unknown model key {key:?}"))),
        }
        let mut terms = Vec::new();
        for label in list.split(',').map(str::trim).filter(|l| !l.is_empty()) {
            let mut t = 0u32;
            for c in label.chars() {
                let c = c.to_ascii_uppercase();
                if !c.is_ascii_uppercase() || (c as usize - 'A' as usize) >= k {
                    return Err(Error::Model(format!(
                        "unknown source {c:?} in term {label:?}"
                    )));
                }
                t |= 1 << (c as u32 - 'A' as u32);
            }
            if key == "pairs" && t.count_ones() != 2 {
                return Err(Error::Model(format!("{label:?} is not a pair")));
            }
            terms.push(t);
        }
        Self::new(k, terms)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Interaction terms as source masks, in column order.
    pub fn terms(&self) -> &[u32] {
        &self.terms
    }

    /// Pairwise interaction terms as `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.terms
            .iter()
            .filter(|t| t.count_ones() == 2)
            .map(|t| {
                (
                    t.trailing_zeros() as usize,
                    (31 - t.leading_zeros()) as usize,
                )
            })
            .collect()
    }

    pub fn has_pair(&self, i: usize, j: usize) -> bool {
        self.terms.contains(&(1u32 << i | 1u32 << j))
    }

    pub fn param_count(&self) -> usize {
        1 + self.k + self.terms.len()
    }

    pub fn is_saturated(&self) -> bool {
        self.param_count() == (1 << self.k) - 1
    }

    pub fn is_independence(&self) -> bool {
        self.terms.is_empty()
    }

    /// Column labels: `1`, `A`, `B`, …, then interaction terms.
    pub fn column_labels(&self) -> Vec<String> {
        std::iter::once("1".to_string())
            .chain((0..self.k).map(|i| source_label(i).to_string()))
            .chain(self.terms.iter().map(|&t| term_label(t)))
            .collect()
    }

    /// Short name: `IND` (also for two sources), `SAT`, `1PD`, `2PD`, … for pairwise models, else the
    /// full spec string.
    pub fn short_name(&self) -> String {
        if self.is_independence() {
            "IND".into()
        } else if self.is_saturated() {
            "SAT".into()
        } else if self.terms.iter().all(|t| t.count_ones() == 2) {
            format!("{}PD", self.terms.len())
        } else {
            self.to_string()
        }
    }
}

impl serde::Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_saturated() && self.k > 2 {
            return write!(f, "k={};sat", self.k);
        }
        if self.is_independence() {
            return write!(f, "k={};ind", self.k);
        }
        let key = if self.terms.iter().all(|t| t.count_ones() == 2) {
            "pairs"
        } else {
            "terms"
        };
        let list: Vec<String> = self.terms.iter().map(|&t| term_label(t)).collect();
        write!(f, "k={};{key}={}", self.k, list.join(","))
    }
}

/// 0/1 design matrix of a model over the observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    model: ModelSpec,
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Rows follow the canonical pattern order; columns are the intercept, the
/// `k` main effects and then the interaction terms.
pub fn build_design(model: &ModelSpec) -> DesignMatrix {
    let k = model.k();
    let pats = canonical_patterns(k).expect("ModelSpec holds a valid k");
    let cols = model.param_count();
    let matrix = DMatrix::from_fn(pats.len(), cols, |r, c| {
        let p = &pats[r];
        let on = if c == 0 {
            true
        } else if c <= k {
            p.contains(c - 1)
        } else {
            p.covers(model.terms()[c - k - 1])
        };
        if on {
            1.0
        } else {
            0.0
        }
    });
    DesignMatrix {
        model: model.clone(),
        matrix,
    }
}

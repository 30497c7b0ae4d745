use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Mean,
    Cos,
    Sin,
}

/// One retained (base signal, harmonic order, kind) triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HarmonicEntry {
    pub base: usize,
    pub order: usize,
    pub kind: Kind,
}

/// Row map of a harmonic-augmented vector: the mean block first, then for
/// each order `n = 1..=N` a cos block followed by a sin block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HarmonicIndex {
    base_labels: Vec<String>,
    order: usize,
}

/// Block position of a (order, kind) pair inside the augmented layout.
pub(crate) fn block_of(order: usize, kind: Kind) -> Option<usize> {
    match (order, kind) {
        (0, Kind::Mean) => Some(0),
        (n, Kind::Cos) if n > 0 => Some(2 * n - 1),
        (n, Kind::Sin) if n > 0 => Some(2 * n),
        _ => None,
    }
}

pub(crate) fn block_kind(block: usize) -> (usize, Kind) {
    match block {
        0 => (0, Kind::Mean),
        b if b % 2 == 1 => (b.div_ceil(2), Kind::Cos),
        b => (b / 2, Kind::Sin),
    }
}

impl HarmonicIndex {
    pub fn new(base_labels: Vec<String>, order: usize) -> Self {
        Self { base_labels, order }
    }

    pub fn base_labels(&self) -> &[String] {
        &self.base_labels
    }

    pub fn n_base(&self) -> usize {
        self.base_labels.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_blocks(&self) -> usize {
        2 * self.order + 1
    }

    pub fn len(&self) -> usize {
        self.n_base() * self.n_blocks()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, e: HarmonicEntry) -> Option<usize> {
        if e.base >= self.n_base() || e.order > self.order {
            return None;
        }
        block_of(e.order, e.kind).map(|b| b * self.n_base() + e.base)
    }

    pub fn entry(&self, row: usize) -> Option<HarmonicEntry> {
        if row >= self.len() {
            return None;
        }
        let (order, kind) = block_kind(row / self.n_base());
        Some(HarmonicEntry {
            base: row % self.n_base(),
            order,
            kind,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = HarmonicEntry> + '_ {
        (0..self.len()).filter_map(|r| self.entry(r))
    }

    pub fn label(&self, row: usize) -> Option<String> {
        self.entry(row).map(|e| {
            let base = &self.base_labels[e.base];
            match e.kind {
                Kind::Mean => format!("{base}[0]"),
                Kind::Cos => format!("{base}[{}c]", e.order),
                Kind::Sin => format!("{base}[{}s]", e.order),
            }
        })
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).filter_map(|r| self.label(r)).collect()
    }

    /// Parses labels like `q[0]`, `beta_1c[2s]`. A bare base label means the mean.
    pub fn find(&self, label: &str) -> Result<usize> {
        let (base, order, kind) = parse_label(label)?;
        let bi = self
            .base_labels
            .iter()
            .position(|b| b == base)
            .ok_or_else(|| Error::MissingLabel(label.to_string()))?;
        self.row(HarmonicEntry {
            base: bi,
            order,
            kind,
        })
        .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }
}

fn parse_label(label: &str) -> Result<(&str, usize, Kind)> {
    let bad = || Error::MissingLabel(label.to_string());
    let Some(open) = label.rfind('[') else {
        return Ok((label, 0, Kind::Mean));
    };
    let inner = label[open + 1..].strip_suffix(']').ok_or_else(bad)?;
    let base = &label[..open];
    if inner == "0" {
        return Ok((base, 0, Kind::Mean));
    }
    let (digits, kind) = if let Some(d) = inner.strip_suffix('c') {
        (d, Kind::Cos)
    } else if let Some(d) = inner.strip_suffix('s') {
        (d, Kind::Sin)
    } else {
        return Err(bad());
    };
    let n: usize = digits.parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    Ok((base, n, kind))
}

impl fmt::Display for HarmonicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} signals x {} blocks", self.n_base(), self.n_blocks())
    }
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    row: usize,
    label: String,
    base: String,
    n: usize,
    kind: Kind,
}

#[derive(Serialize, Deserialize)]
struct IndexRepr {
    base_labels: Vec<String>,
    order: usize,
    #[serde(default)]
    entries: Vec<IndexRow>,
}

impl Serialize for HarmonicIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .entries()
            .enumerate()
            .map(|(row, e)| IndexRow {
                row,
                label: self.label(row).unwrap_or_default(),
                base: self.base_labels[e.base].clone(),
                n: e.order,
                kind: e.kind,
            })
            .collect();
        IndexRepr {
            base_labels: self.base_labels.clone(),
            order: self.order,
            entries,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HarmonicIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = IndexRepr::deserialize(d)?;
        if r.order > 64 {
            return Err(D::Error::custom("harmonic order above 64"));
        }
        let idx = HarmonicIndex::new(r.base_labels, r.order);
        for e in &r.entries {
            let ok = idx.entry(e.row).is_some_and(|t| {
                t.order == e.n && t.kind == e.kind && idx.base_labels[t.base] == e.base
            });
            if !ok {
                return Err(D::Error::custom(format!(
                    "index table row {} disagrees with the layout",
                    e.row
                )));
            }
        }
        Ok(idx)
    }
}

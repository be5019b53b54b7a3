use std::collections::BTreeMap;

/// Token reserved for values never seen while building the vocabulary.
pub const UNKNOWN_TOKEN: usize = 0;

/// Stable mapping from raw categorical codes to dense tokens `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: BTreeMap<u32, usize>,
}

impl Vocabulary {
    /// Builds from training values; tokens follow ascending raw value order so
    /// the mapping does not depend on iteration order.
    pub fn build<I: IntoIterator<Item = u32>>(values: I) -> Self {
        let mut index: BTreeMap<u32, usize> = values.into_iter().map(|v| (v, 0)).collect();
        for (i, tok) in index.values_mut().enumerate() {
            *tok = i + 1;
        }
        Self { index }
    }

    pub fn tokenize(&self, value: u32) -> usize {
        self.index.get(&value).copied().unwrap_or(UNKNOWN_TOKEN)
    }

    /// Number of known values (excluding the unknown token).
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Width of a one-hot encoding including the unknown slot.
    pub fn width(&self) -> usize {
        self.index.len() + 1
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        self.index.keys().copied()
    }
}

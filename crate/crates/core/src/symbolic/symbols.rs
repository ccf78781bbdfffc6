use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a coordinate in a [`SymbolTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// What a coordinate stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    State(usize),
    /// Control `u_j`, i.e. the order-0 jet.
    Control(usize),
    /// `order`-th time derivative of control `control` (order ≥ 1).
    Jet { control: usize, order: usize },
    /// `order`-th time derivative of the flat-output component `index`.
    Output { index: usize, order: usize },
    Free,
}

/// Ordered, immutable coordinate names: states, controls, control jets up to a
/// truncation order, then flat-output jets.
///
/// Ids are assigned in that order, jets ordered by (order, control), so two
/// tables over the same states and controls agree on every id they share.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    names: Vec<String>,
    kinds: Vec<SymbolKind>,
    lookup: HashMap<String, SymbolId>,
    n_states: usize,
    n_controls: usize,
    jet_order: usize,
    n_outputs: usize,
    output_order: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolTableError {
    #[error("duplicate symbol name `{0}`")]
    Duplicate(String),
    #[error("invalid symbol name `{0}`")]
    InvalidName(String),
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SymbolTable {
    /// Table with control jets up to `jet_order` and `n_outputs` flat-output
    /// names `y1..` with derivatives up to `output_order`.
    pub fn new(
        states: &[impl AsRef<str>],
        controls: &[impl AsRef<str>],
        jet_order: usize,
        n_outputs: usize,
        output_order: usize,
    ) -> Result<Self, SymbolTableError> {
        let mut table = SymbolTable {
            names: Vec::new(),
            kinds: Vec::new(),
            lookup: HashMap::new(),
            n_states: states.len(),
            n_controls: controls.len(),
            jet_order,
            n_outputs,
            output_order,
        };
        for (i, s) in states.iter().enumerate() {
            table.push(s.as_ref().to_string(), SymbolKind::State(i))?;
        }
        for (j, c) in controls.iter().enumerate() {
            table.push(c.as_ref().to_string(), SymbolKind::Control(j))?;
        }
        for order in 1..=jet_order {
            for (j, c) in controls.iter().enumerate() {
                table.push(format!("{}_d{}", c.as_ref(), order), SymbolKind::Jet { control: j, order })?;
            }
        }
        for index in 0..n_outputs {
            for order in 0..=output_order {
                let name = if order == 0 {
                    format!("y{}", index + 1)
                } else {
                    format!("y{}_d{}", index + 1, order)
                };
                table.push(name, SymbolKind::Output { index, order })?;
            }
        }
        Ok(table)
    }

    /// Table of plain named symbols (e.g. a time variable for signals).
    pub fn free(names: &[impl AsRef<str>]) -> Result<Self, SymbolTableError> {
        let mut table = SymbolTable {
            names: Vec::new(),
            kinds: Vec::new(),
            lookup: HashMap::new(),
            n_states: 0,
            n_controls: 0,
            jet_order: 0,
            n_outputs: 0,
            output_order: 0,
        };
        for n in names {
            table.push(n.as_ref().to_string(), SymbolKind::Free)?;
        }
        Ok(table)
    }

    fn push(&mut self, name: String, kind: SymbolKind) -> Result<(), SymbolTableError> {
        if !valid_name(&name) {
            return Err(SymbolTableError::InvalidName(name));
        }
        if self.lookup.contains_key(&name) {
            return Err(SymbolTableError::Duplicate(name));
        }
        let id = SymbolId(self.names.len() as u32);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.kinds.push(kind);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        self.names.get(id.index()).map(String::as_str).unwrap_or("?")
    }

    pub fn kind(&self, id: SymbolId) -> Option<SymbolKind> {
        self.kinds.get(id.index()).copied()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn jet_order(&self) -> usize {
        self.jet_order
    }

    pub fn output_order(&self) -> usize {
        self.output_order
    }

    pub fn state(&self, i: usize) -> SymbolId {
        assert!(i < self.n_states, "state index {i} out of range");
        SymbolId(i as u32)
    }

    pub fn states(&self) -> Vec<SymbolId> {
        (0..self.n_states).map(|i| self.state(i)).collect()
    }

    pub fn control(&self, j: usize) -> SymbolId {
        assert!(j < self.n_controls, "control index {j} out of range");
        SymbolId((self.n_states + j) as u32)
    }

    pub fn controls(&self) -> Vec<SymbolId> {
        (0..self.n_controls).map(|j| self.control(j)).collect()
    }

    /// `order`-th derivative of control `j`; order 0 is the control itself.
    pub fn jet(&self, j: usize, order: usize) -> Option<SymbolId> {
        if j >= self.n_controls || order > self.jet_order {
            return None;
        }
        if order == 0 {
            return Some(self.control(j));
        }
        let base = self.n_states + self.n_controls;
        Some(SymbolId((base + (order - 1) * self.n_controls + j) as u32))
    }

    /// `order`-th derivative of flat-output component `index` (0-based).
    pub fn output(&self, index: usize, order: usize) -> Option<SymbolId> {
        if index >= self.n_outputs || order > self.output_order {
            return None;
        }
        let base = self.n_states + self.n_controls * (1 + self.jet_order);
        Some(SymbolId((base + index * (self.output_order + 1) + order) as u32))
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (0..self.names.len()).map(|i| SymbolId(i as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_bijective_with_names() {
        let t = SymbolTable::new(&["x1", "x2", "x3"], &["u1", "u2"], 3, 2, 2).unwrap();
        for id in t.ids() {
            assert_eq!(t.lookup(t.name(id)), Some(id));
        }
        assert_eq!(t.name(t.jet(1, 2).unwrap()), "u2_d2");
        assert_eq!(t.kind(t.jet(0, 3).unwrap()), Some(SymbolKind::Jet { control: 0, order: 3 }));
        assert_eq!(t.name(t.output(1, 0).unwrap()), "y2");
        assert_eq!(t.name(t.output(0, 2).unwrap()), "y1_d2");
        assert_eq!(t.jet(0, 4), None);
    }

    #[test]
    fn shared_ids_agree_across_jet_orders() {
        let a = SymbolTable::new(&["x1", "x2"], &["u1"], 2, 0, 0).unwrap();
        let b = SymbolTable::new(&["x1", "x2"], &["u1"], 6, 0, 0).unwrap();
        for order in 0..=2 {
            assert_eq!(a.jet(0, order), b.jet(0, order));
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert_eq!(
            SymbolTable::new(&["x", "x"], &["u"], 0, 0, 0),
            Err(SymbolTableError::Duplicate("x".into()))
        );
        assert!(matches!(
            SymbolTable::new(&["2x"], &["u"], 0, 0, 0),
            Err(SymbolTableError::InvalidName(_))
        ));
    }
}

//! SMILES reader and writer for the heavy-atom subset we support: organic
//! subset and bracket atoms, bonds `- = # :`, branches, ring closures
//! (`1`..`9`, `%nn`) and lowercase aromatics. Charges, isotopes,
//! stereochemistry and disconnected components are rejected.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use super::{BondOrder, Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("non-ASCII byte at position {pos}")]
    NonAscii { pos: usize },
    #[error("unbalanced parenthesis at position {pos}")]
    UnbalancedParenthesis { pos: usize },
    #[error("ring bond {label} opened at position {pos} is never closed")]
    UnclosedRingBond { pos: usize, label: u32 },
    #[error("unknown element '{symbol}' at position {pos}")]
    UnknownElement { pos: usize, symbol: String },
    #[error("unexpected character '{ch}' at position {pos}")]
    UnexpectedCharacter { pos: usize, ch: char },
    #[error("unsupported {what} at position {pos}")]
    Unsupported { pos: usize, what: &'static str },
    #[error("aromatic bond between non-aromatic atoms at position {pos}")]
    AromaticBondMismatch { pos: usize },
    #[error("atom bonded to itself at position {pos}")]
    SelfBond { pos: usize },
    #[error("duplicate bond at position {pos}")]
    DuplicateBond { pos: usize },
    #[error("bond symbol without a following atom at position {pos}")]
    DanglingBond { pos: usize },
}

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    pos: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<(Element, bool)>,
    bonds: Vec<(usize, usize, BondOrder)>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parse a SMILES string into a heavy-atom graph. Hydrogens are implicit.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::Empty);
    }
    if let Some(pos) = trimmed.bytes().position(|b| !b.is_ascii()) {
        return Err(SmilesError::NonAscii { pos });
    }
    let mut p = Parser {
        src: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    Ok(MolecularGraph::from_parts(p.atoms, p.bonds, trimmed.to_string()))
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    let prev = self.prev.ok_or(SmilesError::UnbalancedParenthesis { pos: at })?;
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { pos: at });
                    }
                    self.branches.push((prev, at));
                    self.pos += 1;
                }
                b')' => {
                    let (atom, _) = self
                        .branches
                        .pop()
                        .ok_or(SmilesError::UnbalancedParenthesis { pos: at })?;
                    if self.pending.is_some() {
                        return Err(SmilesError::DanglingBond { pos: at });
                    }
                    self.prev = Some(atom);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(SmilesError::UnexpectedCharacter { pos: at, ch: c as char });
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_closure()?,
                b'[' => self.bracket_atom()?,
                b'/' | b'\\' => {
                    return Err(SmilesError::Unsupported {
                        pos: at,
                        what: "directional bond",
                    })
                }
                b'.' => {
                    return Err(SmilesError::Unsupported {
                        pos: at,
                        what: "disconnected component",
                    })
                }
                c if c.is_ascii_alphabetic() => self.organic_atom()?,
                _ => return Err(SmilesError::UnexpectedCharacter { pos: at, ch: c as char }),
            }
        }
        if let Some(&(_, pos)) = self.branches.first() {
            return Err(SmilesError::UnbalancedParenthesis { pos });
        }
        if let Some((&label, open)) = self.rings.iter().next() {
            return Err(SmilesError::UnclosedRingBond {
                pos: open.pos,
                label,
            });
        }
        if let Some((_, pos)) = self.pending {
            return Err(SmilesError::DanglingBond { pos });
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<(), SmilesError> {
        let at = self.pos;
        let c = self.src[at];
        let next = self.src.get(at + 1).copied();
        let (element, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::CL, false, 2),
            (b'B', Some(b'r')) => (Element::BR, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => {
                let end = if next.is_some_and(|n| n.is_ascii_lowercase()) { at + 2 } else { at + 1 };
                let symbol = core::str::from_utf8(&self.src[at..end]).unwrap_or("?").to_string();
                return Err(SmilesError::UnknownElement { pos: at, symbol });
            }
        };
        self.pos += len;
        self.add_atom(element, aromatic, at)
    }

    fn bracket_atom(&mut self) -> Result<(), SmilesError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return Err(SmilesError::Unsupported {
                pos: self.pos,
                what: "isotope",
            });
        }
        let sym_start = self.pos;
        let first = self.peek().ok_or(SmilesError::UnexpectedCharacter { pos: open, ch: '[' })?;
        if !first.is_ascii_alphabetic() {
            return Err(SmilesError::UnexpectedCharacter {
                pos: sym_start,
                ch: first as char,
            });
        }
        let aromatic = first.is_ascii_lowercase();
        self.pos += 1;
        let mut sym = String::new();
        sym.push(first.to_ascii_uppercase() as char);
        // Two-letter symbols: try the longer match first.
        if let Some(second) = self.peek().filter(u8::is_ascii_lowercase) {
            let mut two = sym.clone();
            two.push(second as char);
            if Element::from_symbol(&two).is_some() {
                sym = two;
                self.pos += 1;
            }
        }
        let element = Element::from_symbol(&sym).ok_or_else(|| SmilesError::UnknownElement {
            pos: sym_start,
            symbol: sym.clone(),
        })?;
        if aromatic && !element.can_be_aromatic() {
            return Err(SmilesError::UnknownElement {
                pos: sym_start,
                symbol: sym.to_ascii_lowercase(),
            });
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b'+') | Some(b'-') => {
                return Err(SmilesError::Unsupported {
                    pos: self.pos,
                    what: "charge",
                })
            }
            Some(b'@') => {
                return Err(SmilesError::Unsupported {
                    pos: self.pos,
                    what: "chirality",
                })
            }
            Some(b':') => {
                return Err(SmilesError::Unsupported {
                    pos: self.pos,
                    what: "atom class",
                })
            }
            Some(c) => {
                return Err(SmilesError::UnexpectedCharacter {
                    pos: self.pos,
                    ch: c as char,
                })
            }
            None => return Err(SmilesError::UnexpectedCharacter { pos: open, ch: '[' }),
        }
        self.add_atom(element, aromatic, open)
    }

    fn add_atom(&mut self, element: Element, aromatic: bool, at: usize) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push((element, aromatic));
        if let Some(prev) = self.prev {
            let explicit = self.pending.take();
            let order = self.resolve_order(prev, idx, explicit.map(|(o, _)| o), at)?;
            self.bonds.push((prev, idx, order));
        } else if let Some((_, pos)) = self.pending {
            return Err(SmilesError::DanglingBond { pos });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn resolve_order(
        &self,
        a: usize,
        b: usize,
        explicit: Option<BondOrder>,
        pos: usize,
    ) -> Result<BondOrder, SmilesError> {
        let both_aromatic = self.atoms[a].1 && self.atoms[b].1;
        match explicit {
            Some(BondOrder::Aromatic) if !both_aromatic => {
                Err(SmilesError::AromaticBondMismatch { pos })
            }
            Some(o) => Ok(o),
            None if both_aromatic => Ok(BondOrder::Aromatic),
            None => Ok(BondOrder::Single),
        }
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let at = self.pos;
        let label = if self.src[at] == b'%' {
            let digits = self.src.get(at + 1..at + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
            let d = digits.ok_or(SmilesError::UnexpectedCharacter { pos: at, ch: '%' })?;
            self.pos += 3;
            u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
        } else {
            self.pos += 1;
            u32::from(self.src[at] - b'0')
        };
        let atom = self.prev.ok_or(SmilesError::UnexpectedCharacter {
            pos: at,
            ch: self.src[at] as char,
        })?;
        let explicit = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(
                    label,
                    RingOpen {
                        atom,
                        order: explicit,
                        pos: at,
                    },
                );
            }
            Some(open) => {
                if open.atom == atom {
                    return Err(SmilesError::SelfBond { pos: at });
                }
                let exists = self.bonds.iter().any(|&(x, y, _)| {
                    (x == atom && y == open.atom) || (x == open.atom && y == atom)
                });
                if exists {
                    return Err(SmilesError::DuplicateBond { pos: at });
                }
                let order = self.resolve_order(open.atom, atom, explicit.or(open.order), at)?;
                self.bonds.push((open.atom, atom, order));
            }
        }
        Ok(())
    }
}

/// Write a SMILES string for `g` (depth-first from atom 0, neighbours in
/// index order).
pub fn to_smiles(g: &MolecularGraph) -> String {
    to_smiles_with_order(g).0
}

/// Like [`to_smiles`], also returning the original index of each atom in
/// output order, so that atom `k` of the re-parsed graph is `order[k]`.
pub fn to_smiles_with_order(g: &MolecularGraph) -> (String, Vec<usize>) {
    let n = g.atom_count();
    let mut out = String::new();
    let mut order = Vec::with_capacity(n);
    if n == 0 {
        return (out, order);
    }
    // Depth-first spanning forest; non-tree bonds become ring closures.
    let mut visited = vec![false; n];
    let mut tree_bond = vec![false; g.bond_count()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut dfs_order = Vec::with_capacity(n);
    for root in 0..n {
        if visited[root] {
            continue;
        }
        let mut stack = vec![root];
        visited[root] = true;
        // Recursive-equivalent preorder with explicit stack of iterators.
        let mut iters: Vec<usize> = vec![0];
        dfs_order.push(root);
        while let Some(&v) = stack.last() {
            let k = iters.last_mut().expect("parallel stacks");
            if *k < g.neighbors(v).len() {
                let (u, bi) = g.neighbors(v)[*k];
                *k += 1;
                if !visited[u] {
                    visited[u] = true;
                    tree_bond[bi] = true;
                    children[v].push((u, bi));
                    dfs_order.push(u);
                    stack.push(u);
                    iters.push(0);
                }
            } else {
                stack.pop();
                iters.pop();
            }
        }
    }
    let rank: Vec<usize> = {
        let mut r = vec![0; n];
        for (i, &a) in dfs_order.iter().enumerate() {
            r[a] = i;
        }
        r
    };
    // Ring closures: opened at the earlier atom, closed at the later one.
    let mut closures: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (bi, b) in g.bonds().iter().enumerate() {
        if tree_bond[bi] {
            continue;
        }
        let (first, second) = if rank[b.a] < rank[b.b] { (b.a, b.b) } else { (b.b, b.a) };
        closures[first].push((bi, true));
        closures[second].push((bi, false));
    }
    for c in &mut closures {
        c.sort_by_key(|&(bi, opening)| (!opening, bi));
    }
    let mut labels: BTreeMap<usize, u32> = BTreeMap::new();
    let mut in_use: Vec<bool> = vec![false; 100];

    enum Step {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    let mut roots: Vec<usize> = Vec::new();
    {
        let mut seen = vec![false; n];
        for &a in &dfs_order {
            if !seen[a] {
                // Mark the subtree of each root.
                let mut st = vec![a];
                while let Some(v) = st.pop() {
                    seen[v] = true;
                    st.extend(children[v].iter().map(|&(c, _)| c));
                }
                roots.push(a);
            }
        }
    }
    for (ri, &root) in roots.iter().enumerate() {
        if ri > 0 {
            out.push('.');
        }
        let mut work = vec![Step::Atom(root, None)];
        while let Some(step) = work.pop() {
            match step {
                Step::Open => out.push('('),
                Step::Close => out.push(')'),
                Step::Atom(v, via) => {
                    if let Some(bi) = via {
                        out.push_str(bond_symbol(g, bi));
                    }
                    write_atom(g, v, &mut out);
                    order.push(v);
                    for &(bi, opening) in &closures[v] {
                        if opening {
                            let label = (1..100).find(|&l| !in_use[l as usize]).unwrap_or(99);
                            in_use[label as usize] = true;
                            labels.insert(bi, label);
                            out.push_str(bond_symbol(g, bi));
                            write_label(label, &mut out);
                        } else {
                            let label = labels.remove(&bi).expect("opened earlier");
                            in_use[label as usize] = false;
                            write_label(label, &mut out);
                        }
                    }
                    let kids = &children[v];
                    if let Some((&(last, lbi), rest)) = kids.split_last() {
                        // Pushed in reverse so branches are emitted in order.
                        work.push(Step::Atom(last, Some(lbi)));
                        for &(c, cbi) in rest.iter().rev() {
                            work.push(Step::Close);
                            work.push(Step::Atom(c, Some(cbi)));
                            work.push(Step::Open);
                        }
                    }
                }
            }
        }
    }
    (out, order)
}

fn bond_symbol(g: &MolecularGraph, bi: usize) -> &'static str {
    let b = g.bonds()[bi];
    let both_aromatic = g.atoms()[b.a].aromatic && g.atoms()[b.b].aromatic;
    match b.order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

fn write_atom(g: &MolecularGraph, v: usize, out: &mut String) {
    let a = &g.atoms()[v];
    let sym = a.element.symbol();
    if a.element.is_organic_subset() {
        if a.aromatic {
            out.push_str(&sym.to_ascii_lowercase());
        } else {
            out.push_str(sym);
        }
    } else {
        out.push('[');
        if a.aromatic {
            out.push_str(&sym.to_ascii_lowercase());
        } else {
            out.push_str(sym);
        }
        out.push(']');
    }
}

fn write_label(label: u32, out: &mut String) {
    if label < 10 {
        let _ = write!(out, "{label}");
    } else {
        let _ = write!(out, "%{label:02}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bond_count(), 0);
    }

    #[test]
    fn benzene() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 6);
        assert!(g.atoms().iter().all(|a| a.aromatic && a.ring));
        assert!(g.bonds().iter().all(|b| b.order == BondOrder::Aromatic && b.ring));
    }

    #[test]
    fn aspirin_counts() {
        let g = parse_smiles("CC(=O)OC1=CC=CC=C1C(=O)O").unwrap();
        assert_eq!(g.atom_count(), 13);
        assert_eq!(g.bond_count(), 13);
        assert_eq!(g.ring_count(), 1);
        assert_eq!(g.atoms().iter().filter(|a| a.ring).count(), 6);
    }

    #[test]
    fn bracket_and_two_letter_atoms() {
        let g = parse_smiles("ClC[Si](Br)c1cc[nH]c1").unwrap();
        let syms: Vec<&str> = g.atoms().iter().map(|a| a.element.symbol()).collect();
        assert_eq!(syms, ["Cl", "C", "Si", "Br", "C", "C", "C", "N", "C"]);
        assert!(g.atoms()[7].aromatic);
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            parse_smiles("CC(C"),
            Err(SmilesError::UnbalancedParenthesis { pos: 2 })
        );
        assert_eq!(
            parse_smiles("CC)C"),
            Err(SmilesError::UnbalancedParenthesis { pos: 2 })
        );
        assert_eq!(
            parse_smiles("C1CC"),
            Err(SmilesError::UnclosedRingBond { pos: 1, label: 1 })
        );
        assert!(matches!(
            parse_smiles("CXC"),
            Err(SmilesError::UnknownElement { pos: 1, .. })
        ));
        assert!(matches!(
            parse_smiles("C[Xx]"),
            Err(SmilesError::UnknownElement { pos: 2, .. })
        ));
        assert_eq!(parse_smiles("  "), Err(SmilesError::Empty));
        assert!(matches!(parse_smiles("C[N+]"), Err(SmilesError::Unsupported { .. })));
        assert!(matches!(parse_smiles("C:C"), Err(SmilesError::AromaticBondMismatch { .. })));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::SelfBond { .. })));
        assert!(matches!(parse_smiles("CC="), Err(SmilesError::DanglingBond { .. })));
    }

    #[test]
    fn writer_round_trips_examples() {
        for s in [
            "C",
            "CCO",
            "c1ccccc1",
            "Cc1ccccc1",
            "CC(=O)OC1=CC=CC=C1C(=O)O",
            "c1ccc2ccccc2c1",
            "c1ccc(-c2ccccc2)cc1",
            "C1CC2CCC1C2",
            "N#CC(Cl)(Br)[Si]C",
        ] {
            let g = parse_smiles(s).unwrap();
            let (out, order) = to_smiles_with_order(&g);
            let h = parse_smiles(&out).unwrap();
            assert_eq!(h.atom_count(), g.atom_count(), "{s} -> {out}");
            let mut e1: Vec<(usize, usize, BondOrder)> = g
                .bonds()
                .iter()
                .map(|b| (b.a.min(b.b), b.a.max(b.b), b.order))
                .collect();
            let mut e2: Vec<(usize, usize, BondOrder)> = h
                .bonds()
                .iter()
                .map(|b| {
                    let (x, y) = (order[b.a], order[b.b]);
                    (x.min(y), x.max(y), b.order)
                })
                .collect();
            e1.sort();
            e2.sort();
            assert_eq!(e1, e2, "{s} -> {out}");
        }
    }
}

//! Symbolic normal ordering of mode-operator strings.
//!
//! Terms carry exact rational-complex coefficients, Kronecker deltas between
//! mode indices, symbolic overlap factors `V_pq` and sums over symbolic
//! indices. Symbolic indices always range over the unoccupied modes (`i != 0`);
//! reduction to a polynomial in `m` turns those restricted sums into
//! unrestricted ones by inclusion-exclusion and then collapses the chains of
//! overlap factors with `(V^k)_00 = m`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = Ratio<i64>;
pub type Coeff = Complex<Rational>;

/// Largest supported moment order.
pub const MAX_MOMENT: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum AlgebraError {
    #[error("unsupported expression: {0}")]
    Unsupported(String),
    #[error("reduced polynomial has an imaginary coefficient at m^{0}")]
    NonReal(u32),
    #[error("moment order {0} outside 1..={MAX_MOMENT}")]
    MomentOutOfRange(usize),
    #[error("bad term document: {0}")]
    Document(String),
}

pub fn coeff(n: i64) -> Coeff {
    Complex::new(Rational::from_integer(n), Rational::zero())
}

/// Which mode an operator acts on.
///
/// `Fixed(0)` is the occupied mode; the constructor [`ModeIndex::fixed`]
/// normalizes it to `Occupied`. Symbolic indices are restricted to the
/// unoccupied modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModeIndex {
    Occupied,
    Fixed(u32),
    Sym(u32),
}

const SYM_NAMES: [&str; 8] = ["i", "j", "k", "l", "p", "q", "r", "s"];

impl ModeIndex {
    pub fn fixed(mode: u32) -> Self {
        if mode == 0 {
            Self::Occupied
        } else {
            Self::Fixed(mode)
        }
    }

    /// Concrete mode number, if any.
    pub fn concrete(self) -> Option<u32> {
        match self {
            Self::Occupied => Some(0),
            Self::Fixed(k) => Some(k),
            Self::Sym(_) => None,
        }
    }

    fn sym_name(id: u32) -> String {
        match SYM_NAMES.get(id.wrapping_sub(1) as usize) {
            Some(name) if id >= 1 => (*name).to_string(),
            _ => format!("x{id}"),
        }
    }

    fn parse_sym(name: &str) -> Option<u32> {
        if let Some(pos) = SYM_NAMES.iter().position(|&n| n == name) {
            return Some(pos as u32 + 1);
        }
        name.strip_prefix('x')?.parse().ok()
    }
}

/// `Some(true)` if the two indices certainly denote the same mode,
/// `Some(false)` if certainly different, `None` if it depends on the values
/// of symbolic indices.
pub fn same_mode(a: ModeIndex, b: ModeIndex) -> Option<bool> {
    use ModeIndex::*;
    match (a, b) {
        (Sym(x), Sym(y)) if x == y => Some(true),
        (Sym(_), Occupied) | (Occupied, Sym(_)) => Some(false),
        (Sym(_), _) | (_, Sym(_)) => None,
        _ => Some(a == b),
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Occupied => write!(f, "0"),
            Self::Fixed(k) => write!(f, "{k}"),
            Self::Sym(id) => write!(f, "{}", Self::sym_name(*id)),
        }
    }
}

impl Serialize for ModeIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Occupied => s.serialize_u32(0),
            Self::Fixed(k) => s.serialize_u32(*k),
            Self::Sym(id) => s.serialize_str(&Self::sym_name(*id)),
        }
    }
}

impl<'de> Deserialize<'de> for ModeIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(Self::fixed(k)),
            Raw::Name(name) => Self::parse_sym(&name)
                .map(Self::Sym)
                .ok_or_else(|| serde::de::Error::custom(format!("bad index name {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Op {
    pub kind: OpKind,
    pub index: ModeIndex,
}

impl Op {
    pub fn create(index: ModeIndex) -> Self {
        Self {
            kind: OpKind::Create,
            index,
        }
    }

    pub fn annihilate(index: ModeIndex) -> Self {
        Self {
            kind: OpKind::Annihilate,
            index,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::Create => write!(f, "b_{}†", self.index),
            OpKind::Annihilate => write!(f, "b_{}", self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Fermion,
    Boson,
    /// The occupied-mode operators are the ordinary number 1; every other
    /// mode is bosonic.
    Coherent,
}

impl Statistics {
    fn swap_sign(self) -> i64 {
        match self {
            Self::Fermion => -1,
            Self::Boson | Self::Coherent => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Fermion => "fermion",
            Self::Boson => "boson",
            Self::Coherent => "coherent",
        }
    }
}

impl std::str::FromStr for Statistics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fermion" => Ok(Self::Fermion),
            "boson" => Ok(Self::Boson),
            "coherent" => Ok(Self::Coherent),
            other => Err(format!(
                "unknown statistics {other:?} (fermion|boson|coherent)"
            )),
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `coeff * prod(deltas) * prod(V) * ops`, summed over the symbolic indices
/// listed in `sums`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TermDoc", try_from = "TermDoc")]
pub struct Term {
    pub coeff: Coeff,
    pub deltas: Vec<(ModeIndex, ModeIndex)>,
    pub overlaps: Vec<(ModeIndex, ModeIndex)>,
    pub ops: Vec<Op>,
    pub sums: Vec<u32>,
}

impl Term {
    pub fn new(ops: Vec<Op>) -> Self {
        Self {
            coeff: coeff(1),
            deltas: Vec::new(),
            overlaps: Vec::new(),
            ops,
            sums: Vec::new(),
        }
    }

    pub fn scalar(coeff: Coeff) -> Self {
        Self {
            coeff,
            ..Self::new(Vec::new())
        }
    }

    pub fn with_coeff(mut self, coeff: Coeff) -> Self {
        self.coeff = coeff;
        self
    }

    pub fn with_overlap(mut self, p: ModeIndex, q: ModeIndex) -> Self {
        self.overlaps.push((p, q));
        self
    }

    pub fn with_delta(mut self, a: ModeIndex, b: ModeIndex) -> Self {
        self.deltas.push((a, b));
        self
    }

    pub fn summed_over(mut self, id: u32) -> Self {
        if !self.sums.contains(&id) {
            self.sums.push(id);
        }
        self
    }

    pub fn is_normal_ordered(&self) -> bool {
        self.ops
            .windows(2)
            .all(|w| !(w[0].kind == OpKind::Annihilate && w[1].kind == OpKind::Create))
    }

    pub fn is_scalar(&self) -> bool {
        self.ops.is_empty()
    }

    fn substitute(&mut self, from: ModeIndex, to: ModeIndex) {
        let sub = |x: &mut ModeIndex| {
            if *x == from {
                *x = to;
            }
        };
        for (a, b) in self.deltas.iter_mut().chain(self.overlaps.iter_mut()) {
            sub(a);
            sub(b);
        }
        for op in &mut self.ops {
            sub(&mut op.index);
        }
    }

    fn is_bound(&self, idx: ModeIndex) -> bool {
        matches!(idx, ModeIndex::Sym(id) if self.sums.contains(&id))
    }

    /// Resolve every delta that can be resolved. Returns `false` when the
    /// term vanishes.
    fn resolve_deltas(&mut self) -> bool {
        let mut i = 0;
        while i < self.deltas.len() {
            let (a, b) = self.deltas[i];
            match same_mode(a, b) {
                Some(true) => {
                    self.deltas.swap_remove(i);
                }
                Some(false) => return false,
                None => {
                    let (from, to) = if self.is_bound(b) {
                        (b, a)
                    } else if self.is_bound(a) {
                        (a, b)
                    } else {
                        i += 1;
                        continue;
                    };
                    self.deltas.swap_remove(i);
                    if let ModeIndex::Sym(id) = from {
                        self.sums.retain(|&s| s != id);
                    }
                    self.substitute(from, to);
                    i = 0;
                }
            }
        }
        for d in &mut self.deltas {
            if d.1 < d.0 {
                *d = (d.1, d.0);
            }
        }
        true
    }

    /// Sort every maximal run of like-kind operators (creates ascending,
    /// annihilates descending; bound indices after free ones in a stable
    /// order). Returns `false` if a fermion run repeats a mode.
    fn sort_runs(&mut self, stats: Statistics) -> bool {
        let bound: BTreeSet<u32> = self.sums.iter().copied().collect();
        let key = |op: &Op| match op.index {
            ModeIndex::Sym(id) if bound.contains(&id) => (1u8, ModeIndex::Occupied),
            idx => (0u8, idx),
        };
        let mut start = 0;
        let mut swaps = 0usize;
        while start < self.ops.len() {
            let kind = self.ops[start].kind;
            let mut end = start + 1;
            while end < self.ops.len() && self.ops[end].kind == kind {
                end += 1;
            }
            let run = &mut self.ops[start..end];
            for a in 0..run.len() {
                for b in a + 1..run.len() {
                    if stats == Statistics::Fermion
                        && same_mode(run[a].index, run[b].index) == Some(true)
                    {
                        return false;
                    }
                }
            }
            // insertion sort so the swap parity is explicit
            for a in 1..run.len() {
                let mut b = a;
                while b > 0 {
                    let (ka, kb) = (key(&run[b - 1]), key(&run[b]));
                    let out_of_order = match kind {
                        OpKind::Create => ka > kb,
                        OpKind::Annihilate => ka < kb,
                    };
                    if !out_of_order {
                        break;
                    }
                    run.swap(b - 1, b);
                    swaps += 1;
                    b -= 1;
                }
            }
            start = end;
        }
        if stats == Statistics::Fermion && swaps % 2 == 1 {
            self.coeff = -self.coeff;
        }
        true
    }

    /// Rename bound indices in first-use order, starting above every free
    /// symbolic id, and sort the scalar factors.
    fn rename_bound(&mut self) {
        let max_free = self
            .all_indices()
            .filter_map(|idx| match idx {
                ModeIndex::Sym(id) if !self.sums.contains(&id) => Some(id),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut order: Vec<u32> = Vec::new();
        for idx in self.all_indices() {
            if let ModeIndex::Sym(id) = idx {
                if self.sums.contains(&id) && !order.contains(&id) {
                    order.push(id);
                }
            }
        }
        for &id in &self.sums {
            if !order.contains(&id) {
                order.push(id);
            }
        }
        let map: BTreeMap<u32, u32> = order
            .iter()
            .enumerate()
            .map(|(n, &id)| (id, max_free + 1 + n as u32))
            .collect();
        let rename = |idx: ModeIndex| match idx {
            ModeIndex::Sym(id) => ModeIndex::Sym(*map.get(&id).unwrap_or(&id)),
            other => other,
        };
        for (a, b) in self.deltas.iter_mut().chain(self.overlaps.iter_mut()) {
            *a = rename(*a);
            *b = rename(*b);
        }
        for d in &mut self.deltas {
            if d.1 < d.0 {
                *d = (d.1, d.0);
            }
        }
        for op in &mut self.ops {
            op.index = rename(op.index);
        }
        self.sums = self.sums.iter().map(|id| map[id]).collect();
        self.sums.sort_unstable();
        self.deltas.sort();
        self.overlaps.sort();
    }

    fn all_indices(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        self.ops
            .iter()
            .map(|op| op.index)
            .chain(self.overlaps.iter().flat_map(|&(a, b)| [a, b]))
            .chain(self.deltas.iter().flat_map(|&(a, b)| [a, b]))
    }

    /// Canonical representative of the term, or `None` if it vanishes.
    pub fn canonical(mut self, stats: Statistics) -> Option<Self> {
        if stats == Statistics::Coherent {
            self.ops.retain(|op| op.index != ModeIndex::Occupied);
        }
        if self.coeff.is_zero() || !self.resolve_deltas() {
            return None;
        }
        if !self.sort_runs(stats) {
            return None;
        }
        for _ in 0..8 {
            let before = self.clone();
            self.rename_bound();
            if self == before {
                break;
            }
        }
        Some(self)
    }

    fn key(&self) -> TermKey {
        (
            self.deltas.clone(),
            self.overlaps.clone(),
            self.ops.clone(),
            self.sums.clone(),
        )
    }
}

type TermKey = (
    Vec<(ModeIndex, ModeIndex)>,
    Vec<(ModeIndex, ModeIndex)>,
    Vec<Op>,
    Vec<u32>,
);

fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn fmt_coeff(c: &Coeff) -> String {
    match (c.re.is_zero(), c.im.is_zero()) {
        (_, true) => fmt_rational(&c.re),
        (true, false) => format!("{}i", fmt_rational(&c.im)),
        (false, false) => format!("({} + {}i)", fmt_rational(&c.re), fmt_rational(&c.im)),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fmt_coeff(&self.coeff))?;
        for id in &self.sums {
            write!(f, " Σ_{}≠0", ModeIndex::sym_name(*id))?;
        }
        for (a, b) in &self.deltas {
            write!(f, " δ({a},{b})")?;
        }
        for (p, q) in &self.overlaps {
            write!(f, " V({p},{q})")?;
        }
        for op in &self.ops {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermDoc {
    coeff: [i64; 4],
    deltas: Vec<[ModeIndex; 2]>,
    #[serde(rename = "V")]
    overlaps: Vec<[ModeIndex; 2]>,
    ops: Vec<(String, ModeIndex)>,
    sums: Vec<ModeIndex>,
}

impl From<Term> for TermDoc {
    fn from(t: Term) -> Self {
        Self {
            coeff: [
                *t.coeff.re.numer(),
                *t.coeff.re.denom(),
                *t.coeff.im.numer(),
                *t.coeff.im.denom(),
            ],
            deltas: t.deltas.iter().map(|&(a, b)| [a, b]).collect(),
            overlaps: t.overlaps.iter().map(|&(a, b)| [a, b]).collect(),
            ops: t
                .ops
                .iter()
                .map(|op| {
                    let tag = match op.kind {
                        OpKind::Create => "c",
                        OpKind::Annihilate => "a",
                    };
                    (tag.to_string(), op.index)
                })
                .collect(),
            sums: t.sums.iter().map(|&id| ModeIndex::Sym(id)).collect(),
        }
    }
}

impl TryFrom<TermDoc> for Term {
    type Error = AlgebraError;

    fn try_from(doc: TermDoc) -> Result<Self, Self::Error> {
        let [rn, rd, inum, id] = doc.coeff;
        if rd == 0 || id == 0 {
            return Err(AlgebraError::Document("zero denominator".into()));
        }
        let ops = doc
            .ops
            .into_iter()
            .map(|(tag, index)| match tag.as_str() {
                "c" => Ok(Op::create(index)),
                "a" => Ok(Op::annihilate(index)),
                other => Err(AlgebraError::Document(format!(
                    "bad operator tag {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let sums = doc
            .sums
            .into_iter()
            .map(|idx| match idx {
                ModeIndex::Sym(id) => Ok(id),
                other => Err(AlgebraError::Document(format!("cannot sum over {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            coeff: Complex::new(Rational::new(rn, rd), Rational::new(inum, id)),
            deltas: doc.deltas.into_iter().map(|[a, b]| (a, b)).collect(),
            overlaps: doc.overlaps.into_iter().map(|[a, b]| (a, b)).collect(),
            ops,
            sums,
        })
    }
}

/// Sum of canonical terms with like terms merged and zeros dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Expression {
    pub terms: Vec<Term>,
}

impl Expression {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I, stats: Statistics) -> Self {
        let mut merged: BTreeMap<TermKey, Term> = BTreeMap::new();
        for term in terms.into_iter().filter_map(|t| t.canonical(stats)) {
            match merged.entry(term.key()) {
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let c = e.get().coeff + term.coeff;
                    e.get_mut().coeff = c;
                }
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(term);
                }
            }
        }
        Self {
            terms: merged
                .into_values()
                .filter(|t| !t.coeff.is_zero())
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value of an expression made only of plain numbers (no deltas,
    /// overlaps, sums or operators).
    pub fn scalar_value(&self) -> Option<Coeff> {
        let mut total = coeff(0);
        for t in &self.terms {
            if !(t.ops.is_empty()
                && t.deltas.is_empty()
                && t.overlaps.is_empty()
                && t.sums.is_empty())
            {
                return None;
            }
            total += t.coeff;
        }
        Some(total)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Exchange the operators at `pos` and `pos + 1`: like-kind operators pick
/// up the statistics sign; `b_x b_y†` becomes `delta_xy ± b_y† b_x`.
pub fn swap_adjacent(term: &Term, pos: usize, stats: Statistics) -> Vec<Term> {
    let mut swapped = term.clone();
    swapped.ops.swap(pos, pos + 1);
    swapped.coeff = term.coeff * coeff(stats.swap_sign());
    let (left, right) = (term.ops[pos], term.ops[pos + 1]);
    let mut out = vec![swapped];
    if left.kind == OpKind::Annihilate && right.kind == OpKind::Create {
        if let Some(contracted) = contraction(term, pos, left.index, right.index) {
            out.push(contracted);
        }
    } else if left.kind == OpKind::Create && right.kind == OpKind::Annihilate {
        // b_x† b_y = ± (b_y b_x† - delta_xy)
        if let Some(mut contracted) = contraction(term, pos, left.index, right.index) {
            contracted.coeff = -contracted.coeff * coeff(stats.swap_sign());
            out.push(contracted);
        }
    }
    out
}

fn contraction(term: &Term, pos: usize, x: ModeIndex, y: ModeIndex) -> Option<Term> {
    let mut t = term.clone();
    t.ops.drain(pos..pos + 2);
    match same_mode(x, y) {
        Some(false) => None,
        Some(true) => Some(t),
        None => Some(t.with_delta(x, y)),
    }
}

/// Rewrite `term` as a sum of normal-ordered terms (every creation operator
/// to the left of every annihilation operator).
pub fn normal_order(term: &Term, stats: Statistics) -> Expression {
    let mut start = term.clone();
    if stats == Statistics::Coherent {
        start.ops.retain(|op| op.index != ModeIndex::Occupied);
    }
    let mut work = vec![start];
    let mut done = Vec::new();
    while let Some(t) = work.pop() {
        let pos = t
            .ops
            .windows(2)
            .position(|w| w[0].kind == OpKind::Annihilate && w[1].kind == OpKind::Create);
        match pos {
            None => done.push(t),
            Some(p) => work.extend(swap_adjacent(&t, p, stats)),
        }
    }
    Expression::from_terms(done, stats)
}

pub fn normal_order_expression(expr: &Expression, stats: Statistics) -> Expression {
    Expression::from_terms(
        expr.terms.iter().flat_map(|t| normal_order(t, stats).terms),
        stats,
    )
}

/// All full contractions of `ops` against the vacuum on both sides, as
/// `(sign, deltas)` pairs.
fn full_contractions(ops: &[Op], stats: Statistics) -> Vec<(i64, Vec<(ModeIndex, ModeIndex)>)> {
    if ops.is_empty() {
        return vec![(1, Vec::new())];
    }
    if ops.len() % 2 == 1
        || ops[0].kind == OpKind::Create
        || ops[ops.len() - 1].kind == OpKind::Annihilate
    {
        return Vec::new();
    }
    let first = ops[0];
    let mut out = Vec::new();
    for j in 1..ops.len() {
        let other = ops[j];
        if other.kind != OpKind::Create {
            continue;
        }
        let delta = match same_mode(first.index, other.index) {
            Some(false) => continue,
            Some(true) => None,
            None => Some((first.index, other.index)),
        };
        let sign = if stats == Statistics::Fermion && (j - 1) % 2 == 1 {
            -1
        } else {
            1
        };
        let rest: Vec<Op> = ops[1..j].iter().chain(&ops[j + 1..]).copied().collect();
        for (s, mut deltas) in full_contractions(&rest, stats) {
            deltas.extend(delta);
            out.push((sign * s, deltas));
        }
    }
    out
}

/// `<0| expr |0>`: the scalar part that survives normal ordering.
///
/// Evaluated by full contraction (Wick's theorem), which gives the same
/// result as [`normal_order`] followed by dropping every term that still
/// contains an operator; [`vacuum_expectation_by_normal_order`] is that
/// second route.
pub fn vacuum_expectation(expr: &Expression, stats: Statistics) -> Expression {
    let mut out = Vec::new();
    for term in &expr.terms {
        let mut ops = term.ops.clone();
        if stats == Statistics::Coherent {
            ops.retain(|op| op.index != ModeIndex::Occupied);
        }
        for (sign, deltas) in full_contractions(&ops, stats) {
            let mut t = term.clone();
            t.ops.clear();
            t.deltas.extend(deltas);
            t.coeff *= coeff(sign);
            out.push(t);
        }
    }
    Expression::from_terms(out, stats)
}

pub fn vacuum_expectation_by_normal_order(expr: &Expression, stats: Statistics) -> Expression {
    let ordered = normal_order_expression(expr, stats);
    Expression::from_terms(ordered.terms.into_iter().filter(Term::is_scalar), stats)
}

/// Polynomial in `m` with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<(u32, i64, i64)>", try_from = "Vec<(u32, i64, i64)>")]
pub struct MPolynomial {
    coeffs: BTreeMap<u32, Rational>,
}

impl MPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `m^power` times `c`.
    pub fn monomial(power: u32, c: Rational) -> Self {
        let mut p = Self::zero();
        p.add_term(power, c);
        p
    }

    pub fn from_coeffs(coeffs: &[(u32, i64)]) -> Self {
        let mut p = Self::zero();
        for &(power, c) in coeffs {
            p.add_term(power, Rational::from_integer(c));
        }
        p
    }

    pub fn add_term(&mut self, power: u32, c: Rational) {
        let entry = self.coeffs.entry(power).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(&power);
        }
    }

    pub fn add(&mut self, other: &MPolynomial) {
        for (&power, c) in &other.coeffs {
            self.add_term(power, *c);
        }
    }

    pub fn coeff(&self, power: u32) -> Rational {
        self.coeffs
            .get(&power)
            .copied()
            .unwrap_or_else(Rational::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<u32, Rational> {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn eval(&self, m: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&power, c)| (*c.numer() as f64 / *c.denom() as f64) * m.powi(power as i32))
            .sum()
    }
}

impl From<MPolynomial> for Vec<(u32, i64, i64)> {
    fn from(p: MPolynomial) -> Self {
        p.coeffs
            .iter()
            .map(|(&k, c)| (k, *c.numer(), *c.denom()))
            .collect()
    }
}

impl TryFrom<Vec<(u32, i64, i64)>> for MPolynomial {
    type Error = AlgebraError;

    fn try_from(v: Vec<(u32, i64, i64)>) -> Result<Self, Self::Error> {
        let mut p = Self::zero();
        for (power, num, den) in v {
            if den == 0 {
                return Err(AlgebraError::Document("zero denominator".into()));
            }
            p.add_term(power, Rational::new(num, den));
        }
        Ok(p)
    }
}

fn superscript(n: u32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string()
        .chars()
        .map(|c| DIGITS[c.to_digit(10).unwrap() as usize])
        .collect()
}

impl fmt::Display for MPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        for (n, (&power, c)) in self.coeffs.iter().enumerate() {
            let mag = c.abs();
            let sign = if c.is_negative() { "−" } else { "+" };
            if n == 0 {
                if c.is_negative() {
                    write!(f, "−")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mono = match power {
                0 => String::new(),
                1 => "m".to_string(),
                p => format!("m{}", superscript(p)),
            };
            if mono.is_empty() {
                write!(f, "{}", fmt_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{}{mono}", fmt_rational(&mag))?;
            }
        }
        Ok(())
    }
}

/// Chain endpoint after inclusion-exclusion: the occupied mode or an
/// unrestricted summation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Node {
    Zero,
    Free(u32),
}

/// Contract `sum_x V_px V_xq = V_pq` over every free index and count the
/// remaining `V_00` factors.
fn collapse_chains(mut factors: Vec<(Node, Node)>, free: &[u32]) -> Result<u32, AlgebraError> {
    for &id in free {
        let x = Node::Free(id);
        let as_col: Vec<usize> = (0..factors.len()).filter(|&n| factors[n].1 == x).collect();
        let as_row: Vec<usize> = (0..factors.len()).filter(|&n| factors[n].0 == x).collect();
        match (as_col.as_slice(), as_row.as_slice()) {
            (&[c], &[r]) if c != r => {
                let joined = (factors[c].0, factors[r].1);
                let (hi, lo) = if c > r { (c, r) } else { (r, c) };
                factors.swap_remove(hi);
                factors.swap_remove(lo);
                factors.push(joined);
            }
            (&[c], &[r]) if c == r => {
                return Err(AlgebraError::Unsupported(
                    "trace of the overlap matrix".into(),
                ))
            }
            ([], []) => {
                return Err(AlgebraError::Unsupported(
                    "sum over an index that appears in no factor".into(),
                ))
            }
            _ => {
                return Err(AlgebraError::Unsupported(
                    "summation index is not a single matrix-product contraction".into(),
                ))
            }
        }
    }
    if factors.iter().all(|&f| f == (Node::Zero, Node::Zero)) {
        Ok(factors.len() as u32)
    } else {
        Err(AlgebraError::Unsupported(
            "overlap chain does not close on the occupied mode".into(),
        ))
    }
}

/// Reduce a scalar expression built from overlap factors, deltas and
/// restricted sums to an exact polynomial in `m`, using a complete basis
/// (so the overlap matrix is a Hermitian projection with `V_00 = m`).
pub fn reduce_to_m_polynomial(scalar: &Expression) -> Result<MPolynomial, AlgebraError> {
    let mut re = MPolynomial::zero();
    let mut im = MPolynomial::zero();
    for raw in &scalar.terms {
        let Some(term) = raw.clone().canonical(Statistics::Boson) else {
            continue;
        };
        if !term.ops.is_empty() {
            return Err(AlgebraError::Unsupported(format!(
                "operators remain in {term}"
            )));
        }
        if let Some(d) = term.deltas.first() {
            return Err(AlgebraError::Unsupported(format!(
                "unresolved delta({},{})",
                d.0, d.1
            )));
        }
        let to_node = |idx: ModeIndex| -> Result<Node, AlgebraError> {
            match idx {
                ModeIndex::Occupied => Ok(Node::Zero),
                ModeIndex::Sym(id) if term.sums.contains(&id) => Ok(Node::Free(id)),
                other => Err(AlgebraError::Unsupported(format!(
                    "overlap index {other} is not summed"
                ))),
            }
        };
        let factors: Vec<(Node, Node)> = term
            .overlaps
            .iter()
            .map(|&(p, q)| Ok((to_node(p)?, to_node(q)?)))
            .collect::<Result<_, AlgebraError>>()?;

        // each restricted sum is the full sum minus the occupied assignment
        let r = term.sums.len();
        for subset in 0u32..(1 << r) {
            let pinned: Vec<u32> = (0..r)
                .filter(|b| subset >> b & 1 == 1)
                .map(|b| term.sums[b])
                .collect();
            let free: Vec<u32> = term
                .sums
                .iter()
                .copied()
                .filter(|id| !pinned.contains(id))
                .collect();
            let substituted: Vec<(Node, Node)> = factors
                .iter()
                .map(|&(p, q)| {
                    let pin = |n: Node| match n {
                        Node::Free(id) if pinned.contains(&id) => Node::Zero,
                        other => other,
                    };
                    (pin(p), pin(q))
                })
                .collect();
            let power = collapse_chains(substituted, &free)?;
            let sign = if pinned.len() % 2 == 1 { -1 } else { 1 };
            re.add_term(power, term.coeff.re * Rational::from_integer(sign));
            im.add_term(power, term.coeff.im * Rational::from_integer(sign));
        }
    }
    if let Some(&power) = im.coeffs.keys().next() {
        return Err(AlgebraError::NonReal(power));
    }
    Ok(re)
}

/// One factor of `N_v = sum_pq V_pq O_p† O_q` with `O_0 = b_0†` and
/// `O_i = b_i` for `i != 0`: `true` marks an unoccupied (summed) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub row_unoccupied: bool,
    pub col_unoccupied: bool,
}

/// `O_p†` for row index `p`.
fn row_op(p: ModeIndex) -> Op {
    if p == ModeIndex::Occupied {
        Op::annihilate(p)
    } else {
        Op::create(p)
    }
}

/// `O_q` for column index `q`.
fn col_op(q: ModeIndex) -> Op {
    if q == ModeIndex::Occupied {
        Op::create(q)
    } else {
        Op::annihilate(q)
    }
}

/// The term of `N_v^k` selected by one block per factor, with fresh
/// restricted summation indices.
pub fn block_term(blocks: &[Block]) -> Term {
    let mut next = 1u32;
    let mut fresh = |unocc: bool, term: &mut Term| {
        if unocc {
            let id = next;
            next += 1;
            term.sums.push(id);
            ModeIndex::Sym(id)
        } else {
            ModeIndex::Occupied
        }
    };
    let mut term = Term::new(Vec::new());
    for b in blocks {
        let p = fresh(b.row_unoccupied, &mut term);
        let q = fresh(b.col_unoccupied, &mut term);
        term.ops.push(row_op(p));
        term.ops.push(col_op(q));
        term.overlaps.push((p, q));
    }
    term
}

/// Exact `<N_v^k>` as a polynomial in `m` for a complete basis.
///
/// Expands `N_v^k` into its `4^k` block terms, takes each one's vacuum
/// expectation and reduces the merged result.
pub fn moment_expression(k: usize, stats: Statistics) -> Result<MPolynomial, AlgebraError> {
    if !(1..=MAX_MOMENT).contains(&k) {
        return Err(AlgebraError::MomentOutOfRange(k));
    }
    let mut scalars = Vec::new();
    for code in 0u32..(1 << (2 * k)) {
        let blocks: Vec<Block> = (0..k)
            .map(|t| Block {
                row_unoccupied: code >> (2 * t) & 1 == 1,
                col_unoccupied: code >> (2 * t + 1) & 1 == 1,
            })
            .collect();
        let term = block_term(&blocks);
        let vev = vacuum_expectation(&Expression { terms: vec![term] }, stats);
        scalars.extend(vev.terms);
    }
    reduce_to_m_polynomial(&Expression::from_terms(scalars, stats))
}

/// One row of the fermion moment bookkeeping: a class of chain terms, how
/// many members it has and their summed polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermClass {
    pub pattern: String,
    pub count: usize,
    pub polynomial: MPolynomial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassReport {
    pub order: usize,
    pub classes: Vec<TermClass>,
    pub total: MPolynomial,
}

/// Lengths of the maximal runs of unoccupied intermediate indices.
fn run_lengths(pattern: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = 0;
    for &unocc in pattern {
        if unocc {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    runs.sort_unstable_by(|a, b| b.cmp(a));
    runs
}

/// Operator string of a chain `<0| ... |0>` term, with the occupied mode
/// written `n` and unoccupied indices named `i, j, k, ...` in order.
fn chain_pattern(pattern: &[bool]) -> String {
    let mut names = SYM_NAMES.iter();
    let mut chain = vec!["n".to_string()];
    for &unocc in pattern {
        chain.push(if unocc {
            names.next().unwrap_or(&"x").to_string()
        } else {
            "n".into()
        });
    }
    chain.push("n".into());
    let mut ops = Vec::new();
    for w in chain.windows(2) {
        let row = if w[0] == "n" {
            "b_n".to_string()
        } else {
            format!("b_{}†", w[0])
        };
        let col = if w[1] == "n" {
            "b_n†".to_string()
        } else {
            format!("b_{}", w[1])
        };
        ops.push(row);
        ops.push(col);
    }
    ops.join(" ")
}

/// Group the fermion chain terms of `<N_v^k>` by the run structure of their
/// unoccupied intermediate indices and reduce each class symbolically.
///
/// A chain term follows `<0| N_v^k |0>` through a sequence of intermediate
/// indices; consecutive blocks share the index between them.
pub fn fermion_term_classes(k: usize) -> Result<ClassReport, AlgebraError> {
    if !(1..=MAX_MOMENT).contains(&k) {
        return Err(AlgebraError::MomentOutOfRange(k));
    }
    let stats = Statistics::Fermion;
    // keyed by (unoccupied count, run count, runs)
    let mut classes: BTreeMap<(usize, usize, Vec<usize>), TermClass> = BTreeMap::new();
    // patterns in order of descending binary value so the representative of
    // each class has its unoccupied indices as early as possible
    for code in (0u32..(1 << (k - 1))).rev() {
        let pattern: Vec<bool> = (0..k - 1).map(|t| code >> (k - 2 - t) & 1 == 1).collect();
        let mut chain = vec![ModeIndex::Occupied];
        let mut next = 1;
        let mut term = Term::new(Vec::new());
        for &unocc in &pattern {
            if unocc {
                chain.push(ModeIndex::Sym(next));
                term.sums.push(next);
                next += 1;
            } else {
                chain.push(ModeIndex::Occupied);
            }
        }
        chain.push(ModeIndex::Occupied);
        for w in chain.windows(2) {
            term.ops.push(row_op(w[0]));
            term.ops.push(col_op(w[1]));
            term.overlaps.push((w[0], w[1]));
        }
        let vev = vacuum_expectation(&Expression { terms: vec![term] }, stats);
        let poly = reduce_to_m_polynomial(&vev)?;
        let runs = run_lengths(&pattern);
        let key = (pattern.iter().filter(|&&u| u).count(), runs.len(), runs);
        let class = classes.entry(key).or_insert_with(|| TermClass {
            pattern: chain_pattern(&pattern),
            count: 0,
            polynomial: MPolynomial::zero(),
        });
        class.count += 1;
        class.polynomial.add(&poly);
    }
    let classes: Vec<TermClass> = classes.into_values().collect();
    let mut total = MPolynomial::zero();
    for c in &classes {
        total.add(&c.polynomial);
    }
    Ok(ClassReport {
        order: k,
        classes,
        total,
    })
}

/// The fourth-moment fermion bookkeeping table.
pub fn table1_report() -> ClassReport {
    fermion_term_classes(4).expect("order 4 is in range")
}

/// Reference bookkeeping of the fourth fermion moment: per class, the term
/// count and the integer coefficients of `m, m², m³, m⁴`.
pub const TABLE1_REFERENCE: [(usize, [i64; 4]); 5] = [
    (1, [0, 0, 0, 1]),
    (3, [0, 0, 3, -3]),
    (2, [0, 2, -4, 2]),
    (1, [0, 1, -2, 1]),
    (1, [1, -3, 3, -1]),
];

impl ClassReport {
    /// Coefficients of `m..m^order` as integers, or `None` if one is not.
    pub fn integer_row(poly: &MPolynomial, order: usize) -> Option<Vec<i64>> {
        (1..=order as u32)
            .map(|p| {
                let c = poly.coeff(p);
                c.is_integer().then(|| *c.numer())
            })
            .collect()
    }

    /// Rows match [`TABLE1_REFERENCE`] exactly and the total is `m`.
    pub fn matches_table1(&self) -> bool {
        self.order == 4
            && self.classes.len() == TABLE1_REFERENCE.len()
            && self
                .classes
                .iter()
                .zip(TABLE1_REFERENCE)
                .all(|(c, (count, coeffs))| {
                    c.count == count
                        && Self::integer_row(&c.polynomial, 4).as_deref() == Some(&coeffs[..])
                })
            && self.total == MPolynomial::from_coeffs(&[(1, 1)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const I: ModeIndex = ModeIndex::Sym(1);
    const J: ModeIndex = ModeIndex::Sym(2);
    const K: ModeIndex = ModeIndex::Sym(3);
    const N: ModeIndex = ModeIndex::Occupied;

    fn b(i: ModeIndex) -> Op {
        Op::annihilate(i)
    }

    fn bd(i: ModeIndex) -> Op {
        Op::create(i)
    }

    fn expr(ops: Vec<Op>) -> Expression {
        Expression {
            terms: vec![Term::new(ops)],
        }
    }

    #[test]
    fn anticommutator_rewrite() {
        let got = normal_order(&Term::new(vec![b(I), bd(J)]), Statistics::Fermion);
        let want = Expression::from_terms(
            [
                Term::scalar(coeff(1)).with_delta(I, J),
                Term::new(vec![bd(J), b(I)]).with_coeff(coeff(-1)),
            ],
            Statistics::Fermion,
        );
        assert_eq!(got, want);
    }

    #[test]
    fn commutator_rewrite() {
        let got = normal_order(&Term::new(vec![b(I), bd(J)]), Statistics::Boson);
        assert_eq!(got.terms.len(), 2);
        assert!(got.terms.iter().all(|t| t.coeff == coeff(1)));
    }

    #[test]
    fn normal_ordered_input_unchanged() {
        let t = Term::new(vec![bd(I), b(J)]);
        let got = normal_order(&t, Statistics::Fermion);
        assert_eq!(got.terms, vec![t]);
    }

    #[test]
    fn like_kind_swap_sign() {
        let got = normal_order(&Term::new(vec![b(I), b(J)]), Statistics::Fermion);
        assert_eq!(
            got.terms,
            vec![Term::new(vec![b(J), b(I)]).with_coeff(coeff(-1))]
        );
        let twice = swap_adjacent(
            &swap_adjacent(&Term::new(vec![b(I), b(J)]), 0, Statistics::Fermion)[0],
            0,
            Statistics::Fermion,
        );
        assert_eq!(twice, vec![Term::new(vec![b(I), b(J)])]);
    }

    #[test]
    fn repeated_fermion_vanishes() {
        assert!(normal_order(&Term::new(vec![bd(I), bd(I)]), Statistics::Fermion).is_zero());
        assert!(!normal_order(&Term::new(vec![bd(I), bd(I)]), Statistics::Boson).is_zero());
    }

    #[test]
    fn basic_vevs() {
        let v = vacuum_expectation(&expr(vec![b(I), bd(J)]), Statistics::Fermion);
        assert_eq!(v.terms, vec![Term::scalar(coeff(1)).with_delta(I, J)]);
        assert!(vacuum_expectation(&expr(vec![bd(I), b(J)]), Statistics::Fermion).is_zero());
    }

    #[test]
    fn eight_operator_chain_vev_is_one() {
        let ops = vec![b(N), b(I), bd(I), b(J), bd(J), b(K), bd(K), bd(N)];
        let v = vacuum_expectation(&expr(ops.clone()), Statistics::Fermion);
        assert_eq!(v.scalar_value(), Some(coeff(1)));
        let w = vacuum_expectation_by_normal_order(&expr(ops), Statistics::Fermion);
        assert_eq!(w.scalar_value(), Some(coeff(1)));
    }

    #[test]
    fn restricted_pair_sum() {
        let t = Term::scalar(coeff(1))
            .with_overlap(N, I)
            .with_overlap(I, N)
            .summed_over(1);
        let p = reduce_to_m_polynomial(&Expression { terms: vec![t] }).unwrap();
        assert_eq!(p, MPolynomial::from_coeffs(&[(1, 1), (2, -1)]));
    }

    #[test]
    fn occupied_power() {
        let t = Term::scalar(coeff(1))
            .with_overlap(N, N)
            .with_overlap(N, N)
            .with_overlap(N, N)
            .with_overlap(N, N);
        let p = reduce_to_m_polynomial(&Expression { terms: vec![t] }).unwrap();
        assert_eq!(p, MPolynomial::from_coeffs(&[(4, 1)]));
    }

    #[test]
    fn triple_restricted_chain() {
        let t = Term::scalar(coeff(1))
            .with_overlap(N, I)
            .with_overlap(I, J)
            .with_overlap(J, K)
            .with_overlap(K, N)
            .summed_over(1)
            .summed_over(2)
            .summed_over(3);
        let p = reduce_to_m_polynomial(&Expression { terms: vec![t] }).unwrap();
        assert_eq!(
            p,
            MPolynomial::from_coeffs(&[(1, 1), (2, -3), (3, 3), (4, -1)])
        );
    }

    #[test]
    fn unsupported_scalars() {
        let trace = Term::scalar(coeff(1)).with_overlap(I, I).summed_over(1);
        assert!(matches!(
            reduce_to_m_polynomial(&Expression { terms: vec![trace] }),
            Err(AlgebraError::Unsupported(_))
        ));
        let free = Term::scalar(coeff(1)).with_overlap(N, I);
        assert!(reduce_to_m_polynomial(&Expression { terms: vec![free] }).is_err());
        let ops = Term::new(vec![bd(I)]);
        assert!(reduce_to_m_polynomial(&Expression { terms: vec![ops] }).is_err());
        let imag = Term::scalar(Complex::new(Rational::zero(), Rational::one())).with_overlap(N, N);
        assert_eq!(
            reduce_to_m_polynomial(&Expression { terms: vec![imag] }),
            Err(AlgebraError::NonReal(1))
        );
    }

    #[test]
    fn fermion_low_moments() {
        let m = MPolynomial::from_coeffs(&[(1, 1)]);
        assert_eq!(moment_expression(1, Statistics::Fermion).unwrap(), m);
        assert_eq!(moment_expression(2, Statistics::Fermion).unwrap(), m);
        assert_eq!(moment_expression(3, Statistics::Fermion).unwrap(), m);
        assert_eq!(
            moment_expression(0, Statistics::Fermion),
            Err(AlgebraError::MomentOutOfRange(0))
        );
        assert_eq!(
            moment_expression(7, Statistics::Fermion),
            Err(AlgebraError::MomentOutOfRange(7))
        );
    }

    #[test]
    fn table_rows() {
        let report = table1_report();
        assert_eq!(
            report.classes[1].pattern,
            "b_n b_i b_i† b_n† b_n b_n† b_n b_n†"
        );
        assert_eq!(report.classes[1].count, 3);
        assert_eq!(
            report.classes[1].polynomial,
            MPolynomial::from_coeffs(&[(3, 3), (4, -3)])
        );
        assert_eq!(
            report.classes[3].pattern,
            "b_n b_i b_i† b_n† b_n b_j b_j† b_n†"
        );
        assert_eq!(report.classes[3].count, 1);
        assert_eq!(
            report.classes[3].polynomial,
            MPolynomial::from_coeffs(&[(2, 1), (3, -2), (4, 1)])
        );
        assert_eq!(report.total, MPolynomial::from_coeffs(&[(1, 1)]));
        assert!(report.matches_table1());
    }

    #[test]
    fn polynomial_display() {
        let p = MPolynomial::from_coeffs(&[(1, 1), (2, -3), (3, 3), (4, -1)]);
        assert_eq!(p.to_string(), "m − 3m² + 3m³ − m⁴");
        assert_eq!(MPolynomial::zero().to_string(), "0");
    }

    #[test]
    fn term_json_shape() {
        let t = Term::new(vec![b(N), bd(I)])
            .with_coeff(Complex::new(Rational::new(1, 2), Rational::zero()))
            .with_overlap(N, I)
            .summed_over(1);
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "coeff": [1, 2, 0, 1],
                "deltas": [],
                "V": [[0, "i"]],
                "ops": [["a", 0], ["c", "i"]],
                "sums": ["i"],
            })
        );
        let back: Term = serde_json::from_value(json).unwrap();
        assert_eq!(back, t);
    }
}

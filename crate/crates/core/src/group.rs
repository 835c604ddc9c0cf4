//! Finitely generated groups given as direct products of free, free-abelian
//! and cyclic factors, with normal forms, the word metric for the standard
//! generating set, and shortlex enumeration of balls and spheres.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the number of elements a ball may hold.
pub const DEFAULT_BALL_CAP: usize = 200_000;

/// Highest supported free rank (generators are the letters `a..z`).
pub const MAX_FREE_RANK: usize = 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Factor {
    /// Free group on `k` generators.
    Free(usize),
    /// `Z^d`.
    FreeAbelian(usize),
    /// `Z/m`.
    Cyclic(u64),
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Free(k) => write!(f, "F{k}"),
            Factor::FreeAbelian(1) => write!(f, "Z"),
            Factor::FreeAbelian(d) => write!(f, "Z^{d}"),
            Factor::Cyclic(m) => write!(f, "C{m}"),
        }
    }
}

/// A direct product of atomic factors with the standard generating set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupSpec {
    factors: Vec<Factor>,
}

impl GroupSpec {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::input("group spec needs at least one factor"));
        }
        for f in &factors {
            match *f {
                Factor::Free(k) if k == 0 || k > MAX_FREE_RANK => {
                    return Err(Error::input(format!(
                        "free rank must be in 1..={MAX_FREE_RANK}, got {k}"
                    )))
                }
                Factor::FreeAbelian(0) => return Err(Error::input("free-abelian rank must be >= 1")),
                Factor::Cyclic(0) => return Err(Error::input("cyclic order must be >= 1")),
                _ => {}
            }
        }
        Ok(Self { factors })
    }

    pub fn free(rank: usize) -> Result<Self> {
        Self::new(vec![Factor::Free(rank)])
    }

    pub fn free_abelian(rank: usize) -> Result<Self> {
        Self::new(vec![Factor::FreeAbelian(rank)])
    }

    pub fn cyclic(order: u64) -> Result<Self> {
        Self::new(vec![Factor::Cyclic(order)])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// `Some(d)` when the group is exactly `Z^d`.
    pub fn free_abelian_rank(&self) -> Option<usize> {
        match self.factors.as_slice() {
            [Factor::FreeAbelian(d)] => Some(*d),
            _ => None,
        }
    }

    /// `Some(k)` when the group is exactly the free group `F_k`.
    pub fn free_rank(&self) -> Option<usize> {
        match self.factors.as_slice() {
            [Factor::Free(k)] => Some(*k),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(
            self.factors
                .iter()
                .map(|f| match *f {
                    Factor::Free(_) => Component::Word(Vec::new()),
                    Factor::FreeAbelian(d) => Component::Vector(vec![0; d]),
                    Factor::Cyclic(_) => Component::Residue(0),
                })
                .collect(),
        )
    }

    /// Standard generators, inverses included, in a fixed order.
    pub fn generators(&self) -> Vec<GroupElement> {
        let mut gens = Vec::new();
        for (pos, f) in self.factors.iter().enumerate() {
            let mut push = |c: Component| {
                let mut parts = self.identity().0;
                parts[pos] = c;
                gens.push(GroupElement(parts));
            };
            match *f {
                Factor::Free(k) => {
                    for i in 0..k as u8 {
                        push(Component::Word(vec![Letter::new(i, false)]));
                        push(Component::Word(vec![Letter::new(i, true)]));
                    }
                }
                Factor::FreeAbelian(d) => {
                    for i in 0..d {
                        for s in [1, -1] {
                            let mut v = vec![0; d];
                            v[i] = s;
                            push(Component::Vector(v));
                        }
                    }
                }
                Factor::Cyclic(m) => {
                    if m >= 2 {
                        push(Component::Residue(1));
                    }
                    if m >= 3 {
                        push(Component::Residue(m - 1));
                    }
                }
            }
        }
        gens
    }

    /// Checks that `g` is a normal form for this spec.
    pub fn validate(&self, g: &GroupElement) -> Result<()> {
        if g.0.len() != self.factors.len() {
            return Err(Error::input(format!(
                "element has {} components but group {self} has {} factors",
                g.0.len(),
                self.factors.len()
            )));
        }
        for (f, c) in self.factors.iter().zip(&g.0) {
            match (*f, c) {
                (Factor::Free(k), Component::Word(w)) => {
                    if let Some(l) = w.iter().find(|l| l.generator as usize >= k) {
                        return Err(Error::input(format!("letter {l} outside F{k}")));
                    }
                    if w.windows(2).any(|p| p[0] == p[1].inverse()) {
                        return Err(Error::input("free word is not reduced"));
                    }
                }
                (Factor::FreeAbelian(d), Component::Vector(v)) if v.len() == d => {}
                (Factor::Cyclic(m), Component::Residue(r)) if *r < m => {}
                _ => {
                    return Err(Error::input(format!(
                        "component {c} does not belong to factor {f}"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.validate(g)?;
        self.validate(h)?;
        Ok(self.multiply_unchecked(g, h))
    }

    pub(crate) fn multiply_unchecked(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        let parts = self
            .factors
            .iter()
            .zip(g.0.iter().zip(&h.0))
            .map(|(f, pair)| match (*f, pair) {
                (_, (Component::Word(a), Component::Word(b))) => {
                    let mut w = a.clone();
                    for &l in b {
                        if w.last() == Some(&l.inverse()) {
                            w.pop();
                        } else {
                            w.push(l);
                        }
                    }
                    Component::Word(w)
                }
                (_, (Component::Vector(a), Component::Vector(b))) => {
                    Component::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
                }
                (Factor::Cyclic(m), (Component::Residue(a), Component::Residue(b))) => {
                    Component::Residue((a + b) % m)
                }
                _ => unreachable!("validated elements have matching components"),
            })
            .collect();
        GroupElement(parts)
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        let parts = self
            .factors
            .iter()
            .zip(&g.0)
            .map(|(f, c)| match (*f, c) {
                (_, Component::Word(w)) => {
                    Component::Word(w.iter().rev().map(|l| l.inverse()).collect())
                }
                (_, Component::Vector(v)) => Component::Vector(v.iter().map(|x| -x).collect()),
                (Factor::Cyclic(m), Component::Residue(r)) => Component::Residue((m - r) % m),
                _ => c.clone(),
            })
            .collect();
        GroupElement(parts)
    }

    pub fn word_length(&self, g: &GroupElement) -> usize {
        self.factors
            .iter()
            .zip(&g.0)
            .map(|(f, c)| match (*f, c) {
                (_, Component::Word(w)) => w.len(),
                (_, Component::Vector(v)) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
                (Factor::Cyclic(m), Component::Residue(r)) => (*r).min(m - r) as usize,
                _ => 0,
            })
            .sum()
    }

    /// The closed ball `B(e, radius)` with the default size cap.
    pub fn ball(&self, radius: usize) -> Result<Ball> {
        self.ball_with_cap(radius, DEFAULT_BALL_CAP)
    }

    pub fn ball_with_cap(&self, radius: usize, cap: usize) -> Result<Ball> {
        let gens = self.generators();
        let e = self.identity();
        let mut seen: HashSet<GroupElement> = HashSet::from([e.clone()]);
        let mut elements = vec![e];
        let mut sphere_starts = vec![0];
        let mut frontier = 0..1;
        for _ in 0..radius {
            let mut next: Vec<GroupElement> = Vec::new();
            for idx in frontier.clone() {
                for s in &gens {
                    let g = self.multiply_unchecked(&elements[idx], s);
                    if seen.insert(g.clone()) {
                        next.push(g);
                        if seen.len() > cap {
                            return Err(Error::resource(format!(
                                "ball of radius {radius} in {self} exceeds the cap of {cap} elements"
                            )));
                        }
                    }
                }
            }
            next.sort();
            let start = elements.len();
            sphere_starts.push(start);
            elements.extend(next);
            frontier = start..elements.len();
        }
        let index = elements
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ok(Ball {
            radius,
            elements,
            sphere_starts,
            index,
        })
    }

    /// Parses a serialized element token such as `aB`, `(1,-2)`, `3` or
    /// `aB;(1,-2);3` for products. The empty free word is written `1`.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let tokens: Vec<&str> = s.split(';').map(str::trim).collect();
        if tokens.len() != self.factors.len() {
            return Err(Error::input(format!(
                "element `{s}` has {} components, group {self} has {} factors",
                tokens.len(),
                self.factors.len()
            )));
        }
        let mut parts = Vec::with_capacity(tokens.len());
        for (f, tok) in self.factors.iter().zip(tokens) {
            let c = match *f {
                Factor::Free(_) => {
                    if tok == "1" || tok.is_empty() {
                        Component::Word(Vec::new())
                    } else {
                        let letters = tok
                            .chars()
                            .map(Letter::from_char)
                            .collect::<Option<Vec<_>>>()
                            .ok_or_else(|| Error::input(format!("bad free word `{tok}`")))?;
                        Component::Word(letters)
                    }
                }
                Factor::FreeAbelian(_) => {
                    let inner = tok
                        .strip_prefix('(')
                        .and_then(|t| t.strip_suffix(')'))
                        .unwrap_or(tok);
                    let v = inner
                        .split(',')
                        .map(|x| x.trim().parse::<i64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::input(format!("bad integer vector `{tok}`")))?;
                    Component::Vector(v)
                }
                Factor::Cyclic(_) => Component::Residue(
                    tok.parse()
                        .map_err(|_| Error::input(format!("bad residue `{tok}`")))?,
                ),
            };
            parts.push(c);
        }
        let g = GroupElement(parts);
        self.validate(&g)?;
        Ok(g)
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{factor}")?;
        }
        Ok(())
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::input(format!("cannot parse group spec `{s}`"));
        let mut factors = Vec::new();
        for tok in s.split('x').map(str::trim) {
            let factor = if let Some(rest) = tok.strip_prefix('F') {
                Factor::Free(rest.parse().map_err(|_| bad())?)
            } else if let Some(rest) = tok.strip_prefix('C') {
                Factor::Cyclic(rest.parse().map_err(|_| bad())?)
            } else if tok == "Z" {
                Factor::FreeAbelian(1)
            } else if let Some(rest) = tok.strip_prefix("Z^") {
                Factor::FreeAbelian(rest.parse().map_err(|_| bad())?)
            } else {
                return Err(bad());
            };
            factors.push(factor);
        }
        Self::new(factors)
    }
}

impl Serialize for GroupSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A free generator or its inverse. Ordered `a < A < b < B < ...`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    generator: u8,
    inverted: bool,
}

impl Letter {
    pub fn new(generator: u8, inverted: bool) -> Self {
        Self { generator, inverted }
    }

    pub fn generator(self) -> u8 {
        self.generator
    }

    pub fn is_inverse(self) -> bool {
        self.inverted
    }

    pub fn inverse(self) -> Self {
        Self {
            generator: self.generator,
            inverted: !self.inverted,
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            'a'..='z' => Some(Self::new(c as u8 - b'a', false)),
            'A'..='Z' => Some(Self::new(c as u8 - b'A', true)),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = if self.inverted { b'A' } else { b'a' };
        write!(f, "{}", (base + self.generator) as char)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Word(Vec<Letter>),
    Vector(Vec<i64>),
    Residue(u64),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Word(w) if w.is_empty() => write!(f, "1"),
            Component::Word(w) => w.iter().try_for_each(|l| write!(f, "{l}")),
            Component::Vector(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(f, "({})", parts.join(","))
            }
            Component::Residue(r) => write!(f, "{r}"),
        }
    }
}

/// Normal form of a group element, one component per factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub(crate) Vec<Component>);

impl GroupElement {
    pub fn components(&self) -> &[Component] {
        &self.0
    }

    /// Element of `Z^d` from its coordinates.
    pub fn from_vector(v: Vec<i64>) -> Self {
        GroupElement(vec![Component::Vector(v)])
    }

    /// Element of `F_k` from a word; the word is freely reduced.
    pub fn from_word(letters: &[Letter]) -> Self {
        let mut w: Vec<Letter> = Vec::new();
        for &l in letters {
            if w.last() == Some(&l.inverse()) {
                w.pop();
            } else {
                w.push(l);
            }
        }
        GroupElement(vec![Component::Word(w)])
    }

    /// Coordinates when the element is a single `Z^d` component.
    pub fn as_vector(&self) -> Option<&[i64]> {
        match self.0.as_slice() {
            [Component::Vector(v)] => Some(v),
            _ => None,
        }
    }

    /// Letters when the element is a single free-group component.
    pub fn as_word(&self) -> Option<&[Letter]> {
        match self.0.as_slice() {
            [Component::Word(w)] => Some(w),
            _ => None,
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// The closed ball `B(e, radius)` in shortlex order.
#[derive(Clone, Debug)]
pub struct Ball {
    radius: usize,
    elements: Vec<GroupElement>,
    sphere_starts: Vec<usize>,
    index: HashMap<GroupElement, usize>,
}

impl Ball {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupElement> {
        self.elements.iter()
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    /// Elements of word length exactly `r`. Empty when `r` exceeds the
    /// radius or the group's diameter.
    pub fn sphere(&self, r: usize) -> &[GroupElement] {
        if r > self.radius {
            return &[];
        }
        let start = self.sphere_starts[r];
        let end = self
            .sphere_starts
            .get(r + 1)
            .copied()
            .unwrap_or(self.elements.len());
        &self.elements[start..end]
    }

    /// Restriction to a smaller radius, keeping the ordering.
    pub fn truncate(&self, radius: usize) -> Ball {
        if radius >= self.radius {
            return self.clone();
        }
        let end = self.sphere_starts[radius + 1];
        let elements = self.elements[..end].to_vec();
        let index = elements
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i))
            .collect();
        Ball {
            radius,
            elements,
            sphere_starts: self.sphere_starts[..=radius].to_vec(),
            index,
        }
    }
}

impl<'a> IntoIterator for &'a Ball {
    type Item = &'a GroupElement;
    type IntoIter = std::slice::Iter<'a, GroupElement>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        for spec in ["F2", "Z^2", "C5", "F2 x Z x C3"] {
            let spec: GroupSpec = spec.parse().unwrap();
            let e = spec.identity();
            for g in spec.ball(2).unwrap().iter() {
                assert_eq!(spec.multiply(&e, g).unwrap(), *g);
                assert_eq!(spec.multiply(g, &e).unwrap(), *g);
            }
        }
    }

    #[test]
    fn free_reduction() {
        let g = f2();
        let a = g.parse_element("a").unwrap();
        let a_inv = g.parse_element("A").unwrap();
        assert_eq!(g.multiply(&a, &a_inv).unwrap(), g.identity());
    }

    #[test]
    fn z2_addition() {
        let g = GroupSpec::free_abelian(2).unwrap();
        let x = GroupElement::from_vector(vec![1, 2]);
        let y = GroupElement::from_vector(vec![3, -1]);
        assert_eq!(g.multiply(&x, &y).unwrap(), GroupElement::from_vector(vec![4, 1]));
    }

    #[test]
    fn inverses() {
        let g = f2();
        assert_eq!(g.inverse(&g.identity()), g.identity());
        let ab = g.parse_element("ab").unwrap();
        assert_eq!(g.inverse(&ab), g.parse_element("BA").unwrap());
        let c5 = GroupSpec::cyclic(5).unwrap();
        let two = c5.parse_element("2").unwrap();
        assert_eq!(c5.inverse(&two), c5.parse_element("3").unwrap());
    }

    #[test]
    fn word_lengths() {
        let z2 = GroupSpec::free_abelian(2).unwrap();
        assert_eq!(z2.word_length(&z2.identity()), 0);
        assert_eq!(z2.word_length(&GroupElement::from_vector(vec![2, -3])), 5);
        let g = f2();
        assert_eq!(g.word_length(&g.parse_element("abA").unwrap()), 3);
        let c7 = GroupSpec::cyclic(7).unwrap();
        assert_eq!(c7.word_length(&c7.parse_element("5").unwrap()), 2);
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let g = f2();
        let z = GroupElement::from_vector(vec![1]);
        assert!(matches!(g.multiply(&g.identity(), &z), Err(Error::Input(_))));
        let f3_word = GroupSpec::free(3).unwrap().parse_element("c").unwrap();
        assert!(g.validate(&f3_word).is_err());
    }

    #[test]
    fn ball_sizes() {
        let z = GroupSpec::free_abelian(1).unwrap();
        for n in 0..6 {
            assert_eq!(z.ball(n).unwrap().len(), 2 * n + 1);
        }
        let g = f2();
        let b1 = g.ball(1).unwrap();
        let names: Vec<String> = b1.iter().map(|x| x.to_string()).collect();
        assert_eq!(names, ["1", "a", "A", "b", "B"]);
        // 1 + 4 * (3^r - 1) / 2 = 1 + 2 * (3^r - 1)
        for r in 0..=6u32 {
            assert_eq!(g.ball(r as usize).unwrap().len(), 1 + 2 * (3usize.pow(r) - 1));
        }
    }

    #[test]
    fn cyclic_ball_saturates() {
        let c5 = GroupSpec::cyclic(5).unwrap();
        let b = c5.ball(10).unwrap();
        assert_eq!(b.len(), 5);
        assert!(b.sphere(3).is_empty());
        let c1 = GroupSpec::cyclic(1).unwrap();
        assert_eq!(c1.ball(3).unwrap().len(), 1);
    }

    #[test]
    fn cap_is_enforced() {
        let g = GroupSpec::free(3).unwrap();
        match g.ball_with_cap(6, 1000) {
            Err(Error::Resource(msg)) => assert!(msg.contains("1000")),
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn spheres_partition_the_ball() {
        let spec: GroupSpec = "F2 x C3".parse().unwrap();
        let b = spec.ball(3).unwrap();
        let total: usize = (0..=3).map(|r| b.sphere(r).len()).sum();
        assert_eq!(total, b.len());
        for r in 0..=3 {
            for g in b.sphere(r) {
                assert_eq!(spec.word_length(g), r);
            }
        }
        let b2 = spec.ball(2).unwrap();
        assert_eq!(b.truncate(2).elements(), b2.elements());
    }

    #[test]
    fn spec_round_trip() {
        for s in ["F2", "Z^2 x C3", "Z", "F3 x Z^2 x C7"] {
            let spec: GroupSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("Q8".parse::<GroupSpec>().is_err());
        assert!("F0".parse::<GroupSpec>().is_err());
    }

    #[test]
    fn element_tokens_round_trip() {
        let spec: GroupSpec = "F2 x Z^2 x C3".parse().unwrap();
        for g in spec.ball(3).unwrap().iter() {
            assert_eq!(spec.parse_element(&g.to_string()).unwrap(), *g);
        }
        assert!(spec.parse_element("aA;(0,0);0").is_err());
    }
}

//! Colored planar rooted trees and ordered forests.
//!
//! Trees are written in a bracketed code: a vertex is `color[...]` with its
//! branches listed left to right and separated by commas, and a forest is the
//! juxtaposition of its trees. A leaf is always `c[]`, so multi-character
//! color names never make a code ambiguous. The empty forest (the unit) has
//! the empty code.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown color `{0}`")]
    UnknownColor(String),
    #[error("expected a single tree, found a forest of {0} trees")]
    NotATree(usize),
    #[error("grade must be at least 1")]
    ZeroGrade,
    #[error("invalid color name `{0}`")]
    InvalidColor(String),
    #[error("alphabet must contain at least one color")]
    EmptyAlphabet,
}

/// A vertex color. Colors compare by name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color(Arc<str>);

impl Color {
    pub fn new(name: &str) -> Result<Self, TreeError> {
        if is_valid_color(name) {
            Ok(Color(Arc::from(name)))
        } else {
            Err(TreeError::InvalidColor(name.to_string()))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_valid_color(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A finite, nonempty set of colors, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet(Vec<Color>);

impl Alphabet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, TreeError> {
        let mut colors = names.iter().map(|n| Color::new(n.as_ref())).collect::<Result<Vec<_>, _>>()?;
        colors.sort();
        colors.dedup();
        if colors.is_empty() {
            return Err(TreeError::EmptyAlphabet);
        }
        Ok(Alphabet(colors))
    }

    pub fn colors(&self) -> &[Color] {
        &self.0
    }

    pub fn contains(&self, c: &Color) -> bool {
        self.0.binary_search(c).is_ok()
    }

    /// Parses a forest code and rejects colors outside the alphabet.
    pub fn parse_forest(&self, code: &str) -> Result<Forest, TreeError> {
        let forest = Forest::parse(code)?;
        for t in forest.trees() {
            self.check_tree(t)?;
        }
        Ok(forest)
    }

    pub fn parse_tree(&self, code: &str) -> Result<Tree, TreeError> {
        let tree = Tree::parse(code)?;
        self.check_tree(&tree)?;
        Ok(tree)
    }

    fn check_tree(&self, t: &Tree) -> Result<(), TreeError> {
        if !self.contains(&t.root) {
            return Err(TreeError::UnknownColor(t.root.name().to_string()));
        }
        t.branches.iter().try_for_each(|b| self.check_tree(b))
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet(vec![Color(Arc::from("a"))])
    }
}

/// A colored planar rooted tree `t(c; τ1, ..., τr)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree {
    root: Color,
    branches: Vec<Tree>,
}

impl Tree {
    pub fn new(root: Color, branches: Vec<Tree>) -> Self {
        Tree { root, branches }
    }

    pub fn leaf(root: Color) -> Self {
        Tree { root, branches: Vec::new() }
    }

    pub fn root(&self) -> &Color {
        &self.root
    }

    pub fn branches(&self) -> &[Tree] {
        &self.branches
    }

    /// Number of vertices.
    pub fn grade(&self) -> usize {
        1 + self.branches.iter().map(Tree::grade).sum::<usize>()
    }

    pub fn is_leaf(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn parse(code: &str) -> Result<Tree, TreeError> {
        let forest = Forest::parse(code)?;
        match forest.len() {
            1 => Ok(forest.items.into_iter().next().unwrap()),
            n => Err(TreeError::NotATree(n)),
        }
    }

    pub fn code(&self) -> String {
        self.to_string()
    }

    fn write_code(&self, out: &mut String) {
        out.push_str(self.root.name());
        out.push('[');
        for (i, b) in self.branches.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            b.write_code(out);
        }
        out.push(']');
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_code(&mut s);
        f.write_str(&s)
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An ordered forest (a word of trees). The empty forest is the unit.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Forest {
    items: Vec<Tree>,
}

impl Forest {
    pub fn unit() -> Self {
        Forest { items: Vec::new() }
    }

    pub fn new(items: Vec<Tree>) -> Self {
        Forest { items }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.items
    }

    pub fn into_trees(self) -> Vec<Tree> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_unit(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn grade(&self) -> usize {
        self.items.iter().map(Tree::grade).sum()
    }

    /// Juxtaposition of two forests.
    pub fn concat(&self, other: &Forest) -> Forest {
        let mut items = Vec::with_capacity(self.len() + other.len());
        items.extend_from_slice(&self.items);
        items.extend_from_slice(&other.items);
        Forest { items }
    }

    pub fn parse(code: &str) -> Result<Forest, TreeError> {
        Parser::new(code).forest()
    }

    pub fn code(&self) -> String {
        self.to_string()
    }
}

impl From<Tree> for Forest {
    fn from(t: Tree) -> Self {
        Forest { items: vec![t] }
    }
}

impl fmt::Display for Forest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        for t in &self.items {
            t.write_code(&mut s);
        }
        f.write_str(&s)
    }
}

impl fmt::Debug for Forest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.items.is_empty() {
            f.write_str("𝟙")
        } else {
            fmt::Display::fmt(self, f)
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src: src.as_bytes(), pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> TreeError {
        TreeError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<(), TreeError> {
        match self.peek() {
            Some(c) if c == b => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.err(format!("expected `{}`, found `{}`", b as char, c as char))),
            None => Err(self.err(format!("expected `{}`, found end of input", b as char))),
        }
    }

    fn forest(&mut self) -> Result<Forest, TreeError> {
        let mut items = Vec::new();
        while self.peek().is_some() {
            items.push(self.tree()?);
        }
        Ok(Forest { items })
    }

    fn color(&mut self) -> Result<Color, TreeError> {
        self.skip_ws();
        let start = self.pos;
        match self.src.get(self.pos) {
            Some(c) if c.is_ascii_alphabetic() => self.pos += 1,
            Some(&c) => return Err(self.err(format!("expected a color, found `{}`", c as char))),
            None => return Err(self.err("expected a color, found end of input")),
        }
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        // ASCII-only by construction
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok(Color(Arc::from(name)))
    }

    fn tree(&mut self) -> Result<Tree, TreeError> {
        let root = self.color()?;
        self.expect(b'[')?;
        let mut branches = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Tree { root, branches });
        }
        loop {
            branches.push(self.tree()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Tree { root, branches });
                }
                Some(c) => return Err(self.err(format!("expected `,` or `]`, found `{}`", c as char))),
                None => return Err(self.err("unclosed `[`")),
            }
        }
    }
}

/// Sorts by (grade, canonical code). Codes of equal grade are compared as
/// byte strings.
fn sort_canonical<T: fmt::Display>(items: &mut Vec<T>) {
    let mut keyed: Vec<(String, T)> = items.drain(..).map(|t| (t.to_string(), t)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    items.extend(keyed.into_iter().map(|(_, t)| t));
}

/// Memoized generator for trees and forests graded by vertex count.
struct Census<'a> {
    colors: &'a Alphabet,
    trees: BTreeMap<usize, Vec<Tree>>,
    forests: BTreeMap<usize, Vec<Forest>>,
}

impl<'a> Census<'a> {
    fn new(colors: &'a Alphabet) -> Self {
        let mut forests = BTreeMap::new();
        forests.insert(0, vec![Forest::unit()]);
        Census { colors, trees: BTreeMap::new(), forests }
    }

    fn trees(&mut self, grade: usize) -> Vec<Tree> {
        if let Some(ts) = self.trees.get(&grade) {
            return ts.clone();
        }
        let mut out = Vec::new();
        for branches in self.forests(grade - 1) {
            for c in self.colors.colors() {
                out.push(Tree::new(c.clone(), branches.items.clone()));
            }
        }
        sort_canonical(&mut out);
        self.trees.insert(grade, out.clone());
        out
    }

    fn forests(&mut self, grade: usize) -> Vec<Forest> {
        if let Some(fs) = self.forests.get(&grade) {
            return fs.clone();
        }
        let mut out = Vec::new();
        for first in 1..=grade {
            let heads = self.trees(first);
            let tails = self.forests(grade - first);
            for h in &heads {
                for t in &tails {
                    let mut items = Vec::with_capacity(1 + t.len());
                    items.push(h.clone());
                    items.extend_from_slice(t.trees());
                    out.push(Forest { items });
                }
            }
        }
        sort_canonical(&mut out);
        self.forests.insert(grade, out.clone());
        out
    }
}

/// All trees with exactly `grade` vertices, ordered by canonical code.
pub fn enumerate_trees(colors: &Alphabet, grade: usize) -> Result<Vec<Tree>, TreeError> {
    if grade == 0 {
        return Err(TreeError::ZeroGrade);
    }
    Ok(Census::new(colors).trees(grade))
}

/// All ordered forests with exactly `grade` vertices; grade 0 gives the unit.
pub fn enumerate_forests(colors: &Alphabet, grade: usize) -> Vec<Forest> {
    Census::new(colors).forests(grade)
}

/// All forests of grade `0..=max_grade`, grade by grade.
pub fn forests_up_to(colors: &Alphabet, max_grade: usize) -> Vec<Forest> {
    let mut census = Census::new(colors);
    (0..=max_grade).flat_map(|g| census.forests(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Alphabet {
        Alphabet::default()
    }

    #[test]
    fn parses_leaf_and_nested() {
        let t = Tree::parse("a[]").unwrap();
        assert!(t.is_leaf());
        assert_eq!(t.grade(), 1);
        let t = Tree::parse("a[a[],a[]]").unwrap();
        assert_eq!(t.branches().len(), 2);
        assert_eq!(t.grade(), 3);
        let f = Forest::parse("a[]a[]").unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.grade(), 2);
    }

    #[test]
    fn whitespace_is_ignored() {
        let f = Forest::parse(" a [ b [ ] , a[a[]] ]  b[] ").unwrap();
        assert_eq!(f.code(), "a[b[],a[a[]]]b[]");
    }

    #[test]
    fn multi_character_colors() {
        let t = Tree::parse("red[blue_2[],red[]]").unwrap();
        assert_eq!(t.root().name(), "red");
        assert_eq!(t.code(), "red[blue_2[],red[]]");
    }

    #[test]
    fn empty_code_is_unit() {
        assert!(Forest::parse("").unwrap().is_unit());
        assert!(Forest::parse("   ").unwrap().is_unit());
        assert_eq!(Forest::unit().grade(), 0);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match Forest::parse("a[b[]") {
            Err(TreeError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        match Forest::parse("a[],") {
            Err(TreeError::Syntax { pos, .. }) => assert_eq!(pos, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Forest::parse("a"), Err(TreeError::Syntax { .. })));
        assert!(matches!(Forest::parse("1[]"), Err(TreeError::Syntax { .. })));
        assert!(matches!(Forest::parse("a[a[]b[]]"), Err(TreeError::Syntax { .. })));
    }

    #[test]
    fn unknown_color_rejected() {
        let err = a().parse_forest("a[b[]]").unwrap_err();
        assert_eq!(err, TreeError::UnknownColor("b".into()));
        assert!(a().parse_tree("a[a[]]").is_ok());
    }

    #[test]
    fn tree_parse_rejects_forest() {
        assert_eq!(Tree::parse("a[]a[]").unwrap_err(), TreeError::NotATree(2));
        assert_eq!(Tree::parse("").unwrap_err(), TreeError::NotATree(0));
    }

    #[test]
    fn one_color_tree_counts() {
        let counts: Vec<usize> = (1..=5).map(|g| enumerate_trees(&a(), g).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 14]);
    }

    #[test]
    fn listed_trees_through_grade_four() {
        let listed: Vec<String> = (1..=4).flat_map(|g| enumerate_trees(&a(), g).unwrap()).map(|t| t.code()).collect();
        assert_eq!(
            listed,
            vec![
                "a[]",
                "a[a[]]",
                "a[a[],a[]]",
                "a[a[a[]]]",
                "a[a[],a[],a[]]",
                "a[a[],a[a[]]]",
                "a[a[a[],a[]]]",
                "a[a[a[]],a[]]",
                "a[a[a[a[]]]]",
            ]
        );
    }

    #[test]
    fn two_color_grade_two() {
        let ab = Alphabet::new(&["a", "b"]).unwrap();
        let codes: Vec<String> = enumerate_trees(&ab, 2).unwrap().iter().map(Tree::code).collect();
        assert_eq!(codes, vec!["a[a[]]", "a[b[]]", "b[a[]]", "b[b[]]"]);
    }

    #[test]
    fn grade_zero_tree_rejected() {
        assert_eq!(enumerate_trees(&a(), 0).unwrap_err(), TreeError::ZeroGrade);
    }

    #[test]
    fn forest_counts() {
        assert_eq!(enumerate_forests(&a(), 0), vec![Forest::unit()]);
        let counts: Vec<usize> = (1..=4).map(|g| enumerate_forests(&a(), g).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 14]);
        let g2: Vec<String> = enumerate_forests(&a(), 2).iter().map(Forest::code).collect();
        assert_eq!(g2, vec!["a[]a[]", "a[a[]]"]);
    }

    #[test]
    fn alphabet_validation() {
        assert_eq!(Alphabet::new::<&str>(&[]).unwrap_err(), TreeError::EmptyAlphabet);
        assert!(Alphabet::new(&["9x"]).is_err());
        let ab = Alphabet::new(&["b", "a", "b"]).unwrap();
        assert_eq!(ab.colors().len(), 2);
    }
}

//! Exact free post-Lie algebra on planar forests and its enveloping algebra.
//!
//! Elements of the enveloping algebra are finite rational combinations of
//! ordered forests ([`ForestVector`]). Single trees span the post-Lie algebra
//! itself; the Lie bracket is the commutator of concatenation. Grafting of
//! trees extends to the whole enveloping algebra by
//!
//! ```text
//! 1 ⊳ B = B
//! x ⊳ (B·C) = (x ⊳ B)·C + B·(x ⊳ C)        x a tree
//! (x·A) ⊳ B = x ⊳ (A ⊳ B) − (x ⊳ A) ⊳ B
//! ```
//!
//! and the Grossman–Larson product is `A ∗ B = Σ A₍₁₎ (A₍₂₎ ⊳ B)` over the
//! deshuffle coproduct in which trees are primitive.
//!
//! All arithmetic is over arbitrary-precision rationals.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trees::{Forest, Tree, TreeError};

pub type Coefficient = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("forest of grade {grade} lies beyond truncation order {order}")]
    GradeOverflow { grade: usize, order: usize },
    #[error("series has a nonzero constant term")]
    NonzeroConstant,
    #[error("expected a primitive element (a combination of single trees)")]
    NotPrimitive,
    #[error("series of order {have} cannot be used at order {want}")]
    TruncationTooShallow { have: usize, want: usize },
    #[error("invalid coefficient `{0}`")]
    BadCoefficient(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// Every tree obtained by grafting `eta` onto a vertex of `t`.
///
/// For a root with `r` branches this gives `r + 1` top-level terms: `eta` as
/// the new leftmost branch, plus `eta` grafted recursively into each branch.
pub fn graft_terms(eta: &Tree, t: &Tree) -> Vec<Tree> {
    let mut out = Vec::new();
    let mut branches = Vec::with_capacity(t.branches().len() + 1);
    branches.push(eta.clone());
    branches.extend_from_slice(t.branches());
    out.push(Tree::new(t.root().clone(), branches));
    for (i, b) in t.branches().iter().enumerate() {
        for g in graft_terms(eta, b) {
            let mut branches = t.branches().to_vec();
            branches[i] = g;
            out.push(Tree::new(t.root().clone(), branches));
        }
    }
    out
}

/// Left grafting `eta ⊳ t` as a vector (like terms merged).
pub fn graft(eta: &Tree, t: &Tree) -> ForestVector {
    let mut v = ForestVector::zero();
    for g in graft_terms(eta, t) {
        v.add_term(Forest::from(g), Coefficient::one());
    }
    v
}

/// A finite rational combination of ordered forests.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ForestVector {
    terms: BTreeMap<Forest, Coefficient>,
}

impl ForestVector {
    pub fn zero() -> Self {
        ForestVector { terms: BTreeMap::new() }
    }

    pub fn unit() -> Self {
        Self::basis(Forest::unit())
    }

    pub fn basis(f: Forest) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(f, Coefficient::one());
        ForestVector { terms }
    }

    pub fn tree(t: Tree) -> Self {
        Self::basis(Forest::from(t))
    }

    pub fn from_terms<I: IntoIterator<Item = (Forest, Coefficient)>>(terms: I) -> Self {
        let mut v = ForestVector::zero();
        for (f, c) in terms {
            v.add_term(f, c);
        }
        v
    }

    /// Parses a single forest code into a basis vector.
    pub fn parse(code: &str) -> Result<Self, AlgebraError> {
        Ok(Self::basis(Forest::parse(code)?))
    }

    pub fn add_term(&mut self, f: Forest, c: Coefficient) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(f) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &ForestVector, s: &Coefficient) {
        if s.is_zero() {
            return;
        }
        for (f, c) in &other.terms {
            self.add_term(f.clone(), c * s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, f: &Forest) -> Coefficient {
        self.terms.get(f).cloned().unwrap_or_else(Coefficient::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Forest, &Coefficient)> {
        self.terms.iter()
    }

    pub fn scale(&self, s: &Coefficient) -> ForestVector {
        let mut v = ForestVector::zero();
        v.add_scaled(self, s);
        v
    }

    pub fn max_grade(&self) -> Option<usize> {
        self.terms.keys().map(Forest::grade).max()
    }

    pub fn min_grade(&self) -> Option<usize> {
        self.terms.keys().map(Forest::grade).min()
    }

    /// Drops every term of grade above `order`.
    pub fn truncate(&self, order: usize) -> ForestVector {
        self.filter(|f| f.grade() <= order)
    }

    pub fn homogeneous(&self, grade: usize) -> ForestVector {
        self.filter(|f| f.grade() == grade)
    }

    fn filter(&self, keep: impl Fn(&Forest) -> bool) -> ForestVector {
        ForestVector {
            terms: self.terms.iter().filter(|(f, _)| keep(f)).map(|(f, c)| (f.clone(), c.clone())).collect(),
        }
    }

    /// True when every term is a single tree.
    pub fn is_primitive(&self) -> bool {
        self.terms.keys().all(|f| f.len() == 1)
    }

    pub fn constant_term(&self) -> Coefficient {
        self.coefficient(&Forest::unit())
    }

    /// Concatenation product.
    pub fn concat(&self, other: &ForestVector) -> ForestVector {
        let mut out = ForestVector::zero();
        for (f, a) in &self.terms {
            for (g, b) in &other.terms {
                out.add_term(f.concat(g), a * b);
            }
        }
        out
    }

    /// Commutator `A·B − B·A`.
    pub fn lie_bracket(&self, other: &ForestVector) -> ForestVector {
        self.concat(other) - other.concat(self)
    }

    /// The extended grafting product `A ⊳ B`.
    pub fn triangle(&self, other: &ForestVector) -> ForestVector {
        let mut out = ForestVector::zero();
        for (f, a) in &self.terms {
            out.add_scaled(&forest_triangle(f, other), a);
        }
        out
    }

    /// Grossman–Larson product.
    pub fn gl_product(&self, other: &ForestVector) -> ForestVector {
        self.gl_product_bounded(other, usize::MAX)
    }

    /// Grossman–Larson product keeping only terms of grade `<= order`.
    ///
    /// The product is graded, so pairs whose grades already exceed the bound
    /// are skipped outright.
    pub fn gl_product_bounded(&self, other: &ForestVector, order: usize) -> ForestVector {
        let mut out = ForestVector::zero();
        let other_by_grade = other.split_by_grade();
        for (f, a) in &self.terms {
            let fg = f.grade();
            if fg > order {
                continue;
            }
            let rhs = restrict_grades(&other_by_grade, order - fg);
            if rhs.is_zero() {
                continue;
            }
            for (left, right) in deshuffle(f) {
                let acted = forest_triangle(&right, &rhs);
                let lhs = ForestVector::basis(left);
                out.add_scaled(&lhs.concat(&acted), a);
            }
        }
        out
    }

    /// Concatenation product keeping only terms of grade `<= order`.
    pub fn concat_bounded(&self, other: &ForestVector, order: usize) -> ForestVector {
        let mut out = ForestVector::zero();
        for (f, a) in &self.terms {
            let fg = f.grade();
            for (g, b) in &other.terms {
                if fg + g.grade() <= order {
                    out.add_term(f.concat(g), a * b);
                }
            }
        }
        out
    }

    fn split_by_grade(&self) -> BTreeMap<usize, ForestVector> {
        let mut out: BTreeMap<usize, ForestVector> = BTreeMap::new();
        for (f, c) in &self.terms {
            out.entry(f.grade()).or_default().add_term(f.clone(), c.clone());
        }
        out
    }

    pub fn to_json(&self) -> ForestVectorJson {
        let mut terms: Vec<(String, &Forest, &Coefficient)> =
            self.terms.iter().map(|(f, c)| (f.code(), f, c)).collect();
        terms.sort_by(|a, b| (a.1.grade(), &a.0).cmp(&(b.1.grade(), &b.0)));
        ForestVectorJson {
            terms: terms
                .into_iter()
                .map(|(code, _, c)| TermJson { forest: code, num: c.numer().to_string(), den: c.denom().to_string() })
                .collect(),
        }
    }

    pub fn from_json(json: &ForestVectorJson) -> Result<Self, AlgebraError> {
        let mut v = ForestVector::zero();
        for t in &json.terms {
            let f = Forest::parse(&t.forest)?;
            let num: BigInt = t.num.trim().parse().map_err(|_| AlgebraError::BadCoefficient(t.num.clone()))?;
            let den: BigInt = t.den.trim().parse().map_err(|_| AlgebraError::BadCoefficient(t.den.clone()))?;
            if den.is_zero() {
                return Err(AlgebraError::BadCoefficient(format!("{}/{}", t.num, t.den)));
            }
            v.add_term(f, BigRational::new(num, den));
        }
        Ok(v)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("forest vectors always serialize")
    }

    pub fn from_json_str(s: &str) -> Result<Self, AlgebraError> {
        let json: ForestVectorJson = serde_json::from_str(s).map_err(|e| AlgebraError::Json(e.to_string()))?;
        Self::from_json(&json)
    }
}

fn restrict_grades(by_grade: &BTreeMap<usize, ForestVector>, max: usize) -> ForestVector {
    let mut out = ForestVector::zero();
    for (_, v) in by_grade.range(..=max) {
        out.add_scaled(v, &Coefficient::one());
    }
    out
}

impl fmt::Display for ForestVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (forest, c) in &self.terms {
            let code = if forest.is_unit() { "𝟙".to_string() } else { forest.code() };
            let mag = c.abs();
            let sign = if c.is_negative() {
                "-"
            } else if first {
                ""
            } else {
                "+"
            };
            if !first {
                f.write_str(" ")?;
            }
            f.write_str(sign)?;
            if !first || c.is_negative() {
                f.write_str(" ")?;
            }
            if mag.is_one() {
                write!(f, "{code}")?;
            } else {
                write!(f, "{mag} {code}")?;
            }
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for ForestVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Add for ForestVector {
    type Output = ForestVector;
    fn add(mut self, rhs: ForestVector) -> ForestVector {
        for (f, c) in rhs.terms {
            self.add_term(f, c);
        }
        self
    }
}

impl Sub for ForestVector {
    type Output = ForestVector;
    fn sub(mut self, rhs: ForestVector) -> ForestVector {
        for (f, c) in rhs.terms {
            self.add_term(f, -c);
        }
        self
    }
}

impl Neg for ForestVector {
    type Output = ForestVector;
    fn neg(self) -> ForestVector {
        ForestVector { terms: self.terms.into_iter().map(|(f, c)| (f, -c)).collect() }
    }
}

impl<'a> Add<&'a ForestVector> for &'a ForestVector {
    type Output = ForestVector;
    fn add(self, rhs: &ForestVector) -> ForestVector {
        self.clone() + rhs.clone()
    }
}

impl<'a> Sub<&'a ForestVector> for &'a ForestVector {
    type Output = ForestVector;
    fn sub(self, rhs: &ForestVector) -> ForestVector {
        self.clone() - rhs.clone()
    }
}

impl Mul<&Coefficient> for &ForestVector {
    type Output = ForestVector;
    fn mul(self, rhs: &Coefficient) -> ForestVector {
        self.scale(rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub forest: String,
    pub num: String,
    pub den: String,
}

/// Wire format: `{"terms": [{"forest": <code>, "num": <int>, "den": <int>}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestVectorJson {
    pub terms: Vec<TermJson>,
}

/// `x ⊳ F` for a tree `x`, by the Leibniz rule over the trees of `F`.
pub fn tree_triangle_forest(x: &Tree, f: &Forest) -> ForestVector {
    let mut out = ForestVector::zero();
    let items = f.trees();
    for (i, t) in items.iter().enumerate() {
        for g in graft_terms(x, t) {
            let mut word = items.to_vec();
            word[i] = g;
            out.add_term(Forest::new(word), Coefficient::one());
        }
    }
    out
}

thread_local! {
    static TRIANGLE_CACHE: RefCell<HashMap<(Forest, Forest), Rc<ForestVector>>> = RefCell::new(HashMap::new());
}

/// `A ⊳ B` for a basis forest `A`.
pub fn forest_triangle(a: &Forest, b: &ForestVector) -> ForestVector {
    if a.is_unit() {
        return b.clone();
    }
    let mut out = ForestVector::zero();
    for (f, c) in b.terms() {
        out.add_scaled(&triangle_basis(a, f), c);
    }
    out
}

/// `A ⊳ B` on basis forests, memoized per thread.
fn triangle_basis(a: &Forest, b: &Forest) -> Rc<ForestVector> {
    let key = (a.clone(), b.clone());
    if let Some(hit) = TRIANGLE_CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return hit;
    }
    let trees = a.trees();
    let value = match trees.len() {
        0 => ForestVector::basis(b.clone()),
        1 => tree_triangle_forest(&trees[0], b),
        _ => {
            let x = &trees[0];
            let rest = Forest::new(trees[1..].to_vec());
            let xf = Forest::from(x.clone());
            let mut out = ForestVector::zero();
            for (f, c) in triangle_basis(&rest, b).terms() {
                out.add_scaled(&triangle_basis(&xf, f), c);
            }
            for (f, c) in tree_triangle_forest(x, &rest).terms() {
                out.add_scaled(&triangle_basis(f, b), &-c.clone());
            }
            out
        }
    };
    let value = Rc::new(value);
    TRIANGLE_CACHE.with(|c| c.borrow_mut().insert(key, value.clone()));
    value
}

/// Deshuffle coproduct of a forest: every split of its word into an
/// order-preserving subsequence and the complementary subsequence, listed
/// with multiplicity (`2^k` pairs for `k` trees).
pub fn deshuffle(f: &Forest) -> Vec<(Forest, Forest)> {
    let items = f.trees();
    let k = items.len();
    assert!(k < usize::BITS as usize, "forest too long to deshuffle");
    (0..(1usize << k))
        .map(|mask| {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for (i, t) in items.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    left.push(t.clone());
                } else {
                    right.push(t.clone());
                }
            }
            (Forest::new(left), Forest::new(right))
        })
        .collect()
}

/// Element of `U ⊗ U`, used to check coproduct identities.
pub type Tensor2 = BTreeMap<(Forest, Forest), Coefficient>;

pub fn deshuffle_vector(v: &ForestVector) -> Tensor2 {
    let mut out = Tensor2::new();
    for (f, c) in v.terms() {
        for pair in deshuffle(f) {
            let e = out.entry(pair).or_insert_with(Coefficient::zero);
            *e += c;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

/// A grade-truncated Lie–Butcher series: coefficients of forests up to `order`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TruncatedSeries {
    order: usize,
    coeffs: ForestVector,
}

impl TruncatedSeries {
    /// Fails if `coeffs` has a term beyond `order`.
    pub fn new(order: usize, coeffs: ForestVector) -> Result<Self, AlgebraError> {
        if let Some(g) = coeffs.max_grade() {
            if g > order {
                return Err(AlgebraError::GradeOverflow { grade: g, order });
            }
        }
        Ok(TruncatedSeries { order, coeffs })
    }

    /// Keeps the components of `v` up to `order`.
    pub fn truncating(order: usize, v: &ForestVector) -> Self {
        TruncatedSeries { order, coeffs: v.truncate(order) }
    }

    /// The dual basis element `δ_ω`.
    pub fn delta(order: usize, f: Forest) -> Result<Self, AlgebraError> {
        Self::new(order, ForestVector::basis(f))
    }

    pub fn zero(order: usize) -> Self {
        TruncatedSeries { order, coeffs: ForestVector::zero() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &ForestVector {
        &self.coeffs
    }

    /// `⟨α, ω⟩`.
    pub fn pairing(&self, f: &Forest) -> Result<Coefficient, AlgebraError> {
        let grade = f.grade();
        if grade > self.order {
            return Err(AlgebraError::GradeOverflow { grade, order: self.order });
        }
        Ok(self.coeffs.coefficient(f))
    }

    fn check_exp_input(&self, order: usize) -> Result<(), AlgebraError> {
        if order > self.order {
            return Err(AlgebraError::TruncationTooShallow { have: self.order, want: order });
        }
        if !self.coeffs.constant_term().is_zero() {
            return Err(AlgebraError::NonzeroConstant);
        }
        Ok(())
    }

    /// `Σ_{k≤N} α^{∗k}/k!` truncated at grade `order`.
    pub fn exp_star(&self, order: usize) -> Result<TruncatedSeries, AlgebraError> {
        self.check_exp_input(order)?;
        let alpha = self.coeffs.truncate(order);
        Ok(exp_with(&alpha, order, |a, b| a.gl_product_bounded(b, order)))
    }

    /// `Σ_{k≤N} α^{·k}/k!` truncated at grade `order`.
    pub fn exp_dot(&self, order: usize) -> Result<TruncatedSeries, AlgebraError> {
        self.check_exp_input(order)?;
        let alpha = self.coeffs.truncate(order);
        Ok(exp_with(&alpha, order, |a, b| a.concat_bounded(b, order)))
    }
}

fn exp_with(
    alpha: &ForestVector,
    order: usize,
    product: impl Fn(&ForestVector, &ForestVector) -> ForestVector,
) -> TruncatedSeries {
    let mut sum = ForestVector::unit();
    let mut power = ForestVector::unit();
    for k in 1..=order {
        power = product(&power, alpha);
        if power.is_zero() {
            break;
        }
        let inv_k = Coefficient::new(BigInt::one(), BigInt::from(k));
        power = power.scale(&inv_k);
        sum = sum + power.clone();
    }
    TruncatedSeries { order, coeffs: sum }
}

/// Residuals of the two post-Lie axioms for primitive `x, y, z`:
///
/// ```text
/// x ⊳ [y,z] − [x ⊳ y, z] − [y, x ⊳ z]
/// [x,y] ⊳ z − a(x,y,z) + a(y,x,z),   a(x,y,z) = x ⊳ (y ⊳ z) − (x ⊳ y) ⊳ z
/// ```
pub fn postlie_axiom_residuals(
    x: &ForestVector,
    y: &ForestVector,
    z: &ForestVector,
) -> Result<(ForestVector, ForestVector), AlgebraError> {
    if !(x.is_primitive() && y.is_primitive() && z.is_primitive()) {
        return Err(AlgebraError::NotPrimitive);
    }
    let derivation = x.triangle(&y.lie_bracket(z)) - x.triangle(y).lie_bracket(z) - y.lie_bracket(&x.triangle(z));
    let assoc =
        |a: &ForestVector, b: &ForestVector, c: &ForestVector| a.triangle(&b.triangle(c)) - a.triangle(b).triangle(c);
    let associator = x.lie_bracket(y).triangle(z) - assoc(x, y, z) + assoc(y, x, z);
    Ok((derivation, associator))
}

/// Rational `n/d` shorthand.
pub fn q(n: i64, d: i64) -> Coefficient {
    Coefficient::new(BigInt::from(n), BigInt::from(d))
}

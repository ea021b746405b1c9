//! Truncated multivariate Taylor numbers with nilpotent generators.
//!
//! A [`Jet`] is a real number perturbed by independent infinitesimals
//! `ε₀, ε₁, …` with `εᵢ² = 0`. Coefficients are indexed by bitmasks over the
//! generators, so a jet over `d` generators carries `2^d` numbers and
//! represents every mixed first-order derivative up to order `d` exactly.
//! Nesting a directional derivative inside another one uses the next free
//! generator.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    /// A constant over `dim = 2^generators` coefficients.
    pub fn constant(v: f64, dim: usize) -> Jet {
        let mut c = vec![0.0; dim];
        c[0] = v;
        Jet { c }
    }

    pub fn zero(dim: usize) -> Jet {
        Jet { c: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn real(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, mask: usize) -> f64 {
        self.c[mask]
    }

    /// `self + ε_g · dir`.
    pub fn perturb(&self, g: usize, dir: &Jet) -> Jet {
        let bit = 1 << g;
        let mut c = self.c.clone();
        for (m, d) in dir.c.iter().enumerate() {
            if m & bit == 0 && *d != 0.0 {
                c[m | bit] += d;
            }
        }
        Jet { c }
    }

    /// Coefficient of `ε_g`, as a jet over the remaining generators.
    pub fn derivative(&self, g: usize) -> Jet {
        let bit = 1 << g;
        let mut c = vec![0.0; self.c.len()];
        for (m, slot) in c.iter_mut().enumerate() {
            if m & bit == 0 {
                *slot = self.c[m | bit];
            }
        }
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { c: self.c.iter().map(|x| x * s).collect() }
    }

    fn nilpotent_part(&self) -> Jet {
        let mut n = self.clone();
        n.c[0] = 0.0;
        n
    }

    /// `f(self)` given `derivs[k] = f^{(k)}(real part)`.
    ///
    /// The nilpotent part `n` satisfies `n^{d+1} = 0` for `d` generators, so
    /// the Taylor sum `Σ f^{(k)}(a) n^k / k!` terminates.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let dim = self.dim();
        let order = dim.trailing_zeros() as usize;
        let n = self.nilpotent_part();
        let mut out = Jet::constant(derivs[0], dim);
        let mut power = Jet::constant(1.0, dim);
        let mut fact = 1.0;
        for (k, d) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power = &power * &n;
            fact *= k as f64;
            if *d != 0.0 {
                out += &power.scale(d / fact);
            }
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let a = self.real();
        let order = self.dim().trailing_zeros() as usize;
        // d^k/da^k (1/a) = (-1)^k k! / a^{k+1}
        let mut derivs = Vec::with_capacity(order + 1);
        let mut val = 1.0 / a;
        for k in 0..=order {
            derivs.push(val);
            val *= -((k + 1) as f64) / a;
        }
        self.compose(&derivs)
    }

    pub fn sqrt(&self) -> Jet {
        let a = self.real();
        let order = self.dim().trailing_zeros() as usize;
        let mut derivs = Vec::with_capacity(order + 1);
        let mut coef = 1.0;
        let mut expo = 0.5;
        for _ in 0..=order {
            derivs.push(coef * a.powf(expo));
            coef *= expo;
            expo -= 1.0;
        }
        self.compose(&derivs)
    }

    pub fn sin(&self) -> Jet {
        let a = self.real();
        let order = self.dim().trailing_zeros() as usize;
        let cycle = [a.sin(), a.cos(), -a.sin(), -a.cos()];
        let derivs: Vec<f64> = (0..=order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    pub fn cos(&self) -> Jet {
        let a = self.real();
        let order = self.dim().trailing_zeros() as usize;
        let cycle = [a.cos(), -a.sin(), -a.cos(), a.sin()];
        let derivs: Vec<f64> = (0..=order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self * &other.recip()
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect() }
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        for (a, b) in self.c.iter_mut().zip(&rhs.c) {
            *a += b;
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let dim = self.c.len();
        let mut c = vec![0.0; dim];
        for (a, &x) in self.c.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            // iterate over submasks b of the complement of a
            let comp = (dim - 1) & !a;
            let mut b = comp;
            loop {
                let y = rhs.c[b];
                if y != 0.0 {
                    c[a | b] += x * y;
                }
                if b == 0 {
                    break;
                }
                b = (b - 1) & comp;
            }
        }
        Jet { c }
    }
}

/// Dot product of two jet vectors.
pub fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    let dim = a.first().map(Jet::dim).unwrap_or(1);
    let mut s = Jet::zero(dim);
    for (x, y) in a.iter().zip(b) {
        s += &(x * y);
    }
    s
}

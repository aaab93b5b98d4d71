//! Wick pairings and functional-derivative combinatorics.
//!
//! Terms are kept symbolic (label lists with rational coefficients) until a
//! kernel is supplied. The same engine counts the assignments of
//! functional derivatives to the sources of `(½⟨J G J⟩)^k / k!`, which is
//! how the first-order two-point terms and the vacuum correction arise.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::gaussian::{dirichlet_green_unchecked, infinite_line_green};
use crate::quad::composite_gauss_legendre;

/// Largest point count accepted by [`enumerate_pairings`].
pub const MAX_PAIRING_POINTS: usize = 16;
/// Largest number of source slots the derivative-assignment engine will
/// permute (8! = 40320 assignments).
pub const MAX_ASSIGNMENT_SLOTS: usize = 8;

/// A perfect matching of the labels `1..=2n`, canonically ordered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// All `(n−1)!!` pairings of `n_points` labels, lexicographically ordered.
pub fn enumerate_pairings(n_points: usize) -> Result<Vec<Pairing>> {
    if n_points % 2 == 1 {
        return Err(Error::domain(format!("cannot pair an odd number of points ({n_points})")));
    }
    if n_points > MAX_PAIRING_POINTS {
        return Err(Error::Capacity(format!(
            "{n_points} points exceeds the pairing guard of {MAX_PAIRING_POINTS}"
        )));
    }
    let mut out = Vec::new();
    let labels: Vec<usize> = (1..=n_points).collect();
    pair_up(&labels, &mut Vec::new(), &mut out);
    Ok(out)
}

fn pair_up(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    let Some((&first, tail)) = rest.split_first() else {
        out.push(Pairing { pairs: acc.clone() });
        return;
    };
    for (i, &partner) in tail.iter().enumerate() {
        let remaining: Vec<usize> = tail.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &l)| l).collect();
        acc.push((first, partner));
        pair_up(&remaining, acc, out);
        acc.pop();
    }
}

/// Free (Gaussian) n-point function: zero for odd counts, otherwise the sum
/// over pairings of products of `kernel`.
pub fn free_npoint<T: Copy>(points: &[T], kernel: impl Fn(T, T) -> f64) -> Result<f64> {
    if points.len() % 2 == 1 {
        return Ok(0.0);
    }
    let pairings = enumerate_pairings(points.len())?;
    Ok(pairings
        .iter()
        .map(|p| p.pairs.iter().map(|&(i, j)| kernel(points[i - 1], points[j - 1])).product::<f64>())
        .sum())
}

/// A point a kernel factor can attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// External point `x_i` (1-based).
    External(usize),
    /// Integrated interaction vertex.
    Vertex(usize),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::External(i) => write!(f, "x{i}"),
            Label::Vertex(0) => write!(f, "x"),
            Label::Vertex(v) => write!(f, "y{v}"),
        }
    }
}

/// Whether the vertex factor carries `−iλ` (real time) or `−λ` (Euclidean).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSignature {
    RealTime,
    Euclidean,
}

impl VertexSignature {
    pub fn symbol(&self) -> &'static str {
        match self {
            VertexSignature::RealTime => "-i*lambda",
            VertexSignature::Euclidean => "-lambda",
        }
    }
}

/// One distinct analytic expression produced by the derivative expansion.
///
/// The value is `coefficient · vertex^{n_vertices} · ∫ Π G(kernel_factors)`,
/// integrating every vertex label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractionTerm {
    pub kernel_factors: Vec<(Label, Label)>,
    pub multiplicity: u64,
    #[serde(with = "ratio_serde")]
    pub coefficient: Rational64,
    pub n_vertices: usize,
    pub vertex: VertexSignature,
}

mod ratio_serde {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        format!("{}/{}", r.numer(), r.denom()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let text = String::deserialize(d)?;
        let (n, m) = text.split_once('/').ok_or_else(|| serde::de::Error::custom("expected n/d"))?;
        let n: i64 = n.trim().parse().map_err(serde::de::Error::custom)?;
        let m: i64 = m.trim().parse().map_err(serde::de::Error::custom)?;
        Ok(Rational64::new(n, m))
    }
}

impl ContractionTerm {
    /// Connected iff every vertex is linked (through kernel lines) to an
    /// external point. Pure vacuum bubbles count as disconnected.
    pub fn is_connected(&self) -> bool {
        let mut labels: Vec<Label> = self.kernel_factors.iter().flat_map(|&(a, b)| [a, b]).collect();
        labels.sort();
        labels.dedup();
        let idx = |l: Label| labels.binary_search(&l).expect("label present");
        let mut parent: Vec<usize> = (0..labels.len()).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for &(a, b) in &self.kernel_factors {
            let (ra, rb) = (root(&mut parent, idx(a)), root(&mut parent, idx(b)));
            parent[ra] = rb;
        }
        let anchored: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Label::External(_)))
            .map(|(i, _)| root(&mut parent, i))
            .collect();
        (0..labels.len())
            .filter(|&i| matches!(labels[i], Label::Vertex(_)))
            .all(|i| anchored.contains(&root(&mut parent, i)))
    }

    pub fn describe(&self) -> String {
        let factors: Vec<String> = self.kernel_factors.iter().map(|(a, b)| format!("G({a},{b})")).collect();
        let vtx = if self.n_vertices > 0 { format!(" * ({})", self.vertex.symbol()) } else { String::new() };
        format!("{}{} * {}", self.coefficient, vtx, factors.join(" "))
    }

    /// Numerical value with the single vertex (if any) integrated over
    /// `domain` by Gauss–Legendre quadrature; `vertex_value` is the
    /// Euclidean vertex constant (e.g. `−λ/ħ`).
    pub fn evaluate(
        &self,
        kernel: &dyn Fn(f64, f64) -> f64,
        externals: &[f64],
        domain: (f64, f64),
        vertex_value: f64,
    ) -> Result<f64> {
        if self.n_vertices > 1 {
            return Err(Error::Capacity("numerical evaluation handles at most one vertex".into()));
        }
        let at = |label: Label, x: f64| -> Result<f64> {
            match label {
                Label::External(i) => externals
                    .get(i - 1)
                    .copied()
                    .ok_or_else(|| Error::structure(format!("missing external point x{i}"))),
                Label::Vertex(_) => Ok(x),
            }
        };
        for (a, b) in &self.kernel_factors {
            at(*a, 0.0)?;
            at(*b, 0.0)?;
        }
        let integrand = |x: f64| -> f64 {
            self.kernel_factors
                .iter()
                .map(|(a, b)| kernel(at(*a, x).unwrap_or(f64::NAN), at(*b, x).unwrap_or(f64::NAN)))
                .product()
        };
        let coeff = *self.coefficient.numer() as f64 / *self.coefficient.denom() as f64;
        if self.n_vertices == 0 {
            return Ok(coeff * integrand(0.0));
        }
        // The integrand has kinks at the external points; place panel edges there.
        let mut edges = vec![domain.0, domain.1];
        edges.extend(externals.iter().copied().filter(|x| *x > domain.0 && *x < domain.1));
        edges.sort_by(f64::total_cmp);
        let integral: f64 = edges
            .windows(2)
            .map(|w| composite_gauss_legendre(integrand, w[0], w[1], 64, 16))
            .sum();
        Ok(coeff * vertex_value * integral)
    }
}

fn canonical(factors: &mut [(Label, Label)]) {
    for f in factors.iter_mut() {
        if f.1 < f.0 {
            *f = (f.1, f.0);
        }
    }
    factors.sort();
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Applies one functional derivative per entry of `derivatives` to
/// `(½⟨J G J⟩)^k / k!` with `k = derivatives.len()/2`, enumerating all
/// `(2k)!` assignments of derivatives to source slots and grouping them
/// by the resulting kernel product.
///
/// Coefficients exclude vertex constants; a vertex with `p` legs
/// contributes `1/p!` (the `λ/4!` convention) via `vertex_legs`.
pub fn contract(derivatives: &[Label], vertex_legs: usize, vertex: VertexSignature) -> Result<Vec<ContractionTerm>> {
    let slots = derivatives.len();
    if slots % 2 == 1 {
        return Ok(Vec::new());
    }
    if slots > MAX_ASSIGNMENT_SLOTS {
        return Err(Error::Capacity(format!(
            "{slots} source slots exceeds the assignment guard of {MAX_ASSIGNMENT_SLOTS}"
        )));
    }
    let k = slots / 2;
    let n_vertices = {
        let mut vs: Vec<usize> =
            derivatives.iter().filter_map(|l| if let Label::Vertex(v) = l { Some(*v) } else { None }).collect();
        vs.sort();
        vs.dedup();
        vs.len()
    };
    let mut groups: BTreeMap<Vec<(Label, Label)>, u64> = BTreeMap::new();
    let mut perm: Vec<usize> = (0..slots).collect();
    loop {
        // perm[slot] = index of the derivative acting on that slot
        let mut factors: Vec<(Label, Label)> =
            (0..k).map(|f| (derivatives[perm[2 * f]], derivatives[perm[2 * f + 1]])).collect();
        canonical(&mut factors);
        *groups.entry(factors).or_insert(0) += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    // (1/k!)(1/2)^k from the expansion, (1/p!)^{n_vertices} from the vertices.
    let denom = factorial(k) * (1i64 << k) * factorial(vertex_legs).pow(n_vertices as u32);
    Ok(groups
        .into_iter()
        .map(|(kernel_factors, multiplicity)| ContractionTerm {
            kernel_factors,
            multiplicity,
            coefficient: Rational64::new(multiplicity as i64, denom),
            n_vertices,
            vertex,
        })
        .collect())
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Terms of the `n_external`-point function at the given order in a quartic
/// coupling. Only orders 0 and 1 are generated.
pub fn perturbative_terms(n_external: usize, order: usize, vertex: VertexSignature) -> Result<Vec<ContractionTerm>> {
    if order > 1 {
        return Err(Error::Capacity(format!("order {order} is beyond the first-order guard")));
    }
    let mut derivatives: Vec<Label> = (1..=n_external).map(Label::External).collect();
    if order == 1 {
        derivatives.extend([Label::Vertex(0); 4]);
    }
    contract(&derivatives, 4, vertex)
}

/// The order-λ two-point expansion: a connected tadpole term and a
/// disconnected vacuum-bubble term, 720 assignments in total.
pub fn first_order_two_point_terms(vertex: VertexSignature) -> Vec<ContractionTerm> {
    perturbative_terms(2, 1, vertex).expect("six slots are within the guard")
}

/// Kernel used for the Euclidean contractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    /// `−e^{−ω|τ−τ'|}/(2mω)` on `[−β/2, β/2]`.
    #[default]
    InfiniteLine,
    /// Finite-β Dirichlet Green's function on `[0, β]`.
    Dirichlet,
}

fn euclidean_kernel(choice: KernelChoice, beta: f64, mass: f64, omega: f64, hbar: f64) -> (Box<dyn Fn(f64, f64) -> f64>, (f64, f64)) {
    match choice {
        KernelChoice::InfiniteLine => (
            Box::new(move |a, b| hbar * infinite_line_green(a, b, mass, omega)),
            (-0.5 * beta, 0.5 * beta),
        ),
        KernelChoice::Dirichlet => (
            Box::new(move |a, b| hbar * dirichlet_green_unchecked(a, b, beta, mass, omega)),
            (0.0, beta),
        ),
    }
}

/// Minimum `βω` accepted by [`euclidean_first_order_ke_ratio`].
pub const MIN_BETA_OMEGA: f64 = 20.0;

/// Order-λ part of `ln(K_E(0,β;0,0)/C)`: the vacuum contraction
/// `−(λ/ħ)/8 ∫ (ħG(τ,τ))² dτ` built from the assignment engine.
pub fn euclidean_first_order_log_ke(
    beta: f64,
    mass: f64,
    omega: f64,
    lambda: f64,
    hbar: f64,
    kernel: KernelChoice,
) -> Result<f64> {
    for (name, x) in [("beta", beta), ("m", mass), ("omega", omega), ("hbar", hbar)] {
        crate::error::ensure_positive(name, x)?;
    }
    let terms = perturbative_terms(0, 1, VertexSignature::Euclidean)?;
    let (g, domain) = euclidean_kernel(kernel, beta, mass, omega, hbar);
    let mut total = 0.0;
    for t in &terms {
        total += t.evaluate(&*g, &[], domain, -lambda / hbar)?;
    }
    Ok(total)
}

/// Order-λ coefficient of `−ln(K_E/C)/β`; tends to `λħ/(32m²ω²)`.
pub fn euclidean_first_order_ke_ratio(
    beta: f64,
    mass: f64,
    omega: f64,
    lambda: f64,
    hbar: f64,
    kernel: KernelChoice,
) -> Result<f64> {
    if beta * omega < MIN_BETA_OMEGA {
        return Err(Error::Precondition(format!(
            "beta*omega = {} is below the large-beta guard {MIN_BETA_OMEGA}",
            beta * omega
        )));
    }
    Ok(-euclidean_first_order_log_ke(beta, mass, omega, lambda, hbar, kernel)? / beta)
}

/// Outcome of dividing the order-λ numerator of `G⁽²⁾` by the vacuum
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationReport {
    pub numerator: Vec<ContractionTerm>,
    pub denominator: Vec<ContractionTerm>,
    /// Order-λ terms of numerator/denominator.
    pub quotient: Vec<ContractionTerm>,
    #[serde(with = "ratio_serde")]
    pub disconnected_coefficient: Rational64,
    /// `G⁽²⁾(x₁,x₂)` to order λ for the Euclidean Dirichlet kernel.
    pub externals: Vec<f64>,
    pub numerical_value: f64,
    /// Same quantity computed as the un-cancelled ratio `N/D` (agrees to O(λ²)).
    pub unexpanded_ratio: f64,
}

/// Forms numerator and denominator of the two-point function to order λ,
/// divides symbolically and checks the vacuum bubble cancels exactly.
pub fn disconnected_cancellation_check(beta: f64, mass: f64, omega: f64, lambda: f64) -> Result<CancellationReport> {
    let vs = VertexSignature::Euclidean;
    let mut numerator = perturbative_terms(2, 0, vs)?;
    numerator.extend(perturbative_terms(2, 1, vs)?);
    let mut denominator = perturbative_terms(0, 0, vs)?;
    denominator.extend(perturbative_terms(0, 1, vs)?);

    // N/D = N₀ + N₁ − N₀·D₁ + O(λ²), with D₀ = 1.
    let mut sum: BTreeMap<(Vec<(Label, Label)>, usize), Rational64> = BTreeMap::new();
    for t in &numerator {
        *sum.entry((t.kernel_factors.clone(), t.n_vertices)).or_insert_with(|| Rational64::from(0)) += t.coefficient;
    }
    let n0: Vec<&ContractionTerm> = numerator.iter().filter(|t| t.n_vertices == 0).collect();
    for d in denominator.iter().filter(|t| t.n_vertices == 1) {
        for n in &n0 {
            let mut factors = n.kernel_factors.clone();
            factors.extend(d.kernel_factors.iter().copied());
            canonical(&mut factors);
            *sum.entry((factors, 1)).or_insert_with(|| Rational64::from(0)) -= n.coefficient * d.coefficient;
        }
    }
    let template = |factors: &Vec<(Label, Label)>, n_vertices: usize| {
        numerator.iter().find(|t| &t.kernel_factors == factors && t.n_vertices == n_vertices).cloned()
    };
    let mut disconnected_coefficient = Rational64::from(0);
    let mut quotient = Vec::new();
    for ((factors, n_vertices), coefficient) in sum {
        let mut term = template(&factors, n_vertices).unwrap_or(ContractionTerm {
            kernel_factors: factors.clone(),
            multiplicity: 0,
            coefficient,
            n_vertices,
            vertex: vs,
        });
        term.coefficient = coefficient;
        if !term.is_connected() {
            disconnected_coefficient += coefficient;
        }
        if coefficient != Rational64::from(0) {
            quotient.push(term);
        }
    }

    let (g, domain) = euclidean_kernel(KernelChoice::Dirichlet, beta, mass, omega, 1.0);
    let externals = vec![beta / 3.0, beta / 2.0];
    let eval = |terms: &[ContractionTerm], ext: &[f64]| -> Result<f64> {
        terms.iter().map(|t| t.evaluate(&*g, ext, domain, -lambda)).sum()
    };
    let numerical_value = eval(&quotient, &externals)?;
    let unexpanded_ratio = eval(&numerator, &externals)? / eval(&denominator, &[])?;
    Ok(CancellationReport {
        numerator,
        denominator,
        quotient,
        disconnected_coefficient,
        externals,
        numerical_value,
        unexpanded_ratio,
    })
}

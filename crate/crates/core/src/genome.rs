//! Equation genomes.
//!
//! A gene is a derivative order: on the right-hand side gene `k` stands for
//! `d^k u / dx^k` (0 is `u` itself), on the left-hand side for `d^k u / dt^k`.
//! A [`TermModule`] multiplies its genes' factors, and a [`Genome`] sums its
//! right-hand-side modules: `[1],{[0,1],[3]}` is `u_t = a*u*u_x + b*u_xxx`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenomeError;

pub type Gene = u8;

/// Product of derivative factors. Canonical form keeps genes non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermModule(Vec<Gene>);

impl TermModule {
    pub fn new(genes: Vec<Gene>) -> Result<Self, GenomeError> {
        if genes.is_empty() {
            return Err(GenomeError::Invalid("empty module".into()));
        }
        Ok(Self(genes))
    }

    pub fn genes(&self) -> &[Gene] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_order(&self) -> Gene {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn canonical(&self) -> Self {
        let mut genes = self.0.clone();
        genes.sort_unstable();
        Self(genes)
    }

    pub fn is_canonical(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    /// `u*u_x`, `u_xx*u_xx`, ...
    pub fn term_name(&self) -> String {
        self.0
            .iter()
            .map(|&g| factor_name(g, 'x'))
            .collect::<Vec<_>>()
            .join("*")
    }

    pub(crate) fn genes_mut(&mut self) -> &mut Vec<Gene> {
        &mut self.0
    }
}

impl fmt::Display for TermModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{g}")?;
        }
        write!(f, "]")
    }
}

fn factor_name(order: Gene, axis: char) -> String {
    if order == 0 {
        "u".to_string()
    } else {
        let mut s = String::from("u_");
        s.extend(std::iter::repeat(axis).take(order as usize));
        s
    }
}

/// One temporal left-hand-side gene plus a set of right-hand-side modules.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Genome {
    lhs: Gene,
    rhs: Vec<TermModule>,
}

impl Genome {
    pub fn new(lhs: Gene, rhs: Vec<TermModule>) -> Result<Self, GenomeError> {
        if lhs == 0 {
            return Err(GenomeError::Invalid("left-hand side order must be >= 1".into()));
        }
        if rhs.is_empty() {
            return Err(GenomeError::Invalid("right-hand side needs a module".into()));
        }
        Ok(Self { lhs, rhs })
    }

    /// Convenience constructor from raw gene lists.
    pub fn from_genes(lhs: Gene, rhs: &[&[Gene]]) -> Result<Self, GenomeError> {
        let modules = rhs
            .iter()
            .map(|m| TermModule::new(m.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(lhs, modules)
    }

    pub fn lhs(&self) -> Gene {
        self.lhs
    }

    pub fn rhs(&self) -> &[TermModule] {
        &self.rhs
    }

    /// Total right-hand-side gene count, the length penalized by the fitness.
    pub fn length(&self) -> usize {
        self.rhs.iter().map(TermModule::len).sum()
    }

    pub fn max_spatial_order(&self) -> Gene {
        self.rhs.iter().map(TermModule::max_order).max().unwrap_or(0)
    }

    /// Sorts genes within modules, then sorts and deduplicates modules.
    pub fn canonical(&self) -> Self {
        let mut rhs: Vec<TermModule> = self.rhs.iter().map(TermModule::canonical).collect();
        rhs.sort();
        rhs.dedup();
        Self { lhs: self.lhs, rhs }
    }

    pub fn is_canonical(&self) -> bool {
        self.rhs.iter().all(TermModule::is_canonical) && self.rhs.windows(2).all(|w| w[0] < w[1])
    }

    pub(crate) fn set_lhs(&mut self, lhs: Gene) {
        self.lhs = lhs;
    }

    pub(crate) fn rhs_mut(&mut self) -> &mut Vec<TermModule> {
        &mut self.rhs
    }

    /// `u_t = -1.000*u_x + 0.100*u_xx`; coefficients follow module order.
    pub fn render(&self, coeffs: &[f64]) -> Result<String, GenomeError> {
        if coeffs.len() != self.rhs.len() {
            return Err(GenomeError::CoefficientCount {
                coeffs: coeffs.len(),
                modules: self.rhs.len(),
            });
        }
        let mut out = format!("{} =", factor_name(self.lhs, 't'));
        for (i, (m, &c)) in self.rhs.iter().zip(coeffs).enumerate() {
            let mag = format_coefficient(c.abs());
            let negative = c < 0.0 && mag.chars().any(|ch| ('1'..='9').contains(&ch));
            match (i, negative) {
                (0, false) => out.push_str(&format!(" {mag}*")),
                (0, true) => out.push_str(&format!(" -{mag}*")),
                (_, false) => out.push_str(&format!(" + {mag}*")),
                (_, true) => out.push_str(&format!(" - {mag}*")),
            }
            out.push_str(&m.term_name());
        }
        Ok(out)
    }

    /// Structure-only description, e.g. `u_t, u*u_x, u_xxx`.
    pub fn structure(&self) -> String {
        std::iter::once(factor_name(self.lhs, 't'))
            .chain(self.rhs.iter().map(TermModule::term_name))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Inverse of [`render`](Self::render). Returns the canonical genome with
    /// coefficients reordered to match it.
    pub fn parse_rendered(text: &str) -> Result<(Genome, Vec<f64>), GenomeError> {
        let fail = |reason: &str| GenomeError::Parse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let (lhs, rhs) = text.split_once(" = ").ok_or_else(|| fail("missing ` = `"))?;
        let lhs = parse_factor(lhs.trim(), 't').ok_or_else(|| fail("bad left-hand side"))?;
        let mut tokens = rhs.split_whitespace();
        let mut terms: Vec<(f64, TermModule)> = Vec::new();
        let mut sign = 1.0;
        while let Some(tok) = tokens.next() {
            let tok = match tok {
                "+" | "-" if terms.is_empty() => return Err(fail("leading operator")),
                "+" | "-" => {
                    sign = if tok == "-" { -1.0 } else { 1.0 };
                    tokens.next().ok_or_else(|| fail("dangling operator"))?
                }
                _ if !terms.is_empty() => return Err(fail("missing operator")),
                _ => tok,
            };
            let mut parts = tok.split('*');
            let coeff: f64 = parts
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| fail("bad coefficient"))?;
            let genes = parts
                .map(|p| parse_factor(p, 'x'))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| fail("bad factor"))?;
            terms.push((sign * coeff, TermModule::new(genes)?));
            sign = 1.0;
        }
        let genome = Genome::new(lhs, terms.iter().map(|(_, m)| m.clone()).collect())?;
        let canonical = genome.canonical();
        if canonical.rhs.len() != terms.len() {
            return Err(fail("duplicate terms"));
        }
        let coeffs = canonical
            .rhs
            .iter()
            .map(|m| {
                terms
                    .iter()
                    .find(|(_, t)| t.canonical() == *m)
                    .map(|(c, _)| *c)
                    .expect("every canonical module comes from a parsed term")
            })
            .collect();
        Ok((canonical, coeffs))
    }
}

/// Three decimals, extended until four significant digits show; trailing zeros beyond
/// the third decimal dropped: `1.000`, `0.100`, `0.9998`, `0.00248`.
fn format_coefficient(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0.000".into() } else { format!("{v}") };
    }
    let mag = v.log10().floor() as i32;
    let decimals = (3 - mag).max(3) as usize;
    let mut s = format!("{v:.decimals$}");
    let min_len = s.find('.').unwrap() + 4;
    while s.len() > min_len && s.ends_with('0') {
        s.pop();
    }
    s
}

fn parse_factor(text: &str, axis: char) -> Option<Gene> {
    if text == "u" {
        return Some(0);
    }
    let rest = text.strip_prefix("u_")?;
    if rest.is_empty() || !rest.chars().all(|c| c == axis) {
        return None;
    }
    Gene::try_from(rest.len()).ok()
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}],{{", self.lhs)?;
        for (i, m) in self.rhs.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

impl From<Genome> for String {
    fn from(g: Genome) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Genome {
    type Error = GenomeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Parses the bracket notation `[lhs],{[g,g,..],[g,..],..}`. Whitespace is ignored.
impl FromStr for Genome {
    type Err = GenomeError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| GenomeError::Parse {
            text: text.to_string(),
            reason: reason.to_string(),
        };
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let rest = compact.strip_prefix('[').ok_or_else(|| fail("expected `[`"))?;
        let (lhs, rest) = rest.split_once(']').ok_or_else(|| fail("unclosed lhs"))?;
        let lhs: Gene = lhs.parse().map_err(|_| fail("bad lhs gene"))?;
        let body = rest
            .strip_prefix(",{")
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| fail("expected `,{...}`"))?;
        let mut modules = Vec::new();
        let mut rest = body;
        while !rest.is_empty() {
            let inner = rest.strip_prefix('[').ok_or_else(|| fail("expected module"))?;
            let (genes, tail) = inner.split_once(']').ok_or_else(|| fail("unclosed module"))?;
            let genes = genes
                .split(',')
                .map(|g| g.parse::<Gene>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| fail("bad gene"))?;
            modules.push(TermModule::new(genes)?);
            rest = match tail.strip_prefix(',') {
                Some(r) if !r.is_empty() => r,
                Some(_) => return Err(fail("trailing comma")),
                None if tail.is_empty() => tail,
                None => return Err(fail("expected `,` between modules")),
            };
        }
        Genome::new(lhs, modules)
    }
}

/// Basic genes and size bounds for sampling, plus the order ceilings that
/// mutation must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenePool {
    pub lhs_options: Vec<Gene>,
    pub rhs_options: Vec<Gene>,
    pub max_spatial_order: Gene,
    pub max_temporal_order: Gene,
    pub max_initial_modules: usize,
    pub max_module_genes: usize,
}

impl Default for GenePool {
    fn default() -> Self {
        Self::standard()
    }
}

impl GenePool {
    /// `[u_t, u_tt]{u, u_x, u_xx, u_xxx}` with third order as the ceiling.
    pub fn standard() -> Self {
        Self {
            lhs_options: vec![1, 2],
            rhs_options: vec![0, 1, 2, 3],
            max_spatial_order: 3,
            max_temporal_order: 2,
            max_initial_modules: 3,
            max_module_genes: 3,
        }
    }

    pub fn validate(&self) -> Result<(), GenomeError> {
        let bad = |m: String| Err(GenomeError::Invalid(m));
        if self.lhs_options.is_empty() || self.rhs_options.is_empty() {
            return bad("gene pool options must be non-empty".into());
        }
        if self.max_temporal_order == 0 {
            return bad("max temporal order must be >= 1".into());
        }
        if let Some(&g) = self.lhs_options.iter().find(|&&g| g == 0 || g > self.max_temporal_order) {
            return bad(format!("lhs option {g} outside 1..={}", self.max_temporal_order));
        }
        if let Some(&g) = self.rhs_options.iter().find(|&&g| g > self.max_spatial_order) {
            return bad(format!("rhs option {g} above max spatial order {}", self.max_spatial_order));
        }
        if self.max_initial_modules == 0 || self.max_module_genes == 0 {
            return bad("initial size bounds must be positive".into());
        }
        Ok(())
    }

    /// Whether every gene respects the order ceilings.
    pub fn admits(&self, genome: &Genome) -> bool {
        (1..=self.max_temporal_order).contains(&genome.lhs())
            && genome.max_spatial_order() <= self.max_spatial_order
    }

    pub fn random_module<R: Rng + ?Sized>(&self, rng: &mut R) -> TermModule {
        let n = rng.gen_range(1..=self.max_module_genes);
        let genes = (0..n)
            .map(|_| *self.rhs_options.choose(rng).expect("validated non-empty"))
            .collect();
        TermModule(genes).canonical()
    }

    /// Uniform lhs, 1..=max modules of 1..=max genes each, canonicalized.
    pub fn random_genome<R: Rng + ?Sized>(&self, rng: &mut R) -> Genome {
        let lhs = *self.lhs_options.choose(rng).expect("validated non-empty");
        let n = rng.gen_range(1..=self.max_initial_modules);
        let rhs = (0..n).map(|_| self.random_module(rng)).collect();
        Genome { lhs, rhs }.canonical()
    }
}

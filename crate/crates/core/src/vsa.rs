//! Bipolar vector symbolic architecture.
//!
//! Symbols are dense real hypervectors. `bind` is elementwise multiplication
//! and `bundle` is elementwise addition, so for strictly bipolar vectors
//! binding is its own inverse. A triplet `(h, r, t)` is stored as
//! `H'*h + R'*r + T'*t` where `H'`, `R'`, `T'` are fixed role keywords.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_DIMENSION: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperVector(Vec<f64>);

impl HyperVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        HyperVector(values)
    }

    pub fn zeros(dimension: usize) -> Self {
        HyperVector(vec![0.0; dimension])
    }

    /// Each component is -1 or +1 with probability 1/2.
    pub fn random_bipolar<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("hypervector dimension must be positive"));
        }
        Ok(HyperVector(
            (0..dimension)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        ))
    }

    pub fn random_bipolar_seeded(dimension: usize, seed: u64) -> Result<Self> {
        Self::random_bipolar(dimension, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_strictly_bipolar(&self) -> bool {
        self.0.iter().all(|&x| x == 1.0 || x == -1.0)
    }

    pub fn dot(&self, other: &HyperVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn negated(&self) -> HyperVector {
        HyperVector(self.0.iter().map(|x| -x).collect())
    }
}

impl From<Vec<f64>> for HyperVector {
    fn from(values: Vec<f64>) -> Self {
        HyperVector(values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &HyperVector, b: &HyperVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Elementwise product.
pub fn bind(a: &HyperVector, b: &HyperVector) -> Result<HyperVector> {
    check_dims(a, b)?;
    Ok(HyperVector(
        a.0.iter().zip(&b.0).map(|(x, y)| x * y).collect(),
    ))
}

/// Elementwise sum. Never normalized.
pub fn bundle(vs: &[HyperVector]) -> Result<HyperVector> {
    let first = vs
        .first()
        .ok_or_else(|| invalid("bundle of an empty list"))?;
    let mut out = first.clone();
    for v in &vs[1..] {
        check_dims(first, v)?;
        for (o, x) in out.0.iter_mut().zip(&v.0) {
            *o += x;
        }
    }
    Ok(out)
}

pub fn cosine(a: &HyperVector, b: &HyperVector) -> Result<f64> {
    check_dims(a, b)?;
    cosine_slices(&a.0, &b.0)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// The three role keywords of a triplet encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Head,
    Relation,
    Tail,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Head, Role::Relation, Role::Tail];

    pub fn keyword(self) -> &'static str {
        match self {
            Role::Head => "H'",
            Role::Relation => "R'",
            Role::Tail => "T'",
        }
    }

    pub fn from_keyword(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.keyword() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Entity,
    Relation,
}

/// Keyword vectors shared between spaces that must agree on role encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Keywords([HyperVector; 3]);

impl Keywords {
    pub fn random<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Result<Self> {
        Ok(Keywords([
            HyperVector::random_bipolar(dimension, rng)?,
            HyperVector::random_bipolar(dimension, rng)?,
            HyperVector::random_bipolar(dimension, rng)?,
        ]))
    }

    pub fn new(head: HyperVector, relation: HyperVector, tail: HyperVector) -> Result<Self> {
        let kw = Keywords([head, relation, tail]);
        let d = kw.0[0].dim();
        for (role, v) in Role::ALL.iter().zip(&kw.0) {
            if v.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.dim(),
                });
            }
            if !v.is_strictly_bipolar() {
                return Err(invalid(format!("keyword {role} is not strictly bipolar")));
            }
        }
        Ok(kw)
    }

    pub fn get(&self, role: Role) -> &HyperVector {
        &self.0[role.index()]
    }

    pub fn dimension(&self) -> usize {
        self.0[0].dim()
    }
}

/// A named symbol table with role keywords.
///
/// Frozen spaces hold strictly bipolar symbols and reject mutation; trainable
/// spaces expose their symbol vectors to the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct VsaSpace {
    name: String,
    dimension: usize,
    keywords: Keywords,
    names: Vec<String>,
    kinds: Vec<SymbolKind>,
    vectors: Vec<HyperVector>,
    index: HashMap<String, usize>,
    trainable: bool,
}

impl VsaSpace {
    /// Builds a space from explicit vectors.
    pub fn new(
        name: impl Into<String>,
        keywords: Keywords,
        symbols: Vec<(String, SymbolKind, HyperVector)>,
        trainable: bool,
    ) -> Result<Self> {
        let name = name.into();
        let dimension = keywords.dimension();
        let mut space = VsaSpace {
            name,
            dimension,
            keywords,
            names: Vec::with_capacity(symbols.len()),
            kinds: Vec::with_capacity(symbols.len()),
            vectors: Vec::with_capacity(symbols.len()),
            index: HashMap::with_capacity(symbols.len()),
            trainable,
        };
        for (sym, kind, v) in symbols {
            if v.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: v.dim(),
                });
            }
            if !trainable && !v.is_strictly_bipolar() {
                return Err(invalid(format!(
                    "symbol `{sym}` of frozen space `{}` is not strictly bipolar",
                    space.name
                )));
            }
            if Role::from_keyword(&sym).is_some() || space.index.contains_key(&sym) {
                return Err(Error::DuplicateName(sym));
            }
            space.index.insert(sym.clone(), space.names.len());
            space.names.push(sym);
            space.kinds.push(kind);
            space.vectors.push(v);
        }
        Ok(space)
    }

    /// Frozen space with i.i.d. random bipolar symbols.
    pub fn random_frozen<R: Rng + ?Sized>(
        name: impl Into<String>,
        keywords: Keywords,
        entities: &[String],
        relations: &[String],
        rng: &mut R,
    ) -> Result<Self> {
        let d = keywords.dimension();
        let symbols = labelled(entities, relations)
            .map(|(n, k)| Ok((n, k, HyperVector::random_bipolar(d, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, keywords, symbols, false)
    }

    /// Trainable space with symbols drawn i.i.d. uniform(-1, 1).
    pub fn random_trainable<R: Rng + ?Sized>(
        name: impl Into<String>,
        keywords: Keywords,
        entities: &[String],
        relations: &[String],
        rng: &mut R,
    ) -> Result<Self> {
        let d = keywords.dimension();
        let symbols = labelled(entities, relations)
            .map(|(n, k)| {
                let v = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (n, k, HyperVector(v))
            })
            .collect();
        Self::new(name, keywords, symbols, true)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn keywords(&self) -> &Keywords {
        &self.keywords
    }

    pub fn keyword(&self, role: Role) -> &HyperVector {
        self.keywords.get(role)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, idx: usize) -> SymbolKind {
        self.kinds[idx]
    }

    pub fn indices_of(&self, kind: SymbolKind) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.kinds[i] == kind).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingSymbol(name.to_string()))
    }

    pub fn symbol(&self, name: &str) -> Result<&HyperVector> {
        Ok(&self.vectors[self.index_of(name)?])
    }

    pub fn vector(&self, idx: usize) -> &HyperVector {
        &self.vectors[idx]
    }

    pub fn vectors(&self) -> &[HyperVector] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> Result<&mut [HyperVector]> {
        if !self.trainable {
            return Err(Error::FrozenSpace(self.name.clone()));
        }
        Ok(&mut self.vectors)
    }

    /// Copy of this space under a new name, trainable or not. Freezing checks bipolarity.
    pub fn relabeled(&self, name: &str, rename: impl Fn(&str) -> String, trainable: bool) -> Result<Self> {
        let symbols = self
            .names
            .iter()
            .zip(&self.kinds)
            .zip(&self.vectors)
            .map(|((n, k), v)| (rename(n), *k, v.clone()))
            .collect();
        Self::new(name, self.keywords.clone(), symbols, trainable)
    }

    /// `H'*h + R'*r + T'*t` for the named symbols.
    pub fn encode_triplet(&self, head: &str, relation: &str, tail: &str) -> Result<TripletVector> {
        let (h, r, t) = (
            self.index_of(head)?,
            self.index_of(relation)?,
            self.index_of(tail)?,
        );
        Ok(TripletVector {
            vector: self.encode_indices(h, r, t),
            source: TripletSource {
                space: self.name.clone(),
                head: head.to_string(),
                relation: relation.to_string(),
                tail: tail.to_string(),
            },
        })
    }

    pub fn encode_indices(&self, head: usize, relation: usize, tail: usize) -> HyperVector {
        let hk = self.keyword(Role::Head).as_slice();
        let rk = self.keyword(Role::Relation).as_slice();
        let tk = self.keyword(Role::Tail).as_slice();
        let (h, r, t) = (
            self.vectors[head].as_slice(),
            self.vectors[relation].as_slice(),
            self.vectors[tail].as_slice(),
        );
        HyperVector(
            (0..self.dimension)
                .map(|k| hk[k] * h[k] + rk[k] * r[k] + tk[k] * t[k])
                .collect(),
        )
    }

    /// Unbinds a role from an encoded triplet.
    pub fn query(&self, k: &HyperVector, keyword: &str) -> Result<HyperVector> {
        let role = Role::from_keyword(keyword)
            .ok_or_else(|| Error::MissingSymbol(keyword.to_string()))?;
        bind(k, self.keyword(role))
    }

    /// Cleanup memory: the symbol with the highest cosine to `v`. Ties go to
    /// the earliest-inserted symbol.
    pub fn nearest_symbol(&self, v: &HyperVector) -> Result<(&str, f64)> {
        if self.is_empty() {
            return Err(invalid("nearest_symbol on an empty space"));
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, s) in self.vectors.iter().enumerate() {
            let c = cosine(v, s)?;
            if c > best.1 {
                best = (i, c);
            }
        }
        Ok((&self.names[best.0], best.1))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpaceFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpaceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let file: SpaceFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        file.try_into()
    }
}

fn labelled<'a>(
    entities: &'a [String],
    relations: &'a [String],
) -> impl Iterator<Item = (String, SymbolKind)> + 'a {
    entities
        .iter()
        .map(|e| (e.clone(), SymbolKind::Entity))
        .chain(relations.iter().map(|r| (r.clone(), SymbolKind::Relation)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletSource {
    pub space: String,
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletVector {
    pub vector: HyperVector,
    pub source: TripletSource,
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    name: String,
    dimension: usize,
    keywords: IndexMap<String, Vec<f64>>,
    symbols: IndexMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relations: Vec<String>,
    trainable: bool,
}

impl From<&VsaSpace> for SpaceFile {
    fn from(s: &VsaSpace) -> Self {
        SpaceFile {
            name: s.name.clone(),
            dimension: s.dimension,
            keywords: Role::ALL
                .iter()
                .map(|r| (r.keyword().to_string(), s.keyword(*r).0.clone()))
                .collect(),
            symbols: s
                .names
                .iter()
                .cloned()
                .zip(s.vectors.iter().map(|v| v.0.clone()))
                .collect(),
            relations: s
                .indices_of(SymbolKind::Relation)
                .into_iter()
                .map(|i| s.names[i].clone())
                .collect(),
            trainable: s.trainable,
        }
    }
}

impl TryFrom<SpaceFile> for VsaSpace {
    type Error = Error;

    fn try_from(mut f: SpaceFile) -> Result<Self> {
        if f.keywords.len() != 3 {
            return Err(invalid("keywords must be exactly H', R', T'"));
        }
        let mut take = |role: Role| {
            f.keywords
                .swap_remove(role.keyword())
                .map(HyperVector)
                .ok_or_else(|| Error::MissingSymbol(role.keyword().to_string()))
        };
        let keywords = Keywords::new(take(Role::Head)?, take(Role::Relation)?, take(Role::Tail)?)?;
        if keywords.dimension() != f.dimension {
            return Err(Error::DimensionMismatch {
                expected: f.dimension,
                found: keywords.dimension(),
            });
        }
        for r in &f.relations {
            if !f.symbols.contains_key(r) {
                return Err(Error::MissingSymbol(r.clone()));
            }
        }
        let symbols = f
            .symbols
            .into_iter()
            .map(|(n, v)| {
                let kind = if f.relations.contains(&n) {
                    SymbolKind::Relation
                } else {
                    SymbolKind::Entity
                };
                (n, kind, HyperVector(v))
            })
            .collect();
        VsaSpace::new(f.name, keywords, symbols, f.trainable)
    }
}

//! Triplet-vector matching between the trainable and the frozen space, the
//! three VSA losses, and concept-level alignment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, Assignment, CostMatrix};
use crate::error::{invalid, Error, Result};
use crate::kg::{ConceptMap, KnowledgeGraph, Triplet};
use crate::vsa::{cosine, cosine_slices, HyperVector, Role, SymbolKind, TripletVector, VsaSpace};

/// Symbol indices `[head, relation, tail]` of a triplet inside a space.
pub type SymbolTriplet = [usize; 3];

/// Maps a graph triplet onto a space whose symbols are the graph's entities
/// followed by its relations.
pub fn symbol_triplet(t: Triplet, n_entities: usize) -> SymbolTriplet {
    [t.head, n_entities + t.relation, t.tail]
}

/// Space whose symbols are `kg`'s entities then relations.
pub fn space_layout_matches(space: &VsaSpace, kg: &KnowledgeGraph) -> bool {
    let n_e = kg.n_entities();
    space.len() == n_e + kg.n_relations()
        && kg.entities().iter().enumerate().all(|(i, e)| {
            space.names()[i] == *e && space.kind(i) == SymbolKind::Entity
        })
        && kg.relations().iter().enumerate().all(|(i, r)| {
            space.names()[n_e + i] == *r && space.kind(n_e + i) == SymbolKind::Relation
        })
}

/// `cost[i][j] = 1 - cos(nn[i], g[j])`.
pub fn triplet_cost_matrix(nn: &[TripletVector], g: &[TripletVector]) -> Result<CostMatrix> {
    if nn.is_empty() || g.is_empty() {
        return Err(invalid("cost matrix needs non-empty triplet lists"));
    }
    let mut data = Vec::with_capacity(nn.len() * g.len());
    for a in nn {
        for b in g {
            data.push(1.0 - cosine(&a.vector, &b.vector)?);
        }
    }
    CostMatrix::new(nn.len(), g.len(), data)
}

/// Role-pair classes: `p == q` contributes a plain dot product because the
/// keywords are bipolar; mixed pairs go through `kw_p * kw_q`.
const PAIR_CLASSES: usize = 4;

fn pair_class(p: usize, q: usize) -> usize {
    match (p.min(q), p.max(q)) {
        (a, b) if a == b => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        _ => 3,
    }
}

/// Precomputed role-weighted Gram tables for one snapshot of the two spaces.
///
/// With `K = H'*a + R'*b + T'*c`, every inner product between two encoded
/// triplets is a sum of nine symbol-level terms, so cosines of triplet
/// vectors cost O(1) once the tables exist.
pub struct TripletGeometry {
    n_nn: usize,
    n_g: usize,
    dimension: usize,
    /// `kw_p * kw_q` for the mixed classes (index 0 is all ones and unused).
    role_products: Vec<Vec<f64>>,
    cross: Vec<Array2<f64>>,
    nn_nn: Vec<Array2<f64>>,
    g_g: Vec<Array2<f64>>,
    nn_matrix: Array2<f64>,
    g_matrix: Array2<f64>,
}

fn stack(vs: &[HyperVector], d: usize) -> Array2<f64> {
    let mut m = Array2::zeros((vs.len(), d));
    for (mut row, v) in m.axis_iter_mut(Axis(0)).zip(vs) {
        row.as_slice_mut()
            .expect("row-major")
            .copy_from_slice(v.as_slice());
    }
    m
}

impl TripletGeometry {
    pub fn new(vsa_nn: &VsaSpace, vsa_g: &VsaSpace) -> Result<Self> {
        if vsa_nn.dimension() != vsa_g.dimension() {
            return Err(Error::DimensionMismatch {
                expected: vsa_g.dimension(),
                found: vsa_nn.dimension(),
            });
        }
        if vsa_nn.keywords() != vsa_g.keywords() {
            return Err(invalid("the two spaces must share keyword vectors"));
        }
        let d = vsa_nn.dimension();
        let kw: Vec<&[f64]> = Role::ALL
            .iter()
            .map(|r| vsa_nn.keyword(*r).as_slice())
            .collect();
        let mut role_products = vec![vec![1.0; d]; PAIR_CLASSES];
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            role_products[pair_class(p, q)] = kw[p].iter().zip(kw[q]).map(|(a, b)| a * b).collect();
        }
        let nn_matrix = stack(vsa_nn.vectors(), d);
        let g_matrix = stack(vsa_g.vectors(), d);
        let weighted = |m: &Array2<f64>, class: usize| -> Array2<f64> {
            let rho = ArrayView2::from_shape((1, d), &role_products[class]).expect("shape");
            m * &rho
        };
        let mut cross = Vec::with_capacity(PAIR_CLASSES);
        let mut nn_nn = Vec::with_capacity(PAIR_CLASSES);
        let mut g_g = Vec::with_capacity(PAIR_CLASSES);
        for class in 0..PAIR_CLASSES {
            let (wn, wg) = if class == 0 {
                (nn_matrix.clone(), g_matrix.clone())
            } else {
                (weighted(&nn_matrix, class), weighted(&g_matrix, class))
            };
            cross.push(wn.dot(&g_matrix.t()));
            nn_nn.push(wn.dot(&nn_matrix.t()));
            g_g.push(wg.dot(&g_matrix.t()));
        }
        Ok(TripletGeometry {
            n_nn: vsa_nn.len(),
            n_g: vsa_g.len(),
            dimension: d,
            role_products,
            cross,
            nn_nn,
            g_g,
            nn_matrix,
            g_matrix,
        })
    }

    pub fn nn_dot(&self, a: SymbolTriplet, b: SymbolTriplet) -> f64 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                s += self.nn_nn[pair_class(p, q)][(a[p], b[q])];
            }
        }
        s
    }

    pub fn g_dot(&self, a: SymbolTriplet, b: SymbolTriplet) -> f64 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                s += self.g_g[pair_class(p, q)][(a[p], b[q])];
            }
        }
        s
    }

    pub fn cross_dot(&self, a: SymbolTriplet, b: SymbolTriplet) -> f64 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                s += self.cross[pair_class(p, q)][(a[p], b[q])];
            }
        }
        s
    }

    /// Same matrix as [`triplet_cost_matrix`] on the encoded triplets.
    pub fn cost_matrix(&self, nn: &[SymbolTriplet], g: &[SymbolTriplet]) -> Result<CostMatrix> {
        if nn.is_empty() || g.is_empty() {
            return Err(invalid("cost matrix needs non-empty triplet lists"));
        }
        let g_norms = g
            .iter()
            .map(|&t| norm_or_err(self.g_dot(t, t)))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(nn.len() * g.len());
        for &a in nn {
            let na = norm_or_err(self.nn_dot(a, a))?;
            for (&b, nb) in g.iter().zip(&g_norms) {
                let c = (self.cross_dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
                data.push(1.0 - c);
            }
        }
        CostMatrix::new(nn.len(), g.len(), data)
    }
}

fn norm_or_err(sq: f64) -> Result<f64> {
    if sq > 0.0 {
        Ok(sq.sqrt())
    } else {
        Err(Error::UndefinedSimilarity)
    }
}

/// Running sum of `1 - cos` over matched pairs, with the symbol gradient kept
/// as coefficients on role-weighted symbol vectors until [`finish`].
///
/// [`finish`]: LossKAccumulator::finish
pub struct LossKAccumulator {
    sum: f64,
    matches: usize,
    coef_g: Vec<Array2<f64>>,
    coef_nn: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct LossK {
    pub value: f64,
    pub matches: usize,
    /// Set when no pair was matched; value and gradients are then zero.
    pub empty: bool,
    /// One gradient row per trainable symbol.
    pub grads: Vec<Vec<f64>>,
}

impl LossKAccumulator {
    pub fn new(geo: &TripletGeometry) -> Self {
        LossKAccumulator {
            sum: 0.0,
            matches: 0,
            coef_g: vec![Array2::zeros((geo.n_nn, geo.n_g)); PAIR_CLASSES],
            coef_nn: vec![Array2::zeros((geo.n_nn, geo.n_nn)); PAIR_CLASSES],
        }
    }

    /// Adds matched pairs `(nn[i], g[j])` from `assignment`.
    pub fn add(
        &mut self,
        geo: &TripletGeometry,
        nn: &[SymbolTriplet],
        g: &[SymbolTriplet],
        assignment: &Assignment,
    ) -> Result<()> {
        for &(i, j) in &assignment.pairs {
            let (a, b) = (nn[i], g[j]);
            let nu = norm_or_err(geo.nn_dot(a, a))?;
            let nv = norm_or_err(geo.g_dot(b, b))?;
            let cos = geo.cross_dot(a, b) / (nu * nv);
            self.sum += 1.0 - cos;
            self.matches += 1;
            // d(1 - cos)/du = -v/(|u||v|) + cos * u/|u|^2
            let alpha = -1.0 / (nu * nv);
            let beta = cos / (nu * nu);
            for p in 0..3 {
                for q in 0..3 {
                    let class = pair_class(p, q);
                    self.coef_g[class][(a[p], b[q])] += alpha;
                    self.coef_nn[class][(a[p], a[q])] += beta;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self, geo: &TripletGeometry) -> LossK {
        if self.matches == 0 {
            return LossK {
                value: 0.0,
                matches: 0,
                empty: true,
                grads: vec![vec![0.0; geo.dimension]; geo.n_nn],
            };
        }
        let m = self.matches as f64;
        let mut grad = Array2::<f64>::zeros((geo.n_nn, geo.dimension));
        for class in 0..PAIR_CLASSES {
            let mut part = self.coef_g[class].dot(&geo.g_matrix);
            part += &self.coef_nn[class].dot(&geo.nn_matrix);
            if class != 0 {
                let rho = ArrayView2::from_shape((1, geo.dimension), &geo.role_products[class])
                    .expect("shape");
                part *= &rho;
            }
            grad += &part;
        }
        grad /= m;
        LossK {
            value: self.sum / m,
            matches: self.matches,
            empty: false,
            grads: grad.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// `L_K = (1/M) sum (1 - cos(K_NN[i], K_G[j]))` over the matched pairs, with
/// gradients on the trainable symbols only.
pub fn loss_k(
    vsa_nn: &VsaSpace,
    vsa_g: &VsaSpace,
    nn: &[SymbolTriplet],
    g: &[SymbolTriplet],
    assignment: &Assignment,
) -> Result<LossK> {
    if !assignment.is_valid_for(nn.len(), g.len()) {
        return Err(invalid("assignment does not fit the triplet lists"));
    }
    let geo = TripletGeometry::new(vsa_nn, vsa_g)?;
    let mut acc = LossKAccumulator::new(&geo);
    acc.add(&geo, nn, g, assignment)?;
    Ok(acc.finish(&geo))
}

/// Matches one set of network triplets against the human triplets.
pub fn match_triplets(
    geo: &TripletGeometry,
    nn: &[SymbolTriplet],
    g: &[SymbolTriplet],
) -> Result<Assignment> {
    if nn.is_empty() || g.is_empty() {
        return Ok(Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        });
    }
    hungarian(&geo.cost_matrix(nn, g)?)
}

/// Regularizer value under two normalizations plus the gradient of `mean`.
#[derive(Clone, Debug)]
pub struct Regularizer {
    /// Normalized by the symbol count.
    pub literal: f64,
    /// Normalized by pair count (independence) or component count (bipolarity).
    pub mean: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Independence of the space's symbols: `|cos|` summed over unordered pairs.
/// The subgradient of `|x|` at 0 is 0.
pub fn loss_r1(space: &VsaSpace) -> Result<Regularizer> {
    let n = space.len();
    let d = space.dimension();
    if n < 2 {
        return Ok(Regularizer {
            literal: 0.0,
            mean: 0.0,
            grads: vec![vec![0.0; d]; n],
        });
    }
    let v = stack(space.vectors(), d);
    let gram = v.dot(&v.t());
    let norms: Vec<f64> = (0..n)
        .map(|i| norm_or_err(gram[(i, i)]))
        .collect::<Result<_>>()?;
    let pairs = (n * (n - 1) / 2) as f64;
    let mut sum = 0.0;
    let mut coef = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = gram[(i, j)] / (norms[i] * norms[j]);
            if i < j {
                sum += c.abs();
            }
            let s = if c > 0.0 {
                1.0
            } else if c < 0.0 {
                -1.0
            } else {
                0.0
            };
            // d|cos_ij|/dv_i = sign * (v_j/(|v_i||v_j|) - cos * v_i/|v_i|^2)
            coef[(i, j)] += s / (norms[i] * norms[j]) / pairs;
            coef[(i, i)] -= s * c / (norms[i] * norms[i]) / pairs;
        }
    }
    let grad = coef.dot(&v);
    Ok(Regularizer {
        literal: sum / n as f64,
        mean: sum / pairs,
        grads: grad.outer_iter().map(|r| r.to_vec()).collect(),
    })
}

/// Distance from bipolarity: `min((x-1)^2, (x+1)^2)` per component. At 0 the
/// gradient pushes toward +1.
pub fn loss_r2(space: &VsaSpace) -> Regularizer {
    let n = space.len();
    let d = space.dimension();
    let count = (n * d).max(1) as f64;
    let mut sum = 0.0;
    let grads = space
        .vectors()
        .iter()
        .map(|v| {
            v.as_slice()
                .iter()
                .map(|&x| {
                    let target = if x >= 0.0 { 1.0 } else { -1.0 };
                    sum += (x - target) * (x - target);
                    2.0 * (x - target) / count
                })
                .collect()
        })
        .collect();
    Regularizer {
        literal: if n == 0 { 0.0 } else { sum / n as f64 },
        mean: sum / count,
        grads,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    #[serde(rename = "match")]
    pub name: String,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub sigma: IndexMap<String, Match>,
    /// Mean cosine over all matched concept pairs.
    pub consistency: f64,
    /// Mean |cos| over symbol pairs of the trainable space.
    pub similarity: f64,
    /// Mean distance of components from the nearer of -1/+1.
    pub bipolar_loss: f64,
    pub consistency_entities: f64,
    pub consistency_relations: f64,
    pub similarity_literal: f64,
    pub bipolar_loss_literal: f64,
}

impl AlignmentReport {
    /// Index form of `sigma` for graphs laid out like the two spaces.
    pub fn concept_map(&self, kg_nn: &KnowledgeGraph, kg_g: &KnowledgeGraph) -> ConceptMap {
        let mut map = ConceptMap::default();
        for (nn, m) in &self.sigma {
            if let (Some(a), Some(b)) = (kg_nn.entity_index(nn), kg_g.entity_index(&m.name)) {
                map.entities.insert(a, b);
            } else if let (Some(a), Some(b)) =
                (kg_nn.relation_index(nn), kg_g.relation_index(&m.name))
            {
                map.relations.insert(a, b);
            }
        }
        map
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Matches symbols of the trainable space to symbols of the human space,
/// entities and relations in separate pools, with no threshold.
pub fn concept_match(vsa_nn: &VsaSpace, vsa_g: &VsaSpace) -> Result<AlignmentReport> {
    if vsa_nn.dimension() != vsa_g.dimension() {
        return Err(Error::DimensionMismatch {
            expected: vsa_g.dimension(),
            found: vsa_nn.dimension(),
        });
    }
    let mut found: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut pool_means = [f64::NAN; 2];
    for (slot, kind) in [SymbolKind::Entity, SymbolKind::Relation].into_iter().enumerate() {
        let rows = vsa_nn.indices_of(kind);
        let cols = vsa_g.indices_of(kind);
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let mut cos = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            for &j in &cols {
                cos.push(cosine_slices(
                    vsa_nn.vector(i).as_slice(),
                    vsa_g.vector(j).as_slice(),
                )?);
            }
        }
        let cost = CostMatrix::new(rows.len(), cols.len(), cos.iter().map(|c| 1.0 - c).collect())?;
        let assignment = hungarian(&cost)?;
        let mut total = 0.0;
        for &(r, c) in &assignment.pairs {
            let x = cos[r * cols.len() + c];
            total += x;
            found.insert(rows[r], (cols[c], x));
        }
        pool_means[slot] = total / assignment.len() as f64;
    }
    let consistency = if found.is_empty() {
        0.0
    } else {
        found.values().map(|(_, c)| c).sum::<f64>() / found.len() as f64
    };
    let r1 = loss_r1(vsa_nn)?;
    let r2 = loss_r2(vsa_nn);
    Ok(AlignmentReport {
        sigma: found
            .into_iter()
            .map(|(i, (j, c))| {
                (
                    vsa_nn.names()[i].clone(),
                    Match {
                        name: vsa_g.names()[j].clone(),
                        cosine: c,
                    },
                )
            })
            .collect(),
        consistency,
        similarity: r1.mean,
        bipolar_loss: r2.mean,
        consistency_entities: pool_means[0],
        consistency_relations: pool_means[1],
        similarity_literal: r1.literal,
        bipolar_loss_literal: r2.literal,
    })
}

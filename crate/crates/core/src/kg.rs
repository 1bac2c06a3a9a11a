//! Knowledge graphs, the batch x relation x head x tail activation tensor, and
//! translation between the two.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Cells at or above this value assert a triplet.
pub const ASSERT_THRESHOLD: f64 = 0.5;

/// Index triplet. Field order gives the `(relation, head, tail)` sort order
/// used by the activation tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub relation: usize,
    pub head: usize,
    pub tail: usize,
}

impl Triplet {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triplet {
            relation,
            head,
            tail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    triplets: BTreeSet<Triplet>,
}

impl KnowledgeGraph {
    pub fn new(
        entities: Vec<String>,
        relations: Vec<String>,
        triplets: impl IntoIterator<Item = Triplet>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for n in entities.iter().chain(&relations) {
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let mut set = BTreeSet::new();
        for t in triplets {
            if t.head >= entities.len() || t.tail >= entities.len() || t.relation >= relations.len() {
                return Err(invalid(format!("triplet {t:?} out of bounds")));
            }
            if !set.insert(t) {
                return Err(Error::DuplicateTriplet {
                    head: entities[t.head].clone(),
                    relation: relations[t.relation].clone(),
                    tail: entities[t.tail].clone(),
                });
            }
        }
        Ok(KnowledgeGraph {
            entities,
            relations,
            triplets: set,
        })
    }

    /// Anonymous graph with generated names `{prefix}e{i}` / `{prefix}r{i}`.
    pub fn anonymous(prefix: &str, n_entities: usize, n_relations: usize) -> Self {
        KnowledgeGraph {
            entities: (0..n_entities).map(|i| format!("{prefix}e{i}")).collect(),
            relations: (0..n_relations).map(|i| format!("{prefix}r{i}")).collect(),
            triplets: BTreeSet::new(),
        }
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Triplets sorted by `(relation, head, tail)`.
    pub fn triplets(&self) -> impl ExactSizeIterator<Item = Triplet> + '_ {
        self.triplets.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, t: Triplet) -> bool {
        self.triplets.contains(&t)
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == name)
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == name)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: KgFile = serde_json::from_str(text)?;
        file.resolve()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = KgFile {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            triplets: self
                .triplets()
                .map(|t| {
                    [
                        self.entities[t.head].clone(),
                        self.relations[t.relation].clone(),
                        self.entities[t.tail].clone(),
                    ]
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct KgFile {
    entities: Vec<String>,
    relations: Vec<String>,
    triplets: Vec<[String; 3]>,
}

impl KgFile {
    fn resolve(self) -> Result<KnowledgeGraph> {
        let ents: HashMap<&str, usize> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.as_str(), i))
            .collect();
        let rels: HashMap<&str, usize> = self
            .relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i))
            .collect();
        let mut triplets = Vec::with_capacity(self.triplets.len());
        for (index, [h, r, t]) in self.triplets.iter().enumerate() {
            let unknown = |name: &String| Error::UnknownName {
                name: name.clone(),
                index,
            };
            triplets.push(Triplet::new(
                *ents.get(h.as_str()).ok_or_else(|| unknown(h))?,
                *rels.get(r.as_str()).ok_or_else(|| unknown(r))?,
                *ents.get(t.as_str()).ok_or_else(|| unknown(t))?,
            ));
        }
        KnowledgeGraph::new(self.entities, self.relations, triplets)
    }
}

/// Loads the `{"entities", "relations", "triplets"}` JSON format.
pub fn load_kg_json(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: KgFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    file.resolve()
}

/// The default Experiment 1 graph: digit morphology over straight, cross and curve strokes.
pub const KG_G1_JSON: &str = include_str!("../data/kg_g1.json");

pub fn default_kg_g1() -> KnowledgeGraph {
    KnowledgeGraph::from_json(KG_G1_JSON).expect("bundled kg_g1.json is valid")
}

/// Dense `[batch][relation][head][tail]` tensor with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KgvTensor {
    batch: usize,
    n_relations: usize,
    n_entities: usize,
    values: Vec<f64>,
}

impl KgvTensor {
    pub fn zeros(batch: usize, n_relations: usize, n_entities: usize) -> Self {
        KgvTensor {
            batch,
            n_relations,
            n_entities,
            values: vec![0.0; batch * n_relations * n_entities * n_entities],
        }
    }

    pub fn from_values(
        batch: usize,
        n_relations: usize,
        n_entities: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = batch * n_relations * n_entities * n_entities;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("KGV value {v} outside [0, 1]")));
        }
        Ok(KgvTensor {
            batch,
            n_relations,
            n_entities,
            values,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn cells_per_sample(&self) -> usize {
        self.n_relations * self.n_entities * self.n_entities
    }

    pub fn offset(&self, sample: usize, relation: usize, head: usize, tail: usize) -> usize {
        ((sample * self.n_relations + relation) * self.n_entities + head) * self.n_entities + tail
    }

    pub fn get(&self, sample: usize, relation: usize, head: usize, tail: usize) -> f64 {
        self.values[self.offset(sample, relation, head, tail)]
    }

    pub fn set(&mut self, sample: usize, relation: usize, head: usize, tail: usize, v: f64) {
        assert!((0.0..=1.0).contains(&v), "KGV value {v} outside [0, 1]");
        let o = self.offset(sample, relation, head, tail);
        self.values[o] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, sample: usize) -> &[f64] {
        let n = self.cells_per_sample();
        &self.values[sample * n..(sample + 1) * n]
    }
}

/// Triplets asserted by one sample, ordered by `(relation, head, tail)`.
pub fn kgv_to_triplets(kgv: &KgvTensor, sample: usize, threshold: f64) -> Result<Vec<Triplet>> {
    if sample >= kgv.batch {
        return Err(invalid(format!(
            "sample {sample} out of range for batch {}",
            kgv.batch
        )));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid(format!("threshold {threshold} outside (0, 1]")));
    }
    let n = kgv.n_entities;
    Ok(kgv
        .sample(sample)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= threshold)
        .map(|(i, _)| Triplet::new((i / n) % n, i / (n * n), i % n))
        .collect())
}

/// One-hot tensor of the graph's triplets, repeated across the batch.
pub fn triplets_to_kgv(kg: &KnowledgeGraph, batch: usize) -> Result<KgvTensor> {
    if batch == 0 {
        return Err(invalid("batch must be at least 1"));
    }
    let mut kgv = KgvTensor::zeros(batch, kg.n_relations(), kg.n_entities());
    for a in 0..batch {
        for t in kg.triplets() {
            kgv.set(a, t.relation, t.head, t.tail, 1.0);
        }
    }
    Ok(kgv)
}

/// Correspondence from network concepts to human concepts, by index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConceptMap {
    pub entities: BTreeMap<usize, usize>,
    pub relations: BTreeMap<usize, usize>,
}

impl ConceptMap {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    /// Network entity mapped onto a given human entity, if any.
    pub fn entity_preimage(&self, g_entity: usize) -> Option<usize> {
        self.entities
            .iter()
            .find(|(_, &g)| g == g_entity)
            .map(|(&nn, _)| nn)
    }
}

/// Supervision targets for the correction loss; inactive cells carry no signal.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMask {
    batch: usize,
    n_relations: usize,
    n_entities: usize,
    targets: Vec<f64>,
    active: Vec<bool>,
}

impl TargetMask {
    pub fn inactive(batch: usize, n_relations: usize, n_entities: usize) -> Self {
        let n = batch * n_relations * n_entities * n_entities;
        TargetMask {
            batch,
            n_relations,
            n_entities,
            targets: vec![0.0; n],
            active: vec![false; n],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.n_relations, self.n_entities)
    }

    fn offset(&self, sample: usize, relation: usize, head: usize, tail: usize) -> usize {
        ((sample * self.n_relations + relation) * self.n_entities + head) * self.n_entities + tail
    }

    pub fn set(&mut self, sample: usize, relation: usize, head: usize, tail: usize, target: bool) {
        let o = self.offset(sample, relation, head, tail);
        self.active[o] = true;
        self.targets[o] = if target { 1.0 } else { 0.0 };
    }

    /// `Some(target)` for active cells.
    pub fn get(&self, sample: usize, relation: usize, head: usize, tail: usize) -> Option<f64> {
        let o = self.offset(sample, relation, head, tail);
        self.active[o].then(|| self.targets[o])
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Closed-world correction targets for each sample's class head.
///
/// For a sample labelled `y`, let `e` be the human entity for `y` and `c` the
/// network entity mapped onto it. Every cell `(b, c, d)` with `b` and `d`
/// mapped becomes active, with target 1 when `(e, sigma(b), sigma(d))` is a
/// human triplet and 0 otherwise. All other cells stay inactive.
pub fn build_conflict_targets(
    kg_g: &KnowledgeGraph,
    sigma: &ConceptMap,
    labels: &[usize],
    class_entity: &[usize],
    nn_relations: usize,
    nn_entities: usize,
) -> Result<TargetMask> {
    let mut mask = TargetMask::inactive(labels.len(), nn_relations, nn_entities);
    for (a, &y) in labels.iter().enumerate() {
        let e_g = *class_entity
            .get(y)
            .ok_or_else(|| invalid(format!("label {y} has no class entity")))?;
        let Some(head) = sigma.entity_preimage(e_g) else {
            continue;
        };
        for (&b, &g_rel) in &sigma.relations {
            for (&d, &g_tail) in &sigma.entities {
                let present = kg_g.contains(Triplet::new(e_g, g_rel, g_tail));
                mask.set(a, b, head, d, present);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn kgv_translation_examples() {
        let kgv = KgvTensor::zeros(2, 1, 4);
        assert!(kgv_to_triplets(&kgv, 0, 0.5).unwrap().is_empty());

        let mut kgv = KgvTensor::zeros(1, 2, 4);
        kgv.set(0, 0, 2, 3, 0.9);
        assert_eq!(
            kgv_to_triplets(&kgv, 0, 0.5).unwrap(),
            vec![Triplet::new(2, 0, 3)]
        );
        kgv.set(0, 1, 0, 1, 0.5);
        kgv.set(0, 1, 1, 1, 0.4999999);
        assert_eq!(
            kgv_to_triplets(&kgv, 0, ASSERT_THRESHOLD).unwrap(),
            vec![Triplet::new(2, 0, 3), Triplet::new(0, 1, 1)]
        );
        assert!(matches!(
            kgv_to_triplets(&kgv, 1, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn one_hot_tensor() {
        let empty = KnowledgeGraph::anonymous("", 3, 1);
        let kgv = triplets_to_kgv(&empty, 2).unwrap();
        assert!(kgv.values().iter().all(|&v| v == 0.0));

        let kg = KnowledgeGraph::new(s(&["a", "b", "c", "d"]), s(&["r"]), [Triplet::new(2, 0, 3)])
            .unwrap();
        let kgv = triplets_to_kgv(&kg, 3).unwrap();
        for a in 0..3 {
            assert_eq!(kgv.sample(a).iter().filter(|&&v| v != 0.0).count(), 1);
            assert_eq!(kgv.get(a, 0, 2, 3), 1.0);
        }
    }

    #[test]
    fn default_graph_shape() {
        let kg = default_kg_g1();
        assert_eq!(kg.n_entities(), 13);
        assert_eq!(kg.n_relations(), 1);
        assert_eq!(kg.len(), 15);
        assert_eq!(kg.relations(), ["contains"]);
    }

    #[test]
    fn json_errors_are_distinct() {
        let unknown = r#"{"entities":["a"],"relations":["r"],"triplets":[["a","r","zz"]]}"#;
        assert!(matches!(
            KnowledgeGraph::from_json(unknown),
            Err(Error::UnknownName { ref name, index: 0 }) if name == "zz"
        ));
        let dup = r#"{"entities":["a"],"relations":["r"],"triplets":[["a","r","a"],["a","r","a"]]}"#;
        assert!(matches!(
            KnowledgeGraph::from_json(dup),
            Err(Error::DuplicateTriplet { .. })
        ));
        assert!(matches!(
            KnowledgeGraph::from_json("{"),
            Err(Error::Json(_))
        ));
        let empty = r#"{"entities":["a","b"],"relations":["r"],"triplets":[]}"#;
        assert_eq!(KnowledgeGraph::from_json(empty).unwrap().len(), 0);
        let clash = r#"{"entities":["a","r"],"relations":["r"],"triplets":[]}"#;
        assert!(matches!(
            KnowledgeGraph::from_json(clash),
            Err(Error::DuplicateName(_))
        ));
    }

    #[test]
    fn load_from_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kg.json");
        fs::write(&p, "not json").unwrap();
        assert!(matches!(load_kg_json(&p), Err(Error::Parse { .. })));
        default_kg_g1().save(&p).unwrap();
        assert_eq!(load_kg_json(&p).unwrap(), default_kg_g1());
    }

    fn toy_graph() -> KnowledgeGraph {
        // zero, contains, curve
        KnowledgeGraph::new(
            s(&["zero", "curve", "straight"]),
            s(&["contains"]),
            [Triplet::new(0, 0, 1)],
        )
        .unwrap()
    }

    fn toy_sigma() -> ConceptMap {
        // NN entities: 0 -> zero, 1 -> curve, 2 -> straight, 3 unmapped.
        let mut sigma = ConceptMap::default();
        sigma.entities.extend([(0, 0), (1, 1), (2, 2)]);
        sigma.relations.insert(0, 0);
        sigma
    }

    #[test]
    fn conflict_targets_toy() {
        let kg = toy_graph();
        let mask = build_conflict_targets(&kg, &toy_sigma(), &[0], &[0], 1, 4).unwrap();
        assert_eq!(mask.get(0, 0, 0, 1), Some(1.0));
        assert_eq!(mask.get(0, 0, 0, 2), Some(0.0));
        assert_eq!(mask.get(0, 0, 0, 0), Some(0.0));
        assert_eq!(mask.get(0, 0, 0, 3), None);
        for head in 1..4 {
            for tail in 0..4 {
                assert_eq!(mask.get(0, 0, head, tail), None);
            }
        }
        assert_eq!(mask.active_count(), 3);
    }

    #[test]
    fn conflict_targets_edge_cases() {
        let kg = toy_graph();
        let mask = build_conflict_targets(&kg, &ConceptMap::default(), &[0, 0], &[0], 1, 4).unwrap();
        assert_eq!(mask.active_count(), 0);

        // Class 1 maps to `straight`'s index, which no NN entity covers.
        let mut sigma = toy_sigma();
        sigma.entities.remove(&2);
        let mask = build_conflict_targets(&kg, &sigma, &[1], &[0, 2], 1, 4).unwrap();
        assert_eq!(mask.active_count(), 0);

        assert!(matches!(
            build_conflict_targets(&kg, &sigma, &[5], &[0, 2], 1, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    /// Brute-force reference: enumerate every cell and apply the rule directly.
    fn reference_target(
        kg: &KnowledgeGraph,
        sigma: &ConceptMap,
        e_g: usize,
        b: usize,
        c: usize,
        d: usize,
    ) -> Option<f64> {
        let head = sigma.entities.get(&c)?;
        let rel = sigma.relations.get(&b)?;
        let tail = sigma.entities.get(&d)?;
        if *head != e_g {
            return None;
        }
        Some(if kg.contains(Triplet::new(*head, *rel, *tail)) { 1.0 } else { 0.0 })
    }

    proptest! {
        #[test]
        fn round_trip_on_random_graphs(
            n_e in 1usize..=64,
            n_r in 1usize..=3,
            cells in prop::collection::vec((0usize..64, 0usize..3, 0usize..64), 0..200),
        ) {
            let trips: BTreeSet<Triplet> = cells
                .into_iter()
                .map(|(h, r, t)| Triplet::new(h % n_e, r % n_r, t % n_e))
                .collect();
            let mut kg = KnowledgeGraph::anonymous("x", n_e, n_r);
            kg = KnowledgeGraph::new(kg.entities.clone(), kg.relations.clone(), trips.clone()).unwrap();
            let kgv = triplets_to_kgv(&kg, 1).unwrap();
            let back = kgv_to_triplets(&kgv, 0, 0.5).unwrap();
            prop_assert_eq!(back, trips.into_iter().collect::<Vec<_>>());
        }

        #[test]
        fn conflict_mask_matches_enumeration(
            trips in prop::collection::btree_set((0usize..4, 0usize..2, 0usize..4), 0..12),
            ent_map in prop::collection::vec(prop::option::of(0usize..4), 5),
            rel_map in prop::collection::vec(prop::option::of(0usize..2), 2),
            label in 0usize..4,
            flip in (0usize..4, 0usize..2, 0usize..4),
        ) {
            let kg = KnowledgeGraph::new(
                s(&["g0", "g1", "g2", "g3"]),
                s(&["q0", "q1"]),
                trips.iter().map(|&(h, r, t)| Triplet::new(h, r, t)),
            ).unwrap();
            // Keep sigma injective.
            let mut sigma = ConceptMap::default();
            for (nn, g) in ent_map.iter().enumerate() {
                if let Some(g) = g {
                    if sigma.entity_preimage(*g).is_none() {
                        sigma.entities.insert(nn, *g);
                    }
                }
            }
            for (nn, g) in rel_map.iter().enumerate() {
                if let Some(g) = g {
                    if !sigma.relations.values().any(|x| x == g) {
                        sigma.relations.insert(nn, *g);
                    }
                }
            }
            let class_entity = [0, 1, 2, 3];
            let mask = build_conflict_targets(&kg, &sigma, &[label], &class_entity, 2, 5).unwrap();
            for b in 0..2 {
                for c in 0..5 {
                    for d in 0..5 {
                        prop_assert_eq!(
                            mask.get(0, b, c, d),
                            reference_target(&kg, &sigma, label, b, c, d)
                        );
                    }
                }
            }

            // Flipping membership of a mapped triplet flips the matching active target.
            let (fh, fr, ft) = flip;
            let flipped_t = Triplet::new(fh, fr, ft);
            let mut flipped: BTreeSet<Triplet> = kg.triplets().collect();
            if !flipped.remove(&flipped_t) {
                flipped.insert(flipped_t);
            }
            let kg2 = KnowledgeGraph::new(kg.entities.clone(), kg.relations.clone(), flipped).unwrap();
            let mask2 = build_conflict_targets(&kg2, &sigma, &[label], &class_entity, 2, 5).unwrap();
            for b in 0..2 {
                for c in 0..5 {
                    for d in 0..5 {
                        let (Some(t1), Some(t2)) = (mask.get(0, b, c, d), mask2.get(0, b, c, d)) else {
                            prop_assert_eq!(mask.get(0, b, c, d).is_some(), mask2.get(0, b, c, d).is_some());
                            continue;
                        };
                        let mapped = Triplet::new(sigma.entities[&c], sigma.relations[&b], sigma.entities[&d]);
                        if mapped == flipped_t {
                            prop_assert_eq!(t1 + t2, 1.0);
                        } else {
                            prop_assert_eq!(t1, t2);
                        }
                    }
                }
            }
        }
    }
}

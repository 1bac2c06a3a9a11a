//! Joint optimization of the network and the trainable symbol space, plus the
//! symbol-only loop used on synthetic graphs.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{
    concept_match, loss_r1, loss_r2, match_triplets, symbol_triplet, AlignmentReport,
    LossKAccumulator, SymbolTriplet, TripletGeometry,
};
use crate::error::{invalid, Error, Result};
use crate::kg::{
    build_conflict_targets, kgv_to_triplets, triplets_to_kgv, ConceptMap, KnowledgeGraph,
    ASSERT_THRESHOLD,
};
use crate::mnist::MnistDataset;
use crate::neural::{regression_loss, task_loss, Architecture, KgAutoencoder, Upstream};
use crate::optim::{optimizer_update, AdamMoments};
use crate::vsa::{Keywords, VsaSpace, DEFAULT_DIMENSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossToggles {
    pub k: bool,
    pub r1: bool,
    pub r2: bool,
    pub r: bool,
    pub t: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles {
            k: true,
            r1: true,
            r2: true,
            r: true,
            t: true,
        }
    }
}

impl LossToggles {
    pub fn vsa(&self) -> bool {
        self.k || self.r1 || self.r2
    }

    pub fn network(&self) -> bool {
        self.r || self.t
    }

    pub fn none() -> Self {
        LossToggles {
            k: false,
            r1: false,
            r2: false,
            r: false,
            t: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub k: f64,
    pub r1: f64,
    /// Below 1 so that the bipolar pull cannot pin components on the wrong
    /// sign against the matching loss.
    pub r2: f64,
    pub r: f64,
    pub t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            k: 1.0,
            r1: 1.0,
            r2: 0.1,
            r: 1.0,
            t: 1.0,
        }
    }
}

pub fn digit_names() -> Vec<String> {
    [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate_net: f64,
    pub learning_rate_vsa: f64,
    pub master_seed: u64,
    pub dimension: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub hidden: usize,
    pub toggles: LossToggles,
    pub weights: LossWeights,
    /// First epoch (1-based) in which the correction loss is applied.
    pub regression_start_epoch: usize,
    pub threshold: f64,
    /// Human entity for each class label.
    pub class_entities: Vec<String>,
    /// Use only the first `n` training examples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            learning_rate_net: 1e-3,
            learning_rate_vsa: 1e-2,
            master_seed: 0,
            dimension: DEFAULT_DIMENSION,
            n_entities: 28,
            n_relations: 1,
            hidden: 256,
            toggles: LossToggles::default(),
            weights: LossWeights::default(),
            regression_start_epoch: 2,
            threshold: ASSERT_THRESHOLD,
            class_entities: digit_names(),
            train_limit: None,
            test_limit: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate_net > 0.0) || !(self.learning_rate_vsa > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if self.dimension == 0 || self.n_entities == 0 || self.n_relations == 0 || self.hidden == 0 {
            return Err(invalid("dimension and concept counts must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(invalid(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        let w = self.weights;
        if [w.k, w.r1, w.r2, w.r, w.t].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn architecture(&self, input: usize, classes: usize) -> Architecture {
        Architecture {
            input,
            hidden: self.hidden,
            n_relations: self.n_relations,
            n_entities: self.n_entities,
            classes,
        }
    }
}

/// Everything on the human side plus the anonymous network graph layout.
#[derive(Clone, Debug)]
pub struct AlignmentProblem {
    pub kg_g: KnowledgeGraph,
    pub vsa_g: VsaSpace,
    pub kg_nn: KnowledgeGraph,
    pub g_triplets: Vec<SymbolTriplet>,
    pub class_entity: Vec<usize>,
}

impl AlignmentProblem {
    pub fn new(kg_g: KnowledgeGraph, vsa_g: VsaSpace, kg_nn: KnowledgeGraph, class_entities: &[String]) -> Result<Self> {
        let class_entity = class_entities
            .iter()
            .map(|n| {
                kg_g.entity_index(n)
                    .ok_or_else(|| invalid(format!("class entity `{n}` is not in the human graph")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n_e = kg_g.n_entities();
        let g_triplets = kg_g.triplets().map(|t| symbol_triplet(t, n_e)).collect();
        Ok(AlignmentProblem {
            kg_g,
            vsa_g,
            kg_nn,
            g_triplets,
            class_entity,
        })
    }
}

/// Seeds drawn in a fixed order from the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivedSeeds {
    pub human_space: u64,
    pub network_space: u64,
    pub network: u64,
    pub shuffle: u64,
}

impl DerivedSeeds {
    pub fn from_master(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        DerivedSeeds {
            human_space: rng.next_u64(),
            network_space: rng.next_u64(),
            network: rng.next_u64(),
            shuffle: rng.next_u64(),
        }
    }
}

/// Frozen human space and trainable network space sharing one keyword set.
pub fn build_spaces(kg_g: &KnowledgeGraph, kg_nn: &KnowledgeGraph, dimension: usize, seeds: DerivedSeeds) -> Result<(VsaSpace, VsaSpace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.human_space);
    let keywords = Keywords::random(dimension, &mut rng)?;
    let vsa_g = VsaSpace::random_frozen("VSA_G", keywords.clone(), kg_g.entities(), kg_g.relations(), &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.network_space);
    let vsa_nn = VsaSpace::random_trainable("VSA_NN", keywords, kg_nn.entities(), kg_nn.relations(), &mut rng)?;
    Ok((vsa_g, vsa_nn))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(rename = "L_K")]
    pub l_k: f64,
    /// Symbol-count normalized.
    #[serde(rename = "L_R1")]
    pub l_r1: f64,
    #[serde(rename = "L_R2")]
    pub l_r2: f64,
    #[serde(rename = "L_R")]
    pub l_r: f64,
    #[serde(rename = "L_T")]
    pub l_t: f64,
    pub consistency: f64,
    pub similarity: f64,
    pub bipolar_loss: f64,
    pub test_accuracy: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,L_K,L_R1,L_R2,L_R,L_T,consistency,similarity,bipolar_loss,test_accuracy";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.l_k,
            self.l_r1,
            self.l_r2,
            self.l_r,
            self.l_t,
            self.consistency,
            self.similarity,
            self.bipolar_loss,
            self.test_accuracy
        )
    }
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for m in history {
        s.push_str(&m.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub l_k: f64,
    pub matches: usize,
    pub l_r1: f64,
    pub l_r1_mean: f64,
    pub l_r2: f64,
    pub l_r2_mean: f64,
    pub l_r: f64,
    pub active_cells: usize,
    pub l_t: f64,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: KgAutoencoder,
    pub vsa_nn: VsaSpace,
    net_moments: Vec<AdamMoments>,
    vsa_moments: Vec<AdamMoments>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub history: Vec<EpochMetrics>,
    /// Concept mapping used by the correction loss.
    pub sigma: ConceptMap,
}

impl TrainState {
    pub fn new(model: KgAutoencoder, vsa_nn: VsaSpace) -> Self {
        let net_moments = model.parameters().iter().map(|b| AdamMoments::new(b.len())).collect();
        let vsa_moments = vsa_nn.vectors().iter().map(|v| AdamMoments::new(v.dim())).collect();
        TrainState {
            model,
            vsa_nn,
            net_moments,
            vsa_moments,
            epoch: 0,
            step: 0,
            history: Vec::new(),
            sigma: ConceptMap::default(),
        }
    }

    pub fn network_checksum(&self) -> u64 {
        checksum(self.model.parameters())
    }

    pub fn vsa_checksum(&self) -> u64 {
        checksum(self.vsa_nn.vectors().iter().map(|v| v.as_slice()))
    }

    pub fn refresh_sigma(&mut self, problem: &AlignmentProblem) -> Result<AlignmentReport> {
        let report = concept_match(&self.vsa_nn, &problem.vsa_g)?;
        self.sigma = report.concept_map(&problem.kg_nn, &problem.kg_g);
        Ok(report)
    }
}

/// FNV-1a over the bit patterns of all values.
pub fn checksum<'a>(blocks: impl IntoIterator<Item = &'a [f64]>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for block in blocks {
        for v in block {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

fn check_finite(values: &[(&str, f64)], step: usize) -> Result<()> {
    if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        let all: Vec<String> = values.iter().map(|(n, v)| format!("{n}={v}")).collect();
        return Err(Error::NonFinite(format!(
            "{name} is {v} at step {step} ({})",
            all.join(", ")
        )));
    }
    Ok(())
}

fn add_scaled(into: &mut [Vec<f64>], from: &[Vec<f64>], w: f64) {
    for (a, b) in into.iter_mut().zip(from) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += w * y;
        }
    }
}

fn apply_vsa_update(space: &mut VsaSpace, moments: &mut [AdamMoments], grads: &[Vec<f64>], lr: f64) -> Result<()> {
    for ((v, m), g) in space.vectors_mut()?.iter_mut().zip(moments).zip(grads) {
        optimizer_update(v.as_mut_slice(), g, m, lr)?;
    }
    Ok(())
}

/// One joint step. `regression_on` says whether the correction loss is live
/// in the current epoch.
///
/// The matching and regularizer losses update only the symbol vectors; the
/// correction and task losses update only the network.
pub fn train_step(
    state: &mut TrainState,
    images: ArrayView2<f64>,
    labels: &[usize],
    problem: &AlignmentProblem,
    cfg: &TrainConfig,
    regression_on: bool,
) -> Result<StepMetrics> {
    let toggles = cfg.toggles;
    let w = cfg.weights;
    let arch = state.model.architecture();
    let (outputs, trace) = state.model.forward(images)?;

    let n_sym = state.vsa_nn.len();
    let d = state.vsa_nn.dimension();
    let mut vsa_grads = vec![vec![0.0; d]; n_sym];
    let mut m = StepMetrics::default();
    if toggles.k {
        let geo = TripletGeometry::new(&state.vsa_nn, &problem.vsa_g)?;
        let mut acc = LossKAccumulator::new(&geo);
        for a in 0..labels.len() {
            let nn: Vec<SymbolTriplet> = kgv_to_triplets(&outputs.kgv, a, cfg.threshold)?
                .into_iter()
                .map(|t| symbol_triplet(t, arch.n_entities))
                .collect();
            let assignment = match_triplets(&geo, &nn, &problem.g_triplets)?;
            acc.add(&geo, &nn, &problem.g_triplets, &assignment)?;
        }
        let lk = acc.finish(&geo);
        m.l_k = lk.value;
        m.matches = lk.matches;
        add_scaled(&mut vsa_grads, &lk.grads, w.k);
    }
    let r1 = loss_r1(&state.vsa_nn)?;
    let r2 = loss_r2(&state.vsa_nn);
    (m.l_r1, m.l_r1_mean, m.l_r2, m.l_r2_mean) = (r1.literal, r1.mean, r2.literal, r2.mean);
    if toggles.r1 {
        add_scaled(&mut vsa_grads, &r1.grads, w.r1);
    }
    if toggles.r2 {
        add_scaled(&mut vsa_grads, &r2.grads, w.r2);
    }

    let mut upstream = Upstream::default();
    if regression_on && toggles.r {
        let mask = build_conflict_targets(
            &problem.kg_g,
            &state.sigma,
            labels,
            &problem.class_entity,
            arch.n_relations,
            arch.n_entities,
        )?;
        let rl = regression_loss(&outputs.kgv, &mask)?;
        m.l_r = rl.value;
        m.active_cells = rl.active;
        upstream.kgv = Some(rl.grad.iter().map(|g| w.r * g).collect());
    }
    let tl = task_loss(&outputs, images, labels)?;
    m.l_t = tl.value;
    if toggles.t {
        upstream.reconstruction = Some(tl.d_reconstruction * w.t);
        upstream.class_logits = Some(tl.d_logits * w.t);
    }
    check_finite(
        &[
            ("L_K", m.l_k),
            ("L_R1", m.l_r1),
            ("L_R2", m.l_r2),
            ("L_R", m.l_r),
            ("L_T", m.l_t),
        ],
        state.step,
    )?;

    if toggles.network() {
        let grads = state.model.backward(&trace, &upstream)?;
        let blocks = grads.blocks();
        let lr = cfg.learning_rate_net;
        for ((p, g), mom) in state
            .model
            .parameters_mut()
            .into_iter()
            .zip(blocks)
            .zip(state.net_moments.iter_mut())
        {
            optimizer_update(p, g, mom, lr)?;
        }
    }
    if toggles.vsa() {
        apply_vsa_update(&mut state.vsa_nn, &mut state.vsa_moments, &vsa_grads, cfg.learning_rate_vsa)?;
    }
    state.step += 1;
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub reconstruction_bce: f64,
    pub consistency: f64,
    pub similarity: f64,
    pub bipolar_loss: f64,
    pub report: AlignmentReport,
}

const EVAL_CHUNK: usize = 1000;

pub fn evaluate(state: &TrainState, test: &MnistDataset, problem: &AlignmentProblem) -> Result<EvalMetrics> {
    if test.is_empty() {
        return Err(invalid("empty test set"));
    }
    let mut correct = 0usize;
    let mut bce = 0.0;
    for start in (0..test.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(test.len());
        let x = test.images.slice(ndarray::s![start..end, ..]);
        let labels = &test.labels[start..end];
        let (out, _) = state.model.forward(x)?;
        for (row, &y) in out.class_logits.outer_iter().zip(labels) {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            correct += (best == y) as usize;
        }
        let tl = task_loss(&out, x, labels)?;
        bce += tl.reconstruction_bce * (end - start) as f64;
    }
    let report = concept_match(&state.vsa_nn, &problem.vsa_g)?;
    Ok(EvalMetrics {
        accuracy: correct as f64 / test.len() as f64,
        reconstruction_bce: bce / test.len() as f64,
        consistency: report.consistency,
        similarity: report.similarity,
        bipolar_loss: report.bipolar_loss,
        report,
    })
}

/// Runs `cfg.epochs` epochs from `state`, calling `on_epoch` after each one.
pub fn train(
    state: &mut TrainState,
    train_set: &MnistDataset,
    test_set: &MnistDataset,
    problem: &AlignmentProblem,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState, &EvalMetrics) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("empty training set"));
    }
    let seeds = DerivedSeeds::from_master(cfg.master_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        state.refresh_sigma(problem)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.shuffle ^ epoch as u64);
        order.shuffle(&mut rng);
        let regression_on = epoch >= cfg.regression_start_epoch;
        let mut sums = [0.0; 5];
        let mut steps = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let x = train_set.images.select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let m = train_step(state, x.view(), &y, problem, cfg, regression_on)?;
            for (s, v) in sums.iter_mut().zip([m.l_k, m.l_r1, m.l_r2, m.l_r, m.l_t]) {
                *s += v;
            }
            steps += 1;
        }
        let eval = evaluate(state, test_set, problem)?;
        let n = steps as f64;
        state.history.push(EpochMetrics {
            epoch,
            l_k: sums[0] / n,
            l_r1: sums[1] / n,
            l_r2: sums[2] / n,
            l_r: sums[3] / n,
            l_t: sums[4] / n,
            consistency: eval.consistency,
            similarity: eval.similarity,
            bipolar_loss: eval.bipolar_loss,
            test_accuracy: eval.accuracy,
        });
        state.epoch = epoch;
        log::info!("{}", state.history.last().expect("just pushed").csv_row());
        on_epoch(state, &eval)?;
    }
    Ok(())
}

/// Settings for training symbol vectors alone against a fixed network graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsaTrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Steps between recomputations of the triplet matching.
    pub match_interval: usize,
    pub learning_rate: f64,
    pub dimension: usize,
    pub toggles: LossToggles,
    pub weights: LossWeights,
}

impl Default for VsaTrainConfig {
    fn default() -> Self {
        VsaTrainConfig {
            epochs: 10,
            steps_per_epoch: 20,
            match_interval: 10,
            learning_rate: 1e-2,
            dimension: DEFAULT_DIMENSION,
            toggles: LossToggles::default(),
            weights: LossWeights::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsaEpochMetrics {
    pub epoch: usize,
    #[serde(rename = "L_K")]
    pub l_k: f64,
    /// Weighted sum of the gradient-bearing terms.
    #[serde(rename = "L_VSA")]
    pub l_vsa: f64,
    pub consistency: f64,
    pub similarity: f64,
    pub bipolar_loss: f64,
}

/// Trains `vsa_nn` on the triplets of `kg_nn` read back from its one-hot tensor.
pub fn train_vsa_only(
    vsa_nn: &mut VsaSpace,
    vsa_g: &VsaSpace,
    kg_nn: &KnowledgeGraph,
    kg_g: &KnowledgeGraph,
    cfg: &VsaTrainConfig,
) -> Result<Vec<VsaEpochMetrics>> {
    if cfg.epochs == 0 || cfg.steps_per_epoch == 0 || cfg.match_interval == 0 {
        return Err(invalid("epochs, steps and match interval must be at least 1"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(invalid("learning rate must be positive"));
    }
    let kgv = triplets_to_kgv(kg_nn, 1)?;
    let nn: Vec<SymbolTriplet> = kgv_to_triplets(&kgv, 0, ASSERT_THRESHOLD)?
        .into_iter()
        .map(|t| symbol_triplet(t, kg_nn.n_entities()))
        .collect();
    let g: Vec<SymbolTriplet> = kg_g.triplets().map(|t| symbol_triplet(t, kg_g.n_entities())).collect();
    let d = vsa_nn.dimension();
    let mut moments: Vec<AdamMoments> = (0..vsa_nn.len()).map(|_| AdamMoments::new(d)).collect();
    let (t, w) = (cfg.toggles, cfg.weights);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut assignment = None;
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let (mut lk_sum, mut vsa_sum) = (0.0, 0.0);
        for _ in 0..cfg.steps_per_epoch {
            let mut grads = vec![vec![0.0; d]; vsa_nn.len()];
            let mut total = 0.0;
            if t.k {
                let geo = TripletGeometry::new(vsa_nn, vsa_g)?;
                if step % cfg.match_interval == 0 || assignment.is_none() {
                    assignment = Some(match_triplets(&geo, &nn, &g)?);
                }
                let mut acc = LossKAccumulator::new(&geo);
                acc.add(&geo, &nn, &g, assignment.as_ref().expect("set above"))?;
                let lk = acc.finish(&geo);
                lk_sum += lk.value;
                total += w.k * lk.value;
                add_scaled(&mut grads, &lk.grads, w.k);
            }
            if t.r1 {
                let r1 = loss_r1(vsa_nn)?;
                total += w.r1 * r1.mean;
                add_scaled(&mut grads, &r1.grads, w.r1);
            }
            if t.r2 {
                let r2 = loss_r2(vsa_nn);
                total += w.r2 * r2.mean;
                add_scaled(&mut grads, &r2.grads, w.r2);
            }
            check_finite(&[("L_VSA", total)], step)?;
            vsa_sum += total;
            apply_vsa_update(vsa_nn, &mut moments, &grads, cfg.learning_rate)?;
            step += 1;
        }
        let report = concept_match(vsa_nn, vsa_g)?;
        let n = cfg.steps_per_epoch as f64;
        history.push(VsaEpochMetrics {
            epoch,
            l_k: lk_sum / n,
            l_vsa: vsa_sum / n,
            consistency: report.consistency,
            similarity: report.similarity,
            bipolar_loss: report.bipolar_loss,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triplet;

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 10);
        assert_eq!(c.batch_size, 128);
        assert!(c.validate().is_ok());
        let bad = TrainConfig {
            learning_rate_vsa: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "weights": {"t": 0.5}}"#).unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.weights.t, 0.5);
        assert_eq!(parsed.weights.k, 1.0);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
    }

    #[test]
    fn checksum_sees_single_bits() {
        let a = [1.0, 2.0];
        let b = [1.0, f64::from_bits(2f64.to_bits() ^ 1)];
        assert_ne!(checksum([&a[..]]), checksum([&b[..]]));
        assert_eq!(checksum([&a[..]]), checksum([&a[..]]));
    }

    #[test]
    fn vsa_only_rejects_bad_settings() {
        let kg = KnowledgeGraph::new(vec!["a".into(), "b".into()], vec!["r".into()], [Triplet::new(0, 0, 1)]).unwrap();
        let nn = KnowledgeGraph::new(vec!["x".into(), "y".into()], vec!["q".into()], [Triplet::new(1, 0, 0)]).unwrap();
        let (g, mut n) = build_spaces(&kg, &nn, 16, DerivedSeeds::from_master(1)).unwrap();
        let cfg = VsaTrainConfig {
            match_interval: 0,
            ..VsaTrainConfig::default()
        };
        assert!(train_vsa_only(&mut n, &g, &nn, &kg, &cfg).is_err());
    }
}

//! Drivers for the MNIST run and the synthetic-graph sweeps.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::alignment::{concept_match, AlignmentReport};
use crate::error::{invalid, Result};
use crate::kg::{KgvTensor, KnowledgeGraph};
use crate::mnist::MnistDataset;
use crate::neural::{save_checkpoint, KgAutoencoder};
use crate::synth::{generate_synthetic_kg, SynthSpec, SyntheticPair};
use crate::training::{
    build_spaces, metrics_csv, train, train_vsa_only, AlignmentProblem, DerivedSeeds, EpochMetrics,
    TrainConfig, TrainState, VsaTrainConfig,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const KGV_MEANS_FILE: &str = "kgv_means.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const CHECKPOINT_STEM: &str = "checkpoint";

#[derive(Clone, Debug)]
pub struct Exp1Outcome {
    pub history: Vec<EpochMetrics>,
    pub report: AlignmentReport,
    pub checkpoint: PathBuf,
}

/// Mean KGV over the test images of each class, keyed by class label.
pub fn kgv_means(model: &KgAutoencoder, data: &MnistDataset, classes: usize) -> Result<IndexMap<String, Vec<Vec<Vec<f64>>>>> {
    let arch = model.architecture();
    let cells = arch.kgv_cells();
    let mut sums = vec![vec![0.0; cells]; classes];
    let mut counts = vec![0usize; classes];
    for start in (0..data.len()).step_by(1000) {
        let end = (start + 1000).min(data.len());
        let (out, _) = model.forward(data.images.slice(ndarray::s![start..end, ..]))?;
        for (a, &y) in data.labels[start..end].iter().enumerate() {
            if y >= classes {
                return Err(invalid(format!("label {y} outside {classes} classes")));
            }
            for (s, v) in sums[y].iter_mut().zip(out.kgv.sample(a)) {
                *s += v;
            }
            counts[y] += 1;
        }
    }
    let mut out = IndexMap::new();
    for (y, (sum, n)) in sums.into_iter().zip(counts).enumerate() {
        let mean: Vec<f64> = sum.iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect();
        let t = KgvTensor::from_values(1, arch.n_relations, arch.n_entities, mean)?;
        let nested = (0..arch.n_relations)
            .map(|r| {
                (0..arch.n_entities)
                    .map(|h| (0..arch.n_entities).map(|tl| t.get(0, r, h, tl)).collect())
                    .collect()
            })
            .collect();
        out.insert(y.to_string(), nested);
    }
    Ok(out)
}

/// Full joint training on MNIST. Metrics are rewritten after every epoch.
pub fn run_experiment1(
    cfg: &TrainConfig,
    kg_g: &KnowledgeGraph,
    train_set: &MnistDataset,
    test_set: &MnistDataset,
    out_dir: impl AsRef<Path>,
) -> Result<Exp1Outcome> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out)?;
    let train_set = cfg.train_limit.map_or_else(|| train_set.clone(), |n| train_set.head(n));
    let test_set = cfg.test_limit.map_or_else(|| test_set.clone(), |n| test_set.head(n));
    let classes = cfg.class_entities.len();
    if let Some(&y) = train_set.labels.iter().find(|&&y| y >= classes) {
        return Err(invalid(format!("label {y} has no class entity")));
    }

    let seeds = DerivedSeeds::from_master(cfg.master_seed);
    let kg_nn = KnowledgeGraph::anonymous("x", cfg.n_entities, cfg.n_relations);
    let (vsa_g, vsa_nn) = build_spaces(kg_g, &kg_nn, cfg.dimension, seeds)?;
    vsa_g.save(out.join("vsa_g.json"))?;
    vsa_nn.save(out.join("vsa_nn_initial.json"))?;
    let problem = AlignmentProblem::new(kg_g.clone(), vsa_g, kg_nn, &cfg.class_entities)?;
    let arch = cfg.architecture(train_set.images.ncols(), classes);
    let model = KgAutoencoder::new(arch, seeds.network)?;
    let mut state = TrainState::new(model, vsa_nn);

    let metrics_path = out.join(METRICS_FILE);
    train(&mut state, &train_set, &test_set, &problem, cfg, |s, _| {
        fs::write(&metrics_path, metrics_csv(&s.history))?;
        Ok(())
    })?;

    let report = concept_match(&state.vsa_nn, &problem.vsa_g)?;
    report.save(out.join(ALIGNMENT_FILE))?;
    state.vsa_nn.save(out.join("vsa_nn_final.json"))?;
    let checkpoint = save_checkpoint(&state.model, out, CHECKPOINT_STEM, cfg.master_seed, state.epoch)?;
    let means = kgv_means(&state.model, &test_set, classes)?;
    fs::write(out.join(KGV_MEANS_FILE), serde_json::to_string(&means)?)?;
    Ok(Exp1Outcome {
        history: state.history,
        report,
        checkpoint,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EntityCount,
    RelationProportion,
    TripletProportion,
    DistributionAlpha,
    NnConceptRatio,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::EntityCount,
        SweepAxis::RelationProportion,
        SweepAxis::TripletProportion,
        SweepAxis::DistributionAlpha,
        SweepAxis::NnConceptRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EntityCount => "entity_count",
            SweepAxis::RelationProportion => "relation_proportion",
            SweepAxis::TripletProportion => "triplet_proportion",
            SweepAxis::DistributionAlpha => "distribution_alpha",
            SweepAxis::NnConceptRatio => "nn_concept_ratio",
        }
    }

    /// Default settings with this axis set to `value`.
    pub fn point(self, value: f64) -> Result<SynthSpec> {
        let mut spec = SynthSpec::default();
        match self {
            SweepAxis::EntityCount => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(invalid(format!("entity count {value} is not a whole number")));
                }
                spec.entities = value as usize;
            }
            SweepAxis::RelationProportion => spec.relation_proportion = value,
            SweepAxis::TripletProportion => spec.triplet_proportion = value,
            SweepAxis::DistributionAlpha => spec.alpha = Some(value),
            SweepAxis::NnConceptRatio => spec.nn_concept_ratio = value,
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown axis `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: usize,
    /// Seeds used are `base_seed .. base_seed + seeds`.
    pub base_seed: u64,
    pub training: VsaTrainConfig,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>, seeds: usize) -> Self {
        SweepSpec {
            axis,
            values,
            seeds,
            base_seed: 0,
            training: VsaTrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds == 0 {
            return Err(invalid("a sweep needs at least one value and one seed"));
        }
        for &v in &self.values {
            self.axis.point(v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub consistency: f64,
    pub similarity: f64,
    pub bipolar_loss: f64,
    pub consistency_entities: f64,
    pub consistency_relations: f64,
    /// Fraction of human concepts whose true counterpart was matched to them.
    pub recovery: f64,
}

pub const SWEEP_HEADER: &str =
    "axis,value,seed,consistency,similarity,bipolar_loss,consistency_entities,consistency_relations,recovery";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.axis,
            self.value,
            self.seed,
            self.consistency,
            self.similarity,
            self.bipolar_loss,
            self.consistency_entities,
            self.consistency_relations,
            self.recovery
        )
    }
}

/// Share of human concepts mapped back from their true network counterpart.
pub fn ground_truth_recovery(report: &AlignmentReport, pair: &SyntheticPair) -> f64 {
    let map = report.concept_map(&pair.kg_nn, &pair.kg_g);
    let ent = pair
        .entity_map
        .iter()
        .enumerate()
        .filter(|(g, nn)| map.entities.get(nn) == Some(g))
        .count();
    let rel = pair
        .relation_map
        .iter()
        .enumerate()
        .filter(|(g, nn)| map.relations.get(nn) == Some(g))
        .count();
    (ent + rel) as f64 / (pair.entity_map.len() + pair.relation_map.len()) as f64
}

/// One synthetic pair, symbol-only training, final alignment.
pub fn run_sweep_point(axis: SweepAxis, value: f64, seed: u64, training: &VsaTrainConfig) -> Result<SweepRow> {
    let spec = axis.point(value)?;
    let pair = generate_synthetic_kg(&spec, seed)?;
    let (vsa_g, mut vsa_nn) = build_spaces(&pair.kg_g, &pair.kg_nn, training.dimension, DerivedSeeds::from_master(seed))?;
    train_vsa_only(&mut vsa_nn, &vsa_g, &pair.kg_nn, &pair.kg_g, training)?;
    let report = concept_match(&vsa_nn, &vsa_g)?;
    Ok(SweepRow {
        axis,
        value,
        seed,
        consistency: report.consistency,
        similarity: report.similarity,
        bipolar_loss: report.bipolar_loss,
        consistency_entities: report.consistency_entities,
        consistency_relations: report.consistency_relations,
        recovery: ground_truth_recovery(&report, &pair),
    })
}

/// Runs every value and seed, rewriting `sweep.csv` after each row.
pub fn run_experiment2(sweep: &SweepSpec, out_dir: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out)?;
    let path = out.join(SWEEP_FILE);
    let mut text = format!("{SWEEP_HEADER}\n");
    let mut rows = Vec::with_capacity(sweep.values.len() * sweep.seeds);
    for &value in &sweep.values {
        for s in 0..sweep.seeds as u64 {
            let row = run_sweep_point(sweep.axis, value, sweep.base_seed + s, &sweep.training)?;
            log::info!("{}", row.csv_row());
            text.push_str(&row.csv_row());
            text.push('\n');
            fs::write(&path, &text)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean consistency per value, in sweep order.
pub fn mean_consistency(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(v, _, _)| *v == r.value) {
            Some(e) => {
                e.1 += r.consistency;
                e.2 += 1;
            }
            None => out.push((r.value, r.consistency, 1)),
        }
    }
    out.into_iter().map(|(v, s, n)| (v, s / n as f64)).collect()
}

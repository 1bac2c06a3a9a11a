use kgalign::alignment::{loss_k, match_triplets, symbol_triplet, SymbolTriplet, TripletGeometry};
use kgalign::kg::{KnowledgeGraph, Triplet};
use kgalign::mnist::MnistDataset;
use kgalign::neural::KgAutoencoder;
use kgalign::training::{
    build_spaces, evaluate, train_step, train_vsa_only, AlignmentProblem, DerivedSeeds, LossToggles, TrainConfig,
    TrainState, VsaTrainConfig,
};
use kgalign::vsa::VsaSpace;
use kgalign::Error;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

/// Four entities in a chain and a copy under the names w..z in reverse order.
fn toy_pair() -> (KnowledgeGraph, KnowledgeGraph) {
    let g = KnowledgeGraph::new(
        s(&["a", "b", "c", "d"]),
        s(&["r"]),
        [Triplet::new(0, 0, 1), Triplet::new(1, 0, 2), Triplet::new(2, 0, 3)],
    )
    .unwrap();
    // a->z, b->y, c->x, d->w
    let nn = KnowledgeGraph::new(
        s(&["w", "x", "y", "z"]),
        s(&["q"]),
        [Triplet::new(3, 0, 2), Triplet::new(2, 0, 1), Triplet::new(1, 0, 0)],
    )
    .unwrap();
    (g, nn)
}

fn triplets(kg: &KnowledgeGraph) -> Vec<SymbolTriplet> {
    kg.triplets().map(|t| symbol_triplet(t, kg.n_entities())).collect()
}

fn current_loss_k(nn: &VsaSpace, g: &VsaSpace, kg_nn: &KnowledgeGraph, kg_g: &KnowledgeGraph) -> f64 {
    let (a, b) = (triplets(kg_nn), triplets(kg_g));
    let geo = TripletGeometry::new(nn, g).unwrap();
    let asg = match_triplets(&geo, &a, &b).unwrap();
    loss_k(nn, g, &a, &b, &asg).unwrap().value
}

#[test]
fn toy_problem_loss_k_drops_ninety_percent() {
    let (kg_g, kg_nn) = toy_pair();
    for seed in 0..5 {
        let (g, mut nn) = build_spaces(&kg_g, &kg_nn, 64, DerivedSeeds::from_master(seed)).unwrap();
        let before = current_loss_k(&nn, &g, &kg_nn, &kg_g);
        let cfg = VsaTrainConfig {
            epochs: 10,
            steps_per_epoch: 20,
            dimension: 64,
            ..VsaTrainConfig::default()
        };
        train_vsa_only(&mut nn, &g, &kg_nn, &kg_g, &cfg).unwrap();
        let after = current_loss_k(&nn, &g, &kg_nn, &kg_g);
        assert!(after <= 0.1 * before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn toy_problem_epoch_loss_mostly_non_increasing() {
    let (kg_g, kg_nn) = toy_pair();
    let mut monotone = 0;
    for seed in 0..10 {
        let (g, mut nn) = build_spaces(&kg_g, &kg_nn, 64, DerivedSeeds::from_master(100 + seed)).unwrap();
        let cfg = VsaTrainConfig {
            dimension: 64,
            ..VsaTrainConfig::default()
        };
        let h = train_vsa_only(&mut nn, &g, &kg_nn, &kg_g, &cfg).unwrap();
        if h.windows(2).all(|w| w[1].l_vsa <= w[0].l_vsa) {
            monotone += 1;
        }
    }
    assert!(monotone >= 9, "{monotone} of 10 seeds");
}

#[test]
fn frozen_space_untouched_by_symbol_training() {
    let (kg_g, kg_nn) = toy_pair();
    let (g, mut nn) = build_spaces(&kg_g, &kg_nn, 32, DerivedSeeds::from_master(3)).unwrap();
    let copy = g.clone();
    let cfg = VsaTrainConfig {
        epochs: 2,
        steps_per_epoch: 5,
        dimension: 32,
        ..VsaTrainConfig::default()
    };
    train_vsa_only(&mut nn, &g, &kg_nn, &kg_g, &cfg).unwrap();
    assert_eq!(g, copy);
    assert!(matches!(g.clone().vectors_mut(), Err(Error::FrozenSpace(_))));
}

pub struct Fixture {
    pub state: TrainState,
    pub problem: AlignmentProblem,
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
}

/// A 3-class problem on 20-pixel random images.
fn fixture(seed: u64) -> Fixture {
    let kg_g = KnowledgeGraph::new(
        s(&["c0", "c1", "c2", "round", "sharp"]),
        s(&["has"]),
        [Triplet::new(0, 0, 3), Triplet::new(1, 0, 4), Triplet::new(2, 0, 3), Triplet::new(2, 0, 4)],
    )
    .unwrap();
    let cfg = small_config();
    let kg_nn = KnowledgeGraph::anonymous("x", cfg.n_entities, cfg.n_relations);
    let seeds = DerivedSeeds::from_master(seed);
    let (g, nn) = build_spaces(&kg_g, &kg_nn, cfg.dimension, seeds).unwrap();
    let problem = AlignmentProblem::new(kg_g, g, kg_nn, &cfg.class_entities).unwrap();
    let model = KgAutoencoder::new(cfg.architecture(20, 3), seeds.network).unwrap();
    let mut state = TrainState::new(model, nn);
    state.refresh_sigma(&problem).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = Array2::from_shape_simple_fn((8, 20), || rng.random_range(0.0..1.0));
    let labels = (0..8).map(|i| i % 3).collect();
    Fixture {
        state,
        problem,
        images,
        labels,
    }
}

fn small_config() -> TrainConfig {
    TrainConfig {
        dimension: 64,
        n_entities: 6,
        n_relations: 1,
        hidden: 8,
        batch_size: 8,
        class_entities: s(&["c0", "c1", "c2"]),
        ..TrainConfig::default()
    }
}

fn run_steps(f: &mut Fixture, cfg: &TrainConfig, n: usize) {
    for _ in 0..n {
        train_step(&mut f.state, f.images.view(), &f.labels, &f.problem, cfg, true).unwrap();
    }
}

#[test]
fn all_losses_off_changes_nothing() {
    let mut f = fixture(1);
    let cfg = TrainConfig {
        toggles: LossToggles::none(),
        ..small_config()
    };
    let (net, vsa) = (f.state.network_checksum(), f.state.vsa_checksum());
    run_steps(&mut f, &cfg, 5);
    assert_eq!(f.state.network_checksum(), net);
    assert_eq!(f.state.vsa_checksum(), vsa);
}

#[test]
fn task_loss_alone_leaves_symbols() {
    let mut f = fixture(2);
    let cfg = TrainConfig {
        toggles: LossToggles {
            t: true,
            ..LossToggles::none()
        },
        ..small_config()
    };
    let (net, vsa) = (f.state.network_checksum(), f.state.vsa_checksum());
    run_steps(&mut f, &cfg, 10);
    assert_eq!(f.state.vsa_checksum(), vsa);
    assert_ne!(f.state.network_checksum(), net);
}

#[test]
fn symbol_losses_alone_leave_network() {
    let mut f = fixture(3);
    let cfg = TrainConfig {
        toggles: LossToggles {
            k: true,
            r1: true,
            r2: true,
            ..LossToggles::none()
        },
        ..small_config()
    };
    let (net, vsa) = (f.state.network_checksum(), f.state.vsa_checksum());
    run_steps(&mut f, &cfg, 10);
    assert_eq!(f.state.network_checksum(), net);
    assert_ne!(f.state.vsa_checksum(), vsa);
}

#[test]
fn joint_steps_are_deterministic_and_finite() {
    let cfg = small_config();
    let run = |seed| {
        let mut f = fixture(seed);
        let mut out = Vec::new();
        for _ in 0..6 {
            let m = train_step(&mut f.state, f.images.view(), &f.labels, &f.problem, &cfg, true).unwrap();
            for v in [m.l_k, m.l_r1, m.l_r2, m.l_r, m.l_t] {
                assert!(v.is_finite());
            }
            out.push(m);
        }
        (out, f.state.network_checksum(), f.state.vsa_checksum())
    };
    assert_eq!(run(4), run(4));
}

#[test]
fn evaluate_rejects_empty_test_set() {
    let f = fixture(5);
    let empty = MnistDataset {
        images: Array2::zeros((0, 20)),
        labels: vec![],
        rows: 4,
        cols: 5,
    };
    assert!(evaluate(&f.state, &empty, &f.problem).is_err());
    let some = MnistDataset {
        images: f.images.clone(),
        labels: f.labels.clone(),
        rows: 4,
        cols: 5,
    };
    let m = evaluate(&f.state, &some, &f.problem).unwrap();
    assert!((0.0..=1.0).contains(&m.accuracy));
}

#[test]
fn non_finite_input_aborts_step() {
    let mut f = fixture(6);
    f.images[(0, 0)] = f64::NAN;
    let cfg = small_config();
    let err = train_step(&mut f.state, f.images.view(), &f.labels, &f.problem, &cfg, true);
    assert!(err.is_err());
}

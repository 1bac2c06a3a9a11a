//! Central finite differences for checking analytic gradients, and the
//! suites that compare every hand-derived gradient against them.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alignment::{loss_k, loss_r1, loss_r2, match_triplets, SymbolTriplet, TripletGeometry};
use crate::error::Result;
use crate::kg::{KgvTensor, TargetMask};
use crate::neural::{regression_loss, task_loss, Architecture, KgAutoencoder, ModelOutputs, Upstream};
use crate::vsa::{Keywords, VsaSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradError {
    pub analytic: f64,
    pub numeric: f64,
    pub abs_error: f64,
    /// `abs_error / |numeric|`, or `abs_error` when the numeric value is below [`REL_FLOOR`].
    pub rel_error: f64,
}

/// Below this magnitude relative error is meaningless; absolute error is reported instead.
pub const REL_FLOOR: f64 = 1e-6;

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

pub fn compare(analytic: f64, numeric: f64) -> GradError {
    let abs_error = (analytic - numeric).abs();
    let rel_error = if numeric.abs() > REL_FLOOR {
        abs_error / numeric.abs()
    } else {
        abs_error
    };
    GradError {
        analytic,
        numeric,
        abs_error,
        rel_error,
    }
}

/// Outcome of one finite-difference suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub seeds: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= self.tolerance
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {} seeds, {} components, max rel error {:.3e} (tolerance {:.0e}) {}",
            self.name,
            self.seeds,
            self.checked,
            self.max_rel_error,
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

/// Step and tolerance for the single-loss suites.
pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Step and tolerance for the whole-network composite.
pub const NETWORK_EPS: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

struct Tally {
    checked: usize,
    max: f64,
}

impl Tally {
    fn new() -> Self {
        Tally { checked: 0, max: 0.0 }
    }

    fn add(&mut self, e: GradError) {
        self.checked += 1;
        // NaN must not hide behind max().
        self.max = if e.rel_error.is_nan() { f64::INFINITY } else { self.max.max(e.rel_error) };
    }

    fn report(self, name: &'static str, seeds: usize, tolerance: f64) -> SuiteReport {
        SuiteReport {
            name,
            seeds,
            checked: self.checked,
            max_rel_error: self.max,
            tolerance,
        }
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn small_spaces(seed: u64, d: usize, ne: usize, nr: usize) -> Result<(VsaSpace, VsaSpace)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kw = Keywords::random(d, &mut rng)?;
    let g = VsaSpace::random_frozen("g", kw.clone(), &names("g", ne), &names("q", nr), &mut rng)?;
    let nn = VsaSpace::random_trainable("nn", kw, &names("n", ne + 1), &names("m", nr), &mut rng)?;
    Ok((nn, g))
}

fn perturbed(space: &VsaSpace, s: usize, k: usize, x: f64) -> Result<VsaSpace> {
    let mut out = space.clone();
    out.vectors_mut()?[s].as_mut_slice()[k] = x;
    Ok(out)
}

pub fn check_loss_k(seeds: usize) -> Result<SuiteReport> {
    let mut t = Tally::new();
    for seed in 0..seeds as u64 {
        let (nn, g) = small_spaces(seed, 16, 4, 2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let nn_t: Vec<SymbolTriplet> = (0..6)
            .map(|_| [rng.random_range(0..5), 5 + rng.random_range(0..2), rng.random_range(0..5)])
            .collect();
        let g_t: Vec<SymbolTriplet> = vec![[0, 4, 1], [1, 5, 2], [3, 4, 3], [2, 5, 0]];
        let geo = TripletGeometry::new(&nn, &g)?;
        let a = match_triplets(&geo, &nn_t, &g_t)?;
        let lk = loss_k(&nn, &g, &nn_t, &g_t, &a)?;
        for s in 0..nn.len() {
            for k in 0..nn.dimension() {
                let x = nn.vector(s).as_slice()[k];
                let num = central_difference(
                    |v| match perturbed(&nn, s, k, v).and_then(|p| loss_k(&p, &g, &nn_t, &g_t, &a)) {
                        Ok(l) => l.value,
                        Err(_) => f64::NAN,
                    },
                    x,
                    EPS,
                );
                t.add(compare(lk.grads[s][k], num));
            }
        }
    }
    Ok(t.report("L_K", seeds, TOLERANCE))
}

pub fn check_regularizers(seeds: usize) -> Result<[SuiteReport; 2]> {
    let (mut t1, mut t2) = (Tally::new(), Tally::new());
    for seed in 0..seeds as u64 {
        let (nn, _) = small_spaces(100 + seed, 12, 3, 1)?;
        let r1 = loss_r1(&nn)?;
        let r2 = loss_r2(&nn);
        for s in 0..nn.len() {
            for k in 0..nn.dimension() {
                let x = nn.vector(s).as_slice()[k];
                let n1 = central_difference(
                    |v| perturbed(&nn, s, k, v).and_then(|p| loss_r1(&p)).map_or(f64::NAN, |r| r.mean),
                    x,
                    EPS,
                );
                t1.add(compare(r1.grads[s][k], n1));
                // |x| has a kink at 0.
                if x.abs() > 10.0 * EPS {
                    let n2 = central_difference(
                        |v| perturbed(&nn, s, k, v).map_or(f64::NAN, |p| loss_r2(&p).mean),
                        x,
                        EPS,
                    );
                    t2.add(compare(r2.grads[s][k], n2));
                }
            }
        }
    }
    Ok([t1.report("L_R1", seeds, TOLERANCE), t2.report("L_R2", seeds, TOLERANCE)])
}

pub fn check_regression(seeds: usize) -> Result<SuiteReport> {
    let mut t = Tally::new();
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (batch, nr, ne) = (2, 2, 3);
        let values: Vec<f64> = (0..batch * nr * ne * ne).map(|_| rng.random_range(0.02..0.98)).collect();
        let mut mask = TargetMask::inactive(batch, nr, ne);
        for a in 0..batch {
            for r in 0..nr {
                for h in 0..ne {
                    for tl in 0..ne {
                        if rng.random_bool(0.6) {
                            mask.set(a, r, h, tl, rng.random_bool(0.5));
                        }
                    }
                }
            }
        }
        let kgv = KgvTensor::from_values(batch, nr, ne, values.clone())?;
        let rl = regression_loss(&kgv, &mask)?;
        for i in 0..values.len() {
            let num = central_difference(
                |v| {
                    let mut vals = values.clone();
                    vals[i] = v;
                    KgvTensor::from_values(batch, nr, ne, vals)
                        .and_then(|k| regression_loss(&k, &mask))
                        .map_or(f64::NAN, |r| r.value)
                },
                values[i],
                EPS,
            );
            t.add(compare(rl.grad[i], num));
        }
    }
    Ok(t.report("L_R", seeds, TOLERANCE))
}

pub fn check_task(seeds: usize) -> Result<SuiteReport> {
    let mut t = Tally::new();
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (batch, pixels, classes) = (3, 5, 10);
        let mut out = ModelOutputs {
            kgv: KgvTensor::zeros(batch, 1, 1),
            reconstruction: Array2::from_shape_simple_fn((batch, pixels), || rng.random_range(0.05..0.95)),
            class_logits: Array2::from_shape_simple_fn((batch, classes), || rng.random_range(-3.0..3.0)),
        };
        let images = Array2::from_shape_simple_fn((batch, pixels), || rng.random_range(0.0..1.0));
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        let tl = task_loss(&out, images.view(), &labels)?;
        for idx in ndarray::indices((batch, pixels)) {
            let base = out.reconstruction[idx];
            let num = central_difference(
                |v| {
                    out.reconstruction[idx] = v;
                    task_loss(&out, images.view(), &labels).map_or(f64::NAN, |l| l.value)
                },
                base,
                EPS,
            );
            out.reconstruction[idx] = base;
            t.add(compare(tl.d_reconstruction[idx], num));
        }
        for idx in ndarray::indices((batch, classes)) {
            let base = out.class_logits[idx];
            let num = central_difference(
                |v| {
                    out.class_logits[idx] = v;
                    task_loss(&out, images.view(), &labels).map_or(f64::NAN, |l| l.value)
                },
                base,
                EPS,
            );
            out.class_logits[idx] = base;
            t.add(compare(tl.d_logits[idx], num));
        }
    }
    Ok(t.report("L_T", seeds, TOLERANCE))
}

/// Parameters sampled per seed in the whole-network check.
pub const NETWORK_SAMPLES: usize = 150;

fn composite(model: &KgAutoencoder, images: ArrayView2<f64>, labels: &[usize], mask: &TargetMask) -> Result<f64> {
    let (out, _) = model.forward(images)?;
    Ok(task_loss(&out, images, labels)?.value + regression_loss(&out.kgv, mask)?.value)
}

/// `L_T + L_R` through a 784-16-(1x6x6) network, on sampled parameters of every block.
pub fn check_network(seeds: usize) -> Result<SuiteReport> {
    let mut t = Tally::new();
    let arch = Architecture {
        input: 784,
        hidden: 16,
        n_relations: 1,
        n_entities: 6,
        classes: 10,
    };
    for seed in 0..seeds as u64 {
        let mut model = KgAutoencoder::new(arch, 400 + seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let batch = 3;
        let images = Array2::from_shape_simple_fn((batch, arch.input), || rng.random_range(0.0..1.0));
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..arch.classes)).collect();
        let mut mask = TargetMask::inactive(batch, 1, arch.n_entities);
        for a in 0..batch {
            for h in 0..arch.n_entities {
                for tl in 0..arch.n_entities {
                    if rng.random_bool(0.3) {
                        mask.set(a, 0, h, tl, rng.random_bool(0.5));
                    }
                }
            }
        }
        let (out, trace) = model.forward(images.view())?;
        let tl = task_loss(&out, images.view(), &labels)?;
        let rl = regression_loss(&out.kgv, &mask)?;
        let upstream = Upstream {
            kgv: Some(rl.grad),
            reconstruction: Some(tl.d_reconstruction),
            class_logits: Some(tl.d_logits),
        };
        let grads = model.backward(&trace, &upstream)?;
        let analytic: Vec<Vec<f64>> = grads.blocks().into_iter().map(|b| b.to_vec()).collect();
        let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
        for n in 0..NETWORK_SAMPLES {
            // Cycle through blocks so every one is covered.
            let b = n % sizes.len();
            let i = rng.random_range(0..sizes[b]);
            let base = model.parameters()[b][i];
            let mut eval = |v: f64| {
                model.parameters_mut()[b][i] = v;
                composite(&model, images.view(), &labels, &mask).unwrap_or(f64::NAN)
            };
            let num = central_difference(&mut eval, base, NETWORK_EPS);
            model.parameters_mut()[b][i] = base;
            t.add(compare(analytic[b][i], num));
        }
    }
    Ok(t.report("network", seeds, NETWORK_TOLERANCE))
}

/// Seeds per suite used by the command-line check.
pub const DEFAULT_SEEDS: usize = 20;

pub fn run_all(seeds: usize) -> Result<Vec<SuiteReport>> {
    let [r1, r2] = check_regularizers(seeds)?;
    Ok(vec![
        check_loss_k(seeds)?,
        r1,
        r2,
        check_regression(seeds)?,
        check_task(seeds)?,
        check_network(seeds)?,
    ])
}

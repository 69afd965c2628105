//! Acceptance gate: ten criteria covering the numerical core, the training
//! pipeline, and the retrieval stack. Each criterion prints one PASS/FAIL
//! line; the test fails if any criterion fails.
//!
//! The desk-scale comparison runs (criteria 6-9) read MNIST IDX files from
//! `TBH_MNIST_DIR` (default: `<workspace>/data/mnist`).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

use tbh::codec::{self, PackedCodeSet};
use tbh::data::{self, Split};
use tbh::diffcore::{gradient_check, HasParameters, ParameterTensor};
use tbh::model::{self, ModelConfig, TbhModel, Variant};
use tbh::retrieval::{self, GroundTruth};
use tbh::training::{self, TrainConfig, Trainer};

type Mat = Array2<f64>;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, name: &'static str, passed: bool, detail: String) {
    println!(
        "criterion {:>2} [{}] {name}: {detail}",
        results.len() + 1,
        if passed { "PASS" } else { "FAIL" },
    );
    results.push(Outcome {
        name,
        passed,
        detail,
    });
}

// ---------------------------------------------------------------------------
// 1. Adjacency oracle
// ---------------------------------------------------------------------------

fn criterion_adjacency(results: &mut Vec<Outcome>) {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut checked = 0usize;
    let mut ok = true;
    for case in 0..1000 {
        let m = [4usize, 16, 64][case % 3];
        let n = rng.gen_range(1..=64);
        let b = Array2::from_shape_fn((n, m), |_| if rng.gen_bool(0.5) { 1.0f32 } else { 0.0 });
        let a = model::build_adjacency(&b);
        for i in 0..n {
            for j in 0..n {
                let h = (0..m).filter(|&k| b[[i, k]] != b[[j, k]]).count();
                let expect = 1.0f32 - h as f32 / m as f32;
                if a[[i, j]].to_bits() != expect.to_bits() {
                    ok = false;
                }
                checked += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        results,
        "adjacency oracle",
        ok && secs < 10.0,
        format!("{checked} entries bit-exact over 1000 batches in {secs:.2}s (budget 10s)"),
    );
}

// ---------------------------------------------------------------------------
// 2. Finite-difference gradient suite
// ---------------------------------------------------------------------------

/// Standalone GCN harness: parameters are the vertex features and the mixing
/// weight; the adjacency and readout coefficients stay fixed.
struct GcnHarness {
    z: ParameterTensor<f64>,
    w: ParameterTensor<f64>,
    adjacency: Mat,
    readout: Mat,
}

impl HasParameters<f64> for GcnHarness {
    fn parameters_mut(&mut self) -> Vec<&mut ParameterTensor<f64>> {
        vec![&mut self.z, &mut self.w]
    }
}

impl GcnHarness {
    fn loss(&self) -> f64 {
        let (zp, _) = model::gcn_forward(&self.z.value, &self.adjacency, &self.w.value).unwrap();
        (&zp * &self.readout).sum()
    }

    fn backward(&mut self) {
        let (_, cache) = model::gcn_forward(&self.z.value, &self.adjacency, &self.w.value).unwrap();
        let mut w_grad = Mat::zeros(self.w.value.raw_dim());
        let (dz, _) = model::gcn_backward(&self.readout, &cache, &self.w.value, Some(&mut w_grad));
        self.z.grad = dz;
        self.w.grad = w_grad;
    }
}

fn small_config(variant: Variant) -> ModelConfig {
    let mut mc = ModelConfig::new(6, 8);
    mc.latent_dim = 5;
    mc.shared_hidden = 7;
    mc.decoder_hidden = 9;
    mc.discriminator_hidden = 4;
    mc.variant = variant;
    mc
}

/// AE-loss harness with the binary code frozen: eps is pinned away from
/// every probability so perturbations cannot flip a bit.
struct AeHarness {
    model: TbhModel<f64>,
    x: Mat,
    eps: Mat,
    lambda: f64,
}

impl HasParameters<f64> for AeHarness {
    fn parameters_mut(&mut self) -> Vec<&mut ParameterTensor<f64>> {
        // theta scope only: L_AE traverses the discriminators input-only,
        // so perturbing phi has no analytic-gradient counterpart.
        self.model.theta_parameters_mut()
    }
}

impl AeHarness {
    fn new(variant: Variant, lambda: f64, seed: u64) -> AeHarness {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let model: TbhModel<f64> = TbhModel::new(small_config(variant), &mut rng).unwrap();
        let x = Array2::from_shape_fn((8, 6), |_| rng.gen_range(-1.0..1.0));
        let probs = model.encode_probs(&x).unwrap();
        let eps = probs.mapv(|p| if p > 0.5 { p - 0.1 } else { p + 0.1 });
        AeHarness {
            model,
            x,
            eps,
            lambda,
        }
    }

    fn loss(&mut self) -> f64 {
        let (latents, _) = self.model.forward_variant(&self.x, &self.eps).unwrap();
        let (l, _) = training::loss_ae(&mut self.model, &self.x, &latents, self.lambda).unwrap();
        l.total
    }

    fn backward(&mut self) {
        let (latents, vcache) = self.model.forward_variant(&self.x, &self.eps).unwrap();
        let (_, reg) = training::loss_ae(&mut self.model, &self.x, &latents, self.lambda).unwrap();
        training::backward_ae(
            &mut self.model,
            &self.x,
            &latents,
            &vcache,
            &reg,
            self.lambda,
            true,
        )
        .unwrap();
    }
}

/// Discriminating-loss harness over fixed samples and priors.
struct DHarness {
    model: TbhModel<f64>,
    binary: Mat,
    zp: Mat,
    yb: Mat,
    yc: Mat,
    lambda: f64,
}

impl HasParameters<f64> for DHarness {
    fn parameters_mut(&mut self) -> Vec<&mut ParameterTensor<f64>> {
        self.model.phi_parameters_mut()
    }
}

impl DHarness {
    fn new(seed: u64) -> DHarness {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let model: TbhModel<f64> = TbhModel::new(small_config(Variant::Full), &mut rng).unwrap();
        let binary =
            Array2::from_shape_fn((8, 8), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
        let zp = Array2::from_shape_fn((8, 5), |_| rng.gen_range(0.05..0.95));
        let (yb, yc) = model::sample_priors(8, 8, 5, &mut rng);
        DHarness {
            model,
            binary,
            zp,
            yb,
            yc,
            lambda: 1.0,
        }
    }

    fn loss(&mut self) -> f64 {
        training::loss_d(
            &mut self.model,
            &self.binary,
            Some(&self.zp),
            &self.yb,
            Some(&self.yc),
            self.lambda,
            false,
        )
        .unwrap()
    }

    fn backward(&mut self) {
        training::loss_d(
            &mut self.model,
            &self.binary,
            Some(&self.zp),
            &self.yb,
            Some(&self.yc),
            self.lambda,
            true,
        )
        .unwrap();
    }
}

fn criterion_gradients(results: &mut Vec<Outcome>) {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();

    // GCN w.r.t. vertex features and mixing weight.
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let n = 6;
    let l = 4;
    let b = Array2::from_shape_fn((n, 8), |_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    let mut harness = GcnHarness {
        z: ParameterTensor::new("z", Array2::from_shape_fn((n, l), |_| rng.gen_range(-1.0..1.0))),
        w: ParameterTensor::new("w", Array2::from_shape_fn((l, l), |_| rng.gen_range(-0.7..0.7))),
        adjacency: model::build_adjacency(&b),
        readout: Array2::from_shape_fn((n, l), |_| rng.gen_range(-1.0..1.0)),
    };
    harness.backward();
    let rep = gradient_check(&mut harness, |h| h.loss(), 1e-5, 10_000, 1);
    worst = worst.max(rep.max_rel_error);
    notes.push(format!("gcn {:.2e}", rep.max_rel_error));

    // AE loss with frozen codes: covers decoder, GCN pathway, the
    // continuous encoder head, and the z' regularizer, per variant family.
    for (variant, lambda) in [
        (Variant::Full, 1.0),
        (Variant::SingleBottleneck, 1.0),
        (Variant::ExplicitReg, 0.7),
        (Variant::AttentionEquilibrium, 1.0),
    ] {
        let mut h = AeHarness::new(variant, lambda, 20 + variant as u64);
        h.backward();
        let rep = gradient_check(&mut h, |h| h.loss(), 1e-5, 3000, 2);
        worst = worst.max(rep.max_rel_error);
        notes.push(format!("ae/{} {:.2e}", variant.as_str(), rep.max_rel_error));
    }

    // Discriminating loss: both discriminators.
    let mut h = DHarness::new(31);
    h.backward();
    let rep = gradient_check(&mut h, |h| h.loss(), 1e-5, 3000, 3);
    worst = worst.max(rep.max_rel_error);
    notes.push(format!("d {:.2e}", rep.max_rel_error));

    let secs = started.elapsed().as_secs_f64();
    report(
        results,
        "finite-difference gradients",
        worst < 1e-4 && secs < 60.0,
        format!(
            "max rel error {worst:.3e} (tol 1e-4) in {secs:.1}s (budget 60s); {}",
            notes.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Stochastic neuron statistics
// ---------------------------------------------------------------------------

fn criterion_stochastic(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let targets = [0.1f64, 0.5, 0.9];
    let draws = 100_000usize;
    let probs = Array2::from_shape_fn((draws, 3), |(_, j)| targets[j]);
    let eps = model::sample_eps(draws, 3, &mut rng);
    let b = model::sample_binary(&probs, &eps).unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for (j, &p) in targets.iter().enumerate() {
        let mean = b.column(j).sum() / draws as f64;
        details.push(format!("p={p}: mean {mean:.4}"));
        if (mean - p).abs() >= 0.01 {
            ok = false;
        }
    }
    report(
        results,
        "stochastic neuron",
        ok,
        format!("{} (tol 0.01, {draws} draws)", details.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 4. Loss anchors
// ---------------------------------------------------------------------------

fn criterion_loss_anchors(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut model: TbhModel<f64> = TbhModel::new(small_config(Variant::Full), &mut rng).unwrap();
    for p in model.phi_parameters_mut() {
        p.value.fill(0.0);
    }
    let x = Array2::from_shape_fn((4, 6), |_| rng.gen_range(-1.0..1.0));
    let eps = Array2::from_elem((4, 8), 0.5);
    let (latents, _) = model.forward_variant(&x, &eps).unwrap();

    let (yb, yc) = model::sample_priors(4, 8, 5, &mut rng);
    let ld = training::loss_d(
        &mut model,
        &latents.binary,
        latents.zp.as_ref(),
        &yb,
        Some(&yc),
        1.0,
        false,
    )
    .unwrap();
    let (ae, _) = training::loss_ae(&mut model, &x, &latents, 1.0).unwrap();

    let four_ln2 = 4.0 * std::f64::consts::LN_2;
    let two_ln2 = 2.0 * std::f64::consts::LN_2;
    let ld_err = (ld - four_ln2).abs();
    let reg_err = (ae.regularizer - two_ln2).abs();
    report(
        results,
        "loss anchors",
        ld_err < 1e-6 && reg_err < 1e-6,
        format!(
            "L_D err {ld_err:.2e} vs 4 ln2, AE regularizer err {reg_err:.2e} vs 2 ln2 (tol 1e-6)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Metric oracle
// ---------------------------------------------------------------------------

/// Independent quadratic-time reference metrics, written against unpacked
/// codes and explicit loops.
mod oracle {
    use super::*;

    pub fn distances(q: &Array2<f32>, db: &Array2<f32>, qi: usize) -> Vec<u32> {
        (0..db.nrows())
            .map(|j| {
                (0..db.ncols())
                    .filter(|&t| q[[qi, t]] != db[[j, t]])
                    .count() as u32
            })
            .collect()
    }

    pub fn order(dist: &[u32]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..dist.len()).collect();
        idx.sort_by(|&a, &b| dist[a].cmp(&dist[b]).then(a.cmp(&b)));
        idx
    }

    pub fn relevant(ql: &Array2<u8>, dbl: &Array2<u8>, qi: usize, j: usize) -> bool {
        (0..ql.ncols()).any(|c| ql[[qi, c]] == 1 && dbl[[j, c]] == 1)
    }

    pub struct Metrics {
        pub map: Option<f64>,
        pub p_at_k: f64,
        pub p_at_h2: f64,
        pub pr: Option<Vec<(f64, f64)>>,
    }

    pub fn evaluate(
        q: &Array2<f32>,
        db: &Array2<f32>,
        ql: &Array2<u8>,
        dbl: &Array2<u8>,
        k: usize,
    ) -> Metrics {
        let nq = q.nrows();
        let mut aps = Vec::new();
        let mut p_sum = 0.0;
        let mut h2_sum = 0.0;
        let mut pr_sums = vec![0.0f64; 100];
        let mut pr_count = 0usize;
        for qi in 0..nq {
            let dist = distances(q, db, qi);
            let ord = order(&dist);
            let total_rel = (0..db.nrows()).filter(|&j| relevant(ql, dbl, qi, j)).count();

            let take = ord.len().min(k);
            let hits_at_k = ord[..take]
                .iter()
                .filter(|&&j| relevant(ql, dbl, qi, j))
                .count();
            p_sum += hits_at_k as f64 / take as f64;

            let ball: Vec<usize> = (0..db.nrows()).filter(|&j| dist[j] <= 2).collect();
            if !ball.is_empty() {
                let hits = ball.iter().filter(|&&j| relevant(ql, dbl, qi, j)).count();
                h2_sum += hits as f64 / ball.len() as f64;
            }

            if total_rel == 0 {
                continue;
            }
            let mut seen = 0usize;
            let mut ap = 0.0;
            for (pos, &j) in ord.iter().take(k).enumerate() {
                if relevant(ql, dbl, qi, j) {
                    seen += 1;
                    ap += seen as f64 / (pos + 1) as f64;
                }
            }
            aps.push(ap / total_rel.min(k) as f64);

            // interpolated precision at 100 recall levels
            let mut rp: Vec<(f64, f64)> = Vec::new();
            let mut hits = 0usize;
            for (pos, &j) in ord.iter().enumerate() {
                if relevant(ql, dbl, qi, j) {
                    hits += 1;
                    rp.push((hits as f64 / total_rel as f64, hits as f64 / (pos + 1) as f64));
                }
            }
            pr_count += 1;
            for (slot, sum) in pr_sums.iter_mut().enumerate() {
                let level = (slot + 1) as f64 / 100.0;
                let best = rp
                    .iter()
                    .filter(|&&(r, _)| r >= level - 1e-12)
                    .map(|&(_, p)| p)
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.is_finite() {
                    *sum += best;
                }
            }
        }
        Metrics {
            map: if aps.is_empty() {
                None
            } else {
                Some(aps.iter().sum::<f64>() / aps.len() as f64)
            },
            p_at_k: p_sum / nq as f64,
            p_at_h2: h2_sum / nq as f64,
            pr: if pr_count == 0 {
                None
            } else {
                Some(
                    pr_sums
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| ((i + 1) as f64 / 100.0, s / pr_count as f64))
                        .collect(),
                )
            },
        }
    }
}

fn criterion_metric_oracle(results: &mut Vec<Outcome>) {
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(500);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..100 {
        let n_db = rng.gen_range(5..=200);
        let n_q = rng.gen_range(1..=20);
        let m = rng.gen_range(4..=24);
        let c = rng.gen_range(2..=4);
        let bits = |rng: &mut ChaCha20Rng, n: usize| {
            Array2::from_shape_fn((n, m), |_| if rng.gen_bool(0.5) { 1.0f32 } else { 0.0 })
        };
        let labels = |rng: &mut ChaCha20Rng, n: usize| {
            Array2::from_shape_fn((n, c), |_| u8::from(rng.gen_bool(0.4)))
        };
        let db_bits = bits(&mut rng, n_db);
        let q_bits = bits(&mut rng, n_q);
        let dbl = labels(&mut rng, n_db);
        let ql = labels(&mut rng, n_q);
        let k = rng.gen_range(1..=n_db);

        let db = codec::pack(&db_bits).unwrap();
        let q = codec::pack(&q_bits).unwrap();
        let gt = GroundTruth::new(ql.clone(), dbl.clone()).unwrap();
        let expect = oracle::evaluate(&q_bits, &db_bits, &ql, &dbl, k);

        let ranks = retrieval::rank_all(&q, &db).unwrap();
        match (retrieval::map_at_k(&ranks, &gt, k), expect.map) {
            (Ok(a), Some(b)) => worst = worst.max((a - b).abs()),
            (Err(_), None) => {}
            _ => ok = false,
        }
        let p = retrieval::precision_at_k(&ranks, &gt, k).unwrap();
        worst = worst.max((p - expect.p_at_k).abs());
        let h2 = retrieval::precision_at_radius(&q, &db, &gt, 2).unwrap();
        worst = worst.max((h2 - expect.p_at_h2).abs());
        match (retrieval::pr_curve(&ranks, &gt), expect.pr) {
            (Ok(curve), Some(exp)) => {
                for (&(r1, p1), &(r2, p2)) in curve.iter().zip(exp.iter()) {
                    worst = worst.max((r1 - r2).abs()).max((p1 - p2).abs());
                }
            }
            (Err(_), None) => {}
            _ => ok = false,
        }
    }
    let secs = started.elapsed().as_secs_f64();
    report(
        results,
        "metric oracle",
        ok && worst < 1e-12 && secs < 30.0,
        format!("max abs deviation {worst:.3e} (tol 1e-12) over 100 instances in {secs:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 6-9. Desk-scale MNIST comparison runs
// ---------------------------------------------------------------------------

const MNIST_BITS: usize = 16;
const MNIST_ITERS: u64 = 10_000;
const MNIST_SEEDS: [u64; 3] = [1, 2, 3];

fn mnist_dir() -> std::path::PathBuf {
    std::env::var_os("TBH_MNIST_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| {
            std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("../../data/mnist")
        })
}

fn mnist_model_config(variant: Variant) -> ModelConfig {
    let mut mc = ModelConfig::new(784, MNIST_BITS);
    mc.latent_dim = 64;
    mc.shared_hidden = 256;
    mc.decoder_hidden = 256;
    mc.discriminator_hidden = 32;
    mc.variant = variant;
    mc
}

fn mnist_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lambda: 0.01,
        batch_size: 200,
        learning_rate: 2e-3,
        max_iterations: MNIST_ITERS,
        seed,
        log_every: 500,
    }
}

struct RunResult {
    map: f64,
    final_recon: f64,
    query_codes: PackedCodeSet,
}

fn run_mnist(
    variant: Variant,
    seed: u64,
    train_x: &Array2<f32>,
    db_x: &Array2<f32>,
    q_x: &Array2<f32>,
    gt: &GroundTruth,
) -> RunResult {
    let mut trainer = Trainer::new(mnist_model_config(variant), mnist_train_config(seed)).unwrap();
    let mut final_recon = f64::NAN;
    trainer
        .train(train_x, |r| {
            final_recon = r.recon;
        })
        .unwrap();
    let db_codes = codec::encode_dataset(&trainer.model, db_x).unwrap();
    let query_codes = codec::encode_dataset(&trainer.model, q_x).unwrap();
    let ranks = retrieval::rank_all(&query_codes, &db_codes).unwrap();
    let map = retrieval::map_at_k(&ranks, gt, 1000).unwrap();
    RunResult {
        map,
        final_recon,
        query_codes,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

fn criteria_mnist(results: &mut Vec<Outcome>) {
    let dir = mnist_dir();
    let started = Instant::now();
    let mut dataset = data::load_mnist_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    // 1000 train + 100 query rows per class; the rest is the database.
    dataset.splits =
        data::assign_splits_per_class(dataset.labels.as_ref().unwrap(), 1000, 0, 100, 1234)
            .unwrap();
    let train_x = dataset.split_features(Split::Train);
    let db_x = dataset.split_features(Split::Db);
    let q_x = dataset.split_features(Split::Query);
    let gt = GroundTruth::new(
        dataset.split_labels(Split::Query).unwrap(),
        dataset.split_labels(Split::Db).unwrap(),
    )
    .unwrap();

    let mut full_maps = Vec::new();
    let mut single_maps = Vec::new();
    let mut recon_wins = 0usize;
    let mut lines = Vec::new();
    let mut first_full: Option<RunResult> = None;
    for &seed in &MNIST_SEEDS {
        let full = run_mnist(Variant::Full, seed, &train_x, &db_x, &q_x, &gt);
        let single = run_mnist(Variant::SingleBottleneck, seed, &train_x, &db_x, &q_x, &gt);
        lines.push(format!(
            "seed {seed}: full map {:.4} recon {:.4}, single map {:.4} recon {:.4}",
            full.map, full.final_recon, single.map, single.final_recon
        ));
        if full.final_recon < single.final_recon {
            recon_wins += 1;
        }
        full_maps.push(full.map);
        single_maps.push(single.map);
        if first_full.is_none() {
            first_full = Some(full);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let full_median = median(&mut full_maps.clone());
    let single_median = median(&mut single_maps.clone());
    let gap = full_median - single_median;
    for line in &lines {
        println!("    {line}");
    }

    report(
        results,
        "twin vs single bottleneck",
        gap >= 0.02 && secs < 45.0 * 60.0,
        format!(
            "median MAP@1000 full {full_median:.4} vs single {single_median:.4}, gap {gap:+.4} \
             (need >= +0.02) in {:.1} min (budget 45)",
            secs / 60.0
        ),
    );
    report(
        results,
        "reconstruction ordering",
        recon_wins * 3 >= 2 * MNIST_SEEDS.len(),
        format!(
            "full recon below single for {recon_wins}/{} seeds (need >= 2/3)",
            MNIST_SEEDS.len()
        ),
    );
    report(
        results,
        "better-than-chance retrieval",
        full_median >= 0.25,
        format!("full median MAP@1000 {full_median:.4} (floor 0.25, chance ~0.1)"),
    );

    // Determinism: repeat the first full run and require identical codes.
    let rerun = run_mnist(Variant::Full, MNIST_SEEDS[0], &train_x, &db_x, &q_x, &gt);
    let first = first_full.unwrap();
    let identical = rerun.query_codes == first.query_codes
        && rerun.map == first.map
        && rerun.final_recon == first.final_recon;
    report(
        results,
        "determinism",
        identical,
        format!(
            "seed {} rerun: codes identical {}, map {:.6} vs {:.6}",
            MNIST_SEEDS[0],
            rerun.query_codes == first.query_codes,
            rerun.map,
            first.map
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. Codec and checkpoint round-trips
// ---------------------------------------------------------------------------

fn criterion_round_trips(results: &mut Vec<Outcome>) {
    let mut rng = ChaCha20Rng::seed_from_u64(900);
    let mut ok = true;
    for case in 0..1000 {
        let n = rng.gen_range(1..=40);
        let m = rng.gen_range(1..=130);
        let b = Array2::from_shape_fn((n, m), |_| if rng.gen_bool(0.5) { 1.0f32 } else { 0.0 });
        let packed = codec::pack(&b).unwrap();
        if codec::unpack(&packed) != b {
            ok = false;
        }
        // packed-word distances equal unpacked-row distances
        if case % 10 == 0 {
            for i in 0..n.min(4) {
                for j in 0..n.min(4) {
                    let direct =
                        (0..m).filter(|&t| b[[i, t]] != b[[j, t]]).count() as u32;
                    if packed.hamming(i, &packed, j) != direct {
                        ok = false;
                    }
                }
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let variants = Variant::ALL;
    for case in 0..1000 {
        let variant = variants[case % variants.len()];
        let mut mc = ModelConfig::new(3, 4);
        mc.latent_dim = 3;
        mc.shared_hidden = 3;
        mc.decoder_hidden = 3;
        mc.discriminator_hidden = 2;
        mc.variant = variant;
        let tc = TrainConfig {
            batch_size: 2,
            max_iterations: 2,
            seed: case as u64,
            lambda: 0.5,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(mc, tc).unwrap();
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(0.0f32..1.0));
        trainer.train(&x, |_| {}).unwrap();
        let path = dir.path().join(format!("c{case}.tbhc"));
        trainer.save_checkpoint(&path).unwrap();
        let restored = Trainer::load_checkpoint(&path).unwrap();
        let a = trainer.model.parameters();
        let b = restored.model.parameters();
        if a.len() != b.len()
            || a.iter().zip(&b).any(|(p, q)| {
                p.value != q.value || p.adam_m != q.adam_m || p.adam_v != q.adam_v
            })
            || restored.iteration != trainer.iteration
        {
            ok = false;
        }
        // the restored RNG must continue identically
        let probe = Array1::from_elem(3, 0.25f32);
        let c1 = codec::encode_query(&trainer.model, &probe).unwrap();
        let c2 = codec::encode_query(&restored.model, &probe).unwrap();
        if c1 != c2 {
            ok = false;
        }
    }
    report(
        results,
        "round-trips",
        ok,
        "pack/unpack, packed Hamming, and checkpoint save/load exact on 1000 instances".into(),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut results = Vec::new();
    criterion_adjacency(&mut results);
    criterion_gradients(&mut results);
    criterion_stochastic(&mut results);
    criterion_loss_anchors(&mut results);
    criterion_metric_oracle(&mut results);
    let skip_mnist = std::env::var_os("TBH_SKIP_MNIST").is_some();
    if !skip_mnist {
        criteria_mnist(&mut results);
    }
    criterion_round_trips(&mut results);

    let failed: Vec<&Outcome> = results.iter().filter(|r| !r.passed).collect();
    assert_eq!(results.len(), if skip_mnist { 6 } else { 10 });
    assert!(
        failed.is_empty(),
        "failed criteria: {}",
        failed
            .iter()
            .map(|r| format!("{} ({})", r.name, r.detail))
            .collect::<Vec<_>>()
            .join("; ")
    );
}

//! Acceptance suite: one PASS/FAIL line per criterion, then a single verdict.
//!
//! Every tolerance is pinned in the constants below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ggan::eval::{t1_evaluate, t2_evaluate, EvalSet};
use ggan::model::{build_discriminator, build_generator, LABEL_HEAD, REALNESS_HEAD};
use ggan::nn::{
    cross_entropy, finite_diff_check, init_parameters, Activation, GradCheckConfig, HeadSpec, LayerSpec, NetworkSpec,
    ParameterSet, Tensor,
};
use ggan::snp::{
    afd, allele_frequencies, select_snps_by_afd, select_snps_by_list, split_train_test, write_genotype_csv, Allele,
    Genotype, GenotypeMatrix, MissingPolicy,
};
use ggan::trainer::{train, TrainConfig, TrainState, TrainingData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const GRAD_NETWORK_TOL: f64 = 1e-3;
const GRAD_LAYER_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const GRAD_SAMPLES_PER_TENSOR: usize = 12;
// Criterion 2
const LN2_TOL: f64 = 1e-9;
// Criterion 3
const AFD_CASES: usize = 200;
const AFD_MAX_DIM: usize = 20;
const AFD_TOL: f64 = 1e-12;
// Criterion 5
const ISOLATION_STEPS: usize = 100;
// Criterion 6
const E2E_SEEDS: [u64; 3] = [1, 2, 3];
const E2E_MAX_EPOCHS: usize = 5000;
const E2E_MIN_ACC: f64 = 0.9;
const ORACLE_MIN_ACC: f64 = 0.95;
const E2E_RUN_BUDGET: Duration = Duration::from_secs(300);
// Criterion 8
const SYNTHETIC_COHORT: usize = 1000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- criterion 1

fn gradcheck_max(spec: &NetworkSpec, batch: usize, samples: Option<usize>) -> f64 {
    let mut params = init_parameters(spec, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for layer in &mut params.layers {
        for b in layer.bias.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let mut shape = vec![batch];
    shape.extend(&spec.input_shape);
    let len = shape.iter().product();
    let input = Tensor::from_vec(&shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let cfg = GradCheckConfig {
        samples_per_tensor: samples,
        ..GradCheckConfig::default()
    };
    (0..spec.heads.len())
        .map(|h| {
            let r = finite_diff_check(spec, &params, &input, h, &cfg).unwrap();
            assert!(r.checked > 0, "no coordinate checked");
            r.max_rel_error
        })
        .fold(0.0, f64::max)
}

fn single_layer(input: Vec<usize>, layer: LayerSpec) -> NetworkSpec {
    NetworkSpec {
        input_shape: input,
        trunk: vec![layer],
        heads: vec![HeadSpec {
            name: "out".into(),
            layers: vec![],
        }],
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let layers = [
        single_layer(vec![5], LayerSpec::Dense { units: 4, activation: Activation::Relu }),
        single_layer(vec![6, 2], LayerSpec::Conv1d { filters: 3, kernel: 3, activation: Activation::Relu }),
        single_layer(vec![4, 2], LayerSpec::UpSample1d { factor: 2 }),
        single_layer(vec![4, 2], LayerSpec::Flatten),
        single_layer(vec![8], LayerSpec::Reshape { shape: vec![4, 2] }),
        single_layer(vec![5], LayerSpec::SoftmaxHead { units: 2 }),
    ];
    let layer_err = layers.iter().map(|s| gradcheck_max(s, 3, None)).fold(0.0, f64::max);
    ensure(layer_err < GRAD_LAYER_TOL, || format!("single-layer error {layer_err:e}"))?;
    let mut net_err = 0.0f64;
    for n in [12, 25, 96] {
        net_err = net_err.max(gradcheck_max(&build_discriminator(n, 0.4).unwrap(), 2, Some(GRAD_SAMPLES_PER_TENSOR)));
        net_err = net_err.max(gradcheck_max(&build_generator(n, 100).unwrap(), 2, Some(GRAD_SAMPLES_PER_TENSOR)));
    }
    ensure(net_err < GRAD_NETWORK_TOL, || format!("network error {net_err:e}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < GRAD_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max rel. error: layers {layer_err:.2e}, networks {net_err:.2e}; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- criterion 2

fn task_state(seed: u64) -> (TrainState, TrainingData) {
    let task = common::synthetic_task(seed);
    let subset = select_snps_by_list(&task.labeled, task.labeled.snp_ids()).unwrap();
    let data = TrainingData::new(&task.labeled, &task.unlabeled, &subset, MissingPolicy::Reject).unwrap();
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    (TrainState::new(config, subset).unwrap(), data)
}

fn zero_heads(state: &mut TrainState) {
    let d = &mut state.model.discriminator;
    let groups = d.spec.param_groups().unwrap();
    for h in [LABEL_HEAD, REALNESS_HEAD] {
        d.params.zero_slots(groups.heads[h].clone());
    }
}

fn criterion_2() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let ce = cross_entropy(&[0], &Tensor::from_vec(&[1, 2], vec![0.5, 0.5]).unwrap()).unwrap();
    ensure((ce - ln2).abs() < LN2_TOL, || format!("cross entropy {ce}"))?;
    let (base, data) = task_state(4);
    let fresh = || {
        let mut s = base.clone();
        zero_heads(&mut s);
        s
    };
    let losses = [
        fresh().supervised_step(&data).unwrap().loss,
        fresh().unsupervised_step(&data).unwrap().loss,
        fresh().generator_step().unwrap().loss,
    ];
    let worst = losses.iter().map(|l| (l - ln2).abs()).fold(0.0, f64::max);
    ensure(worst < LN2_TOL, || format!("step losses {losses:?}"))?;
    Ok(format!("max |loss − ln 2| = {worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 3

fn random_matrix(rng: &mut ChaCha8Rng, samples: usize, snps: usize) -> GenotypeMatrix {
    let gs = (0..samples * snps)
        .map(|_| match rng.random_range(0..10) {
            0..=2 => Genotype::HomRef,
            3..=5 => Genotype::Het,
            6..=8 => Genotype::HomAlt,
            _ => Genotype::Missing,
        })
        .collect();
    GenotypeMatrix::new(
        (0..samples).map(|i| format!("s{i}")).collect(),
        (0..snps).map(|j| format!("rs{j}")).collect(),
        gs,
        None,
    )
    .unwrap()
}

/// (reference alleles, total alleles) counted from allele strings.
fn count_alleles(m: &GenotypeMatrix, snp: usize) -> Option<(u64, u64)> {
    let s: String = m
        .column(snp)
        .filter_map(|g| match g {
            Genotype::HomRef => Some("RR"),
            Genotype::Het => Some("RA"),
            Genotype::HomAlt => Some("AA"),
            Genotype::Missing => None,
        })
        .collect();
    (!s.is_empty()).then(|| (s.matches('R').count() as u64, s.len() as u64))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut compared, mut skipped) = (0usize, 0usize);
    let mut case = 0;
    while compared < AFD_CASES {
        case += 1;
        let k = rng.random_range(1..=AFD_MAX_DIM);
        let (nl, nu) = (rng.random_range(1..=AFD_MAX_DIM), rng.random_range(1..=AFD_MAX_DIM));
        let l = random_matrix(&mut rng, nl, k);
        let u = random_matrix(&mut rng, nu, k);
        let lc: Option<Vec<_>> = (0..k).map(|j| count_alleles(&l, j)).collect();
        let uc: Option<Vec<_>> = (0..k).map(|j| count_alleles(&u, j)).collect();
        let (Some(lc), Some(uc)) = (lc, uc) else {
            // A SNP with no observed genotype must be refused.
            ensure(allele_frequencies(&l).is_err() || allele_frequencies(&u).is_err(), || {
                format!("case {case}: unobserved SNP accepted")
            })?;
            skipped += 1;
            continue;
        };
        let (fl, fu) = (allele_frequencies(&l).unwrap(), allele_frequencies(&u).unwrap());
        let d = afd(&fl, &fu).unwrap();
        for j in 0..k {
            let id = format!("rs{j}");
            let ((lr, lt), (ur, ut)) = (lc[j], uc[j]);
            let f = fl.get(&id).unwrap();
            ensure((f.get(Allele::Ref) - lr as f64 / lt as f64).abs() <= AFD_TOL, || format!("case {case} {id} f_ref"))?;
            let exact = (lr * ut).abs_diff(ur * lt) as f64 / (lt * ut) as f64;
            ensure((d[&id] - exact).abs() <= AFD_TOL, || format!("case {case} {id}: {} vs {exact}", d[&id]))?;
        }
        let mut previous: Vec<String> = Vec::new();
        for step in 0..=20 {
            let t = step as f64 / 20.0;
            let ids = select_snps_by_afd(&d, t).unwrap().snp_ids;
            ensure(previous.iter().all(|p| ids.contains(p)), || format!("case {case}: not monotone at {t}"))?;
            previous = ids;
        }
        compared += 1;
    }
    Ok(format!("{compared} matrix pairs compared exactly; {skipped} draws with an unobserved SNP correctly refused"))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    for n in [12, 25, 96] {
        for (kind, dump) in [
            ("discriminator", build_discriminator(n, 0.4).unwrap().summary().unwrap()),
            ("generator", build_generator(n, 100).unwrap().summary().unwrap()),
        ] {
            let path = format!("{}/tests/golden/{kind}_{n}.txt", env!("CARGO_MANIFEST_DIR"));
            let golden = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
            ensure(dump == golden, || format!("{kind} n={n} differs:\n{dump}"))?;
        }
    }
    Ok("6 dumps byte-identical".into())
}

// ---------------------------------------------------------------- criterion 5

fn bits(p: &ParameterSet, range: std::ops::Range<usize>) -> Vec<u64> {
    p.layers[range]
        .iter()
        .flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
        .map(|v| v.to_bits())
        .collect()
}

fn criterion_5() -> Outcome {
    let (mut state, data) = task_state(5);
    let groups = state.model.discriminator.spec.param_groups().unwrap();
    let n_gen = state.model.generator.params.layers.len();
    let snap = |s: &TrainState| {
        let d = &s.model.discriminator.params;
        (
            bits(d, groups.heads[LABEL_HEAD].clone()),
            bits(d, groups.heads[REALNESS_HEAD].clone()),
            bits(d, groups.trunk.clone()),
            bits(&s.model.generator.params, 0..n_gen),
        )
    };
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut counts = [0usize; 3];
    for step in 0..ISOLATION_STEPS {
        let (label, realness, trunk, gen) = snap(&state);
        let kind = rng.random_range(0..3);
        counts[kind] += 1;
        match kind {
            0 => drop(state.supervised_step(&data).unwrap()),
            1 => drop(state.unsupervised_step(&data).unwrap()),
            _ => drop(state.generator_step().unwrap()),
        }
        let (label2, realness2, trunk2, gen2) = snap(&state);
        let ok = match kind {
            0 => realness2 == realness && gen2 == gen && trunk2 != trunk,
            1 => label2 == label && gen2 == gen && trunk2 != trunk,
            _ => label2 == label && realness2 == realness && trunk2 == trunk,
        };
        ensure(ok, || format!("step {step} (kind {kind}) touched a frozen group"))?;
    }
    Ok(format!(
        "{ISOLATION_STEPS} steps ({} supervised, {} unsupervised, {} generator), bit-exact",
        counts[0], counts[1], counts[2]
    ))
}

// ---------------------------------------------------------------- criterion 6

fn e2e_run(seed: u64) -> Outcome {
    let task = common::synthetic_task(seed);
    let oracle = common::logistic_oracle_accuracy(&task.labeled);
    ensure(oracle >= ORACLE_MIN_ACC, || format!("seed {seed}: oracle only {oracle}"))?;
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    ensure(config.epochs <= E2E_MAX_EPOCHS, || "default epochs too large".into())?;
    let (labeled_train, labeled_test) = split_train_test(&task.labeled, config.test_fraction, seed).unwrap();
    let (unlabeled_train, unlabeled_test) = split_train_test(&task.unlabeled, config.test_fraction, seed).unwrap();
    let subset = select_snps_by_list(&task.labeled, task.labeled.snp_ids()).unwrap();

    let start = Instant::now();
    let state = train(&config, &labeled_train, &unlabeled_train, &subset).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let lt = EvalSet::from_matrix(&labeled_test, &subset, MissingPolicy::Reject).unwrap();
    let ut = EvalSet::from_matrix(&unlabeled_test, &subset, MissingPolicy::Reject).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = t1_evaluate(&state.model, &lt, &ut, ut.len(), config.noise, &mut rng).unwrap().result;
    let t2 = t2_evaluate(&state.model, &lt).unwrap().result;
    let summary = format!(
        "seed {seed}: oracle {oracle:.2}, acc_labeled {:.3}, acc_unlabeled {:.3}, acc1 {:.3}, {:.0}s",
        t1.acc_labeled,
        t1.acc_unlabeled,
        t2.acc1,
        elapsed.as_secs_f64()
    );
    let pass = t1.acc_labeled >= E2E_MIN_ACC
        && t1.acc_unlabeled >= E2E_MIN_ACC
        && t2.acc1 >= E2E_MIN_ACC
        && elapsed < E2E_RUN_BUDGET;
    if pass {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn criterion_6() -> Outcome {
    let mut lines = Vec::new();
    let mut failed = false;
    for seed in E2E_SEEDS {
        match e2e_run(seed) {
            Ok(s) => lines.push(s),
            Err(s) => {
                failed = true;
                lines.push(format!("{s} [below target]"));
            }
        }
    }
    let text = lines.join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

// ------------------------------------------------------------ criteria 7 and 8

fn ggan(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ggan"))
        .args(args)
        .env_remove("GGAN_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`ggan {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn write_csv(path: &Path, m: &GenotypeMatrix) {
    write_genotype_csv(std::fs::File::create(path).unwrap(), m).unwrap();
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// Writes the synthetic cohorts, a config and the full subset into `dir`.
fn prepare_cli_inputs(dir: &Path) -> Result<(), String> {
    let task = common::synthetic_task(8);
    write_csv(&dir.join("labeled.csv"), &task.labeled);
    write_csv(&dir.join("unlabeled.csv"), &task.unlabeled);
    std::fs::write(dir.join("config.json"), r#"{"epochs": 20, "seed": 99}"#).unwrap();
    ggan(&["freqs", "--labeled", &p(dir, "labeled.csv"), "--unlabeled", &p(dir, "unlabeled.csv"), "--out", &p(dir, "freqs.json")])?;
    ggan(&["select", "--freqs", &p(dir, "freqs.json"), "--threshold", "1.0", "--out", &p(dir, "subset.snps")])
}

fn cli_train(dir: &Path, labeled: &str, outdir: &str) -> Result<(), String> {
    ggan(&[
        "train", "--config", &p(dir, "config.json"), "--labeled", &p(dir, labeled), "--unlabeled",
        &p(dir, "unlabeled.csv"), "--subset", &p(dir, "subset.snps"), "--outdir", &p(dir, outdir),
    ])
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    prepare_cli_inputs(dir)?;
    cli_train(dir, "labeled.csv", "a")?;
    cli_train(dir, "labeled.csv", "b")?;
    let read = |f: &str| std::fs::read(dir.join(f)).unwrap();
    ensure(read("a/checkpoint.bin") == read("b/checkpoint.bin"), || "checkpoints differ".into())?;
    ensure(read("a/history.jsonl") == read("b/history.jsonl"), || "histories differ".into())?;
    Ok(format!("checkpoint {} bytes identical, histories identical", read("a/checkpoint.bin").len()))
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    prepare_cli_inputs(dir)?;
    cli_train(dir, "labeled.csv", "run")?;
    let count = SYNTHETIC_COHORT.to_string();
    ggan(&[
        "generate", "--checkpoint", &p(dir, "run/checkpoint.bin"), "--count", &count, "--quantize", "--seed", "3",
        "--out", &p(dir, "synthetic.csv"),
    ])?;
    ggan(&[
        "freqs", "--labeled", &p(dir, "synthetic.csv"), "--unlabeled", &p(dir, "unlabeled.csv"), "--out",
        &p(dir, "synthetic_freqs.json"),
    ])?;
    let freqs: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("synthetic_freqs.json")).unwrap()).map_err(|e| e.to_string())?;
    let afd = freqs["afd"].as_object().ok_or("no afd table")?;
    ensure(afd.len() == common::TASK_SNPS, || format!("{} AFD entries", afd.len()))?;
    let values: Vec<f64> = afd.values().filter_map(|v| v.as_f64()).collect();
    ensure(values.len() == afd.len() && values.iter().all(|v| v.is_finite()), || "non-finite AFD".into())?;
    cli_train(dir, "synthetic.csv", "retrained")?;
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(format!("{SYNTHETIC_COHORT} synthetic profiles re-ingested; max AFD vs training cohort {max:.3}"))
}

// ------------------------------------------------------------------- driver

fn run(n: usize, name: &str, f: fn() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    match &outcome {
        Ok(detail) => println!("criterion {n} ({name}): PASS — {detail}"),
        Err(detail) => println!("criterion {n} ({name}): FAIL — {detail}"),
    }
    outcome.is_ok()
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("gradient fidelity", criterion_1),
        ("loss oracles", criterion_2),
        ("AFD oracle equivalence", criterion_3),
        ("architecture golden shapes", criterion_4),
        ("head isolation and freezing", criterion_5),
        ("end-to-end desk-scale training", criterion_6),
        ("CLI determinism", criterion_7),
        ("pipeline closure", criterion_8),
    ];
    let results: Vec<bool> = criteria
        .iter()
        .enumerate()
        .map(|(i, (name, f))| run(i + 1, name, *f))
        .collect();
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len());
}

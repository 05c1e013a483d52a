//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria run at their stated tolerances and scales.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use common::*;
use seginf::crf::{self, CrfGradient, Segment};
use seginf::experiments::{self, ArtifactSpec, ConflictSpec, NoiseSpec, ValiditySpec};
use seginf::influence::{
    GradientCache, Granularity, HessianMode, InfluenceEngine, Locator, Records,
};
use seginf::synth::{self, NerSpec};
use seginf::trainer::{self, TrainConfig};

type Outcome = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crf_oracle() -> Outcome {
    let mut r = rng(20_240_601);
    let mut worst: f64 = 0.0;
    let mut viterbi_mismatch = 0;
    for _ in 0..200 {
        let inst = random_small_instance(&mut r);
        let (obs, y, p) = (&inst.obs, &inst.labels, &inst.params);
        let lz = brute_log_z(obs, p);
        let seg = random_segment(&mut r, obs.len());
        let partial = y.mask(seg).map_err(|e| e.to_string())?;
        let errs = [
            crf::log_partition(obs, p).unwrap() - lz,
            crf::joint_log_prob(obs, y, p).unwrap() - (brute_score(obs, &y.0, p) - lz),
            crf::marginal_log_prob(obs, &partial, p).unwrap() - brute_marginal(obs, &partial, p),
            crf::conditional_segment_log_prob(obs, y, seg, p).unwrap()
                - brute_conditional(obs, y, seg, p),
        ];
        worst = errs.iter().fold(worst, |m, e| m.max(e.abs()));
        let fast = crf::position_marginals(obs, p).unwrap();
        let slow = brute_position_marginals(obs, p);
        for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        let (path, score) = crf::viterbi_decode(obs, p).unwrap();
        let (best, best_score) = brute_argmax(obs, p);
        worst = worst.max((score - best_score).abs());
        viterbi_mismatch += usize::from(path.0 != best);
    }
    verdict(
        worst < 1e-10 && viterbi_mismatch == 0,
        format!("200 instances, max abs error {worst:.1e}, Viterbi mismatches {viterbi_mismatch}"),
    )
}

fn gradient_suite() -> Outcome {
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..100 {
        let c = r.gen_range(2..=4);
        let len = r.gen_range(2..=7);
        let d = r.gen_range(1..=4);
        let inst = random_instance(&mut r, len, c, d);
        let (obs, y, p) = (&inst.obs, &inst.labels, &inst.params);
        let mut check = |g: CrfGradient, fd: CrfGradient| worst = worst.max(rel_err(&g, &fd, 1e-8));

        check(
            crf::grad_joint_loss(obs, y, p).unwrap(),
            fd_gradient(p, h, |q| -crf::joint_log_prob(obs, y, q).unwrap()),
        );
        let seg = random_segment(&mut r, len);
        check(
            crf::grad_conditional_loss(obs, y, seg, p).unwrap(),
            fd_gradient(p, h, |q| {
                -crf::conditional_segment_log_prob(obs, y, seg, q).unwrap()
            }),
        );
        let t = r.gen_range(0..len);
        let e = crf::token_error_vector(obs, y, t, p).unwrap();
        let ys = y.as_slice();
        let factored = crf::expand_token_gradient(
            c,
            &e,
            obs.feature(t),
            t.checked_sub(1).map(|s| ys[s]),
            ys.get(t + 1).copied(),
        );
        let tok = Segment::token(t + 1);
        check(
            factored,
            fd_gradient(p, h, |q| {
                -crf::conditional_segment_log_prob(obs, y, tok, q).unwrap()
            }),
        );
        let partial = y.mask(random_segment(&mut r, len)).unwrap();
        check(
            crf::grad_marginal_loss(obs, &partial, p).unwrap(),
            fd_gradient(p, h, |q| -crf::marginal_log_prob(obs, &partial, q).unwrap()),
        );
        let v = random_params(&mut r, c, d, 1.0).to_gradient_layout();
        let hv = crf::sequence_hvp(obs, p, &v).unwrap();
        let gp = crf::grad_joint_loss(obs, y, &p.stepped(h, &v)).unwrap();
        let gm = crf::grad_joint_loss(obs, y, &p.stepped(-h, &v)).unwrap();
        check(hv, (&gp - &gm).scaled(0.5 / h));
    }
    verdict(
        worst < 1e-5,
        format!("100 instances (joint, conditional, factored token, marginal, hvp), max rel error {worst:.1e}"),
    )
}

fn decomposition() -> Outcome {
    let mut r = rng(4);
    let (mut loss_err, mut grad_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let c = r.gen_range(2..=5);
        let len = r.gen_range(1..=10);
        let d = r.gen_range(1..=4);
        let inst = random_instance(&mut r, len, c, d);
        let (obs, y, p) = (&inst.obs, &inst.labels, &inst.params);
        let seg = random_segment(&mut r, len);
        let partial = y.mask(seg).unwrap();
        let joint = -crf::joint_log_prob(obs, y, p).unwrap();
        let marginal = -crf::marginal_log_prob(obs, &partial, p).unwrap();
        let conditional = -crf::conditional_segment_log_prob(obs, y, seg, p).unwrap();
        loss_err = loss_err.max((joint - marginal - conditional).abs());
        let gj = crf::grad_joint_loss(obs, y, p).unwrap();
        let gm = crf::grad_marginal_loss(obs, &partial, p).unwrap();
        let gc = crf::grad_conditional_loss(obs, y, seg, p).unwrap();
        grad_err = grad_err.max((&gj - &(&gm + &gc)).max_abs());
    }
    verdict(
        loss_err < 1e-9 && grad_err < 1e-8,
        format!("200 pairs, loss identity {loss_err:.1e}, gradient identity {grad_err:.1e}"),
    )
}

fn approximation_validity() -> Outcome {
    let spec = ValiditySpec::default();
    let (out, _) = experiments::approximation_validity(&spec).map_err(|e| e.to_string())?;
    verdict(
        out.pearson_r >= 0.8 && out.sign_agreement >= 0.8,
        format!(
            "{} train / {} val docs, {} pairs, r = {:.3}, sign agreement = {:.3}, spearman = {:.3}",
            spec.n_train,
            spec.n_val,
            out.pairs.len(),
            out.pearson_r,
            out.sign_agreement,
            out.spearman_rho
        ),
    )
}

fn artifact_recovery() -> Outcome {
    let out =
        experiments::artifact_recovery(&ArtifactSpec::default()).map_err(|e| e.to_string())?;
    verdict(
        out.n_driven >= 20 && out.adjacency_rate >= 0.9 && out.adjacency_rate > out.instance_hit_rate,
        format!(
            "{} artifact-driven tokens, segment top-1 adjacency {:.3}, instance hit rate {:.3} (all {} tokens: {:.3})",
            out.n_driven,
            out.adjacency_rate,
            out.instance_hit_rate,
            out.queries.len(),
            out.adjacency_rate_all
        ),
    )
}

fn noise_ordering() -> Outcome {
    let out = experiments::noise_detection(&NoiseSpec::default()).map_err(|e| e.to_string())?;
    let (tl, inf) = (out.best_token_loss_random(), out.best_influence_random());
    let (base, worst_inf) = (
        out.best_baseline_systematic(),
        out.worst_influence_systematic(),
    );
    let a = tl >= inf - 0.05;
    let b = worst_inf > base;
    verdict(
        a && b,
        format!(
            "(a) random: token loss {tl:.3} vs influence {inf:.3} [{}]; (b) systematic: weakest influence {worst_inf:.3} vs best baseline {base:.3} [{}]",
            if a { "ok" } else { "fail" },
            if b { "ok" } else { "fail" }
        ),
    )
}

fn conflict() -> Outcome {
    let out = experiments::label_conflict(&ConflictSpec::default()).map_err(|e| e.to_string())?;
    verdict(
        !out.no_matches && out.segment_example_rate > out.instance_rate,
        format!(
            "{} queries, segment {:.3} vs instance {:.3} (nearest neighbour {:.3})",
            out.records.len(),
            out.segment_example_rate,
            out.instance_rate,
            out.nn_example_rate
        ),
    )
}

/// `max |a - b| / max |b|` over paired values.
fn rel_max(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

fn solver_agreement() -> Outcome {
    let spec = NerSpec {
        emb_dim: 8,
        ..NerSpec::default()
    };
    let (corpora, table) = synth::ner_corpora(&spec, &[80, 10], 11);
    let features = synth::ner_features();
    let (train, _) = corpora[0]
        .featurize(&table, &features)
        .map_err(|e| e.to_string())?;
    let (test, _) = corpora[1]
        .featurize(&table, &features)
        .map_err(|e| e.to_string())?;
    let (params, _) = trainer::train(&train, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let n_params = params.n_params();
    let cache =
        GradientCache::build(&train, &params, Granularity::Token).map_err(|e| e.to_string())?;
    let Records::Token(_) = cache.records() else {
        return Err("expected a token cache".into());
    };
    let values = |mode: HessianMode| -> Result<Vec<f64>, String> {
        let engine = InfluenceEngine::new(&train, &params, mode).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        for (i, ex) in test.examples().iter().enumerate() {
            for loc in [
                Locator::token(i, 0),
                Locator::new(i, Segment::full(ex.len())),
            ] {
                let q = engine.prepare(ex, loc).map_err(|e| e.to_string())?;
                let all = engine
                    .all_influences(&q, &cache)
                    .map_err(|e| e.to_string())?;
                out.extend(all.iter().map(|r| r.value));
            }
        }
        Ok(out)
    };
    let explicit = values(HessianMode::ExplicitDamped { damping: 1e-3 })?;
    let cg = values(HessianMode::CgHvp {
        damping: 1e-3,
        max_cg_iters: 5000,
        cg_tol: 1e-13,
    })?;
    let big = 1e6;
    let damped: Vec<f64> = values(HessianMode::ExplicitDamped { damping: big })?
        .iter()
        .map(|v| v * big)
        .collect();
    let identity = values(HessianMode::Identity)?;
    let (e_cg, e_big) = (rel_max(&cg, &explicit), rel_max(&damped, &identity));
    verdict(
        n_params <= 500 && e_cg <= 1e-6 && e_big <= 1e-6,
        format!(
            "{n_params} parameters, {} values: explicit vs CG {e_cg:.1e}, λ=1e6 explicit·λ vs identity {e_big:.1e}",
            explicit.len()
        ),
    )
}

fn seginf(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seginf"))
        .args(args)
        .arg("--quiet")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "seginf {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// Runs every command twice with the same seed and paths, on one thread and
/// on four, and compares the report and every output file byte for byte.
fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    // Leaked so the argument lists can borrow them for the whole run.
    let p = |n: &str| -> &'static str {
        Box::leak(d.join(n).to_str().unwrap().to_string().into_boxed_str())
    };
    let runs: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "synth-ner",
            vec![
                "synth",
                "--kind",
                "ner",
                "--out-dir",
                p("ner"),
                "--n-train",
                "80",
                "--n-test",
                "40",
            ],
            vec![p("ner/train.conll"), p("ner/embeddings.txt")],
        ),
        (
            "synth-news",
            vec![
                "synth",
                "--kind",
                "news",
                "--out-dir",
                p("news"),
                "--n-train",
                "150",
                "--n-test",
                "5",
            ],
            vec![p("news/train.conll"), p("news/gazetteer.txt")],
        ),
        (
            "synth-dosage",
            vec![
                "synth",
                "--kind",
                "dosage",
                "--out-dir",
                p("dose"),
                "--n-train",
                "80",
                "--n-test",
                "10",
            ],
            vec![p("dose/train.conll")],
        ),
        (
            "train",
            vec![
                "train",
                "--train",
                p("ner/train.conll"),
                "--embeddings",
                p("ner/embeddings.txt"),
                "--model",
                p("m.bin"),
                "--init-scale",
                "0.05",
            ],
            vec![p("m.bin")],
        ),
        (
            "predict",
            vec![
                "predict",
                "--model",
                p("m.bin"),
                "--embeddings",
                p("ner/embeddings.txt"),
                "--input",
                p("ner/test.conll"),
                "--output",
                p("pred.conll"),
            ],
            vec![p("pred.conll")],
        ),
        (
            "influence",
            vec![
                "influence",
                "--model",
                p("m.bin"),
                "--embeddings",
                p("ner/embeddings.txt"),
                "--train",
                p("ner/train.conll"),
                "--test",
                p("ner/test.conll"),
                "--segment",
                "2:3",
                "--mode",
                "cg",
            ],
            vec![],
        ),
        (
            "validate",
            vec![
                "validate",
                "--model",
                p("m.bin"),
                "--embeddings",
                p("ner/embeddings.txt"),
                "--train",
                p("ner/train.conll"),
                "--val",
                p("ner/test.conll"),
                "--n-test-tokens",
                "4",
                "--top-k",
                "3",
                "--pairs-out",
                p("pairs.tsv"),
            ],
            vec![p("pairs.tsv")],
        ),
        (
            "corrupt-artifact",
            vec![
                "corrupt",
                "--kind",
                "artifact",
                "--input",
                p("ner/train.conll"),
                "--output",
                p("art.conll"),
                "--manifest",
                p("art.manifest"),
            ],
            vec![p("art.conll"), p("art.manifest")],
        ),
        (
            "corrupt-systematic",
            vec![
                "corrupt",
                "--kind",
                "systematic",
                "--input",
                p("news/train.conll"),
                "--gazetteer",
                p("news/gazetteer.txt"),
                "--n-docs",
                "8",
                "--output",
                p("sys.conll"),
                "--manifest",
                p("sys.manifest"),
            ],
            vec![p("sys.conll"), p("sys.manifest")],
        ),
        (
            "corrupt-random",
            vec![
                "corrupt",
                "--kind",
                "random",
                "--input",
                p("sys.conll"),
                "--exclude-prefix",
                "SOCCER",
                "--n-docs",
                "20",
                "--output",
                p("noisy.conll"),
                "--manifest",
                p("rand.manifest"),
            ],
            vec![p("noisy.conll"), p("rand.manifest")],
        ),
        (
            "train-noisy",
            vec![
                "train",
                "--train",
                p("noisy.conll"),
                "--embeddings",
                p("news/embeddings.txt"),
                "--context-embeddings",
                "--model",
                p("noisy.bin"),
            ],
            vec![p("noisy.bin")],
        ),
        (
            "score",
            vec![
                "score",
                "--model",
                p("noisy.bin"),
                "--embeddings",
                p("news/embeddings.txt"),
                "--input",
                p("noisy.conll"),
                "--clean-val",
                p("news/test.conll"),
                "--scorers",
                "baselines,influence,nn",
                "--output",
                p("scores.jsonl"),
            ],
            vec![p("scores.jsonl")],
        ),
        (
            "curve",
            vec![
                "curve",
                "--scores",
                p("scores.jsonl"),
                "--manifest",
                p("rand.manifest"),
                "--output",
                p("curve.tsv"),
            ],
            vec![p("curve.tsv")],
        ),
        (
            "train-dosage",
            vec![
                "train",
                "--train",
                p("dose/train.conll"),
                "--embeddings",
                p("dose/embeddings.txt"),
                "--context-embeddings",
                "--model",
                p("dose.bin"),
            ],
            vec![p("dose.bin")],
        ),
        (
            "conflict",
            vec![
                "conflict",
                "--model",
                p("dose.bin"),
                "--embeddings",
                p("dose/embeddings.txt"),
                "--train",
                p("dose/train.conll"),
                "--test",
                p("dose/test.conll"),
                "--patterns",
                p("dose/patterns.txt"),
            ],
            vec![],
        ),
    ];
    let read = |path: &str| std::fs::read(path).map_err(|e| format!("{path}: {e}"));
    let mut differing = Vec::new();
    for (name, args, outputs) in &runs {
        let report = p(&format!("{name}.jsonl"));
        let mut full = args.clone();
        full.extend(["--seed", "7", "--report", report]);
        let mut snapshots = Vec::new();
        for threads in ["1", "4"] {
            let mut with_threads = full.clone();
            with_threads.extend(["--threads", threads]);
            seginf(&with_threads)?;
            let mut files = vec![read(report)?];
            for o in outputs {
                files.push(read(o)?);
            }
            snapshots.push(files);
        }
        if snapshots[0] != snapshots[1] {
            differing.push(*name);
        }
    }
    verdict(
        differing.is_empty() && Path::new(p("m.bin")).exists(),
        format!(
            "{} commands run on 1 and 4 threads, differing: {differing:?}",
            runs.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("crf-oracle-equivalence", crf_oracle),
        ("gradient-suite", gradient_suite),
        ("decomposition-identity", decomposition),
        ("approximation-validity", approximation_validity),
        ("synthetic-artifact-recovery", artifact_recovery),
        ("noise-detection-ordering", noise_ordering),
        ("conflict-analysis", conflict),
        ("solver-agreement", solver_agreement),
        ("cli-determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = run();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

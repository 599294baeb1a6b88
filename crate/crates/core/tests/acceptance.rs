//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use termnorm::contrastive::{coder_samples, sapbert_dataset_pairs, sapbert_op_pairs, Polarity};
use termnorm::dataset::Category;
use termnorm::evaluation::{evaluate, AggregateReport};
use termnorm::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use termnorm::rng::{derive, DetRng};
use termnorm::synth::{gen_synthetic, NoiseStyle, SynthConfig};
use termnorm::trainer::Strategy;

const MASTER: u64 = 20_240_101;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn contrastive_oracle() -> Outcome {
    for i in 0..200 {
        let mut rng = DetRng::new(derive(MASTER, 1_000 + i));
        let o = random_ontology(&mut rng, 4, 2, 3);
        let d = random_dataset(&mut rng, &o, 12);
        let got = coder_samples(&d, &o).map_err(|e| e.to_string())?;
        let (pairs, triples, skipped) = coder_oracle(&d, &o);
        ensure(
            sorted(&got.pairs) == sorted(&pairs) && sorted(&got.triples) == sorted(&triples) && got.skipped_missing_hlt == skipped,
            || format!("coder mismatch on instance {i}"),
        )?;
        let sap = sapbert_dataset_pairs(&d, &o).map_err(|e| e.to_string())?;
        ensure(sorted(&sap) == sorted(&sapbert_dataset_oracle(&d, &o)), || format!("sapbert mismatch on instance {i}"))?;
        ensure(sorted(&sapbert_op_pairs(&o)) == sorted(&sapbert_op_oracle(&o)), || format!("sapbert-op mismatch on instance {i}"))?;
    }
    let out = coder_samples(&worked_example(), &toy_ontology()).map_err(|e| e.to_string())?;
    let pairs: Vec<(&str, &str, Polarity)> = out.pairs.iter().map(|p| (p.left.as_str(), p.right.as_str(), p.polarity)).collect();
    ensure(
        pairs
            == [
                ("weak knees", "zap me of all energy", Polarity::Positive),
                ("weak knees", "feel like crap", Polarity::Negative),
                ("zap me of all energy", "feel like crap", Polarity::Negative),
            ],
        || format!("worked example pairs {pairs:?}"),
    )?;
    let triples: Vec<String> = out.triples.iter().map(|t| format!("{} {} {}", t.left, t.relation, t.right)).collect();
    ensure(
        triples == ["weak knees RO feel like crap", "zap me of all energy RO feel like crap"],
        || format!("worked example triples {triples:?}"),
    )?;
    Ok("200 instances, worked example 1+/2-/2 RO".into())
}

fn retrieval_oracle() -> Outcome {
    for i in 0..500 {
        ensure(retrieval_agrees(derive(MASTER, 2_000 + i)), || format!("instance {i} disagrees with the scan"))?;
    }
    Ok("500 instances".into())
}

fn gradient_checks() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..100 {
        worst.0 = worst.0.max(classifier_check(derive(MASTER, 3_000 + i)));
        worst.1 = worst.1.max(infonce_check(derive(MASTER, 3_500 + i)));
    }
    ensure(worst.0 <= 1e-4 && worst.1 <= 1e-4, || format!("max relative error {worst:?}"))?;
    Ok(format!("max relative error: cross-entropy {:.1e}, InfoNCE {:.1e}", worst.0, worst.1))
}

fn metric_oracle() -> Outcome {
    for i in 0..200 {
        let mut rng = DetRng::new(derive(MASTER, 4_000 + i));
        let (d, split, preds) = random_eval_instance(&mut rng, 10, 100);
        let m = evaluate(&preds, &split, &d).map_err(|e| e.to_string())?;
        for (cat, acc, f1) in [
            (Some(Category::In), m.accuracy_in, m.f1_in),
            (Some(Category::Out), m.accuracy_out, m.f1_out),
            (None, m.accuracy_overall, m.f1_overall),
        ] {
            let o = confusion_oracle(&items_for(&d, &split, &preds, cat));
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-10,
                (None, None) => true,
                _ => false,
            };
            ensure(
                close(acc, o.as_ref().map(|o| o.accuracy)) && close(f1, o.as_ref().map(|o| o.macro_f1)),
                || format!("instance {i}, {cat:?}"),
            )?;
        }
        if let (Some(a), Some(b)) = (m.accuracy_in, m.accuracy_out) {
            let (si, so) = (m.support_in as f64, m.support_out as f64);
            ensure(m.accuracy_overall == Some((si * a + so * b) / (si + so)), || format!("weighted identity, instance {i}"))?;
        }
    }
    Ok("200 instances".into())
}

fn split_contract() -> Outcome {
    for i in 0..1000 {
        split_case(derive(MASTER, 5_000 + i)).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok("1000 make_splits calls".into())
}

fn op_corpus() -> Outcome {
    for i in 0..100 {
        op_corpus_case(derive(MASTER, 6_000 + i)).map_err(|e| format!("ontology {i}: {e}"))?;
    }
    ensure(toy_op_corpus_ok(), || "toy corpus".into())?;
    Ok("100 ontologies, toy corpus".into())
}

fn per_dataset(r: &PipelineReport, s: Strategy, f: fn(&AggregateReport) -> Option<f64>) -> Vec<(String, f64)> {
    r.in_dataset[&s].iter().map(|(k, v)| (k.clone(), f(v).unwrap_or(f64::NAN))).collect()
}

fn directional(r: &PipelineReport) -> Outcome {
    let out = |a: &AggregateReport| a.accuracy_out.mean;
    let overall = |a: &AggregateReport| a.accuracy_overall.mean;
    let ft_out = per_dataset(r, Strategy::Ft, out);
    let opft_out = per_dataset(r, Strategy::OpFt, out);
    let ft_all = per_dataset(r, Strategy::Ft, overall);
    let opft_all = per_dataset(r, Strategy::OpFt, overall);
    let mut lines = Vec::new();
    for i in 0..ft_out.len() {
        let name = &ft_out[i].0;
        ensure(ft_out[i].1 <= 0.02, || format!("(a) {name}: FT OUT {:.4}", ft_out[i].1))?;
        ensure(opft_out[i].1 - ft_out[i].1 >= 0.10, || {
            format!("(b) {name}: OP_FT OUT {:.4} vs FT OUT {:.4}", opft_out[i].1, ft_out[i].1)
        })?;
        ensure(opft_all[i].1 >= ft_all[i].1, || {
            format!("(c) {name}: OP_FT overall {:.4} vs FT overall {:.4}", opft_all[i].1, ft_all[i].1)
        })?;
        lines.push(format!(
            "{name}: OUT {:.3}->{:.3}, overall {:.3}->{:.3}",
            ft_out[i].1, opft_out[i].1, ft_all[i].1, opft_all[i].1
        ));
    }
    Ok(lines.join("; "))
}

fn cross_drop(r: &PipelineReport) -> Outcome {
    let ft = r.cross_drop(Strategy::Ft).ok_or("no FT cross matrix")?;
    let opft = r.cross_drop(Strategy::OpFt).ok_or("no OP_FT cross matrix")?;
    ensure(opft < ft, || format!("drop OP_FT {opft:.4} vs FT {ft:.4}"))?;
    Ok(format!("drop FT {ft:.3}, OP_FT {opft:.3}"))
}

fn byte_stability(first: &str) -> Outcome {
    prompts_match_golden()?;
    let (again, _) = run_pipeline(&PipelineConfig::default(), 1).map_err(|e| e.to_string())?;
    ensure(again.to_json() == first, || "pipeline reports differ".into())?;
    Ok(format!("golden prompts, {} byte report twice", first.len()))
}

fn stats() -> Outcome {
    let config = SynthConfig {
        noise_styles: vec![
            NoiseStyle { typo_rate: 0.04, paraphrase_rate: 0.5 },
            NoiseStyle { typo_rate: 0.01, paraphrase_rate: 0.15 },
            NoiseStyle { typo_rate: 0.0, paraphrase_rate: 0.3 },
        ],
        ..SynthConfig::default()
    };
    let (_, ds) = gen_synthetic(&config).map_err(|e| e.to_string())?;
    stats_agree(&ds)?;
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).map_err(|e| e.to_string())?;
    for needle in ["unique_pts", "shared_two_or_more", "shared_all", "union_pts"] {
        ensure(readme.contains(needle), || format!("README lacks {needle}"))?;
    }
    Ok("3 synthetic datasets, README partition".into())
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let mut result = f();
        let took = t.elapsed();
        if let (Ok(_), Some(limit)) = (&result, limit) {
            if took > limit {
                result = Err(format!("took {took:.1?}, limit {limit:?}"));
            }
        }
        match &result {
            Ok(detail) => println!("PASS {n:>2} {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {n:>2} {name} ({took:.2?}): {why}");
            }
        }
    };
    let secs = |s| Some(Duration::from_secs(s));

    report(1, "contrastive oracle", secs(5), &mut contrastive_oracle);
    report(2, "retrieval oracle", secs(5), &mut retrieval_oracle);
    report(3, "gradient checks", secs(30), &mut gradient_checks);
    report(4, "metric oracle", None, &mut metric_oracle);
    report(5, "split contract", None, &mut split_contract);
    report(6, "OP corpus", None, &mut op_corpus);

    let t = Instant::now();
    let pipeline = run_pipeline(&PipelineConfig::default(), 1).map(|(r, _)| r).map_err(|e| e.to_string());
    let pipeline_time = t.elapsed();
    let with_pipeline = |f: fn(&PipelineReport) -> Outcome| {
        let r = pipeline.as_ref().map_err(Clone::clone)?;
        let detail = f(r)?;
        Ok(format!("{detail}; pipeline {pipeline_time:.1?}"))
    };
    let limit7 = Duration::from_secs(300);
    let limit8 = Duration::from_secs(600);
    report(7, "long-tail generalization", None, &mut || {
        ensure(pipeline_time <= limit7, || format!("pipeline took {pipeline_time:.1?}"))?;
        with_pipeline(directional)
    });
    report(8, "cross-dataset drop", None, &mut || {
        ensure(pipeline_time <= limit8, || format!("pipeline took {pipeline_time:.1?}"))?;
        with_pipeline(cross_drop)
    });
    report(9, "byte stability", None, &mut || {
        let first = pipeline.as_ref().map_err(Clone::clone)?.to_json();
        byte_stability(&first)
    });
    report(10, "stats", None, &mut stats);

    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}

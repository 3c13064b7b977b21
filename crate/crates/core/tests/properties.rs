mod support;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use riskscope::econometrics::{cluster_robust_se, fama_macbeth, variance_decomposition, CrossSection, PanelDataset};
use riskscope::llm::{purge_na, CompletionCache, Gateway, Mode, PromptSpec, Provider, RiskType, StubProvider};
use riskscope::outcomes::{abnormal_volatility, market_model_rmse, DailySeries, POST_WINDOW, PRE_WINDOW};
use riskscope::synth::{business_days, fixture_stub_rules, synthetic_transcript, CallShape};
use riskscope::transcript::{chunk_transcript, count_tokens, ChunkParams, SpeakerRole, Transcript};
use riskscope::quarter::Quarter;

use support::*;

fn transcript(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Quarter::new(2021, 2).unwrap();
    let quiet = seed % 7 == 0;
    synthetic_transcript(&mut rng, &CallShape::default(), "C1", "F1", q, q.end_date(), quiet)
}

/// True when `needle` occurs in `hay` in order, possibly with gaps.
fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|w| it.any(|h| h == w))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn chunks_respect_budget_and_source(seed in any::<u64>()) {
        let t = transcript(seed);
        let params = ChunkParams::default();
        let chunks = chunk_transcript(&t, params);
        prop_assert_eq!(&chunks, &chunk_transcript(&t, params));
        let source: Vec<&str> = t
            .utterances
            .iter()
            .filter(|u| u.speaker_role != SpeakerRole::Operator)
            .flat_map(|u| u.text.split_whitespace())
            .collect();
        let emitted: Vec<&str> = chunks.iter().flat_map(|c| c.text.split_whitespace()).collect();
        prop_assert!(is_subsequence(&emitted, &source));
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.chunk_index, i);
            prop_assert_eq!(c.token_count, line_tokens(&c.text));
            prop_assert!((50..=2000).contains(&c.token_count), "{} tokens", c.token_count);
            prop_assert!(c.utterances.iter().all(|&u| t.utterances[u].speaker_role != SpeakerRole::Operator));
        }
    }

    #[test]
    fn utterance_tokens_are_per_utterance(words in proptest::collection::vec("[a-z]{1,8}", 1..300)) {
        let text = words.join(" ");
        prop_assert_eq!(count_tokens(&text), (4 * words.len()).div_ceil(3));
        prop_assert_eq!(count_tokens(&format!("  {text}\n")), count_tokens(&text));
    }

    #[test]
    fn na_inside_longer_output_survives(prefix in "[A-Z]{0,4}", suffix in "[A-Z]{1,4}") {
        let kept = format!("{prefix}NA{suffix}");
        let outputs = vec!["NA".to_string(), kept.clone(), " na. ".to_string()];
        prop_assert_eq!(purge_na(&outputs), kept);
    }

    #[test]
    fn cluster_sandwich_matches_assembly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(8..=50usize);
        let k = rng.random_range(1..=3usize);
        let g = rng.random_range(2..=(n / 2).min(8));
        let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<usize> = (0..n).map(|i| if i < g { i } else { rng.random_range(0..g) }).collect();
        let got = cluster_robust_se(&x, &e, &c, 0).unwrap();
        let oracle = brute_cluster_vcov(&x, &e, &c, k);
        for j in 0..k {
            prop_assert!((got.se[j] - oracle[(j, j)].sqrt()).abs() <= 1e-12);
        }
    }

    #[test]
    fn decomposition_ignores_row_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (firms, periods) = (rng.random_range(6..30usize), rng.random_range(3..8usize));
        let mut rows: Vec<(String, String, String, f64)> = Vec::new();
        for i in 0..firms {
            for t in 0..periods {
                let v = t as f64 * 0.3 + (i % 3) as f64 + rng.sample::<f64, _>(StandardNormal);
                rows.push((format!("F{i:02}"), format!("T{t}"), format!("I{}", i % 3), v));
            }
        }
        let build = |rows: &[(String, String, String, f64)]| {
            let mut p = PanelDataset::new(rows.iter().map(|r| r.0.clone()).collect(), rows.iter().map(|r| r.1.clone()).collect()).unwrap();
            p.add_categorical("industry", rows.iter().map(|r| Some(r.2.clone())).collect()).unwrap();
            p.add_numeric("m", rows.iter().map(|r| r.3).collect()).unwrap();
            variance_decomposition(&p, "m", "industry").unwrap()
        };
        let a = build(&rows);
        rows.shuffle(&mut rng);
        let b = build(&rows);
        prop_assert!((a.stage1_sum() - 100.0).abs() < 1e-9 && (a.stage2_sum() - 100.0).abs() < 1e-9);
        for (x, y) in [(a.time, b.time), (a.industry, b.industry), (a.time_x_industry, b.time_x_industry), (a.firm_fe, b.firm_fe)] {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
        }
    }

    #[test]
    fn single_period_fama_macbeth_is_ols(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(6..80usize);
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.4 * v + rng.sample::<f64, _>(StandardNormal)).collect();
        let res = fama_macbeth(&[CrossSection { period: "M1".into(), y: y.clone(), x: vec![x.clone()] }], &["x"], 3).unwrap();
        let b = svd_ols(&DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] }), &y);
        prop_assert!((res.mean[0] - b[0]).abs() < 1e-10 && (res.mean[1] - b[1]).abs() < 1e-10);
    }
}

fn market_and_firm(seed: u64, pre_scale: f64, post_scale: f64) -> (DailySeries, DailySeries, NaiveDate) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2021, 12, 31).unwrap());
    let anchor = 300;
    let m: Vec<f64> = (0..dates.len()).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
    let noise: Vec<f64> = (0..dates.len()).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
    let in_post = |p: usize| (anchor as i64 + POST_WINDOW.0..=anchor as i64 + POST_WINDOW.1).contains(&(p as i64));
    let in_pre = |p: usize| (anchor as i64 + PRE_WINDOW.0..=anchor as i64 + PRE_WINDOW.1).contains(&(p as i64));
    let firm: Vec<f64> = (0..dates.len())
        .map(|p| {
            let s = if in_post(p) { post_scale } else if in_pre(p) { pre_scale } else { 1.0 };
            0.0002 + 0.9 * m[p] + s * noise[p]
        })
        .collect();
    let market = DailySeries::new(dates.iter().copied().zip(m).collect()).unwrap();
    let firm = DailySeries::new(dates.iter().copied().zip(firm).collect()).unwrap();
    (firm, market, dates[anchor])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn common_residual_scale_leaves_abnormal_vol(seed in any::<u64>(), c in 0.1f64..10.0) {
        let (f1, m, d) = market_and_firm(seed, 1.0, 1.0);
        let (fc, _, _) = market_and_firm(seed, c, c);
        let a = abnormal_volatility(&f1, &m, d).unwrap();
        let b = abnormal_volatility(&fc, &m, d).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        let r1 = market_model_rmse(&f1, &m, d, POST_WINDOW, 10).unwrap();
        let rc = market_model_rmse(&fc, &m, d, POST_WINDOW, 10).unwrap();
        prop_assert!((rc - c * r1).abs() < 1e-12 * c.max(1.0));
        prop_assert!(a >= -1.0);
    }
}

#[test]
fn dense_post_window_has_23_positions() {
    let (f, m, d) = market_and_firm(3, 1.0, 1.0);
    assert!(market_model_rmse(&f, &m, d, POST_WINDOW, 23).is_ok());
    assert!(market_model_rmse(&f, &m, d, POST_WINDOW, 24).is_err());
}

#[test]
fn gateway_cache_replays_without_provider() {
    let dir = tempfile::tempdir().unwrap();
    let t = transcript(11);
    let chunks = chunk_transcript(&t, ChunkParams::default());
    let spec = PromptSpec::default_for(RiskType::Climate, Mode::Assessment);

    let first = StubProvider::new(fixture_stub_rules());
    let cache = CompletionCache::open(dir.path()).unwrap();
    let a = Gateway::new(&first, &cache, "m").generate_risk_document(&chunks, &spec).unwrap();
    assert_eq!(first.calls(), chunks.len());

    let second = StubProvider::new(Vec::new());
    let reopened = CompletionCache::open(dir.path()).unwrap();
    let b = Gateway::new(&second, &reopened, "m").with_parallelism(3).generate_risk_document(&chunks, &spec).unwrap();
    assert_eq!(second.calls(), 0);
    assert_eq!(a, b);
}

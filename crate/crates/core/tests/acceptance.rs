//! Acceptance suite. Prints one line per criterion (sub-checks get their own
//! line) and exits nonzero if any check fails that is not listed in
//! `KNOWN_RED`.
//!
//! Set `BIFF_ACCEPTANCE_QUICK=1` to skip the long runs; skipped checks are
//! reported as `SKIP`.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use biff_core::analysis::{cells_for_pairs, poisson_interval};
use biff_core::experiment::{self, ExperimentConfig, ExperimentKind, ExperimentReport};
use biff_core::{
    corrupt_uniform, decode, decode_erasures, deserialize_patch, encode, serialize_patch, threshold, ChecksumFlavor,
    CodecParams, HashConfig, IbltTable, KeyLayout, PairKey, Patch, TimingMode,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Checks expected to fail, with the reason.
const KNOWN_RED: &[(&str, &str)] =
    &[("1/k=7", "the reference value 1.721 violates the defining inequality; the supremum is 1.7189")];

struct Suite {
    quick: bool,
    failed: Vec<String>,
    passed: usize,
    skipped: usize,
}

impl Suite {
    fn report(&mut self, id: &str, ok: bool, detail: String) {
        println!("[{}] {id:<14} {detail}", if ok { "PASS" } else { "FAIL" });
        std::io::stdout().flush().ok();
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }

    fn skip(&mut self, id: &str) {
        println!("[SKIP] {id:<14} quick mode");
        self.skipped += 1;
    }
}

fn run(cfg: &ExperimentConfig) -> ExperimentReport {
    experiment::run(cfg).expect("experiment config is valid")
}

fn config(kind: ExperimentKind, cells: usize, trials: usize, base_seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::standard(kind);
    cfg.cells = cells;
    cfg.trials = trials;
    cfg.base_seed = base_seed;
    cfg
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- 1

fn table_one(s: &mut Suite) {
    let published = [(3, 1.222), (4, 1.295), (5, 1.425), (6, 1.570), (7, 1.721)];
    let start = Instant::now();
    let computed: Vec<f64> = published.iter().map(|&(k, _)| threshold(k).unwrap().c_k).collect();
    let elapsed = start.elapsed();
    for (&(k, want), got) in published.iter().zip(computed) {
        let ok = (got - want).abs() <= 0.0005;
        s.report(&format!("1/k={k}"), ok, format!("c_k = {got:.5}, reference {want:.3} +- 0.0005"));
    }
    s.report("1/runtime", elapsed < Duration::from_secs(10), format!("{} for k = 3..7 (limit 10s)", secs(elapsed)));
}

// ---------------------------------------------------------------- 2

fn threshold_experiment(s: &mut Suite) -> Option<ExperimentReport> {
    let start = Instant::now();
    let low = run(&config(ExperimentKind::Threshold, 26_000, 1000, 1_000_000));
    let rate = low.summary.recovery_rate;
    s.report(
        "2/m=26000",
        (0.75..=0.86).contains(&rate),
        format!("{}/1000 recovered = {rate:.3}, want [0.75, 0.86] ({})", low.summary.recovered, secs(start.elapsed())),
    );

    let start = Instant::now();
    let high = run(&config(ExperimentKind::Threshold, 26_500, 1000, 2_000_000));
    let rate = high.summary.recovery_rate;
    s.report(
        "2/m=26500",
        rate >= 0.995,
        format!("{}/1000 recovered = {rate:.3}, want >= 0.995 ({})", high.summary.recovered, secs(start.elapsed())),
    );
    Some(low)
}

// ---------------------------------------------------------------- 3, 4

fn failure_model(s: &mut Suite) {
    let mut failed_rows = Vec::new();

    if s.quick {
        s.skip("3/k=4");
        s.skip("3/k=5");
    } else {
        let start = Instant::now();
        let report = run(&config(ExperimentKind::Failure, 30_000, 10_000, 3_000_000));
        let sum = &report.summary;
        let (lo, hi) = poisson_interval(16.0, 0.99);
        s.report(
            "3/k=4",
            (lo..=hi).contains(&(sum.failures as u64)),
            format!(
                "{} failures in 10^4 trials, want [{lo}, {hi}] (lambda {:.2}) ({})",
                sum.failures,
                sum.expected_failures,
                secs(start.elapsed())
            ),
        );
        failed_rows.extend(report.rows.into_iter().filter(|r| !r.recovered));

        let start = Instant::now();
        let mut cfg = config(ExperimentKind::Failure, 30_000, 10_000, 4_000_000);
        cfg.k = 5;
        let report = run(&cfg);
        let sum = &report.summary;
        s.report(
            "3/k=5",
            sum.failures <= 3,
            format!(
                "{} failures in 10^4 trials, want <= 3 (lambda {:.2}) ({})",
                sum.failures,
                sum.expected_failures,
                secs(start.elapsed())
            ),
        );
        failed_rows.extend(report.rows.into_iter().filter(|r| !r.recovered));
    }

    let start = Instant::now();
    let report = run(&config(ExperimentKind::Failure, 30_000, 1000, 5_000_000));
    let sum = &report.summary;
    s.report(
        "3/scaled",
        sum.failures <= 6,
        format!(
            "{} failures in 10^3 trials, want [0, 6] (lambda {:.2}) ({})",
            sum.failures,
            sum.expected_failures,
            secs(start.elapsed())
        ),
    );
    failed_rows.extend(report.rows.into_iter().filter(|r| !r.recovered));

    let single = failed_rows.iter().filter(|r| r.unrecovered_symbols == 1).count();
    let total = failed_rows.len();
    if s.quick && total == 0 {
        s.skip("4/anatomy");
        return;
    }
    let share = if total == 0 { 1.0 } else { single as f64 / total as f64 };
    s.report(
        "4/anatomy",
        total > 0 && share >= 0.8,
        format!("{single}/{total} failures left exactly one wrong symbol = {share:.2}, want >= 0.80"),
    );
}

// ---------------------------------------------------------------- 5

fn timing(s: &mut Suite) {
    let mut cfg = config(ExperimentKind::Timing, 30_000, 20, 7_000_000);
    cfg.timing_mode = TimingMode::SyntheticIndex;
    cfg.single_thread = true;
    let report = run(&cfg);
    let stage1 = report.summary.stage1.unwrap();
    let stage2 = report.summary.stage2.unwrap();
    let slowest = report.rows.iter().map(|r| r.stage1_ms.max(r.stage2_ms)).fold(0.0, f64::max);
    s.report(
        "5/wall-clock",
        slowest <= 1000.0,
        format!(
            "stage 1 mean {:.2} ms, stage 2 mean {:.2} ms, slowest stage {slowest:.2} ms (limit 1000 ms)",
            stage1.mean_ms, stage2.mean_ms
        ),
    );
    let ratio = stage2.mean_ms / stage1.mean_ms;
    s.report("5/ratio", ratio <= 0.25, format!("stage 2 / stage 1 = {ratio:.3} over 20 trials, want <= 0.25"));
}

// ---------------------------------------------------------------- 6

fn random_pair(rng: &mut impl Rng) -> PairKey {
    PairKey::new(rng.random_range(0..(1 << 16) - 1), rng.random_range(0..1 << 16))
}

fn small_table(seed: u64, cells: usize) -> IbltTable {
    let cfg = HashConfig::new(seed, 4, cells / 4, 32).unwrap();
    IbltTable::new(cfg, KeyLayout::new(16, 16).unwrap(), ChecksumFlavor::Hash, true)
}

fn random_message(rng: &mut impl Rng, n: usize, w: u32) -> Vec<u64> {
    (0..n).map(|_| rng.random::<u64>() & ((1u64 << w) - 1)).collect()
}

fn properties(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(6_000_000);

    let cancels = (0..500).all(|t| {
        let mut table = small_table(t, 64);
        let pairs: Vec<PairKey> = (0..rng.random_range(0..300)).map(|_| random_pair(&mut rng)).collect();
        let mut ops: Vec<(PairKey, bool)> = pairs.iter().flat_map(|&p| [(p, true), (p, false)]).collect();
        ops.shuffle(&mut rng);
        for (p, ins) in ops {
            if ins {
                table.insert(p).unwrap();
            } else {
                table.delete(p).unwrap();
            }
        }
        table.is_clear()
    });
    s.report("6/cancellation", cancels, "500 shuffled balanced insert/delete sequences clear the table".into());

    let order_free = (0..500).all(|t| {
        let mut ops: Vec<(PairKey, bool)> =
            (0..rng.random_range(1..200)).map(|_| (random_pair(&mut rng), rng.random())).collect();
        let apply = |ops: &[(PairKey, bool)]| {
            let mut table = small_table(t, 64);
            for &(p, ins) in ops {
                if ins {
                    table.insert(p).unwrap();
                } else {
                    table.delete(p).unwrap();
                }
            }
            table
        };
        let a = apply(&ops);
        ops.shuffle(&mut rng);
        a == apply(&ops)
    });
    s.report("6/order", order_free, "500 permuted operation sequences give identical tables".into());

    let identity = (0..500).all(|t| {
        let n = rng.random_range(0..500);
        let w = rng.random_range(1..=32);
        let params = CodecParams::new(n as u64, w, rng.random_range(2..=6), rng.random_range(1..200)).with_seed(t);
        let message = random_message(&mut rng, n, w);
        let patch = encode(&message, &params).unwrap();
        let (out, report) = decode(&message, &patch, &params).unwrap();
        report.success && report.corrections.is_empty() && out == message
    });
    s.report("6/round-trip", identity, "500 fuzzed clean channels decode to the input".into());

    let mut miscorrections = 0;
    let mut corrections = 0;
    for t in 0..10_000u64 {
        let n = rng.random_range(1..400);
        let w = rng.random_range(1..=24);
        let errors = rng.random_range(0..=n.min(40));
        let params = CodecParams::new(n as u64, w, 4, rng.random_range(4..=8 * errors + 8)).with_seed(t);
        let message = random_message(&mut rng, n, w);
        let patch = encode(&message, &params).unwrap();
        let (received, positions) = corrupt_uniform(&message, w, errors, &mut rng).unwrap();
        let corrupted: HashSet<usize> = positions.into_iter().collect();
        let (_, report) = decode(&received, &patch, &params).unwrap();
        corrections += report.corrections.len();
        miscorrections += report
            .corrections
            .iter()
            .filter(|c| !corrupted.contains(&(c.position as usize)) || c.new != message[c.position as usize])
            .count();
    }
    s.report(
        "6/soundness",
        miscorrections == 0,
        format!("{miscorrections} mis-corrections among {corrections} corrections in 10^4 fuzzed trials (b = 32)"),
    );

    let exact = (0..500).all(|t| {
        let n = rng.random_range(0..200);
        let w = rng.random_range(1..=40);
        let flavor = if rng.random() { ChecksumFlavor::Poly } else { ChecksumFlavor::Hash };
        let params = CodecParams::new(n as u64, w, 4, 40)
            .with_seed(t)
            .with_checksum(flavor, rng.random_range(8..=64))
            .with_counting(rng.random());
        let message = random_message(&mut rng, n, w.min(63));
        let patch = Patch::new(params, encode(&message, &params).unwrap()).with_byte_len(rng.random());
        let bytes = serialize_patch(&patch).unwrap();
        deserialize_patch(&bytes).map(|back| back == patch && serialize_patch(&back).unwrap() == bytes) == Ok(true)
    });
    s.report("6/serialization", exact, "500 fuzzed patches round-trip bit-exactly".into());

    let mut successes = 0;
    let mut mismatches = 0;
    for t in 0..5000 {
        let n = rng.random_range(1..=64);
        let w = rng.random_range(1..=12);
        let params = CodecParams::new(n as u64, w, 3, rng.random_range(3..=64)).with_seed(t);
        let message = random_message(&mut rng, n, w);
        let patch = encode(&message, &params).unwrap();
        let (received, _) = corrupt_uniform(&message, w, rng.random_range(0..=n.min(8)), &mut rng).unwrap();
        let (out, report) = decode(&received, &patch, &params).unwrap();
        if report.success {
            successes += 1;
            mismatches += usize::from(out != message);
        }
    }
    s.report(
        "6/oracle",
        mismatches == 0,
        format!("{mismatches} wrong outputs among {successes} successful decodes, n <= 64"),
    );
}

// ---------------------------------------------------------------- 7

fn erasures(s: &mut Suite) {
    let n = 1_000_000usize;
    let erased = 1000;
    let cells = cells_for_pairs(erased as u64, 4, 1.35);
    let start = Instant::now();
    let mut filled = 0;
    for t in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8_000_000 + t);
        let message = random_message(&mut rng, n, 20);
        let params = CodecParams::new(n as u64, 20, 4, cells).with_seed(rng.random());
        let patch = encode(&message, &params).unwrap();
        let mut received: Vec<Option<u64>> = message.iter().copied().map(Some).collect();
        for i in rand::seq::index::sample(&mut rng, n, erased) {
            received[i] = None;
        }
        let (restored, report) = decode_erasures(&received, &patch, &params).unwrap();
        if report.success && restored.iter().zip(&message).all(|(r, &m)| *r == Some(m)) {
            filled += 1;
        }
    }
    let rate = filled as f64 / 1000.0;
    s.report(
        "7/erasures",
        rate >= 0.99,
        format!("{filled}/1000 fully filled with m = {cells} = {rate:.3}, want >= 0.99 ({})", secs(start.elapsed())),
    );
}

// ---------------------------------------------------------------- 8

fn burst(s: &mut Suite, uniform: &ExperimentReport) {
    let start = Instant::now();
    let bursty = run(&config(ExperimentKind::Burst, 26_000, 1000, 9_000_000));
    let (xu, xb) = (uniform.summary.recovered as f64, bursty.summary.recovered as f64);
    let (nu, nb) = (uniform.summary.trials as f64, bursty.summary.trials as f64);
    let pooled = (xu + xb) / (nu + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / nu + 1.0 / nb)).sqrt();
    let z = if se == 0.0 { 0.0 } else { (xu / nu - xb / nb) / se };
    // One-sided: bursts are rejected only if significantly worse at 0.01.
    s.report(
        "8/burst",
        z <= 2.326,
        format!(
            "burst {:.3} vs uniform {:.3} at m = 26000, z = {z:.2}, reject above 2.326 ({})",
            xb / nb,
            xu / nu,
            secs(start.elapsed())
        ),
    );
}

fn main() {
    let quick = std::env::var_os("BIFF_ACCEPTANCE_QUICK").is_some_and(|v| v != "0");
    let mut s = Suite { quick, failed: Vec::new(), passed: 0, skipped: 0 };
    let start = Instant::now();

    table_one(&mut s);
    let uniform = if quick {
        s.skip("2/m=26000");
        s.skip("2/m=26500");
        None
    } else {
        threshold_experiment(&mut s)
    };
    failure_model(&mut s);
    timing(&mut s);
    properties(&mut s);
    if quick {
        s.skip("7/erasures");
        s.skip("8/burst");
    } else {
        erasures(&mut s);
        burst(&mut s, uniform.as_ref().unwrap());
    }

    println!("\n{} passed, {} failed, {} skipped in {}", s.passed, s.failed.len(), s.skipped, secs(start.elapsed()));
    let mut unexpected = Vec::new();
    for id in &s.failed {
        match KNOWN_RED.iter().find(|(k, _)| k == id) {
            Some((_, why)) => println!("known red: {id}: {why}"),
            None => unexpected.push(id.clone()),
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

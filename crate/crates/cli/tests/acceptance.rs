//! End-to-end acceptance checks. All criteria run sequentially inside one
//! test so the timing budgets are not disturbed by sibling tests, and each
//! prints a single PASS/FAIL line.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nn3d::denoiser::{ExternalDenoiser, Identity};
use nn3d::framework::ScheduleMode;
use nn3d::haar::{haar_forward, haar_inverse};
use nn3d::nlf::shrink;
use nn3d::{
    add_awgn, apply_nlf, build_group_table, level_match, run, ConfigFile, Denoiser, MatchConfig,
    NoiseSpec, Plane, RunConfig, SigmaGrid,
};
use nn3d_cli::bench::{run_bench, BenchOptions, Dataset, Method};
use nn3d_cli::fixtures::{fixtures, FixtureKind};
use oracles::{bm_oracle, haar_matrix, mat_vec, nlf_reference, test_image};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < budget, || format!("took {t:?}, budget {budget:?}"))
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn identity_config(sigma: f64) -> RunConfig {
    let mut cfg = RunConfig::new(sigma);
    cfg.mode = ScheduleMode::Lab;
    cfg.taus = vec![0.0, 0.0];
    cfg
}

/// Noisy planes whose samples are exactly representable as f32, so they
/// survive the plane-file boundary untouched.
fn f32_inputs() -> Vec<Plane> {
    let mut v: Vec<Plane> = fixtures()
        .into_iter()
        .filter(|f| f.name.ends_with("_p8") || f.name == "random_texture_a")
        .map(|f| add_awgn(&f.plane, NoiseSpec::new(30.0, 11).unwrap()).map(|x| x as f32 as f64))
        .collect();
    v.push(test_image(256, 256, 256, 0).map(|x| x as f32 as f64));
    v
}

fn c1_identity_fixed_point() -> Outcome {
    let mut inputs = f32_inputs();
    inputs.push(test_image(7, 50, 61, 0));
    let mut worst: f64 = 0.0;
    for z in &inputs {
        let start = Instant::now();
        let (out, _) =
            run(z, &identity_config(30.0), &Identity::new()).map_err(|e| e.to_string())?;
        if z.width() == 256 && z.height() == 256 {
            within(start, Duration::from_secs(1))?;
        }
        let d = out.max_abs_diff(z).unwrap();
        worst = worst.max(d);
        check(d <= 1e-10, || format!("max abs diff {d:e}"))?;
    }
    Ok(format!("{} images, max abs diff {worst:e}", inputs.len()))
}

fn c2_shrinkage_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100_000 {
        let q: f64 = rng.random_range(-1000.0..1000.0);
        let tau: f64 = if rng.random_bool(0.05) {
            0.0
        } else {
            rng.random_range(0.0..200.0)
        };
        let closed = if tau == 0.0 {
            q
        } else {
            q * (q * q / (q * q + tau * tau))
        };
        let s = shrink(q, tau);
        check(s == closed, || {
            format!("shrink({q}, {tau}) = {s}, closed form {closed}")
        })?;
        check(s.abs() <= q.abs(), || format!("|shrink({q}, {tau})| > |q|"))?;
        check(shrink(-q, tau) == -s, || {
            format!("shrink not odd at ({q}, {tau})")
        })?;
        let q2: f64 = rng.random_range(-1000.0..1000.0);
        let (lo, hi) = if q < q2 { (q, q2) } else { (q2, q) };
        check(shrink(lo, tau) <= shrink(hi, tau), || {
            format!("not monotone between {lo} and {hi} at tau {tau}")
        })?;
    }
    check(shrink(0.0, 0.0) == 0.0 && shrink(0.0, 5.0) == 0.0, || {
        "shrink(0) != 0".into()
    })?;
    within(start, Duration::from_secs(1))?;
    Ok("100000 pairs".into())
}

fn c3_haar() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_rt, mut worst_pv, mut worst_m): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for n in [1usize, 2, 4, 8, 16, 32] {
        let m = haar_matrix(n);
        for i in 0..10_000 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-255.0..255.0)).collect();
            let s = haar_forward(&v).map_err(|e| e.to_string())?;
            let back = haar_inverse(&s).map_err(|e| e.to_string())?;
            let rt = v
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let e_in: f64 = v.iter().map(|x| x * x).sum();
            let e_out: f64 = s.coeffs().iter().map(|x| x * x).sum();
            let pv = (e_in - e_out).abs() / e_in.max(f64::MIN_POSITIVE);
            worst_rt = worst_rt.max(rt);
            worst_pv = worst_pv.max(pv);
            check(rt <= 1e-10, || format!("n={n}: round trip error {rt:e}"))?;
            check(pv <= 1e-9, || format!("n={n}: Parseval error {pv:e}"))?;
            if n == 32 || i < 100 {
                let expected = mat_vec(&m, &v);
                let d = expected
                    .iter()
                    .zip(s.coeffs())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst_m = worst_m.max(d);
                check(d <= 1e-9, || format!("n={n}: matrix oracle error {d:e}"))?;
            }
        }
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "round trip {worst_rt:e}, Parseval {worst_pv:e}, matrix {worst_m:e}"
    ))
}

fn c4_bm_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = MatchConfig::default();
    let mut groups = 0;
    for seed in 0..20u64 {
        let w = 32 + (seed as usize * 7) % 33;
        let h = 64 - (seed as usize * 5) % 33;
        // every other image is quantized to a few levels to force ties
        let levels = if seed % 2 == 0 {
            0
        } else {
            2 + seed as usize % 4
        };
        let p = test_image(1000 + seed, w, h, levels);
        let table = build_group_table(&p, &cfg).map_err(|e| e.to_string())?;
        let expected = bm_oracle(&p, &cfg);
        check(table.groups() == expected.as_slice(), || {
            format!("seed {seed} ({w}x{h}): table differs from oracle")
        })?;
        check(table.coverage_mask().iter().all(|&b| b), || {
            format!("seed {seed}: coverage mask has holes")
        })?;
        groups += expected.len();
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("20 images, {groups} groups identical"))
}

fn c5_nlf_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in [21u64, 22, 23] {
        let p = test_image(seed, 64, 64, 0);
        let table = build_group_table(&p, &MatchConfig::default()).map_err(|e| e.to_string())?;
        let tau = 7.5;
        let expected = nlf_reference(&p, table.groups(), table.n1(), tau);
        let mut first: Option<Plane> = None;
        for threads in [1, 4, 8] {
            let out = pool(threads)
                .install(|| apply_nlf(&p, &table, tau))
                .map_err(|e| e.to_string())?;
            let d = out.max_abs_diff(&expected).unwrap();
            worst = worst.max(d);
            check(d <= 1e-9, || {
                format!("seed {seed}, {threads} threads: {d:e}")
            })?;
            match &first {
                None => first = Some(out),
                Some(f) => check(&out == f, || {
                    format!("seed {seed}: output changes with {threads} threads")
                })?,
            }
        }
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("threads 1/4/8, max abs diff {worst:e}"))
}

fn c6_level_match() -> Outcome {
    let dncnn = SigmaGrid::discrete((1..=15).map(|i| 5.0 * i as f64).collect()).unwrap();
    let wd = SigmaGrid::discrete(vec![15.0, 30.0, 50.0]).unwrap();
    let cases = [
        (level_match(&dncnn, 37.5), (35.0, 35.0 / 37.5)),
        (level_match(&wd, 75.0), (50.0, 50.0 / 75.0)),
        (level_match(&wd, 10.0), (15.0, 1.5)),
    ];
    for (got, want) in cases {
        check(got == want, || format!("got {got:?}, want {want:?}"))?;
    }
    Ok("3 examples exact".into())
}

fn dataset(name: &str, keep: impl Fn(FixtureKind) -> bool) -> Dataset {
    Dataset {
        name: name.into(),
        images: fixtures()
            .into_iter()
            .filter(|f| keep(f.kind))
            .map(|f| (format!("{}.pgm", f.name), f.plane))
            .collect(),
    }
}

fn bench(
    data: &Dataset,
    sigmas: &[f64],
    methods: &[Method],
    config: ConfigFile,
) -> nn3d_cli::bench::BenchReport {
    let dct8 = nn3d::denoiser::Dct8::default();
    run_bench(
        data,
        &BenchOptions {
            sigmas: sigmas.to_vec(),
            seed: 2024,
            methods: methods.to_vec(),
            config,
        },
        &dct8,
    )
    .unwrap()
}

fn c7_nonlocality_gain() -> Outcome {
    let start = Instant::now();
    let all = dataset("fixtures", |_| true);
    let methods = [Method::CnnfOnly, Method::Nn3d];
    let mut summary = Vec::new();
    let sims: Vec<String> = dataset("s", FixtureKind::is_self_similar)
        .images
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let report = bench(&all, &[25.0, 50.0], &methods, ConfigFile::default());
    for sigma in [25.0, 50.0] {
        let mean = |method: Method, only_similar: bool| {
            let v: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.sigma == sigma && r.method == method)
                .filter(|r| !only_similar || sims.contains(&r.image))
                .map(|r| r.psnr)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (sim_local, sim_nn3d) = (mean(Method::CnnfOnly, true), mean(Method::Nn3d, true));
        let (all_local, all_nn3d) = (mean(Method::CnnfOnly, false), mean(Method::Nn3d, false));
        check(sim_nn3d > sim_local, || {
            format!("sigma {sigma}: self-similar nn3d {sim_nn3d:.3} <= dct8 {sim_local:.3}")
        })?;
        check(all_nn3d >= all_local - 0.05, || {
            format!("sigma {sigma}: all fixtures nn3d {all_nn3d:.3} < dct8 {all_local:.3} - 0.05")
        })?;
        summary.push(format!(
            "sigma {sigma}: self-similar {sim_local:.2} -> {sim_nn3d:.2} dB, all {all_local:.2} -> {all_nn3d:.2} dB"
        ));
    }
    within(start, Duration::from_secs(120))?;
    Ok(summary.join("; "))
}

// Known failure, margin about 0.03 dB. On the square-wave stripes a clean
// pilot gives exact distance ties, and the raster tie-break then packs
// every group into the top rows of its window. Matching on the clean image
// itself loses to the noisy input there as well. The sine stripes go the
// other way, but not by enough to flip the mean.
fn c8_pilot_direction() -> Outcome {
    let stripes = dataset("stripes", |k| k == FixtureKind::Stripe);
    let run_with = |pilot: &str| {
        let cfg = ConfigFile {
            bm_pilot: Some(pilot.into()),
            ..Default::default()
        };
        bench(&stripes, &[75.0], &[Method::Nn3d], cfg)
            .mean_psnr(75.0, Method::Nn3d)
            .unwrap()
    };
    let from_local = run_with("first_cnnf_output");
    let from_noisy = run_with("noisy_input");
    check(from_local >= from_noisy, || {
        format!("first_cnnf_output {from_local:.3} < noisy_input {from_noisy:.3}")
    })?;
    Ok(format!(
        "first_cnnf_output {from_local:.2} dB, noisy_input {from_noisy:.2} dB"
    ))
}

fn c9_performance() -> Outcome {
    let clean = test_image(9, 256, 256, 0).map(|v| v.clamp(0.0, 255.0));
    let sigma = 25.0;
    let z = add_awgn(&clean, NoiseSpec::new(sigma, 99).unwrap());
    let cfg = MatchConfig::default();
    let single = pool(1);
    let (bm, nlf) = single.install(|| {
        let t = Instant::now();
        let table = build_group_table(&z, &cfg).unwrap();
        let bm = t.elapsed().as_secs_f64();
        let t = Instant::now();
        apply_nlf(&z, &table, sigma / 4.0).unwrap();
        (bm, t.elapsed().as_secs_f64())
    });
    check(bm <= 1.0, || format!("block matching took {bm:.3} s"))?;
    check(nlf <= 1.0, || format!("nonlocal filter took {nlf:.3} s"))?;

    // the harness reports the same stages in its timing CSV
    let data = Dataset {
        name: "perf".into(),
        images: vec![("perf_256.pgm".into(), clean)],
    };
    let report =
        single.install(|| bench(&data, &[sigma], &[Method::NlfOnly], ConfigFile::default()));
    let csv = report.timings_csv();
    let header: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    let col = |name: &str| -> f64 {
        let i = header.iter().position(|h| *h == name).unwrap();
        row[i].parse().unwrap()
    };
    let (csv_bm, csv_nlf) = (col("bm_s"), col("nlf_s"));
    check(csv_bm > 0.0 && csv_nlf > 0.0, || {
        "timing columns not populated".into()
    })?;
    check(csv_bm <= 1.0 && csv_nlf <= 1.0, || {
        format!("harness recorded bm {csv_bm:.3} s, nlf {csv_nlf:.3} s")
    })?;
    Ok(format!(
        "1 thread, 256x256: bm {bm:.3} s, nlf {nlf:.3} s (harness csv: {csv_bm:.3} s, {csv_nlf:.3} s)"
    ))
}

fn c10_external_protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ext = ExternalDenoiser::new(
        "identity-subprocess",
        SigmaGrid::Continuous { lo: 0.0, hi: 255.0 },
        "sh",
        vec!["-c".into(), r#"cp "$1" "$2""#.into(), "sh".into()],
        dir.path(),
    );
    let inputs = f32_inputs();
    for z in &inputs {
        let cfg = identity_config(30.0);
        let (expected, _) = run(z, &cfg, &Identity::new()).map_err(|e| e.to_string())?;
        let (out, trace) = run(z, &cfg, &ext as &dyn Denoiser).map_err(|e| e.to_string())?;
        check(trace.records.iter().all(|r| r.alpha == 1.0), || {
            "unexpected scaling".into()
        })?;
        check(out == expected, || {
            format!(
                "{}x{}: differs by {:e}",
                z.width(),
                z.height(),
                out.max_abs_diff(&expected).unwrap()
            )
        })?;
    }
    Ok(format!("{} images bit-exact", inputs.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("identity fixed point", c1_identity_fixed_point),
        ("shrinkage algebra", c2_shrinkage_algebra),
        ("haar correctness", c3_haar),
        ("block matching oracle", c4_bm_oracle),
        ("nonlocal filter oracle", c5_nlf_oracle),
        ("level matching", c6_level_match),
        ("nonlocality gain", c7_nonlocality_gain),
        ("pilot sensitivity direction", c8_pilot_direction),
        ("performance envelope", c9_performance),
        ("external protocol", c10_external_protocol),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        let secs = start.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!(
                "acceptance {:>2} PASS  {name} [{secs:.2} s] {detail}\n",
                i + 1
            ),
            Err(why) => {
                failed.push(i + 1);
                format!("acceptance {:>2} FAIL  {name} [{secs:.2} s] {why}\n", i + 1)
            }
        };
        // bypass the harness's output capture so the lines always show
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

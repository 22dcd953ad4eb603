//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any failure.
//!
//! Run a subset by passing criterion numbers: `cargo test --test acceptance -- 1 7`.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tower::ServiceExt;

use ctprev::mask::{apply_circle_mask, artifact_bins, detect_container_circle};
use ctprev::phantom::{presets, Container, Intensity, PhantomSpec, Shape};
use ctprev::pipeline::{
    build_data_preview, BuildLog, BundleStore, PipelineConfig, PreviewSet, META_FILE,
    THUMBNAIL_FILE,
};
use ctprev::render::{image_entropy, optimal_snapshot, render_view, ViewParams};
use ctprev::slicemap::{decode_slicemaps, encode_slicemaps, plan_scheme, SlicemapSet, SCHEMES};
use ctprev::threshold::{apply_threshold, its_threshold, otsu_excluding_zero, otsu_threshold};
use ctprev::volume::{downscale_volume, volume_histogram};
use ctprev::{DatasetMeta, Error, Histogram256, Volume};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Between-class criterion `W_a * W_b * (U_a - U_b)^2` in exact rationals; 0 when a region is empty.
fn between_class(bins: &[u64; 256], t: usize) -> BigRational {
    let total: u64 = bins.iter().sum();
    let (mut n_a, mut s_a, mut n_b, mut s_b) = (0u64, 0u64, 0u64, 0u64);
    for (i, &c) in bins.iter().enumerate() {
        if i < t {
            n_a += c;
            s_a += c * i as u64;
        } else {
            n_b += c;
            s_b += c * i as u64;
        }
    }
    if n_a == 0 || n_b == 0 {
        return BigRational::zero();
    }
    let diff = ratio(s_a, n_a) - ratio(s_b, n_b);
    ratio(n_a, total) * ratio(n_b, total) * &diff * &diff
}

/// Within-class sum `w0 * var0 + w1 * var1`; an empty region contributes 0.
fn within_class(bins: &[u64; 256], t: usize) -> BigRational {
    let total: u64 = bins.iter().sum();
    let part = |range: std::ops::Range<usize>| {
        let n: u64 = bins[range.clone()].iter().sum();
        if n == 0 {
            return BigRational::zero();
        }
        let s: u64 = range.clone().map(|i| bins[i] * i as u64).sum();
        let q: u64 = range.map(|i| bins[i] * (i * i) as u64).sum();
        let mean = ratio(s, n);
        let var = ratio(q, n) - &mean * &mean;
        ratio(n, total) * var
    };
    part(0..t) + part(t..256)
}

/// Smallest maximizer of the between-class criterion and smallest minimizer of the within-class
/// sum; `None` if the criterion is zero everywhere.
fn oracle_otsu(bins: &[u64; 256]) -> (Option<u8>, u8) {
    let mut best_b = BigRational::zero();
    let mut arg_b = None;
    let mut best_w = within_class(bins, 0);
    let mut arg_w = 0u8;
    for t in 0..256 {
        let b = between_class(bins, t);
        if b > best_b {
            best_b = b;
            arg_b = Some(t as u8);
        }
        let w = within_class(bins, t);
        if w < best_w {
            best_w = w;
            arg_w = t as u8;
        }
    }
    (arg_b, arg_w)
}

fn random_histogram(rng: &mut ChaCha8Rng) -> [u64; 256] {
    let mut bins = [0u64; 256];
    match rng.random_range(0..4) {
        0 => {
            for b in bins.iter_mut() {
                *b = rng.random_range(0..1000);
            }
        }
        1 => {
            for _ in 0..rng.random_range(2..6) {
                bins[rng.random_range(0..256)] += rng.random_range(1..100_000);
            }
        }
        2 => {
            let modes = rng.random_range(1..4);
            for _ in 0..modes {
                let mean = rng.random_range(10.0..245.0);
                let sigma = rng.random_range(2.0..40.0);
                let normal = Normal::new(mean, sigma).unwrap();
                for _ in 0..rng.random_range(100..5000) {
                    let x: f64 = normal.sample(rng);
                    if (0.0..=255.0).contains(&x.round()) {
                        bins[x.round() as usize] += 1;
                    }
                }
            }
        }
        _ => {
            for b in bins.iter_mut() {
                if rng.random_bool(0.1) {
                    *b = rng.random_range(1..1_000_000_000);
                }
            }
        }
    }
    bins
}

fn two_spikes() -> Histogram256 {
    let mut bins = [0u64; 256];
    bins[50] = 100;
    bins[200] = 100;
    Histogram256::from_bins(bins)
}

/// Two Gaussians at 60 and 180 (sigma 10) truncated to [0, 255], 10^5 samples.
fn bimodal_fixture(seed: u64) -> Histogram256 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins = [0u64; 256];
    let modes = [Normal::new(60.0, 10.0).unwrap(), Normal::new(180.0, 10.0).unwrap()];
    let mut n = 0;
    while n < 100_000 {
        let x: f64 = modes[n % 2].sample(&mut rng);
        let v = x.round();
        if (0.0..=255.0).contains(&v) {
            bins[v as usize] += 1;
            n += 1;
        }
    }
    Histogram256::from_bins(bins)
}

fn check_otsu_against_oracle(h: &Histogram256) -> Result<(), String> {
    let (arg_b, arg_w) = oracle_otsu(h.bins());
    match (otsu_threshold(h), arg_b) {
        (Ok(r), Some(t)) => {
            ensure(r.value == t, || format!("otsu {} vs oracle {t}", r.value))?;
            ensure(arg_w == t, || format!("within-class argmin {arg_w} vs between-class argmax {t}"))?;
            ensure(r.iterations == 256, || format!("{} sweep iterations", r.iterations))
        }
        (Err(Error::DegenerateHistogram(_)), None) => Ok(()),
        (got, want) => Err(format!("otsu {got:?} vs oracle {want:?}")),
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut degenerate = 0;
    for k in 0..1000 {
        let bins = random_histogram(&mut rng);
        if bins.iter().all(|&b| b == 0) {
            continue;
        }
        let h = Histogram256::from_bins(bins);
        if bins.iter().filter(|&&b| b > 0).count() == 1 {
            degenerate += 1;
        }
        check_otsu_against_oracle(&h).map_err(|e| format!("histogram {k}: {e}"))?;
    }
    let spikes = two_spikes();
    check_otsu_against_oracle(&spikes).map_err(|e| format!("two-spike: {e}"))?;
    let t = otsu_threshold(&spikes).unwrap().value;
    ensure(t == 51, || format!("two-spike threshold {t}, expected 51"))?;
    let fixture = bimodal_fixture(1);
    check_otsu_against_oracle(&fixture).map_err(|e| format!("bimodal: {e}"))?;
    Ok(format!(
        "1000 random histograms ({degenerate} single-bin) + fixtures match the exact oracle; two-spike T=51, bimodal T={}",
        otsu_threshold(&fixture).unwrap().value
    ))
}

fn criterion_2() -> Outcome {
    let mut worst_dt = 0i32;
    let mut worst_diff = 0.0f64;
    let mut worst_iter = 0;
    for seed in 0..20 {
        let v = presets::bimodal(64, 100 + seed).generate().map_err(|e| e.to_string())?.volume;
        let h = volume_histogram(&v, None).map_err(|e| e.to_string())?;
        let otsu = otsu_threshold(&h).map_err(|e| e.to_string())?;
        let its = its_threshold(&h, 128).map_err(|e| e.to_string())?;
        let dt = (otsu.value as i32 - its.value as i32).abs();
        let diff = apply_threshold(&v, otsu.value).difference_count(&apply_threshold(&v, its.value)) as f64
            / v.len() as f64;
        ensure(dt <= 2, || format!("seed {seed}: otsu {} its {}", otsu.value, its.value))?;
        ensure(diff <= 0.001, || format!("seed {seed}: masks differ on {:.4}%", diff * 100.0))?;
        ensure(its.iterations <= 15, || format!("seed {seed}: ITS took {} iterations", its.iterations))?;
        worst_dt = worst_dt.max(dt);
        worst_diff = worst_diff.max(diff);
        worst_iter = worst_iter.max(its.iterations);
    }
    let fixture = bimodal_fixture(1);
    let (o, i) = (otsu_threshold(&fixture).unwrap(), its_threshold(&fixture, 128).unwrap());
    Ok(format!(
        "20 phantoms: max |dT|={worst_dt}, max mask difference {:.5}%, max ITS iterations {worst_iter} \
         (sampled-histogram fixture with an empty valley: otsu {} its {} in {} iterations)",
        worst_diff * 100.0,
        o.value,
        i.value,
        i.iterations
    ))
}

fn criterion_3() -> Outcome {
    let mut min_ratio = f64::INFINITY;
    let mut fixtures: Vec<Histogram256> = (1..=5).map(bimodal_fixture).collect();
    for seed in 0..5 {
        let v = presets::bimodal(48, 200 + seed).generate().map_err(|e| e.to_string())?.volume;
        fixtures.push(volume_histogram(&v, None).map_err(|e| e.to_string())?);
    }
    for (k, h) in fixtures.iter().enumerate() {
        let o = otsu_threshold(h).map_err(|e| e.to_string())?;
        let i = its_threshold(h, 128).map_err(|e| e.to_string())?;
        ensure(i.region_scans <= 2 * i.iterations, || format!("fixture {k}: region scans exceed 2 per iteration"))?;
        let r = o.region_scans as f64 / i.region_scans as f64;
        ensure(r >= 5.0, || {
            format!("fixture {k}: otsu {} scans vs its {} ({r:.1}x)", o.region_scans, i.region_scans)
        })?;
        let bin_r = o.bin_visits as f64 / i.bin_visits as f64;
        ensure(bin_r >= 5.0, || format!("fixture {k}: bin visits only {bin_r:.1}x fewer"))?;
        min_ratio = min_ratio.min(r);
    }
    Ok(format!("{} bimodal fixtures: ITS uses at least {min_ratio:.1}x fewer region scans", fixtures.len()))
}

fn criterion_4() -> Outcome {
    let p = presets::narrow_histogram(256, 7).generate().map_err(|e| e.to_string())?;
    let v = &p.volume;
    let (lo, hi) = v.voxels().iter().fold((255u8, 0u8), |(l, h), &x| (l.min(x), h.max(x)));
    ensure(lo >= 118 && hi <= 138, || format!("histogram spans [{lo},{hi}]"))?;
    let truth = p.object_mask();
    let h = volume_histogram(v, None).map_err(|e| e.to_string())?;
    let pre_otsu = otsu_threshold(&h).map_err(|e| e.to_string())?.value;
    let pre_its = its_threshold(&h, 128).map_err(|e| e.to_string())?.value;
    let recall_otsu = apply_threshold(v, pre_otsu).recall(&truth);
    let recall_its = apply_threshold(v, pre_its).recall(&truth);
    ensure(recall_otsu < 0.9 && recall_its < 0.9, || {
        format!("pre-mask recall otsu {recall_otsu:.3} (T={pre_otsu}), its {recall_its:.3} (T={pre_its})")
    })?;
    let circle = detect_container_circle(&v.top_slice()).map_err(|e| e.to_string())?;
    let masked = apply_circle_mask(v, &circle.with_margin()).map_err(|e| e.to_string())?;
    let post = otsu_excluding_zero(&masked).map_err(|e| e.to_string())?.value;
    let recall_post = apply_threshold(&masked, post).recall(&truth);
    ensure(recall_post >= 0.99, || format!("post-mask recall {recall_post:.4} at T={post}"))?;
    Ok(format!(
        "pre-mask recall otsu {:.1}% (T={pre_otsu}) / its {:.1}% (T={pre_its}); after container removal {:.2}% (T={post})",
        recall_otsu * 100.0,
        recall_its * 100.0,
        recall_post * 100.0
    ))
}

fn criterion_5() -> Outcome {
    let n = 256usize;
    let nz = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut hits = 0;
    let runs = 50;
    let (mut worst_c, mut worst_r) = (0.0f64, 0.0f64);
    for run in 0..runs {
        let r = rng.random_range(0.2..0.45) * n as f64;
        let margin = r + 4.0;
        let cx = rng.random_range(margin..n as f64 - margin);
        let cy = rng.random_range(margin..n as f64 - margin);
        let p = PhantomSpec::new([n, n, nz], 500 + run)
            .container(Container::new(cx, cy, r, 2.0, Intensity::Uniform { lo: 55, hi: 70 }))
            .object(
                Shape::Cylinder {
                    cx,
                    cy,
                    r: 0.5 * r,
                    z0: 0.0,
                    z1: nz as f64 * 0.5,
                },
                Intensity::Uniform { lo: 150, hi: 210 },
            )
            .salt_pepper(0.005)
            .generate()
            .map_err(|e| e.to_string())?;
        let c = detect_container_circle(&p.volume.top_slice()).map_err(|e| format!("run {run}: {e}"))?;
        let dc = (c.cx - cx).hypot(c.cy - cy);
        let dr = (c.r - r).abs() / r;
        worst_c = worst_c.max(dc);
        worst_r = worst_r.max(dr);
        if dc <= 2.0 && dr <= 0.02 {
            hits += 1;
        }
        let shrunk = c.with_margin();
        let masked = apply_circle_mask(&p.volume, &shrunk).map_err(|e| e.to_string())?;
        let truth = p.object_mask();
        for z in 0..nz {
            for y in 0..n {
                for x in 0..n {
                    let m = masked.get(x, y, z);
                    if !shrunk.contains(x as f64, y as f64) && m != 0 {
                        return Err(format!("run {run}: nonzero voxel outside circle at ({x},{y},{z})"));
                    }
                    if truth.get(x, y, z) && m != p.volume.get(x, y, z) {
                        return Err(format!("run {run}: object voxel ({x},{y},{z}) altered"));
                    }
                }
            }
        }
    }
    let rate = hits as f64 / runs as f64;
    ensure(rate >= 0.95, || {
        format!("{hits}/{runs} within tolerance (worst center {worst_c:.2}px, radius {:.2}%)", worst_r * 100.0)
    })?;
    Ok(format!(
        "{hits}/{runs} runs within 2px / 2% (worst center {worst_c:.2}px, radius {:.2}%); masks exact",
        worst_r * 100.0
    ))
}

fn criterion_6() -> Outcome {
    let p = presets::artifact_band(256, 11).generate().map_err(|e| e.to_string())?;
    let bins = artifact_bins(&p.volume, 3, 0.0005).map_err(|e| e.to_string())?;
    let expected: BTreeSet<u8> = std::iter::once(0).chain(40..=60).collect();
    let got: BTreeSet<u8> = bins.iter().collect();
    ensure(got == expected, || format!("artifact bins {got:?}"))?;
    let data = build_data_preview(&p.volume, &PipelineConfig::default(), &mut BuildLog::default())
        .map_err(|e| e.to_string())?;
    let cube = decode_slicemaps(&data.set).map_err(|e| e.to_string())?;
    let banned = cube.voxels().iter().filter(|&&x| (41..=60).contains(&x)).count();
    ensure(banned == 0, || format!("{banned} filtered voxels valued 41..60"))?;
    let truth = p.object_mask();
    let (mut kept, mut total, mut exact) = (0usize, 0usize, 0usize);
    let mut values = BTreeSet::new();
    for (i, (&orig, &out)) in p.volume.voxels().iter().zip(cube.voxels()).enumerate() {
        if truth.bits()[i] {
            total += 1;
            if out != 0 {
                kept += 1;
                values.insert(out);
            }
            if out == orig {
                exact += 1;
            }
        }
    }
    let retained = kept as f64 / total as f64;
    ensure(retained >= 0.99, || format!("object retention {retained:.4}"))?;
    ensure(exact == total && values.len() > 2, || {
        format!("object values thresholded: {exact}/{total} exact, {} distinct", values.len())
    })?;
    Ok(format!(
        "bins {{0}}+40..60 removed; {:.2}% object voxels retained with {} distinct grey values 120..200",
        retained * 100.0,
        values.len()
    ))
}

fn criterion_7() -> Outcome {
    let expected = [(128, 1024, 8, 64, 2), (256, 2048, 8, 64, 4), (512, 4096, 8, 64, 8)];
    for (s, atlas, grid, per_map, maps) in expected {
        let sc = plan_scheme(s).map_err(|e| e.to_string())?;
        ensure(
            (sc.atlas_dim, sc.grid, sc.per_map, sc.map_count) == (atlas, grid, per_map, maps),
            || format!("plan_scheme({s}) = {sc:?}"),
        )?;
        ensure(sc.payload_bytes() == (maps * atlas * atlas) as u64, || format!("payload law at {s}"))?;
    }
    ensure(matches!(plan_scheme(300), Err(Error::UnsupportedScheme(_))), || "300 accepted".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    for s in SCHEMES {
        let mut voxels = vec![0u8; s * s * s];
        rng.fill(&mut voxels[..]);
        let v = Volume::new([s, s, s], voxels).map_err(|e| e.to_string())?;
        let set = encode_slicemaps(&v, &plan_scheme(s).unwrap()).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        set.write(dir.path()).map_err(|e| e.to_string())?;
        let back = decode_slicemaps(&SlicemapSet::read(dir.path()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(back == v, || format!("round trip differs at s={s}"))?;
    }
    let odd = Volume::from_fn([200, 180, 150], |x, y, z| ((x * 7) ^ (y * 3) ^ (z * 5)) as u8).unwrap();
    let sc = plan_scheme(128).unwrap();
    let down = downscale_volume(&odd, [128, 128, 128]).unwrap();
    let back = decode_slicemaps(&encode_slicemaps(&odd, &sc).unwrap()).unwrap();
    ensure(back == down, || "non-cubic round trip differs from downscale".into())?;

    let c = DatasetMeta::new("c", "dataset C", [2016, 2016, 2016]);
    let payload = plan_scheme(256).unwrap().payload_bytes();
    let r = c.raw_bytes as f64 / payload as f64;
    ensure(payload <= 20_000_000 && r >= 400.0, || format!("payload {payload}, ratio {r:.1}"))?;
    Ok(format!(
        "round trips exact at 128/256/512 and non-cubic input; 2016^3 ({:.2} GB) -> {payload} B at 256^3, ratio {r:.0}",
        c.raw_bytes as f64 / 1e9
    ))
}

fn oracle_entropy(pixels: &[u8]) -> f64 {
    let mut counts = [0usize; 256];
    for &p in pixels {
        counts[p as usize] += 1;
    }
    let n = pixels.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn gray(dim: u32, f: impl Fn(u32, u32) -> u8) -> image::GrayImage {
    image::GrayImage::from_fn(dim, dim, |x, y| image::Luma([f(x, y)]))
}

fn criterion_8() -> Outcome {
    let h0 = image_entropy(&gray(64, |_, _| 77)).h;
    let h8 = image_entropy(&gray(256, |x, y| ((x + 256 * y) % 256) as u8)).h;
    let h1 = image_entropy(&gray(64, |_, y| if y < 32 { 0 } else { 255 })).h;
    ensure(h0 == 0.0, || format!("H(constant)={h0}"))?;
    ensure((h8 - 8.0).abs() <= 1e-9, || format!("H(uniform)={h8}"))?;
    ensure((h1 - 1.0).abs() <= 1e-9, || format!("H(half/half)={h1}"))?;

    let l = presets::l_slab(64, 0).generate().map_err(|e| e.to_string())?.volume;
    let template = ViewParams::surface(100).with_size(64, 128);
    let snap = optimal_snapshot(&l, 36, &template).map_err(|e| e.to_string())?;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..36 {
        let a = k as f64 * 10.0;
        let img = render_view(&l, &template.at(a)).map_err(|e| e.to_string())?;
        let h = oracle_entropy(img.as_raw());
        if h > best.1 {
            best = (a, h);
        }
    }
    ensure(snap.azimuth_deg == best.0, || {
        format!("L-phantom optimal {} vs exhaustive {}", snap.azimuth_deg, best.0)
    })?;

    let cyl = PhantomSpec::new([128, 128, 128], 0)
        .object(
            Shape::Cylinder {
                cx: 63.5,
                cy: 63.5,
                r: 0.45 * 128.0,
                z0: -1.0,
                z1: 129.0,
            },
            Intensity::Constant(200),
        )
        .generate()
        .map_err(|e| e.to_string())?
        .volume;
    let sym = optimal_snapshot(&cyl, 36, &ViewParams::additive().with_size(16, 64)).map_err(|e| e.to_string())?;
    let (lo, hi) = sym
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(_, e)| (l.min(e), h.max(e)));
    ensure(hi - lo <= 1e-6 && sym.azimuth_deg == 0.0, || {
        format!("cylinder entropies spread {:.2e}, azimuth {}", hi - lo, sym.azimuth_deg)
    })?;

    let p = presets::cylinder_with_sphere(128, 128, 3).generate().map_err(|e| e.to_string())?.volume;
    let t = otsu_excluding_zero(&p).map_err(|e| e.to_string())?.value;
    let started = Instant::now();
    let timed = optimal_snapshot(&p, 36, &ViewParams::surface(t).with_size(256, 256)).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("36-view sweep took {secs:.2}s"))?;
    Ok(format!(
        "entropies exact; L-phantom argmax {} matches exhaustive oracle; cylinder spread {:.1e} -> azimuth 0; 36 views 128^3 @256^2 in {secs:.2}s (H={:.3})",
        snap.azimuth_deg,
        hi - lo,
        timed.entropy.h
    ))
}

fn criterion_9() -> Outcome {
    let (nx, nz) = (1024usize, 512usize);
    let c = nx as f64 / 2.0 - 0.5;
    let p = PhantomSpec::new([nx, nx, nz], 9)
        .container(Container::new(c, c, 0.42 * nx as f64, 8.0, Intensity::Constant(60)))
        .object(
            Shape::Sphere {
                center: [c, c, 0.35 * nz as f64],
                radius: 0.15 * nx as f64,
            },
            Intensity::Uniform { lo: 120, hi: 200 },
        )
        .object(
            Shape::Cuboid {
                min: [c - 250.0, c - 40.0, 10.0],
                max: [c + 250.0, c + 40.0, 40.0],
            },
            Intensity::Uniform { lo: 150, hi: 180 },
        )
        .salt_pepper(0.001)
        .generate()
        .map_err(|e| e.to_string())?;
    let v = p.volume.dims();
    let raw = (v[0] * v[1] * v[2]) as f64;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = BundleStore::open(dir.path()).map_err(|e| e.to_string())?;
    let meta = DatasetMeta::new("synthetic", "synthetic 1024x1024x512", v);
    let bundle = store
        .build_from_volume(meta, &p.volume, PreviewSet::ALL, &PipelineConfig::default())
        .map_err(|e| e.to_string())?;
    let thumb = bundle.checksums[THUMBNAIL_FILE].bytes;
    let data = bundle.data.as_ref().ok_or("no data preview")?;
    let data_uncompressed = plan_scheme(data.manifest.scheme.s).unwrap().payload_bytes();
    let inter = bundle.interactive.as_ref().ok_or("no interactive preview")?;
    let schemes: Vec<usize> = inter.schemes.iter().map(|s| s.s).collect();
    ensure(schemes == SCHEMES, || format!("interactive schemes {schemes:?}"))?;
    let inter_png = bundle.total_payload("interactive/");
    ensure(thumb <= 300_000, || format!("thumbnail {thumb} B"))?;
    ensure(data_uncompressed <= 17_000_000, || format!("data preview {data_uncompressed} B"))?;
    ensure(inter_png <= 25_000_000, || format!("interactive PNG total {inter_png} B"))?;
    store.verify("synthetic").map_err(|e| e.to_string())?;
    Ok(format!(
        "{:.2} GB raw -> thumbnail {:.3} MB, data {:.2} MB uncompressed, interactive {:.2} MB PNG",
        raw / 1e9,
        thumb as f64 / 1e6,
        data_uncompressed as f64 / 1e6,
        inter_png as f64 / 1e6
    ))
}

async fn fetch(app: &axum::Router, uri: &str) -> (StatusCode, Option<String>, Vec<u8>) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, ctype, body)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = BundleStore::open(dir.path()).map_err(|e| e.to_string())?;
    let p = presets::cylinder_with_sphere(256, 256, 5).generate().map_err(|e| e.to_string())?;
    store.ingest_volume("cyl", "cylinder", &p.volume).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        views: 12,
        thumbnail_dim: 256,
        steps: 256,
        ..PipelineConfig::default()
    };
    let bundle = store.build("cyl", PreviewSet::ALL, &cfg).map_err(|e| e.to_string())?;
    let app = ctprev::service::router(store.clone(), None).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let (st, ct, body) = fetch(&app, "/api/datasets").await;
        ensure(st == StatusCode::OK && ct.as_deref() == Some("application/json"), || format!("list {st}"))?;
        let list: serde_json::Value = serde_json::from_slice(&body).map_err(|e| e.to_string())?;
        ensure(
            list == serde_json::json!([{
                "id": "cyl", "name": "cylinder", "dims": [256, 256, 256],
                "thumbnail_url": "/api/datasets/cyl/thumbnail.png"
            }]),
            || format!("list body {list}"),
        )?;

        let (st, _, body) = fetch(&app, "/api/datasets/cyl").await;
        let on_disk: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("cyl").join(META_FILE)).unwrap()).unwrap();
        let served: serde_json::Value = serde_json::from_slice(&body).map_err(|e| e.to_string())?;
        ensure(st == StatusCode::OK && served == on_disk, || "manifest differs from meta.json".into())?;

        let mut checked = 0;
        for path in bundle.checksums.keys() {
            let uri = format!("/api/datasets/cyl/{path}");
            let (st, ct, body) = fetch(&app, &uri).await;
            let disk = std::fs::read(dir.path().join("cyl").join(path)).unwrap();
            ensure(st == StatusCode::OK, || format!("{uri}: {st}"))?;
            ensure(body == disk, || format!("{uri}: bytes differ from disk"))?;
            if path.ends_with(".png") {
                ensure(ct.as_deref() == Some("image/png"), || format!("{uri}: content type {ct:?}"))?;
            }
            checked += 1;
        }
        for uri in [
            "/api/datasets/unknown",
            "/api/datasets/unknown/thumbnail.png",
            "/api/datasets/cyl/data/sm_256_9.png",
            "/api/datasets/cyl/interactive/512/sm_512_0.png",
        ] {
            let (st, ct, body) = fetch(&app, uri).await;
            ensure(st == StatusCode::NOT_FOUND, || format!("{uri}: {st}"))?;
            ensure(ct.as_deref() == Some("application/json"), || format!("{uri}: content type {ct:?}"))?;
            let err: serde_json::Value = serde_json::from_slice(&body).map_err(|e| e.to_string())?;
            ensure(err.get("error").is_some(), || format!("{uri}: body {err}"))?;
        }
        Ok(format!(
            "list, manifest, {checked} artifacts byte-identical to disk (thumbnail, data, interactive 128/256), 404s carry JSON"
        ))
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "Otsu oracle equivalence", criterion_1),
        (2, "Otsu/ITS agreement on clean data", criterion_2),
        (3, "ITS work advantage", criterion_3),
        (4, "narrow-histogram failure mode", criterion_4),
        (5, "container removal accuracy", criterion_5),
        (6, "histogram filtering", criterion_6),
        (7, "slicemap codec", criterion_7),
        (8, "entropy and snapshot", criterion_8),
        (9, "end-to-end reduction", criterion_9),
        (10, "service contract", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

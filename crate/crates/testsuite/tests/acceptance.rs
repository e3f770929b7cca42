//! Acceptance suite: one pass/fail line per criterion. Exits non-zero if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod oracles;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use softcp_core::blend::{composite, poisson_paste, soft_copy, soft_paste, solve_poisson};
use softcp_core::manifest::{read_manifest, validate_manifest};
use softcp_core::metrics::{confusion, scores, ConfusionCounts};
use softcp_core::morphology::{binarize, connected_components, dilate, erode};
use softcp_core::phantom::{phantom_config, write_phantom_dataset};
use softcp_core::pipeline::{synthesize_batch, BatchOptions};
use softcp_core::softmask::{compute_soft_mask, DEFAULT_BINARIZE_THRESHOLD};
use softcp_core::transform::{
    apply_image_level, apply_intensity, apply_object_pipeline, apply_rigid, Axis, ImageLevelPipeline,
    TransformedPatch,
};
use softcp_core::{
    BinaryMask, BlendMode, ImagePlane, IntensityKind, LabelMap, PasteOffset, Raster, Rect, RigidKind, SoftMask,
    SoftMaskParams, TransformPipeline,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> ImagePlane {
    let samples = (0..h * w * ch).map(|_| rng.random_range(0.0..=1.0)).collect();
    ImagePlane::new(h, w, ch, samples).unwrap()
}

fn smooth_image(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> ImagePlane {
    let (a, b, p) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5), rng.random_range(0.0..6.0));
    ImagePlane::from_fn(h, w, ch, move |r, c, k| 0.5 + 0.45 * (r as f64 * a + p + k as f64).sin() * (c as f64 * b).cos())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let m = oracles::random_mask(&mut rng, 64);
        let k_erode = rng.random_range(0..=3);
        let k_dilate = rng.random_range(0..=8);
        let alpha = [0.3, 0.5, 0.9][rng.random_range(0..3)];
        let s = compute_soft_mask(&m, &SoftMaskParams::new(k_erode, k_dilate, alpha).unwrap());
        let want = oracles::soft_mask(&m, k_erode, k_dilate, alpha);
        worst = worst.max(max_abs_diff(s.weights(), &want));
        let support = oracles::dilate_n(&oracles::erode_n(&m, k_erode), k_dilate);
        ensure(binarize(&s, DEFAULT_BINARIZE_THRESHOLD) == support, || format!("case {case}: support differs from {k_dilate}-fold dilation"))?;
    }
    ensure(worst <= 1e-9, || format!("max abs error {worst:e} > 1e-9"))?;
    Ok(format!("200 masks, max abs error {worst:e}, supports exact"))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_self = 0.0f64;
    for case in 0..100 {
        let ch = [1, 3][rng.random_range(0..2)];
        let (h, w) = (rng.random_range(8..=64), rng.random_range(8..=64));
        let img = random_image(&mut rng, h, w, ch);
        let m = oracles::random_mask(&mut rng, h.min(w));
        let rect = Rect::new(rng.random_range(0..=h - m.height()), rng.random_range(0..=w - m.width()), m.height(), m.width());
        let patch = img.extract(rect).unwrap();
        let p = SoftMaskParams::new(rng.random_range(0..=2), rng.random_range(0..=8), rng.random_range(0.1..0.95)).unwrap();
        let s = compute_soft_mask(&m, &p);
        let at = PasteOffset::new(rect.row as i64, rect.col as i64);
        let out = soft_paste(&soft_copy(&patch, &s).unwrap(), &s, &img, at).unwrap();
        worst_self = worst_self.max(max_abs_diff(out.samples(), img.samples()));

        let bg = random_image(&mut rng, h, w, ch);
        let bin = SoftMask::from_binary(&m);
        let pasted = soft_paste(&soft_copy(&patch, &bin).unwrap(), &bin, &bg, at).unwrap();
        let mut naive = bg.samples().to_vec();
        for r in 0..m.height() {
            for c in 0..m.width() {
                if m.get(r, c) {
                    for k in 0..ch {
                        naive[((rect.row + r) * w + rect.col + c) * ch + k] = patch.get(r, c, k);
                    }
                }
            }
        }
        ensure(pasted.samples() == &naive[..], || format!("case {case}: binary soft paste differs from copy-paste"))?;

        let sigma = rng.random_range(0.3..3.0);
        for mode in [BlendMode::Soft, BlendMode::Gaussian { sigma }] {
            let out = composite(&mode, &patch, &m, None, &p, &bg, at).unwrap().image;
            for r in 0..m.height() {
                for c in 0..m.width() {
                    for k in 0..ch {
                        let (a, b) = (patch.get(r, c, k), bg.get(rect.row + r, rect.col + c, k));
                        let o = out.get(rect.row + r, rect.col + c, k);
                        ensure(o >= a.min(b) - 1e-12 && o <= a.max(b) + 1e-12, || {
                            format!("case {case} {}: {o} outside [{}, {}]", mode.name(), a.min(b), a.max(b))
                        })?;
                    }
                }
            }
        }
    }
    ensure(worst_self <= 1e-6, || format!("self-paste error {worst_self:e} > 1e-6"))?;
    Ok(format!("self-paste max error {worst_self:e}; binary paste bit-identical; convex bounds hold (100 cases)"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut components = 0;
    for case in 0..500 {
        let m = oracles::random_mask(&mut rng, 64);
        ensure(erode(&m) == oracles::erode(&m), || format!("case {case}: erode differs"))?;
        ensure(dilate(&m) == oracles::dilate(&m), || format!("case {case}: dilate differs"))?;
        let got = connected_components(&m, 1);
        let want = oracles::components(&m);
        ensure(got.len() == want.len(), || format!("case {case}: {} components, oracle {}", got.len(), want.len()))?;
        for (g, w) in got.iter().zip(&want) {
            ensure(g.area == w.area && g.bbox == w.bbox, || format!("case {case}: component {:?} vs {:?}", (g.area, g.bbox), (w.area, w.bbox)))?;
        }
        components += got.len();
    }
    Ok(format!("500 masks exact; {components} components matched"))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..200 {
        let a = oracles::random_mask(&mut rng, 48);
        let b = BinaryMask::from_fn(a.height(), a.width(), |_, _| rng.random_bool(0.3));
        let c = confusion(&a, &b).unwrap();
        let s = scores(&c);
        let set_form = oracles::dice_sets(&a, &b);
        ensure(s.dsc == set_form, || format!("case {case}: count form {} vs set form {set_form}", s.dsc))?;
        if c.tp + c.fp + c.fn_ > 0 {
            let id = 2.0 * s.iou / (1.0 + s.iou);
            ensure((s.dsc - id).abs() <= 1e-9, || format!("case {case}: dsc {} vs 2iou/(1+iou) {id}", s.dsc))?;
        }
    }
    let truth = BinaryMask::from_fn(8, 8, |r, c| r == 0 && c < 6);
    let pred = BinaryMask::from_fn(8, 8, |r, c| (r == 0 && c < 3) || (r == 7 && c == 7));
    let c = confusion(&pred, &truth).unwrap();
    ensure(c == ConfusionCounts { tp: 3, fp: 1, tn: 57, fn_: 3 }, || format!("hand grid counts {c:?}"))?;
    let s = scores(&c);
    ensure((s.dsc - 0.6).abs() < 1e-12 && (s.iou - 3.0 / 7.0).abs() < 1e-12 && s.accuracy == 0.9375, || format!("hand grid scores {s:?}"))?;
    Ok("200 pairs exact; hand grid dsc 0.6, iou 3/7, accuracy 0.9375".into())
}

fn write_config(dir: &Path, size: usize, edit: impl FnOnce(&mut softcp_core::RunConfig)) -> String {
    let mut cfg = phantom_config(Path::new("data"), Path::new("out"), size);
    edit(&mut cfg);
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path.display().to_string()
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let code = softcp_cli::dispatch(std::iter::once("softcp").chain(args.iter().copied()));
    ensure(code == 0, || format!("`softcp {}` exited with {code}", args.join(" ")))
}

fn criterion_5() -> Check {
    let dir = tempfile::tempdir().unwrap();
    write_phantom_dataset(&dir.path().join("data"), 40, 256, 256, 500).unwrap();
    let cfg = write_config(dir.path(), 256, |c| {
        c.lesions_per_image = [1, 3];
        c.placement.s2 = 1;
    });
    run_cli(&["augment", "--config", &cfg, "--count", "1000"])?;
    let manifest = dir.path().join("out/manifest.jsonl");
    run_cli(&["validate", "--manifest", manifest.to_str().unwrap()])?;
    let report = validate_manifest(&manifest, None).map_err(|e| e.to_string())?;
    let pasted: usize = read_manifest(&manifest).unwrap().1.iter().map(|e| e.lesions.len()).sum();
    ensure(report.entries_checked == 1000, || format!("{} entries checked", report.entries_checked))?;
    ensure(report.is_clean(), || format!("{} violations, first {:?}", report.violations.len(), report.violations.first()))?;
    ensure(report.lesion_overlap_pixels == 0, || format!("{} lesion overlap pixels", report.lesion_overlap_pixels))?;
    Ok(format!("1000 samples, {pasted} pasted lesions, 0 violations, 0 overlap pixels"))
}

fn criterion_6() -> Check {
    let dir = tempfile::tempdir().unwrap();
    write_phantom_dataset(&dir.path().join("data"), 300, 64, 64, 600).unwrap();
    let cfg = write_config(dir.path(), 64, |_| {});
    run_cli(&["augment", "--config", &cfg, "--ratio", "3:1"])?;
    let (_, entries) = read_manifest(dir.path().join("out/manifest.jsonl")).map_err(|e| e.to_string())?;
    let images = std::fs::read_dir(dir.path().join("out/images")).unwrap().count();
    ensure(entries.len() == 100 && images == 100, || format!("{} entries, {images} images", entries.len()))?;
    Ok("300 real images -> 100 synthetic".into())
}

fn hash_tree(root: &Path) -> String {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

fn criterion_7() -> Check {
    let dir = tempfile::tempdir().unwrap();
    write_phantom_dataset(&dir.path().join("data"), 30, 128, 128, 700).unwrap();
    let cfg = write_config(dir.path(), 128, |c| {
        c.count = Some(60);
        c.lesions_per_image = [1, 2];
        c.final_intensity = true;
    });
    let out = dir.path().join("out");
    let mut hashes = Vec::new();
    for jobs in ["1", "4", "3"] {
        if out.exists() {
            std::fs::remove_dir_all(&out).unwrap();
        }
        run_cli(&["augment", "--config", &cfg, "--seed", "77", "--jobs", jobs])?;
        hashes.push(hash_tree(&out));
    }
    ensure(hashes.iter().all(|h| h == &hashes[0]), || format!("hashes differ: {hashes:?}"))?;
    Ok(format!("jobs 1, 4 and 3 give tree hash {}", &hashes[0][..16]))
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    for case in 0..60 {
        let ch = [1, 3][rng.random_range(0..2)];
        let (h, w) = (rng.random_range(3..=64), rng.random_range(3..=64));
        let (pad_r, pad_c) = (rng.random_range(0..5), rng.random_range(0..5));
        let patch = smooth_image(&mut rng, h, w, ch);
        let bg = smooth_image(&mut rng, h + pad_r + 1, w + pad_c + 1, ch);
        let keep = rng.random_range(0.5..1.0);
        let omega = BinaryMask::from_fn(h, w, |r, c| r > 0 && c > 0 && r + 1 < h && c + 1 < w && rng.random_bool(keep));
        let at = PasteOffset::new(rng.random_range(0..=pad_r) as i64, rng.random_range(0..=pad_c) as i64);
        let sol = solve_poisson(&patch, &omega, &bg, at, 1e-9, 20_000).map_err(|e| format!("case {case}: {e}"))?;
        let (r0, c0) = (at.row as usize, at.col as usize);
        let mut f = bg.samples().to_vec();
        for (k, vals) in sol.values.iter().enumerate() {
            for (&(r, c), &v) in sol.unknowns.iter().zip(vals) {
                f[((r0 + r) * bg.width() + c0 + c) * ch + k] = v;
            }
        }
        worst = worst.max(oracles::poisson_residual(&f, bg.width(), ch, &patch, &omega, (r0, c0)));
        let out = poisson_paste(&patch, &omega, &bg, at, 1e-9, 20_000).unwrap();
        for r in 0..bg.height() {
            for c in 0..bg.width() {
                let inside = r >= r0 && c >= c0 && r - r0 < h && c - c0 < w && omega.get(r - r0, c - c0);
                if !inside {
                    for k in 0..ch {
                        ensure(out.get(r, c, k) == bg.get(r, c, k), || format!("case {case}: pixel ({r}, {c}) outside the region changed"))?;
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("residual {worst:e} > 1e-6"))?;

    let bg = smooth_image(&mut rng, 40, 40, 3);
    let patch = bg.extract(Rect::new(5, 5, 30, 30)).unwrap();
    let omega = BinaryMask::from_fn(30, 30, |r, c| (1..29).contains(&r) && (1..29).contains(&c));
    let same = poisson_paste(&patch, &omega, &bg, PasteOffset::new(5, 5), 1e-7, 5000).unwrap();
    let drift = max_abs_diff(same.samples(), bg.samples());
    ensure(drift <= 1e-7, || format!("patch equal to background drifted by {drift:e}"))?;

    let mut vals = vec![0.0; 9];
    (vals[1], vals[3], vals[5], vals[7]) = (0.2, 0.4, 0.6, 0.8);
    let bg = ImagePlane::new(3, 3, 1, vals).unwrap();
    let mut one = BinaryMask::zeros(3, 3);
    one.set(1, 1, true);
    let out = poisson_paste(&ImagePlane::filled(3, 3, 1, 0.37), &one, &bg, PasteOffset::new(0, 0), 1e-12, 10).unwrap();
    ensure((out.get(1, 1, 0) - 0.5).abs() <= 1e-12, || format!("single unknown gave {}", out.get(1, 1, 0)))?;
    Ok(format!("60 regions, max residual {worst:e}; boundary exact; identity drift {drift:e}; single unknown 0.5"))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for case in 0..50 {
        let ch = [1, 3][rng.random_range(0..2)];
        let (h, w) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let img = random_image(&mut rng, h, w, ch);
        let mut mask = oracles::random_mask(&mut rng, 40);
        if mask.dims() != (h, w) {
            mask = BinaryMask::from_fn(h, w, |r, c| (r * 3 + c) % 4 == 0);
        }
        mask.set(0, 0, true);
        let eq = |t: &str, got: &(ImagePlane, BinaryMask)| {
            ensure(got.0 == img && got.1 == mask, || format!("case {case}: {t} is not an identity"))
        };
        for axis in [Axis::Horizontal, Axis::Vertical] {
            let f = RigidKind::Flip { axis };
            let once = apply_rigid(&img, &mask, &f).unwrap();
            eq("flip twice", &apply_rigid(&once.0, &once.1, &f).unwrap())?;
        }
        let mut cur = (img.clone(), mask.clone());
        for _ in 0..4 {
            cur = apply_rigid(&cur.0, &cur.1, &RigidKind::Rotation { degrees: 90.0 }).unwrap();
        }
        eq("four quarter turns", &cur)?;
        eq("scale 1", &apply_rigid(&img, &mask, &RigidKind::Scaling { factor: 1.0 }).unwrap())?;
        eq("rigid none", &apply_rigid(&img, &mask, &RigidKind::None).unwrap())?;
        let p = TransformedPatch::new(img.clone(), mask.clone()).unwrap();
        let out = apply_object_pipeline(&p, &TransformPipeline::identity(), &mut rng).unwrap();
        eq("all-none pipeline", &(out.image, out.mask))?;
        for t in [IntensityKind::Gamma { g: 1.0 }, IntensityKind::GaussianNoise { sigma: 0.0 }, IntensityKind::None] {
            ensure(apply_intensity(&img, &t, &mut rng).unwrap() == img, || format!("case {case}: {t:?} is not an identity"))?;
        }
        let labels = LabelMap::from_fn(h, w, |r, c| ((r + c) % 3) as u8);
        let level = ImageLevelPipeline { crop: None, intensity: vec![IntensityKind::None, IntensityKind::None] };
        let (i2, l2) = apply_image_level(&img, &labels, &level, (h, w), None, &mut rng).unwrap();
        ensure(i2 == img && l2 == labels, || format!("case {case}: all-none image-level pipeline is not an identity"))?;
    }
    Ok("50 random patches: flip^2, rot90^4, none, gamma(1), noise(0), scale(1) bit-exact".into())
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().unwrap();
    write_phantom_dataset(&dir.path().join("data"), 30, 256, 256, 1000).unwrap();
    let mut cfg = phantom_config(&dir.path().join("data"), &dir.path().join("out"), 256);
    cfg.count = Some(100);
    let mut timed = |jobs: usize| {
        let out = dir.path().join(format!("out{jobs}"));
        cfg.output_root = out.clone();
        let start = Instant::now();
        synthesize_batch(&cfg, &BatchOptions { jobs: Some(jobs), overrides: vec![] }).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        std::fs::remove_file(out.join("manifest.jsonl")).unwrap();
        Ok::<_, String>((secs, hash_tree(&out)))
    };
    let (t1, h1) = timed(1)?;
    let (t4, h4) = timed(4)?;
    let speedup = t1 / t4;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let summary = format!("single-threaded {t1:.2} s, 4 workers {t4:.2} s, speedup {speedup:.2}x on {cores} core(s)");
    ensure(t1 < 60.0, || format!("{summary}; 100 samples took over 60 s"))?;
    ensure(h1 == h4, || format!("{summary}; output hashes differ"))?;
    ensure(speedup >= 3.0, || format!("{summary}; speedup below 3.0x"))?;
    Ok(format!("{summary}; hashes equal"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("soft-mask closed form", criterion_1),
        ("blend identities", criterion_2),
        ("morphology oracle equivalence", criterion_3),
        ("metrics", criterion_4),
        ("placement soundness", criterion_5),
        ("ratio control", criterion_6),
        ("determinism", criterion_7),
        ("poisson blend", criterion_8),
        ("transform algebra", criterion_9),
        ("performance", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

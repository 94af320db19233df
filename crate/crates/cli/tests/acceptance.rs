//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use deczx::diagram::{compose_par, compose_seq, matrix_arrow, Diagram, NodeKind};
use deczx::f2linalg::{induced_permutation, subset_matrix, F2Matrix, F2Vector};
use deczx::fourier::{fourier_evaluate, fourier_synthesize};
use deczx::normalform::{
    diagrams_equal, nf_to_diagram, normalize_state, synthesize, NormalFormData, NormalFormError,
};
use deczx::random::{random_affine_vector, random_site, random_small_diagram};
use deczx::rewrite::{apply, oplus, random_rewrites, relatively_close, RuleId};
use deczx::semantics::{decohere_pure, evaluate, ComplexMatrix};
use deczx::NonNegMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `max |a - b| ≤ tol · max |entry|`, exact when `tol` is zero.
fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |s, x| s.max(x.abs()));
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn entries(d: &Diagram) -> Vec<f64> {
    evaluate(d).expect("evaluates").into_entries()
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn generator_semantics() -> Outcome {
    let exact: Vec<(&str, Diagram, Vec<f64>)> = vec![
        (
            "green diag(1, 1/2)",
            Diagram::green(1, 1, 0.5).unwrap(),
            vec![1.0, 0.0, 0.0, 0.5],
        ),
        ("green 2->2 mu=1/4", Diagram::green(2, 2, 0.25).unwrap(), {
            let mut v = vec![0.0; 16];
            v[0] = 2.0;
            v[15] = 0.5;
            v
        }),
        (
            "red coin 1/4",
            Diagram::red(0, 1, 0.25).unwrap(),
            vec![0.75, 0.25],
        ),
        (
            "red 2->1 p=1/8",
            Diagram::red(2, 1, 0.125).unwrap(),
            vec![0.875, 0.125, 0.125, 0.875, 0.125, 0.875, 0.875, 0.125],
        ),
        (
            "flip",
            Diagram::red(1, 1, 1.0).unwrap(),
            vec![0.0, 1.0, 1.0, 0.0],
        ),
        ("cup", Diagram::cup(), vec![0.5, 0.0, 0.0, 0.5]),
        ("cap", Diagram::cap(), vec![2.0, 0.0, 0.0, 2.0]),
        ("scalar 3", Diagram::scalar(3.0).unwrap(), vec![3.0]),
        ("scalar 0", Diagram::scalar(0.0).unwrap(), vec![0.0]),
        ("identity", Diagram::identity(1), vec![1.0, 0.0, 0.0, 1.0]),
        ("swap", Diagram::swap(), {
            let mut v = vec![0.0; 16];
            for (r, c) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
                v[r * 4 + c] = 1.0;
            }
            v
        }),
    ];
    for (name, d, want) in &exact {
        ensure(&entries(d) == want, || {
            format!("{name}: got {:?}", entries(d))
        })?;
    }
    let inexact: Vec<(&str, Diagram, Vec<f64>)> = vec![
        (
            "green diag(1, 0.3)",
            Diagram::green(1, 1, 0.3).unwrap(),
            vec![1.0, 0.0, 0.0, 0.3],
        ),
        (
            "red coin 0.3",
            Diagram::red(0, 1, 0.3).unwrap(),
            vec![0.7, 0.3],
        ),
        (
            "red 1->1 p=0.1",
            Diagram::red(1, 1, 0.1).unwrap(),
            vec![0.9, 0.1, 0.1, 0.9],
        ),
        ("scalar 0.7", Diagram::scalar(0.7).unwrap(), vec![0.7]),
    ];
    for (name, d, want) in &inexact {
        ensure(rel_close(&entries(d), want, 1e-12), || {
            format!("{name}: got {:?}", entries(d))
        })?;
    }
    Ok(format!(
        "{} exact and {} rel 1e-12 generator checks",
        exact.len(),
        inexact.len()
    ))
}

fn parity_sign(x: usize) -> f64 {
    if x.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn decoherence_bridge() -> Outcome {
    let mut rng = rng(2);
    for i in 0..500 {
        let (n, m) = (rng.gen_range(0..=3), rng.gen_range(0..=3));
        let values: Vec<Complex64> = (0..1usize << (n + m))
            .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let want: Vec<f64> = values.iter().map(|z| z.re * z.re + z.im * z.im).collect();
        let got = decohere_pure(&ComplexMatrix::new(n, m, values).unwrap());
        ensure(rel_close(got.entries(), &want, 1e-10), || {
            format!("random matrix #{i} ({n} -> {m})")
        })?;
    }
    let shapes = [
        (0, 1),
        (1, 0),
        (1, 1),
        (2, 1),
        (1, 2),
        (2, 2),
        (0, 3),
        (3, 0),
    ];
    for step in 0..100 {
        let alpha = 2.0 * PI * f64::from(step) / 100.0;
        let p = (1.0 - alpha.cos()) / 2.0;
        for &(n, m) in &shapes {
            let red: Vec<Complex64> = (0..1usize << (n + m))
                .map(|xy| {
                    (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, alpha) * parity_sign(xy))
                        / 2.0
                })
                .collect();
            let want = decohere_pure(&ComplexMatrix::new(n, m, red).unwrap())
                .scaled(2f64.powi(1 - m as i32));
            let got = entries(&Diagram::red(n, m, p).unwrap());
            ensure(rel_close(&got, want.entries(), 1e-10), || {
                format!("red {n}->{m} at alpha = {alpha}")
            })?;

            let size = 1usize << (n + m);
            let green: Vec<Complex64> = (0..size)
                .map(|xy| match xy {
                    0 => Complex64::new(1.0, 0.0),
                    _ if xy == size - 1 => Complex64::from_polar(1.0, alpha),
                    _ => Complex64::new(0.0, 0.0),
                })
                .collect();
            let want = decohere_pure(&ComplexMatrix::new(n, m, green).unwrap())
                .scaled(2f64.powi(n as i32 - 1));
            let got = entries(&Diagram::green(n, m, 1.0).unwrap());
            ensure(rel_close(&got, want.entries(), 1e-10), || {
                format!("green {n}->{m} at alpha = {alpha}")
            })?;
        }
    }
    Ok(format!(
        "500 random matrices; red and green spiders on {} shapes over 100 angles, rel 1e-10",
        shapes.len()
    ))
}

fn fourier_round_trip() -> Outcome {
    let mut rng = rng(3);
    let mut count = 0;
    for n in 0..=8 {
        for _ in 0..40 {
            let v: Vec<f64> = (0..1usize << n)
                .map(|_| rng.gen_range(-4.0f64..4.0).exp())
                .collect();
            let fd = fourier_synthesize(&v).map_err(|e| e.to_string())?;
            let back = fourier_evaluate(&fd);
            ensure(
                v.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-9 * a),
                || format!("evaluate after synthesize, n = {n}"),
            )?;

            let spread = 4.0 / 2f64.powf(n as f64 / 2.0);
            let lambda: Vec<f64> = (1..1usize << n)
                .map(|_| rng.gen_range(-spread..spread).exp())
                .collect();
            let fd = deczx::FourierData::new(n, rng.gen_range(-3.0f64..3.0).exp(), lambda)
                .map_err(|e| e.to_string())?;
            let again = fourier_synthesize(&fourier_evaluate(&fd)).map_err(|e| e.to_string())?;
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
            ensure(
                close(again.scale, fd.scale)
                    && again
                        .lambda
                        .iter()
                        .zip(&fd.lambda)
                        .all(|(a, b)| close(*a, *b)),
                || format!("synthesize after evaluate, n = {n}"),
            )?;
            count += 1;
        }
    }
    let dot = |x: usize, y: usize| i64::from((x & y).count_ones() % 2 == 1);
    for n in 1..=4 {
        let size = 1usize << n;
        for y in 1..size {
            for z in 0..size {
                let sum: i64 = (0..size).map(|x| dot(y, x) * (1 - 2 * dot(x, z))).sum();
                let rhs = (i64::from(y == z) - i64::from(z == 0)) * size as i64;
                ensure(-2 * sum == rhs, || {
                    format!("exponent identity fails at n = {n}, y = {y}, z = {z}")
                })?;
            }
        }
    }
    Ok(format!(
        "{count} vectors each way for n <= 8 at rel 1e-9; exponent identity exhaustive for n <= 4"
    ))
}

fn discrete_bytes(nf: &NormalFormData) -> String {
    match nf {
        NormalFormData::Zero { n } => format!("zero {n}"),
        NormalFormData::Affine(a) => {
            format!("{:?} {:?} {:?}", a.a.nrows(), a.a.to_bits(), a.x.to_bits())
        }
    }
}

fn normal_form_round_trip() -> Outcome {
    let mut rng = rng(4);
    for i in 0..1000 {
        let n = rng.gen_range(0..=8);
        let k = rng.gen_range(0..=n);
        let (v, a, x) = random_affine_vector(&mut rng, n, k);
        let nf = normalize_state(&v).map_err(|e| format!("#{i}: {e}"))?;
        let back = entries(&nf_to_diagram(&nf));
        ensure(rel_close(&back, &v, 1e-9), || {
            format!("#{i}: round trip error (n = {n}, k = {k})")
        })?;
        let again = normalize_state(&back).map_err(|e| format!("#{i}: {e}"))?;
        ensure(discrete_bytes(&again) == discrete_bytes(&nf), || {
            format!("#{i}: discrete data changed")
        })?;
        let NormalFormData::Affine(data) = &nf else {
            return Err(format!("#{i}: nonzero vector normalized to zero"));
        };
        ensure(data.a == a && data.x == x, || {
            format!("#{i}: canonical pair differs from the generator's")
        })?;
    }
    Ok("1000 affine-support vectors, n <= 8, rel 1e-9, discrete data byte-identical".into())
}

/// Nudges one spider parameter by 1e-3, staying in range.
fn nudged(d: &Diagram, rng: &mut ChaCha8Rng) -> Option<Diagram> {
    let spiders: Vec<_> = d
        .nodes()
        .filter(|(_, n)| n.kind != NodeKind::Scalar)
        .map(|(id, _)| id)
        .collect();
    if spiders.is_empty() {
        return None;
    }
    let id = spiders[rng.gen_range(0..spiders.len())];
    let mut out = d.clone();
    let node = out.node_mut(id).expect("exists");
    node.kind = match node.kind {
        NodeKind::Green { mu } => NodeKind::Green { mu: mu + 1e-3 },
        NodeKind::Red { p } => NodeKind::Red {
            p: if p + 1e-3 <= 1.0 { p + 1e-3 } else { p - 1e-3 },
        },
        NodeKind::Scalar => unreachable!(),
    };
    Some(out)
}

fn completeness_surrogate() -> Outcome {
    let mut rng = rng(5);
    let rules = [RuleId::F1, RuleId::F2, RuleId::M, RuleId::Id];
    let (mut equal_pairs, mut steps) = (0, 0);
    while equal_pairs < 500 {
        let d = random_small_diagram(&mut rng, 8);
        let count = rng.gen_range(1..=6);
        let (after, trace) = random_rewrites(&d, &rules, count, &mut rng);
        if trace.is_empty() {
            continue;
        }
        steps += trace.len();
        let equal = diagrams_equal(&d, &after, 1e-9)
            .map_err(|e| format!("equal pair {equal_pairs}: {e}"))?;
        ensure(equal, || {
            format!(
                "equal pair {equal_pairs} compared unequal after {} rewrites",
                trace.len()
            )
        })?;
        equal_pairs += 1;
    }
    let (mut different, mut redrawn) = (0, 0);
    while different < 500 {
        let d = random_small_diagram(&mut rng, 8);
        let Some(other) = nudged(&d, &mut rng) else {
            continue;
        };
        // keep only nudges that change the interpretation
        let (a, b) = (evaluate(&d).unwrap(), evaluate(&other).unwrap());
        if relatively_close(&a, &b, 1e-6) {
            redrawn += 1;
            continue;
        }
        let equal = diagrams_equal(&d, &other, 1e-9)
            .map_err(|e| format!("perturbed pair {different}: {e}"))?;
        ensure(!equal, || {
            format!("perturbed pair {different} compared equal")
        })?;
        different += 1;
    }
    Ok(format!("500 rewritten pairs ({steps} rewrites) equal; 500 perturbed pairs unequal ({redrawn} inert nudges redrawn)"))
}

fn rule_soundness() -> Outcome {
    let mut rng = rng(6);
    for rule in [RuleId::F1, RuleId::F2, RuleId::M, RuleId::L, RuleId::Id] {
        for i in 0..1000 {
            let (d, site) = random_site(&mut rng, &rule, 8);
            let after = apply(&site, &d).map_err(|e| format!("{rule} #{i}: {e}"))?;
            let (a, b) = (evaluate(&d).unwrap(), evaluate(&after).unwrap());
            ensure(relatively_close(&a, &b, 1e-9), || {
                format!("{rule} #{i} changed the interpretation")
            })?;
        }
    }
    let eps = 4.0 * f64::EPSILON;
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let (p, q, r): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        let errors = [
            (oplus(oplus(p, q), r) - oplus(p, oplus(q, r))).abs(),
            (oplus(p, q) - oplus(q, p)).abs(),
            (oplus(p, 0.0) - p).abs(),
            (oplus(p, 1.0) - (1.0 - p)).abs(),
        ];
        worst = errors.iter().fold(worst, |w, &e| w.max(e));
        ensure(oplus(p, 0.5) == 0.5 && oplus(0.5, q) == 0.5, || {
            format!("1/2 does not absorb {p} or {q}")
        })?;
    }
    ensure(worst <= eps, || {
        format!("oplus law error {worst:e} exceeds {eps:e}")
    })?;
    Ok(format!(
        "F1, F2, M, L, ID x 1000 at rel 1e-9; oplus laws on 1e5 triples, worst error {worst:e}"
    ))
}

fn all_matrices(rows: usize, cols: usize) -> impl Iterator<Item = F2Matrix> {
    (0..1usize << (rows * cols)).map(move |bits| {
        let mut m = F2Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, (bits >> (i * cols + j)) & 1 == 1);
            }
        }
        m
    })
}

fn arrow_oracle(a: &F2Matrix) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut out = vec![0.0; 1 << (m + n)];
    for y in 0..1usize << n {
        out[(a.mul_vec(&F2Vector::from_index(y, n)).to_index() << n) | y] = 1.0;
    }
    out
}

fn gf2_identities() -> Outcome {
    let mut invertible = 0;
    for n in 1..=3 {
        let s = subset_matrix(n).unwrap();
        for a in all_matrices(n, n).filter(F2Matrix::is_invertible) {
            let sigma = induced_permutation(&a).map_err(|e| e.to_string())?;
            ensure(a.mul(&s) == s.mul(&sigma), || {
                format!("subset identity fails for {a:?}")
            })?;
            invertible += 1;
        }
    }
    let mut rng = rng(7);
    let s4 = subset_matrix(4).unwrap();
    let mut random = 0;
    while random < 100 {
        let a = F2Matrix::from_rows(
            (0..4)
                .map(|_| F2Vector::from_bits((0..4).map(|_| rng.gen_bool(0.5))))
                .collect(),
            4,
        )
        .unwrap();
        if !a.is_invertible() {
            continue;
        }
        let sigma = induced_permutation(&a).map_err(|e| e.to_string())?;
        ensure(a.mul(&s4) == s4.mul(&sigma), || {
            format!("subset identity fails for {a:?}")
        })?;
        random += 1;
    }
    let mut compositions = 0;
    for (n, m, l) in
        (1..=3).flat_map(|n| (1..=3).flat_map(move |m| (1..=3).map(move |l| (n, m, l))))
    {
        let bs: Vec<F2Matrix> = all_matrices(l, m).collect();
        for a in all_matrices(m, n) {
            for b in &bs {
                let composed = compose_seq(&matrix_arrow(&a), &matrix_arrow(b)).unwrap();
                ensure(entries(&composed) == arrow_oracle(&b.mul(&a)), || {
                    format!("arrow(B)∘arrow(A) for {a:?}, {b:?}")
                })?;
                compositions += 1;
            }
        }
    }
    let mut blocks = 0;
    for (r1, c1, r2, c2) in [
        (1, 1, 1, 1),
        (1, 2, 2, 1),
        (2, 1, 1, 2),
        (2, 2, 1, 1),
        (1, 1, 2, 2),
        (3, 1, 1, 2),
        (1, 3, 2, 1),
    ] {
        for a in all_matrices(r1, c1) {
            for b in all_matrices(r2, c2) {
                let side = compose_par(&matrix_arrow(&a), &matrix_arrow(&b));
                ensure(entries(&side) == arrow_oracle(&a.direct_sum(&b)), || {
                    format!("arrow(A)∥arrow(B) for {a:?}, {b:?}")
                })?;
                blocks += 1;
            }
        }
    }
    Ok(format!(
        "{invertible} invertible A (n <= 3) and {random} at n = 4; {compositions} arrow compositions and {blocks} block sums"
    ))
}

fn and_gate() -> Outcome {
    let and = NonNegMatrix::new(2, 1, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let err = synthesize(&and)
        .err()
        .ok_or("AND synthesized without error")?;
    ensure(matches!(err, NormalFormError::NonAffine { .. }), || {
        format!("wrong error: {err}")
    })?;
    let file = corpus().join("matrices/and.json");
    let out = Command::new(env!("CARGO_BIN_EXE_deczx"))
        .arg("synthesize")
        .arg(&file)
        .output()
        .map_err(|e| e.to_string())?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure(
        out.status.code() == Some(3) && stderr.contains("support is not affine"),
        || format!("CLI exit {:?}: {stderr}", out.status.code()),
    )?;
    Ok(format!("library and CLI (exit 3) report: {err}"))
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn render(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_deczx"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "$ deczx {}\nexit: {}\n--- stdout\n{}--- stderr\n{}",
        args.join(" "),
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    ))
}

fn cli_determinism() -> Outcome {
    let diagrams = std::fs::read_dir(corpus().join("diagrams"))
        .map_err(|e| e.to_string())?
        .count();
    ensure(diagrams >= 20, || {
        format!("only {diagrams} corpus diagrams")
    })?;
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut checked = 0;
    for command in ["eval", "normalize", "equal", "synthesize"] {
        let mut files: Vec<PathBuf> = std::fs::read_dir(golden.join(command))
            .map_err(|e| format!("{command} goldens: {e}"))?
            .map(|e| e.map(|e| e.path()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        files.sort();
        let dir = corpus().join(if command == "synthesize" {
            "matrices"
        } else {
            "diagrams"
        });
        for file in files {
            let expected = std::fs::read_to_string(&file).map_err(|e| e.to_string())?;
            let header = expected
                .lines()
                .next()
                .and_then(|l| l.strip_prefix("$ deczx "))
                .ok_or("golden without header")?;
            let args: Vec<&str> = header.split(' ').collect();
            let (first, second) = (render(&dir, &args)?, render(&dir, &args)?);
            ensure(first == second, || {
                format!("{}: runs differ", file.display())
            })?;
            ensure(first == expected, || {
                format!("{}: output differs from golden", file.display())
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} golden files over {diagrams} diagrams reproduced byte-for-byte, twice"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "1 generator semantics",
            Duration::from_secs(1),
            generator_semantics,
        ),
        (
            "2 decoherence bridge",
            Duration::from_secs(5),
            decoherence_bridge,
        ),
        (
            "3 fourier round trip",
            Duration::from_secs(10),
            fourier_round_trip,
        ),
        (
            "4 normal-form round trip",
            Duration::from_secs(60),
            normal_form_round_trip,
        ),
        (
            "5 completeness surrogate",
            Duration::from_secs(60),
            completeness_surrogate,
        ),
        ("6 rule soundness", Duration::from_secs(30), rule_soundness),
        (
            "7 GF(2) identities",
            Duration::from_secs(30),
            gf2_identities,
        ),
        (
            "8 non-affine negative control",
            Duration::from_secs(1),
            and_gate,
        ),
        (
            "9 CLI determinism",
            Duration::from_secs(60),
            cli_determinism,
        ),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({elapsed:.2?}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name} ({elapsed:.2?}): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
}

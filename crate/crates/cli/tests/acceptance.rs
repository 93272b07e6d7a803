//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! Criteria 2, 3, 4 and 8 drive the real binary on the default corpus (200
//! objects, S=250, seed 0) and take roughly half an hour on one core.
//! Artifacts are kept under the cargo target tmp dir for inspection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use voxcolor::baselines::{upsample_devox, upsample_knn, upsample_waan};
use voxcolor::data::{default_corpus, CorpusConfig};
use voxcolor::eval::{psnr, read_csv_rows, CsvRow};
use voxcolor::geometry::{compute_offsets, devoxelize, voxelize, PointCloud, Rgb};
use voxcolor::model::{Batch, CuNet, ModelConfig};
use voxcolor::sparse::{self, CoordIndex, KernelMap, SparseCoords, SparseTensor};
use voxcolor::tensor::gradcheck::{check_gradients, random_tensor};
use voxcolor::tensor::{Graph, Tensor, Var};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workdir() -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Writes past the test harness's output capture so the verdicts show up in
/// a plain `cargo test` log.
fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    writeln!(err, "{line}").expect("write to stderr");
}

fn run(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_voxcolor"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    eprint!("{stdout}");
    if out.status.success() {
        Ok(stdout)
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

// ---------------------------------------------------------------- gradients

fn mse_to_random(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
    let shape = g.value(x).shape().to_vec();
    let t = random_tensor(&mut ChaCha8Rng::seed_from_u64(seed), &shape);
    let t = g.constant(t);
    g.mse_loss(x, t).unwrap()
}

fn random_sites(rng: &mut ChaCha8Rng, n: usize, extent: i32) -> Vec<[i32; 4]> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let c = [rng.gen_range(0..extent), rng.gen_range(0..extent), rng.gen_range(0..extent), 0];
        if seen.insert(c) {
            out.push(c);
        }
    }
    out
}

fn per_op_gradients() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut r = |shape: &[usize]| random_tensor::<f64>(&mut rng, shape);
    let eps = 1e-6;
    let idx: Arc<[u32]> = vec![0u32, 2, 2, 4, 1, 0, 3].into();
    let mut out = vec![
        ("matmul", check_gradients(&[r(&[4, 3]), r(&[3, 5])], eps, |g, v| {
            let y = g.matmul(v[0], v[1]).unwrap();
            mse_to_random(g, y, 1)
        })),
        ("add", check_gradients(&[r(&[4, 3]), r(&[4, 3])], eps, |g, v| {
            let y = g.add(v[0], v[1]).unwrap();
            mse_to_random(g, y, 2)
        })),
        ("add_bias", check_gradients(&[r(&[6, 3]), r(&[3])], eps, |g, v| {
            let y = g.add_bias(v[0], v[1]).unwrap();
            mse_to_random(g, y, 3)
        })),
        ("relu", check_gradients(&[r(&[8, 4])], eps, |g, v| {
            let y = g.relu(v[0]);
            mse_to_random(g, y, 4)
        })),
        ("concat_cols", check_gradients(&[r(&[5, 2]), r(&[5, 3])], eps, |g, v| {
            let y = g.concat_cols(v[0], v[1]).unwrap();
            mse_to_random(g, y, 5)
        })),
        ("gather_rows", check_gradients(&[r(&[5, 3])], eps, |g, v| {
            let y = g.gather_rows(v[0], idx.clone()).unwrap();
            mse_to_random(g, y, 6)
        })),
        ("scatter_add_rows", check_gradients(&[r(&[7, 3])], eps, |g, v| {
            let y = g.scatter_add_rows(v[0], idx.clone(), 5).unwrap();
            mse_to_random(g, y, 7)
        })),
        ("mse_loss", check_gradients(&[r(&[6, 3]), r(&[6, 3])], eps, |g, v| g.mse_loss(v[0], v[1]).unwrap())),
    ];
    for training in [true, false] {
        let mean = [0.1, -0.2, 0.3];
        let var = [0.5, 1.5, 2.0];
        let c = check_gradients(&[r(&[9, 3]), r(&[3]), r(&[3])], eps, |g, v| {
            let (y, _) = g.batchnorm(v[0], v[1], v[2], (&mean, &var), training, 1e-5).unwrap();
            mse_to_random(g, y, 8)
        });
        out.push((if training { "batchnorm(train)" } else { "batchnorm(eval)" }, c));
    }
    let sites = random_sites(&mut ChaCha8Rng::seed_from_u64(9), 40, 5);
    let kmap = Arc::new(SparseCoords::new(sites).unwrap().kernel_map(3).unwrap());
    out.push(("sparse_conv", check_gradients(&[r(&[40, 3]), r(&[27, 3, 4])], eps, |g, v| {
        let y = sparse::conv(g, v[0], v[1], &kmap).unwrap();
        mse_to_random(g, y, 10)
    })));
    out.into_iter().map(|(n, c)| (n, c.max_rel_err)).collect()
}

fn end_to_end_gradient() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sites = random_sites(&mut rng, 20, 6);
    let coords: Vec<[u32; 3]> = sites.iter().map(|c| [c[0] as u32, c[1] as u32, c[2] as u32]).collect();
    let colors: Vec<Rgb> = (0..20).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let hr = PointCloud::new(coords, Some(colors), 6).unwrap();
    let (lr, mapping) = voxelize(&hr, 2).unwrap();
    let cfg = ModelConfig { channels: 4, blocks: 1, kernel_size: 3, v_train: 2 };
    let mut net = CuNet::<f64>::with_init(cfg, 3, false).unwrap();
    let ids: Vec<_> = net.store().ids().collect();
    for &id in &ids {
        if net.store().entry(id).name.ends_with(".bias") {
            for b in net.store_mut().get_mut(id).data_mut() {
                *b = rng.gen_range(0.05..0.2) * if rng.gen() { 1.0 } else { -1.0 };
            }
        }
    }
    let batch = Batch::<f64>::new(&[(&lr, &hr, &mapping)], 3).unwrap();
    let loss = |net: &CuNet<f64>, grads: bool| {
        let mut g = if grads { Graph::new() } else { Graph::inference() };
        let pred = net.forward_batch(&mut g, &batch, true, &mut Vec::new()).unwrap();
        let t = g.constant(batch.target.clone().unwrap());
        let l = g.mse_loss(pred, t).unwrap();
        let value = g.value(l).item();
        let grads = grads.then(|| {
            g.backward(l).unwrap();
            g.param_grads(net.store())
        });
        (value, grads)
    };
    let grads = loss(&net, true).1.unwrap();
    let mut worst: f64 = 0.0;
    for id in ids {
        if !net.store().entry(id).trainable {
            continue;
        }
        let n = net.store().get(id).numel();
        let analytic = grads[id.index()].clone().unwrap_or_else(|| Tensor::zeros(&[n]));
        let (mut diff, mut na, mut nn) = (0.0f64, 0.0f64, 0.0f64);
        for e in 0..n {
            let x0 = net.store().get(id).data()[e];
            net.store_mut().get_mut(id).data_mut()[e] = x0 + 1e-5;
            let up = loss(&net, false).0;
            net.store_mut().get_mut(id).data_mut()[e] = x0 - 1e-5;
            let down = loss(&net, false).0;
            net.store_mut().get_mut(id).data_mut()[e] = x0;
            let fd = (up - down) / 2e-5;
            diff += (fd - analytic.data()[e]).powi(2);
            na += analytic.data()[e].powi(2);
            nn += fd * fd;
        }
        worst = worst.max(diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-10));
    }
    worst
}

fn criterion5() -> Outcome {
    let ops = per_op_gradients();
    let (name, op_err) = ops.iter().fold(("", 0.0f64), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
    let e2e = end_to_end_gradient();
    check(
        op_err < 1e-5 && e2e < 1e-3,
        format!("{} ops, worst {name} rel err {op_err:.2e} (< 1e-5); 20-point model rel err {e2e:.2e} (< 1e-3)", ops.len()),
    )
}

// ------------------------------------------------------------------ oracles

fn dense_conv(sites: &[[i32; 4]], x: &Tensor<f64>, w: &Tensor<f64>) -> Vec<f64> {
    let (cin, cout) = (w.shape()[1], w.shape()[2]);
    let at: HashMap<[i32; 3], usize> = sites.iter().enumerate().map(|(i, c)| ([c[0], c[1], c[2]], i)).collect();
    let d = sites.iter().flat_map(|c| c[..3].to_vec()).max().unwrap() + 1;
    // Dense grid evaluated everywhere, then read back at occupied sites.
    let mut grid = vec![0.0; (d * d * d) as usize * cout];
    for px in 0..d {
        for py in 0..d {
            for pz in 0..d {
                let o = ((px * d + py) * d + pz) as usize;
                let mut k = 0;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(&i) = at.get(&[px + dx, py + dy, pz + dz]) {
                                for a in 0..cin {
                                    for b in 0..cout {
                                        grid[o * cout + b] += x.row(i)[a] * w.data()[(k * cin + a) * cout + b];
                                    }
                                }
                            }
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    sites
        .iter()
        .flat_map(|c| {
            let o = ((c[0] * d + c[1]) * d + c[2]) as usize;
            grid[o * cout..(o + 1) * cout].to_vec()
        })
        .collect()
}

fn brute_nearest(lr: &PointCloud, h: [u32; 3], v: u32) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = lr
        .coords()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let d2: f64 = (0..3)
                .map(|a| (h[a] as f64 - (v as f64 * c[a] as f64 + (v as f64 - 1.0) / 2.0)).powi(2))
                .sum();
            (d2.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

fn max_diff(a: &[Rgb], b: &[Rgb]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs())).fold(0.0, f64::max)
}

fn random_cloud(n: usize, s: u32, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = random_sites(&mut rng, n, s as i32);
    let coords = sites.iter().map(|c| [c[0] as u32, c[1] as u32, c[2] as u32]).collect();
    let colors = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    PointCloud::new(coords, Some(colors), s).unwrap()
}

fn criterion6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    // Sparse convolution against a dense grid convolution.
    let sites = random_sites(&mut rng, 200, 9);
    let sc = Arc::new(SparseCoords::new(sites.clone()).unwrap());
    let x = random_tensor::<f64>(&mut rng, &[200, 3]);
    let w = random_tensor::<f64>(&mut rng, &[27, 3, 5]);
    let got = voxcolor::sparse::sparse_conv(&SparseTensor::new(sc.clone(), x.clone()).unwrap(), &w, &sc.kernel_map(3).unwrap()).unwrap();
    let conv_err = got.features.data().iter().zip(dense_conv(&sites, &x, &w)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // Kernel map against all pairs.
    let km = KernelMap::build(&CoordIndex::build(sites.clone()).unwrap(), 3).unwrap();
    let mut kmap_exact = true;
    for (k, off) in km.offsets().iter().enumerate() {
        let mut expected = Vec::new();
        for (o, co) in sites.iter().enumerate() {
            for (i, ci) in sites.iter().enumerate() {
                if (0..3).all(|a| ci[a] - co[a] == off[a]) {
                    expected.push((i as u32, o as u32));
                }
            }
        }
        kmap_exact &= km.pairs(k) == expected.as_slice();
    }

    // KNN and WAAN against linear scans.
    let v = 4;
    let lr = random_cloud(150, 10, 13);
    let hr = random_cloud(800, 40, 14).without_colors();
    let lc = lr.colors().unwrap();
    let (mut knn_oracle, mut waan_oracle) = (Vec::new(), Vec::new());
    for &h in hr.coords() {
        let near = brute_nearest(&lr, h, v);
        knn_oracle.push(std::array::from_fn(|c| near[..3].iter().map(|&(_, i)| lc[i][c]).sum::<f64>() / 3.0));
        let ball: Vec<_> = near.iter().filter(|(d, _)| *d <= 1.5 * v as f64).collect();
        waan_oracle.push(if ball.is_empty() {
            lc[near[0].1]
        } else {
            let ws: f64 = ball.iter().map(|(d, _)| 1.0 / (1e-8 + d)).sum();
            std::array::from_fn(|c| ball.iter().map(|&&(d, i)| lc[i][c] / (1e-8 + d)).sum::<f64>() / ws)
        });
    }
    let knn_err = max_diff(&upsample_knn(&lr, &hr, v, 3).unwrap(), &knn_oracle);
    let waan_err = max_diff(&upsample_waan(&lr, &hr, v, None).unwrap(), &waan_oracle);

    // Voxelize and devoxelize against grouping by integer division.
    let hr = random_cloud(3000, 30, 15);
    let (lr, mapping) = voxelize(&hr, 3).unwrap();
    let mut groups: BTreeMap<[u32; 3], Vec<usize>> = BTreeMap::new();
    for (j, p) in hr.coords().iter().enumerate() {
        groups.entry(p.map(|x| x / 3)).or_default().push(j);
    }
    let hc = hr.colors().unwrap();
    let mut vox_err: f64 = if groups.len() == lr.len() { 0.0 } else { f64::INFINITY };
    for (i, c) in lr.coords().iter().enumerate() {
        let Some(members) = groups.get(c) else {
            vox_err = f64::INFINITY;
            continue;
        };
        for ch in 0..3 {
            let mean = members.iter().map(|&j| hc[j][ch]).sum::<f64>() / members.len() as f64;
            vox_err = vox_err.max((mean - lr.colors().unwrap()[i][ch]).abs());
        }
    }
    let row: HashMap<[u32; 3], usize> = lr.coords().iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let devox_oracle: Vec<Rgb> = hr.coords().iter().map(|p| lr.colors().unwrap()[row[&p.map(|x| x / 3)]]).collect();
    let devox_err = max_diff(&devoxelize(lr.colors().unwrap(), &mapping).unwrap(), &devox_oracle);

    check(
        conv_err < 1e-6 && kmap_exact && knn_err < 1e-10 && waan_err < 1e-10 && vox_err < 1e-12 && devox_err < 1e-12,
        format!(
            "conv {conv_err:.1e} (< 1e-6), kernel map exact {kmap_exact}, knn {knn_err:.1e} / waan {waan_err:.1e} (< 1e-10), voxelize {vox_err:.1e} / devoxelize {devox_err:.1e} (< 1e-12)"
        ),
    )
}

fn criterion7() -> Outcome {
    let corpus = default_corpus(&CorpusConfig { count: 3, ..Default::default() }).unwrap();
    let hr = corpus.load_object(&corpus.objects[0]).unwrap();
    let (lr, _) = voxelize(&hr, 5).unwrap();
    let geometry = hr.without_colors();
    let net = CuNet::<f32>::new(ModelConfig::default(), 7).unwrap();
    let zero_exact = net.upsample(&lr, &geometry, 5).unwrap() == upsample_devox(&lr, &geometry, 5).unwrap();

    let (lr2, m2) = voxelize(&hr, 2).unwrap();
    let offsets = compute_offsets(&hr, &lr2, &m2).unwrap();
    let binary = offsets.iter().flatten().all(|&d| d == -1.0 || d == 1.0);

    let gt = hr.colors().unwrap();
    let inf = psnr(gt, gt).unwrap() == f64::INFINITY;
    let zeros = vec![[0.0; 3]; 100];
    let tenth = vec![[0.1; 3]; 100];
    let twenty = psnr(&tenth, &zeros).unwrap();
    check(
        zero_exact && binary && inf && twenty == 20.0,
        format!(
            "zero output layer == devox on {} points: {zero_exact}; 2x offsets in {{-1,1}}: {binary}; identical -> +inf: {inf}; 0.1 error -> {twenty} dB",
            hr.len()
        ),
    )
}

// ----------------------------------------------------------- CLI criteria

fn mean_psnr(rows: &[CsvRow], method: &str, v_train: Option<u32>, v_test: u32) -> Option<f64> {
    let sel: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.v_train == v_train && r.v_test == v_test)
        .map(|r| r.psnr_db)
        .collect();
    (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
}

struct Trained {
    rows: Vec<CsvRow>,
    loss_drop: Option<(f64, f64)>,
}

fn train_and_eval(dir: &Path) -> Result<Trained, String> {
    run(dir, &["--seed", "0", "gen", "--out", "manifest.toml"])?;
    for v in ["5", "2"] {
        run(dir, &["--seed", "0", "train", "--manifest", "manifest.toml", "--ratio", v, "--out", &format!("cunet{v}.ckpt")])?;
    }
    run(
        dir,
        &[
            "eval", "--manifest", "manifest.toml", "--methods", "devox,knn,waan,cunet", "--ratios", "5,2",
            "--checkpoint", "cunet5.ckpt", "--checkpoint", "cunet2.ckpt", "--out", "eval.csv",
        ],
    )?;
    let rows = read_csv_rows(&dir.join("eval.csv")).map_err(|e| e.to_string())?;
    let log = std::fs::read_to_string(dir.join("cunet5.log.csv")).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = log.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect();
    Ok(Trained {
        rows,
        loss_drop: (losses.len() >= 2).then(|| (losses[0], *losses.last().unwrap())),
    })
}

fn criterion2(t: &Trained) -> Outcome {
    let get = |m, vt| mean_psnr(&t.rows, m, vt, 5).ok_or(format!("no {m} rows at 5x"));
    let (cunet, devox, knn, waan) = (get("cunet", Some(5))?, get("devox", None)?, get("knn", None)?, get("waan", None)?);
    check(
        cunet - devox >= 0.3 && cunet - knn >= 0.3,
        format!(
            "5x test PSNR: cunet {cunet:.3}, devox {devox:.3} ({:+.3}), knn-3 {knn:.3} ({:+.3}), waan {waan:.3}; need >= +0.3 dB over devox and knn",
            cunet - devox,
            cunet - knn
        ),
    )
}

fn criterion3(t: &Trained) -> Outcome {
    let get = |m, vtr, vte| mean_psnr(&t.rows, m, vtr, vte).ok_or(format!("no {m} rows"));
    let cross = get("cunet", Some(5), 2)?;
    let native = get("cunet", Some(2), 2)?;
    let devox = get("devox", None, 2)?;
    let reverse = get("cunet", Some(2), 5)?;
    let devox5 = get("devox", None, 5)?;
    check(
        cross >= devox && cross >= native - 0.5,
        format!(
            "at 2x: 5x-trained {cross:.3}, 2x-trained {native:.3}, devox {devox:.3}; recorded: 2x-trained at 5x {reverse:.3} vs devox {devox5:.3}"
        ),
    )
}

fn criterion4(dir: &Path) -> Outcome {
    run(dir, &["--seed", "0", "bench", "--method", "cunet", "--checkpoint", "cunet5.ckpt", "--ratio", "5", "--out", "bench.csv"])?;
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("bench.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let rep = &s["report"];
    let r2 = rep["fit"]["r2"].as_f64().ok_or("missing r2")?;
    let sizes: Vec<u64> = rep["samples"].as_array().ok_or("missing samples")?.iter().filter_map(|x| x["n_hr"].as_u64()).collect();
    let span_ok = sizes.len() >= 5 && sizes[0] <= 60_000 && *sizes.last().unwrap() >= 700_000;
    check(
        r2 >= 0.98 && span_ok,
        format!(
            "R^2 = {r2:.4} (>= 0.98) over n_hr {sizes:?} on {} threads, slope {:.3e} s/point",
            rep["threads"], rep["fit"]["slope"].as_f64().unwrap_or(f64::NAN)
        ),
    )
}

fn criterion8(dir: &Path) -> Outcome {
    let mut ckpts = Vec::new();
    let mut evals = Vec::new();
    for run_id in ["a", "b"] {
        let ckpt = format!("det_{run_id}.ckpt");
        run(
            dir,
            &["--seed", "7", "--threads", "2", "train", "--manifest", "manifest.toml", "--ratio", "5", "--epochs", "2", "--out", &ckpt],
        )?;
        let csv = format!("det_{run_id}.csv");
        run(
            dir,
            &["--seed", "7", "--threads", "2", "eval", "--manifest", "manifest.toml", "--methods", "devox,knn,waan,cunet", "--checkpoint", &ckpt, "--out", &csv],
        )?;
        ckpts.push(std::fs::read(dir.join(&ckpt)).map_err(|e| e.to_string())?);
        let mut rows = read_csv_rows(&dir.join(&csv)).map_err(|e| e.to_string())?;
        rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
        evals.push(rows);
    }
    check(
        ckpts[0] == ckpts[1] && evals[0] == evals[1],
        format!(
            "two train+eval runs: checkpoints identical ({} bytes): {}; {} CSV rows identical excluding wall_ms: {}",
            ckpts[0].len(),
            ckpts[0] == ckpts[1],
            evals[0].len(),
            evals[0] == evals[1]
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let dir = workdir();
    let mut results: BTreeMap<u32, (&str, Outcome)> = BTreeMap::new();
    results.insert(5, ("gradient correctness", criterion5()));
    results.insert(6, ("oracle equivalences", criterion6()));
    results.insert(7, ("exact identities", criterion7()));
    match train_and_eval(&dir) {
        Ok(t) => {
            results.insert(2, ("relative quality at 5x", criterion2(&t)));
            results.insert(3, ("cross-ratio generalization", criterion3(&t)));
            if let Some((first, last)) = t.loss_drop {
                let drop = 1.0 - last / first;
                report(&format!(
                    "supplementary [{}] 5x training loss epoch 0 -> last: {first:.4e} -> {last:.4e} ({:.1}% drop; >= 50% expected)",
                    if drop >= 0.5 { "PASS" } else { "FAIL" },
                    100.0 * drop
                ));
            }
        }
        Err(e) => {
            results.insert(2, ("relative quality at 5x", Err(e.clone())));
            results.insert(3, ("cross-ratio generalization", Err(e)));
        }
    }
    results.insert(4, ("linear latency scaling", criterion4(&dir)));
    results.insert(8, ("determinism", criterion8(&dir)));
    let substitutes_ok = [2, 5, 6, 7].iter().all(|k| results[k].1.is_ok());
    results.insert(
        1,
        (
            "full-scale benchmark tables (substituted)",
            check(substitutes_ok, "full-scale tables need licensed data and GPU training; substituted by criteria 2, 5, 6 and 7".into()),
        ),
    );

    let mut failed = Vec::new();
    for (k, (name, outcome)) in &results {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(*k);
                ("FAIL", d)
            }
        };
        report(&format!("criterion {k} [{tag}] {name}: {detail}"));
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}


//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use scnn::conv::{conv2d_forward, relu_forward, sigmoid_forward, weighted_bce_upper};
use scnn::harness::config::parse_layers;
use scnn::harness::{compare_cnn_scnn, train, Dataset, LayerParams, Network, NetworkConfig, Optimizer, OptimizerKind, TaskConfig};
use scnn::oracle::{brute_force_expand_count, fd_gradient, FdSpec, KernelKind};
use scnn::packed::{pack, packed_sym_conv, packed_sym_conv_counted, packed_sym_gen_conv, packed_sym_gen_conv_counted};
use scnn::symkernel::{fold_gen_grad, fold_pres_grad};
use scnn::tensor::{DenseTensor, PairTensor, Rng};
use scnn::{
    conv2d_backward, self_cartesian, sym_gen_layer_forward, sym_pres_layer_forward, SequenceFeatures, SymGenKernel,
    SymPresKernel, SymmetryCheck,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, ok: String, bad: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad())
    }
}

fn seq(l: usize, n: usize, rng: &mut Rng) -> SequenceFeatures {
    SequenceFeatures::new(DenseTensor::uniform(&[l, n], 1.0, rng).unwrap()).unwrap()
}

fn random_symmetric(l: usize, c: usize, rng: &mut Rng) -> PairTensor {
    let raw = DenseTensor::uniform(&[l, l, c], 1.0, rng).unwrap();
    let sym = raw.zip_map(&raw.transpose_spatial().unwrap(), |a, b| 0.5 * (a + b)).unwrap();
    PairTensor::symmetric(sym, 0.0).unwrap()
}

fn grid() -> Vec<[usize; 4]> {
    let mut pts = vec![];
    for l in 1..=10 {
        for n in 1..=4 {
            for c in [1, 3, 5] {
                for f in 1..=4 {
                    pts.push([l, n, c, f]);
                }
            }
        }
    }
    pts
}

fn criterion_1() -> Outcome {
    let mut rng = Rng::new(101);
    let mut worst = 0.0f64;
    let pts = grid();
    for &[l, n, c, f] in &pts {
        let x = seq(l, n, &mut rng);
        let k = SymGenKernel::random(c, n, f, 1.0, &mut rng).unwrap();
        let (out, _) = sym_gen_layer_forward(&self_cartesian(&x), &k, SymmetryCheck::Checked).unwrap();
        worst = worst.max(out.tensor().asymmetry().unwrap());
    }
    check(
        worst <= 1e-12,
        format!("{} generating-layer instances, max asymmetry {worst:.2e}", pts.len()),
        || format!("max asymmetry {worst:e} > 1e-12"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = Rng::new(102);
    let mut worst = 0.0f64;
    let count = 120;
    for k in 0..count {
        let (l, c, m, depth) = (1 + rng.below(12), [1, 3, 5][rng.below(3)], 1 + rng.below(4), 1 + k % 4);
        let mut z = random_symmetric(l, m, &mut rng);
        for d in 0..depth {
            let kern = SymPresKernel::random(c, m, m, 1.0, &mut rng).unwrap();
            let (out, _) = sym_pres_layer_forward(&z, &kern, SymmetryCheck::Unchecked).unwrap();
            let t = if d + 1 < depth { relu_forward(out.tensor()) } else { out.into_tensor() };
            // drop the flag so nothing downstream relies on it
            z = PairTensor::new(t).unwrap();
        }
        worst = worst.max(z.tensor().asymmetry().unwrap());
    }
    check(
        worst <= 1e-11,
        format!("{count} chains of 1-4 preserving layers with ReLU, max asymmetry {worst:.2e}"),
        || format!("max asymmetry {worst:e} > 1e-11"),
    )
}

/// gen -> relu -> pres -> sigmoid -> weighted BCE, gradients of all four
/// packed tensors against central differences.
fn pipeline_grad_error(l: usize, c: usize, n: usize, f: usize, rng: &mut Rng) -> f64 {
    let x = seq(l, n, rng);
    let mut label = DenseTensor::zeros(&[l, l, 1]).unwrap();
    for i in 0..l {
        for j in (i + 1)..l {
            let v = rng.below(2) as f64;
            label.set(&[i, j, 0], v);
            label.set(&[j, i, 0], v);
        }
    }
    let gen = SymGenKernel::random(c, n, f, 0.5, rng).unwrap();
    let pres = SymPresKernel::random(c, f, 1, 0.5, rng).unwrap();
    let y = self_cartesian(&x);
    let loss = |g: &SymGenKernel, p: &SymPresKernel| -> f64 {
        let h = relu_forward(&conv2d_forward(&y, &g.expand()).unwrap());
        let z = conv2d_forward(&h, &p.expand()).unwrap();
        weighted_bce_upper(&sigmoid_forward(&z), &label, 5.0, 1).unwrap().0
    };

    let (wg, wp) = (gen.expand(), pres.expand());
    let pre = conv2d_forward(&y, &wg).unwrap();
    let h = relu_forward(&pre);
    let p = sigmoid_forward(&conv2d_forward(&h, &wp).unwrap());
    let (_, dp) = weighted_bce_upper(&p, &label, 5.0, 1).unwrap();
    let dz = scnn::conv::sigmoid_backward(&p, &dp).unwrap();
    let gp = conv2d_backward(&h, &wp, &dz).unwrap();
    let dh = scnn::conv::relu_backward(&pre, &gp.d_input).unwrap();
    let gg = conv2d_backward(&y, &wg, &dh).unwrap();
    let analytic = [fold_gen_grad(&gg.d_weights).unwrap(), gg.d_bias, fold_pres_grad(&gp.d_weights).unwrap(), gp.d_bias];

    let spec = FdSpec::default();
    let mut worst = 0.0f64;
    for (which, a) in analytic.iter().enumerate() {
        let base = [gen.packed(), gen.bias(), pres.packed(), pres.bias()][which].clone();
        let numeric = fd_gradient(
            |t| {
                let (mut g, mut q) = (gen.clone(), pres.clone());
                match which {
                    0 => *g.packed_mut() = t.clone(),
                    1 => *g.bias_mut() = t.clone(),
                    2 => *q.packed_mut() = t.clone(),
                    _ => *q.bias_mut() = t.clone(),
                }
                Ok(loss(&g, &q))
            },
            &base,
            &spec,
        )
        .unwrap();
        worst = worst.max(spec.worst_rel_err(a, &numeric).unwrap());
    }
    worst
}

fn network_grad_error(rng: &mut Rng) -> f64 {
    let cfg = NetworkConfig {
        layers: parse_layers("gen:3:3:relu,pres:3:3:relu,pres:3:1:sigmoid").unwrap(),
        n: 2,
        min_sep: 2,
        ..NetworkConfig::default()
    };
    let mut net = Network::init(&cfg, rng).unwrap();
    // zero initial biases can put a pre-activation exactly on the ReLU kink
    // where no finite difference is meaningful
    for (idx, p) in net.params_mut().into_iter().enumerate() {
        if idx % 2 == 1 {
            *p = DenseTensor::uniform(p.shape(), 0.1, rng).unwrap();
        }
    }
    let (l, valid) = (7, 5 + rng.below(3));
    let mut xd = DenseTensor::uniform(&[l, 2], 1.0, rng).unwrap();
    xd.data_mut()[valid * 2..].fill(0.0);
    let x = SequenceFeatures::new(xd).unwrap();
    let mut label = DenseTensor::zeros(&[l, l]).unwrap();
    for i in 0..valid {
        for j in (i + 1)..valid {
            let v = rng.below(2) as f64;
            label.set(&[i, j], v);
            label.set(&[j, i], v);
        }
    }
    let sg = net.loss_and_grads(&x, &label, valid, 5.0, 2).unwrap();
    let spec = FdSpec::default();
    let mut worst = 0.0f64;
    for p in 0..sg.grads.len() {
        let numeric = fd_gradient(
            |t| {
                let mut n = net.clone();
                *n.params_mut()[p] = t.clone();
                Ok(n.loss_and_grads(&x, &label, valid, 5.0, 2).unwrap().loss)
            },
            net.params()[p],
            &spec,
        )
        .unwrap();
        worst = worst.max(spec.worst_rel_err(&sg.grads[p], &numeric).unwrap());
    }
    worst
}

fn criterion_3() -> Outcome {
    let mut rng = Rng::new(103);
    let mut worst = 0.0f64;
    let mut count = 0;
    for k in 0..45 {
        let (l, c, n, f) = (2 + k % 7, [1, 3, 5][k % 3], 1 + k % 3, 1 + (k / 3) % 3);
        worst = worst.max(pipeline_grad_error(l, c, n, f, &mut rng));
        count += 1;
    }
    for _ in 0..10 {
        worst = worst.max(network_grad_error(&mut rng));
        count += 1;
    }
    check(
        worst <= 1e-5,
        format!("{count} instances (45 two-layer pipelines, 10 padded 3-layer networks), worst rel err {worst:.2e}"),
        || format!("worst relative error {worst:e} > 1e-5"),
    )
}

fn criterion_4() -> Outcome {
    let task = TaskConfig { seq_len: 10, min_len: 8, train: 10, val: 0, test: 1, ..TaskConfig::default() };
    let data = Dataset::generate(&task, 104).unwrap();
    let batch: Vec<_> = data.train.iter().collect();
    let padded = scnn::harness::data::pad_batch(&batch).unwrap();
    let mut details = vec![];
    for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let cfg = NetworkConfig {
            layers: parse_layers("gen:3:4:relu,pres:3:4:relu,pres:3:1:sigmoid").unwrap(),
            optimizer: kind,
            learning_rate: if kind == OptimizerKind::Sgd { 0.05 } else { 0.01 },
            weight_decay: 1e-4,
            min_sep: 3,
            ..NetworkConfig::default()
        };
        let mut net = Network::init(&cfg, &mut Rng::new(4)).unwrap();
        let mut opt = Optimizer::new(kind, cfg.learning_rate, cfg.weight_decay).unwrap();
        let before = net.clone();
        for step in 0..100 {
            let b = step % padded.features.len();
            let sg = net
                .loss_and_grads(&padded.features[b], &padded.labels[b], padded.lengths[b], 5.0, 3)
                .unwrap();
            opt.step(&mut net.params_mut(), &sg.grads).unwrap();
        }
        if net == before {
            return Err(format!("{kind:?}: parameters did not move"));
        }
        for (idx, layer) in net.layers().iter().enumerate() {
            let LayerParams::Sym(k) = layer else { return Err(format!("layer {idx} is not symmetric")) };
            if !k.expansion_is_tied() {
                return Err(format!("{kind:?}: layer {idx} expansion breaks its tying predicate"));
            }
        }
        details.push(format!("{kind:?}"));
    }
    Ok(format!("100 steps each with {}, every re-expanded kernel exactly tied", details.join(" and ")))
}

fn criterion_5() -> Outcome {
    let mut rng = Rng::new(105);
    let pts = grid();
    for &[_, n, c, f] in &pts {
        let gen = SymGenKernel::random(c, n, f, 1.0, &mut rng).unwrap();
        let pres = SymPresKernel::random(c, n, f, 1.0, &mut rng).unwrap();
        let formula = c * (c + 1) * n * f / 2;
        let (g_stored, g_full) = brute_force_expand_count(KernelKind::Generating, c, n, f).unwrap();
        let (p_stored, p_full) = brute_force_expand_count(KernelKind::Preserving, c, n, f).unwrap();
        if gen.stored_count() != formula || g_stored != formula || g_full != c * c * 2 * n * f {
            return Err(format!("generating C={c} n={n} F={f}: stored {} / enumerated {g_stored}, expected {formula}", gen.stored_count()));
        }
        if pres.stored_count() != formula || p_stored != formula || p_full != c * c * n * f {
            return Err(format!("preserving C={c} m={n} F={f}: stored {} / enumerated {p_stored}, expected {formula}", pres.stored_count()));
        }
    }
    let stacks = [
        "gen:3:8:relu,pres:3:8:relu,pres:3:1:sigmoid",
        "gen:5:16:relu,pres:3:16:relu,pres:3:16:relu,pres:1:1:sigmoid",
        "gen:1:4:relu,pres:1:1:sigmoid",
    ];
    let mut ratios = vec![];
    for layers in stacks {
        let scnn = NetworkConfig { layers: parse_layers(layers).unwrap(), ..NetworkConfig::default() };
        let s = Network::init(&scnn, &mut rng).unwrap();
        let c = Network::init(&scnn.twin(), &mut rng).unwrap();
        if !(s.total_param_count() < c.total_param_count() && s.kernel_param_count() < c.kernel_param_count()) {
            return Err(format!("{layers}: SCNN {} params vs CNN {}", s.total_param_count(), c.total_param_count()));
        }
        ratios.push(format!("{}/{}", s.total_param_count(), c.total_param_count()));
    }
    Ok(format!("{} grid points match C(C+1)nF/2 and C(C+1)mF/2; SCNN/CNN params {}", pts.len(), ratios.join(", ")))
}

fn criterion_6() -> Outcome {
    let mut rng = Rng::new(106);
    let mut worst = 0.0f64;
    let count = 120;
    for k in 0..count {
        let (l, c, m, f) = (1 + rng.below(14), [1, 3, 5][rng.below(3)], 1 + rng.below(4), 1 + rng.below(4));
        if k % 2 == 0 {
            let z = random_symmetric(l, m, &mut rng);
            let kern = SymPresKernel::random(c, m, f, 1.0, &mut rng).unwrap();
            let full = conv2d_forward(z.tensor(), &kern.expand()).unwrap();
            let packed = packed_sym_conv(&pack(&z).unwrap(), &kern).unwrap();
            worst = worst.max(packed.unpack().tensor().max_abs_diff(&full).unwrap());
        } else {
            let x = seq(l, m, &mut rng);
            let kern = SymGenKernel::random(c, m, f, 1.0, &mut rng).unwrap();
            let full = conv2d_forward(&self_cartesian(&x), &kern.expand()).unwrap();
            let packed = packed_sym_gen_conv(&x, &kern).unwrap();
            worst = worst.max(packed.unpack().tensor().max_abs_diff(&full).unwrap());
        }
    }
    if worst > 1e-12 {
        return Err(format!("packed and full paths differ by {worst:e}"));
    }
    for l in 1..=128 {
        let z = random_symmetric(l, 2, &mut rng);
        let p = pack(&z).unwrap();
        // entries / (L*L*c) == (L+1)/(2L), compared in integers
        if p.data().len() * 2 * l != (l + 1) * z.tensor().len() {
            return Err(format!("L={l}: storage {} of {}", p.data().len(), z.tensor().len()));
        }
    }
    let mut mac = vec![];
    for l in [32, 48, 64] {
        let z = random_symmetric(l, 3, &mut rng);
        let kern = SymPresKernel::random(3, 3, 4, 1.0, &mut rng).unwrap();
        let (_, full) = scnn::conv::conv2d_forward_counted(z.tensor(), &kern.expand()).unwrap();
        let (_, packed) = packed_sym_conv_counted(&pack(&z).unwrap(), &kern).unwrap();
        let x = seq(l, 3, &mut rng);
        let gk = SymGenKernel::random(3, 3, 4, 1.0, &mut rng).unwrap();
        let (_, gfull) = scnn::conv::conv2d_forward_counted(&self_cartesian(&x), &gk.expand()).unwrap();
        let (_, stats) = packed_sym_gen_conv_counted(&x, &gk).unwrap();
        let (r1, r2) = (packed as f64 / full as f64, stats.macs as f64 / gfull as f64);
        if r1 > 0.55 || r2 > 0.55 {
            return Err(format!("L={l}: MAC ratios {r1:.4} / {r2:.4} exceed 0.55"));
        }
        mac.push(format!("L={l}: {r1:.4}"));
    }
    Ok(format!("{count} instances agree to {worst:.2e}; storage ratio exact for L=1..128; MAC ratio {}", mac.join(", ")))
}

fn comparison_configs() -> (NetworkConfig, TaskConfig) {
    let scnn = NetworkConfig {
        layers: parse_layers("gen:3:8:relu,pres:3:8:relu,pres:3:1:sigmoid").unwrap(),
        n: 4,
        learning_rate: 0.005,
        epochs: 15,
        batch_size: 10,
        min_sep: 3,
        seed: 2024,
        ..NetworkConfig::default()
    };
    let task = TaskConfig {
        seq_len: 30,
        min_len: 30,
        alphabet: 4,
        min_sep: 3,
        train: 200,
        val: 0,
        test: 50,
        trials: 5,
        ..TaskConfig::default()
    };
    (scnn, task)
}

fn criterion_7() -> Outcome {
    let (scnn, task) = comparison_configs();
    let cnn = scnn.twin();
    let rep = compare_cnn_scnn(&scnn, &cnn, &task).map_err(|e| e.to_string())?;
    let (s, c) = (rep.scnn.test_acc.mean, rep.cnn.test_acc.mean);
    if s < c - 0.02 {
        return Err(format!("SCNN mean test acc {s:.4} < CNN {c:.4} - 0.02"));
    }
    if rep.kernel_param_ratio > 0.7 {
        return Err(format!("kernel parameter ratio {:.3} > 0.7", rep.kernel_param_ratio));
    }

    let memo_task = TaskConfig { train: 20, test: 1, trials: 1, ..task };
    let data = Dataset::generate(&memo_task, 7).map_err(|e| e.to_string())?;
    let memo_cfg = NetworkConfig { epochs: 40, batch_size: 5, ..scnn };
    let mut memo = vec![];
    for cfg in [memo_cfg.clone(), memo_cfg.twin()] {
        let out = train(&cfg, &data).map_err(|e| e.to_string())?;
        if out.train.accuracy < 0.9 {
            return Err(format!("memorization train accuracy {:.4} < 0.9", out.train.accuracy));
        }
        memo.push(out.train.accuracy);
    }
    Ok(format!(
        "test acc SCNN {s:.4}±{:.4} vs CNN {c:.4}±{:.4}; kernel params {}/{} = {:.3}; memorization acc {:.4} / {:.4}",
        rep.scnn.test_acc.sd,
        rep.cnn.test_acc.sd,
        rep.scnn.kernel_params,
        rep.cnn.kernel_params,
        rep.kernel_param_ratio,
        memo[0],
        memo[1]
    ))
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = work.path().join("small.cfg");
    fs::write(
        &cfg_path,
        "layers = gen:3:4:relu,pres:3:1:sigmoid\nseq_len = 12\nmin_len = 9\ntrain = 12\nval = 2\ntest = 4\n\
         trials = 2\nepochs = 3\nbatch_size = 4\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let input = work.path().join("x.sct1");
    DenseTensor::uniform(&[6, 3], 1.0, &mut Rng::new(8)).unwrap().save(&input).unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("gradcheck", vec!["--sizes", "L=3,5;C=1,3;n=2;F=2"]),
        ("symcheck", vec![]),
        ("packbench", vec!["--sizes", "L=8,16"]),
        ("train", vec!["--config", cfg]),
        ("compare", vec!["--config", cfg]),
        ("cartesian", vec!["--input", input.to_str().unwrap()]),
        ("heatmap", vec!["--config", cfg]),
    ];
    let mut files = 0;
    for (cmd, extra) in &runs {
        let mut trees = vec![];
        for rep in 0..2 {
            let out = work.path().join(format!("{cmd}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_scnn"))
                .arg(cmd)
                .args(extra)
                .args(["--seed", "17", "--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{cmd} exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
            }
            trees.push(read_tree(&out));
        }
        if trees[0].is_empty() || trees[0] != trees[1] {
            return Err(format!("{cmd}: report files differ between runs"));
        }
        files += trees[0].len();
    }
    Ok(format!("{} subcommands run twice, {files} report files byte-identical", runs.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("generating-layer output symmetry", criterion_1, Duration::from_secs(10)),
        ("preserving-chain symmetry", criterion_2, Duration::from_secs(10)),
        ("packed gradients vs finite differences", criterion_3, Duration::from_secs(60)),
        ("training keeps kernels tied", criterion_4, Duration::from_secs(30)),
        ("parameter counts", criterion_5, Duration::from_secs(60)),
        ("packed equivalence and savings", criterion_6, Duration::from_secs(60)),
        ("symmetric vs plain comparison", criterion_7, Duration::from_secs(600)),

        ("CLI determinism", criterion_8, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (idx, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed();
        let result = match result {
            Ok(detail) if secs > *budget => Err(format!("{detail}; took {secs:.1?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.2?}]", idx + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.2?}]", idx + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

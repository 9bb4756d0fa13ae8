//! `scnn` command-line interface.
//!
//! Exit status: 0 on success, 1 when a check fails or a run errors, 2 for
//! usage and configuration errors. Every file a subcommand writes goes under
//! `--out`, and its content depends only on the config and seed; wall-clock
//! timings are printed to stdout but never written to files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::cartesian::{self_cartesian, SequenceFeatures};
use crate::conv::{
    conv2d_backward, conv2d_forward, conv2d_forward_counted, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, weighted_bce_upper,
};
use crate::error::{Error, Result};
use crate::harness::report::{self, TrainSummary};
use crate::harness::{compare_cnn_scnn, train, Dataset, ExperimentConfig};
use crate::oracle::{fd_gradient, FdSpec};
use crate::packed::{pack, packed_len, packed_sym_conv_counted, packed_sym_gen_conv_counted};
use crate::par;
use crate::symkernel::{
    fold_gen_grad, fold_pres_grad, sym_gen_layer_forward, sym_pres_layer_forward, SymGenKernel, SymKernel,
    SymPresKernel, SymmetryCheck,
};
use crate::tensor::{DenseTensor, PairTensor, Rng};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "scnn", version, about = "Symmetric pair-map convolution tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config file (key=value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for report files.
    #[arg(long, global = true, default_value = "scnn-out")]
    pub out: PathBuf,

    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Size grid such as "L=4,8;C=1,3;n=2,4;F=2".
    #[arg(long, global = true)]
    pub sizes: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference check of folded packed-parameter gradients.
    Gradcheck,
    /// Output symmetry of generating layers and preserving chains.
    Symcheck,
    /// Packed vs full convolution: storage, MACs, agreement, wall-clock.
    Packbench,
    /// Train one network on a synthetic task.
    Train,
    /// Train a symmetric network and its plain twin over several trials.
    Compare,
    /// Self-Cartesian lift of an SCT1 `L x n` tensor.
    Cartesian {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train, then export the predicted map of the first test sequence as CSV.
    Heatmap,
}

/// Fold functions used by `gradcheck`; replaceable to test the checker.
#[derive(Clone, Copy)]
pub struct GradcheckHooks {
    pub fold_gen: fn(&DenseTensor) -> Result<DenseTensor>,
    pub fold_pres: fn(&DenseTensor) -> Result<DenseTensor>,
}

impl Default for GradcheckHooks {
    fn default() -> Self {
        GradcheckHooks { fold_gen: fold_gen_grad, fold_pres: fold_pres_grad }
    }
}

enum Failure {
    Usage(String),
    Check(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Run(other),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &GradcheckHooks::default())
}

pub fn run_with<I, T>(args: I, hooks: &GradcheckHooks) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gradcheck => cmd_gradcheck(&cli, hooks),
        Command::Symcheck => cmd_symcheck(&cli),
        Command::Packbench => cmd_packbench(&cli),
        Command::Train => cmd_train(&cli),
        Command::Compare => cmd_compare(&cli),
        Command::Cartesian { input } => cmd_cartesian(&cli, input),
        Command::Heatmap => cmd_heatmap(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            EXIT_FAIL
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

/// Parsed `--sizes` grid; keys missing from the string keep their defaults.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeGrid {
    pub l: Vec<usize>,
    pub c: Vec<usize>,
    pub n: Vec<usize>,
    pub f: Vec<usize>,
}

impl SizeGrid {
    pub fn parse(spec: Option<&str>, defaults: SizeGrid) -> Result<SizeGrid> {
        let Some(spec) = spec else { return Ok(defaults) };
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) =
                part.split_once('=').ok_or_else(|| Error::config(format!("size entry {part:?} is not KEY=v1,v2")))?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|e| Error::config(format!("sizes {key}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                return Err(Error::config(format!("sizes {key} has no values")));
            }
            map.insert(key.trim(), values);
        }
        let mut grid = defaults;
        for (key, values) in map {
            match key {
                "L" => grid.l = values,
                "C" => grid.c = values,
                "n" => grid.n = values,
                "F" => grid.f = values,
                other => return Err(Error::config(format!("unknown size key {other:?} (expected L, C, n, F)"))),
            }
        }
        if grid.c.iter().any(|c| c % 2 == 0) {
            return Err(Error::config("kernel sizes C must be odd"));
        }
        if [&grid.l, &grid.c, &grid.n, &grid.f].iter().any(|v| v.contains(&0)) {
            return Err(Error::config("sizes must be positive"));
        }
        Ok(grid)
    }

    fn points(&self) -> Vec<[usize; 4]> {
        let mut pts = vec![];
        for &l in &self.l {
            for &c in &self.c {
                for &n in &self.n {
                    for &f in &self.f {
                        pts.push([l, c, n, f]);
                    }
                }
            }
        }
        pts
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.network.seed = seed;
    }
    Ok(cfg)
}

// ---------------------------------------------------------------- gradcheck

/// One gen -> relu -> pres -> sigmoid -> weighted BCE instance.
struct GradInstance {
    x: SequenceFeatures,
    label: DenseTensor,
    gen: SymGenKernel,
    pres: SymPresKernel,
}

const GRAD_POS_WEIGHT: f64 = 3.0;

impl GradInstance {
    fn random(l: usize, c: usize, n: usize, f: usize, rng: &mut Rng) -> Result<Self> {
        let x = SequenceFeatures::new(DenseTensor::uniform(&[l, n], 1.0, rng)?)?;
        let mut label = DenseTensor::zeros(&[l, l, 1])?;
        for i in 0..l {
            for j in (i + 1)..l {
                let v = rng.below(2) as f64;
                label.set(&[i, j, 0], v);
                label.set(&[j, i, 0], v);
            }
        }
        let gen = SymGenKernel::random(c, n, f, 0.5, rng)?;
        let pres = SymPresKernel::random(c, f, 1, 0.5, rng)?;
        Ok(GradInstance { x, label, gen, pres })
    }

    fn loss(&self, gen: &SymGenKernel, pres: &SymPresKernel) -> Result<f64> {
        let y = self_cartesian(&self.x);
        let (h, _) = sym_gen_layer_forward(&y, gen, SymmetryCheck::Unchecked)?;
        let a = PairTensor::new(relu_forward(h.tensor()))?;
        let (z, _) = sym_pres_layer_forward(&a, pres, SymmetryCheck::Unchecked)?;
        Ok(weighted_bce_upper(&sigmoid_forward(z.tensor()), &self.label, GRAD_POS_WEIGHT, 1)?.0)
    }

    /// Analytic gradients `[dS, d_gen_bias, dR, d_pres_bias]`.
    fn analytic(&self, hooks: &GradcheckHooks) -> Result<[DenseTensor; 4]> {
        let y = self_cartesian(&self.x);
        let (w_gen, w_pres) = (self.gen.expand(), self.pres.expand());
        let h = conv2d_forward(&y, &w_gen)?;
        let a = relu_forward(&h);
        let z = conv2d_forward(&a, &w_pres)?;
        let p = sigmoid_forward(&z);
        let (_, dp) = weighted_bce_upper(&p, &self.label, GRAD_POS_WEIGHT, 1)?;
        let dz = sigmoid_backward(&p, &dp)?;
        let g_pres = conv2d_backward(&a, &w_pres, &dz)?;
        let dh = relu_backward(&h, &g_pres.d_input)?;
        let g_gen = conv2d_backward(&y, &w_gen, &dh)?;
        Ok([(hooks.fold_gen)(&g_gen.d_weights)?, g_gen.d_bias, (hooks.fold_pres)(&g_pres.d_weights)?, g_pres.d_bias])
    }

    fn numeric(&self, which: usize) -> Result<DenseTensor> {
        let spec = FdSpec::default();
        let mut gen = self.gen.clone();
        let mut pres = self.pres.clone();
        let base = [self.gen.packed(), self.gen.bias(), self.pres.packed(), self.pres.bias()][which].clone();
        fd_gradient(
            |t| {
                match which {
                    0 => *gen.packed_mut() = t.clone(),
                    1 => *gen.bias_mut() = t.clone(),
                    2 => *pres.packed_mut() = t.clone(),
                    _ => *pres.bias_mut() = t.clone(),
                }
                self.loss(&gen, &pres)
            },
            &base,
            &spec,
        )
    }

    fn dump(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.x.tensor().save(dir.join("x.sct1"))?;
        self.label.save(dir.join("label.sct1"))?;
        SymKernel::Generating(self.gen.clone()).save(dir, "gen")?;
        SymKernel::Preserving(self.pres.clone()).save(dir, "pres")
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckRow {
    pub sizes: [usize; 4],
    pub gen_err: f64,
    pub pres_err: f64,
    /// Largest absolute analytic/numeric difference, either family.
    pub max_abs_diff: f64,
}

pub const GRADCHECK_TOL: f64 = 1e-5;

pub fn default_gradcheck_grid() -> SizeGrid {
    SizeGrid { l: vec![4, 7], c: vec![1, 3], n: vec![1, 2], f: vec![1, 2] }
}

/// Worst relative error per kernel family for each grid point. Instance
/// `k` of the grid draws from stream `k` of `seed`.
pub fn gradcheck(grid: &SizeGrid, seed: u64, hooks: &GradcheckHooks) -> Result<Vec<GradcheckRow>> {
    let points = grid.points();
    let root = Rng::new(seed);
    par::map_range(points.len(), |k| -> Result<GradcheckRow> {
        let [l, c, n, f] = points[k];
        let inst = GradInstance::random(l, c, n, f, &mut root.fork(k as u64))?;
        let analytic = inst.analytic(hooks)?;
        let spec = FdSpec::default();
        let mut errs = [0.0f64; 4];
        let mut max_abs_diff = 0.0f64;
        for (w, e) in errs.iter_mut().enumerate() {
            let numeric = inst.numeric(w)?;
            *e = spec.worst_rel_err(&analytic[w], &numeric)?;
            max_abs_diff = max_abs_diff.max(analytic[w].max_abs_diff(&numeric)?);
        }
        Ok(GradcheckRow {
            sizes: points[k],
            gen_err: errs[0].max(errs[1]),
            pres_err: errs[2].max(errs[3]),
            max_abs_diff,
        })
    })
    .into_iter()
    .collect()
}

fn cmd_gradcheck(cli: &Cli, hooks: &GradcheckHooks) -> CmdResult {
    let grid = SizeGrid::parse(cli.sizes.as_deref(), default_gradcheck_grid())?;
    let seed = cli.seed.unwrap_or(0);
    let rows = gradcheck(&grid, seed, hooks)?;
    let mut text = format!(
        "# gradcheck seed={seed} tol={GRADCHECK_TOL:e}; differences within {:e} count as exact\n",
        FdSpec::default().abs_floor
    );
    let (mut worst_gen, mut worst_pres) = (0.0f64, 0.0f64);
    let mut first_bad = None;
    for (k, r) in rows.iter().enumerate() {
        let [l, c, n, f] = r.sizes;
        writeln!(
            text,
            "L={l} C={c} n={n} F={f} gen_rel_err={:.3e} pres_rel_err={:.3e} max_abs_diff={:.3e}",
            r.gen_err, r.pres_err, r.max_abs_diff
        )
        .expect("string write");
        worst_gen = worst_gen.max(r.gen_err);
        worst_pres = worst_pres.max(r.pres_err);
        if first_bad.is_none() && (r.gen_err > GRADCHECK_TOL || r.pres_err > GRADCHECK_TOL) {
            first_bad = Some(k);
        }
    }
    writeln!(text, "worst gen_rel_err={worst_gen:.3e}\nworst pres_rel_err={worst_pres:.3e}").expect("string write");
    print!("{text}");
    report::write_text(&cli.out, "gradcheck.txt", &text)?;
    if let Some(k) = first_bad {
        let [l, c, n, f] = rows[k].sizes;
        let inst = GradInstance::random(l, c, n, f, &mut Rng::new(seed).fork(k as u64))?;
        let dir = cli.out.join("gradcheck_failure");
        inst.dump(&dir)?;
        return Err(Failure::Check(format!(
            "L={l} C={c} n={n} F={f} exceeds {GRADCHECK_TOL:e}; instance written to {}",
            dir.display()
        )));
    }
    Ok(())
}

// ----------------------------------------------------------------- symcheck

pub const GEN_SYM_TOL: f64 = 1e-12;
pub const CHAIN_SYM_TOL: f64 = 1e-11;

pub fn default_symcheck_grid() -> SizeGrid {
    SizeGrid { l: (1..=10).collect(), c: vec![1, 3, 5], n: (1..=4).collect(), f: (1..=4).collect() }
}

/// Output asymmetry of a generating layer on a random self-Cartesian input.
pub fn gen_asymmetry(l: usize, c: usize, n: usize, f: usize, rng: &mut Rng) -> Result<f64> {
    let x = SequenceFeatures::new(DenseTensor::uniform(&[l, n], 1.0, rng)?)?;
    let k = SymGenKernel::random(c, n, f, 1.0, rng)?;
    let (out, _) = sym_gen_layer_forward(&self_cartesian(&x), &k, SymmetryCheck::Checked)?;
    out.tensor().asymmetry()
}

/// Asymmetry after `depth` preserving layers with ReLU between, on a random
/// symmetric `l x l x m` input.
pub fn chain_asymmetry(l: usize, c: usize, m: usize, depth: usize, rng: &mut Rng) -> Result<f64> {
    let raw = DenseTensor::uniform(&[l, l, m], 1.0, rng)?;
    let sym = raw.zip_map(&raw.transpose_spatial()?, |a, b| 0.5 * (a + b))?;
    let mut z = PairTensor::symmetric(sym, 0.0)?;
    for d in 0..depth {
        let k = SymPresKernel::random(c, m, m, 1.0, rng)?;
        let (out, _) = sym_pres_layer_forward(&z, &k, SymmetryCheck::Checked)?;
        let act = if d + 1 < depth { relu_forward(out.tensor()) } else { out.into_tensor() };
        // rescan instead of trusting the flag
        z = PairTensor::symmetric(act, CHAIN_SYM_TOL)?;
    }
    z.tensor().asymmetry()
}

fn cmd_symcheck(cli: &Cli) -> CmdResult {
    let grid = SizeGrid::parse(cli.sizes.as_deref(), default_symcheck_grid())?;
    let seed = cli.seed.unwrap_or(0);
    let root = Rng::new(seed);
    let points = grid.points();
    let gen = par::map_range(points.len(), |k| {
        let [l, c, n, f] = points[k];
        gen_asymmetry(l, c, n, f, &mut root.fork(k as u64))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let chain_root = root.fork(u64::MAX);
    let chains = par::map_range(100, |k| {
        let mut rng = chain_root.fork(k as u64);
        let (l, c, m, depth) = (1 + rng.below(10), [1, 3, 5][rng.below(3)], 1 + rng.below(4), 1 + k % 4);
        chain_asymmetry(l, c, m, depth, &mut rng).map_err(|e| match e {
            Error::Precondition(msg) => Error::Oracle(msg),
            other => other,
        })
    });
    let mut chain_worst = 0.0f64;
    let mut chain_fail = None;
    for r in chains {
        match r {
            Ok(a) => chain_worst = chain_worst.max(a),
            Err(e) => chain_fail = Some(e.to_string()),
        }
    }
    let gen_worst = gen.iter().cloned().fold(0.0, f64::max);
    let text = format!(
        "# symcheck seed={seed}\ngenerating instances={} max_asymmetry={gen_worst:e} tol={GEN_SYM_TOL:e}\n\
         preserving chains=100 max_asymmetry={chain_worst:e} tol={CHAIN_SYM_TOL:e}\n",
        gen.len()
    );
    print!("{text}");
    report::write_text(&cli.out, "symcheck.txt", &text)?;
    if let Some(msg) = chain_fail {
        return Err(Failure::Check(msg));
    }
    if gen_worst > GEN_SYM_TOL || chain_worst > CHAIN_SYM_TOL {
        return Err(Failure::Check("symmetry tolerance exceeded".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- packbench

pub fn default_packbench_grid() -> SizeGrid {
    SizeGrid { l: vec![16, 32, 64], c: vec![3], n: vec![4], f: vec![4] }
}

#[derive(Clone, Debug)]
pub struct PackbenchRow {
    pub sizes: [usize; 4],
    pub storage_ratio: f64,
    pub pres_mac_ratio: f64,
    pub pres_max_diff: f64,
    pub gen_mac_ratio: f64,
    pub gen_memory_ratio: f64,
    pub gen_max_diff: f64,
    pub full_secs: f64,
    pub packed_secs: f64,
}

pub fn packbench_row(l: usize, c: usize, n: usize, f: usize, rng: &mut Rng) -> Result<PackbenchRow> {
    let raw = DenseTensor::uniform(&[l, l, n], 1.0, rng)?;
    let sym = PairTensor::symmetric(raw.zip_map(&raw.transpose_spatial()?, |a, b| 0.5 * (a + b))?, 0.0)?;
    let pres = SymPresKernel::random(c, n, f, 0.5, rng)?;
    let t0 = Instant::now();
    let (full, full_macs) = conv2d_forward_counted(sym.tensor(), &pres.expand())?;
    let full_secs = t0.elapsed().as_secs_f64();
    let packed_in = pack(&sym)?;
    let t1 = Instant::now();
    let (packed, packed_macs) = packed_sym_conv_counted(&packed_in, &pres)?;
    let packed_secs = t1.elapsed().as_secs_f64();
    let pres_max_diff = packed.unpack().tensor().max_abs_diff(&full)?;

    let x = SequenceFeatures::new(DenseTensor::uniform(&[l, n], 1.0, rng)?)?;
    let gen = SymGenKernel::random(c, n, f, 0.5, rng)?;
    let y = self_cartesian(&x);
    let (gfull, gfull_macs) = conv2d_forward_counted(&y, &gen.expand())?;
    let (gpacked, stats) = packed_sym_gen_conv_counted(&x, &gen)?;
    let full_entries = y.len() + gfull.len();
    Ok(PackbenchRow {
        sizes: [l, c, n, f],
        storage_ratio: packed_len(l) as f64 / (l * l) as f64,
        pres_mac_ratio: packed_macs as f64 / full_macs as f64,
        pres_max_diff,
        gen_mac_ratio: stats.macs as f64 / gfull_macs as f64,
        gen_memory_ratio: stats.peak_feature_entries as f64 / full_entries as f64,
        gen_max_diff: gpacked.unpack().tensor().max_abs_diff(&gfull)?,
        full_secs,
        packed_secs,
    })
}

fn cmd_packbench(cli: &Cli) -> CmdResult {
    let grid = SizeGrid::parse(cli.sizes.as_deref(), default_packbench_grid())?;
    let seed = cli.seed.unwrap_or(0);
    let root = Rng::new(seed);
    let mut text = format!("# packbench seed={seed}\n");
    let mut worst = 0.0f64;
    for (k, [l, c, n, f]) in grid.points().into_iter().enumerate() {
        let r = packbench_row(l, c, n, f, &mut root.fork(k as u64))?;
        writeln!(
            text,
            "L={l} C={c} n={n} F={f} storage_ratio={}/{}={:.4} pres_mac_ratio={:.4} gen_mac_ratio={:.4} \
             gen_memory_ratio={:.4} max_abs_diff={:e}",
            l + 1,
            2 * l,
            r.storage_ratio,
            r.pres_mac_ratio,
            r.gen_mac_ratio,
            r.gen_memory_ratio,
            r.pres_max_diff.max(r.gen_max_diff)
        )
        .expect("string write");
        println!("L={l} wall_clock full={:.6}s packed={:.6}s", r.full_secs, r.packed_secs);
        worst = worst.max(r.pres_max_diff).max(r.gen_max_diff);
    }
    print!("{text}");
    report::write_text(&cli.out, "packbench.txt", &text)?;
    if worst > 1e-12 {
        return Err(Failure::Check(format!("packed and full outputs differ by {worst:e}")));
    }
    Ok(())
}

// ------------------------------------------------------- train and compare

fn cmd_train(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let data = Dataset::generate(&cfg.task, cfg.network.seed)?;
    let outcome = train(&cfg.network, &data)?;
    let summary = report::to_json(&TrainSummary::new(&cfg, &outcome))?;
    report::write_text(&cli.out, "epochs.csv", &report::epochs_csv(&outcome.epochs))?;
    report::write_text(&cli.out, "summary.json", &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_compare(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let (scnn, cnn) = if cfg.network.is_symmetric() {
        (cfg.network.clone(), cfg.network.twin())
    } else {
        (cfg.network.twin(), cfg.network.clone())
    };
    let rep = compare_cnn_scnn(&scnn, &cnn, &cfg.task)?;
    let json = report::to_json(&rep)?;
    report::write_text(&cli.out, "compare.json", &json)?;
    println!(
        "scnn test acc {:.4} +- {:.4} ({} kernel params)\ncnn  test acc {:.4} +- {:.4} ({} kernel params)",
        rep.scnn.test_acc.mean,
        rep.scnn.test_acc.sd,
        rep.scnn.kernel_params,
        rep.cnn.test_acc.mean,
        rep.cnn.test_acc.sd,
        rep.cnn.kernel_params
    );
    Ok(())
}

fn cmd_cartesian(cli: &Cli, input: &Path) -> CmdResult {
    let x = DenseTensor::load(input).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", input.display())))?;
    let x = SequenceFeatures::new(x).map_err(|e| Failure::Usage(e.to_string()))?;
    let y = self_cartesian(&x);
    fs::create_dir_all(&cli.out).map_err(Error::from)?;
    y.save(cli.out.join("cartesian.sct1"))?;
    println!("wrote {:?} to {}", y.shape(), cli.out.join("cartesian.sct1").display());
    Ok(())
}

fn cmd_heatmap(cli: &Cli) -> CmdResult {
    let cfg = load_config(cli)?;
    let data = Dataset::generate(&cfg.task, cfg.network.seed)?;
    let outcome = train(&cfg.network, &data)?;
    let sample = &data.test[0];
    let pred = outcome.network.forward(&sample.features)?;
    let l = sample.len();
    report::write_text(&cli.out, "heatmap.csv", &report::matrix_csv(pred.tensor())?)?;
    report::write_text(&cli.out, "heatmap_label.csv", &report::matrix_csv(&sample.label.clone().reshape(&[l, l, 1])?)?)?;
    println!("L={l} asymmetry={:e}", pred.tensor().asymmetry()?);
    Ok(())
}

//! Experiment runner: single simulations, the full sweep, workload
//! export/replay and trace dumps.
//!
//! Configuration precedence is flags > config file > built-in defaults.
//! Defaults follow the study parameters where the study states them; every
//! other default is a model knob and labelled as such in `--help`.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dprsim::metrics::{self, RunMeta, RunRecord};
use dprsim::sweep::{self, RateSpec, SweepConfig};
use dprsim::workload::{self, MenuEntry, WorkloadConfig};
use dprsim::{KernelSpec, SchedPolicy, SimConfig, SimTime, TimingConfig};

#[derive(Parser)]
#[command(
    name = "dprsim",
    about = "Simulates an FPGA multi-tasking server: preemptive priority scheduling of \
             checkpointable kernels over partially reconfigurable regions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration (optionally several replicas) and write metrics.
    Run(RunArgs),
    /// Run the full experiment grid and write aggregated metrics.
    Sweep(SweepArgs),
    /// Generate a workload and write it to a replayable file.
    Workload(WorkloadArgs),
}

#[derive(Args)]
struct KnobArgs {
    /// Config file with `key=value` lines overriding model knobs
    /// (save_window_us, preempt_overhead_us, restore_overhead_us,
    /// t_partial_us, t_full_us, priorities, mb_cost_us, gb_cost_us,
    /// checkpoint_stride).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Torn-save window in microseconds [model knob].
    #[arg(long)]
    save_window_us: Option<u64>,

    /// Context copy-out cost in microseconds [model knob].
    #[arg(long)]
    preempt_overhead_us: Option<u64>,

    /// Context copy-back cost in microseconds [model knob].
    #[arg(long)]
    restore_overhead_us: Option<u64>,

    /// Partial reconfiguration time in microseconds.
    #[arg(long)]
    t_partial_us: Option<u64>,

    /// Full reconfiguration time in microseconds (bound computation only).
    #[arg(long)]
    t_full_us: Option<u64>,

    /// Number of priority levels.
    #[arg(long)]
    priorities: Option<u8>,

    /// Median Blur cost per inner iteration in microseconds [model knob].
    #[arg(long)]
    mb_cost_us: Option<u64>,

    /// Gaussian Blur cost per inner iteration in microseconds [model knob].
    #[arg(long)]
    gb_cost_us: Option<u64>,

    /// Durable checkpoint every N inner iterations [model knob].
    #[arg(long)]
    checkpoint_stride: Option<u64>,
}

/// Model knobs after resolving flags > config file > defaults.
#[derive(Debug, Clone)]
struct Knobs {
    timing: TimingConfig,
    priorities: u8,
    mb_cost: SimTime,
    gb_cost: SimTime,
    stride: u64,
}

impl Knobs {
    fn resolve(args: &KnobArgs) -> Result<Knobs> {
        let mut timing = TimingConfig::default();
        let mut priorities = SchedPolicy::default().n_priorities;
        let mut mb_cost = SimTime::from_micros(2);
        let mut gb_cost = SimTime::from_micros(3);
        let mut stride = 1u64;

        if let Some(path) = &args.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .with_context(|| format!("{}:{}: expected key=value", path.display(), i + 1))?;
                let value = value.trim();
                let parse = || -> Result<u64> {
                    value
                        .parse::<u64>()
                        .with_context(|| format!("{}:{}: bad value {value}", path.display(), i + 1))
                };
                match key.trim() {
                    "save_window_us" => timing.save_window = SimTime::from_micros(parse()?),
                    "preempt_overhead_us" => {
                        timing.preempt_overhead = SimTime::from_micros(parse()?)
                    }
                    "restore_overhead_us" => {
                        timing.restore_overhead = SimTime::from_micros(parse()?)
                    }
                    "t_partial_us" => timing.t_partial = SimTime::from_micros(parse()?),
                    "t_full_us" => timing.t_full = SimTime::from_micros(parse()?),
                    "priorities" => priorities = parse()? as u8,
                    "mb_cost_us" => mb_cost = SimTime::from_micros(parse()?),
                    "gb_cost_us" => gb_cost = SimTime::from_micros(parse()?),
                    "checkpoint_stride" => stride = parse()?,
                    other => bail!("{}:{}: unknown knob {other}", path.display(), i + 1),
                }
            }
        }
        // flags win over the file
        if let Some(v) = args.save_window_us {
            timing.save_window = SimTime::from_micros(v);
        }
        if let Some(v) = args.preempt_overhead_us {
            timing.preempt_overhead = SimTime::from_micros(v);
        }
        if let Some(v) = args.restore_overhead_us {
            timing.restore_overhead = SimTime::from_micros(v);
        }
        if let Some(v) = args.t_partial_us {
            timing.t_partial = SimTime::from_micros(v);
        }
        if let Some(v) = args.t_full_us {
            timing.t_full = SimTime::from_micros(v);
        }
        if let Some(v) = args.priorities {
            priorities = v;
        }
        if let Some(v) = args.mb_cost_us {
            mb_cost = SimTime::from_micros(v);
        }
        if let Some(v) = args.gb_cost_us {
            gb_cost = SimTime::from_micros(v);
        }
        if let Some(v) = args.checkpoint_stride {
            stride = v;
        }
        Ok(Knobs {
            timing,
            priorities,
            mb_cost,
            gb_cost,
            stride,
        })
    }

    fn menu(&self) -> Vec<MenuEntry> {
        workload::study_menu_with(
            KernelSpec::median_blur_with(self.mb_cost, self.stride),
            KernelSpec::gaussian_blur_with(self.gb_cost, self.stride),
        )
    }

    fn kernels(&self) -> Vec<std::sync::Arc<KernelSpec>> {
        vec![
            KernelSpec::median_blur_with(self.mb_cost, self.stride),
            KernelSpec::gaussian_blur_with(self.gb_cost, self.stride),
        ]
    }
}

#[derive(Args)]
struct RunArgs {
    /// Number of reconfigurable regions.
    #[arg(long, default_value_t = 1)]
    rrs: u32,

    /// Number of generated tasks.
    #[arg(long, default_value_t = 30)]
    tasks: u32,

    /// Workload seed; replica r uses seed + r.
    #[arg(long, default_value_t = 15)]
    seed: u64,

    /// Arrival window: busy | medium | idle | seconds.
    #[arg(long, default_value = "busy")]
    rate: String,

    /// Image size: 200 | 300 | 400 | 500 | 600 | HxW.
    #[arg(long, default_value = "600")]
    size: String,

    /// Preemption: on | off.
    #[arg(long, default_value = "on")]
    preemption: String,

    /// Replicas to run (seeded seed..seed+N-1).
    #[arg(long, default_value_t = 1)]
    replicas: u32,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Write event traces: on | off.
    #[arg(long, default_value = "off")]
    trace: String,

    /// Replay a workload file instead of generating one.
    #[arg(long, value_name = "FILE")]
    workload: Option<PathBuf>,

    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Base workload seed; replica r uses seed + r.
    #[arg(long, default_value_t = 15)]
    seed: u64,

    /// Replicas per cell.
    #[arg(long, default_value_t = 10)]
    replicas: u32,

    /// Tasks per run.
    #[arg(long, default_value_t = 30)]
    tasks: u32,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Write event traces for every run: on | off.
    #[arg(long, default_value = "off")]
    trace: String,

    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct WorkloadArgs {
    /// Number of generated tasks.
    #[arg(long, default_value_t = 30)]
    tasks: u32,

    /// Workload seed.
    #[arg(long, default_value_t = 15)]
    seed: u64,

    /// Arrival window: busy | medium | idle | seconds.
    #[arg(long, default_value = "busy")]
    rate: String,

    /// Image size: 200 | 300 | 400 | 500 | 600 | HxW.
    #[arg(long, default_value = "600")]
    size: String,

    /// Output file.
    #[arg(long, default_value = "workload.txt")]
    out: PathBuf,

    #[command(flatten)]
    knobs: KnobArgs,
}

fn parse_rate(s: &str) -> Result<RateSpec> {
    if let Some(r) = RateSpec::preset(s) {
        return Ok(r);
    }
    let secs: f64 = s
        .parse()
        .with_context(|| format!("rate must be busy|medium|idle or seconds, got {s}"))?;
    if secs <= 0.0 || !secs.is_finite() {
        bail!("arrival window must be positive, got {s}");
    }
    Ok(RateSpec {
        label: s.to_string(),
        window: SimTime::from_micros((secs * 1e6).round() as u64),
    })
}

fn parse_size(s: &str) -> Result<(u32, u32)> {
    if let Some((h, w)) = s.split_once('x') {
        let h = h.parse().with_context(|| format!("bad size {s}"))?;
        let w = w.parse().with_context(|| format!("bad size {s}"))?;
        if h == 0 || w == 0 {
            bail!("size must be positive, got {s}");
        }
        return Ok((h, w));
    }
    let n: u32 = s.parse().with_context(|| format!("bad size {s}"))?;
    if n == 0 {
        bail!("size must be positive, got {s}");
    }
    Ok((n, n))
}

fn parse_on_off(s: &str, what: &str) -> Result<bool> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => bail!("{what} must be on or off, got {other}"),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn run_command(args: RunArgs) -> Result<()> {
    let knobs = Knobs::resolve(&args.knobs)?;
    let rate = parse_rate(&args.rate)?;
    let size = parse_size(&args.size)?;
    let preemption = parse_on_off(&args.preemption, "--preemption")?;
    let trace = parse_on_off(&args.trace, "--trace")?;
    if args.rrs == 0 {
        bail!("--rrs must be at least 1");
    }

    let mut records: Vec<RunRecord> = Vec::new();
    for replica in 0..args.replicas {
        let seed = args.seed + u64::from(replica);
        let tasks = match &args.workload {
            Some(path) => {
                let file = fs::File::open(path)
                    .with_context(|| format!("opening workload {}", path.display()))?;
                workload::read_workload(BufReader::new(file), &knobs.kernels())?
            }
            None => workload::generate(&WorkloadConfig {
                seed,
                n_tasks: args.tasks,
                window: rate.window,
                sizes: vec![size],
                n_priorities: knobs.priorities,
                menu: knobs.menu(),
            })?,
        };
        let config = SimConfig {
            regions: args.rrs,
            policy: SchedPolicy {
                preemption_enabled: preemption,
                n_priorities: knobs.priorities,
                ..SchedPolicy::default()
            },
            timing: knobs.timing,
        };
        let meta = RunMeta::labelled(
            &rate.label,
            &sweep::size_label(size),
            args.rrs,
            preemption,
            seed,
            replica,
        );
        let record = dprsim::sched::run(&config, tasks, meta)?;
        print_summary(&record);
        records.push(record);
    }

    let mut csv = String::new();
    if let Some(first) = records.first() {
        csv.push_str(&metrics::config_echo(first));
    }
    csv.push_str(metrics::RUNS_CSV_HEADER);
    csv.push('\n');
    for r in &records {
        for row in metrics::runs_csv_rows(r) {
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    let path = write_file(&args.out, "runs.csv", &csv)?;
    println!("wrote {}", path.display());

    if trace {
        for r in &records {
            let name = format!(
                "trace_{}_{}_{}rr_{}_r{}.txt",
                r.meta.rate_label,
                r.meta.size_label,
                r.meta.rrs,
                if r.meta.preemption { "on" } else { "off" },
                r.meta.replica
            );
            let path = write_file(&args.out, &name, &metrics::trace_file(r))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_summary(record: &RunRecord) {
    println!(
        "replica {} seed {}: {} tasks, makespan {:.3} s, {} reconfigurations, {} preemptions",
        record.meta.replica,
        record.meta.seed,
        record.tasks.len(),
        record.makespan.as_secs_f64(),
        record.n_reconfigs,
        record.n_preemptions
    );
    if record.tasks.is_empty() {
        return;
    }
    let thr = metrics::throughput(record).expect("non-empty");
    let bound = metrics::full_reconfig_bound(
        record,
        record.config.timing.t_full,
        record.config.timing.t_partial,
    )
    .expect("non-empty");
    println!("  throughput {thr:.4} tasks/s (full-reconfiguration bound {bound:.4})");
    for row in metrics::per_priority_service(record) {
        if row.count > 0 {
            println!(
                "  priority {}: {} tasks, mean service {:.1} ms",
                row.priority,
                row.count,
                row.mean_us / 1e3
            );
        }
    }
}

fn sweep_command(args: SweepArgs) -> Result<()> {
    let knobs = Knobs::resolve(&args.knobs)?;
    let trace = parse_on_off(&args.trace, "--trace")?;
    let cfg = SweepConfig {
        base_seed: args.seed,
        replicas: args.replicas,
        n_tasks: args.tasks,
        policy: SchedPolicy {
            n_priorities: knobs.priorities,
            ..SchedPolicy::default()
        },
        timing: knobs.timing,
        menu: knobs.menu(),
        ..SweepConfig::default()
    };
    if args.replicas == 0 {
        bail!("--replicas must be at least 1");
    }
    let out = sweep::run_sweep(&cfg)?;
    let path = write_file(&args.out, "sweep.csv", &out.aggregate_csv())?;
    println!("wrote {}", path.display());
    let path = write_file(&args.out, "runs.csv", &out.runs_csv())?;
    println!("wrote {}", path.display());
    let path = write_file(&args.out, "overhead.csv", &out.overhead_csv())?;
    println!("wrote {}", path.display());
    if trace {
        for (name, contents) in out.traces() {
            write_file(&args.out, &name, &contents)?;
        }
        println!(
            "wrote {} trace files",
            out.cells.len() * cfg.replicas as usize
        );
    }
    Ok(())
}

fn workload_command(args: WorkloadArgs) -> Result<()> {
    let knobs = Knobs::resolve(&args.knobs)?;
    let rate = parse_rate(&args.rate)?;
    let size = parse_size(&args.size)?;
    let tasks = workload::generate(&WorkloadConfig {
        seed: args.seed,
        n_tasks: args.tasks,
        window: rate.window,
        sizes: vec![size],
        n_priorities: knobs.priorities,
        menu: knobs.menu(),
    })?;
    let mut buf = Vec::new();
    workload::write_workload(&tasks, &mut buf)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} tasks to {}", tasks.len(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run_command(args),
        Command::Sweep(args) => sweep_command(args),
        Command::Workload(args) => workload_command(args),
    }
}

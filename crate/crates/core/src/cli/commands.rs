use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spindoe::bench::{self, SpinBenchConfig};
use spindoe::config::Config;
use spindoe::geometry::{random_rotation, random_unit_vector, Rotation};
use spindoe::hashing::{recognize, DotPattern, HashTable};
use spindoe::io::{self, DampeningReport, ObservedFrame, OrientStatus, OrientationRow, SpinRow};
use spindoe::pattern::{evaluate_pattern, optimize_from, random_pattern};
use spindoe::spin::{
    dampening_fit, finite_difference_spin, linear_dampening_fit, ransac_spin,
    theoretical_dampening, OrientationSample, RansacConfig,
};
use spindoe::synth::{generate_random_frames, generate_sequence, GroundTruthFrame, NoiseConfig};
use spindoe::Error;

use super::args::*;
use super::manifest::Recorder;
use super::{CliError, CliResult};

pub fn subcommand_name(cmd: &Command) -> String {
    match cmd {
        Command::Pattern(PatternCmd::Gen { .. }) => "pattern gen",
        Command::Pattern(PatternCmd::Eval { .. }) => "pattern eval",
        Command::Hash(HashCmd::Build { .. }) => "hash build",
        Command::Orient(_) => "orient",
        Command::Spin(_) => "spin",
        Command::Dampen(_) => "dampen",
        Command::Synth(SynthCmd::Obs { .. }) => "synth obs",
        Command::Synth(SynthCmd::Seq { .. }) => "synth seq",
        Command::Bench(_) => "bench",
        Command::Rerun(_) => "rerun",
    }
    .to_string()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> spindoe::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

/// Runs the command and returns its primary output path, if any.
pub fn dispatch(cli: &Cli, config: &Config, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    match &cli.command {
        Command::Pattern(PatternCmd::Gen {
            n,
            iters,
            min_sep,
            output,
        }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let start = random_pattern(*n, min_sep.to_radians(), &mut rng)?;
            let pattern = if *iters == 0 {
                start
            } else {
                if *n < 4 {
                    return Err(invalid(format!("optimizing needs at least 4 dots, got {n}")));
                }
                optimize_from(start, *iters, &config.optimizer, &mut rng)?
            };
            let mut text = pattern.to_json();
            text.push('\n');
            rec.write(output, text.as_bytes())?;
            Ok(Some(output.clone()))
        }
        Command::Pattern(PatternCmd::Eval {
            pattern,
            sigma,
            trials,
            report,
        }) => {
            let table = load_table(rec, pattern, None, config)?;
            let rep = evaluate_pattern(&table, *trials, sigma.to_radians(), &config.eval_config(cli.seed))?;
            let bytes = json_bytes(&rep);
            match report {
                Some(path) => {
                    rec.write(path, &bytes)?;
                    Ok(Some(path.clone()))
                }
                None => {
                    print!("{}", String::from_utf8_lossy(&bytes));
                    Ok(None)
                }
            }
        }
        Command::Hash(HashCmd::Build { pattern, output }) => {
            let table = load_table(rec, pattern, None, config)?;
            rec.write(output, table.to_json().as_bytes())?;
            Ok(Some(output.clone()))
        }
        Command::Orient(a) => orient(a, config, rec),
        Command::Spin(a) => spin(a, cli.seed, config, rec),
        Command::Dampen(a) => dampen(a, cli.seed, config, rec),
        Command::Synth(s) => synth(s, cli.seed, rec),
        Command::Bench(a) => bench_cmd(a, cli.seed, config, rec),
        Command::Rerun(_) => unreachable!("handled before dispatch"),
    }
}

fn load_table(
    rec: &mut Recorder,
    pattern: &PathBuf,
    table: Option<&PathBuf>,
    config: &Config,
) -> CliResult<HashTable> {
    let p = DotPattern::from_json(&rec.read(pattern)?)?;
    Ok(match table {
        Some(t) => HashTable::from_json(&rec.read(t)?, p)?,
        None => HashTable::build(&p, config.model)?,
    })
}

fn orient(a: &OrientArgs, config: &Config, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    let table = load_table(rec, &a.pattern, a.table.as_ref(), config)?;
    if !(a.radius > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let frames = io::read_observations(rec.read(&a.obs)?.as_bytes(), a.radius)?;
    let rows: Vec<OrientationRow> = frames
        .par_iter()
        .map(|f| orient_frame(&table, f, config))
        .collect::<spindoe::Result<_>>()?;
    let bytes = csv_bytes(|b| io::write_orientations(b, &rows))?;
    rec.write(&a.out, &bytes)?;
    Ok(Some(a.out.clone()))
}

fn orient_frame(table: &HashTable, f: &ObservedFrame, config: &Config) -> spindoe::Result<OrientationRow> {
    let mut row = OrientationRow {
        frame: f.frame,
        t: f.t,
        q: None,
        rmse: None,
        n_dots: f.dots.len(),
        n_matched: 0,
        status: OrientStatus::TooFewDots,
    };
    if f.dots.len() < 3 {
        return Ok(row);
    }
    match recognize(table, &f.observed_set()?, &config.recognition) {
        Ok(r) => {
            row.q = Some(r.orientation);
            row.rmse = Some(r.rmse);
            row.n_matched = r.correspondences.len();
            row.status = OrientStatus::Ok;
        }
        Err(Error::NoBasisAboveThreshold) => row.status = OrientStatus::NoConsensus,
        Err(e) => return Err(e),
    }
    Ok(row)
}

fn ransac_config(base: &RansacConfig, a: &RansacArgs, seed: u64) -> CliResult<RansacConfig> {
    let mut cfg = base.clone();
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    if let Some(g) = a.gate {
        cfg.inlier_gate = g.to_radians();
    }
    if a.min_inliers.is_some() {
        cfg.min_inliers = a.min_inliers;
    }
    cfg.seed = seed;
    if cfg.iterations == 0 || !(cfg.inlier_gate > 0.0) {
        return Err(invalid("RANSAC needs at least one iteration and a positive gate"));
    }
    Ok(cfg)
}

fn load_samples(rec: &mut Recorder, path: &PathBuf, fps: Option<f64>) -> CliResult<Vec<OrientationSample>> {
    let records = io::read_orientations(rec.read(path)?.as_bytes())?;
    let mut samples: Vec<OrientationSample> = records.iter().map(|r| r.sample).collect();
    if let Some(fps) = fps {
        if !(fps > 0.0) {
            return Err(invalid("fps must be positive"));
        }
        for (i, (s, r)) in samples.iter_mut().zip(&records).enumerate() {
            s.t = r.frame.unwrap_or(i as i64) as f64 / fps;
        }
    }
    Ok(samples)
}

/// Start indices of windows of `len` samples every `step` samples.
fn windows(n: usize, len: usize, step: usize) -> Vec<usize> {
    (0..n).step_by(step.max(1)).take_while(|s| s + len <= n).collect()
}

fn spin_status(e: &Error) -> Option<&'static str> {
    match e {
        Error::NoConsensus { .. } => Some("no_consensus"),
        Error::NonUniqueAxis { .. } => Some("non_unique_axis"),
        Error::TooFewSamples { .. } => Some("too_few_samples"),
        _ => None,
    }
}

fn spin(a: &SpinArgs, seed: u64, config: &Config, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    let samples = load_samples(rec, &a.orient, a.fps)?;
    if samples.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 orientation samples, got {}",
            samples.len()
        )));
    }
    let cfg = ransac_config(&config.ransac, &a.ransac, seed)?;
    let len = a.window.unwrap_or(samples.len());
    if len < 3 || len > samples.len() {
        return Err(invalid(format!(
            "window must be between 3 and {} samples",
            samples.len()
        )));
    }
    let mut rows = Vec::new();
    for s in windows(samples.len(), len, a.step.unwrap_or(len)) {
        let w = &samples[s..s + len];
        let (t0, t1) = (w[0].t, w[len - 1].t);
        match ransac_spin(w, &cfg) {
            Ok(est) => {
                let mut inliers_global = est.clone();
                inliers_global.inliers = est.inliers.iter().map(|i| i + s).collect();
                rows.push(SpinRow::from_estimate(&inliers_global, t0, t1));
            }
            Err(e) => match spin_status(&e) {
                Some(status) => rows.push(SpinRow::failed(status, t0, t1)),
                None => return Err(e.into()),
            },
        }
    }
    let bytes = csv_bytes(|b| io::write_spin(b, &rows))?;
    rec.write(&a.out, &bytes)?;
    Ok(Some(a.out.clone()))
}

fn dampen(a: &DampenArgs, seed: u64, config: &Config, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    let mut series: Vec<(f64, f64)> = Vec::new();
    if let Some(path) = &a.spin {
        for r in io::read_spin(rec.read(path)?.as_bytes())? {
            if let (true, Some(rps)) = (r.status == "ok", r.mag_rps) {
                series.push((0.5 * (r.t_start + r.t_end), rps * 2.0 * PI));
            }
        }
    } else if let Some(path) = &a.orient {
        let samples = load_samples(rec, path, a.fps)?;
        if a.window == 0 {
            for w in samples.windows(2) {
                let omega = finite_difference_spin(&w[0], &w[1])?;
                series.push((0.5 * (w[0].t + w[1].t), omega.norm()));
            }
        } else {
            let cfg = ransac_config(&config.ransac, &a.ransac, seed)?;
            if a.window < 3 {
                return Err(invalid("window must be 0 or at least 3"));
            }
            for s in windows(samples.len(), a.window, 1) {
                let w = &samples[s..s + a.window];
                match ransac_spin(w, &cfg) {
                    Ok(est) => {
                        let t = w.iter().map(|x| x.t).sum::<f64>() / w.len() as f64;
                        series.push((t, est.omega_vector().norm()));
                    }
                    Err(e) if spin_status(&e).is_some() => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    let fit = dampening_fit(&series)?;
    let mut report = DampeningReport::from(&fit);
    if a.linear {
        report.linear = Some(Box::new(DampeningReport::from(&linear_dampening_fit(&series)?)));
    }
    if let (Some(nu), Some(r), Some(m)) = (a.nu, a.ball_radius, a.mass) {
        report.theoretical_coefficient = Some(theoretical_dampening(nu, r, m)?);
    }
    rec.write(&a.out, &json_bytes(&report))?;
    Ok(Some(a.out.clone()))
}

fn noise_config(n: &NoiseArgs, seed: u64) -> CliResult<NoiseConfig> {
    let cfg = if n.clean {
        NoiseConfig {
            seed,
            ..NoiseConfig::clean()
        }
    } else {
        NoiseConfig {
            sigma: n.sigma.to_radians(),
            dropout_prob: n.dropout,
            spurious_rate: n.spurious,
            seed,
            ..NoiseConfig::default()
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_frames(
    rec: &mut Recorder,
    frames: &[GroundTruthFrame],
    output: &PathBuf,
    truth: Option<&PathBuf>,
) -> CliResult<Option<PathBuf>> {
    let obs: Vec<ObservedFrame> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| ObservedFrame::from_ground_truth(i as i64, f))
        .collect();
    let bytes = csv_bytes(|b| io::write_observations(b, &obs))?;
    rec.write(output, &bytes)?;
    if let Some(path) = truth {
        let bytes = csv_bytes(|b| io::write_ground_truth(b, frames))?;
        rec.write(path, &bytes)?;
    }
    Ok(Some(output.clone()))
}

fn synth(cmd: &SynthCmd, seed: u64, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    match cmd {
        SynthCmd::Obs {
            pattern,
            frames,
            fps,
            noise,
            output,
            truth,
        } => {
            let p = DotPattern::from_json(&rec.read(pattern)?)?;
            let out = generate_random_frames(&p, *frames, *fps, &noise_config(noise, seed)?)?;
            write_frames(rec, &out, output, truth.as_ref())
        }
        SynthCmd::Seq {
            pattern,
            rps,
            axis,
            fps,
            frames,
            dampening,
            noise,
            output,
            truth,
        } => {
            let p = DotPattern::from_json(&rec.read(pattern)?)?;
            // the start pose and default axis use their own stream so they do
            // not depend on the noise settings
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let q0: Rotation = random_rotation(&mut rng);
            let random_axis = random_unit_vector(&mut rng).into_vector();
            let dir = match axis {
                Some(v) => {
                    let d = Vector3::new(v[0], v[1], v[2]);
                    if !(d.norm() > 0.0) {
                        return Err(invalid("axis must be non-zero"));
                    }
                    d.normalize()
                }
                None => random_axis,
            };
            let omega = dir * (2.0 * PI * rps);
            let out = generate_sequence(&p, &q0, &omega, *fps, *frames, &noise_config(noise, seed)?, *dampening)?;
            write_frames(rec, &out, output, truth.as_ref())
        }
    }
}

fn bench_cmd(a: &BenchArgs, seed: u64, config: &Config, rec: &mut Recorder) -> CliResult<Option<PathBuf>> {
    if a.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if a.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(invalid("sigmas must be non-negative"));
    }
    let needs_table = || -> CliResult<PathBuf> {
        a.pattern
            .clone()
            .ok_or_else(|| invalid("this suite needs --pattern"))
    };
    let bytes = match a.suite {
        Suite::Sensitivity => {
            let table = load_table(rec, &needs_table()?, None, config)?;
            let rows = bench::sensitivity(&table, &a.sigmas, a.trials, &config.eval_config(seed))?;
            csv_rows(&rows)?
        }
        Suite::Orientation => {
            let table = load_table(rec, &needs_table()?, None, config)?;
            let eval = config.eval_config(seed);
            let mut rows = Vec::new();
            for &s in &a.sigmas {
                let errs = bench::orientation_errors(&table, s.to_radians(), a.trials, &eval);
                let gate = eval.success_gate.to_degrees();
                let ok: Vec<f64> = errs.iter().copied().filter(|e| *e < gate).collect();
                let mean = ok.iter().sum::<f64>() / ok.len().max(1) as f64;
                println!(
                    "{}",
                    serde_json::json!({"sigma_deg": s, "scored": errs.len(), "successes": ok.len(), "mean_error_deg": mean})
                );
                rows.extend(bench::histogram(s, &errs, 0.5, gate));
            }
            csv_rows(&rows)?
        }
        Suite::Spin => {
            let mut rows = Vec::new();
            for &s in &a.sigmas {
                let cfg = SpinBenchConfig {
                    rps: a.rps,
                    fps: a.fps,
                    frames: a.frames,
                    orientation_noise: s.to_radians(),
                    ransac: RansacConfig {
                        seed,
                        ..config.ransac.clone()
                    },
                    seed,
                };
                let errs = bench::spin_relative_errors(&cfg, a.trials)?;
                println!(
                    "{}",
                    serde_json::json!({
                        "sigma_deg": s,
                        "median": bench::quantile(&errs, 0.5),
                        "p90": bench::quantile(&errs, 0.9),
                        "failed": errs.iter().filter(|e| !e.is_finite()).count(),
                    })
                );
                rows.extend(bench::histogram(s, &errs, 0.005, 0.5));
            }
            csv_rows(&rows)?
        }
    };
    rec.write(&a.output, &bytes)?;
    Ok(Some(a.output.clone()))
}

fn csv_rows<T: serde::Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

use std::time::Instant;

use crate::error::{Error, Result};
use crate::experiments::checks::{disconnection_curve, good_pair_paths, markov_check, tilt_lower_bound};
use crate::experiments::config::{Experiment, ExperimentConfig, Mode};
use crate::experiments::report::{Provenance, Report, Row};
use crate::gff::rates::rate_function;
use crate::gff::sample::FieldSampler;
use crate::interlace::{srw_disconnection_prob, vacancy_law, vacant_disconnection_curve};
use crate::lattice::{floor_mul, BoxHierarchy, BoxSpec, Point, Window};
use crate::percolation::coarse::{bad_column_census, GoodLevels};
use crate::percolation::contour_bound_check;
use crate::percolation::zfield::{zfield_variance_mc, ZFieldConfig};
use crate::potential::dirichlet::capacity_via_dirichlet_extrapolated;
use crate::potential::equilibrium::{brownian_capacity_cube, energy_of_measure, equilibrium};
use crate::potential::green::{c0, free_green};
use crate::rng::stream;
use crate::stats::sample_variance;

/// Validates the config and runs the experiment; nothing is sampled when the
/// config is invalid.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let start = Instant::now();
    let mut field = None;
    let rows = match cfg.experiment {
        Experiment::Green => green(cfg)?,
        Experiment::Cap => cap(cfg)?,
        Experiment::Sample => {
            let (rows, f) = sample(cfg)?;
            field = Some(f);
            rows
        }
        Experiment::Decompose => decompose(cfg)?,
        Experiment::Disconnect => disconnect(cfg)?,
        Experiment::ContourBound => contour_bound(cfg)?,
        Experiment::TiltLowerbound => tilt(cfg)?,
        Experiment::Zfield => zfield(cfg)?,
        Experiment::CoarseGrain => coarse_grain(cfg)?,
        Experiment::Interlace => interlace(cfg)?,
        Experiment::Srw => srw(cfg)?,
        Experiment::Rates => rates(cfg)?,
    };
    Ok(Report {
        rows,
        provenance: Provenance::new(cfg, start.elapsed().as_secs_f64()),
        field,
    })
}

fn point_label(p: &[i64]) -> String {
    p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn green(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let d = cfg.d;
    cfg.points
        .iter()
        .map(|x| {
            let p = Point::new(x);
            let g = free_green(&p, d)?;
            let norm = p.norm();
            let asym = if norm > 0.0 { Some(c0(d) * norm.powi(2 - d as i32)) } else { None };
            Ok(Row::new()
                .with("x", point_label(x))
                .with("norm", norm)
                .with("asymptotic", asym)
                .with("ratio", asym.map(|a| g.value / a))
                .with("far_field", g.far_field)
                .exact("g", g.value, cfg.seed))
        })
        .collect()
}

fn cap(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let d = cfg.d;
    cfg.boxes
        .iter()
        .map(|&r| {
            let k = BoxSpec::centered(d, r).to_set();
            let eq = equilibrium(&k)?;
            let variational = 1.0 / energy_of_measure(&eq.normalized())?;
            let dirichlet = if cfg.dirichlet_r > 0 {
                Some(capacity_via_dirichlet_extrapolated(&k, cfg.dirichlet_r)?)
            } else {
                None
            };
            let scaled = if r > 0 { Some(eq.cap() / (r as f64).powi(d as i32 - 2)) } else { None };
            Ok(Row::new()
                .with("box", r)
                .with("d", d)
                .with("cap_over_n_d_minus_2", scaled)
                .with("variational", variational)
                .with("dirichlet", dirichlet)
                .exact("cap", eq.cap(), cfg.seed))
        })
        .collect()
}

const SAMPLE_STREAM: u64 = 0x5A3F;

fn sample(cfg: &ExperimentConfig) -> Result<(Vec<Row>, (crate::gff::Field, u64))> {
    let d = cfg.d;
    let window = Window::centered(d, cfg.window);
    let sampler = FieldSampler::for_window(window.clone(), cfg.dense_limit, cfg.guard_factor)?;
    let kind = match &sampler {
        FieldSampler::Dense(_) => "dense",
        FieldSampler::Shell(_) => "shell",
        FieldSampler::Embedded(_) => "embedded",
    };
    let o = window.index(&Point::origin(d)).expect("origin in window");
    let mut first = None;
    let mut at_origin = Vec::with_capacity(cfg.n_mc as usize);
    for i in 0..cfg.n_mc {
        let f = sampler.sample(&mut stream(cfg.seed, SAMPLE_STREAM, i));
        at_origin.push(f.values()[o]);
        if first.is_none() {
            first = Some(f);
        }
    }
    let (var, se) = sample_variance(&at_origin);
    let g0 = free_green(&Point::origin(d), d)?.value;
    let row = Row::new()
        .with("window", cfg.window)
        .with("sites", window.len())
        .with("sampler", kind)
        .with("bias_bound", sampler.bias_bound()?)
        .with("g0", g0)
        .with("variance_at_origin", var)
        .with("stderr", se)
        .with("n", cfg.n_mc)
        .with("seed", cfg.seed);
    Ok((vec![row], (first.expect("n_mc ≥ 2"), cfg.seed)))
}

fn decompose(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let r = markov_check(cfg.d, cfg.window, cfg.u_radius, cfg.n_mc, cfg.dense_limit, cfg.seed)?;
    let se = (1.0 / r.n as f64).sqrt();
    Ok(vec![Row::new()
        .with("window", r.window)
        .with("u_radius", r.u_radius)
        .with("reconstruction_error", r.reconstruction_error)
        .with("harmonicity_residual", r.harmonicity_residual)
        .with("pairs", r.pairs)
        .with("threshold", r.threshold)
        .with("max_abs_corr", r.max_abs_corr)
        .with("stderr", se)
        .with("n", r.n)
        .with("seed", r.seed)])
}

fn disconnect(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let c = disconnection_curve(
        cfg.d,
        &cfg.alphas,
        cfg.n,
        cfg.m,
        cfg.n_mc,
        cfg.guard_factor,
        cfg.dense_limit,
        cfg.seed,
    )?;
    Ok(c.alphas
        .iter()
        .zip(&c.estimates)
        .map(|(&a, e)| {
            Row::new()
                .with("alpha", a)
                .with("N", cfg.n)
                .with("M", cfg.m)
                .with("sampler_bias", c.sampler_bias)
                .estimate("p_disconnect", e)
        })
        .collect())
}

fn contour_bound(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.alphas
        .iter()
        .map(|&a| {
            let r = contour_bound_check(cfg.d, a, cfg.n, cfg.m, cfg.n_mc, cfg.guard_factor, cfg.seed)?;
            Ok(Row::new()
                .with("alpha", a)
                .with("N", r.n)
                .with("M", r.m)
                .with("cap", r.cap)
                .with("bound", r.bound)
                .with("upper_99", r.upper)
                .with("pass", r.pass)
                .with("sampler_bias", r.sampler_bias)
                .estimate("p_disconnect", &r.estimate))
        })
        .collect()
}

fn tilt(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.alphas
        .iter()
        .map(|&a| {
            let r = tilt_lower_bound(
                cfg.d,
                a,
                cfg.n,
                cfg.m,
                cfg.plateau,
                cfg.inner,
                cfg.n_mc,
                cfg.guard_factor,
                cfg.dense_limit,
                cfg.seed,
            )?;
            Ok(Row::new()
                .with("alpha", a)
                .with("N", r.n)
                .with("M", r.m)
                .with("plateau", cfg.plateau)
                .with("entropy", r.entropy)
                .with("p_tilted", r.tilted.mean)
                .with("p_tilted_stderr", r.tilted.stderr)
                .with("lower_log", r.lower_log)
                .with("lower_log_stderr", r.lower_log_stderr)
                .with("direct_log_upper", r.direct_log_upper)
                .with("consistent", r.consistent)
                .with("sampler_bias", r.sampler_bias)
                .estimate("p_direct", &r.direct))
        })
        .collect()
}

fn zfield(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.k_values()
        .into_iter()
        .map(|k| {
            let z = ZFieldConfig::on_a_line(BoxHierarchy::new(cfg.d, cfg.l, k)?, cfg.sites)?;
            let v = zfield_variance_mc(&z, &z.centers(), cfg.n_mc, cfg.seed)?;
            Ok(Row::new()
                .with("L", cfg.l)
                .with("K", k)
                .with("boxes", cfg.sites)
                .with("cap_c", z.cap_c)
                .with("exact", v.exact)
                .with("exact_times_cap", v.exact * z.cap_c)
                .with("z_score", v.z_score())
                .with("sample_variance", v.sample_variance)
                .with("stderr", v.stderr)
                .with("n", v.n)
                .with("seed", v.seed))
        })
        .collect()
}

fn levels(cfg: &ExperimentConfig) -> GoodLevels {
    GoodLevels {
        gamma: cfg.gamma,
        delta: cfg.delta,
        a: cfg.a,
        connectivity: cfg.connectivity,
    }
}

fn coarse_grain(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let lv = levels(cfg);
    if cfg.mode == Mode::Paths {
        let r = good_pair_paths(
            cfg.d,
            cfg.l,
            cfg.k,
            cfg.grid,
            &lv,
            cfg.n_mc,
            cfg.guard_factor,
            cfg.dense_limit,
            cfg.seed,
        )?;
        let frac = if r.good_pairs > 0 { Some(r.pairs_with_path as f64 / r.good_pairs as f64) } else { None };
        return Ok(vec![Row::new()
            .with("L", cfg.l)
            .with("K", cfg.k)
            .with("grid", cfg.grid)
            .with("boxes", r.boxes)
            .with("good_boxes", r.good_boxes)
            .with("good_pairs", r.good_pairs)
            .with("pairs_with_path", r.pairs_with_path)
            .with("sampler_bias", r.sampler_bias)
            .with("fraction_with_path", frac)
            .with("stderr", 0.0)
            .with("n", r.fields)
            .with("seed", r.seed)]);
    }
    let h = BoxHierarchy::new(cfg.d, cfg.l, cfg.k)?;
    let r = bad_column_census(cfg.d, cfg.n, cfg.m, &h, &lv, cfg.n_mc, cfg.guard_factor, cfg.seed)?;
    let mut row = Row::new()
        .with("N", r.n)
        .with("M", r.m)
        .with("L", r.l)
        .with("K", r.k)
        .with("columns", r.columns)
        .with("eta", r.eta)
        .with("rho", r.rho)
        .with("threshold", r.threshold)
        .with("p_c_n", r.c_n.as_ref().map(|e| e.mean))
        .with("p_c_n_stderr", r.c_n.as_ref().map(|e| e.stderr))
        .with("sampler_bias", r.sampler_bias);
    row = row.estimate("mean_bad_columns", &r.mean_bad_columns);
    Ok(vec![row])
}

fn interlace(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    if cfg.mode == Mode::Vacancy {
        return cfg
            .us
            .iter()
            .map(|&u| {
                let r = vacancy_law(cfg.d, u, cfg.n_mc, cfg.seed)?;
                Ok(Row::new()
                    .with("u", u)
                    .with("exact", r.exact)
                    .with("z_score", r.z_score)
                    .with("walk_count_mean", r.walk_count_mean)
                    .with("gof_p_value", r.gof.p_value)
                    .estimate("p_occupied", &r.occupied))
            })
            .collect();
    }
    let rs = vacant_disconnection_curve(cfg.d, &cfg.us, cfg.n, cfg.m, cfg.guard_factor, cfg.n_mc, cfg.seed)?;
    Ok(cfg
        .us
        .iter()
        .zip(rs)
        .map(|(&u, r)| {
            Row::new()
                .with("u", u)
                .with("N", cfg.n)
                .with("M", cfg.m)
                .with("mean_walks", r.mean_walks)
                .with("truncation_bias", r.truncation_bias)
                .estimate("p_disconnect", &r.estimate)
        })
        .collect())
}

fn srw(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    cfg.guard_values()
        .into_iter()
        .map(|g| {
            let r = srw_disconnection_prob(cfg.d, cfg.n, cfg.m, g, cfg.n_mc, cfg.seed)?;
            Ok(Row::new()
                .with("guard_factor", g)
                .with("N", cfg.n)
                .with("M", cfg.m)
                .with("guard_radius", (g * floor_mul(cfg.m, cfg.n) as f64).ceil())
                .with("truncation_bias", r.truncation_bias)
                .estimate("p_disconnect", &r.estimate))
        })
        .collect()
}

fn rates(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let v = cfg.rate_variant();
    let b = brownian_capacity_cube(cfg.d, &cfg.cap_ns)?;
    let xs: Vec<f64> = match v.parameter() {
        "u" => cfg.us.clone(),
        "alpha" => cfg.alphas.clone(),
        _ => vec![f64::NAN],
    };
    xs.iter()
        .map(|&x| {
            let r = rate_function(v, x, cfg.d, b.estimate)?;
            Ok(Row::new()
                .with("variant", serde_json::to_value(cfg.rate).expect("name"))
                .with("parameter", v.parameter())
                .with("level", x)
                .with("cap_brownian", b.estimate)
                .with("cap_brownian_error", b.error)
                .with("rate", r)
                // the capacity error carried through the linear dependence on it
                .with("stderr", (r / b.estimate * b.error).abs())
                .with("n", 0u64)
                .with("seed", cfg.seed))
        })
        .collect()
}

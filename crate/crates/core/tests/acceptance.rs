//! Acceptance suite. Every check prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` shows the
//! whole table even when some check fails.

use rayon::prelude::*;

use gffdisc::experiments::{good_pair_paths, markov_check, tilt_lower_bound};
use gffdisc::gff::sample::{FieldSampler, PointSampler, DEFAULT_DENSE_LIMIT};
use gffdisc::gff::tilt::{sample_tilted, tilt_entropy, TiltProfile};
use gffdisc::interlace::{coupling_order_check, vacancy_law};
use gffdisc::lattice::{BoxHierarchy, BoxSpec, Point, Window};
use gffdisc::percolation::coarse::GoodLevels;
use gffdisc::percolation::zfield::{zfield_variance, zfield_variance_mc, ZFieldConfig};
use gffdisc::percolation::{contour_bound_check, disconnection_event, maximal_contour, Connectivity};
use gffdisc::potential::dirichlet::capacity_via_dirichlet_extrapolated;
use gffdisc::potential::equilibrium::{brownian_capacity_cube, cube_capacity, energy_of_measure, equilibrium};
use gffdisc::potential::green::{c0, free_green};
use gffdisc::rng::stream;
use gffdisc::stats::sample_variance;

const SEED: u64 = 20_240_601;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn c01_variance_of_the_equilibrium_average() {
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [2, 3, 4] {
        let eq = equilibrium(&BoxSpec::centered(3, n).to_set()).unwrap();
        let nu = eq.normalized();
        let symbolic = energy_of_measure(&nu).unwrap();
        let exact = 1.0 / eq.cap();
        let sym_ok = (symbolic - exact).abs() <= 1e-8;
        let (pts, w): (Vec<Point>, Vec<f64>) = nu.into_iter().unzip();
        let sampler = PointSampler::new(pts, 4096).unwrap();
        let xs: Vec<f64> = (0..100_000u64)
            .into_par_iter()
            .map(|i| {
                let phi = sampler.sample(&mut stream(SEED, 1, (n as u64) << 32 | i));
                phi.iter().zip(&w).map(|(p, c)| p * c).sum()
            })
            .collect();
        let (var, se) = sample_variance(&xs);
        let z = (var - exact).abs() / se;
        pass &= sym_ok && z <= 4.0;
        detail.push(format!("N={n}: |sym-1/cap|={:.1e}, mc z={z:.2}", (symbolic - exact).abs()));
    }
    verdict(1, "variance identity", pass, detail.join("; "));
}

#[test]
fn c02_green_function_far_field_ratio() {
    let mut pass = true;
    let mut detail = Vec::new();
    for x in [[25, 0, 0], [15, 20, 0], [0, 7, 24]] {
        let p = Point::new(&x);
        let ratio = free_green(&p, 3).unwrap().value / (c0(3) / p.norm());
        pass &= (0.98..=1.02).contains(&ratio);
        detail.push(format!("{x:?}: {ratio:.6}"));
    }
    verdict(2, "Green asymptotics", pass, detail.join(", "));
}

#[test]
fn c03_three_capacities_agree() {
    let mut pass = true;
    let mut detail = Vec::new();
    for r in 1..=3 {
        let k = BoxSpec::centered(3, r).to_set();
        let eq = equilibrium(&k).unwrap();
        let variational = 1.0 / energy_of_measure(&eq.normalized()).unwrap();
        let dirichlet = capacity_via_dirichlet_extrapolated(&k, 80).unwrap();
        let worst = rel(eq.cap(), variational).max(rel(eq.cap(), dirichlet)).max(rel(variational, dirichlet));
        pass &= worst <= 0.01;
        detail.push(format!("B_{r}: eq {:.5} var {variational:.5} dir {dirichlet:.5}", eq.cap()));
    }
    verdict(3, "capacity triple", pass, detail.join("; "));
}

#[test]
fn c04_cube_capacity_scaling() {
    let c20 = cube_capacity(3, 20).unwrap() / 20.0;
    let c40 = cube_capacity(3, 40).unwrap() / 40.0;
    let b = brownian_capacity_cube(3, &[20, 40]).unwrap();
    verdict(
        4,
        "capacity scaling",
        rel(c20, c40) <= 0.02,
        format!(
            "cap/N: {c20:.5} at 20, {c40:.5} at 40; [-1,1]^3 capacity {:.4} ± {:.4}",
            b.estimate, b.error
        ),
    );
}

#[test]
fn c05_maximal_contour_iff_disconnection() {
    let window = Window::centered(3, 4);
    let sampler = FieldSampler::for_window(window, DEFAULT_DENSE_LIMIT, 2.0).unwrap();
    let levels = [1.0, 1.5, 2.0, 2.5, 3.0];
    let out: Vec<(bool, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let phi = sampler.sample(&mut stream(SEED, 5, i));
            let a = levels[i as usize % levels.len()];
            (
                maximal_contour(&phi, a, 2, 2.0).unwrap().is_some(),
                disconnection_event(&phi, a, 2, 2.0).unwrap(),
            )
        })
        .collect();
    let disagree = out.iter().filter(|(c, e)| c != e).count();
    let events = out.iter().filter(|(_, e)| *e).count();
    verdict(
        5,
        "contour equivalence",
        disagree == 0,
        format!("{disagree} disagreements in 1000 fields, {events} disconnected"),
    );
}

#[test]
fn c06_contour_upper_bound() {
    let r = contour_bound_check(3, -1.0, 4, 2.0, 10_000, 2.0, SEED).unwrap();
    verdict(
        6,
        "contour bound",
        r.pass,
        format!(
            "p̂ = {:.4}, 99% upper {:.4e} ≤ 2exp(-cap/2) = {:.4e}, sampler bias {:.1e}",
            r.estimate.mean, r.upper, r.bound, r.sampler_bias
        ),
    );
}

#[test]
fn c07_tilted_mean_entropy_and_energy_scaling() {
    let profile = TiltProfile::new(3, -1.0, 1.25, 2.0, 2).unwrap();
    let window = Window::centered(3, profile.support_radius());
    let f = profile.shift(&window);
    let sampler = FieldSampler::for_window(window.clone(), DEFAULT_DENSE_LIMIT, 2.0).unwrap();
    let n = 4000u64;
    let samples: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| sample_tilted(&sampler, &f, &mut stream(SEED, 7, i)).unwrap().into_values())
        .collect();
    let mut worst_z = 0.0f64;
    for (k, &fk) in f.values().iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (sample_variance(&xs).0 / n as f64).sqrt();
        worst_z = worst_z.max((mean - fk).abs() / se);
    }
    let big = Window::centered(3, profile.support_radius() + 2);
    let edge_sum = tilt_entropy(&profile.shift(&big));
    let entropy_err = rel(profile.entropy(), edge_sum);
    let scaled = |n: i64| TiltProfile::new(3, -1.0, 1.25, 2.0, n).unwrap().discrete_energy() / n as f64;
    let (e32, e64) = (scaled(32), scaled(64));
    let pass = worst_z <= 4.0 && entropy_err <= 1e-12 && rel(e32, e64) <= 0.03;
    verdict(
        7,
        "tilting",
        pass,
        format!(
            "max mean z {worst_z:.2} over {} sites; entropy rel err {entropy_err:.1e}; E/N {e32:.4} at 32, {e64:.4} at 64",
            window.len()
        ),
    );
}

#[test]
fn c08_markov_decomposition() {
    let r = markov_check(3, 6, 3, 10_000, DEFAULT_DENSE_LIMIT, SEED).unwrap();
    let pass = r.reconstruction_error <= 1e-12 && r.harmonicity_residual <= 1e-10 && r.max_abs_corr <= r.threshold;
    verdict(
        8,
        "Markov property",
        pass,
        format!(
            "reconstruction {:.1e}, harmonicity {:.1e}, max |corr| {:.4} ≤ {:.4} over {} pairs",
            r.reconstruction_error, r.harmonicity_residual, r.max_abs_corr, r.threshold, r.pairs
        ),
    );
}

#[test]
fn c09_zfield_variance() {
    let mut pass = true;
    let mut detail = Vec::new();
    for count in 1..=3 {
        let z = ZFieldConfig::on_a_line(BoxHierarchy::new(3, 4, 3).unwrap(), count).unwrap();
        let v = zfield_variance_mc(&z, &z.centers(), 10_000, SEED).unwrap();
        pass &= v.z_score() <= 4.0;
        detail.push(format!("|C|={count}: z {:.2}", v.z_score()));
    }
    let mut products = Vec::new();
    for k in 2..=5 {
        let z = ZFieldConfig::on_a_line(BoxHierarchy::new(3, 4, k).unwrap(), 2).unwrap();
        products.push(zfield_variance(&z, &z.centers()).unwrap() * z.cap_c);
    }
    pass &= products.windows(2).all(|w| w[1] < w[0]);
    detail.push(format!("var·cap over K=2..5: {products:.4?}"));
    verdict(9, "Z-field", pass, detail.join("; "));
}

#[test]
fn c10_interlacement_vacancy_law() {
    let r = vacancy_law(3, 0.5, 100_000, SEED).unwrap();
    let pass = r.z_score <= 4.0 && r.gof.p_value >= 0.01;
    verdict(
        10,
        "vacancy law",
        pass,
        format!(
            "P[0 occupied] {:.5} vs {:.5}, z {:.2}; Poisson GOF p = {:.3}",
            r.occupied.mean, r.exact, r.z_score, r.gof.p_value
        ),
    );
}

#[test]
fn c11_coupling_order() {
    let r = coupling_order_check(3, 0.5, 3, 2.0, 2.0, 2000, SEED).unwrap();
    let (a, b) = (&r.vacant_vs_gff, &r.srw_vs_vacant);
    verdict(
        11,
        "coupling order",
        a.holds && b.holds,
        format!(
            "vacant {:.4} vs GFF {:.4} (σ {:.4}); SRW {:.4} vs {:.3}·vacant (σ {:.4}); truncation {:.2e}",
            a.lhs.mean, a.rhs.mean, a.joint_stderr, b.lhs.mean, b.factor, b.joint_stderr, r.truncation_bias
        ),
    );
}

#[test]
fn c12_tilt_lower_bound_below_direct() {
    let r = tilt_lower_bound(3, -0.5, 6, 2.0, -3.0, 1.25, 4000, 2.0, DEFAULT_DENSE_LIMIT, SEED).unwrap();
    verdict(
        12,
        "entropy inequality",
        r.consistent,
        format!(
            "lower log {:?} ± {:?}, direct log upper {:.3}, p̃ {:.4}, H {:.2}",
            r.lower_log, r.lower_log_stderr, r.direct_log_upper, r.tilted.mean, r.entropy
        ),
    );
}

#[test]
fn c13_good_boxes_are_linked() {
    let lv = GoodLevels {
        gamma: 0.0,
        delta: -0.5,
        a: 1.0,
        connectivity: Connectivity::default(),
    };
    let r = good_pair_paths(3, 10, 4, 3, &lv, 8, 2.0, DEFAULT_DENSE_LIMIT, SEED).unwrap();
    let pass = r.good_pairs >= 100 && r.pairs_with_path == r.good_pairs;
    verdict(
        13,
        "coarse-graining paths",
        pass,
        format!(
            "{} of {} good adjacent pairs linked in E^(δ-a), {} fields",
            r.pairs_with_path, r.good_pairs, r.fields
        ),
    );
}

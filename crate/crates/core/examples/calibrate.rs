//! Prints fit-vs-truth metrics on the benchmark settings for a few seeds.
//! Constants can be overridden: SIFA_JOINT, SIFA_IND, SIFA_COEF, SIFA_NOISE,
//! SIFA_DECAY, SIFA_SETTING, SIFA_REPS, SIFA_REG.

use std::env;
use std::time::Instant;

use rayon::prelude::*;
use sifa::metrics::{
    combined_loadings, cov_jive_baseline, fit_recovery_error, grassmannian, jive_fit,
    max_principal_angle, pca_baseline, recovery_error,
};
use sifa::{fit_with_start, gen_setting, fit, FitOptions, Mode, Noise, Setting, SimSpec};

fn var(name: &str) -> Option<f64> {
    env::var(name).ok().and_then(|v| v.parse().ok())
}

fn main() {
    let setting = Setting::from_number(var("SIFA_SETTING").unwrap_or(3.0) as u32).unwrap();
    let reps = var("SIFA_REPS").unwrap_or(4.0) as u64;
    let rows: Vec<[f64; 8]> = (0..reps)
        .into_par_iter()
        .map(|seed| {
            let mut spec = SimSpec::new(setting, 1000 + seed);
            if let Some(v) = var("SIFA_JOINT") { spec.joint_variance = v; }
            if let Some(v) = var("SIFA_IND") { spec.individual_variance = v; }
            if let Some(v) = var("SIFA_COEF") { spec.coef_sd = v; }
            if let Some(v) = var("SIFA_DECAY") { spec.decay = v; }
            if let Some(v) = var("SIFA_NOISE") { spec.noise = Noise::Gaussian(vec![v; spec.dims.len()]); }
            let (data, truth) = gen_setting(&spec).unwrap();
            let mode = setting.mode();
            let regression = env::var("SIFA_REG").ok().map(|r| r.parse().unwrap()).unwrap_or_default();
            let options = FitOptions { mode, regression, ..FitOptions::default() };
            let t = Instant::now();
            let rep = fit(&data, &spec.ranks, &options).unwrap();
            let secs = t.elapsed().as_secs_f64();
            let w = truth.combined_loadings();
            let angle = max_principal_angle(&w, &combined_loadings(&rep.params)).unwrap();
            let dg = grassmannian(&truth.params.stacked_v0(), &rep.params.stacked_v0()).unwrap();
            let rec = fit_recovery_error(&truth.signal, &rep).unwrap();
            let jive = jive_fit(&data, &spec.ranks, &options).unwrap();
            let jangle = max_principal_angle(&w, &combined_loadings(&jive.params)).unwrap();
            let jrec = fit_recovery_error(&truth.signal, &jive).unwrap();
            let (s, l) = pca_baseline(&data.stacked(), spec.ranks.total()).unwrap();
            let prec = recovery_error(&truth.signal, &s, &l).unwrap();
            let cj = cov_jive_baseline(&data, &spec.ranks, &FitOptions { mode: Mode::Orthogonal, ..FitOptions::default() }).unwrap();
            let cangle = max_principal_angle(&w, &combined_loadings(&cj.params)).unwrap();
            let pangle = max_principal_angle(&w, &l).unwrap();
            let oracle = fit_with_start(&data, truth.params.clone(), &options).unwrap();
            let oangle = max_principal_angle(&w, &combined_loadings(&oracle.params)).unwrap();
            eprintln!("seed {seed}: pca angle {pangle:.1} oracle-start angle {oangle:.1} ll fit {:.1} ll oracle {:.1}", rep.final_loglik(), oracle.final_loglik());
            eprintln!("seed {seed}: iters {} conv {} {:.1}s", rep.iterations, rep.converged, secs);
            [angle, dg, rec, jangle, jrec, prec, cangle, secs]
        })
        .collect();
    let names = ["angle", "dG(V0)", "recovery", "jive angle", "jive rec", "pca rec", "covjive angle", "secs"];
    for (j, name) in names.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("{name:>14}: {mean:8.3}   {:?}", vals.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}

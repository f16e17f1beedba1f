//! Figure presets: complete run configurations with pinned seeds.

use crate::{CliError, CliResult, RunConfig};

pub const NAMES: &[&str] = &["fig1", "fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5", "appD"];

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1" => "LDOS of 50 random Fock states, N=100, g=1, h=2, delta=0.1, full grid vs optimized r=0.4 and r=1",
        "fig2" => "single-filtered H/N of the same states: delta=0.1 and 1 on the full grid, delta=1 with r=1",
        "fig3a" => "microcanonical magnetization by Monte Carlo vs exact and exhaustive sums, N=20, g=1, h=2, delta=1,4",
        "fig3b" => "as fig3a with g=2, h=1",
        "fig4a" => "microcanonical magnetization at N=100, g=1, h=2, delta=1,4, cutoffs 0 and 1e-2, shifted columns",
        "fig4b" => "as fig4a with g=2, h=1",
        "fig5" => "canonical magnetization vs beta, N=100, (g,h)=(0.3,0.8),(0.4,0.4), delta=1, cutoffs 0 and 1e-2",
        "appD" => "tilted Ising A' at E_psi vs eigenwindow reference, N=10,12,14, three product states, width schedules",
        _ => return None,
    })
}

pub fn preset(name: &str) -> CliResult<RunConfig> {
    let base = RunConfig {
        preset: name.to_string(),
        x: 3.0,
        ..RunConfig::default()
    };
    let micro = |g: f64, h: f64, seed: u64| RunConfig {
        command: "qamc-micro".into(),
        n: 20,
        g,
        h,
        variants: strings(&["1@full", "4@full"]),
        observables: strings(&["magnetization"]),
        e_min: -14.0,
        e_max: 14.0,
        e_step: 4.0,
        samples: 100_000,
        cutoffs: vec![0.0],
        exhaustive: true,
        seed,
        ..base.clone()
    };
    let large = |g: f64, h: f64, seed: u64| RunConfig {
        command: "qamc-micro".into(),
        n: 100,
        g,
        h,
        variants: strings(&["1@full", "4@full"]),
        observables: strings(&["magnetization"]),
        e_min: -90.0,
        e_max: 60.0,
        e_step: 10.0,
        samples: 100_000,
        cutoffs: vec![0.0, 1e-2],
        shifted: true,
        seed,
        ..base.clone()
    };
    Ok(match name {
        "fig1" => RunConfig {
            command: "ldos".into(),
            n: 100,
            g: 1.0,
            h: 2.0,
            states: 50,
            variants: strings(&["0.1@full", "0.1@opt:0.4", "0.1@opt:1"]),
            seed: 1,
            ..base
        },
        "fig2" => RunConfig {
            command: "filtered".into(),
            n: 100,
            g: 1.0,
            h: 2.0,
            states: 50,
            variants: strings(&["0.1@full", "1@full", "1@opt:1"]),
            observables: strings(&["energy_density"]),
            seed: 1,
            ..base
        },
        "fig3a" => micro(1.0, 2.0, 3),
        "fig3b" => micro(2.0, 1.0, 4),
        "fig4a" => large(1.0, 2.0, 5),
        "fig4b" => large(2.0, 1.0, 6),
        "fig5" => RunConfig {
            command: "qamc-canonical".into(),
            n: 100,
            couplings: strings(&["0.3:0.8", "0.4:0.4"]),
            variants: strings(&["1@full"]),
            observables: strings(&["magnetization"]),
            betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            e_min: -100.0,
            e_max: 100.0,
            e_step: 0.5,
            samples: 100_000,
            cutoffs: vec![0.0, 1e-2],
            seed: 7,
            ..base
        },
        "appD" => RunConfig {
            command: "double-filtered".into(),
            model: "tilted".into(),
            j: 1.0,
            h: 0.5,
            g: -1.05,
            sizes: vec![10, 12, 14],
            thetas: vec![
                std::f64::consts::FRAC_PI_4,
                std::f64::consts::FRAC_PI_3,
                std::f64::consts::FRAC_PI_6,
            ],
            variants: strings(&["1@full"]),
            schedules: strings(&["const", "inv_n", "inv_n2"]),
            n_ref: 10,
            observables: strings(&["zz", "x"]),
            method: "exact".into(),
            window: 0.05,
            seed: 8,
            ..base
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset {other:?}; expected one of {}",
                NAMES.join(", ")
            )))
        }
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

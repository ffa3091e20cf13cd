//! Built-in scenario configurations, listed by `dglab examples`.

use serde_json::{json, Value};

pub struct Example {
    pub name: &'static str,
    pub summary: &'static str,
    config: fn() -> Value,
}

impl Example {
    pub fn config(&self) -> Value {
        (self.config)()
    }
}

fn axis(lower: f64, upper: f64, cells: usize) -> Value {
    json!({ "lower": lower, "upper": upper, "cells": cells })
}

fn boxes(lo: &[f64], hi: &[f64]) -> Value {
    json!({ "boxes": [{ "lo": lo, "hi": hi }] })
}

fn heat() -> Value {
    json!({
        "name": "heat",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [axis(0.0, 1.0, 512)] },
            "coefficients": { "family": "constant", "a": 1.0 },
            "x": boxes(&[0.0], &[0.3]),
            "y": boxes(&[0.7], &[1.0]),
            "time_fractions": [0.25, 0.5, 0.95],
            "solver": { "steps": 20 }
        }
    })
}

fn sharp() -> Value {
    json!({
        "name": "sharp",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [axis(-4.0, 5.0, 900)] },
            "coefficients": { "family": "constant", "a": 1.0 },
            // Half-lines, so the doubled box keeps them as slabs.
            "x": boxes(&[-1e3], &[0.0]),
            "y": boxes(&[1.0], &[1e3]),
            "mode": { "kind": "sharp" },
            "times": [0.05, 0.1, 0.2],
            "solver": { "steps": 200, "epsilon": 0.0 },
            "box_doubling": true
        }
    })
}

fn tail() -> Value {
    json!({
        "name": "tail",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [axis(-2.0, 2.0, 640)] },
            "coefficients": { "family": "constant", "a": 1.0 },
            "x": { "ball": { "center": [0.0], "radius": 0.25 } },
            "y": { "ball": { "center": [0.0], "radius": 0.5, "outside": true } },
            "mode": { "kind": "tail", "r": 1.0 },
            "time_fractions": [0.5, 0.9],
            "solver": { "steps": 20 }
        }
    })
}

fn transport() -> Value {
    json!({
        "name": "transport",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [{ "lower": 0.0, "upper": 3.0, "cells": 600, "periodic": true }] },
            "coefficients": { "family": "constant", "a": 0.0, "b": [1.0, 0.0] },
            "x": boxes(&[0.5], &[1.0]),
            "y": boxes(&[1.5], &[1.6]),
            "time_fractions": [0.25, 0.5, 1.0],
            "solver": { "steps": 10 }
        }
    })
}

fn degenerate() -> Value {
    json!({
        "name": "degenerate",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [axis(0.0, 1.0, 400)] },
            "coefficients": { "family": "checkerboard", "value": 1.0, "zero_intervals": [[0.4, 0.6]] },
            "x": boxes(&[0.0], &[0.2]),
            "y": boxes(&[0.8], &[1.0]),
            "time_fractions": [0.5, 0.9],
            "solver": { "steps": 20 }
        }
    })
}

fn rotation() -> Value {
    json!({
        "name": "rotation",
        "scenario": {
            "kind": "certify",
            "grid": { "axes": [axis(0.0, 1.0, 48), axis(0.0, 1.0, 48)] },
            "coefficients": { "family": "rotation", "omega": 0.5, "a": 0.5 },
            "x": boxes(&[0.0, 0.0], &[0.25, 0.25]),
            "y": boxes(&[0.75, 0.75], &[1.0, 1.0]),
            "time_fractions": [0.5, 0.9],
            "solver": { "steps": 10 }
        }
    })
}

fn traveling_wave() -> Value {
    json!({
        "name": "traveling_wave",
        "scenario": {
            "kind": "traveling_wave",
            "beta": 0.5,
            "r": 0.25,
            "grid": { "axes": [axis(-0.5, 12.0, 1600)] },
            "horizon": 20.0,
            "solver": { "dt": 0.01, "epsilon": 0.0 }
        }
    })
}

fn porous_medium() -> Value {
    json!({
        "name": "porous_medium",
        "scenario": {
            "kind": "porous_medium",
            "n": 1,
            "m": 2.0,
            "grid": { "axes": [axis(-3.0, 3.0, 1024)] },
            "t_final": 1.0,
            "solver": { "dt": 0.01, "epsilon": 1e-6 }
        }
    })
}

fn mckean_vlasov() -> Value {
    json!({
        "name": "mckean_vlasov",
        "scenario": {
            "kind": "mckean_vlasov",
            "sigma": 1.0,
            "kernel": { "kind": "sine", "amplitude": 0.5, "wavenumber": 1 },
            "grid": { "axes": [
                { "lower": 0.0, "upper": 4.0, "cells": 128, "periodic": true },
                axis(-8.0, 8.0, 128)
            ] },
            "x_v": [1.4, 8.0],
            "y_v": [-0.5, 0.5],
            "solver": { "dt": 0.005 }
        }
    })
}

pub const EXAMPLES: &[Example] = &[
    Example {
        name: "heat",
        summary: "heat equation on [0, 1], gap 0.4, inside the validity interval",
        config: heat,
    },
    Example {
        name: "sharp",
        summary: "sharp Gaussian bound across a slab gap, with box doubling",
        config: sharp,
    },
    Example {
        name: "tail",
        summary: "tail bound between a ball and the outside of a larger ball",
        config: tail,
    },
    Example {
        name: "transport",
        summary: "pure upwind transport on a periodic line, numerical diffusivity h/2",
        config: transport,
    },
    Example {
        name: "degenerate",
        summary: "diffusion switched off on [0.4, 0.6]",
        config: degenerate,
    },
    Example {
        name: "rotation",
        summary: "2D rotation drift with isotropic diffusion",
        config: rotation,
    },
    Example {
        name: "traveling_wave",
        summary: "ballistic front in a ramp medium versus the diffusive bound",
        config: traveling_wave,
    },
    Example {
        name: "porous_medium",
        summary: "porous medium equation from a Barenblatt profile",
        config: porous_medium,
    },
    Example {
        name: "mckean_vlasov",
        summary: "kinetic equation with velocity diffusion on a 128 x 128 phase grid",
        config: mckean_vlasov,
    },
];

pub fn find(name: &str) -> Option<&'static Example> {
    EXAMPLES.iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn every_example_parses() {
        for e in EXAMPLES {
            let text = serde_json::to_string(&e.config()).unwrap();
            let cfg = RunConfig::parse(&text).unwrap_or_else(|err| panic!("{}: {err}", e.name));
            assert_eq!(cfg.name, e.name);
        }
    }
}

//! The experiment configuration schema.
//!
//! Configs are TOML with five optional tables; every field has a default,
//! so the empty file is a valid config. Unknown keys are rejected so typos
//! surface as schema errors naming the key. `--seed` and `--out` override
//! the corresponding fields after parsing.
//!
//! ```toml
//! [grid]        # torus discretization
//! d = 1         # dimension
//! m = 16        # cells per axis (m^d capped at 4096)
//! l = 1.0       # side length
//!
//! [kernel]
//! kind = "balanced-cosine"  # or "constant" | "factorized"
//! kappa = 1.0               # rate scale of the factorized kinds
//! alpha = 0.5               # cosine depth (balanced-cosine only)
//! value = 1.0               # the constant (constant only)
//! a = [..]                  # jump profile (factorized; inline array ...)
//! a_file = "a.csv"          # ... or a level-1 tensor CSV on the same grid
//! b = [..]                  # affinity profile, must be even
//! b_file = "b.csv"
//!
//! [initial]
//! profile = "cosine-bump"   # or "uniform" (constant at hi) | "values"
//! lo = 0.05                 # density range (cosine-bump)
//! hi = 0.45
//! values = [..]             # explicit density (values only)
//! c0 = 0.45                 # correlation weight; default max of the density
//! n_max = 3                 # truncation depth of hierarchy states
//! particles = 2             # system size for oracle/ensemble experiments
//!
//! [run]
//! t = 0.1                   # final time
//! steps = 64                # snapshots for marching solvers
//! eps = 1.0                 # in-level scaling of the hierarchy
//! seed = 1
//! replicas = 2000           # ensemble size (mc)
//! pairs = 20                # random pairs (verify-duality)
//! epsilons = [1.0, 0.5, 0.25, 0.1, 0.05]  # scaling study
//! times = [..]              # extra sample times (duality, mc snapshots)
//! dt = 0.001                # kinetic node spacing; default t/256
//! c_bound = 0.45            # kinetic sup bound; default max of the density
//! solver = "picard"         # or "rk" (kinetic)
//! law = "fixed-n"           # or "poisson" (mc initial law)
//!
//! [output]
//! dir = "runs"              # artifact root; each run gets a hashed subdir
//! ```

use pairhop::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::config(field, message)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub d: usize,
    pub m: usize,
    pub l: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { d: 1, m: 16, l: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub kind: String,
    pub kappa: f64,
    pub alpha: f64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_file: Option<String>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            kind: "balanced-cosine".to_string(),
            kappa: 1.0,
            alpha: 0.5,
            value: 1.0,
            a: None,
            b: None,
            a_file: None,
            b_file: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub profile: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    pub n_max: usize,
    pub particles: usize,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            profile: "cosine-bump".to_string(),
            lo: 0.05,
            hi: 0.45,
            values: None,
            c0: None,
            n_max: 3,
            particles: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t: f64,
    pub steps: usize,
    pub eps: f64,
    pub seed: u64,
    pub replicas: usize,
    pub pairs: usize,
    pub epsilons: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
    pub solver: String,
    pub law: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t: 0.1,
            steps: 64,
            eps: 1.0,
            seed: 1,
            replicas: 2000,
            pairs: 20,
            epsilons: vec![1.0, 0.5, 0.25, 0.1, 0.05],
            times: None,
            dt: None,
            c_bound: None,
            solver: "picard".to_string(),
            law: "fixed-n".to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "runs".to_string() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub initial: InitialSection,
    pub run: RunSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: format!("cannot read: {e}"),
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.d == 0 {
            return Err(config_err("grid.d", "dimension must be positive"));
        }
        if g.m == 0 {
            return Err(config_err("grid.m", "cells per axis must be positive"));
        }
        if !(g.l > 0.0) || !g.l.is_finite() {
            return Err(config_err("grid.l", "side length must be positive and finite"));
        }
        let k = &self.kernel;
        if !(k.kappa >= 0.0) || !k.kappa.is_finite() {
            return Err(config_err("kernel.kappa", "rate scale must be nonnegative and finite"));
        }
        match k.kind.as_str() {
            "balanced-cosine" => {
                if !(k.alpha.abs() < 1.0) {
                    return Err(config_err("kernel.alpha", "cosine depth must lie in (-1, 1)"));
                }
            }
            "constant" => {
                if !(k.value >= 0.0) || !k.value.is_finite() {
                    return Err(config_err("kernel.value", "must be nonnegative and finite"));
                }
            }
            "factorized" => {
                if k.a.is_none() && k.a_file.is_none() {
                    return Err(config_err("kernel.a", "factorized kernels need `a` or `a_file`"));
                }
                if k.b.is_none() && k.b_file.is_none() {
                    return Err(config_err("kernel.b", "factorized kernels need `b` or `b_file`"));
                }
            }
            other => {
                return Err(config_err(
                    "kernel.kind",
                    format!("unknown kind `{other}`; expected balanced-cosine, constant, or factorized"),
                ));
            }
        }
        let init = &self.initial;
        match init.profile.as_str() {
            "cosine-bump" => {
                if !(init.lo >= 0.0) || !(init.hi >= init.lo) || !init.hi.is_finite() {
                    return Err(config_err("initial.lo", "need 0 <= lo <= hi < inf"));
                }
            }
            "uniform" => {
                if !(init.hi >= 0.0) || !init.hi.is_finite() {
                    return Err(config_err("initial.hi", "the uniform level must be nonnegative"));
                }
            }
            "values" => {
                let vals = init.values.as_ref().ok_or_else(|| {
                    config_err("initial.values", "profile `values` needs an explicit array")
                })?;
                if vals.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(config_err("initial.values", "entries must be finite and nonnegative"));
                }
            }
            other => {
                return Err(config_err(
                    "initial.profile",
                    format!("unknown profile `{other}`; expected cosine-bump, uniform, or values"),
                ));
            }
        }
        if let Some(c0) = init.c0 {
            if !(c0 > 0.0) || !c0.is_finite() {
                return Err(config_err("initial.c0", "must be positive and finite"));
            }
        }
        if init.n_max == 0 {
            return Err(config_err("initial.n_max", "truncation depth must be at least 1"));
        }
        if init.particles == 0 {
            return Err(config_err("initial.particles", "system size must be positive"));
        }
        let r = &self.run;
        if !(r.t >= 0.0) || !r.t.is_finite() {
            return Err(config_err("run.t", "final time must be nonnegative and finite"));
        }
        if r.steps == 0 {
            return Err(config_err("run.steps", "must be at least 1"));
        }
        if !(r.eps >= 0.0) || !r.eps.is_finite() {
            return Err(config_err("run.eps", "must be nonnegative and finite"));
        }
        if r.replicas == 0 {
            return Err(config_err("run.replicas", "ensemble size must be positive"));
        }
        if r.pairs == 0 {
            return Err(config_err("run.pairs", "need at least one random pair"));
        }
        if r.epsilons.is_empty() || r.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(config_err("run.epsilons", "need a nonempty list of positive values"));
        }
        if let Some(times) = &r.times {
            if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return Err(config_err("run.times", "sample times must be nonnegative and finite"));
            }
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(config_err("run.dt", "must be positive and finite"));
            }
        }
        if let Some(c) = r.c_bound {
            if !(c > 0.0) || !c.is_finite() {
                return Err(config_err("run.c_bound", "must be positive and finite"));
            }
        }
        if r.solver != "picard" && r.solver != "rk" {
            return Err(config_err("run.solver", "expected `picard` or `rk`"));
        }
        if r.law != "fixed-n" && r.law != "poisson" {
            return Err(config_err("run.law", "expected `fixed-n` or `poisson`"));
        }
        if self.output.dir.is_empty() {
            return Err(config_err("output.dir", "must not be empty"));
        }
        Ok(())
    }

    /// Canonical serialized form, the input of the run directory hash.
    /// The artifact root is normalized away first: where the outputs land
    /// must not change which run they belong to.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        toml::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(err: pairhop::Error) -> String {
        match err {
            pairhop::Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn the_empty_config_is_valid() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let parsed: ExperimentConfig = toml::from_str("").unwrap();
        assert!(parsed.validate().is_ok());
    }

    #[test]
    fn violations_name_their_field() {
        let cases: &[(&str, &str)] = &[
            ("[grid]\nm = 0\n", "grid.m"),
            ("[kernel]\nkappa = -2.0\n", "kernel.kappa"),
            ("[kernel]\nkind = \"mystery\"\n", "kernel.kind"),
            ("[kernel]\nkind = \"factorized\"\nb = [1.0]\n", "kernel.a"),
            ("[initial]\nprofile = \"values\"\n", "initial.values"),
            ("[initial]\nn_max = 0\n", "initial.n_max"),
            ("[run]\nepsilons = []\n", "run.epsilons"),
            ("[run]\nsolver = \"magic\"\n", "run.solver"),
            ("[run]\ndt = 0.0\n", "run.dt"),
            ("[output]\ndir = \"\"\n", "output.dir"),
        ];
        for (body, field) in cases {
            let cfg: ExperimentConfig = toml::from_str(body).unwrap();
            assert_eq!(field_of(cfg.validate().unwrap_err()), *field);
        }
    }

    #[test]
    fn the_canonical_form_ignores_the_artifact_root() {
        let mut a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        a.output.dir = "here".to_string();
        b.output.dir = "there".to_string();
        assert_eq!(a.canonical(), b.canonical());
        b.run.seed = 2;
        assert_ne!(a.canonical(), b.canonical());
    }
}

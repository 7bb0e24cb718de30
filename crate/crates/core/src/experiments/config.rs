use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::gff::rates::RateVariant;
use crate::gff::sample::DEFAULT_DENSE_LIMIT;
use crate::lattice::floor_mul;
use crate::percolation::Connectivity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Green,
    Cap,
    Sample,
    Decompose,
    Disconnect,
    ContourBound,
    TiltLowerbound,
    Zfield,
    CoarseGrain,
    Interlace,
    Srw,
    Rates,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::Green,
        Experiment::Cap,
        Experiment::Sample,
        Experiment::Decompose,
        Experiment::Disconnect,
        Experiment::ContourBound,
        Experiment::TiltLowerbound,
        Experiment::Zfield,
        Experiment::CoarseGrain,
        Experiment::Interlace,
        Experiment::Srw,
        Experiment::Rates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Green => "green",
            Experiment::Cap => "cap",
            Experiment::Sample => "sample",
            Experiment::Decompose => "decompose",
            Experiment::Disconnect => "disconnect",
            Experiment::ContourBound => "contour-bound",
            Experiment::TiltLowerbound => "tilt-lowerbound",
            Experiment::Zfield => "zfield",
            Experiment::CoarseGrain => "coarse-grain",
            Experiment::Interlace => "interlace",
            Experiment::Srw => "srw",
            Experiment::Rates => "rates",
        }
    }

    pub fn from_name(s: &str) -> Option<Experiment> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Alternative computations of one subcommand.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// `coarse-grain`: bad-column census; `interlace`: vacant-set
    /// disconnection curve.
    #[default]
    Default,
    /// `coarse-grain`: path check on adjacent good boxes.
    Paths,
    /// `interlace`: occupation law at the origin.
    Vacancy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateName {
    GffLower,
    GffContour,
    GffUpper,
    InterlacementLower,
    InterlacementUpper,
    Srw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

/// Every parameter of every experiment. Each subcommand reads the fields it
/// needs; the rest keep their defaults and are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: i64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "L")]
    pub l: i64,
    #[serde(rename = "K")]
    pub k: i64,
    /// Values of `K` for the `zfield` trend; empty means `[K]`.
    #[serde(rename = "K_grid")]
    pub k_grid: Vec<i64>,
    pub alphas: Vec<f64>,
    pub us: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub a: f64,
    pub connectivity: Connectivity,
    /// Cube radii for `cap`.
    pub boxes: Vec<i64>,
    /// Lattice points for `green`.
    pub points: Vec<Vec<i64>>,
    pub n_mc: u64,
    pub seed: u64,
    pub guard_factor: f64,
    /// Guard factors for `srw`; empty means `[guard_factor]`.
    pub guard_factors: Vec<f64>,
    /// Sup-radius of the window for `sample` and `decompose`.
    pub window: i64,
    /// Sup-radius of `U` for `decompose`.
    pub u_radius: i64,
    /// Killing radius for the Dirichlet capacity in `cap`; 0 skips it.
    pub dirichlet_r: i64,
    /// Number of boxes on a line for `zfield`.
    pub sites: usize,
    /// Side of the cube of boxes for `coarse-grain` in path mode.
    pub grid: usize,
    pub mode: Mode,
    /// Tilt plateau value and the half-width of the plateau in units of `N`.
    pub plateau: f64,
    pub inner: f64,
    pub rate: RateName,
    /// `h_**`, `h̄` or `h_0` for the rate formulas.
    pub h: f64,
    pub u_star: f64,
    /// Cube radii for the Brownian capacity extrapolation in `rates`.
    pub cap_ns: Vec<i64>,
    pub dense_limit: usize,
    pub out: Option<String>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            d: 3,
            n: 2,
            m: 2.0,
            l: 4,
            k: 3,
            k_grid: Vec::new(),
            alphas: vec![0.0],
            us: vec![0.5],
            gamma: 0.0,
            delta: -0.5,
            a: 1.5,
            connectivity: Connectivity::Nearest,
            boxes: vec![1, 2, 3],
            points: vec![vec![0, 0, 0], vec![1, 0, 0], vec![5, 0, 0], vec![25, 0, 0]],
            n_mc: 1000,
            seed: 0,
            guard_factor: 3.0,
            guard_factors: Vec::new(),
            window: 6,
            u_radius: 3,
            dirichlet_r: 0,
            sites: 1,
            grid: 2,
            mode: Mode::Default,
            plateau: -1.0,
            inner: 1.25,
            rate: RateName::GffLower,
            h: 1.0,
            u_star: 0.5,
            cap_ns: vec![10, 20, 40],
            dense_limit: DEFAULT_DENSE_LIMIT,
            out: None,
            format: Format::Both,
        };
        match experiment {
            Experiment::Disconnect => c.alphas = vec![-0.5, 0.0, 0.5, 1.0],
            Experiment::ContourBound => {
                c.n = 4;
                c.alphas = vec![-1.0];
                c.n_mc = 10_000;
            }
            Experiment::TiltLowerbound => {
                c.n = 6;
                c.alphas = vec![-0.5];
                c.plateau = -3.0;
            }
            Experiment::Zfield => c.k_grid = vec![2, 3, 4, 5],
            Experiment::CoarseGrain => {
                c.n = 8;
                c.l = 10;
                c.k = 2;
                c.n_mc = 4;
                c.guard_factor = 2.0;
            }
            Experiment::Interlace => c.us = vec![0.1, 0.5, 2.0],
            Experiment::Srw => {
                c.n = 1;
                c.guard_factors = vec![1.0, 2.0, 4.0];
            }
            Experiment::Rates => {
                c.alphas = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
                c.us = vec![0.0, 0.25, 0.5];
            }
            _ => {}
        }
        c
    }

    /// Defaults, then the config file, then individual overrides; later
    /// layers replace earlier ones key by key.
    pub fn layered(experiment: Experiment, file: Option<Value>, overrides: &Map<String, Value>) -> Result<Self> {
        let mut tree = match serde_json::to_value(Self::defaults(experiment)) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        let mut errs = Vec::new();
        match file {
            None => {}
            Some(Value::Object(m)) => {
                if let Some(e) = m.get("experiment") {
                    if e != &Value::String(experiment.name().into()) {
                        errs.push(format!("config file is for experiment {e}, not {experiment}"));
                    }
                }
                tree.extend(m);
            }
            Some(_) => errs.push("config file must hold a JSON object".into()),
        }
        tree.extend(overrides.clone());
        tree.insert("experiment".into(), Value::String(experiment.name().into()));
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(Value::Object(tree)).map_err(|e| Error::Validation(vec![e.to_string()]))?;
        let errs = cfg.validate();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn k_values(&self) -> Vec<i64> {
        if self.k_grid.is_empty() {
            vec![self.k]
        } else {
            self.k_grid.clone()
        }
    }

    pub fn guard_values(&self) -> Vec<f64> {
        if self.guard_factors.is_empty() {
            vec![self.guard_factor]
        } else {
            self.guard_factors.clone()
        }
    }

    pub fn rate_variant(&self) -> RateVariant {
        match self.rate {
            RateName::GffLower => RateVariant::GffLower { h: self.h },
            RateName::GffContour => RateVariant::GffContour,
            RateName::GffUpper => RateVariant::GffUpper { h: self.h },
            RateName::InterlacementLower => RateVariant::InterlacementLower { u_star: self.u_star },
            RateName::InterlacementUpper => RateVariant::InterlacementUpper { h: self.h },
            RateName::Srw => RateVariant::Srw { h: self.h },
        }
    }

    /// Every violated precondition of the selected experiment.
    pub fn validate(&self) -> Vec<String> {
        use Experiment::*;
        let mut e = Vec::new();
        fn need(e: &mut Vec<String>, ok: bool, msg: String) {
            if !ok {
                e.push(msg);
            }
        }
        need(&mut e, (3..=8).contains(&self.d), format!("d = {} must be between 3 and 8", self.d));
        need(&mut e, self.dense_limit >= 1, "dense_limit must be positive".into());
        let ex = self.experiment;
        let mc = !matches!(ex, Green | Cap | Rates);
        if mc {
            let min = if matches!(ex, Decompose | Zfield | Sample) { 2 } else { 1 };
            need(&mut e, self.n_mc >= min, format!("n_mc = {} must be at least {min}", self.n_mc));
        }
        let gf_min = if ex == Srw { 1.0 } else { 2.0 };
        if matches!(ex, Sample | Disconnect | ContourBound | TiltLowerbound | CoarseGrain | Interlace) {
            need(&mut e, self.guard_factor >= gf_min,
                format!("guard_factor = {} must be at least {gf_min}", self.guard_factor),
            );
        }
        if matches!(ex, Disconnect | ContourBound | TiltLowerbound | Interlace | Srw | CoarseGrain)
            && !(ex == Interlace && self.mode == Mode::Vacancy)
            && !(ex == CoarseGrain && self.mode == Mode::Paths)
        {
            need(&mut e, self.n >= 1, format!("N = {} must be at least 1", self.n));
            need(&mut e, self.m > 1.0, format!("M = {} must exceed 1", self.m));
            let mn = floor_mul(self.m, self.n);
            need(&mut e, mn > self.n, format!("[MN] = {mn} must be at least N + 1"));
        }
        let alphas = |e: &mut Vec<String>| {
            if self.alphas.is_empty() {
                e.push("alphas must not be empty".into());
            }
            if self.alphas.iter().any(|a| !a.is_finite()) {
                e.push("alphas must be finite".into());
            }
        };
        let positive_us = |e: &mut Vec<String>| {
            if self.us.is_empty() {
                e.push("us must not be empty".into());
            }
            if let Some(u) = self.us.iter().find(|u| !(**u > 0.0 && u.is_finite())) {
                e.push(format!("u = {u} must be positive and finite"));
            }
        };
        match ex {
            Green => {
                if self.points.is_empty() {
                    e.push("points must not be empty".into());
                }
                for p in &self.points {
                    if p.len() != self.d {
                        e.push(format!("point {p:?} does not have d = {} coordinates", self.d));
                    }
                }
            }
            Cap => {
                if self.boxes.is_empty() {
                    e.push("boxes must not be empty".into());
                }
                if let Some(b) = self.boxes.iter().find(|&&b| b < 0) {
                    e.push(format!("box radius {b} must be nonnegative"));
                }
                let rmax = self.boxes.iter().copied().max().unwrap_or(0);
                if self.dirichlet_r != 0 && self.dirichlet_r < 2 * (rmax + 1) {
                    e.push(format!(
                        "dirichlet_r = {} must be 0 or at least twice the largest box radius plus 2",
                        self.dirichlet_r
                    ));
                }
            }
            Sample => need(&mut e, self.window >= 0, format!("window = {} must be nonnegative", self.window)),
            Decompose => {
                if self.u_radius < 0 {
                    e.push(format!("u_radius = {} must be nonnegative", self.u_radius));
                }
                if self.window < self.u_radius + 2 {
                    e.push(format!(
                        "window = {} must be at least u_radius + 2 = {} so that some sites lie off the closure of U",
                        self.window,
                        self.u_radius + 2
                    ));
                }
            }
            Disconnect | TiltLowerbound => alphas(&mut e),
            ContourBound => {
                alphas(&mut e);
                if let Some(a) = self.alphas.iter().find(|a| **a >= 0.0) {
                    e.push(format!("contour bound needs α < 0, got {a}"));
                }
            }
            Zfield => {
                if self.l < 1 {
                    e.push(format!("L = {} must be at least 1", self.l));
                }
                if let Some(k) = self.k_values().iter().find(|&&k| k < 2) {
                    e.push(format!("K = {k} must be at least 2"));
                }
                if self.sites < 1 {
                    e.push("sites must be at least 1".into());
                }
            }
            CoarseGrain => {
                if self.l < 10 {
                    e.push(format!("ψ-classification needs L ≥ 10, got {}", self.l));
                }
                if self.k < 2 {
                    e.push(format!("K = {} must be at least 2", self.k));
                }
                if !(self.gamma.is_finite() && self.delta.is_finite()) {
                    e.push("γ and δ must be finite".into());
                }
                if self.delta > self.gamma {
                    e.push(format!("need δ ≤ γ, got δ = {} > γ = {}", self.delta, self.gamma));
                }
                if !(self.a > 0.0) {
                    e.push(format!("a = {} must be positive", self.a));
                }
                if self.mode == Mode::Vacancy {
                    e.push("mode vacancy does not apply to coarse-grain".into());
                }
                if self.mode == Mode::Paths && self.grid < 1 {
                    e.push("grid must be at least 1".into());
                }
            }
            Interlace => {
                positive_us(&mut e);
                if self.mode == Mode::Paths {
                    e.push("mode paths does not apply to interlace".into());
                }
                if self.mode == Mode::Vacancy && self.n_mc < 2 {
                    e.push("vacancy mode needs n_mc ≥ 2".into());
                }
            }
            Srw => {
                let g = self.guard_values();
                if let Some(x) = g.iter().find(|x| !(**x >= 1.0)) {
                    e.push(format!("guard factor {x} must be at least 1"));
                }
            }
            Rates => {
                let xs = if self.rate_variant().parameter() == "u" { &self.us } else { &self.alphas };
                if xs.is_empty() {
                    e.push("the level grid must not be empty".into());
                }
                if self.cap_ns.len() < 2 || self.cap_ns.windows(2).any(|w| w[0] >= w[1]) || self.cap_ns[0] < 1 {
                    e.push(format!(
                        "cap_ns = {:?} must be strictly increasing, positive, with at least two entries",
                        self.cap_ns
                    ));
                }
            }
        }
        if ex == TiltLowerbound {
            if !(self.inner > 0.0 && self.inner < self.m) {
                e.push(format!("need 0 < inner = {} < M = {}", self.inner, self.m));
            }
            if !self.plateau.is_finite() {
                e.push("plateau must be finite".into());
            }
        }
        e
    }

    /// The config without output settings, as hashed in the provenance.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.format = Format::default();
        serde_json::to_string(&c).expect("config serializes")
    }
}

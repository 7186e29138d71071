use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::HarnessError;
use crate::optimize::OverflowPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    LqrExact,
    LqrModelFree,
    PlNonconvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Aqgd,
    Naqgd,
    GdUnquantized,
    GdStaticQuantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerKind {
    Scalar,
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// High-probability bound from the LQR constants.
    Theory,
    /// Calibrated against exact gradients.
    Empirical,
    /// `ε_t = noise_eps · noise_decay^t`.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbKind {
    Random,
    Against,
    Along,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $text),+ }
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown value `{other}`; expected one of {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(ProblemKind { Quadratic => "quadratic", LqrExact => "lqr-exact", LqrModelFree => "lqr-modelfree", PlNonconvex => "pl-nonconvex" });
keyword_enum!(Algorithm { Aqgd => "aqgd", Naqgd => "naqgd", GdUnquantized => "gd-unquantized", GdStaticQuantized => "gd-static-quantized" });
keyword_enum!(QuantizerKind { Scalar => "scalar", Net => "net" });
keyword_enum!(NoiseKind { None => "none", Theory => "theory", Empirical => "empirical", Manual => "manual" });
keyword_enum!(PerturbKind { Random => "random", Against => "against", Along => "along" });

/// One experiment. Optional fields fall back to the parameter rules of the
/// chosen algorithm when left unset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Dimension of synthetic problems.
    pub dim: usize,
    pub kappa: f64,
    pub amplitude: f64,
    /// Distance of the synthetic starting point from the minimizer.
    pub init_radius: f64,
    pub lqr_n: usize,
    pub lqr_m: usize,
    pub lqr_rho: f64,
    pub system: Option<PathBuf>,
    pub q_scale: f64,
    pub r_scale: f64,
    pub noise_scale: f64,
    pub j_bar: Option<f64>,
    pub smoothness: Option<f64>,
    pub algorithm: Algorithm,
    pub quantizer: QuantizerKind,
    pub bits: Option<u32>,
    pub net_gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub r0: Option<f64>,
    pub static_range: Option<f64>,
    pub iters: usize,
    pub trajectories: usize,
    pub horizon: usize,
    pub radius: f64,
    pub noise: NoiseKind,
    pub noise_eps: f64,
    pub noise_decay: f64,
    pub noise_delta: f64,
    pub calibration_calls: usize,
    pub perturbation: PerturbKind,
    pub overflow: OverflowPolicy,
    /// Fixes the problem instance and the starting point.
    pub instance_seed: u64,
    /// Drives every random choice made while running.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Quadratic,
            dim: 20,
            kappa: 100.0,
            amplitude: 3.0,
            init_radius: 1.0,
            lqr_n: 5,
            lqr_m: 3,
            lqr_rho: 0.5,
            system: None,
            q_scale: 5.0,
            r_scale: 5.0,
            noise_scale: 1.0,
            j_bar: None,
            smoothness: None,
            algorithm: Algorithm::Aqgd,
            quantizer: QuantizerKind::Scalar,
            bits: None,
            net_gamma: None,
            alpha: None,
            r0: None,
            static_range: None,
            iters: 1000,
            trajectories: 200,
            horizon: 400,
            radius: 0.1,
            noise: NoiseKind::None,
            noise_eps: 0.0,
            noise_decay: 1.0,
            noise_delta: 0.1,
            calibration_calls: 20,
            perturbation: PerturbKind::Random,
            overflow: OverflowPolicy::Fail,
            instance_seed: 0,
            seed: 0,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| HarnessError::Config(format!("{key}: {e}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, HarnessError>
where
    T::Err: fmt::Display,
{
    match value {
        "" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

impl ExperimentConfig {
    /// Assigns one key; the same names the text format uses.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let v = value.trim();
        match key.trim() {
            "problem" => self.problem = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "kappa" => self.kappa = parse(key, v)?,
            "amplitude" => self.amplitude = parse(key, v)?,
            "init_radius" => self.init_radius = parse(key, v)?,
            "n" => self.lqr_n = parse(key, v)?,
            "m" => self.lqr_m = parse(key, v)?,
            "rho" => self.lqr_rho = parse(key, v)?,
            "system" => self.system = parse_opt(key, v)?,
            "q_scale" => self.q_scale = parse(key, v)?,
            "r_scale" => self.r_scale = parse(key, v)?,
            "noise_scale" => self.noise_scale = parse(key, v)?,
            "j_bar" => self.j_bar = parse_opt(key, v)?,
            "smoothness" => self.smoothness = parse_opt(key, v)?,
            "algorithm" => self.algorithm = parse(key, v)?,
            "quantizer" => self.quantizer = parse(key, v)?,
            "bits" => self.bits = parse_opt(key, v)?,
            "net_gamma" => self.net_gamma = parse_opt(key, v)?,
            "alpha" => self.alpha = parse_opt(key, v)?,
            "r0" => self.r0 = parse_opt(key, v)?,
            "static_range" => self.static_range = parse_opt(key, v)?,
            "iters" => self.iters = parse(key, v)?,
            "trajectories" => self.trajectories = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "radius" => self.radius = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "noise_eps" => self.noise_eps = parse(key, v)?,
            "noise_decay" => self.noise_decay = parse(key, v)?,
            "noise_delta" => self.noise_delta = parse(key, v)?,
            "calibration_calls" => self.calibration_calls = parse(key, v)?,
            "perturbation" => self.perturbation = parse(key, v)?,
            "overflow" => {
                self.overflow = match v {
                    "fail" => OverflowPolicy::Fail,
                    "clip" => OverflowPolicy::Clip,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "overflow: unknown value `{other}`; expected fail, clip"
                        )))
                    }
                }
            }
            "instance_seed" => self.instance_seed = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = parse_opt(key, v)?,
            other => return Err(HarnessError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k, v)
                .map_err(|e| HarnessError::Config(format!("line {}: {}", i + 1, e.detail())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let overflow = match self.overflow {
            OverflowPolicy::Fail => "fail",
            OverflowPolicy::Clip => "clip",
        };
        let system = self.system.as_ref().map(|p| p.display().to_string());
        let out = self.out.as_ref().map(|p| p.display().to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("problem", self.problem.to_string()),
            ("dim", self.dim.to_string()),
            ("kappa", self.kappa.to_string()),
            ("amplitude", self.amplitude.to_string()),
            ("init_radius", self.init_radius.to_string()),
            ("n", self.lqr_n.to_string()),
            ("m", self.lqr_m.to_string()),
            ("rho", self.lqr_rho.to_string()),
            ("system", show(&system)),
            ("q_scale", self.q_scale.to_string()),
            ("r_scale", self.r_scale.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("j_bar", show(&self.j_bar)),
            ("smoothness", show(&self.smoothness)),
            ("algorithm", self.algorithm.to_string()),
            ("quantizer", self.quantizer.to_string()),
            ("bits", show(&self.bits)),
            ("net_gamma", show(&self.net_gamma)),
            ("alpha", show(&self.alpha)),
            ("r0", show(&self.r0)),
            ("static_range", show(&self.static_range)),
            ("iters", self.iters.to_string()),
            ("trajectories", self.trajectories.to_string()),
            ("horizon", self.horizon.to_string()),
            ("radius", self.radius.to_string()),
            ("noise", self.noise.to_string()),
            ("noise_eps", self.noise_eps.to_string()),
            ("noise_decay", self.noise_decay.to_string()),
            ("noise_delta", self.noise_delta.to_string()),
            ("calibration_calls", self.calibration_calls.to_string()),
            ("perturbation", self.perturbation.to_string()),
            ("overflow", overflow.to_string()),
            ("instance_seed", self.instance_seed.to_string()),
            ("seed", self.seed.to_string()),
            ("out", show(&out)),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn is_lqr(&self) -> bool {
        matches!(self.problem, ProblemKind::LqrExact | ProblemKind::LqrModelFree)
    }

    // Negated comparisons so that NaN fails every bound.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        let noisy = self.algorithm == Algorithm::Naqgd;
        if noisy && self.noise == NoiseKind::None {
            return bad("naqgd needs a noise schedule (noise = theory | empirical | manual)");
        }
        if !noisy && self.noise != NoiseKind::None {
            return bad("a noise schedule only applies to naqgd");
        }
        if self.problem == ProblemKind::LqrModelFree && !noisy {
            return bad("model-free gradients are only consumed by naqgd");
        }
        if matches!(self.noise, NoiseKind::Theory | NoiseKind::Empirical) && self.problem != ProblemKind::LqrModelFree {
            return bad("theory and empirical noise modes need problem = lqr-modelfree");
        }
        if !self.is_lqr() && (self.dim == 0 || !(self.init_radius >= 0.0)) {
            return bad("dim must be positive and init_radius non-negative");
        }
        if self.problem == ProblemKind::Quadratic && !(self.kappa >= 1.0) {
            return bad("kappa must be at least 1");
        }
        if self.is_lqr() && self.system.is_none() && !(self.lqr_rho > 0.0 && self.lqr_rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if self.is_lqr() && (self.lqr_n == 0 || self.lqr_m == 0) {
            return bad("n and m must be positive");
        }
        if self.problem == ProblemKind::LqrModelFree
            && (self.trajectories == 0 || self.horizon == 0 || !(self.radius > 0.0))
        {
            return bad("estimator needs positive trajectories, horizon and radius");
        }
        if !(self.noise_eps >= 0.0 && self.noise_decay > 0.0 && self.noise_delta > 0.0 && self.noise_delta < 1.0) {
            return bad("need noise_eps >= 0, noise_decay > 0 and noise_delta in (0, 1)");
        }
        if self.noise == NoiseKind::Empirical && self.calibration_calls == 0 {
            return bad("empirical noise needs calibration_calls > 0");
        }
        if self.quantizer == QuantizerKind::Net && self.algorithm == Algorithm::GdStaticQuantized {
            return bad("the static baseline uses the scalar quantizer");
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("r0", self.r0),
            ("static_range", self.static_range),
            ("smoothness", self.smoothness),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(HarnessError::Config(format!("{name} must be positive and finite")));
                }
            }
        }
        Ok(())
    }
}

//! Scenario files: flat `key = value` text grouped in `[scenario]`,
//! `[sweep]` and `[output]` sections. `#` starts a comment.
//!
//! dB inputs are converted when parsed: `x = 10^(x_dB / 10)`, and dBm to
//! watts as `10^((x_dBm - 30) / 10)`; e.g. `rho0_db = -30` gives `1e-3` and
//! `sigma_w2_dbm = -89` gives `1.2589e-12 W`.
//!
//! ```text
//! [scenario]
//! preset = desk          # paper | desk, applied before the other keys
//! ue_positions = -8,44,5; -6,42,5
//! kappa_a_db = -20
//! eta = 0.99             # one value for all links, or K+1 values
//!
//! [sweep]
//! estimators = LMMSE, CorrelatedGroupingLMMSE
//! groups = 4, 8
//! snr_min_db = -10
//! snr_max_db = 40
//! snr_step_db = 10
//! trials = 2000
//! seed = 1
//!
//! [output]
//! out = results.csv
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Point3;

use crate::channel_model::{DirectLink, FadingParams, SystemGeometry};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::montecarlo::{Normalization, SweepConfig};
use crate::scalar::{db_to_linear, dbm_to_watts, linear_to_db};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-size scenario: M = 8, N = 8x8, K = 4, 16 groups.
    Paper,
    /// Reduced scenario: M = 4, N = 4x4, K = 2, 4 groups.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Usage(format!("preset must be 'paper' or 'desk', got '{other}'"))),
        }
    }
}

/// Physical scenario in user-facing units (dB values kept in dB).
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub ue_positions: Vec<[f64; 3]>,
    pub ris_nx: usize,
    pub ris_ny: usize,
    pub bs_antennas: usize,
    pub wavelength: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_0: f64,
    pub bs_aoa_deg: f64,
    pub kappa_a_db: f64,
    pub kappa_g_db: f64,
    pub alpha_a: f64,
    pub alpha_g: f64,
    pub alpha_b: f64,
    pub rho0_db: f64,
    pub sigma_w2_dbm: f64,
    /// Either one value shared by every link or `K + 1` values (RIS-BS first).
    pub eta: Vec<f64>,
    pub direct_link: DirectLink,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    pub estimators: Vec<EstimatorKind>,
    pub groups: Vec<usize>,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    pub trials: usize,
    pub seed: u64,
    pub extra_patterns: usize,
    pub normalization: Normalization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub sweep: SweepSettings,
    /// `None` writes to stdout.
    pub out: Option<PathBuf>,
}

const UES: [[f64; 3]; 4] = [[-8.0, 44.0, 5.0], [-6.0, 42.0, 5.0], [6.0, 42.0, 5.0], [8.0, 44.0, 5.0]];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (n_side, m, k, groups, trials) = match preset {
            Preset::Paper => (8, 8, 4, 16, 200),
            Preset::Desk => (4, 4, 2, 4, 2000),
        };
        RunConfig {
            scenario: Scenario {
                bs_position: [0.0, 0.0, 15.0],
                ris_position: [0.0, 50.0, 10.0],
                ue_positions: UES[..k].to_vec(),
                ris_nx: n_side,
                ris_ny: n_side,
                bs_antennas: m,
                wavelength: 0.1,
                delta_x: 0.05,
                delta_y: 0.05,
                delta_0: 0.05,
                bs_aoa_deg: 60.0,
                kappa_a_db: -20.0,
                kappa_g_db: 3.0,
                alpha_a: 2.5,
                alpha_g: 2.2,
                alpha_b: 3.5,
                rho0_db: -30.0,
                sigma_w2_dbm: -89.0,
                eta: vec![0.99],
                direct_link: DirectLink::Blocked,
            },
            sweep: SweepSettings {
                estimators: EstimatorKind::ALL.to_vec(),
                groups: vec![groups],
                snr_min_db: -10.0,
                snr_max_db: 40.0,
                snr_step_db: 10.0,
                trials,
                seed: 1,
                extra_patterns: 0,
                normalization: Normalization::Prior,
            },
            out: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses scenario text; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let entries = lex(text, origin)?;
        let preset = match entries.iter().find(|e| e.section == "scenario" && e.key == "preset") {
            Some(e) => e.value.parse().map_err(|err: Error| e.error(origin, err.to_string()))?,
            None => Preset::Paper,
        };
        let mut cfg = Self::preset(preset);
        for e in &entries {
            cfg.apply(e).map_err(|msg| e.error(origin, msg))?;
        }
        Ok(cfg)
    }

    fn apply(&mut self, e: &Entry) -> std::result::Result<(), String> {
        let sc = &mut self.scenario;
        let sw = &mut self.sweep;
        let v = e.value.as_str();
        match (e.section.as_str(), e.key.as_str()) {
            ("scenario", "preset") => {}
            ("scenario", "bs_position") => sc.bs_position = point(v)?,
            ("scenario", "ris_position") => sc.ris_position = point(v)?,
            ("scenario", "ue_positions") => {
                sc.ue_positions = v.split(';').map(point).collect::<std::result::Result<_, _>>()?;
            }
            ("scenario", "ris_nx") => sc.ris_nx = positive(v)?,
            ("scenario", "ris_ny") => sc.ris_ny = positive(v)?,
            ("scenario", "bs_antennas") => sc.bs_antennas = positive(v)?,
            ("scenario", "wavelength") => sc.wavelength = num(v)?,
            ("scenario", "delta_x") => sc.delta_x = num(v)?,
            ("scenario", "delta_y") => sc.delta_y = num(v)?,
            ("scenario", "delta_0") => sc.delta_0 = num(v)?,
            ("scenario", "bs_aoa_deg") => sc.bs_aoa_deg = num(v)?,
            ("scenario", "kappa_a_db") => sc.kappa_a_db = num(v)?,
            ("scenario", "kappa_g_db") => sc.kappa_g_db = num(v)?,
            ("scenario", "alpha_a") => sc.alpha_a = num(v)?,
            ("scenario", "alpha_g") => sc.alpha_g = num(v)?,
            ("scenario", "alpha_b") => sc.alpha_b = num(v)?,
            ("scenario", "rho0_db") => sc.rho0_db = num(v)?,
            ("scenario", "sigma_w2_dbm") => sc.sigma_w2_dbm = num(v)?,
            ("scenario", "eta") => sc.eta = list(v, num)?,
            ("scenario", "direct_link") => {
                sc.direct_link = match v.to_ascii_lowercase().as_str() {
                    "blocked" => DirectLink::Blocked,
                    "path_loss" => DirectLink::PathLoss,
                    _ => return Err(format!("expected 'blocked' or 'path_loss', got '{v}'")),
                }
            }
            ("sweep", "estimators") => sw.estimators = parse_estimators(v)?,
            ("sweep", "groups") => sw.groups = list(v, positive)?,
            ("sweep", "snr_min_db") => sw.snr_min_db = num(v)?,
            ("sweep", "snr_max_db") => sw.snr_max_db = num(v)?,
            ("sweep", "snr_step_db") => sw.snr_step_db = num(v)?,
            ("sweep", "trials") => sw.trials = positive(v)?,
            ("sweep", "seed") => sw.seed = v.parse().map_err(|_| format!("expected an unsigned 64-bit seed, got '{v}'"))?,
            ("sweep", "extra_patterns") => sw.extra_patterns = v.parse().map_err(|_| format!("expected a count, got '{v}'"))?,
            ("sweep", "normalization") => sw.normalization = v.parse().map_err(|e: Error| e.to_string())?,
            ("output", "out") => self.out = (!v.is_empty() && v != "-").then(|| PathBuf::from(v)),
            (section, key) => return Err(format!("unknown key '{key}' in [{section}]")),
        }
        Ok(())
    }

    /// SNR grid from min to max (inclusive) in steps.
    pub fn snr_points(&self) -> Result<Vec<f64>> {
        let s = &self.sweep;
        if !(s.snr_step_db > 0.0) || !(s.snr_max_db >= s.snr_min_db) {
            return Err(Error::Config(format!(
                "invalid SNR range {}..{} step {}",
                s.snr_min_db, s.snr_max_db, s.snr_step_db
            )));
        }
        let count = ((s.snr_max_db - s.snr_min_db) / s.snr_step_db + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| s.snr_min_db + i as f64 * s.snr_step_db).collect())
    }

    pub fn geometry(&self) -> SystemGeometry<f64> {
        let sc = &self.scenario;
        let p = |a: [f64; 3]| Point3::new(a[0], a[1], a[2]);
        SystemGeometry {
            bs_position: p(sc.bs_position),
            ris_position: p(sc.ris_position),
            ue_positions: sc.ue_positions.iter().copied().map(p).collect(),
            n_x: sc.ris_nx,
            n_y: sc.ris_ny,
            m_antennas: sc.bs_antennas,
            delta_x: sc.delta_x,
            delta_y: sc.delta_y,
            delta_0: sc.delta_0,
            wavelength: sc.wavelength,
            bs_aoa: sc.bs_aoa_deg.to_radians(),
        }
    }

    pub fn fading(&self) -> Result<FadingParams<f64>> {
        let sc = &self.scenario;
        let links = sc.ue_positions.len() + 1;
        let eta = match sc.eta.len() {
            1 => vec![sc.eta[0]; links],
            n if n == links => sc.eta.clone(),
            n => {
                return Err(Error::Config(format!(
                    "eta needs 1 or {links} values (RIS-BS link then one per user), got {n}"
                )))
            }
        };
        Ok(FadingParams {
            kappa_a: db_to_linear(sc.kappa_a_db),
            kappa_g: db_to_linear(sc.kappa_g_db),
            alpha_a: sc.alpha_a,
            alpha_g: sc.alpha_g,
            alpha_b: sc.alpha_b,
            rho_0: db_to_linear(sc.rho0_db),
            eta,
            direct_link: sc.direct_link,
        })
    }

    pub fn sigma_w2(&self) -> f64 {
        dbm_to_watts(self.scenario.sigma_w2_dbm)
    }

    pub fn sweep_config(&self) -> Result<SweepConfig<f64>> {
        let cfg = SweepConfig {
            geometry: self.geometry(),
            fading: self.fading()?,
            estimators: self.sweep.estimators.clone(),
            snr_db: self.snr_points()?,
            n_trials: self.sweep.trials,
            n_groups: self.sweep.groups.clone(),
            extra_patterns: self.sweep.extra_patterns,
            sigma_w2: self.sigma_w2(),
            base_seed: self.sweep.seed,
            normalization: self.sweep.normalization,
            workers: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Complete configuration in file syntax with every key explicit; parses
    /// back to an equal value.
    pub fn canonical(&self) -> String {
        let sc = &self.scenario;
        let sw = &self.sweep;
        let pt = |p: &[f64; 3]| format!("{:?},{:?},{:?}", p[0], p[1], p[2]);
        let join = |v: Vec<String>, sep: &str| v.join(sep);
        let mut s = String::from("[scenario]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("bs_position", pt(&sc.bs_position));
        kv("ris_position", pt(&sc.ris_position));
        kv("ue_positions", join(sc.ue_positions.iter().map(pt).collect(), "; "));
        kv("ris_nx", sc.ris_nx.to_string());
        kv("ris_ny", sc.ris_ny.to_string());
        kv("bs_antennas", sc.bs_antennas.to_string());
        kv("wavelength", format!("{:?}", sc.wavelength));
        kv("delta_x", format!("{:?}", sc.delta_x));
        kv("delta_y", format!("{:?}", sc.delta_y));
        kv("delta_0", format!("{:?}", sc.delta_0));
        kv("bs_aoa_deg", format!("{:?}", sc.bs_aoa_deg));
        kv("kappa_a_db", format!("{:?}", sc.kappa_a_db));
        kv("kappa_g_db", format!("{:?}", sc.kappa_g_db));
        kv("alpha_a", format!("{:?}", sc.alpha_a));
        kv("alpha_g", format!("{:?}", sc.alpha_g));
        kv("alpha_b", format!("{:?}", sc.alpha_b));
        kv("rho0_db", format!("{:?}", sc.rho0_db));
        kv("sigma_w2_dbm", format!("{:?}", sc.sigma_w2_dbm));
        kv("eta", join(sc.eta.iter().map(|x| format!("{x:?}")).collect(), ", "));
        kv(
            "direct_link",
            match sc.direct_link {
                DirectLink::Blocked => "blocked".into(),
                DirectLink::PathLoss => "path_loss".into(),
            },
        );
        s.push_str("\n[sweep]\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("estimators", join(sw.estimators.iter().map(|e| e.name().to_string()).collect(), ", "));
        kv("groups", join(sw.groups.iter().map(|g| g.to_string()).collect(), ", "));
        kv("snr_min_db", format!("{:?}", sw.snr_min_db));
        kv("snr_max_db", format!("{:?}", sw.snr_max_db));
        kv("snr_step_db", format!("{:?}", sw.snr_step_db));
        kv("trials", sw.trials.to_string());
        kv("seed", sw.seed.to_string());
        kv("extra_patterns", sw.extra_patterns.to_string());
        kv("normalization", sw.normalization.to_string());
        s.push_str("\n[output]\n");
        let _ = writeln!(s, "out = {}", self.out.as_ref().map_or("-".to_string(), |p| p.display().to_string()));
        s
    }

    /// FNV-1a hash of [`Self::canonical`], for provenance lines.
    pub fn digest(&self) -> u64 {
        self.canonical().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }

    /// One-line human summary of the scenario.
    pub fn summary(&self) -> String {
        let sc = &self.scenario;
        format!(
            "M = {}, N = {}x{}, K = {}, kappa_A = {} dB, kappa_g = {} dB, eta = {:?}, sigma_w^2 = {:.3e} W ({} dBm)",
            sc.bs_antennas,
            sc.ris_nx,
            sc.ris_ny,
            sc.ue_positions.len(),
            sc.kappa_a_db,
            sc.kappa_g_db,
            sc.eta,
            self.sigma_w2(),
            linear_to_db(self.sigma_w2()) + 30.0
        )
    }
}

pub fn parse_estimators(v: &str) -> std::result::Result<Vec<EstimatorKind>, String> {
    let out: Vec<EstimatorKind> = list(v, |s| s.parse::<EstimatorKind>().map_err(|e| e.to_string()))?;
    if out.is_empty() {
        return Err("estimator list is empty".into());
    }
    Ok(out)
}

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

impl Entry {
    fn error(&self, origin: &str, message: String) -> Error {
        Error::Parse { origin: origin.into(), line: self.line, field: format!("{}.{}", self.section, self.key), message }
    }
}

fn lex(text: &str, origin: &str) -> Result<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |field: &str, message: String| Error::Parse { origin: origin.into(), line, field: field.into(), message };
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("section", format!("unterminated section header '{content}'")))?
                .trim();
            if !matches!(name, "scenario" | "sweep" | "output") {
                return Err(err("section", format!("unknown section [{name}]; expected scenario, sweep or output")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err("line", format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim().to_ascii_lowercase();
        let section = section.clone().ok_or_else(|| err(&key, "key appears before any [section] header".into()))?;
        if !seen.insert((section.clone(), key.clone())) {
            return Err(err(&format!("{section}.{key}"), "duplicate key".into()));
        }
        out.push(Entry { section, key, value: value.trim().to_string(), line });
    }
    Ok(out)
}

fn num(v: &str) -> std::result::Result<f64, String> {
    v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("expected a finite number, got '{v}'"))
}

fn positive(v: &str) -> std::result::Result<usize, String> {
    v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| format!("expected a positive integer, got '{v}'"))
}

fn list<T>(v: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn point(v: &str) -> std::result::Result<[f64; 3], String> {
    let xs = list(v, num)?;
    <[f64; 3]>::try_from(xs).map_err(|xs| format!("expected x,y,z but got {} values in '{}'", xs.len(), v.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_scenario() {
        let cfg = RunConfig::parse("", "empty").unwrap();
        assert_eq!(cfg, RunConfig::preset(Preset::Paper));
        let sc = &cfg.scenario;
        assert_eq!((sc.bs_antennas, sc.ris_nx * sc.ris_ny, sc.ue_positions.len()), (8, 64, 4));
        assert_eq!(cfg.sweep.groups, vec![16]);
        let f = cfg.fading().unwrap();
        assert!((f.kappa_a - 0.01).abs() < 1e-15);
        assert!((f.kappa_g - 1.9952623149688795).abs() < 1e-15);
        assert!((f.rho_0 - 1e-3).abs() < 1e-18);
        assert!((cfg.sigma_w2() - 1.2589254117941673e-12).abs() < 1e-26);
        assert_eq!(f.eta, vec![0.99; 5]);
        assert_eq!(cfg.snr_points().unwrap(), vec![-10.0, 0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn keys_override_the_preset() {
        let text = "# comment\n[scenario]\npreset = desk\neta = 0.9, 0.8, 0.7\n\n[sweep]\ngroups = 2, 8 # inline\nestimators = lmmse, CorrelatedGroupingLMMSE\nseed = 99\n[output]\nout = x.csv\n";
        let cfg = RunConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.scenario.bs_antennas, 4);
        assert_eq!(cfg.sweep.groups, vec![2, 8]);
        assert_eq!(cfg.sweep.estimators, vec![EstimatorKind::Lmmse, EstimatorKind::CorrelatedGroupingLmmse]);
        assert_eq!(cfg.sweep.seed, 99);
        assert_eq!(cfg.out, Some(PathBuf::from("x.csv")));
        assert_eq!(cfg.fading().unwrap().eta, vec![0.9, 0.8, 0.7]);
    }

    #[test]
    fn canonical_text_round_trips() {
        for preset in [Preset::Paper, Preset::Desk] {
            let cfg = RunConfig::preset(preset);
            let back = RunConfig::parse(&cfg.canonical(), "canonical").unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.digest(), cfg.digest());
        }
        assert_ne!(RunConfig::preset(Preset::Paper).digest(), RunConfig::preset(Preset::Desk).digest());
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let cases = [
            ("[scenario]\nkappa_a_db = loud\n", 2, "scenario.kappa_a_db"),
            ("[sweep]\n\ntrials = 0\n", 3, "sweep.trials"),
            ("[scenario]\nbs_position = 1,2\n", 2, "scenario.bs_position"),
            ("[scenario]\nmystery = 1\n", 2, "scenario.mystery"),
            ("[sweep]\nseed = 1\nseed = 2\n", 3, "sweep.seed"),
            ("trials = 3\n", 1, "trials"),
            ("[plots]\n", 1, "section"),
            ("[sweep]\nestimators = LMMSE, MAP\n", 2, "sweep.estimators"),
        ];
        for (text, line, field) in cases {
            match RunConfig::parse(text, "f.ini") {
                Err(Error::Parse { line: l, field: f, origin, .. }) => {
                    assert_eq!((l, f.as_str(), origin.as_str()), (line, field, "f.ini"), "{text}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn eta_length_is_checked() {
        let cfg = RunConfig::parse("[scenario]\neta = 0.9, 0.9\n", "t").unwrap();
        assert!(matches!(cfg.fading(), Err(Error::Config(_))));
    }

    #[test]
    fn snr_grid_is_inclusive() {
        let mut cfg = RunConfig::preset(Preset::Desk);
        cfg.sweep.snr_min_db = 0.0;
        cfg.sweep.snr_max_db = 1.0;
        cfg.sweep.snr_step_db = 0.1;
        assert_eq!(cfg.snr_points().unwrap().len(), 11);
        cfg.sweep.snr_step_db = 0.0;
        assert!(cfg.snr_points().is_err());
    }
}

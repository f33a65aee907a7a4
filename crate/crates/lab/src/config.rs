//! Potential and coefficient description files.
//!
//! Both are TOML. A potential file looks like
//!
//! ```toml
//! harmonics = [[1, 0.0, 1.0]]     # [k, a, b]: a cos(2πkx) + b sin(2πkx)
//! schedule.kind = "geometric"     # or "explicit", "stretched"
//! schedule.rho = 8                # geometric: integer ratio; stretched: real base
//! # schedule.ratios = [2, 3, 5]   # explicit
//! # schedule.alpha = 1.5          # stretched
//! n_max = 2
//! ```
//!
//! `harmonics` is the potential on every scale `0..=n_max`. Distinct scale
//! potentials go in `[[scale]]` tables, one `harmonics` list each; with
//! `cycle = true` that list repeats forever instead of ending at its last entry.
//! `pressure` and `kernel` only read the scale-0 potential, so for them the
//! schedule and `n_max` may be left out.

use std::path::Path;

use perpetual_core::potential::ScheduleKind;
use perpetual_core::{Harmonic, MultiScalePotential, PeriodicPotential, ScaleSchedule, TrigSeries};
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleEntry {
    pub harmonics: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scale: Vec<ScaleEntry>,
    #[serde(default)]
    pub cycle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

fn harmonics(rows: &[[f64; 3]]) -> Result<Vec<Harmonic>, LabError> {
    rows.iter()
        .map(|&[k, a, b]| {
            if !(k >= 1.0 && k.fract() == 0.0 && k <= u32::MAX as f64) {
                return Err(LabError::Config(format!("harmonic index {k} is not a positive integer")));
            }
            Ok(Harmonic::new(k as u32, a, b))
        })
        .collect()
}

fn read(path: &Path) -> Result<String, LabError> {
    std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))
}

impl PotentialSpec {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        Self::parse(&read(path)?)
    }

    pub fn schedule(&self) -> Result<ScaleSchedule, LabError> {
        let s = self.schedule.as_ref().ok_or_else(|| LabError::Config("the file has no schedule".into()))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| LabError::Config(format!("schedule.kind = \"{}\" needs schedule.{name}", s.kind)))
        };
        let out = match s.kind.as_str() {
            "explicit" => {
                let ratios = s
                    .ratios
                    .clone()
                    .ok_or_else(|| LabError::Config("explicit schedule needs schedule.ratios".into()))?;
                ScaleSchedule::explicit(ratios)?
            }
            "geometric" => {
                let rho = need(s.rho, "rho")?;
                if rho.fract() != 0.0 || rho < 2.0 {
                    return Err(LabError::Config(format!("geometric schedule needs an integer rho >= 2, got {rho}")));
                }
                ScaleSchedule::geometric(rho as u64)?
            }
            "stretched" => ScaleSchedule::stretched(need(s.rho, "rho")?, need(s.alpha, "alpha")?)?,
            other => return Err(LabError::Config(format!("unknown schedule.kind \"{other}\""))),
        };
        Ok(out)
    }

    /// The scale-0 potential.
    pub fn base(&self) -> Result<TrigSeries, LabError> {
        let rows = match (&self.harmonics, self.scale.first()) {
            (Some(h), _) => h,
            (None, Some(s)) => &s.harmonics,
            (None, None) => return Err(LabError::Config("no harmonics given".into())),
        };
        Ok(PeriodicPotential::new(harmonics(rows)?)?.into_series())
    }

    pub fn build(&self) -> Result<MultiScalePotential, LabError> {
        let schedule = self.schedule()?;
        let n_max = self.n_max.ok_or_else(|| LabError::Config("the file has no n_max".into()))?;
        let msp = match (&self.harmonics, self.scale.is_empty()) {
            (Some(_), false) => {
                return Err(LabError::Config("give either harmonics or [[scale]] tables, not both".into()))
            }
            (Some(h), true) => {
                MultiScalePotential::self_similar(PeriodicPotential::new(harmonics(h)?)?, schedule, n_max)?
            }
            (None, false) => {
                let pots = self
                    .scale
                    .iter()
                    .map(|s| Ok(PeriodicPotential::new(harmonics(&s.harmonics)?)?))
                    .collect::<Result<Vec<_>, LabError>>()?;
                MultiScalePotential::new(pots, self.cycle, schedule, n_max)?
            }
            (None, true) => return Err(LabError::Config("no harmonics given".into())),
        };
        Ok(msp)
    }

    /// `ρ` of a geometric schedule.
    pub fn geometric_rho(&self) -> Option<f64> {
        match self.schedule().ok()?.kind() {
            ScheduleKind::Geometric { rho } => Some(*rho as f64),
            _ => None,
        }
    }
}

/// A coefficient on `[0, 1]`: either cell values (uniform cells, or explicit
/// `breaks`) or a smooth `constant + harmonics` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaks: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

impl CoefficientSpec {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        Self::parse(&read(path)?)
    }

    pub fn build(&self) -> Result<perpetual_core::green::Coefficient, LabError> {
        use perpetual_core::green::Coefficient;
        match (&self.values, &self.constant) {
            (Some(v), None) => Ok(match &self.breaks {
                Some(b) => Coefficient::piecewise(b.clone(), v.clone())?,
                None => Coefficient::uniform(v.clone())?,
            }),
            (None, Some(c)) => {
                let h = harmonics(self.harmonics.as_deref().unwrap_or(&[]))?;
                let series = TrigSeries::new(*c, h)?;
                if series.is_constant() {
                    Ok(Coefficient::constant(*c)?)
                } else {
                    Ok(Coefficient::from_series(&series, self.cells.unwrap_or(0))?)
                }
            }
            _ => Err(LabError::Config("a coefficient needs exactly one of `values` or `constant`".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_file() {
        let spec = PotentialSpec::parse(
            "harmonics = [[1, 0.0, 1.0]]\nschedule.kind = \"geometric\"\nschedule.rho = 8\nn_max = 2\n",
        )
        .unwrap();
        let msp = spec.build().unwrap();
        assert_eq!(msp.n_max(), 2);
        assert_eq!(msp.radius(2), 64.0);
        assert_eq!(spec.geometric_rho(), Some(8.0));
    }

    #[test]
    fn scale_tables_and_errors() {
        let text = "cycle = true\nn_max = 3\n[schedule]\nkind = \"explicit\"\nratios = [2, 3, 5, 7, 11]\n\
                    [[scale]]\nharmonics = [[1, 0.0, 1.0]]\n[[scale]]\nharmonics = [[2, 0.5, 0.0]]\n";
        let msp = PotentialSpec::parse(text).unwrap().build().unwrap();
        assert!(msp.is_cycled());
        assert_eq!(msp.radius(3), 30.0);
        assert!(PotentialSpec::parse("n_max = 1\nschedule.kind = \"geometric\"\nharmonics = [[1.5, 0, 1]]")
            .unwrap()
            .build()
            .is_err());
        assert!(PotentialSpec::parse("n_max = 1\nbogus = 3\nschedule.kind = \"geometric\"").is_err());
        assert!(PotentialSpec::parse("n_max = 1\nschedule.kind = \"spiral\"\nharmonics = []")
            .unwrap()
            .build()
            .is_err());
    }

    #[test]
    fn coefficients() {
        let c = CoefficientSpec::parse("values = [1.0, 2.0]").unwrap().build().unwrap();
        assert!((c.total_resistance() - 0.75).abs() < 1e-15);
        let s = CoefficientSpec::parse("constant = 2.0\nharmonics = [[1, 0.5, 0.0]]").unwrap().build().unwrap();
        assert!(s.total_resistance() > 0.5);
        assert!(CoefficientSpec::parse("values = [1.0]\nconstant = 1.0").unwrap().build().is_err());
    }
}

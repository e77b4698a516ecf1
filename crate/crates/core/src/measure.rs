//! Signed initial measures `m` on `[0, ∞)` and their distribution function `v(x) = m([0, x])`.
//!
//! A profile is a finite list of atoms plus a piecewise-constant signed density.
//! In this class `v` is piecewise linear with jumps, so every integral the solvers
//! need has a closed form:
//!
//! * [`SignedMeasureProfile::integrate_hinge`] computes `∫ (R - x)_+ dm(x)` atom by atom and cell by cell;
//! * [`SignedMeasureProfile::integrate_cdf`] computes `∫_0^R v(x) dx` from a prefix table of `v`.
//!
//! The two agree by Fubini; they are kept as separate code paths so that the
//! local-time and hitting-time forms of the fixed-point map can be checked against each other.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::density::PiecewiseDensity;
use crate::error::{Error, Result};

const CRITICALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub a: f64,
    pub b: f64,
    pub density: f64,
}

/// Position of `alpha * sup_x m([0, x])` relative to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    /// `v(x-)`
    left: f64,
    /// `v(x)`
    right: f64,
    /// slope of `v` on `[x, next knot)`
    slope: f64,
    /// `∫_0^x v`
    integral: f64,
}

#[derive(Debug, Clone)]
pub struct SignedMeasureProfile {
    alpha: f64,
    atoms: Vec<Atom>,
    breaks: Vec<f64>,
    values: Vec<f64>,
    criticality: Criticality,
    knots: Vec<Knot>,
}

impl SignedMeasureProfile {
    /// Builds a (sub)critical profile. Supercritical input is rejected.
    pub fn new(atoms: Vec<Atom>, cells: Vec<Cell>, alpha: f64) -> Result<Self> {
        let m = Self::with_override(atoms, cells, alpha)?;
        if m.criticality == Criticality::Supercritical {
            return Err(Error::Supercritical(m.criticality_message()));
        }
        Ok(m)
    }

    /// Builds a profile without rejecting supercritical input.
    pub fn with_override(atoms: Vec<Atom>, cells: Vec<Cell>, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidMeasure(format!("alpha must be positive, got {alpha}")));
        }
        let atoms = normalize_atoms(atoms)?;
        let (breaks, values) = cells_to_breaks(cells)?;
        let knots = build_knots(&atoms, &breaks, &values);
        let mut m = Self {
            alpha,
            atoms,
            breaks,
            values,
            criticality: Criticality::Subcritical,
            knots,
        };
        m.criticality = m.classify();
        Ok(m)
    }

    /// The zero measure.
    pub fn zero(alpha: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density_breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn density_values(&self) -> &[f64] {
        &self.values
    }

    /// Nonzero density cells in increasing order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(j, d)| Cell {
                a: self.breaks[j],
                b: self.breaks[j + 1],
                density: *d,
            })
    }

    pub fn criticality(&self) -> Criticality {
        self.criticality
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.mass >= 0.0) && self.values.iter().all(|d| *d >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.values.iter().all(|d| *d == 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.right)
    }

    /// `m({0})`.
    pub fn mass_at_origin(&self) -> f64 {
        self.atoms.first().filter(|a| a.x == 0.0).map_or(0.0, |a| a.mass)
    }

    /// `sup_{x ≥ 0} m([0, x])`, including left limits.
    pub fn sup_cdf(&self) -> f64 {
        self.knots.iter().map(|k| k.left.max(k.right)).fold(0.0, f64::max)
    }

    /// Right end of the support (last atom or break).
    pub fn support_end(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.x)
    }

    /// `v(x) = m([0, x])`, right-continuous. Negative `x` gives 0.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let k = &self.knots[self.knot_index(x)];
        k.right + k.slope * (x - k.x)
    }

    /// `∫_{[0,∞)} (r - x)_+ dm(x)`, summed over atoms and density cells.
    pub fn integrate_hinge(&self, r: f64) -> f64 {
        if r <= 0.0 {
            // only an atom at the origin could contribute, with weight (r - 0)_+ = 0
            return 0.0;
        }
        let mut total = 0.0;
        for atom in &self.atoms {
            if atom.x >= r {
                break;
            }
            total += atom.mass * (r - atom.x);
        }
        for (j, d) in self.values.iter().enumerate() {
            let a = self.breaks[j];
            if a >= r {
                break;
            }
            if *d == 0.0 {
                continue;
            }
            let c = self.breaks[j + 1].min(r);
            let (ha, hc) = (r - a, r - c);
            total += d * 0.5 * (ha * ha - hc * hc);
        }
        total
    }

    /// `∫_0^r v(x) dx` from the prefix table of `v`.
    pub fn integrate_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let k = &self.knots[self.knot_index(r)];
        let h = r - k.x;
        k.integral + k.right * h + 0.5 * k.slope * h * h
    }

    /// The nonnegative measure `m*` with distribution function `(sup_{y ≤ x} m([0, y]))_+`.
    ///
    /// If that function vanishes identically it is replaced by `(1/alpha) 1_{x ≥ 1}`
    /// so that the envelope never has zero mass.
    pub fn monotone_envelope(&self) -> Self {
        let mut atoms = Vec::new();
        let mut cells = Vec::new();
        let mut level = 0.0_f64;
        for (i, k) in self.knots.iter().enumerate() {
            if k.right > level {
                atoms.push(Atom {
                    x: k.x,
                    mass: k.right - level,
                });
                level = k.right;
            }
            let Some(next) = self.knots.get(i + 1) else {
                break;
            };
            if k.slope > 0.0 {
                let end = k.right + k.slope * (next.x - k.x);
                if end > level {
                    let start = k.x + ((level - k.right) / k.slope).max(0.0);
                    if start < next.x {
                        cells.push(Cell {
                            a: start,
                            b: next.x,
                            density: k.slope,
                        });
                    }
                    level = end;
                }
            }
        }
        if atoms.is_empty() && cells.is_empty() {
            atoms.push(Atom {
                x: 1.0,
                mass: 1.0 / self.alpha,
            });
        }
        Self::with_override(atoms, cells, self.alpha).expect("envelope of a valid profile is valid")
    }

    /// Plain-text table: `atom <x> <mass>` and `cell <a> <b> <density>` lines.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for a in &self.atoms {
            let _ = writeln!(out, "atom {} {}", a.x, a.mass);
        }
        for c in self.cells() {
            let _ = writeln!(out, "cell {} {} {}", c.a, c.b, c.density);
        }
        out
    }

    /// Parses the table format; `#` starts a comment. `source` names the input in error messages.
    pub fn parse_table(text: &str, alpha: f64, allow_supercritical: bool, source: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            file: source.to_string(),
            line,
            message,
        };
        let mut atoms = Vec::new();
        let mut cells = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kind = fields.next().unwrap_or_default();
            let nums: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| err(line_no, format!("bad number `{f}`: {e}")))
                })
                .collect::<Result<_>>()?;
            match (kind, nums.as_slice()) {
                ("atom", [x, mass]) => atoms.push(Atom { x: *x, mass: *mass }),
                ("cell", [a, b, d]) => cells.push(Cell {
                    a: *a,
                    b: *b,
                    density: *d,
                }),
                ("atom", _) => return Err(err(line_no, "expected `atom <x> <mass>`".into())),
                ("cell", _) => return Err(err(line_no, "expected `cell <a> <b> <density>`".into())),
                (other, _) => return Err(err(line_no, format!("unknown record `{other}`"))),
            }
        }
        let built = if allow_supercritical {
            Self::with_override(atoms, cells, alpha)
        } else {
            Self::new(atoms, cells, alpha)
        };
        built.map_err(|e| match e {
            Error::Parse { .. } => e,
            other => err(0, other.to_string()),
        })
    }

    fn knot_index(&self, x: f64) -> usize {
        self.knots.partition_point(|k| k.x <= x).saturating_sub(1)
    }

    fn classify(&self) -> Criticality {
        let a_sup = self.alpha * self.sup_cdf();
        if self.alpha * self.mass_at_origin() >= 1.0 - CRITICALITY_TOL || a_sup > 1.0 + CRITICALITY_TOL {
            Criticality::Supercritical
        } else if a_sup >= 1.0 - CRITICALITY_TOL {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        }
    }

    fn criticality_message(&self) -> String {
        format!(
            "alpha * sup m([0,x]) = {:.6} and alpha * m({{0}}) = {:.6}; need <= 1 and < 1 (criticality)",
            self.alpha * self.sup_cdf(),
            self.alpha * self.mass_at_origin()
        )
    }
}

/// `m` with `m([0, x]) = 1/alpha - mu0(x)`: an atom `1/alpha - mu0(0)` at the origin and
/// an atom `-Δmu0` at every jump of the density.
pub fn build_from_initial_density(mu0: &PiecewiseDensity, alpha: f64) -> Result<SignedMeasureProfile> {
    let breaks = mu0.breaks();
    let values = mu0.values();
    let mut atoms = vec![Atom {
        x: 0.0,
        mass: 1.0 / alpha - values[0],
    }];
    for j in 1..breaks.len() {
        let after = values.get(j).copied().unwrap_or(0.0);
        atoms.push(Atom {
            x: breaks[j],
            mass: values[j - 1] - after,
        });
    }
    SignedMeasureProfile::new(atoms, Vec::new(), alpha)
}

fn normalize_atoms(mut atoms: Vec<Atom>) -> Result<Vec<Atom>> {
    for a in &atoms {
        if !(a.x.is_finite() && a.x >= 0.0) || !a.mass.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "atom at x = {} with mass {} (need finite x >= 0 and finite mass)",
                a.x, a.mass
            )));
        }
    }
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match merged.last_mut() {
            Some(last) if last.x == a.x => last.mass += a.mass,
            _ => merged.push(a),
        }
    }
    merged.retain(|a| a.mass != 0.0);
    Ok(merged)
}

fn cells_to_breaks(mut cells: Vec<Cell>) -> Result<(Vec<f64>, Vec<f64>)> {
    for c in &cells {
        if !(c.a.is_finite() && c.b.is_finite() && c.a >= 0.0 && c.b > c.a) || !c.density.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "cell [{}, {}) with density {} (need 0 <= a < b, finite density)",
                c.a, c.b, c.density
            )));
        }
    }
    cells.retain(|c| c.density != 0.0);
    cells.sort_by(|a, b| a.a.total_cmp(&b.a));
    let mut breaks = Vec::new();
    let mut values = Vec::new();
    for c in cells {
        match breaks.last() {
            Some(&end) if c.a < end => {
                return Err(Error::InvalidMeasure(format!("cells overlap at x = {}", c.a)));
            }
            Some(&end) if c.a > end => {
                values.push(0.0);
                breaks.push(c.a);
            }
            Some(_) => {}
            None => breaks.push(c.a),
        }
        values.push(c.density);
        breaks.push(c.b);
    }
    Ok((breaks, values))
}

fn build_knots(atoms: &[Atom], breaks: &[f64], values: &[f64]) -> Vec<Knot> {
    let mut xs: Vec<f64> = std::iter::once(0.0)
        .chain(atoms.iter().map(|a| a.x))
        .chain(breaks.iter().copied())
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let density_on = |x: f64| -> f64 {
        // density on [x, next knot); breaks are knots, so the cell containing x covers the interval
        let j = breaks.partition_point(|b| *b <= x);
        if j == 0 || j == breaks.len() {
            0.0
        } else {
            values[j - 1]
        }
    };

    let mut knots = Vec::with_capacity(xs.len());
    let mut atom_iter = atoms.iter().peekable();
    let (mut v_left, mut integral) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let mut right = v_left;
        while let Some(a) = atom_iter.peek() {
            if a.x == x {
                right += a.mass;
                atom_iter.next();
            } else {
                break;
            }
        }
        let slope = density_on(x);
        knots.push(Knot {
            x,
            left: v_left,
            right,
            slope,
            integral,
        });
        if let Some(&next) = xs.get(i + 1) {
            let h = next - x;
            v_left = right + slope * h;
            integral += 0.5 * (right + v_left) * h;
        }
    }
    knots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(list: &[(f64, f64)]) -> Vec<Atom> {
        list.iter().map(|&(x, mass)| Atom { x, mass }).collect()
    }

    fn two_atoms() -> SignedMeasureProfile {
        SignedMeasureProfile::new(atoms(&[(0.0, 0.5), (2.0, 0.5)]), vec![], 1.0).unwrap()
    }

    #[test]
    fn from_uniform_density() {
        let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
        let m = build_from_initial_density(&mu0, 1.0).unwrap();
        assert_eq!(m.atoms(), &atoms(&[(0.0, 0.5), (2.0, 0.5)])[..]);
        assert_eq!(m.criticality(), Criticality::Critical);
    }

    #[test]
    fn from_indicator_density_is_critical() {
        let mu0 = PiecewiseDensity::uniform(1.0).unwrap();
        let m = build_from_initial_density(&mu0, 1.0).unwrap();
        assert_eq!(m.mass_at_origin(), 0.0);
        assert_eq!(m.atoms(), &atoms(&[(1.0, 1.0)])[..]);
        assert_eq!(m.criticality(), Criticality::Critical);
    }

    #[test]
    fn from_uniform_with_small_alpha() {
        let mu0 = PiecewiseDensity::uniform(2.0).unwrap();
        let m = build_from_initial_density(&mu0, 0.5).unwrap();
        assert_eq!(m.cdf_at(0.0), 1.5);
        assert_eq!(m.sup_cdf(), 2.0);
        assert_eq!(m.criticality(), Criticality::Critical);
    }

    #[test]
    fn cdf_examples() {
        let m = two_atoms();
        assert_eq!(m.cdf_at(1.0), 0.5);
        assert_eq!(m.cdf_at(2.0), 1.0);
        assert_eq!(m.cdf_at(1.999_999), 0.5);
        let m = SignedMeasureProfile::new(
            atoms(&[(0.0, 0.1)]),
            vec![Cell {
                a: 0.0,
                b: 1.0,
                density: 0.3,
            }],
            1.0,
        )
        .unwrap();
        assert!((m.cdf_at(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hinge_and_cdf_examples() {
        let m = SignedMeasureProfile::new(atoms(&[(0.0, 0.7)]), vec![], 1.0).unwrap();
        assert!((m.integrate_hinge(1.3) - 0.7 * 1.3).abs() < 1e-15);
        let m = two_atoms();
        assert_eq!(m.integrate_hinge(3.0), 2.0);
        assert_eq!(m.integrate_cdf(3.0), 2.0);
        assert_eq!(m.integrate_cdf(0.0), 0.0);
        assert_eq!(m.integrate_hinge(0.0), 0.0);
    }

    #[test]
    fn envelope_examples() {
        let m = two_atoms();
        assert_eq!(m.monotone_envelope().atoms(), m.atoms());

        let m = SignedMeasureProfile::new(atoms(&[(0.0, 0.5), (1.0, -0.2), (2.0, 0.7)]), vec![], 1.0).unwrap();
        let env = m.monotone_envelope();
        assert_eq!(env.atoms().len(), 2);
        assert_eq!(env.atoms()[0], Atom { x: 0.0, mass: 0.5 });
        assert_eq!(env.atoms()[1].x, 2.0);
        assert!((env.atoms()[1].mass - 0.5).abs() < 1e-15);

        let neg = SignedMeasureProfile::new(atoms(&[(0.0, -0.3), (1.5, 0.1)]), vec![], 2.0).unwrap();
        let env = neg.monotone_envelope();
        assert_eq!(env.atoms(), &atoms(&[(1.0, 0.5)])[..]);
    }

    #[test]
    fn envelope_follows_rising_cells() {
        // v: 0.2 at 0, dips by -0.3 at 0.5, then rises with slope 0.4 on [1, 3)
        let m = SignedMeasureProfile::new(
            atoms(&[(0.0, 0.2), (0.5, -0.3)]),
            vec![Cell {
                a: 1.0,
                b: 3.0,
                density: 0.4,
            }],
            1.0,
        )
        .unwrap();
        let env = m.monotone_envelope();
        // v re-crosses 0.2 at x = 1 + 0.3/0.4 = 1.75
        for x in [0.0, 0.7, 1.5, 1.75, 2.0, 2.9, 5.0] {
            let expected = (m.cdf_at(x)).max(0.2);
            assert!((env.cdf_at(x) - expected).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn criticality_classes() {
        let sub = SignedMeasureProfile::new(atoms(&[(0.0, 0.4)]), vec![], 1.0).unwrap();
        assert_eq!(sub.criticality(), Criticality::Subcritical);
        assert!(SignedMeasureProfile::new(atoms(&[(0.0, 0.5), (1.0, 0.6)]), vec![], 1.0).is_err());
        // atom at the origin of mass 1/alpha is not allowed even though sup = 1/alpha
        assert!(SignedMeasureProfile::new(atoms(&[(0.0, 1.0)]), vec![], 1.0).is_err());
        let sup = SignedMeasureProfile::with_override(atoms(&[(0.0, 0.5), (1.0, 0.6)]), vec![], 1.0).unwrap();
        assert_eq!(sup.criticality(), Criticality::Supercritical);
    }

    #[test]
    fn rejects_malformed() {
        assert!(SignedMeasureProfile::new(atoms(&[(-1.0, 0.1)]), vec![], 1.0).is_err());
        let overlapping = vec![
            Cell {
                a: 0.0,
                b: 1.0,
                density: 0.1,
            },
            Cell {
                a: 0.5,
                b: 2.0,
                density: 0.1,
            },
        ];
        assert!(SignedMeasureProfile::new(vec![], overlapping, 1.0).is_err());
    }

    #[test]
    fn table_roundtrip_and_errors() {
        let m = SignedMeasureProfile::new(
            atoms(&[(0.0, 0.1), (1.25, -0.05)]),
            vec![Cell {
                a: 0.5,
                b: 2.0,
                density: 0.2,
            }],
            1.0,
        )
        .unwrap();
        let back = SignedMeasureProfile::parse_table(&m.to_table(), 1.0, false, "mem").unwrap();
        assert_eq!(back.atoms(), m.atoms());
        assert_eq!(back.cells().collect::<Vec<_>>(), m.cells().collect::<Vec<_>>());

        let e =
            SignedMeasureProfile::parse_table("# header\natom 0 0.1\ncell 1 x 2\n", 1.0, false, "p.txt").unwrap_err();
        assert!(e.to_string().starts_with("p.txt:3:"), "{e}");
        let e = SignedMeasureProfile::parse_table("atom 0 0.5\natom 1 0.9\n", 1.0, false, "p.txt").unwrap_err();
        assert!(e.to_string().contains("criticality"), "{e}");
    }
}

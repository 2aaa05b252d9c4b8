//! Union, minimum-distance and expurgated bounds on ML decoding from
//! averaged weight enumerators.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::ensembles::AveragedWEF;
use crate::extfloat::ExtFloat;
use crate::hpfloat::HpFloat;
use crate::{Error, Result};

/// Mantissa bits used while summing bound terms.
const SUM_PRECISION: u32 = 128;
/// Above this argument `erfc` is replaced by the continued fraction.
const ERFC_LIMIT: f64 = 20.0;

/// `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> ExtFloat {
    assert!(!x.is_nan(), "Q(NaN)");
    if x < ERFC_LIMIT {
        return ExtFloat::from_f64(0.5 * libm::erfc(x / std::f64::consts::SQRT_2));
    }
    if x.is_infinite() {
        return ExtFloat::ZERO;
    }
    // Q(x) = phi(x) * R(x) with the Mills ratio R as a continued fraction
    let mut t = x;
    for k in (1..=120).rev() {
        t = x + f64::from(k) / t;
    }
    let hi = x * x;
    let lo = x.mul_add(x, -hi);
    let ln_phi = -0.5 * hi - 0.5 * lo - 0.5 * (2.0 * std::f64::consts::PI).ln();
    ExtFloat::from_ln(ln_phi - t.ln())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    UnionBer,
    UnionFer,
    ExpurgatedBer,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::UnionBer => "union-ber",
            BoundKind::UnionFer => "union-fer",
            BoundKind::ExpurgatedBer => "expurgated-ber",
        }
    }
}

impl std::str::FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union-ber" | "ber" => Ok(BoundKind::UnionBer),
            "union-fer" | "fer" => Ok(BoundKind::UnionFer),
            "expurgated-ber" | "expurgated" => Ok(BoundKind::ExpurgatedBer),
            other => Err(Error::Parse(format!("unknown bound kind `{other}`"))),
        }
    }
}

/// Bound values over an Eb/N0 grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve {
    /// Ensemble kind and block length, e.g. `pcc N=512`.
    pub ensemble: String,
    pub provenance: Vec<String>,
    pub kind: BoundKind,
    pub rate: f64,
    pub w_max: u32,
    pub alpha: Option<f64>,
    /// Minimum weight kept by expurgation.
    pub d_tilde: Option<u32>,
    /// `(Eb/N0 in dB, value)`.
    pub points: Vec<(f64, ExtFloat)>,
}

impl BoundCurve {
    /// CSV with `#` header lines and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ensemble={} bound={}", self.ensemble, self.kind.as_str());
        let _ = write!(out, "# R={} w_max={}", self.rate, self.w_max);
        if let Some(a) = self.alpha {
            let _ = write!(out, " alpha={a}");
        }
        if let Some(d) = self.d_tilde {
            let _ = write!(out, " d_tilde={d}");
        }
        out.push('\n');
        for p in &self.provenance {
            let _ = writeln!(out, "# {p}");
        }
        out.push_str("ebn0_db,value\n");
        for (db, v) in &self.points {
            let _ = writeln!(out, "{db},{}", v.to_scientific(17));
        }
        out
    }
}

/// `w -> sum_{i >= 1, i + p = w} weight(i) * A_{i,p}` for `1 <= w <= w_max`.
fn weighted_spectrum(a: &AveragedWEF, w_max: u32, ber: bool) -> BTreeMap<u32, HpFloat> {
    let inv_n = HpFloat::from_ratio(&BigUint::from(1u32), &BigUint::from(a.n), SUM_PRECISION);
    let mut out: BTreeMap<u32, HpFloat> = BTreeMap::new();
    for (i, p, v) in a.iter() {
        if i == 0 || i + p > w_max {
            continue;
        }
        let term = if ber {
            v.mul_int(&BigUint::from(i)).mul(&inv_n)
        } else {
            v.clone()
        };
        let slot = out
            .entry(i + p)
            .or_insert_with(|| HpFloat::zero(SUM_PRECISION));
        *slot = slot.add(&term);
    }
    out
}

/// `sum_w C_w Q(sqrt(2 w R Eb/N0))`, terms added smallest first.
fn evaluate(spectrum: &BTreeMap<u32, HpFloat>, rate: f64, ebn0_db: &[f64]) -> Vec<(f64, ExtFloat)> {
    let coeffs: Vec<(u32, ExtFloat)> = spectrum.iter().map(|(&w, c)| (w, c.to_ext())).collect();
    ebn0_db
        .par_iter()
        .map(|&db| {
            let snr = db_to_linear(db);
            let mut terms: Vec<ExtFloat> = coeffs
                .iter()
                .map(|&(w, c)| c.mul(q_function((2.0 * f64::from(w) * rate * snr).sqrt())))
                .collect();
            terms.sort_by(|a, b| a.partial_cmp(b).expect("bound terms are ordered"));
            let sum = terms.iter().fold(HpFloat::zero(SUM_PRECISION), |acc, &t| {
                acc.add(&HpFloat::from_ext(t, SUM_PRECISION))
            });
            (db, sum.to_ext())
        })
        .collect()
}

fn check_coverage(a: &AveragedWEF, w_max: u32) -> Result<()> {
    if w_max > a.w_max {
        return Err(Error::CoverageGap(format!(
            "averaged enumerator covers w <= {}, bound needs w <= {w_max}",
            a.w_max
        )));
    }
    Ok(())
}

fn curve(a: &AveragedWEF, kind: BoundKind, rate: f64, w_max: u32, points: Vec<(f64, ExtFloat)>) -> BoundCurve {
    BoundCurve {
        ensemble: format!("{} N={}", a.kind, a.n),
        provenance: a.provenance.clone(),
        kind,
        rate,
        w_max,
        alpha: None,
        d_tilde: None,
        points,
    }
}

/// `P_b <= sum_{i >= 1} sum_p (i/N) A_{i,p} Q(sqrt(2 (i+p) R Eb/N0))`,
/// truncated at `i + p <= w_max`.
pub fn union_bound_ber(a: &AveragedWEF, rate: f64, ebn0_db: &[f64], w_max: u32) -> Result<BoundCurve> {
    check_coverage(a, w_max)?;
    let points = evaluate(&weighted_spectrum(a, w_max, true), rate, ebn0_db);
    Ok(curve(a, BoundKind::UnionBer, rate, w_max, points))
}

/// Frame error bound: the BER sum without the `i/N` factor.
pub fn union_bound_fer(a: &AveragedWEF, rate: f64, ebn0_db: &[f64], w_max: u32) -> Result<BoundCurve> {
    check_coverage(a, w_max)?;
    let points = evaluate(&weighted_spectrum(a, w_max, false), rate, ebn0_db);
    Ok(curve(a, BoundKind::UnionFer, rate, w_max, points))
}

/// Result of the minimum-distance bound.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceBound {
    /// Largest `d` with `sum_{w=1}^{d-1} A_w < 1 - alpha`, or `ceiling + 1`
    /// when the cumulative mass never reaches `1 - alpha`.
    pub d_tilde: u32,
    /// True when the spectrum ran out before the threshold was reached;
    /// `d_tilde` is then only a lower bound.
    pub ceiling_limited: bool,
    /// `sum_{w=1}^{d_tilde} A_w`.
    pub cumulative: ExtFloat,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// At least a fraction `alpha` of the ensemble has `d_min >= d_tilde`.
///
/// `spectrum` is the total-weight projection, complete up to `ceiling`.
pub fn min_distance_bound(spectrum: &BTreeMap<u32, HpFloat>, ceiling: u32, alpha: f64) -> Result<DistanceBound> {
    check_alpha(alpha)?;
    let threshold = HpFloat::from_ext(ExtFloat::from_f64(1.0 - alpha), SUM_PRECISION);
    let mut acc = HpFloat::zero(SUM_PRECISION);
    for w in 1..=ceiling {
        if let Some(v) = spectrum.get(&w) {
            acc = acc.add(v);
        }
        if acc >= threshold {
            return Ok(DistanceBound {
                d_tilde: w,
                ceiling_limited: false,
                cumulative: acc.to_ext(),
            });
        }
    }
    Ok(DistanceBound {
        d_tilde: ceiling + 1,
        ceiling_limited: true,
        cumulative: acc.to_ext(),
    })
}

/// [`min_distance_bound`] on the full range of an averaged enumerator.
pub fn min_distance_bound_for(a: &AveragedWEF, alpha: f64) -> Result<DistanceBound> {
    min_distance_bound(&a.project_total_weight(), a.w_max, alpha)
}

/// `P_b <= (1/alpha) sum_i sum_{d_tilde <= w <= w_max} (i/N) A_{i,w-i} Q(sqrt(2 w R Eb/N0))`.
pub fn expurgated_ber_bound(
    a: &AveragedWEF,
    alpha: f64,
    rate: f64,
    ebn0_db: &[f64],
    w_max: u32,
) -> Result<BoundCurve> {
    check_alpha(alpha)?;
    check_coverage(a, w_max)?;
    let d = min_distance_bound_for(a, alpha)?;
    if d.ceiling_limited {
        return Err(Error::CoverageGap(format!(
            "cumulative mass below 1 - alpha up to w = {}; d_tilde is undetermined",
            a.w_max
        )));
    }
    let scale = HpFloat::from_ext(ExtFloat::from_f64(1.0 / alpha), SUM_PRECISION);
    let spectrum: BTreeMap<u32, HpFloat> = weighted_spectrum(a, w_max, true)
        .into_iter()
        .filter(|(w, _)| *w >= d.d_tilde)
        .map(|(w, c)| (w, c.mul(&scale)))
        .collect();
    let mut c = curve(a, BoundKind::ExpurgatedBer, rate, w_max, evaluate(&spectrum, rate, ebn0_db));
    c.alpha = Some(alpha);
    c.d_tilde = Some(d.d_tilde);
    Ok(c)
}

/// Grid of bounds to evaluate on each averaged enumerator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepConfig {
    pub kinds: Vec<BoundKind>,
    /// Expurgation fractions; used by [`BoundKind::ExpurgatedBer`] only.
    pub alphas: Vec<f64>,
    pub ebn0_db: Vec<f64>,
    pub rate: f64,
    pub w_max: u32,
}

/// Curves ordered by enumerator, then kind, then alpha.
pub fn sweep_curve(averages: &[AveragedWEF], config: &SweepConfig) -> Result<Vec<BoundCurve>> {
    let mut out = Vec::new();
    for a in averages {
        for &kind in &config.kinds {
            match kind {
                BoundKind::UnionBer => out.push(union_bound_ber(a, config.rate, &config.ebn0_db, config.w_max)?),
                BoundKind::UnionFer => out.push(union_bound_fer(a, config.rate, &config.ebn0_db, config.w_max)?),
                BoundKind::ExpurgatedBer => {
                    for &alpha in &config.alphas {
                        out.push(expurgated_ber_bound(a, alpha, config.rate, &config.ebn0_db, config.w_max)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{EnsembleKind, EnsembleSpec};
    use proptest::prelude::*;

    /// Craig's form `Q(x) = (1/pi) int_0^{pi/2} exp(-x^2 / (2 sin^2 t)) dt`
    /// with the `exp(-x^2/2)` factor pulled out. The integrand extends to a
    /// smooth periodic function, so the trapezoid rule converges
    /// geometrically.
    fn craig_ln(x: f64) -> f64 {
        let n = 4000;
        let h = std::f64::consts::FRAC_PI_2 / f64::from(n);
        let mut s = 0.0;
        for k in 1..=n {
            let t = h * f64::from(k);
            let c = t.cos() / t.sin();
            let f = (-0.5 * x * x * c * c).exp();
            s += if k == n { 0.5 * f } else { f };
        }
        -0.5 * x * x + (s * h / std::f64::consts::PI).ln()
    }

    /// `Q(x) = 1/2 - phi(x) sum_n x^(2n+1) / (2n+1)!!` for small `x`.
    fn series(x: f64) -> f64 {
        let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (mut term, mut sum) = (x, x);
        for n in 1..200 {
            term *= x * x / f64::from(2 * n + 1);
            sum += term;
        }
        0.5 - phi * sum
    }

    #[test]
    fn q_values() {
        assert_eq!(q_function(0.0).to_f64(), 0.5);
        assert!((q_function(-10.0).to_f64() - 1.0).abs() < 1e-15);
        assert!((q_function(5.0).to_f64() / 2.866515718791939e-7 - 1.0).abs() < 1e-12);
        assert!(q_function(f64::INFINITY).is_zero());
    }

    #[test]
    fn q_matches_oracles() {
        for k in 0..=300 {
            let x = f64::from(k) * 0.01;
            let want = series(x);
            let got = q_function(x).to_f64();
            assert!((got / want - 1.0).abs() <= 1e-12, "x={x}: {got} vs {want}");
        }
        for k in 1..=400 {
            let x = f64::from(k) * 0.1;
            let rel = (q_function(x).ln() - craig_ln(x)).abs();
            assert!(rel <= 1e-12, "x={x}: rel {rel}");
        }
    }

    fn toy(kind: EnsembleKind, n: usize, w: u32) -> AveragedWEF {
        EnsembleSpec::new(kind, n).average(w, 256).unwrap()
    }

    #[test]
    fn direct_summation() {
        let a = toy(EnsembleKind::Pcc, 4, 12);
        assert!(a.len() <= 40);
        let db = [1.0, 3.0];
        let ber = union_bound_ber(&a, 1.0 / 3.0, &db, 12).unwrap();
        let fer = union_bound_fer(&a, 1.0 / 3.0, &db, 12).unwrap();
        for (k, &d) in db.iter().enumerate() {
            let snr = db_to_linear(d);
            let (mut b, mut f) = (0.0, 0.0);
            for (i, p, v) in a.iter() {
                if i == 0 {
                    continue;
                }
                let q = 0.5 * libm::erfc((f64::from(i + p) * snr / 3.0).sqrt());
                b += f64::from(i) / 4.0 * v.to_f64() * q;
                f += v.to_f64() * q;
            }
            assert!((ber.points[k].1.to_f64() / b - 1.0).abs() < 1e-12);
            assert!((fer.points[k].1.to_f64() / f - 1.0).abs() < 1e-12);
            assert!(fer.points[k].1 >= ber.points[k].1);
        }
    }

    #[test]
    fn trivial_ensemble_is_zero() {
        let one: BTreeMap<(u32, u32), HpFloat> =
            [((0, 0), HpFloat::from_integer(&BigUint::from(1u32), 64))].into_iter().collect();
        let a = AveragedWEF::new(EnsembleKind::Pcc, 8, 64, 10, vec![], one);
        let c = union_bound_ber(&a, 1.0 / 3.0, &[0.0, 5.0], 10).unwrap();
        assert!(c.points.iter().all(|(_, v)| v.is_zero()));
        assert!(matches!(union_bound_ber(&a, 1.0 / 3.0, &[0.0], 11), Err(Error::CoverageGap(_))));
    }

    #[test]
    fn distance_bound_basics() {
        let mut s = BTreeMap::new();
        s.insert(1, HpFloat::from_ext(ExtFloat::from_f64(0.6), 64));
        let d = min_distance_bound(&s, 5, 0.5).unwrap();
        assert_eq!((d.d_tilde, d.ceiling_limited), (1, false));
        let mut s = BTreeMap::new();
        s.insert(3, HpFloat::from_ext(ExtFloat::from_f64(0.25), 64));
        s.insert(4, HpFloat::from_ext(ExtFloat::from_f64(0.25), 64));
        assert_eq!(min_distance_bound(&s, 9, 0.5).unwrap().d_tilde, 4);
        assert_eq!(min_distance_bound(&s, 9, 0.8).unwrap().d_tilde, 3);
        let lim = min_distance_bound(&s, 9, 0.1).unwrap();
        assert_eq!((lim.d_tilde, lim.ceiling_limited), (10, true));
        assert!(min_distance_bound(&s, 9, 1.0).is_err());
    }

    #[test]
    fn expurgation() {
        let a = toy(EnsembleKind::Scc, 5, 14);
        let db = [2.0, 4.0];
        // alpha just above the mass of the lightest weights keeps everything
        let d = min_distance_bound_for(&a, 0.999).unwrap();
        assert_eq!(d.d_tilde, 1 + a.iter().filter(|(i, _, _)| *i > 0).map(|(i, p, _)| i + p).min().unwrap() - 1);
        let e = expurgated_ber_bound(&a, 0.999, 1.0 / 3.0, &db, 14).unwrap();
        let u = union_bound_ber(&a, 1.0 / 3.0, &db, 14).unwrap();
        for k in 0..2 {
            let ratio = e.points[k].1.to_f64() / u.points[k].1.to_f64();
            assert!((ratio - 1.0 / 0.999).abs() < 1e-12);
        }
        // direct summation with light terms removed
        let alpha = 0.5;
        let e = expurgated_ber_bound(&a, alpha, 1.0 / 3.0, &db, 14).unwrap();
        let dt = e.d_tilde.unwrap();
        let snr = db_to_linear(2.0);
        let mut want = 0.0;
        for (i, p, v) in a.iter() {
            if i >= 1 && i + p >= dt {
                let q = 0.5 * libm::erfc((f64::from(i + p) * snr / 3.0).sqrt());
                want += f64::from(i) / 5.0 * v.to_f64() * q / alpha;
            }
        }
        assert!((e.points[0].1.to_f64() / want - 1.0).abs() < 1e-12);
        assert!(e.points[0].1.to_f64() <= u.points[0].1.to_f64() / alpha);
    }

    #[test]
    fn sweep_order_and_csv() {
        let a = toy(EnsembleKind::Pcc, 6, 12);
        assert!(sweep_curve(&[a.clone()], &SweepConfig::default()).unwrap().is_empty());
        let cfg = SweepConfig {
            kinds: vec![BoundKind::UnionBer, BoundKind::UnionFer],
            alphas: vec![],
            ebn0_db: vec![2.0],
            rate: 1.0 / 3.0,
            w_max: 12,
        };
        let curves = sweep_curve(&[a.clone()], &cfg).unwrap();
        assert_eq!(curves[0], union_bound_ber(&a, 1.0 / 3.0, &[2.0], 12).unwrap());
        assert_eq!(curves[1].kind, BoundKind::UnionFer);
        let csv = curves[0].to_csv();
        assert!(csv.starts_with("# ensemble=pcc N=6 bound=union-ber\n"));
        assert!(csv.contains("ebn0_db,value\n2,"));
    }

    proptest! {
        #[test]
        fn bound_decreases_in_snr(lo in -2.0f64..8.0, step in 0.01f64..2.0) {
            let a = toy(EnsembleKind::Hcc, 6, 16);
            let c = union_bound_ber(&a, 1.0 / 3.0, &[lo, lo + step], 16).unwrap();
            prop_assert!(c.points[1].1 < c.points[0].1);
        }

        #[test]
        fn distance_bound_nonincreasing_in_alpha(a1 in 0.01f64..0.99, a2 in 0.01f64..0.99) {
            let a = toy(EnsembleKind::Bcc, 6, 14);
            let s = a.project_total_weight();
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let d_lo = min_distance_bound(&s, 14, lo).unwrap().d_tilde;
            let d_hi = min_distance_bound(&s, 14, hi).unwrap().d_tilde;
            prop_assert!(d_hi <= d_lo);
            prop_assert!(d_hi >= 1);
        }
    }
}

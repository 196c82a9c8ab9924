use std::collections::HashMap;

use subtype_core::synth::{self, VitalDistribution};

/// Mean of `round(X)` for X ~ N(mean, sd) truncated to the bounds. Each
/// rounding cell's mass is integrated with composite Simpson's rule on the
/// unnormalised density.
fn quadrature_mean(d: &VitalDistribution) -> f64 {
    let s = 10f64.powi(i32::from(d.decimals));
    if d.sd == 0.0 {
        return (d.mean * s).round() / s;
    }
    let lo = d.lower.max(d.mean - 12.0 * d.sd);
    let hi = d.upper.min(d.mean + 12.0 * d.sd);
    let density = |x: f64| (-0.5 * ((x - d.mean) / d.sd).powi(2)).exp();
    let simpson = |a: f64, b: f64| {
        let m = 64;
        let h = (b - a) / m as f64;
        let inner: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * density(a + i as f64 * h)).sum();
        h / 3.0 * (density(a) + inner + density(b))
    };
    let (mut num, mut den) = (0.0, 0.0);
    for k in (lo * s).round() as i64..=(hi * s).round() as i64 {
        let g = k as f64 / s;
        let (a, b) = ((g - 0.5 / s).max(lo), (g + 0.5 / s).min(hi));
        if b > a {
            let w = simpson(a, b);
            num += w * g;
            den += w;
        }
    }
    num / den
}

#[test]
fn per_subtype_means_within_three_standard_errors() {
    let spec = synth::default_paper_spec().with_n(50_000).with_seed(2024);
    let c = synth::generate_records(&spec).unwrap();
    let vitals: HashMap<&str, _> = c.vitals.iter().map(|v| (v.admission_id.as_str(), v)).collect();

    for (k, sub) in spec.subtypes.iter().enumerate() {
        let members: Vec<usize> = (0..c.planted.len()).filter(|&i| c.planted[i] as usize == k).collect();
        let n = members.len() as f64;
        assert!(n > 100.0, "subtype {k} has only {n} admissions");
        let fields: [(&str, &VitalDistribution, fn(&subtype_core::VitalsSet) -> f64); 5] = [
            ("temperature", &sub.temperature, |v| v.temperature),
            ("sbp", &sub.sbp, |v| v.sbp),
            ("heart_rate", &sub.heart_rate, |v| v.heart_rate),
            ("sats", &sub.sats, |v| v.sats),
            ("resp_rate", &sub.resp_rate, |v| v.resp_rate),
        ];
        for (name, dist, get) in fields {
            let xs: Vec<f64> = members.iter().map(|&i| get(vitals[c.admissions[i].admission_id.as_str()])).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let target = quadrature_mean(dist);
            let se = sd / n.sqrt();
            assert!((mean - target).abs() <= 3.0 * se + 1e-9, "subtype {k} {name}: {mean} vs {target} (se {se})");
        }

        let p = sub.p_limited_consciousness;
        let limited = members
            .iter()
            .filter(|&&i| vitals[c.admissions[i].admission_id.as_str()].consciousness.is_limited())
            .count() as f64
            / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((limited - p).abs() <= 3.0 * se, "subtype {k} consciousness {limited} vs {p}");

        let q = sub.mortality;
        let died = members.iter().filter(|&&i| c.admissions[i].died()).count() as f64 / n;
        let se = (q * (1.0 - q) / n).sqrt();
        assert!((died - q).abs() <= 3.0 * se, "subtype {k} mortality {died} vs {q}");
    }
}

#[test]
fn quadrature_agrees_with_generator_pmf() {
    for sub in &synth::default_paper_spec().subtypes {
        for d in [&sub.temperature, &sub.sbp, &sub.heart_rate, &sub.sats, &sub.resp_rate] {
            assert!((quadrature_mean(d) - d.expected_mean()).abs() < 1e-9, "{d:?}");
        }
    }
}

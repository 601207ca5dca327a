//! Seeded generator of patient tables with the layout and defects of the
//! public triage dataset: a few null cells, some exact duplicate rows and a
//! large share of `Unknown` smoking status.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{IngestError, RawRecord, ResidenceType, SmokingStatus, TriageLevel, NUMERIC_COUNT};

/// Column headers as spelled in the public file.
pub const HEADERS: [&str; 17] = [
    "age",
    "gender",
    "chest pain type",
    "blood pressure",
    "cholesterol",
    "max heart rate",
    "exercise angina",
    "plasma glucose",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "hypertension",
    "heart_disease",
    "Residence_type",
    "smoking_status",
    "triage",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub seed: u64,
    pub null_rate: f64,
    pub duplicate_rate: f64,
    pub unknown_smoking_rate: f64,
    /// Standard deviation of the noise added to the latent risk score.
    pub label_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            rows: 1000,
            seed: 0,
            null_rate: 0.03,
            duplicate_rate: 0.02,
            unknown_smoking_rate: 0.25,
            label_noise: 0.35,
        }
    }
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn clipped(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let v = Normal::new(mean, sd).unwrap().sample(rng);
    (v.clamp(lo, hi) * 10.0).round() / 10.0
}

/// One complete patient and its latent risk.
fn patient(rng: &mut ChaCha8Rng) -> ([f64; NUMERIC_COUNT], ResidenceType, SmokingStatus, f64) {
    let age = rng.random_range(18..=90) as f64;
    let a = (age - 18.0) / 72.0;
    let gender = bernoulli(rng, 0.5);
    let chest_pain_type = rng.random_range(0..4) as f64;
    let blood_pressure = clipped(rng, 115.0 + 40.0 * a, 15.0, 80.0, 210.0);
    let cholesterol = clipped(rng, 190.0 + 50.0 * a, 35.0, 110.0, 400.0);
    let max_heart_rate = clipped(rng, 175.0 - 50.0 * a, 18.0, 70.0, 210.0);
    let exercise_angina = bernoulli(rng, 0.15 + 0.3 * a);
    let plasma_glucose = clipped(rng, 100.0 + 40.0 * a, 30.0, 55.0, 280.0);
    let skin_thickness = clipped(rng, 28.0, 9.0, 7.0, 70.0);
    let insulin = clipped(rng, 110.0, 60.0, 15.0, 600.0);
    let bmi = clipped(rng, 28.0, 6.0, 15.0, 55.0);
    let diabetes_pedigree = (rng.random::<f64>().powi(2) * 2.3 + 0.08).min(2.42);
    let hypertension = bernoulli(rng, 0.05 + 0.35 * a);
    let heart_disease = bernoulli(rng, 0.03 + 0.25 * a);
    let residence = if rng.random::<bool>() {
        ResidenceType::Urban
    } else {
        ResidenceType::Rural
    };
    let smoking = match rng.random_range(0..10) {
        0..=4 => SmokingStatus::NeverSmoked,
        5..=7 => SmokingStatus::PreviouslySmoked,
        _ => SmokingStatus::Smoke,
    };
    let numeric = [
        age,
        gender,
        chest_pain_type,
        blood_pressure,
        cholesterol,
        max_heart_rate,
        exercise_angina,
        plasma_glucose,
        skin_thickness,
        insulin,
        bmi,
        diabetes_pedigree,
        hypertension,
        heart_disease,
    ];
    let risk = 1.2 * a
        + 0.5 * (chest_pain_type / 3.0)
        + 0.6 * ((blood_pressure - 120.0) / 40.0)
        + 0.4 * ((plasma_glucose - 110.0) / 50.0)
        + 0.5 * exercise_angina
        + 0.5 * hypertension
        + 0.7 * heart_disease
        - 0.4 * ((max_heart_rate - 150.0) / 30.0)
        + 0.2 * ((bmi - 28.0) / 6.0)
        + 0.2 * f64::from(smoking == SmokingStatus::Smoke);
    (numeric, residence, smoking, risk)
}

/// Generates `cfg.rows` raw rows: labels come from quantiles of a noisy risk
/// score (Red highest), with Yellow the largest class.
pub fn generate(cfg: &SyntheticConfig) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.label_noise.max(1e-12)).unwrap();
    let base: Vec<_> = (0..cfg.rows)
        .map(|_| {
            let (numeric, residence, smoking, risk) = patient(&mut rng);
            (numeric, residence, smoking, risk + noise.sample(&mut rng))
        })
        .collect();

    let mut order: Vec<usize> = (0..base.len()).collect();
    order.sort_by(|&i, &j| base[j].3.total_cmp(&base[i].3));
    // Red, Orange, Yellow, Green shares by descending risk.
    let cuts = [0.12, 0.35, 0.80];
    let mut labels = vec![TriageLevel::Green; base.len()];
    for (rank, &i) in order.iter().enumerate() {
        let q = rank as f64 / base.len().max(1) as f64;
        labels[i] = TriageLevel::from_code(cuts.iter().filter(|&&c| q >= c).count()).unwrap();
    }

    let mut out: Vec<RawRecord> = Vec::with_capacity(cfg.rows);
    for (i, (numeric, residence, smoking, _)) in base.into_iter().enumerate() {
        if i > 0 && rng.random::<f64>() < cfg.duplicate_rate {
            let mut dup = out[rng.random_range(0..out.len())].clone();
            dup.row = i + 1;
            out.push(dup);
            continue;
        }
        let smoking = if rng.random::<f64>() < cfg.unknown_smoking_rate {
            SmokingStatus::Unknown
        } else {
            smoking
        };
        let mut rec = RawRecord {
            row: i + 1,
            numeric: numeric.map(Some),
            residence_type: Some(residence),
            smoking_status: Some(smoking),
            label: Some(labels[i]),
        };
        if rng.random::<f64>() < cfg.null_rate {
            match rng.random_range(0..NUMERIC_COUNT + 2) {
                k if k < NUMERIC_COUNT => rec.numeric[k] = None,
                k if k == NUMERIC_COUNT => rec.residence_type = None,
                _ => rec.smoking_status = None,
            }
        }
        out.push(rec);
    }
    out
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Writes rows in the public file's layout; missing cells are left empty.
pub fn write_csv<W: Write>(records: &[RawRecord], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| IngestError::Csv(e.to_string());
    w.write_record(HEADERS).map_err(err)?;
    for r in records {
        let mut cells: Vec<String> = r.numeric.iter().map(|v| v.map(fmt_num).unwrap_or_default()).collect();
        cells.push(r.residence_type.map(|v| v.as_str().to_string()).unwrap_or_default());
        cells.push(r.smoking_status.map(|v| v.as_str().to_string()).unwrap_or_default());
        cells.push(r.label.map(|l| l.name().to_ascii_lowercase()).unwrap_or_default());
        w.write_record(&cells).map_err(err)?;
    }
    w.flush().map_err(|e| IngestError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_dataset, LoadOptions};

    #[test]
    fn csv_round_trip() {
        let recs = generate(&SyntheticConfig {
            rows: 200,
            seed: 4,
            ..Default::default()
        });
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &LoadOptions::default()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn yellow_is_the_majority() {
        let recs = generate(&SyntheticConfig::default());
        let mut counts = [0; 4];
        for r in &recs {
            counts[r.label.unwrap().code()] += 1;
        }
        assert_eq!(counts.iter().max(), Some(&counts[2]));
        assert!(counts.iter().all(|&c| c > 50));
    }
}

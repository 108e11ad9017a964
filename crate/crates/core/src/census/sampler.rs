//! Bootstrap row-resampling: every persona is a copy of a source row, so the
//! full joint distribution of the (filtered) table is preserved.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CensusError, CensusRecord, CensusTable, SamplePredicate};
use crate::digest::sha256_hex;

/// A sampled census row: the demographic skeleton of one virtual individual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletalPersona {
    pub persona_id: String,
    pub record: CensusRecord,
    pub sampled_with_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Draw rows with probability proportional to `fnlwgt`.
    #[serde(default)]
    pub weighted: bool,
}

/// `n` independent uniform draws (with replacement) from the whole table.
pub fn sample_random(
    table: &CensusTable,
    n: usize,
    seed: u64,
    opts: SamplingOptions,
) -> Result<Vec<SkeletalPersona>, CensusError> {
    if table.is_empty() {
        return Err(CensusError::EmptyTable { skipped: table.skipped_rows() });
    }
    let support: Vec<&CensusRecord> = table.rows().iter().collect();
    draw(table, &support, None, n, seed, opts)
}

/// `n` uniform draws (with replacement) from the rows satisfying `pred`.
pub fn sample_conditional(
    table: &CensusTable,
    pred: &SamplePredicate,
    n: usize,
    seed: u64,
    opts: SamplingOptions,
) -> Result<Vec<SkeletalPersona>, CensusError> {
    pred.validate(table)?;
    let support: Vec<&CensusRecord> = table.rows().iter().filter(|r| pred.matches(r)).collect();
    if support.is_empty() {
        return Err(CensusError::EmptySupport(pred.to_string()));
    }
    draw(table, &support, Some(pred), n, seed, opts)
}

fn draw(
    table: &CensusTable,
    support: &[&CensusRecord],
    pred: Option<&SamplePredicate>,
    n: usize,
    seed: u64,
    opts: SamplingOptions,
) -> Result<Vec<SkeletalPersona>, CensusError> {
    let condition = pred.map(|p| p.to_string()).filter(|s| !s.is_empty());
    let prefix = id_prefix(table.source_digest(), condition.as_deref(), seed, opts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let weights = if opts.weighted {
        if !table.has_weights() {
            return Err(CensusError::WeightsUnavailable);
        }
        let w: Vec<u64> = support.iter().map(|r| r.fnlwgt.unwrap_or(0)).collect();
        Some(WeightedIndex::new(w).map_err(|_| CensusError::WeightsUnavailable)?)
    } else {
        None
    };

    let personas = (0..n)
        .map(|i| {
            let idx = match &weights {
                Some(w) => w.sample(&mut rng),
                None => rng.gen_range(0..support.len()),
            };
            SkeletalPersona {
                persona_id: format!("{prefix}-{i:05}"),
                record: support[idx].clone(),
                sampled_with_seed: seed,
                condition: condition.clone(),
            }
        })
        .collect();
    Ok(personas)
}

fn id_prefix(digest: &str, condition: Option<&str>, seed: u64, opts: SamplingOptions) -> String {
    let key = format!(
        "{digest}|{}|{seed}|{}",
        condition.unwrap_or(""),
        if opts.weighted { "w" } else { "u" }
    );
    format!("p{}", &sha256_hex(key.as_bytes())[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CensusTable {
        let text = "\
39,State-gov,77516,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,2174,0,40,United-States,<=50K
50,Self-emp-not-inc,83311,Bachelors,13,Married-civ-spouse,Exec-managerial,Husband,White,Male,0,0,13,United-States,<=50K
38,Private,215646,HS-grad,9,Divorced,Handlers-cleaners,Not-in-family,White,Male,0,0,40,United-States,<=50K
53,Private,234721,11th,7,Married-civ-spouse,Handlers-cleaners,Husband,Black,Male,0,0,40,United-States,<=50K
28,Private,338409,Bachelors,13,Married-civ-spouse,Prof-specialty,Wife,Black,Female,0,0,40,Cuba,<=50K
";
        CensusTable::parse(text, &Default::default()).unwrap()
    }

    #[test]
    fn zero_draws() {
        assert!(sample_random(&table(), 0, 1, Default::default()).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let t = table();
        let a = sample_random(&t, 5, 7, Default::default()).unwrap();
        let b = sample_random(&t, 5, 7, Default::default()).unwrap();
        assert_eq!(a, b);
        let c = sample_random(&t, 5, 8, Default::default()).unwrap();
        assert_ne!(a[0].persona_id, c[0].persona_id);
    }

    #[test]
    fn conditional_respects_predicate() {
        let t = table();
        let pred: SamplePredicate = "age >= 50".parse().unwrap();
        let out = sample_conditional(&t, &pred, 50, 3, Default::default()).unwrap();
        assert!(out.iter().all(|p| p.record.age >= 50));
        assert_eq!(out[0].condition.as_deref(), Some("age >= 50"));
    }

    #[test]
    fn empty_support() {
        let pred: SamplePredicate = "age > 200".parse().unwrap();
        let err = sample_conditional(&table(), &pred, 5, 3, Default::default()).unwrap_err();
        assert!(matches!(err, CensusError::EmptySupport(_)));
    }

    #[test]
    fn invalid_predicates() {
        let t = table();
        for text in ["locality = \"x\"", "sex > Male", "age = old"] {
            let pred: SamplePredicate = text.parse().unwrap();
            let err = sample_conditional(&t, &pred, 5, 3, Default::default()).unwrap_err();
            assert!(matches!(err, CensusError::InvalidPredicate(_)), "{text}");
        }
    }

    #[test]
    fn weighted_needs_fnlwgt() {
        let t = table();
        let out = sample_random(&t, 20, 1, SamplingOptions { weighted: true }).unwrap();
        assert_eq!(out.len(), 20);

        let mut rows = t.rows().to_vec();
        rows.iter_mut().for_each(|r| r.fnlwgt = None);
        let unweighted = CensusTable::from_records(rows).unwrap();
        let err = sample_random(&unweighted, 3, 1, SamplingOptions { weighted: true }).unwrap_err();
        assert!(matches!(err, CensusError::WeightsUnavailable));
    }
}

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::domain::{Country, Model, Outcome};
use crate::ingest::instrument_catalog;

/// One candidate set of excluded instruments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentSet {
    /// 1-based position in the canonical enumeration.
    pub id: usize,
    pub names: Vec<String>,
    pub country: Country,
    pub model: Model,
    pub outcome: Outcome,
}

impl InstrumentSet {
    pub fn m(&self) -> usize {
        self.names.len()
    }
}

/// Fixed instruments combined with every subset of the prices of the given sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub fixed: Vec<String>,
    pub price_sizes: Vec<usize>,
}

impl Family {
    fn new(fixed: &[&str], price_sizes: impl IntoIterator<Item = usize>) -> Self {
        Family {
            fixed: fixed.iter().map(|s| s.to_string()).collect(),
            price_sizes: price_sizes.into_iter().collect(),
        }
    }
}

/// Price instruments of a country in catalog order.
pub fn price_instruments(country: Country) -> Vec<String> {
    instrument_catalog(country)
        .into_iter()
        .filter(|n| n.starts_with("p_"))
        .collect()
}

/// Canonical instrument families. Equations for height use the second lag of
/// weight alone, equations for weight the second lag of height alone. The
/// energy model of Guatemala appends an extra exactly identified family.
pub fn canonical_families(country: Country, model: Model, outcome: Outcome) -> Vec<Family> {
    let single_lag = match outcome {
        Outcome::Height => "lag2_weight",
        Outcome::Weight => "lag2_height",
    };
    match country {
        Country::Guatemala => {
            let mut f = vec![
                Family::new(&["atole"], 3..=4),
                Family::new(&["atole", "atole_x_distance"], 2..=4),
                Family::new(&["atole", single_lag], 2..=4),
                Family::new(&["atole", "atole_x_distance", single_lag], 2..=4),
                Family::new(&["atole", "lag2_weight", "lag2_height"], 2..=4),
                Family::new(&["atole", "atole_x_distance", "lag2_weight", "lag2_height"], 2..=4),
            ];
            if model == Model::Energy {
                f.push(Family::new(&["atole"], [2]));
            }
            f
        }
        Country::Philippines => vec![
            Family::new(&[], 4..=6),
            Family::new(&[single_lag], 3..=6),
            Family::new(&["lag2_weight", "lag2_height"], 2..=6),
        ],
    }
}

/// Expand families over `prices`: sizes ascending, subsets in lexicographic catalog order.
pub fn enumerate_families(
    families: &[Family],
    prices: &[String],
    country: Country,
    model: Model,
    outcome: Outcome,
) -> Vec<InstrumentSet> {
    let mut out = Vec::new();
    for fam in families {
        for &k in &fam.price_sizes {
            for combo in prices.iter().combinations(k) {
                let names: Vec<String> = fam.fixed.iter().cloned().chain(combo.into_iter().cloned()).collect();
                out.push(InstrumentSet {
                    id: out.len() + 1,
                    names,
                    country,
                    model,
                    outcome,
                });
            }
        }
    }
    out
}

pub fn enumerate_sets(country: Country, model: Model, outcome: Outcome) -> Vec<InstrumentSet> {
    enumerate_families(
        &canonical_families(country, model, outcome),
        &price_instruments(country),
        country,
        model,
        outcome,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn counts_match_binomial_sums() {
        let c7 = |ks: &[usize]| ks.iter().map(|&k| binom(7, k)).sum::<usize>();
        let c8 = |ks: &[usize]| ks.iter().map(|&k| binom(8, k)).sum::<usize>();
        let guat = c7(&[3, 4]) + 5 * c7(&[2, 3, 4]);
        let phil = c8(&[4, 5, 6]) + c8(&[3, 4, 5, 6]) + c8(&[2, 3, 4, 5, 6]);
        assert_eq!((guat, guat + binom(7, 2), phil), (525, 546, 602));
        for outcome in [Outcome::Height, Outcome::Weight] {
            assert_eq!(enumerate_sets(Country::Guatemala, Model::ProteinSplit, outcome).len(), guat);
            assert_eq!(enumerate_sets(Country::Guatemala, Model::Energy, outcome).len(), guat + 21);
            for model in [Model::Energy, Model::ProteinSplit] {
                assert_eq!(enumerate_sets(Country::Philippines, model, outcome).len(), phil);
            }
        }
    }

    #[test]
    fn sets_are_unique_and_ids_sequential() {
        let sets = enumerate_sets(Country::Guatemala, Model::Energy, Outcome::Height);
        let uniq: HashSet<Vec<String>> = sets.iter().map(|s| {
            let mut v = s.names.clone();
            v.sort();
            v
        }).collect();
        assert_eq!(uniq.len(), sets.len());
        assert!(sets.iter().enumerate().all(|(i, s)| s.id == i + 1));
        assert!(sets.iter().all(|s| s.names.iter().collect::<HashSet<_>>().len() == s.m()));
    }

    #[test]
    fn exactly_identified_counts() {
        let energy = enumerate_sets(Country::Guatemala, Model::Energy, Outcome::Height);
        assert_eq!(energy.iter().filter(|s| s.m() > 3).count(), 525);
        let protein = enumerate_sets(Country::Guatemala, Model::ProteinSplit, Outcome::Height);
        assert_eq!(protein.iter().filter(|s| s.m() > 4).count(), 448);
    }

    #[test]
    fn shared_sets_keep_their_ids_across_models() {
        let energy = enumerate_sets(Country::Guatemala, Model::Energy, Outcome::Weight);
        let protein = enumerate_sets(Country::Guatemala, Model::ProteinSplit, Outcome::Weight);
        for (a, b) in protein.iter().zip(&energy) {
            assert_eq!((a.id, &a.names), (b.id, &b.names));
        }
    }

    #[test]
    fn two_prices_pairs_give_one_combination_per_family() {
        let fams = vec![Family::new(&["atole"], [2]), Family::new(&["atole", "atole_x_distance"], [2])];
        let prices = vec!["p_a".to_string(), "p_b".to_string()];
        let sets = enumerate_families(&fams, &prices, Country::Guatemala, Model::Energy, Outcome::Height);
        assert_eq!(sets.len(), 2);
    }

    #[test]
    fn ordering_is_deterministic() {
        let a = enumerate_sets(Country::Philippines, Model::Energy, Outcome::Height);
        let b = enumerate_sets(Country::Philippines, Model::Energy, Outcome::Height);
        assert_eq!(a, b);
        assert_eq!(a[0].names, ["p_eggs", "p_dried_fish", "p_tomatoes", "p_corn"]);
    }
}

//! AICc grid search with parsimony and differencing-preference rules.

use serde::{Deserialize, Serialize};

use super::fit::{fit, ArimaFit, Exog, FitOptions};
use super::spec::ArimaSpec;
use crate::exec::Exec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub q: Vec<usize>,
    pub seasonal_q: Vec<usize>,
    pub intercept: bool,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        SelectionGrid {
            p: vec![0, 1, 2, 3],
            d: vec![0, 1],
            q: vec![0, 1, 2],
            seasonal_q: vec![0],
            intercept: true,
        }
    }
}

impl SelectionGrid {
    pub fn specs(&self) -> Vec<ArimaSpec> {
        let mut out = Vec::new();
        for &d in &self.d {
            for &p in &self.p {
                for &q in &self.q {
                    for &sq in &self.seasonal_q {
                        let mut s = ArimaSpec::new(p, d, q);
                        s.seasonal_q = sq;
                        s.intercept = self.intercept;
                        out.push(s);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRules {
    /// Within each d, take the simplest spec within this AICc distance of the
    /// best. `None` picks the plain minimum.
    pub parsimony_delta: Option<f64>,
    /// Prefer d = 0 unless the best d = 1 spec improves AICc by at least
    /// this much. `None` compares AICc directly.
    pub d1_margin: Option<f64>,
}

impl Default for SelectionRules {
    fn default() -> Self {
        SelectionRules {
            parsimony_delta: Some(2.0),
            d1_margin: Some(10.0),
        }
    }
}

impl SelectionRules {
    pub fn plain_aicc() -> Self {
        SelectionRules {
            parsimony_delta: None,
            d1_margin: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub spec: ArimaSpec,
    pub aicc: Option<f64>,
    pub error: Option<String>,
    /// Fit landed on the stationarity or invertibility edge.
    #[serde(default)]
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub selected: ArimaSpec,
    pub fit: ArimaFit,
    pub candidates: Vec<Candidate>,
}

fn complexity(s: &ArimaSpec) -> (usize, usize, usize) {
    (s.p + s.q + s.seasonal_q, s.q, s.p)
}

/// Apply the rules to `(spec, aicc)` pairs. Returns the index of the winner.
pub fn apply_rules(cands: &[(ArimaSpec, f64)], rules: &SelectionRules) -> Option<usize> {
    let best_in = |d: usize| -> Option<usize> {
        let idx: Vec<usize> = (0..cands.len()).filter(|&i| cands[i].0.d == d).collect();
        let min = idx.iter().map(|&i| cands[i].1).fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return None;
        }
        match rules.parsimony_delta {
            Some(delta) => idx
                .into_iter()
                .filter(|&i| cands[i].1 <= min + delta)
                .min_by_key(|&i| complexity(&cands[i].0)),
            None => idx.into_iter().min_by(|&a, &b| cands[a].1.total_cmp(&cands[b].1)),
        }
    };
    let min_aicc = |d: usize| {
        cands
            .iter()
            .filter(|c| c.0.d == d)
            .map(|c| c.1)
            .fold(f64::INFINITY, f64::min)
    };
    match (best_in(0), best_in(1)) {
        (Some(a), Some(b)) => {
            let margin = rules.d1_margin.unwrap_or(0.0);
            let improves = min_aicc(1) <= min_aicc(0) - margin;
            if rules.d1_margin.is_some() {
                Some(if improves { b } else { a })
            } else if min_aicc(1) < min_aicc(0) {
                Some(b)
            } else {
                Some(a)
            }
        }
        (a, b) => a.or(b),
    }
}

/// Fit every grid cell and pick a spec under `rules`. Failed fits are kept in
/// the candidate report and excluded, as are boundary fits unless every
/// converged candidate is one.
pub fn select_order(
    y: &[f64],
    exog: &Exog,
    grid: &SelectionGrid,
    rules: &SelectionRules,
    exec: Exec,
) -> Result<Selection> {
    let specs = grid.specs();
    if specs.is_empty() {
        return Err(Error::invalid("empty selection grid"));
    }
    let opts = FitOptions {
        std_errors: false,
        ..FitOptions::default()
    };
    let fits: Vec<Result<ArimaFit>> = exec.map(specs.clone(), |s| fit(&s, y, exog, &opts));
    let candidates: Vec<Candidate> = specs
        .iter()
        .zip(&fits)
        .map(|(s, f)| match f {
            Ok(f) => Candidate {
                spec: *s,
                aicc: Some(f.aicc),
                error: None,
                boundary: f.boundary,
            },
            Err(e) => Candidate {
                spec: *s,
                aicc: None,
                error: Some(e.to_string()),
                boundary: false,
            },
        })
        .collect();
    let admissible = |interior_only: bool| -> Vec<(usize, (ArimaSpec, f64))> {
        candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| !(interior_only && c.boundary))
            .filter_map(|(i, c)| c.aicc.filter(|a| a.is_finite()).map(|a| (i, (c.spec, a))))
            .collect()
    };
    // boundary fits have degenerate information matrices; use them only when
    // nothing else converged
    let mut ok = admissible(true);
    if ok.is_empty() {
        ok = admissible(false);
    }
    let pairs: Vec<(ArimaSpec, f64)> = ok.iter().map(|x| x.1).collect();
    let win = apply_rules(&pairs, rules)
        .ok_or_else(|| Error::Optimizer("all candidate fits failed".into()))?;
    let idx = ok[win].0;
    let fit = fits.into_iter().nth(idx).unwrap()?;
    Ok(Selection {
        selected: specs[idx],
        fit,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsimony_tie_break() {
        let c = vec![
            (ArimaSpec::new(2, 0, 1), 100.0),
            (ArimaSpec::new(1, 0, 1), 101.5),
            (ArimaSpec::new(2, 0, 0), 101.0),
            (ArimaSpec::new(0, 0, 2), 101.9),
            (ArimaSpec::new(0, 0, 0), 103.0),
        ];
        let w = apply_rules(&c, &SelectionRules::default()).unwrap();
        // (2,0,0) and (0,0,2) both have p+q = 2; smaller q wins
        assert_eq!(c[w].0, ArimaSpec::new(2, 0, 0));
    }

    #[test]
    fn d_preference_margin() {
        let c = vec![(ArimaSpec::new(1, 0, 0), 100.0), (ArimaSpec::new(1, 1, 0), 92.0)];
        assert_eq!(c[apply_rules(&c, &SelectionRules::default()).unwrap()].0.d, 0);
        let c = vec![(ArimaSpec::new(1, 0, 0), 100.0), (ArimaSpec::new(1, 1, 0), 89.0)];
        assert_eq!(c[apply_rules(&c, &SelectionRules::default()).unwrap()].0.d, 1);
        let c = vec![(ArimaSpec::new(1, 0, 0), 100.0), (ArimaSpec::new(1, 1, 0), 99.0)];
        assert_eq!(c[apply_rules(&c, &SelectionRules::plain_aicc()).unwrap()].0.d, 1);
    }
}

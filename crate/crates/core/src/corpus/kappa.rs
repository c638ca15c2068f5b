//! Inter-annotator agreement.

use std::collections::BTreeMap;

use super::CorpusError;

/// Cohen's kappa between two annotators' categorical labels.
///
/// When chance agreement is 1 (both annotators used one identical label
/// throughout) the score is defined as 1.
pub fn cohen_kappa<T: Ord>(annot_a: &[T], annot_b: &[T]) -> Result<f64, CorpusError> {
    if annot_a.is_empty() || annot_a.len() != annot_b.len() {
        return Err(CorpusError::AnnotationLength(annot_a.len(), annot_b.len()));
    }
    let n = annot_a.len() as f64;
    let mut marg_a: BTreeMap<&T, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (a, b) in annot_a.iter().zip(annot_b) {
        *marg_a.entry(a).or_default() += 1.0;
        *marg_b.entry(b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = marg_a
        .iter()
        .map(|(k, ca)| ca * marg_b.get(k).copied().unwrap_or(0.0))
        .sum::<f64>()
        / (n * n);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        assert_eq!(
            cohen_kappa(&["y", "n", "y"], &["y", "n", "y"]).unwrap(),
            1.0
        );
        assert_eq!(cohen_kappa(&["y", "y"], &["y", "y"]).unwrap(), 1.0);
    }

    #[test]
    fn chance_level_agreement() {
        let k = cohen_kappa(&["y", "y", "n", "n"], &["y", "n", "y", "n"]).unwrap();
        assert!(k.abs() < 1e-12);
    }

    #[test]
    fn two_by_two_table() {
        // 20 yes/yes, 5 yes/no, 10 no/yes, 15 no/no; n = 50.
        // p_o = 35/50 = 0.7; a says yes 25/50, b says yes 30/50.
        // p_e = 0.5*0.6 + 0.5*0.4 = 0.5; kappa = 0.2/0.5 = 0.4.
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, count) in [
            ("y", "y", 20),
            ("y", "n", 5),
            ("n", "y", 10),
            ("n", "n", 15),
        ] {
            for _ in 0..count {
                a.push(x);
                b.push(y);
            }
        }
        assert!((cohen_kappa(&a, &b).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(cohen_kappa(&[1, 2], &[1]).is_err());
        assert!(cohen_kappa::<u8>(&[], &[]).is_err());
    }
}

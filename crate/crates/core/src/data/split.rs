use rand::seq::SliceRandom;

use super::dataset::Dataset;
use crate::rng;
use crate::{Error, Result};

/// Stratified split: `⌈fraction · n_c⌉` samples of each class `c` go to
/// validation. Row order inside each part follows the original order.
pub fn split_validation(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = rng::seeded(
        seed ^ (dataset.domain_index() as u64).rotate_left(32),
        rng::stream::SPLIT,
    );
    let mut in_val = vec![false; dataset.len()];
    for (label, mut idx) in dataset.indices_by_label() {
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {label:?} in domain {} has {} sample(s); at least 2 are needed to split",
                dataset.domain_index(),
                idx.len()
            )));
        }
        let k = ((fraction * idx.len() as f64).ceil() as usize).min(idx.len() - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            in_val[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| in_val[i]);
    Ok((dataset.subset(&train), dataset.subset(&val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use crate::numerics::Matrix;

    fn dataset(counts: &[usize]) -> Dataset {
        let labels: Vec<Label> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(Label::Known(c), n))
            .collect();
        let n = labels.len();
        let f = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(0, counts.len(), f, labels).unwrap()
    }

    #[test]
    fn ten_percent_of_ten_is_one() {
        let (train, val) = split_validation(&dataset(&[10]), 0.1, 0).unwrap();
        assert_eq!(val.len(), 1);
        assert_eq!(train.len(), 9);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let d = dataset(&[13, 7, 40]);
        let (train, val) = split_validation(&d, 0.1, 3).unwrap();
        let mut ids: Vec<i64> = train
            .features()
            .data()
            .iter()
            .chain(val.features().data())
            .map(|v| *v as i64)
            .collect();
        ids.sort();
        assert_eq!(ids, (0..60).collect::<Vec<_>>());
        let counts = val.class_counts();
        assert_eq!(counts[&Label::Known(0)], 2);
        assert_eq!(counts[&Label::Known(1)], 1);
        assert_eq!(counts[&Label::Known(2)], 4);
    }

    #[test]
    fn same_seed_same_split() {
        let d = dataset(&[20, 20]);
        let a = split_validation(&d, 0.25, 9).unwrap();
        let b = split_validation(&d, 0.25, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_class_is_a_data_error() {
        assert!(matches!(
            split_validation(&dataset(&[5, 1]), 0.1, 0),
            Err(Error::Data(_))
        ));
    }
}

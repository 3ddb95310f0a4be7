use selfpace::dataset::{drop_labels, drop_labels_traced, AnnotatedPage, DropPolicy, Split};
use selfpace::synthgen::{generate_corpus, PageStyle};

/// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn retained_count_tracks_drop_rate() {
    // constant rows per page: retained count should rank like 1 - rate
    let mut style = PageStyle::constant_rows(100);
    style.row_height = [2, 2];
    style.gap = [1, 1];
    let corpus = generate_corpus(&style, 500, 13, Split::Train).unwrap();
    let (dropped, rates) = drop_labels_traced(&corpus, DropPolicy::Beta { alpha: 2.0, beta: 5.0 }, 17).unwrap();
    let kept: Vec<f64> = dropped.pages.iter().map(|p| p.ground_truth_count() as f64).collect();
    let keep_rate: Vec<f64> = rates.iter().map(|r| 1.0 - r).collect();
    let rho = pearson(&ranks(&kept), &ranks(&keep_rate));
    assert!(rho >= 0.9, "rank correlation {rho}");
}

#[test]
fn dropping_only_removes_boxes() {
    let corpus = generate_corpus(&PageStyle::default(), 30, 2, Split::Train).unwrap();
    let dropped = drop_labels(&corpus, DropPolicy::Constant { rate: 0.5 }, 3).unwrap();
    for (a, b) in corpus.pages.iter().zip(&dropped.pages) {
        assert_eq!(a.page, b.page);
        assert!(b.boxes.iter().all(|x| a.boxes.contains(x)));
    }
    let again = drop_labels(&corpus, DropPolicy::Constant { rate: 0.5 }, 3).unwrap();
    let boxes = |c: &[AnnotatedPage]| c.iter().map(|p| p.boxes.clone()).collect::<Vec<_>>();
    assert_eq!(boxes(&dropped.pages), boxes(&again.pages));
}

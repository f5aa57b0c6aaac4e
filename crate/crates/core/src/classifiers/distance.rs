use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pairwise Euclidean distances between the rows of an `L×D` matrix.
pub fn feature_distance_matrix(features: &Tensor) -> Result<Tensor> {
    let [l, d] = *features.shape() else {
        return Err(Error::dim(
            "feature_distance_matrix",
            format!("expected L×D, got {:?}", features.shape()),
        ));
    };
    if l == 0 {
        return Err(Error::SequenceTooShort { len: 0, required: 1 });
    }
    let mut out = vec![0.0; l * l];
    for i in 0..l {
        for j in i + 1..l {
            let a = &features.data()[i * d..(i + 1) * d];
            let b = &features.data()[j * d..(j + 1) * d];
            let dist = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            out[i * l + j] = dist;
            out[j * l + i] = dist;
        }
    }
    Tensor::new(vec![l, l], out)
}

/// Square matrix as headerless CSV rows.
pub fn distance_matrix_csv(matrix: &Tensor) -> String {
    let n = matrix.shape()[0];
    let mut s = String::new();
    for r in 0..n {
        let row: Vec<String> = matrix.row(r).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

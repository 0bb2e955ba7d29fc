//! Worked examples from the literature, shared by the integration targets.
#![allow(dead_code)]

use rankone::tensor::{MultiIndex, PartialTensor};

/// Builds a tensor from `"ijk=value"` items with single-digit coordinates.
pub fn tensor(dims: &[usize], items: &str) -> PartialTensor {
    let entries = items.split_whitespace().map(|item| {
        let (idx, val) = item.split_once('=').expect("index=value");
        let coords = idx
            .chars()
            .map(|c| c.to_digit(10).expect("digit") as usize)
            .collect();
        (MultiIndex::new(coords), val.parse::<f64>().expect("number"))
    });
    PartialTensor::from_entries(dims.to_vec(), entries).expect("valid example")
}

pub fn ones(dims: &[usize], indices: &str) -> PartialTensor {
    let items: Vec<String> = indices
        .split_whitespace()
        .map(|i| format!("{i}=1"))
        .collect();
    tensor(dims, &items.join(" "))
}

/// Pairwise minors give a seven-row system over six row labels.
pub fn seven_row() -> PartialTensor {
    tensor(
        &[3, 3, 3],
        "111=-1 221=-1 311=-1 132=1 312=-1 233=1 313=1 323=-1",
    )
}

pub const SEVEN_ROW_B3: [[f64; 6]; 7] = [
    [1., 0., -1., 0., 0., 0.],
    [1., 0., 0., 0., -1., 0.],
    [0., 0., 1., 0., -1., 0.],
    [0., 1., 0., 0., 1., 0.],
    [0., 0., 0., -1., 1., 0.],
    [0., 0., 0., 1., 0., 1.],
    [0., 0., 0., 0., 1., 1.],
];

pub fn deep_chain() -> PartialTensor {
    ones(
        &[2, 2, 3, 5, 8, 9],
        "123134 123136 123147 123148 123363 123366 211147 \
         211149 211181 211185 211224 211229 211255 211256 \
         212414 212418 212463 212468 212553 212555 212581 \
         212584 221442 221447 221475 221478 223316 223319 \
         223377 223524 223529 223532 223533",
    )
}

/// Unit entries on a pattern where every mode has nullity at least 2.
pub fn stalled_pattern() -> PartialTensor {
    ones(&[3, 3, 4], "111 221 331 132 212 322 123 233 313 124 214")
}

pub fn binary_order5() -> PartialTensor {
    ones(
        &[2, 2, 2, 2, 2],
        "11111 11112 11222 12111 21211 21222 22121",
    )
}

pub fn exact_order4() -> PartialTensor {
    tensor(
        &[3, 3, 5, 9],
        "1244=0.5 1246=0.5 1324=2 1327=2 1343=1 2122=1.3333333333333333 \
         2123=1.3333333333333333 2155=2 2159=2 2211=1 2218=1 2232=2 \
         2236=2 3317=3 3319=3 3351=9 3355=9",
    )
}

pub fn noisy_order3() -> PartialTensor {
    tensor(
        &[3, 5, 7],
        "121=1.0753 126=1.0789 134=0.9170 137=0.9078 212=0.9340 213=1.0756 224=0.9197 \
         225=0.9842 242=1.0916 251=1.0066 257=1.0384 333=0.9631 336=1.0373",
    )
}

pub fn noisy_order5() -> PartialTensor {
    tensor(
        &[2, 3, 4, 5, 6],
        "11434=0.9993 11435=0.9993 11453=1.0006 11455=0.9998 12224=0.9993 12226=1.0009 \
         12414=0.9997 12421=1.0005 12423=1.0005 13134=1.0008 13136=1.0002 13143=1.0005 \
         13145=0.9997 13232=0.9995 13233=1.0008 13241=0.9999 13244=1.0009 21211=1.0003 \
         21216=1.0002 21251=0.9992 21255=1.0009 21334=0.9999 21336=1.0002 21344=0.9998 \
         21345=0.9995 23133=1.0008 23135=1.0001 23151=0.9990 23152=1.0002 23334=0.9997 \
         23336=1.0001 23351=1.0008 23353=0.9997",
    )
}

/// `||A* - outer(factors)||_Omega` with `A*` all ones on the support of `a`.
pub fn distance_to_ones(a: &PartialTensor, factors: &[Vec<f64>]) -> f64 {
    a.indices()
        .map(|i| (1.0 - rankone::tensor::outer_entry(factors, i)).powi(2))
        .sum::<f64>()
        .sqrt()
}

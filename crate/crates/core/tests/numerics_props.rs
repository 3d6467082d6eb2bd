//! Matrix algebra and stable-math properties, each checked against a
//! plain-loop reference that shares no code with the implementation.

use proptest::prelude::*;
use trip_core::numerics::{log_sum_exp, DenseMatrix, Rng};

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.uniform(-2.0, 2.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn assert_matrices_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64, what: &str) {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "{what}: shape");
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= tol * (1.0 + x.abs()), "{what}: {x} vs {y}");
    }
}

fn reference_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop_reference() {
    let mut rng = Rng::stream(11, "numerics-matmul");
    for _ in 0..200 {
        let m = 1 + rng.below(8);
        let k = 1 + rng.below(8);
        let n = 1 + rng.below(8);
        let a = random_matrix(m, k, &mut rng);
        let b = random_matrix(k, n, &mut rng);
        let got = a.matmul(&b).unwrap();
        assert_matrices_close(&got, &reference_matmul(&a, &b), 1e-12, "matmul");
    }
}

#[test]
fn matmul_rejects_inner_dimension_mismatch() {
    let mut rng = Rng::stream(12, "numerics-mismatch");
    let a = random_matrix(3, 4, &mut rng);
    let b = random_matrix(5, 2, &mut rng);
    assert!(a.matmul(&b).is_err());
}

#[test]
fn transpose_is_an_involution() {
    let mut rng = Rng::stream(13, "numerics-transpose");
    for _ in 0..50 {
        let a = random_matrix(1 + rng.below(9), 1 + rng.below(9), &mut rng);
        let back = a.transpose().transpose();
        assert_eq!(a.data(), back.data());
        assert_eq!((a.rows(), a.cols()), (back.rows(), back.cols()));
    }
}

#[test]
fn transpose_of_product_is_reversed_product() {
    let mut rng = Rng::stream(14, "numerics-product-t");
    for _ in 0..50 {
        let a = random_matrix(1 + rng.below(6), 1 + rng.below(6), &mut rng);
        let b = random_matrix(a.cols(), 1 + rng.below(6), &mut rng);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        assert_matrices_close(&lhs, &rhs, 1e-12, "(AB)' = B'A'");
    }
}

#[test]
fn add_and_scale_match_elementwise_reference() {
    let mut rng = Rng::stream(15, "numerics-add");
    for _ in 0..50 {
        let a = random_matrix(1 + rng.below(7), 1 + rng.below(7), &mut rng);
        let b = random_matrix(a.rows(), a.cols(), &mut rng);
        let sum = a.add(&b).unwrap();
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                assert_eq!(sum.get(i, j), a.get(i, j) + b.get(i, j));
            }
        }
        let s = rng.uniform(-3.0, 3.0);
        let scaled = a.scale(s);
        for (x, y) in a.data().iter().zip(scaled.data()) {
            assert_eq!(*y, s * x);
        }
        // s(A + B) = sA + sB up to one rounding of each path.
        let lhs = sum.scale(s);
        let rhs = a.scale(s).add(&b.scale(s)).unwrap();
        assert_matrices_close(&lhs, &rhs, 1e-14, "scale distributes");
    }
}

#[test]
fn add_rejects_shape_mismatch() {
    let mut rng = Rng::stream(16, "numerics-add-mismatch");
    let a = random_matrix(3, 4, &mut rng);
    let b = random_matrix(4, 3, &mut rng);
    assert!(a.add(&b).is_err());
    let mut c = random_matrix(3, 4, &mut rng);
    assert!(c.add_assign(&b).is_err());
}

#[test]
fn frobenius_norm_matches_reference() {
    let mut rng = Rng::stream(17, "numerics-frob");
    for _ in 0..50 {
        let a = random_matrix(1 + rng.below(7), 1 + rng.below(7), &mut rng);
        let want = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((a.frobenius_norm() - want).abs() <= 1e-12 * (1.0 + want));
    }
}

#[test]
fn from_vec_rejects_wrong_length() {
    assert!(DenseMatrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    assert!(DenseMatrix::from_vec(2, 3, vec![0.0; 6]).is_ok());
}

#[test]
fn from_rows_rejects_ragged_input() {
    assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    let ok = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(ok.get(1, 0), 3.0);
}

#[test]
fn log_sum_exp_matches_naive_reference_at_moderate_scale() {
    let mut rng = Rng::stream(18, "numerics-lse");
    for _ in 0..200 {
        let n = 1 + rng.below(10);
        let row: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let naive = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        let got = log_sum_exp(&row);
        assert!((got - naive).abs() <= 1e-12 * (1.0 + naive.abs()), "{got} vs {naive}");
    }
}

#[test]
fn log_sum_exp_survives_values_that_overflow_naively() {
    let row = [1000.0f64, 1000.5];
    assert!(row.iter().map(|v| v.exp()).sum::<f64>().is_infinite());
    let got = log_sum_exp(&row);
    let want = 1000.5 + (1.0 + (-0.5f64).exp()).ln();
    assert!((got - want).abs() <= 1e-12 * want);

    let low = [-1000.0, -1000.5];
    let got_low = log_sum_exp(&low);
    let want_low = -1000.0 + (1.0 + (-0.5f64).exp()).ln();
    assert!((got_low - want_low).abs() <= 1e-12 * want_low.abs());
}

#[test]
fn log_sum_exp_of_a_constant_row_is_value_plus_log_count() {
    for n in 1..6usize {
        let row = vec![2.5; n];
        let want = 2.5 + (n as f64).ln();
        assert!((log_sum_exp(&row) - want).abs() <= 1e-12 * (1.0 + want));
    }
}

#[test]
fn log_sum_exp_brackets_the_max() {
    let mut rng = Rng::stream(19, "numerics-lse-bracket");
    for _ in 0..100 {
        let n = 1 + rng.below(8);
        let row: Vec<f64> = (0..n).map(|_| rng.uniform(-50.0, 50.0)).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let got = log_sum_exp(&row);
        assert!(got >= m);
        assert!(got <= m + (n as f64).ln() + 1e-12);
    }
}

proptest! {
    #[test]
    fn matmul_shapes_compose(m in 1usize..10, k in 1usize..10, n in 1usize..10, seed in 0u64..1000) {
        let mut rng = Rng::stream(seed, "numerics-prop");
        let a = random_matrix(m, k, &mut rng);
        let b = random_matrix(k, n, &mut rng);
        let ab = a.matmul(&b).unwrap();
        prop_assert_eq!((ab.rows(), ab.cols()), (m, n));
        let lhs = ab.transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn matmul_is_linear_in_the_left_argument(m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in 0u64..1000) {
        let mut rng = Rng::stream(seed, "numerics-prop-linear");
        let a1 = random_matrix(m, k, &mut rng);
        let a2 = random_matrix(m, k, &mut rng);
        let b = random_matrix(k, n, &mut rng);
        let lhs = a1.add(&a2).unwrap().matmul(&b).unwrap();
        let rhs = a1.matmul(&b).unwrap().add(&a2.matmul(&b).unwrap()).unwrap();
        for (x, y) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}

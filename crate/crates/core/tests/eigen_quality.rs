use dcm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// B * B^T for a random `dim x k` matrix B, symmetrised exactly.
fn random_psd(dim: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..dim * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = (0..k).map(|c| b[i * k + c] * b[j * k + c]).sum();
            a[i * dim + j] = v;
            a[j * dim + i] = v;
        }
    }
    DenseMatrix::new(dim, dim, a, None).unwrap()
}

fn check(a: &DenseMatrix) {
    let n = a.rows();
    let e = jacobi_eigen(a).unwrap();
    let fro = a.frobenius_norm();

    for w in e.eigenvalues.windows(2) {
        assert!(w[0] >= w[1], "eigenvalues not descending");
    }
    for (i, &lambda) in e.eigenvalues.iter().enumerate() {
        let v = e.eigenvector(i);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12, "dim {n}: |v_{i}| = {norm}");
        let residual: f64 = (0..n)
            .map(|r| {
                let av: f64 = (0..n).map(|c| a.get(r, c) * v[c]).sum();
                (av - lambda * v[r]).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        assert!(residual <= 1e-8 * fro, "dim {n}: residual {residual:e} for pair {i}");
        let lead = v.iter().enumerate().fold(0, |b, (r, x)| if x.abs() > v[b].abs() { r } else { b });
        assert!(v[lead] > 0.0);
    }
    for i in 0..n {
        let vi = e.eigenvector(i);
        for j in i + 1..n {
            let vj = e.eigenvector(j);
            let dot: f64 = vi.iter().zip(&vj).map(|(x, y)| x * y).sum();
            assert!(dot.abs() <= 1e-10, "dim {n}: v{i}.v{j} = {dot:e}");
        }
    }
    let trace: f64 = (0..n).map(|i| a.get(i, i)).sum();
    let sum: f64 = e.eigenvalues.iter().sum();
    assert!((trace - sum).abs() <= 1e-8 * fro);
    assert!(*e.eigenvalues.last().unwrap() >= -1e-10 * fro);

    let mut recon_err = 0.0;
    for r in 0..n {
        for c in 0..n {
            let v: f64 = (0..n).map(|k| e.eigenvectors.get(r, k) * e.eigenvalues[k] * e.eigenvectors.get(c, k)).sum();
            recon_err += (v - a.get(r, c)).powi(2);
        }
    }
    assert!(recon_err.sqrt() <= 1e-7 * fro);
}

#[test]
fn random_psd_matrices() {
    for (seed, &(dim, k)) in
        [(1, 1), (2, 1), (3, 2), (5, 5), (10, 3), (30, 30), (64, 10), (120, 200), (200, 50)].iter().enumerate()
    {
        check(&random_psd(dim, k, seed as u64));
    }
}

#[test]
fn covariance_of_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (rows, cols) = (80, 40);
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-5.0..5.0)).collect();
    let m = DenseMatrix::new(rows, cols, v, None).unwrap();
    let g = centralized_covariance(&m).unwrap();
    check(g.matrix());
    let e = symmetric_eigen(&g).unwrap();
    assert_eq!(e.eigenvalues.len(), cols);
}

#[test]
fn rank_deficient_covariance() {
    // Two identical columns: rank one, eigenvalues (2 var, 0).
    let m = DenseMatrix::new(4, 2, vec![1.0, 1.0, 4.0, 4.0, 2.0, 2.0, 8.0, 8.0], None).unwrap();
    let g = centralized_covariance(&m).unwrap();
    let e = symmetric_eigen(&g).unwrap();
    let var = g.get(0, 0);
    assert!((e.eigenvalues[0] - 2.0 * var).abs() < 1e-12 * var);
    assert!(e.eigenvalues[1].abs() < 1e-12 * var);
}

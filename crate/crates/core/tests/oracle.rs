//! Enumeration and finite-difference oracles written independently of the
//! library's own enumeration code.

use adbn_core::rbm::{
    cd_gradient, exact_loglik_gradient, hidden_conditional, log_likelihood_exact, log_partition_exact,
    mean_field_energy, reconstruction_error, visible_conditional,
};
use adbn_core::{Matrix, RbmParams, RngStream};

fn bits(index: usize, len: usize) -> Vec<f64> {
    (0..len).map(|k| ((index >> k) & 1) as f64).collect()
}

fn neg_energy(p: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, vi) in v.iter().enumerate() {
        s += p.visible_bias()[i] * vi;
        for (j, hj) in h.iter().enumerate() {
            s += vi * p.weights().get(i, j) * hj;
        }
    }
    s + h.iter().zip(p.hidden_bias()).map(|(h, c)| h * c).sum::<f64>()
}

/// `ln Σ_{v,h} exp(-E)` by brute force over both layers.
fn brute_log_z(p: &RbmParams) -> f64 {
    let (nv, nh) = (p.visible_count(), p.hidden_count());
    let mut total = 0.0;
    for a in 0..1usize << nv {
        for b in 0..1usize << nh {
            total += neg_energy(p, &bits(a, nv), &bits(b, nh)).exp();
        }
    }
    total.ln()
}

fn brute_mean_loglik(p: &RbmParams, batch: &[Vec<f64>]) -> f64 {
    let nh = p.hidden_count();
    let log_z = brute_log_z(p);
    batch
        .iter()
        .map(|v| {
            let marginal: f64 = (0..1usize << nh).map(|b| neg_energy(p, v, &bits(b, nh)).exp()).sum();
            marginal.ln() - log_z
        })
        .sum::<f64>()
        / batch.len() as f64
}

fn model(nv: usize, nh: usize, scale: f64, seed: u64) -> RbmParams {
    let mut rng = RngStream::new(seed);
    let b = (0..nv).map(|_| rng.uniform_in(-scale, scale)).collect();
    let c = (0..nh).map(|_| rng.uniform_in(-scale, scale)).collect();
    let w = Matrix::from_fn(nv, nh, |_, _| rng.uniform_in(-scale, scale));
    RbmParams::from_parts(b, c, w).unwrap()
}

fn batch(nv: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    (0..n).map(|_| (0..nv).map(|_| rng.bernoulli(0.5)).collect()).collect()
}

#[test]
fn log_partition_matches_brute_force() {
    for (nv, nh, seed) in [(3, 2, 1), (4, 3, 2), (5, 4, 3), (2, 6, 4)] {
        let p = model(nv, nh, 1.5, seed);
        let ours = log_partition_exact(&p).unwrap();
        let oracle = brute_log_z(&p);
        assert!((ours - oracle).abs() < 1e-10, "{nv}x{nh}: {ours} vs {oracle}");
    }
}

#[test]
fn log_likelihood_matches_brute_force() {
    let p = model(4, 3, 1.0, 9);
    let data = batch(4, 7, 10);
    let ours = log_likelihood_exact(&p, &data).unwrap();
    let oracle = brute_mean_loglik(&p, &data);
    assert!((ours - oracle).abs() < 1e-10);
}

#[test]
fn exact_gradient_matches_finite_differences_of_brute_force() {
    let h = 1e-5;
    for seed in 0..5 {
        let p = model(4, 3, 1.0, 100 + seed);
        let data = batch(4, 5, 200 + seed);
        let grad = exact_loglik_gradient(&p, &data).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let w = p.weights().get(i, j);
                let mut plus = p.clone();
                plus.set_weight(i, j, w + h);
                let mut minus = p.clone();
                minus.set_weight(i, j, w - h);
                let fd = (brute_mean_loglik(&plus, &data) - brute_mean_loglik(&minus, &data)) / (2.0 * h);
                let got = grad.dw.get(i, j);
                assert!((got - fd).abs() <= 1e-6 * got.abs().max(fd.abs()).max(1e-4), "dW[{i}][{j}] {got} vs {fd}");
            }
        }
        for j in 0..3 {
            let mut plus = p.clone();
            plus.hidden_bias_mut()[j] += h;
            let mut minus = p.clone();
            minus.hidden_bias_mut()[j] -= h;
            let fd = (brute_mean_loglik(&plus, &data) - brute_mean_loglik(&minus, &data)) / (2.0 * h);
            assert!((grad.dc[j] - fd).abs() < 1e-8, "dc[{j}]");
        }
        for i in 0..4 {
            let mut plus = p.clone();
            plus.visible_bias_mut()[i] += h;
            let mut minus = p.clone();
            minus.visible_bias_mut()[i] -= h;
            let fd = (brute_mean_loglik(&plus, &data) - brute_mean_loglik(&minus, &data)) / (2.0 * h);
            assert!((grad.db[i] - fd).abs() < 1e-8, "db[{i}]");
        }
    }
}

#[test]
fn conditionals_match_brute_force_ratios() {
    let p = model(3, 2, 2.0, 5);
    let v = [1.0, 0.0, 1.0];
    let ph = hidden_conditional(&p, &v).unwrap();
    for j in 0..2 {
        // p(h_j = 1 | v) from the joint, summing the other hidden unit out.
        let (mut on, mut all) = (0.0, 0.0);
        for b in 0..4 {
            let h = bits(b, 2);
            let e = neg_energy(&p, &v, &h).exp();
            all += e;
            if h[j] == 1.0 {
                on += e;
            }
        }
        assert!((ph[j] - on / all).abs() < 1e-12);
    }
    let hvec = [0.0, 1.0];
    let pv = visible_conditional(&p, &hvec).unwrap();
    for i in 0..3 {
        let expected = 1.0 / (1.0 + (-(p.visible_bias()[i] + p.weights().get(i, 1))).exp());
        assert!((pv[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn cd_converges_to_exact_gradient_with_many_chains() {
    let p = model(3, 2, 1.0, 77);
    let data: Vec<Vec<f64>> = (0..50_000).map(|n| bits(n % 8, 3)).collect();
    let exact = exact_loglik_gradient(&p, &data).unwrap();
    let cd = cd_gradient(&p, &data, 20, &mut RngStream::new(78)).unwrap();
    let gap = cd.max_abs_diff(&exact).unwrap();
    assert!(gap < 0.02, "gap {gap}");
}

#[test]
fn reconstruction_error_and_energy_match_hand_computation() {
    let p = model(3, 2, 1.0, 21);
    let v = vec![1.0, 1.0, 0.0];
    let ph = hidden_conditional(&p, &v).unwrap();
    let r = visible_conditional(&p, &ph).unwrap();
    let err: f64 = v.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 3.0;
    assert!((reconstruction_error(&p, &[v.clone()]).unwrap() - err).abs() < 1e-14);
    let e = -neg_energy(&p, &v, &ph);
    assert!((mean_field_energy(&p, &[v]).unwrap() - e).abs() < 1e-12);
}

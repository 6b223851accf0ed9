//! Cross-checks against a second implementation that works directly on the
//! explicit joint table `p(x1, x2, yr, yhat)` of the fixture channel.

use qfrelay::infotheory::{h_yr_given_x1, h_yr_given_x2, lagrangian, mac_sum_bound, rate_report, QuantizerPmf};
use qfrelay::optimizer::{delta_matrix, induced_posteriors, iterate_once, update_q};
use qfrelay::oracle::{fixture_channel, FIXTURE_LAW};

/// Dense joint over `(x1, x2, yr, yhat)`.
struct Joint {
    p: Vec<f64>,
    dims: [usize; 4],
}

impl Joint {
    fn new(q: &[Vec<f64>]) -> Self {
        let levels = q.len();
        let mut p = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                for j in 0..3 {
                    for row in q.iter() {
                        p.push(0.25 * FIXTURE_LAW[a][b][j] * row[j]);
                    }
                }
            }
        }
        Joint {
            p,
            dims: [2, 2, 3, levels],
        }
    }

    /// Marginal over the axes flagged in `keep`, keyed by the kept indices.
    fn marginal(&self, keep: [bool; 4]) -> Vec<(Vec<usize>, f64)> {
        let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
        let [d0, d1, d2, d3] = self.dims;
        let mut k = 0;
        for a in 0..d0 {
            for b in 0..d1 {
                for j in 0..d2 {
                    for i in 0..d3 {
                        let idx = [a, b, j, i];
                        let key: Vec<usize> = (0..4).filter(|&t| keep[t]).map(|t| idx[t]).collect();
                        match out.iter_mut().find(|e| e.0 == key) {
                            Some(e) => e.1 += self.p[k],
                            None => out.push((key, self.p[k])),
                        }
                        k += 1;
                    }
                }
            }
        }
        out
    }

    fn h(&self, keep: [bool; 4]) -> f64 {
        -self
            .marginal(keep)
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|e| e.1 * e.1.log2())
            .sum::<f64>()
    }

    fn get(&self, keep: [bool; 4], key: &[usize]) -> f64 {
        self.marginal(keep)
            .into_iter()
            .find(|e| e.0 == key)
            .map_or(0.0, |e| e.1)
    }
}

const X1: [bool; 4] = [true, false, false, false];
const X2: [bool; 4] = [false, true, false, false];
const Y: [bool; 4] = [false, false, true, false];
const YH: [bool; 4] = [false, false, false, true];

fn or(a: [bool; 4], b: [bool; 4]) -> [bool; 4] {
    [a[0] || b[0], a[1] || b[1], a[2] || b[2], a[3] || b[3]]
}

/// `I(A; B | C)` from joint entropies.
fn cmi(jt: &Joint, a: [bool; 4], b: [bool; 4], c: [bool; 4]) -> f64 {
    jt.h(or(a, c)) + jt.h(or(b, c)) - jt.h(or(or(a, b), c)) - jt.h(c)
}

fn fixture_q() -> Vec<Vec<f64>> {
    vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6]]
}

#[test]
fn rate_report_matches_joint_table() {
    let ch = fixture_channel();
    let rows = fixture_q();
    let q = QuantizerPmf::from_rows(rows.clone()).unwrap();
    let r = rate_report(&ch, &q).unwrap();
    let jt = Joint::new(&rows);
    let none = [false; 4];
    let r1 = cmi(&jt, X1, YH, X2);
    let r2 = cmi(&jt, X2, YH, X1);
    assert!((r.r1 - r1).abs() < 1e-12, "{} vs {r1}", r.r1);
    assert!((r.r2 - r2).abs() < 1e-12);
    assert!((r.j_value - (r1 + r2)).abs() < 1e-12);
    assert!((r.c1_achieved - cmi(&jt, Y, YH, X1)).abs() < 1e-12);
    assert!((r.c2_achieved - cmi(&jt, Y, YH, X2)).abs() < 1e-12);
    assert!((r.h_yhat_given_y - (jt.h(or(Y, YH)) - jt.h(Y))).abs() < 1e-12);
    // Sanity of the helper itself: Yhat carries no more than Yr about X1.
    assert!(cmi(&jt, X1, YH, none) <= cmi(&jt, X1, Y, none) + 1e-12);
}

#[test]
fn identity_and_constant_quantizers() {
    let ch = fixture_channel();
    let id = rate_report(&ch, &QuantizerPmf::identity(3)).unwrap();
    assert!((id.j_value - mac_sum_bound(&ch)).abs() < 1e-12);
    assert!((id.c1_achieved - h_yr_given_x1(&ch)).abs() < 1e-12);
    assert!((id.c2_achieved - h_yr_given_x2(&ch)).abs() < 1e-12);
    assert_eq!(id.h_yhat_given_y, 0.0);

    let one = rate_report(&ch, &QuantizerPmf::constant(3)).unwrap();
    for v in [
        one.j_value,
        one.c1_achieved,
        one.c2_achieved,
        one.h_yhat_given_y,
        one.r1,
        one.r2,
    ] {
        assert!(v.abs() < 1e-15);
    }
    assert!(lagrangian(&ch, &QuantizerPmf::constant(3), 0.3, 2.0).unwrap().abs() < 1e-15);

    let lag = lagrangian(&ch, &QuantizerPmf::identity(3), 1.0, 1.0).unwrap();
    let expected = mac_sum_bound(&ch) - h_yr_given_x1(&ch) - h_yr_given_x2(&ch);
    assert!((lag - expected).abs() < 1e-12);
}

#[test]
fn posteriors_match_joint_table() {
    let ch = fixture_channel();
    let rows = fixture_q();
    let post = induced_posteriors(&ch, &QuantizerPmf::from_rows(rows.clone()).unwrap()).unwrap();
    let jt = Joint::new(&rows);
    for i in 0..3 {
        for a in 0..2 {
            for b in 0..2 {
                let p_abi = jt.get(or(or(X1, X2), YH), &[a, b, i]);
                let t1 = p_abi / jt.get(or(X2, YH), &[b, i]);
                let t2 = p_abi / jt.get(or(X1, YH), &[a, i]);
                assert!((post.t1(a, i, b) - t1).abs() < 1e-12);
                assert!((post.t2(b, i, a) - t2).abs() < 1e-12);
            }
            let t3 = jt.get(or(X1, YH), &[a, i]) / 0.5;
            assert!((post.t3(i, a) - t3).abs() < 1e-12);
            let t4 = jt.get(or(X2, YH), &[a, i]) / 0.5;
            assert!((post.t4(i, a) - t4).abs() < 1e-12);
        }
    }
}

#[test]
fn one_step_by_hand() {
    let ch = fixture_channel();
    let rows = fixture_q();
    let (l1, l2) = (0.3, 0.7);
    let q = QuantizerPmf::from_rows(rows.clone()).unwrap();
    let delta = delta_matrix(&ch, &induced_posteriors(&ch, &q).unwrap(), l1, l2).unwrap();
    let jt = Joint::new(&rows);

    let mut expected = vec![vec![0.0; 3]; 3];
    for (i, row) in expected.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let p_y = jt.get(Y, &[j]);
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let p_abi = jt.get(or(or(X1, X2), YH), &[a, b, i]);
                    let t1 = p_abi / jt.get(or(X2, YH), &[b, i]);
                    let t2 = p_abi / jt.get(or(X1, YH), &[a, i]);
                    acc += 0.25 * FIXTURE_LAW[a][b][j] * (t1.ln() + t2.ln());
                }
            }
            for a in 0..2 {
                let p_y_a = 0.5 * (FIXTURE_LAW[a][0][j] + FIXTURE_LAW[a][1][j]);
                acc += l1 * 0.5 * p_y_a * (jt.get(or(X1, YH), &[a, i]) / 0.5).ln();
            }
            for b in 0..2 {
                let p_y_b = 0.5 * (FIXTURE_LAW[0][b][j] + FIXTURE_LAW[1][b][j]);
                acc += l2 * 0.5 * p_y_b * (jt.get(or(X2, YH), &[b, i]) / 0.5).ln();
            }
            *cell = acc / ((l1 + l2) * p_y);
        }
    }
    for (i, row) in expected.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((delta.get(i, j) - v).abs() < 1e-12, "delta[{i}][{j}]");
        }
    }

    let next = update_q(&delta).unwrap();
    for j in 0..3 {
        let z: f64 = (0..3).map(|i| expected[i][j].exp()).sum();
        for (i, row) in expected.iter().enumerate() {
            assert!((next.get(i, j) - row[j].exp() / z).abs() < 1e-12);
        }
    }
    assert_eq!(iterate_once(&ch, &q, l1, l2).unwrap(), next);
}

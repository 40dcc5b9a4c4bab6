//! Second, independent forward pass of the whole model in double-double
//! precision. Serves as the loss evaluated by gradient checks, where f64
//! round-off would otherwise swamp small gradient entries.

use crate::decoder::{DecoderKind, NUM_LABELS, START};
use crate::error::{Error, Result};
use crate::lstm::{CandidateActivation, LstmParams};
use crate::model::{Example, Model};
use crate::numeric::dd::{dd_log_sum_exp, Dd};
use crate::numeric::{Matrix, ParamStore};
use crate::question::PoolingMode;

type Vector = Vec<Dd>;

fn lift(v: &[f64]) -> Vector {
    v.iter().map(|&x| Dd::from(x)).collect()
}

fn matvec(w: &Matrix, x: &[Dd]) -> Vector {
    (0..w.rows())
        .map(|r| {
            let mut acc = Dd::ZERO;
            for (c, xc) in x.iter().enumerate() {
                acc += *xc * w.get(r, c);
            }
            acc
        })
        .collect()
}

fn add(a: &mut [Dd], b: &[Dd]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

fn gate(store: &ParamStore, p: &LstmParams, g: usize, x: &[Dd], y: &[Dd], s: &[Dd]) -> Vector {
    let (w_x, w_y, w_s, b) = p.gate(g);
    let mut z = lift(store.value(b).as_slice());
    add(&mut z, &matvec(store.value(w_x), x));
    add(&mut z, &matvec(store.value(w_y), y));
    if let Some(w_s) = w_s {
        add(&mut z, &matvec(store.value(w_s), s));
    }
    z
}

fn lstm(store: &ParamStore, p: &LstmParams, xs: &[Vector], reverse: bool) -> Vec<Vector> {
    let n = xs.len();
    let h = p.width();
    let mut s = vec![Dd::ZERO; h];
    let mut y = vec![Dd::ZERO; h];
    let mut out = vec![Vec::new(); n];
    for k in 0..n {
        let pos = if reverse { n - 1 - k } else { k };
        let x = &xs[pos];
        let i: Vector = gate(store, p, 0, x, &y, &s).into_iter().map(Dd::sigmoid).collect();
        let f: Vector = gate(store, p, 1, x, &y, &s).into_iter().map(Dd::sigmoid).collect();
        let c: Vector = gate(store, p, 2, x, &y, &s)
            .into_iter()
            .map(|z| match p.candidate() {
                CandidateActivation::Sigmoid => z.sigmoid(),
                CandidateActivation::Tanh => z.tanh(),
            })
            .collect();
        let s_new: Vector = (0..h).map(|k| f[k] * s[k] + i[k] * c[k]).collect();
        let o: Vector = gate(store, p, 3, x, &y, &s_new).into_iter().map(Dd::sigmoid).collect();
        y = (0..h).map(|k| o[k] * s_new[k].tanh()).collect();
        s = s_new;
        out[pos] = y.clone();
    }
    out
}

fn column(m: &Matrix, c: usize) -> Vector {
    lift(&m.col_to_vec(c))
}

/// Negative log-likelihood of `ex` with dropout off, evaluated at `store`.
pub(crate) fn nll(model: &Model, store: &ParamStore, ex: &Example) -> Result<Dd> {
    if ex.labels.len() != ex.evidence.len() || ex.features.len() != ex.evidence.len() {
        return Err(Error::Shape("reference forward: inconsistent example".into()));
    }
    let emb = store.value(model.embedding_id());
    let vocab = emb.cols();
    let word = |id: usize| column(emb, if id < vocab { id } else { 0 });

    let qenc = model.question_encoder();
    let qs: Vec<Vector> = ex.question.iter().map(|&id| word(id)).collect();
    let q = lstm(store, &qenc.lstm, &qs, false);
    let h = qenc.lstm.width();
    let r_q: Vector = match qenc.mode {
        PoolingMode::Attention => {
            let w_a = store.value(qenc.attention.w_a);
            let v_q = store.value(qenc.attention.v_q);
            let scores: Vector = q
                .iter()
                .map(|qi| {
                    let t: Vector = matvec(w_a, qi).into_iter().map(Dd::tanh).collect();
                    let mut acc = Dd::ZERO;
                    for (k, tk) in t.iter().enumerate() {
                        acc += *tk * v_q.get(k, 0);
                    }
                    acc
                })
                .collect();
            let lse = dd_log_sum_exp(&scores);
            let mut r = vec![Dd::ZERO; h];
            for (sc, qi) in scores.iter().zip(&q) {
                let a = (*sc - lse).exp();
                for (rk, qk) in r.iter_mut().zip(qi) {
                    *rk += a * *qk;
                }
            }
            r
        }
        PoolingMode::Average => (0..h)
            .map(|k| {
                let mut acc = Dd::ZERO;
                for qi in &q {
                    acc += qi[k];
                }
                acc / q.len() as f64
            })
            .collect(),
        PoolingMode::Max => (0..h)
            .map(|k| q.iter().map(|qi| qi[k]).reduce(Dd::max).expect("nonempty question"))
            .collect(),
    };

    let eenc = model.evidence_encoder();
    let f1 = store.value(eenc.qe_embedding);
    let f2 = store.value(eenc.ee_embedding);
    let x1: Vec<Vector> = ex
        .evidence
        .iter()
        .enumerate()
        .map(|(j, &id)| {
            let mut x = word(id);
            x.extend_from_slice(&r_q);
            x.extend(column(f1, ex.features.qe[j] as usize));
            x.extend(column(f2, ex.features.ee[j] as usize));
            x
        })
        .collect();
    let e1 = lstm(store, &eenc.layers[0], &x1, false);
    let top = match eenc.layers.len() {
        1 => e1,
        n => {
            let e2 = lstm(store, &eenc.layers[1], &e1, true);
            if n == 2 {
                e2
            } else {
                let x3: Vec<Vector> = if eenc.cross_links {
                    e1.iter().zip(&e2).map(|(a, b)| a.iter().chain(b).copied().collect()).collect()
                } else {
                    e2
                };
                lstm(store, &eenc.layers[2], &x3, false)
            }
        }
    };

    let w_e = store.value(model.emission_weights());
    let em: Vec<Vector> = top.iter().map(|t| matvec(w_e, t)).collect();
    let golden: Vec<usize> = ex.labels.iter().map(|l| l.index()).collect();
    let l = NUM_LABELS;
    Ok(match model.config().decoder {
        DecoderKind::Softmax => {
            let mut total = Dd::ZERO;
            for (row, &y) in em.iter().zip(&golden) {
                total += dd_log_sum_exp(row) - row[y];
            }
            total
        }
        DecoderKind::SoftmaxPrev => {
            let u = store.value(model.decoder_extra().expect("softmax_prev has U"));
            let mut total = Dd::ZERO;
            let mut prev = START;
            for (row, &y) in em.iter().zip(&golden) {
                let z: Vector = (0..l).map(|k| row[k] + u.get(k, prev)).collect();
                total += dd_log_sum_exp(&z) - z[y];
                prev = y;
            }
            total
        }
        DecoderKind::Crf => {
            let mu = store.value(model.decoder_extra().expect("crf has transitions"));
            let mut alpha: Vector = (0..l).map(|k| em[0][k] + mu.get(START, k)).collect();
            for row in &em[1..] {
                alpha = (0..l)
                    .map(|k| {
                        let terms: Vector = (0..l).map(|p| alpha[p] + mu.get(p, k)).collect();
                        dd_log_sum_exp(&terms) + row[k]
                    })
                    .collect();
            }
            let log_z = dd_log_sum_exp(&alpha);
            let mut score = em[0][golden[0]] + mu.get(START, golden[0]);
            for j in 1..golden.len() {
                score += em[j][golden[j]] + mu.get(golden[j - 1], golden[j]);
            }
            log_z - score
        }
    })
}

//! Random instances and finite-difference gradient checks shared by the
//! integration test targets.

#![allow(dead_code)]

use hod::classifier::{ClassifierParams, Hyperplane};
use hod::head::{head_backward, HeadParams, LossKind};
use hod::lorentz::{Curvature, LorentzPoint};
use hod::objectives::{
    cross_entropy_loss, cross_entropy_loss_grad, hsup_loss, hsup_loss_grad, uncertainty_loss,
    uncertainty_loss_grad, ContrastiveBatch, LossSettings,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Magnitude below which gradient entries are compared absolutely.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| / max(|a|, |b|, FD_FLOOR)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Central difference of `f` around `x`.
pub fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

pub fn random_space(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_curvature(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.3..3.0)
}

fn points(spaces: &[Vec<f64>], c: f64) -> Vec<LorentzPoint<f64>> {
    let c = Curvature::new(c).unwrap();
    spaces
        .iter()
        .map(|s| LorentzPoint::from_space(s.clone(), c))
        .collect()
}

/// Labels `0,0,1,1,…` so every anchor has a positive.
pub fn paired_labels(m: usize) -> Vec<usize> {
    (0..m).map(|i| i / 2).collect()
}

/// Worst relative error of the contrastive-loss gradient (space coordinates
/// and curvature) over `instances` random batches.
pub fn hsup_gradient_error(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = 2 * rng.random_range(2..5);
        let n = rng.random_range(1..5);
        let c = random_curvature(&mut rng);
        let tau = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        let spaces: Vec<Vec<f64>> = (0..m).map(|_| random_space(&mut rng, n, 1.5)).collect();
        let labels = paired_labels(m);
        let loss = |sp: &[Vec<f64>], c: f64| {
            let b = ContrastiveBatch::new(points(sp, c), labels.clone()).unwrap();
            hsup_loss(&b, tau, Curvature::new(c).unwrap()).unwrap()
        };
        let batch = ContrastiveBatch::new(points(&spaces, c), labels.clone()).unwrap();
        let (l, g) = hsup_loss_grad(&batch, tau, Curvature::new(c).unwrap()).unwrap();
        assert!((l - loss(&spaces, c)).abs() <= 1e-12 * l.abs().max(1.0));
        for i in 0..m {
            for k in 0..n {
                let fd = central(
                    |x| {
                        let mut sp = spaces.clone();
                        sp[i][k] = x;
                        loss(&sp, c)
                    },
                    spaces[i][k],
                );
                worst = worst.max(rel_err(g.space[i][k], fd));
            }
        }
        worst = worst.max(rel_err(g.curvature, central(|x| loss(&spaces, x), c)));
    }
    worst
}

/// Worst relative error of the outlier-loss gradient (both point sets, the
/// hyperplane and the curvature).
pub fn uncertainty_gradient_error(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..5);
        let c = random_curvature(&mut rng);
        let ids: Vec<Vec<f64>> = (0..rng.random_range(1..6))
            .map(|_| random_space(&mut rng, n, 1.5))
            .collect();
        let outs: Vec<Vec<f64>> = (0..rng.random_range(1..6))
            .map(|_| random_space(&mut rng, n, 0.5))
            .collect();
        let a = rng.random_range(-0.8..0.8);
        let o = random_space(&mut rng, n, 1.0);
        let loss = |ids: &[Vec<f64>], outs: &[Vec<f64>], a: f64, o: &[f64], c: f64| {
            uncertainty_loss(
                &points(ids, c),
                &points(outs, c),
                &Hyperplane::new(a, o.to_vec()),
                Curvature::new(c).unwrap(),
            )
            .unwrap()
        };
        let (l, g) = uncertainty_loss_grad(
            &points(&ids, c),
            &points(&outs, c),
            &Hyperplane::new(a, o.clone()),
            Curvature::new(c).unwrap(),
        )
        .unwrap();
        assert!((l - loss(&ids, &outs, a, &o, c)).abs() <= 1e-12 * l.abs().max(1.0));
        for (set, grads, is_id) in [(&ids, &g.id.space, true), (&outs, &g.outliers.space, false)] {
            for i in 0..set.len() {
                for k in 0..n {
                    let fd = central(
                        |x| {
                            let mut sp = set.clone();
                            sp[i][k] = x;
                            if is_id {
                                loss(&sp, &outs, a, &o, c)
                            } else {
                                loss(&ids, &sp, a, &o, c)
                            }
                        },
                        set[i][k],
                    );
                    worst = worst.max(rel_err(grads[i][k], fd));
                }
            }
        }
        worst = worst.max(rel_err(
            g.hyperplane.offset,
            central(|x| loss(&ids, &outs, x, &o, c), a),
        ));
        for k in 0..n {
            let fd = central(
                |x| {
                    let mut o2 = o.clone();
                    o2[k] = x;
                    loss(&ids, &outs, a, &o2, c)
                },
                o[k],
            );
            worst = worst.max(rel_err(g.hyperplane.orientation[k], fd));
        }
        let gc = g.id.curvature + g.outliers.curvature;
        worst = worst.max(rel_err(gc, central(|x| loss(&ids, &outs, a, &o, x), c)));
    }
    worst
}

fn random_classifier(rng: &mut ChaCha8Rng, classes: usize, n: usize) -> ClassifierParams<f64> {
    ClassifierParams::new(
        (0..classes)
            .map(|_| Hyperplane::new(rng.random_range(-0.5..0.5), random_space(rng, n, 1.0)))
            .collect(),
    )
    .unwrap()
}

/// Worst relative error of the cross-entropy gradient (embeddings, class
/// hyperplanes, curvature).
pub fn cross_entropy_gradient_error(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..5);
        let classes = rng.random_range(2..5);
        let m = rng.random_range(1..7);
        let c = random_curvature(&mut rng);
        let spaces: Vec<Vec<f64>> = (0..m).map(|_| random_space(&mut rng, n, 1.5)).collect();
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let clf = random_classifier(&mut rng, classes, n);
        let loss = |sp: &[Vec<f64>], clf: &ClassifierParams<f64>, c: f64| {
            cross_entropy_loss(&points(sp, c), &labels, clf, Curvature::new(c).unwrap()).unwrap()
        };
        let (_, g) = cross_entropy_loss_grad(
            &points(&spaces, c),
            &labels,
            &clf,
            Curvature::new(c).unwrap(),
        )
        .unwrap();
        for i in 0..m {
            for k in 0..n {
                let fd = central(
                    |x| {
                        let mut sp = spaces.clone();
                        sp[i][k] = x;
                        loss(&sp, &clf, c)
                    },
                    spaces[i][k],
                );
                worst = worst.max(rel_err(g.embeddings.space[i][k], fd));
            }
        }
        for (j, hg) in g.hyperplanes.iter().enumerate() {
            let fd = central(
                |x| {
                    let mut cl = clf.clone();
                    cl.hyperplanes[j].offset = x;
                    loss(&spaces, &cl, c)
                },
                clf.hyperplanes[j].offset,
            );
            worst = worst.max(rel_err(hg.offset, fd));
            for k in 0..n {
                let fd = central(
                    |x| {
                        let mut cl = clf.clone();
                        cl.hyperplanes[j].orientation[k] = x;
                        loss(&spaces, &cl, c)
                    },
                    clf.hyperplanes[j].orientation[k],
                );
                worst = worst.max(rel_err(hg.orientation[k], fd));
            }
        }
        worst = worst.max(rel_err(
            g.embeddings.curvature,
            central(|x| loss(&spaces, &clf, x), c),
        ));
    }
    worst
}

/// Which loss the head-level check differentiates.
#[derive(Clone, Copy, Debug)]
pub enum HeadLoss {
    Hsup,
    Combined,
    CrossEntropy,
}

/// Mutable views of every trainable scalar in a head plus its hyperplanes.
struct Model {
    head: HeadParams<f64>,
    plane: Hyperplane<f64>,
    classes: ClassifierParams<f64>,
}

impl Model {
    fn entries(&mut self) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = Vec::new();
        for l in &mut self.head.layers {
            v.extend(l.weight.iter_mut());
            v.extend(l.bias.iter_mut());
        }
        v.push(&mut self.head.curvature_param);
        v.push(&mut self.plane.offset);
        v.extend(self.plane.orientation.iter_mut());
        for h in &mut self.classes.hyperplanes {
            v.push(&mut h.offset);
            v.extend(h.orientation.iter_mut());
        }
        v
    }
}

/// Worst relative error of [`head_backward`] against finite differences on
/// every head parameter, `curvature_param`, and the hyperplane(s).
pub fn head_gradient_error(seed: u64, instances: usize, which: HeadLoss) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (e, n, m) = (6, 4, 8);
        let mut head = HeadParams::new(e, n, &mut rng);
        head.curvature_param = rng.random_range(-0.5..1.5);
        let features: Vec<Vec<f64>> = (0..m).map(|_| random_space(&mut rng, e, 1.0)).collect();
        let labels = paired_labels(m);
        let outliers: Vec<LorentzPoint<f64>> = (0..3)
            .map(|_| LorentzPoint::from_space(random_space(&mut rng, n, 0.3), Curvature::one()))
            .collect();
        let model = Model {
            head,
            plane: Hyperplane::new(rng.random_range(-0.5..0.5), random_space(&mut rng, n, 1.0)),
            classes: random_classifier(&mut rng, 4, n),
        };
        let settings = LossSettings {
            temperature: 0.5,
            alpha: 0.3,
        };
        let eval = |md: &Model| {
            let kind = match which {
                HeadLoss::Hsup => LossKind::Hsup,
                HeadLoss::Combined => LossKind::Combined {
                    outliers: &outliers,
                    hyperplane: &md.plane,
                },
                HeadLoss::CrossEntropy => LossKind::CrossEntropy {
                    classifier: &md.classes,
                },
            };
            head_backward(&md.head, &features, &labels, kind, &settings).unwrap()
        };
        let out = eval(&model);
        let mut analytic: Vec<f64> = Vec::new();
        for l in &out.grad.layers {
            analytic.extend(&l.weight);
            analytic.extend(&l.bias);
        }
        analytic.push(out.grad.curvature_param);
        match &out.hyperplane {
            Some(h) => {
                analytic.push(h.offset);
                analytic.extend(&h.orientation);
            }
            None => analytic.extend(std::iter::repeat_n(0.0, n + 1)),
        }
        match &out.classes {
            Some(cs) => {
                for h in cs {
                    analytic.push(h.offset);
                    analytic.extend(&h.orientation);
                }
            }
            None => analytic.extend(std::iter::repeat_n(0.0, 4 * (n + 1))),
        }
        let mut probe = Model {
            head: model.head.clone(),
            plane: model.plane.clone(),
            classes: model.classes.clone(),
        };
        let count = probe.entries().len();
        assert_eq!(count, analytic.len());
        for (idx, &a) in analytic.iter().enumerate() {
            let x0 = *probe.entries()[idx];
            *probe.entries()[idx] = x0 + FD_STEP;
            let up = eval(&probe).loss;
            *probe.entries()[idx] = x0 - FD_STEP;
            let down = eval(&probe).loss;
            *probe.entries()[idx] = x0;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

use mflang_core::energy::{
    energy_value, flat_derivative, intrinsic_derivative, second_intrinsic_apply, KBodyKernel, Psi,
};
use mflang_core::measures::{sample_gaussian_cloud, Mixture, RngStream};
use mflang_core::{EmpiricalMeasure, EnergyFamily, EnergySpec, Measure, Potential};
use proptest::prelude::*;

const FD_STEP: f64 = 1e-5;

fn families() -> Vec<EnergySpec> {
    vec![
        EnergySpec::two_body(
            Potential::Quartic {
                a: 0.3,
                b: 0.1,
                c: 0.5,
                d: 0.2,
                e: 1.0,
            },
            Potential::Cosine {
                amplitude: 0.4,
                frequency: 1.3,
            },
        ),
        EnergySpec::two_body(
            Potential::Quadratic {
                a: 1.0,
                b: 0.3,
                c: 0.0,
            },
            Potential::Sum {
                terms: vec![
                    Potential::GaussianWell {
                        depth: 0.7,
                        width: 0.8,
                    },
                    Potential::quadratic(0.25),
                ],
            },
        ),
        EnergySpec {
            family: EnergyFamily::Polynomial {
                confinement: Potential::quadratic(0.5),
                kernels: vec![
                    KBodyKernel::PairSum {
                        arity: 3,
                        scale: 0.2,
                        phi: Potential::cosine(0.5),
                    },
                    KBodyKernel::CentroidQuadratic { arity: 2, a: 0.4 },
                ],
            },
            declared: Default::default(),
        },
        EnergySpec {
            family: EnergyFamily::Polynomial {
                confinement: Potential::Zero,
                kernels: vec![KBodyKernel::Product {
                    arity: 2,
                    phi: Potential::GaussianWell {
                        depth: 1.5,
                        width: 1.2,
                    },
                }],
            },
            declared: Default::default(),
        },
        EnergySpec {
            family: EnergyFamily::Internal {
                psi: Psi::Polynomial {
                    coefficients: vec![0.0, 1.0, 0.5, 0.1],
                },
                observable: Potential::Quartic {
                    a: 0.05,
                    b: 0.0,
                    c: 0.3,
                    d: 0.4,
                    e: 0.0,
                },
            },
            declared: Default::default(),
        },
        EnergySpec {
            family: EnergyFamily::Internal {
                psi: Psi::Exponential {
                    scale: 0.3,
                    rate: 0.5,
                },
                observable: Potential::cosine(1.0),
            },
            declared: Default::default(),
        },
    ]
}

fn cloud(seed: u64, id: u64, n: usize, dim: usize) -> EmpiricalMeasure {
    let mut rng = RngStream::new(seed, id);
    sample_gaussian_cloud(n, dim, &vec![0.3; dim], 1.0, &mut rng).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Nodes and weights of Gauss–Legendre quadrature on `[0, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let rule = gauss_legendre(64);
    let total: f64 = rule.iter().map(|(_, w)| w).sum();
    assert!((total - 1.0).abs() < 1e-14);
    let m9: f64 = rule.iter().map(|(t, w)| w * t.powi(9)).sum();
    assert!((m9 - 0.1).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn intrinsic_derivative_is_gradient_of_flat_derivative(
        seed in any::<u64>(),
        which in 0usize..6,
        dim in 1usize..=2,
        x in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let spec = &families()[which];
        let mu = cloud(seed, 0, 6, dim);
        let x = &x[..dim];
        let grad = intrinsic_derivative(spec, &mu, x);
        for k in 0..dim {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            let fd = (flat_derivative(spec, &mu, &up) - flat_derivative(spec, &mu, &down))
                / (2.0 * FD_STEP);
            prop_assert!(rel(fd, grad[k]) < 1e-5, "family {which} coord {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn jacobian_matches_differences_of_intrinsic_derivative(
        seed in any::<u64>(),
        which in 0usize..6,
        x in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let spec = &families()[which];
        let mu = cloud(seed, 1, 5, 2);
        let jac = spec.at(&mu).jacobian(&x);
        for k in 0..2 {
            let mut up = x.clone();
            let mut down = x.clone();
            up[k] += FD_STEP;
            down[k] -= FD_STEP;
            let gu = intrinsic_derivative(spec, &mu, &up);
            let gd = intrinsic_derivative(spec, &mu, &down);
            for j in 0..2 {
                let fd = (gu[j] - gd[j]) / (2.0 * FD_STEP);
                prop_assert!(rel(fd, jac[(j, k)]) < 1e-5);
            }
        }
    }

    #[test]
    fn moving_an_atom_is_second_intrinsic_over_n(
        seed in any::<u64>(),
        which in 0usize..6,
        atom in 0usize..5,
        x in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let spec = &families()[which];
        let n = 5;
        let mu = cloud(seed, 2, n, 2);
        let y = mu.point(atom).to_vec();
        let d2 = second_intrinsic_apply(spec, &mu, &x, &y);
        for k in 0..2 {
            let mut up = mu.as_slice().to_vec();
            let mut down = up.clone();
            up[atom * 2 + k] += FD_STEP;
            down[atom * 2 + k] -= FD_STEP;
            let gu = intrinsic_derivative(spec, &EmpiricalMeasure::new(2, up).unwrap(), &x);
            let gd = intrinsic_derivative(spec, &EmpiricalMeasure::new(2, down).unwrap(), &x);
            for j in 0..2 {
                let fd = n as f64 * (gu[j] - gd[j]) / (2.0 * FD_STEP);
                prop_assert!(rel(fd, d2[(j, k)]) < 1e-5, "family {which}: fd {fd} vs {}", d2[(j, k)]);
            }
        }
    }

    #[test]
    fn energy_difference_is_integral_of_flat_derivative(
        seed in any::<u64>(),
        which in 0usize..6,
        dim in 1usize..=2,
    ) {
        let spec = &families()[which];
        let mu0 = cloud(seed, 3, 6, dim);
        let mu1 = cloud(seed, 4, 6, dim).scaled(1.5).shifted(&vec![-0.4; dim]);
        let rule = gauss_legendre(64);
        let mut integral = 0.0;
        for (t, w) in rule {
            let mix = Mixture::new(&mu0, &mu1, t).unwrap();
            let field = spec.at(&mix);
            let against: f64 = mu1.points().map(|z| field.flat_derivative(z)).sum::<f64>()
                - mu0.points().map(|z| field.flat_derivative(z)).sum::<f64>();
            integral += w * against / 6.0;
        }
        let diff = energy_value(spec, &mu1) - energy_value(spec, &mu0);
        prop_assert!((diff - integral).abs() < 1e-8, "family {which}: {diff} vs {integral}");
    }

    #[test]
    fn two_body_agrees_with_its_polynomial_form(
        seed in any::<u64>(),
        which in 0usize..2,
        dim in 1usize..=2,
        x in prop::collection::vec(-2.0f64..2.0, 2),
        y in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let two = families()[which].clone();
        let poly = two.as_polynomial().unwrap();
        let mu = cloud(seed, 5, 7, dim);
        let (x, y) = (&x[..dim], &y[..dim]);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        prop_assert!(close(energy_value(&two, &mu), energy_value(&poly, &mu)));
        prop_assert!(close(flat_derivative(&two, &mu, x), flat_derivative(&poly, &mu, x)));
        let (ga, gb) = (intrinsic_derivative(&two, &mu, x), intrinsic_derivative(&poly, &mu, x));
        for k in 0..dim {
            prop_assert!(close(ga[k], gb[k]));
        }
        let (ja, jb) = (two.at(&mu).jacobian(x), poly.at(&mu).jacobian(x));
        let (sa, sb) = (
            second_intrinsic_apply(&two, &mu, x, y),
            second_intrinsic_apply(&poly, &mu, x, y),
        );
        for i in 0..dim {
            for j in 0..dim {
                prop_assert!(close(ja[(i, j)], jb[(i, j)]));
                prop_assert!(close(sa[(i, j)], sb[(i, j)]));
            }
        }
    }

    #[test]
    fn internal_second_derivative_has_rank_one(
        seed in any::<u64>(),
        which in 4usize..6,
        x in prop::collection::vec(-2.0f64..2.0, 3),
        y in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let spec = &families()[which];
        let mu = cloud(seed, 6, 8, 3);
        let m = second_intrinsic_apply(spec, &mu, &x, &y);
        for r in [(0, 1), (0, 2), (1, 2)] {
            for c in [(0, 1), (0, 2), (1, 2)] {
                let minor = m[(r.0, c.0)] * m[(r.1, c.1)] - m[(r.0, c.1)] * m[(r.1, c.0)];
                prop_assert!(minor.abs() < 1e-10, "minor {minor}");
            }
        }
    }
}

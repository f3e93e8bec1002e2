//! Analytic initial data: strictly positive, 1-periodic in `x`, Gaussian tails in `v`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::maxwellian;
use crate::grid::{DistributionGrid, SpatialGrid, VelocityGrid};
use crate::transport::PhaseSpaceDensity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    UniformMaxwellian {
        rho: f64,
        u: [f64; 3],
        temp: f64,
    },
    /// `ρ₀(1+δ sin 2πkx)` times a Maxwellian with `(U₀, T₀)`.
    SmoothWave {
        rho0: f64,
        u0: [f64; 3],
        temp0: f64,
        delta: f64,
        k: f64,
    },
    /// Uniform Gaussian with temperatures `temps` along the coordinate axes.
    AnisotropicGaussian {
        rho: f64,
        u: [f64; 3],
        temps: [f64; 3],
    },
    /// `ρ(x)[λM(U_a,T_a) + (1−λ)M(U_b,T_b)]` with `ρ(x) = ρ₀(1+δ sin 2πkx)`.
    TwoMaxwellianMix {
        rho0: f64,
        fraction: f64,
        u_a: [f64; 3],
        temp_a: f64,
        u_b: [f64; 3],
        temp_b: f64,
        delta: f64,
        k: f64,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::SmoothWave {
            rho0: 1.0,
            u0: [0.0; 3],
            temp0: 1.0,
            delta: 0.2,
            k: 1.0,
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParamOutOfRange {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

fn finite_vec(name: &'static str, u: [f64; 3]) -> Result<()> {
    match u.iter().find(|x| !x.is_finite()) {
        None => Ok(()),
        Some(&value) => Err(Error::ParamOutOfRange {
            name,
            value,
            reason: "must be finite",
        }),
    }
}

fn wave(rho0: f64, delta: f64, k: f64) -> Result<()> {
    positive("rho0", rho0)?;
    if !(delta.abs() < rho0 / 2.0) {
        return Err(Error::ParamOutOfRange {
            name: "delta",
            value: delta,
            reason: "|delta| must be below rho0/2",
        });
    }
    if !(k.fract() == 0.0 && k >= 1.0) {
        return Err(Error::ParamOutOfRange {
            name: "k",
            value: k,
            reason: "must be a positive integer",
        });
    }
    Ok(())
}

fn modulation(rho0: f64, delta: f64, k: f64, x: f64) -> f64 {
    rho0 * (1.0 + delta * (2.0 * PI * k * x).sin())
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::UniformMaxwellian { rho, u, temp } => {
                positive("rho", rho)?;
                finite_vec("u", u)?;
                positive("temp", temp)
            }
            Self::SmoothWave {
                rho0,
                u0,
                temp0,
                delta,
                k,
            } => {
                wave(rho0, delta, k)?;
                finite_vec("u0", u0)?;
                positive("temp0", temp0)
            }
            Self::AnisotropicGaussian { rho, u, temps } => {
                positive("rho", rho)?;
                finite_vec("u", u)?;
                temps.iter().try_for_each(|&t| positive("temps", t))
            }
            Self::TwoMaxwellianMix {
                rho0,
                fraction,
                u_a,
                temp_a,
                u_b,
                temp_b,
                delta,
                k,
            } => {
                wave(rho0, delta, k)?;
                if !(fraction > 0.0 && fraction < 1.0) {
                    return Err(Error::ParamOutOfRange {
                        name: "fraction",
                        value: fraction,
                        reason: "must lie in (0, 1)",
                    });
                }
                finite_vec("u_a", u_a)?;
                finite_vec("u_b", u_b)?;
                positive("temp_a", temp_a)?;
                positive("temp_b", temp_b)
            }
        }
    }

    /// Evaluation without validation.
    fn density_unchecked(&self, x: f64, v: [f64; 3]) -> f64 {
        match *self {
            Self::UniformMaxwellian { rho, u, temp } => maxwellian(rho, u, temp, v),
            Self::SmoothWave {
                rho0,
                u0,
                temp0,
                delta,
                k,
            } => maxwellian(modulation(rho0, delta, k, x), u0, temp0, v),
            Self::AnisotropicGaussian { rho, u, temps } => {
                let mut value = rho;
                for a in 0..3 {
                    let c = v[a] - u[a];
                    value *= (-c * c / (2.0 * temps[a])).exp() / (2.0 * PI * temps[a]).sqrt();
                }
                value
            }
            Self::TwoMaxwellianMix {
                rho0,
                fraction,
                u_a,
                temp_a,
                u_b,
                temp_b,
                delta,
                k,
            } => {
                let r = modulation(rho0, delta, k, x);
                r * (fraction * maxwellian(1.0, u_a, temp_a, v)
                    + (1.0 - fraction) * maxwellian(1.0, u_b, temp_b, v))
            }
        }
    }
}

impl PhaseSpaceDensity for InitialCondition {
    fn density(&self, x: f64, v: [f64; 3]) -> f64 {
        self.density_unchecked(x, v)
    }
}

/// `f₀(x, v)`.
pub fn eval_ic(ic: &InitialCondition, x: f64, v: [f64; 3]) -> Result<f64> {
    ic.validate()?;
    Ok(ic.density_unchecked(x, v))
}

/// `f⁰_{i,j} = f₀(x_i, v_j)`.
pub fn sample_ic(ic: &InitialCondition, spatial: SpatialGrid, velocity: VelocityGrid) -> Result<DistributionGrid> {
    ic.validate()?;
    Ok(DistributionGrid::from_fn(spatial, velocity, |x, v| {
        ic.density_unchecked(x, v)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grids;
    use crate::moments::compute_moments;
    use proptest::prelude::*;

    fn wave_ic(delta: f64) -> InitialCondition {
        InitialCondition::SmoothWave {
            rho0: 1.0,
            u0: [0.0; 3],
            temp0: 1.0,
            delta,
            k: 1.0,
        }
    }

    const UNIT: InitialCondition = InitialCondition::UniformMaxwellian {
        rho: 1.0,
        u: [0.0; 3],
        temp: 1.0,
    };

    #[test]
    fn unit_maxwellian_at_origin() {
        let expected = (2.0 * PI).powf(-1.5);
        for x in [0.0, 0.3, 0.77] {
            assert!((eval_ic(&UNIT, x, [0.0; 3]).unwrap() - expected).abs() < 1e-16);
        }
    }

    #[test]
    fn flat_wave_is_uniform() {
        for (x, v) in [(0.1, [0.3, -1.0, 2.0]), (0.9, [0.0, 0.0, 0.5])] {
            assert_eq!(
                eval_ic(&wave_ic(0.0), x, v).unwrap(),
                eval_ic(&UNIT, x, v).unwrap()
            );
        }
    }

    #[test]
    fn wave_crest() {
        let v = [0.4, -0.2, 1.1];
        let ratio = eval_ic(&wave_ic(0.2), 0.25, v).unwrap() / eval_ic(&UNIT, 0.25, v).unwrap();
        assert!((ratio - 1.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(eval_ic(&wave_ic(0.5), 0.0, [0.0; 3]).is_err());
        let bad_temp = InitialCondition::SmoothWave {
            rho0: 1.0,
            u0: [0.0; 3],
            temp0: 0.0,
            delta: 0.1,
            k: 1.0,
        };
        assert!(eval_ic(&bad_temp, 0.0, [0.0; 3]).is_err());
        let bad_k = InitialCondition::SmoothWave {
            rho0: 1.0,
            u0: [0.0; 3],
            temp0: 1.0,
            delta: 0.1,
            k: 1.5,
        };
        assert!(matches!(
            eval_ic(&bad_k, 0.0, [0.0; 3]),
            Err(Error::ParamOutOfRange { name: "k", .. })
        ));
    }

    #[test]
    fn uniform_samples_ignore_x() {
        let (s, v) = make_grids(5, 3, 0.5).unwrap();
        let f = sample_ic(&UNIT, s, v).unwrap();
        for i in 1..5 {
            assert_eq!(f.cell(i), f.cell(0));
        }
    }

    #[test]
    fn sampled_unit_maxwellian_moments() {
        let (s, v) = make_grids(2, 16, 0.375).unwrap();
        let f = sample_ic(&UNIT, s, v).unwrap();
        let m = compute_moments(f.cell(0), &v, 0.0).unwrap();
        assert!((m.rho - 1.0).abs() < 1e-8);
        assert!(m.u.iter().all(|x| x.abs() < 1e-8));
        // T carries the box truncation of a v_max = 6 lattice (about 7e-8 low).
        assert!((m.temp - 1.0).abs() < 1e-7, "T = {}", m.temp);
    }

    #[test]
    fn centred_samples_are_mirror_symmetric() {
        let (s, v) = make_grids(4, 4, 0.5).unwrap();
        let f = sample_ic(&wave_ic(0.2), s, v).unwrap();
        for i in 0..4 {
            let c = f.cell(i);
            for k in 0..v.n_nodes() {
                assert_eq!(c[k], c[v.mirror(k)]);
            }
        }
    }

    #[test]
    fn anisotropic_axes_show_in_theta() {
        let (s, v) = make_grids(2, 16, 0.375).unwrap();
        let ic = InitialCondition::AnisotropicGaussian {
            rho: 1.0,
            u: [0.0; 3],
            temps: [0.6, 1.0, 1.4],
        };
        let f = sample_ic(&ic, s, v).unwrap();
        let m = compute_moments(f.cell(0), &v, 0.0).unwrap();
        let th = m.theta;
        assert!((th.a11 - 0.6).abs() < 1e-6);
        assert!((th.a22 - 1.0).abs() < 1e-6);
        assert!((th.a33 - 1.4).abs() < 1e-5);
        assert!(th.a12.abs() < 1e-12 && th.a13.abs() < 1e-12 && th.a23.abs() < 1e-12);
    }

    fn catalog() -> Vec<InitialCondition> {
        vec![
            UNIT,
            wave_ic(0.45),
            InitialCondition::SmoothWave {
                rho0: 2.0,
                u0: [0.3, -0.1, 0.0],
                temp0: 0.7,
                delta: 0.9,
                k: 3.0,
            },
            InitialCondition::AnisotropicGaussian {
                rho: 1.3,
                u: [0.1, 0.0, -0.2],
                temps: [0.5, 1.0, 2.0],
            },
            InitialCondition::TwoMaxwellianMix {
                rho0: 1.0,
                fraction: 0.3,
                u_a: [1.0, 0.0, 0.0],
                temp_a: 0.5,
                u_b: [-0.5, 0.0, 0.0],
                temp_b: 1.2,
                delta: 0.1,
                k: 2.0,
            },
        ]
    }

    proptest! {
        #[test]
        fn catalog_positive_and_periodic(
            x in 0.0f64..1.0,
            v in prop::array::uniform3(-6.0f64..6.0),
        ) {
            for ic in catalog() {
                let a = eval_ic(&ic, x, v).unwrap();
                let b = eval_ic(&ic, x + 1.0, v).unwrap();
                prop_assert!(a > 0.0);
                prop_assert!((a - b).abs() <= 1e-12 * a);
            }
        }
    }

    #[test]
    fn config_round_trip() {
        for ic in catalog() {
            let text = serde_json::to_string(&ic).unwrap();
            let back: InitialCondition = serde_json::from_str(&text).unwrap();
            assert_eq!(back, ic);
        }
        let text = r#"{"kind":"smooth_wave","rho0":1,"u0":[0,0,0],"temp0":1,"delta":0.2,"k":1}"#;
        let ic: InitialCondition = serde_json::from_str(text).unwrap();
        assert_eq!(ic, InitialCondition::default());
    }
}

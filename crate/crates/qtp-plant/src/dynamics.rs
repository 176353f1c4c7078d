use nalgebra::{Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::{ControlInput, Measurement, PlantError, PlantState, QtpParams};

/// Time derivative of the four tank levels, cm/s.
///
/// Torricelli outflow from each tank, the upper tanks draining into the
/// lower ones, and each pump's flow split between its lower and the
/// diagonally opposite upper tank. The square-root argument is clamped at
/// zero so an empty tank contributes no outflow.
pub fn qtp_derivative(
    state: &PlantState,
    input: &ControlInput,
    params: &QtpParams,
) -> Result<Vector4<f64>, PlantError> {
    state.validate()?;
    input.validate()?;

    let [aa1, aa2, aa3, aa4] = params.tank_area;
    let [a1, a2, a3, a4] = params.outlet_area;
    let [k1, k2] = params.pump_gain;
    let [g1, g2] = params.flow_split;
    let g = params.gravity;

    let out = |h: f64| (2.0 * g * h.max(0.0)).sqrt();
    let q1 = out(state.levels[0]);
    let q2 = out(state.levels[1]);
    let q3 = out(state.levels[2]);
    let q4 = out(state.levels[3]);
    let v1 = input.voltages[0];
    let v2 = input.voltages[1];

    Ok(Vector4::new(
        -(a1 / aa1) * q1 + (a3 / aa1) * q3 + (g1 * k1 / aa1) * v1,
        -(a2 / aa2) * q2 + (a4 / aa2) * q4 + (g2 * k2 / aa2) * v2,
        -(a3 / aa3) * q3 + ((1.0 - g2) * k2 / aa3) * v2,
        -(a4 / aa4) * q4 + ((1.0 - g1) * k1 / aa4) * v1,
    ))
}

/// Advance the plant by `dt` seconds under a zero-order-held input, using
/// fixed-step RK4 with `substeps` internal steps. Output levels are clamped
/// at zero after every substep.
pub fn step_nonlinear(
    state: &PlantState,
    input: &ControlInput,
    params: &QtpParams,
    dt: f64,
    substeps: u32,
) -> Result<PlantState, PlantError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PlantError::InvalidStep(format!("dt must be > 0, got {dt}")));
    }
    if substeps == 0 {
        return Err(PlantError::InvalidStep("substeps must be >= 1".into()));
    }
    state.validate()?;

    let h = dt / f64::from(substeps);
    let mut x = state.levels;
    for _ in 0..substeps {
        let s = PlantState { levels: x };
        let k1 = qtp_derivative(&s, input, params)?;
        let k2 = qtp_derivative(&PlantState::new(x + 0.5 * h * k1), input, params)?;
        let k3 = qtp_derivative(&PlantState::new(x + 0.5 * h * k2), input, params)?;
        let k4 = qtp_derivative(&PlantState::new(x + h * k3), input, params)?;
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x = x.map(|v| v.max(0.0));
    }
    Ok(PlantState { levels: x })
}

/// Seeded Gaussian sensor noise. Absent by default; the reference evaluation
/// is noise-free.
#[derive(Debug, Clone)]
pub struct SensorNoise {
    std: f64,
    rng: ChaCha20Rng,
}

impl SensorNoise {
    pub fn seeded(std: f64, seed: u64) -> Self {
        Self {
            std,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn sample(&mut self) -> Vector2<f64> {
        let n = Normal::new(0.0, self.std).expect("std validated at config load");
        Vector2::new(n.sample(&mut self.rng), n.sample(&mut self.rng))
    }
}

/// Read the two level sensors: y = kc * [h1, h2], plus optional zero-mean
/// Gaussian noise drawn from the supplied seeded generator.
pub fn measure(
    state: &PlantState,
    sensor_gain: f64,
    noise: Option<&mut SensorNoise>,
) -> Result<Measurement, PlantError> {
    state.validate()?;
    let mut y = Vector2::new(
        sensor_gain * state.levels[0],
        sensor_gain * state.levels[1],
    );
    if let Some(n) = noise {
        y += n.sample();
    }
    Ok(Measurement::new(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector4;
    use proptest::prelude::*;

    fn reference() -> QtpParams {
        QtpParams::minimum_phase_reference()
    }

    fn x_eq() -> PlantState {
        PlantState::new(Vector4::new(12.4, 12.7, 1.8, 1.4))
    }

    fn u_eq() -> ControlInput {
        ControlInput::new(Vector2::new(3.0, 3.0))
    }

    #[test]
    fn derivative_near_zero_at_operating_point() {
        // Residual of the rounded published operating point against the
        // reference parameter set; oracle value 7.119e-3 cm/s in tank 3.
        let d = qtp_derivative(&x_eq(), &u_eq(), &reference()).unwrap();
        assert!(d.amax() <= 0.05, "residual {} cm/s", d.amax());
        let oracle = [
            0.004927660787742788,
            0.0006179755585672964,
            -0.007119139975443639,
            0.00030107514678152925,
        ];
        for i in 0..4 {
            assert_abs_diff_eq!(d[i], oracle[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_zero_at_empty_tanks_zero_input() {
        let d = qtp_derivative(
            &PlantState::zero(),
            &ControlInput::new(Vector2::zeros()),
            &reference(),
        )
        .unwrap();
        assert_eq!(d, Vector4::zeros());
    }

    #[test]
    fn doubling_levels_scales_outflows_by_sqrt2() {
        let params = reference();
        let zero_u = ControlInput::new(Vector2::zeros());
        let h = PlantState::new(Vector4::new(3.0, 5.0, 2.0, 7.0));
        let h2 = PlantState::new(2.0 * h.levels);
        let d1 = qtp_derivative(&h, &zero_u, &params).unwrap();
        let d2 = qtp_derivative(&h2, &zero_u, &params).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(d2[i], 2.0f64.sqrt() * d1[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_rejects_non_finite_input() {
        let bad = ControlInput::new(Vector2::new(f64::NAN, 0.0));
        assert!(matches!(
            qtp_derivative(&x_eq(), &bad, &reference()),
            Err(PlantError::NonFinite(_))
        ));
    }

    #[test]
    fn step_stays_near_equilibrium() {
        let next = step_nonlinear(&x_eq(), &u_eq(), &reference(), 0.1, 10).unwrap();
        let drift = (next.levels - x_eq().levels).amax();
        assert!(drift <= 0.01, "drift {drift} cm over one Ts");
    }

    #[test]
    fn two_half_steps_match_one_full_step() {
        let params = reference();
        let s0 = PlantState::new(Vector4::new(12.0, 12.0, 2.0, 2.0));
        let u = ControlInput::new(Vector2::new(3.5, 2.5));
        let full = step_nonlinear(&s0, &u, &params, 0.1, 1).unwrap();
        let half = step_nonlinear(&s0, &u, &params, 0.05, 1).unwrap();
        let half2 = step_nonlinear(&half, &u, &params, 0.05, 1).unwrap();
        for i in 0..4 {
            let rel = (full.levels[i] - half2.levels[i]).abs() / full.levels[i].abs().max(1.0);
            assert!(rel <= 1e-9, "component {i}: rel err {rel}");
        }
    }

    #[test]
    fn zero_state_zero_input_is_fixed_point() {
        let s = step_nonlinear(
            &PlantState::zero(),
            &ControlInput::new(Vector2::zeros()),
            &reference(),
            0.1,
            10,
        )
        .unwrap();
        assert_eq!(s.levels, Vector4::zeros());
    }

    #[test]
    fn step_rejects_bad_dt() {
        assert!(step_nonlinear(&x_eq(), &u_eq(), &reference(), 0.0, 10).is_err());
        assert!(step_nonlinear(&x_eq(), &u_eq(), &reference(), 0.1, 0).is_err());
    }

    #[test]
    fn measurement_at_operating_point() {
        let y = measure(&x_eq(), 0.5, None).unwrap();
        assert_eq!(y.volts, Vector2::new(6.2, 6.35));
    }

    #[test]
    fn measurement_of_empty_tanks_is_zero() {
        let y = measure(&PlantState::zero(), 0.5, None).unwrap();
        assert_eq!(y.volts, Vector2::zeros());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let mut n1 = SensorNoise::seeded(0.05, 42);
        let mut n2 = SensorNoise::seeded(0.05, 42);
        let y1 = measure(&x_eq(), 0.5, Some(&mut n1)).unwrap();
        let y2 = measure(&x_eq(), 0.5, Some(&mut n2)).unwrap();
        assert_eq!(y1.volts, y2.volts);
        assert_ne!(y1.volts, Vector2::new(6.2, 6.35));
    }

    proptest! {
        #[test]
        fn levels_never_go_negative(
            h in proptest::array::uniform4(0.0..30.0f64),
            v in proptest::array::uniform2(-5.0..5.0f64),
            substeps in 1u32..20,
        ) {
            let s = PlantState::new(Vector4::from_column_slice(&h));
            let u = ControlInput::new(Vector2::from_column_slice(&v));
            let next = step_nonlinear(&s, &u, &reference(), 0.1, substeps).unwrap();
            prop_assert!(next.levels.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn step_is_deterministic(
            h in proptest::array::uniform4(0.0..30.0f64),
            v in proptest::array::uniform2(0.0..5.0f64),
        ) {
            let s = PlantState::new(Vector4::from_column_slice(&h));
            let u = ControlInput::new(Vector2::from_column_slice(&v));
            let a = step_nonlinear(&s, &u, &reference(), 0.1, 10).unwrap();
            let b = step_nonlinear(&s, &u, &reference(), 0.1, 10).unwrap();
            prop_assert_eq!(a.levels, b.levels);
        }
    }
}

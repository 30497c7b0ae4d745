use nalgebra::DVector;

use super::mpc::MpcSolution;
use super::qp::QpStatus;

/// `cm = u_ext − u_pilot_prev` per axis; zero on uncontrolled axes.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMargin {
    pub cm: DVector<f64>,
    pub u_ext: DVector<f64>,
    pub u_pilot_prev: DVector<f64>,
    /// False when the solve was infeasible; `u_ext` then sits on the
    /// load-decreasing bound.
    pub valid: bool,
}

pub fn control_margin(sol: &MpcSolution, u_pilot_prev: &DVector<f64>) -> ControlMargin {
    ControlMargin {
        cm: &sol.u_ext - u_pilot_prev,
        u_ext: sol.u_ext.clone(),
        u_pilot_prev: u_pilot_prev.clone(),
        valid: sol.status != QpStatus::Infeasible,
    }
}

/// Limits each controlled axis at `u_ext` in the load-increasing direction.
pub fn clamp_command(u_cmd: &DVector<f64>, sol: &MpcSolution) -> DVector<f64> {
    let mut u = u_cmd.clone();
    for &a in &sol.controlled {
        u[a] = if sol.direction[a] > 0.0 {
            u[a].min(sol.u_ext[a])
        } else {
            u[a].max(sol.u_ext[a])
        };
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol(u_ext: f64, dir: f64) -> MpcSolution {
        MpcSolution {
            u_traj: vec![DVector::from_vec(vec![u_ext, 50.0])],
            x_traj: vec![],
            y_pred: vec![],
            u_ext: DVector::from_vec(vec![u_ext, 50.0]),
            direction: DVector::from_vec(vec![dir, 0.0]),
            controlled: vec![0],
            kkt_residual: 0.0,
            status: QpStatus::Optimal,
            iterations: 1,
        }
    }

    #[test]
    fn margin_examples() {
        let prev = DVector::from_vec(vec![30.0, 50.0]);
        assert_eq!(control_margin(&sol(35.0, 1.0), &prev).cm[0], 5.0);
        assert_eq!(control_margin(&sol(30.0, 1.0), &prev).cm[0], 0.0);
        assert_eq!(control_margin(&sol(25.0, 1.0), &prev).cm[0], -5.0);
        assert_eq!(control_margin(&sol(25.0, 1.0), &prev).cm[1], 0.0);
    }

    #[test]
    fn clamp_respects_direction() {
        let below = DVector::from_vec(vec![40.0, 70.0]);
        assert_eq!(clamp_command(&below, &sol(60.0, 1.0)), below);
        let beyond = DVector::from_vec(vec![80.0, 70.0]);
        assert_eq!(clamp_command(&beyond, &sol(60.0, 1.0))[0], 60.0);
        assert_eq!(clamp_command(&beyond, &sol(60.0, 1.0))[1], 70.0);
        assert_eq!(clamp_command(&below, &sol(60.0, -1.0))[0], 60.0);
        assert_eq!(clamp_command(&beyond, &sol(60.0, -1.0))[0], 80.0);
    }
}

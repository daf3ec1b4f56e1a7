//! Execution schemes assembling predictor and force-estimator calls into a
//! full trajectory reconstruction: the plain estimator chain, hierarchical
//! prediction, staggered execution (advance as soon as the next prediction
//! exists), recursive prediction refinement, and multi-shape composition.

use super::env::ControlEnv;
use super::trace::SchemeTrace;
use crate::error::{Error, Result};
use crate::fields::CenteredField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Chain,
    Staggered,
    Refined,
}

/// A reconstructed trajectory: states at every frame, forces per step, the
/// final prediction per intermediate frame, and the invocation trace.
pub struct Trajectory<S, O, F> {
    pub states: Vec<S>,
    pub forces: Vec<F>,
    pub predictions: Vec<Option<O>>,
    pub trace: SchemeTrace,
}

/// Trajectory type produced by running schemes against an environment.
pub type EnvTrajectory<E> =
    Trajectory<<E as ControlEnv>::State, <E as ControlEnv>::Obs, <E as ControlEnv>::Force>;

fn require_pow2(n: usize) -> Result<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

struct Runner<'e, E: ControlEnv> {
    env: &'e mut E,
    n: usize,
    states: Vec<E::State>,
    forces: Vec<E::Force>,
    predictions: Vec<Option<E::Obs>>,
    trace: SchemeTrace,
}

impl<'e, E: ControlEnv> Runner<'e, E> {
    fn new(env: &'e mut E, initial: E::State, n: usize) -> Self {
        Self {
            env,
            n,
            states: vec![initial],
            forces: Vec::new(),
            predictions: vec![None; n.saturating_sub(1)],
            trace: SchemeTrace::new(),
        }
    }

    fn current(&self) -> &E::State {
        self.states.last().unwrap()
    }

    fn time(&self) -> usize {
        self.states.len() - 1
    }

    fn predict(&mut self, scale: usize, mid: usize, left: &E::Obs, right: &E::Obs) -> Result<E::Obs> {
        self.trace.push_op(scale, mid);
        let pred = self.env.predict_midpoint(scale, mid, left, right)?;
        if mid >= 1 && mid <= self.n - 1 {
            self.predictions[mid - 1] = Some(pred.clone());
        }
        Ok(pred)
    }

    /// One estimator + solver advance toward `target`.
    fn advance(&mut self, target: &E::Obs) -> Result<()> {
        let t = self.time();
        let state = self.current().clone();
        self.trace.push_cfe(t);
        let force = if t == self.n - 1 {
            self.env.terminal_force(t, &state, target)?
        } else {
            let obs = self.env.observe(&state)?;
            self.env.estimate_force(t, &obs, target)?
        };
        self.trace.push_solver(t);
        let next = self.env.step(t, &state, &force)?;
        self.states.push(next);
        self.forces.push(force);
        Ok(())
    }

    fn finish(self) -> EnvTrajectory<E> {
        Trajectory {
            states: self.states,
            forces: self.forces,
            predictions: self.predictions,
            trace: self.trace,
        }
    }
}

/// Estimator chain: every force is inferred from the current observation and
/// the final target, with no intermediate predictions.
pub fn cfe_chain<E: ControlEnv>(
    env: &mut E,
    initial: E::State,
    target: &E::Obs,
    n: usize,
) -> Result<EnvTrajectory<E>> {
    if n == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let mut run = Runner::new(env, initial, n);
    for _ in 0..n {
        run.advance(target)?;
    }
    Ok(run.finish())
}

/// Recursive bisection filling a prediction for every intermediate frame
/// from the outside in. Returns predictions for frames 1..n-1 and the trace.
pub fn hierarchical_predict<E: ControlEnv>(
    env: &mut E,
    o_initial: &E::Obs,
    target: &E::Obs,
    n: usize,
) -> Result<(Vec<Option<E::Obs>>, SchemeTrace)> {
    require_pow2(n)?;
    let mut predictions = vec![None; n - 1];
    let mut trace = SchemeTrace::new();
    fn fill<E: ControlEnv>(
        env: &mut E,
        lo: usize,
        hi: usize,
        lo_obs: &E::Obs,
        hi_obs: &E::Obs,
        predictions: &mut [Option<E::Obs>],
        trace: &mut SchemeTrace,
    ) -> Result<()> {
        if hi - lo < 2 {
            return Ok(());
        }
        let mid = (lo + hi) / 2;
        trace.push_op(hi - lo, mid);
        let pred = env.predict_midpoint(hi - lo, mid, lo_obs, hi_obs)?;
        fill(env, lo, mid, lo_obs, &pred, predictions, trace)?;
        fill(env, mid, hi, &pred, hi_obs, predictions, trace)?;
        predictions[mid - 1] = Some(pred);
        Ok(())
    }
    fill(env, 0, n, o_initial, target, &mut predictions, &mut trace)?;
    Ok((predictions, trace))
}

/// Follow precomputed predictions step by step (the simple two-stage
/// scheme: plan first, then march the estimator along the plan).
pub fn follow_predictions<E: ControlEnv>(
    env: &mut E,
    initial: E::State,
    predictions: &[Option<E::Obs>],
    target: &E::Obs,
    n: usize,
) -> Result<EnvTrajectory<E>> {
    if predictions.len() != n - 1 {
        return Err(Error::Config(format!(
            "need {} predictions, got {}",
            n - 1,
            predictions.len()
        )));
    }
    let mut run = Runner::new(env, initial, n);
    for i in 0..n {
        let tgt = if i == n - 1 {
            target.clone()
        } else {
            predictions[i]
                .clone()
                .ok_or_else(|| Error::Config(format!("missing prediction for frame {}", i + 1)))?
        };
        run.advance(&tgt)?;
    }
    let mut traj = run.finish();
    traj.predictions = predictions.to_vec();
    Ok(traj)
}

/// Staggered execution: the simulation advances as soon as a prediction for
/// the next frame exists, and every predictor call conditions on the
/// reconstructed observation at its left endpoint.
pub fn staggered_execute<E: ControlEnv>(
    env: &mut E,
    initial: E::State,
    target: &E::Obs,
    n: usize,
) -> Result<EnvTrajectory<E>> {
    require_pow2(n)?;
    let mut run = Runner::new(env, initial, n);

    fn segment<E: ControlEnv>(run: &mut Runner<E>, hi: usize, hi_obs: &E::Obs) -> Result<()> {
        let lo = run.time();
        if hi - lo == 1 {
            return run.advance(hi_obs);
        }
        let mid = (lo + hi) / 2;
        let lo_obs = {
            let state = run.current().clone();
            run.env.observe(&state)?
        };
        let pred = run.predict(hi - lo, mid, &lo_obs, hi_obs)?;
        segment(run, mid, &pred)?;
        segment(run, hi, hi_obs)
    }

    segment(&mut run, n, target)?;
    Ok(run.finish())
}

/// Prediction refinement: the recursive scheme that re-predicts a frame
/// every time the reconstruction halves its distance to it, so each final
/// prediction is conditioned on the reconstruction of the previous state.
pub fn refine_execute<E: ControlEnv>(
    env: &mut E,
    initial: E::State,
    target: &E::Obs,
    n: usize,
) -> Result<EnvTrajectory<E>> {
    require_pow2(n)?;
    if n < 2 {
        return Err(Error::Config("refinement needs at least two steps".into()));
    }
    let mut run = Runner::new(env, initial, n);

    /// Reconstruct `span` steps from the current state toward `o_end`
    /// (the observation expected at `start + span`), optionally refining
    /// against `o_after` at `start + 2*span`.
    fn reconstruct<E: ControlEnv>(
        run: &mut Runner<E>,
        span: usize,
        o_end: &E::Obs,
        o_after: Option<&E::Obs>,
    ) -> Result<()> {
        if span == 1 {
            return run.advance(o_end);
        }
        let start = run.time();
        let lo_obs = {
            let state = run.current().clone();
            run.env.observe(&state)?
        };
        let o_half = run.predict(span, start + span / 2, &lo_obs, o_end)?;
        reconstruct(run, span / 2, &o_half, Some(o_end))?;

        let (o_end_refined, o_three_half) = if let Some(after) = o_after {
            let o_three_half = run.predict(span, start + 3 * span / 2, o_end, after)?;
            let mid_obs = {
                let state = run.current().clone();
                run.env.observe(&state)?
            };
            let refined = run.predict(span, start + span, &mid_obs, &o_three_half)?;
            (refined, Some(o_three_half))
        } else {
            (o_end.clone(), None)
        };
        reconstruct(run, span / 2, &o_end_refined, o_three_half.as_ref())
    }

    reconstruct(&mut run, n, target, None)?;
    Ok(run.finish())
}

/// Joint reconstruction of several transitions sharing one force: per step
/// the per-shape predictions are summed, one force is estimated on the sum,
/// and every shape advances with that same force.
pub struct MultiTrajectory<S, O, F> {
    pub states: Vec<Vec<S>>,
    pub forces: Vec<F>,
    pub summed_predictions: Vec<O>,
}

pub fn compose_multishape<E>(
    env: &mut E,
    initials: Vec<E::State>,
    predictions: &[Vec<Option<E::Obs>>],
    targets: &[E::Obs],
    n: usize,
) -> Result<MultiTrajectory<E::State, E::Obs, E::Force>>
where
    E: ControlEnv<Obs = CenteredField>,
{
    let m = initials.len();
    if m == 0 || predictions.len() != m || targets.len() != m {
        return Err(Error::ShapeMismatch(
            "need one prediction list and target per shape".into(),
        ));
    }
    for p in predictions {
        if p.len() != n - 1 {
            return Err(Error::ShapeMismatch(format!(
                "need {} predictions per shape, got {}",
                n - 1,
                p.len()
            )));
        }
    }
    let mut states: Vec<Vec<E::State>> = initials.into_iter().map(|s| vec![s]).collect();
    let mut forces = Vec::new();
    let mut summed_predictions = Vec::new();
    for i in 0..n {
        // Sum of the targeted next observations over shapes.
        let mut target_sum: Option<CenteredField> = None;
        for k in 0..m {
            let t = if i == n - 1 {
                targets[k].clone()
            } else {
                predictions[k][i]
                    .clone()
                    .ok_or_else(|| Error::Config(format!("missing prediction {i} for shape {k}")))?
            };
            target_sum = Some(match target_sum {
                None => t,
                Some(acc) => acc.zip(&t, |a, b| a + b),
            });
        }
        let target_sum = target_sum.unwrap();
        // Sum of the current observations.
        let mut obs_sum: Option<CenteredField> = None;
        for k in 0..m {
            let last = states[k].last().unwrap().clone();
            let o = env.observe(&last)?;
            obs_sum = Some(match obs_sum {
                None => o,
                Some(acc) => acc.zip(&o, |a, b| a + b),
            });
        }
        let force = env.estimate_force(i, &obs_sum.unwrap(), &target_sum)?;
        for k in 0..m {
            let last = states[k].last().unwrap().clone();
            let next = env.step(i, &last, &force)?;
            states[k].push(next);
        }
        forces.push(force);
        summed_predictions.push(target_sum);
    }
    Ok(MultiTrajectory {
        states,
        forces,
        summed_predictions,
    })
}

/// Closed-form invocation counts per scheme for a length-`n` reconstruction.
pub fn count_ops(n: usize, scheme: Scheme) -> Result<(usize, usize, usize)> {
    require_pow2(n)?;
    let log2 = n.trailing_zeros() as usize;
    Ok(match scheme {
        Scheme::Chain => (0, n, n),
        Scheme::Staggered => (n - 1, n, n),
        Scheme::Refined => (3 * n - 2 * log2 - 3, n, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::env::StubEnv;
    use crate::control::trace::TraceEvent;

    #[test]
    fn chain_counts_and_order() {
        let mut env = StubEnv;
        let traj = cfe_chain(&mut env, (), &(), 6).unwrap();
        assert_eq!(traj.trace.counts(), (0, 6, 6));
        traj.trace.validate().unwrap();
        assert_eq!(traj.states.len(), 7);
        assert_eq!(traj.forces.len(), 6);
    }

    #[test]
    fn hierarchical_prediction_counts_and_scales() {
        let mut env = StubEnv;
        let (preds, trace) = hierarchical_predict(&mut env, &(), &(), 8).unwrap();
        assert_eq!(trace.counts().0, 7);
        assert!(preds.iter().all(|p| p.is_some()));
        let scales = trace.op_scale_counts();
        assert_eq!(scales[&8], 1);
        assert_eq!(scales[&4], 2);
        assert_eq!(scales[&2], 4);

        let (_, trace) = hierarchical_predict(&mut env, &(), &(), 32).unwrap();
        assert_eq!(trace.counts().0, 31);

        let (_, trace) = hierarchical_predict(&mut env, &(), &(), 2).unwrap();
        assert_eq!(trace.counts().0, 1);
    }

    #[test]
    fn staggered_counts_and_structure() {
        let mut env = StubEnv;
        for n in [2usize, 4, 8, 16, 32] {
            let traj = staggered_execute(&mut env, (), &(), n).unwrap();
            let want = count_ops(n, Scheme::Staggered).unwrap();
            assert_eq!(traj.trace.counts(), want, "n={n}");
            traj.trace.validate().unwrap();
        }
        // Smallest case: the single prediction comes before the first
        // estimator call.
        let traj = staggered_execute(&mut env, (), &(), 2).unwrap();
        let ev = traj.trace.events();
        assert!(matches!(ev[0], TraceEvent::Op { scale: 2, time: 1 }));
        assert!(matches!(ev[1], TraceEvent::Cfe { time: 0 }));
    }

    #[test]
    fn staggered_left_inputs_follow_the_solver() {
        // Every predictor call whose left endpoint is frame i must come
        // after the solver produced frame i.
        let mut env = StubEnv;
        let traj = staggered_execute(&mut env, (), &(), 16).unwrap();
        let events = traj.trace.events();
        for (at, e) in events.iter().enumerate() {
            if let TraceEvent::Op { scale, time } = e {
                let left = time - scale / 2;
                if left > 0 {
                    let last = traj.trace.last_solver_before(at);
                    assert!(
                        last.map(|t| t + 1 >= left).unwrap_or(false),
                        "predictor for frame {time} ran before frame {left} existed"
                    );
                }
            }
        }
    }

    #[test]
    fn refinement_counts_match_closed_form() {
        let mut env = StubEnv;
        for (n, want) in [(2usize, 1usize), (4, 5), (8, 15), (16, 37), (32, 83)] {
            let traj = refine_execute(&mut env, (), &(), n).unwrap();
            let (op, cfe, sol) = traj.trace.counts();
            assert_eq!(op, want, "n={n}");
            assert_eq!((cfe, sol), (n, n));
            traj.trace.validate().unwrap();
            assert_eq!(count_ops(n, Scheme::Refined).unwrap(), (want, n, n));
        }
    }

    #[test]
    fn refinement_repredicts_each_frame_after_previous_solve() {
        // The final prediction for frame i is conditioned on the
        // reconstruction of frame i-1, so it must appear after the solver
        // event that produced frame i-1 (solver event i-2, zero-based).
        let mut env = StubEnv;
        let traj = refine_execute(&mut env, (), &(), 16).unwrap();
        let events = traj.trace.events();
        for frame in 2..16 {
            let last_op = events
                .iter()
                .rposition(|e| matches!(e, TraceEvent::Op { time, .. } if *time == frame))
                .expect("every interior frame is predicted");
            let prev_solved = traj.trace.last_solver_before(last_op);
            assert!(
                prev_solved.map(|t| t + 2 >= frame).unwrap_or(false),
                "frame {frame}: last prediction at event {last_op} ran before frame {} existed (solver state {prev_solved:?})",
                frame - 1
            );
        }
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        let mut env = StubEnv;
        assert!(matches!(
            staggered_execute(&mut env, (), &(), 6),
            Err(Error::NotPowerOfTwo(6))
        ));
        assert!(refine_execute(&mut env, (), &(), 12).is_err());
        assert!(count_ops(10, Scheme::Chain).is_err());
    }

    #[test]
    fn counting_table() {
        assert_eq!(count_ops(8, Scheme::Staggered).unwrap(), (7, 8, 8));
        assert_eq!(count_ops(8, Scheme::Refined).unwrap(), (15, 8, 8));
        assert_eq!(count_ops(8, Scheme::Chain).unwrap(), (0, 8, 8));
        assert_eq!(count_ops(2, Scheme::Refined).unwrap(), (1, 2, 2));
    }
}

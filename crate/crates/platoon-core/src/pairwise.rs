//! Fuel-optimal pairwise plans: a coordination follower (CF) adapts its
//! speed in three phases (catch-up, platoon, final leg) to platoon with a
//! coordination leader (CL) that keeps its constant default speed.

use thiserror::Error;

use crate::road_network::{shared_subpath, PathOverlap, PathPosition};
use crate::trucking::{
    DriveRole, FuelParams, ProfilePhase, SpeedBand, SpeedProfile, TransportAssignment, TruckId,
};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("platooning cannot save fuel at reference speed {v0}")]
    NoFuelAdvantage { v0: f64 },
    #[error("rendezvous speed {v_s} relative to {v0} is incompatible with virtual gap {delta_d}")]
    SignMismatch { v_s: f64, v0: f64, delta_d: f64 },
}

/// The fuel-optimal constant rendezvous speed for closing a signed virtual
/// gap `delta_d` against a reference speed `v0`, clamped to the band.
///
/// The unconstrained optimum is `v0 * (1 ± sqrt(1 - fp1/f1 +
/// (f0 - fp0)/(f1 * v0)))`, speeding up for `delta_d > 0` and slowing down
/// for `delta_d < 0`; a zero gap needs no adjustment. A non-positive
/// radicand means a follower burns at least as much as a solo truck at
/// `v0`, so there is nothing to gain.
pub fn optimal_rendezvous_speed(
    v0: f64,
    delta_d: f64,
    params: &FuelParams,
    band: SpeedBand,
) -> Result<f64, PlanError> {
    debug_assert!(band.contains(v0), "reference speed must lie in the band");
    let radicand = 1.0 - params.fp1 / params.f1 + params.delta_base() / (params.f1 * v0);
    if radicand <= 0.0 {
        return Err(PlanError::NoFuelAdvantage { v0 });
    }
    let root = radicand.sqrt();
    Ok(if delta_d > 0.0 {
        (v0 * (1.0 + root)).min(band.max)
    } else if delta_d < 0.0 {
        (v0 * (1.0 - root)).max(band.min)
    } else {
        v0
    })
}

/// Distance a truck travels at constant `v_s` until it has closed the
/// virtual gap `delta_d` on a reference moving at `v0`:
/// `d_s = v_s / (v_s - v0) * delta_d`. Requires the speed difference to
/// point in the gap's direction.
pub fn catchup_distance(v_s: f64, v0: f64, delta_d: f64) -> Result<f64, PlanError> {
    if delta_d == 0.0 || (v_s - v0).signum() != delta_d.signum() {
        return Err(PlanError::SignMismatch { v_s, v0, delta_d });
    }
    Ok(v_s / (v_s - v0) * delta_d)
}

/// The speed-dependent part of the catch-up fuel cost:
/// `(f1*v_s - fp1*v0 + (f0 - fp0)) * v_s / (v_s - v0) * delta_d`.
/// The term that does not depend on `v_s` cancels and is omitted, so this
/// is useful only for comparing rendezvous speeds against each other.
pub fn residual_fuel(
    v_s: f64,
    v0: f64,
    delta_d: f64,
    params: &FuelParams,
) -> Result<f64, PlanError> {
    if delta_d == 0.0 || (v_s - v0).signum() != delta_d.signum() {
        return Err(PlanError::SignMismatch { v_s, v0, delta_d });
    }
    Ok((params.f1 * v_s - params.fp1 * v0 + params.delta_base()) * v_s / (v_s - v0) * delta_d)
}

/// Signed virtual position differences of the follower relative to the
/// leader at the start and end of the follower's trip, measured along a
/// common coordinate moving at the leader's speed `v0`.
///
/// A positive start gap means the follower must speed up to reach the merge
/// point in time; a positive end gap means it must speed up after the split
/// to make its arrival time.
pub fn virtual_gaps(
    leader: &TransportAssignment,
    follower: &TransportAssignment,
    overlap: &PathOverlap,
    v0: f64,
) -> (f64, f64) {
    // Distances to/from the endpoints of the shared subpath.
    let follower_to_merge = follower
        .path
        .distance(follower.path.start_position(), overlap.start[1])
        .expect("overlap start lies on the follower path");
    let leader_to_merge = leader
        .path
        .distance(leader.path.start_position(), overlap.start[0])
        .expect("overlap start lies on the leader path");
    let split_to_dest = follower
        .path
        .distance(overlap.end[1], follower.path.end_position())
        .expect("overlap end lies on the follower path");
    let leader_to_split = leader
        .path
        .distance(leader.path.start_position(), overlap.end[0])
        .expect("overlap end lies on the leader path");
    let leader_split_time = leader.start_time + leader_to_split / v0;

    let delta_d_start =
        follower_to_merge - leader_to_merge + v0 * (follower.start_time - leader.start_time);
    let delta_d_end = split_to_dest - v0 * (follower.arrival_time - leader_split_time);
    (delta_d_start, delta_d_end)
}

/// A fuel-optimal three-phase plan for one follower/leader pair.
#[derive(Debug, Clone)]
pub struct PairwisePlan {
    pub leader_id: TruckId,
    pub follower_id: TruckId,
    /// Constant speed during the catch-up phase.
    pub v_merge: f64,
    /// Constant speed during the final leg after the split.
    pub v_split: f64,
    /// The leader's constant speed, held during the platoon phase.
    pub v_platoon: f64,
    pub t_merge: f64,
    pub t_split: f64,
    /// Where the follower joins and leaves the platoon, on its own path.
    pub merge_pos: PathPosition,
    pub split_pos: PathPosition,
    /// Distance covered before the merge / after the split.
    pub d_merge: f64,
    pub d_tail: f64,
    pub delta_d_start: f64,
    pub delta_d_end: f64,
    /// Total fuel of the follower on the adapted profile.
    pub fuel_adapted: f64,
}

impl PairwisePlan {
    /// Materializes the plan as the follower's three-phase speed profile.
    /// Zero-length end phases are dropped.
    pub fn to_profile(&self, follower: &TransportAssignment) -> SpeedProfile {
        let mut phases = Vec::with_capacity(3);
        if self.t_merge > follower.start_time {
            phases.push(ProfilePhase {
                start: follower.start_time,
                end: self.t_merge,
                speed: self.v_merge,
                role: DriveRole::Solo,
            });
        }
        phases.push(ProfilePhase {
            start: self.t_merge,
            end: self.t_split,
            speed: self.v_platoon,
            role: DriveRole::Follower(self.leader_id),
        });
        if follower.arrival_time > self.t_split {
            phases.push(ProfilePhase {
                start: self.t_split,
                end: follower.arrival_time,
                speed: self.v_split,
                role: DriveRole::Solo,
            });
        }
        SpeedProfile::new(phases).expect("plan phases are contiguous and positive")
    }
}

/// One leg of the plan: catch-up toward the merge point or final leg after
/// the split. `anchor_dist` is the distance at which the leg must be clamped
/// (to the start/end of the shared subpath) and `clamp_time` the leader's
/// passage time there.
struct Leg {
    speed: f64,
    distance: f64,
    time: f64,
}

fn solve_leg(
    delta_d: f64,
    v0: f64,
    anchor_dist: f64,
    leg_start_time: f64,
    leg_duration_to_clamp: f64,
    params: &FuelParams,
    band: SpeedBand,
) -> Option<Leg> {
    // With a zero gap the truck keeps v0 and merges exactly at the anchor.
    if delta_d == 0.0 {
        return Some(Leg {
            speed: v0,
            distance: anchor_dist,
            time: leg_start_time + anchor_dist / v0,
        });
    }
    let v = optimal_rendezvous_speed(v0, delta_d, params, band).ok()?;
    if v == v0 {
        // Clamped onto the reference speed: the gap can never be closed.
        return None;
    }
    let d = catchup_distance(v, v0, delta_d).expect("signs agree by construction");
    if d >= anchor_dist {
        return Some(Leg {
            speed: v,
            distance: d,
            time: leg_start_time + d / v,
        });
    }
    // The free rendezvous point lies outside the shared subpath; clamp the
    // leg to the anchor and meet the leader's schedule there.
    if leg_duration_to_clamp <= 0.0 {
        return if anchor_dist == 0.0 {
            Some(Leg {
                speed: v0,
                distance: 0.0,
                time: leg_start_time,
            })
        } else {
            None
        };
    }
    let clamped = anchor_dist / leg_duration_to_clamp;
    if !band.contains(clamped) {
        return None;
    }
    Some(Leg {
        speed: clamped,
        distance: anchor_dist,
        time: leg_start_time + leg_duration_to_clamp,
    })
}

/// Computes the fuel-optimal adapted plan for `follower` platooning with
/// `leader`, where the leader keeps its constant default speed. Returns
/// `None` whenever no feasible, fuel-saving plan exists: disjoint paths, no
/// fuel advantage, clamped speeds outside the band, merge not strictly
/// before split, or adapted fuel not below the follower's default fuel.
pub fn adapted_plan(
    leader: &TransportAssignment,
    follower: &TransportAssignment,
    params: &FuelParams,
    band: SpeedBand,
) -> Option<PairwisePlan> {
    let overlap = shared_subpath(&leader.path, &follower.path)
        .expect("shortest paths must share a contiguous subpath")?;
    let v0 = leader.default_speed();
    let (delta_d_start, delta_d_end) = virtual_gaps(leader, follower, &overlap, v0);

    let total = follower.path.total_length();
    let to_merge_anchor = follower
        .path
        .distance(follower.path.start_position(), overlap.start[1])
        .expect("ordered");
    let split_anchor_to_dest = follower
        .path
        .distance(overlap.end[1], follower.path.end_position())
        .expect("ordered");
    let leader_to_merge = leader
        .path
        .distance(leader.path.start_position(), overlap.start[0])
        .expect("ordered");
    let leader_to_split = leader
        .path
        .distance(leader.path.start_position(), overlap.end[0])
        .expect("ordered");
    let leader_merge_time = leader.start_time + leader_to_merge / v0;
    let leader_split_time = leader.start_time + leader_to_split / v0;

    let head = solve_leg(
        delta_d_start,
        v0,
        to_merge_anchor,
        follower.start_time,
        leader_merge_time - follower.start_time,
        params,
        band,
    )?;
    // The final leg runs backwards in time from the arrival; its clamp
    // anchor is the split end of the shared subpath.
    let tail = solve_leg(
        delta_d_end,
        v0,
        split_anchor_to_dest,
        follower.arrival_time,
        follower.arrival_time - leader_split_time,
        params,
        band,
    )?;
    let (d_merge, v_merge) = (head.distance, head.speed);
    let (d_tail, v_split) = (tail.distance, tail.speed);
    let t_merge = head.time;
    // tail.time was computed forward from the arrival; mirror it.
    let t_split = follower.arrival_time - (tail.time - follower.arrival_time);

    // Feasibility: the merge must lie strictly before the split.
    if !(d_merge + d_tail < total) {
        return None;
    }
    debug_assert!(t_merge < t_split);
    debug_assert!(d_merge >= to_merge_anchor && d_tail >= split_anchor_to_dest);

    let fuel_adapted = d_merge * params.solo_rate(v_merge)
        + d_tail * params.solo_rate(v_split)
        + (total - d_merge - d_tail) * params.platoon_rate(v0);
    if !(fuel_adapted < follower.default_fuel(params)) {
        return None;
    }

    let plan = PairwisePlan {
        leader_id: leader.id,
        follower_id: follower.id,
        v_merge,
        v_split,
        v_platoon: v0,
        t_merge,
        t_split,
        merge_pos: follower.path.position_at(d_merge),
        split_pos: follower.path.position_at(total - d_tail),
        d_merge,
        d_tail,
        delta_d_start,
        delta_d_end,
        fuel_adapted,
    };
    debug_assert!(
        (plan.d_merge - (plan.t_merge - follower.start_time) * v0 - plan.delta_d_start).abs()
            < 1e-6 * total.max(1.0),
        "virtual start gap must be reproduced by the emitted plan"
    );
    debug_assert!(
        (plan.d_tail - (follower.arrival_time - plan.t_split) * v0 - plan.delta_d_end).abs()
            < 1e-6 * total.max(1.0),
        "virtual end gap must be reproduced by the emitted plan"
    );
    Some(plan)
}
